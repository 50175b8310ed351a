"""Run configuration: ``key = value`` files, ``--set`` overrides and fingerprints."""
from __future__ import annotations

import dataclasses
import hashlib
import os
from dataclasses import dataclass, field, fields
from pathlib import Path

from .backbone import BackboneConfig
from .errors import ConfigError
from .injector import PRESETS, InjectorConfig


def _budget(value):
    if value in ("", "all", "none", None):
        return None
    n = int(value)
    if n < 0:
        raise ConfigError(f"triple_budget must be >= 0, got {n}")
    return n


def _bool(value):
    v = str(value).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {value!r}")


def _int_list(value):
    return [int(v) for v in str(value).replace(",", " ").split()]


def _str_list(value):
    return [v.strip() for v in str(value).split(",") if v.strip()]


INPUT_KEYS = ("train", "dev", "test", "pretrain_corpus", "kg", "freq_file")
OUTPUT_KEYS = ("run_dir", "synth_dir")

# Keys that determine stages 1 and 2. A stage-2 checkpoint is reusable by
# stage 3 exactly when these agree.
BASE_KEYS = (
    "seed", "train", "dev", "labels", "pretrain_corpus", "d_model", "backbone_layers",
    "backbone_heads", "backbone_d_ff", "dropout", "lr_pretrain", "lr_finetune", "beta1",
    "beta2", "adam_eps", "batch_size", "pretrain_steps", "finetune_steps", "eval_every",
    "mask_rate", "max_seq_len",
)


@dataclass
class RunConfig:
    """All recognised keys. Paths are relative to the config file's directory."""

    seed: int = 0
    run_dir: str = "run"
    # data
    train: str = ""
    dev: str = ""
    test: str = ""
    labels: list = field(default_factory=list)
    pretrain_corpus: str = ""
    # knowledge
    kg: str = ""
    freq_file: str = ""
    triple_budget: object = None
    max_ngram: int = 4
    per_subject_cap: int = 1
    per_sentence_cap: int = 8
    max_seq_len: int = 128
    # architecture
    d_model: int = 128
    injector_preset: str = "base"
    injector_layers: int = 0
    injector_heads: int = 0
    injector_d_ff: int = 0
    backbone_layers: int = 2
    backbone_heads: int = 2
    backbone_d_ff: int = 0
    dropout: float = 0.1
    # optimisation
    lr_pretrain: float = 3e-4
    lr_finetune: float = 1e-4
    lr_inject: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    batch_size: int = 16
    pretrain_steps: int = 200
    finetune_steps: int = 300
    inject_steps: int = 300
    eval_every: int = 50
    mask_rate: float = 0.15
    freeze_backbone_stage3: bool = True
    backbone_lr_scale: float = 0.1
    # ablation / evaluation
    ablation_budgets: list = field(default_factory=list)
    eval_split: str = "test"
    eval_model: str = "stage3"
    # synthetic data generator
    synth_kind: str = "knowledge"
    synth_dir: str = "synth"
    synth_entities: int = 100
    synth_noise: int = 900
    synth_mentions: int = 8

    def __post_init__(self):
        if self.triple_budget is not None and self.triple_budget < 0:
            raise ConfigError(f"triple_budget must be >= 0, got {self.triple_budget}")
        if self.injector_preset not in PRESETS:
            raise ConfigError(f"unknown injector_preset {self.injector_preset!r}")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")

    # --- parsing -----------------------------------------------------------

    @classmethod
    def keys(cls):
        return [f.name for f in fields(cls)]

    @classmethod
    def from_pairs(cls, pairs, base_dir=None):
        types = {f.name: f.type for f in fields(cls)}
        defaults = cls()
        values = {}
        for key, raw in pairs:
            if key not in types:
                raise ConfigError(f"unknown config key {key!r}")
            values[key] = _coerce(key, raw, getattr(defaults, key))
        cfg = cls(**values)
        if base_dir is not None:
            cfg.resolve_paths(base_dir)
        return cfg

    @classmethod
    def from_file(cls, path, overrides=()):
        pairs = read_pairs(path)
        pairs.extend(parse_override(o) for o in overrides)
        return cls.from_pairs(pairs, base_dir=Path(path).parent)

    def with_overrides(self, **changes):
        return dataclasses.replace(self, **changes)

    def resolve_paths(self, base_dir):
        for key in INPUT_KEYS + OUTPUT_KEYS:
            value = getattr(self, key)
            if value and not Path(value).is_absolute():
                setattr(self, key, os.path.normpath(Path(base_dir) / value))

    # --- views --------------------------------------------------------------

    def injector_config(self):
        preset = dict(PRESETS[self.injector_preset])
        if self.injector_layers:
            preset["layers"] = self.injector_layers
        if self.injector_heads:
            preset["heads"] = self.injector_heads
        preset["d_model"] = self.d_model
        return InjectorConfig(d_ff=self.injector_d_ff, seed=self.seed, dropout=self.dropout, **preset)

    def backbone_config(self, num_classes=2):
        return BackboneConfig(
            layers=self.backbone_layers,
            d_model=self.d_model,
            heads=self.backbone_heads,
            d_ff=self.backbone_d_ff,
            num_classes=num_classes,
            seed=self.seed,
            dropout=self.dropout,
        )

    def serialize(self, keys=None):
        keys = keys or self.keys()
        lines = []
        for key in keys:
            lines.append(f"{key} = {_render(getattr(self, key))}")
        return "\n".join(lines) + "\n"

    def fingerprint(self, keys=None):
        """Hash of the settings that determine results.

        Input files count by content, so a relocated copy of a run has the
        same fingerprint; output locations do not count at all.
        """
        keys = keys or [k for k in self.keys() if k not in OUTPUT_KEYS]
        lines = []
        for key in keys:
            value = getattr(self, key)
            if key in INPUT_KEYS and value and Path(value).is_file():
                value = "sha256:" + hashlib.sha256(Path(value).read_bytes()).hexdigest()
            lines.append(f"{key} = {_render(value)}")
        return hashlib.sha256("\n".join(lines).encode("utf-8")).hexdigest()[:16]

    def base_fingerprint(self):
        return self.fingerprint(BASE_KEYS)

    def check_paths(self, *keys):
        for key in keys:
            value = getattr(self, key)
            if not value:
                raise ConfigError(f"config key {key!r} is required")
            if not Path(value).exists():
                raise ConfigError(f"{key} = {value}: file not found")


def _render(value):
    if value is None:
        return "all"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, list):
        return ",".join(str(v) for v in value)
    return str(value)


def _coerce(key, raw, default):
    raw = raw.strip()
    try:
        if key == "triple_budget":
            return _budget(raw)
        if key == "ablation_budgets":
            return _int_list(raw)
        if key == "labels":
            return _str_list(raw)
        if isinstance(default, bool):
            return _bool(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {raw!r} ({exc})") from None
    return raw


def parse_override(text):
    if "=" not in text:
        raise ConfigError(f"override must look like key=value, got {text!r}")
    key, value = text.split("=", 1)
    return key.strip(), value.strip()


def read_pairs(path):
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            pairs.append(parse_override(line))
    return pairs
