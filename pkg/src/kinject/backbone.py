"""Tokenizer-free transformer encoder with classification, tagging and masked-LM heads.

Input is always a batch of continuous embeddings, never token ids.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import layers
from . import tensor as T
from .errors import ConfigError, UsageError
from .params import ParameterStore, make_rng

PREFIX = "backbone."
EMBED = "backbone.embed"


@dataclass(frozen=True)
class BackboneConfig:
    layers: int = 2
    d_model: int = 128
    heads: int = 2
    d_ff: int = 0  # 0 -> 4 * d_model
    num_classes: int = 2
    seed: int = 0
    dropout: float = 0.1

    def __post_init__(self):
        if self.layers < 0 or self.d_model < 1 or self.heads < 1 or self.num_classes < 1:
            raise ConfigError(f"invalid backbone config {self}")
        if self.d_model % self.heads:
            raise ConfigError(f"d_model={self.d_model} is not divisible by heads={self.heads}")
        if self.d_ff == 0:
            object.__setattr__(self, "d_ff", 4 * self.d_model)


def init_backbone(cfg, store=None):
    store = store if store is not None else ParameterStore()
    rng = make_rng(cfg.seed, "backbone.init")
    for i in range(cfg.layers):
        layers.init_encoder_layer(store, f"{PREFIX}layer.{i}", cfg.d_model, cfg.heads, cfg.d_ff, rng)
    return store


def init_head(store, task, d_model, n_out, seed):
    layers.init_linear(store, f"head.{task}", d_model, n_out, make_rng(seed, f"head.{task}.init"))
    return store


def encode(x, pad, params, cfg, training=False, rng=None):
    if x.shape[-1] != cfg.d_model:
        raise ConfigError(f"input width {x.shape[-1]} does not match backbone d_model={cfg.d_model}")
    for i in range(cfg.layers):
        x = layers.encoder_layer(params, f"{PREFIX}layer.{i}", x, pad, cfg.heads, cfg.dropout, rng, training)
    return x


def masked_mean(h, pad):
    keep = (~pad).astype(np.float64)[:, :, None]
    counts = keep.sum(axis=1)
    return (h * T.Tensor(keep)).sum(axis=1) / T.Tensor(counts)


def backbone_forward(x, pad, params, cfg, task="cls", tagging=False, training=False, rng=None):
    """Logits (batch, classes), or (batch, length, classes) when ``tagging``."""
    x, _ = layers.batched(x)
    if pad is None:
        pad = np.zeros(x.shape[:2], dtype=bool)
    h = encode(x, pad, params, cfg, training, rng)
    if tagging:
        return layers.linear(params, f"head.{task}", h)
    return layers.linear(params, f"head.{task}", masked_mean(h, pad))


def mask_positions(pad, rate, rng):
    """Choose masked positions among real tokens, at least one per batch."""
    chosen = (rng.random(pad.shape) < rate) & ~pad
    if rate > 0 and not chosen.any():
        real = np.argwhere(~pad)
        r, c = real[rng.integers(len(real))]
        chosen[r, c] = True
    return chosen


def lm_pretrain_forward(x, pad, masked, params, cfg, training=False, rng=None):
    """Per-position vocabulary logits for a batch whose ``masked`` inputs were replaced."""
    if not np.asarray(masked).any():
        raise UsageError("masked-LM batch has no masked positions")
    h = encode(x, pad, params, cfg, training, rng)
    return layers.linear(params, "head.mlm", h)


def lm_loss(logits, targets, masked):
    return T.cross_entropy(logits, targets, weights=np.asarray(masked, dtype=np.float64))
