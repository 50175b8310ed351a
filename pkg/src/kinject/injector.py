"""Encoder-decoder knowledge injector.

The encoder reads the spliced sentence+facts sequence. The decoder is driven
by the sentence embeddings alone (non-autoregressive, no causal mask) and
cross-attends into the encoder memory, so its output has exactly one row per
sentence token whether or not any facts matched.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import layers
from .encoding import encode_batch, splice
from .errors import ConfigError
from .params import ParameterStore, make_rng

PREFIX = "injector."


@dataclass(frozen=True)
class InjectorConfig:
    layers: int = 3
    d_model: int = 128
    heads: int = 2
    d_ff: int = 0  # 0 -> 4 * d_model
    seed: int = 0
    dropout: float = 0.1

    def __post_init__(self):
        if self.layers < 0 or self.d_model < 1 or self.heads < 1:
            raise ConfigError(f"invalid injector config {self}")
        if self.d_model % 2:
            raise ConfigError(f"injector d_model must be even, got {self.d_model}")
        if self.heads > self.d_model:
            raise ConfigError(f"{self.heads} heads do not fit in d_model={self.d_model}")
        if self.d_ff == 0:
            object.__setattr__(self, "d_ff", 4 * self.d_model)

    @classmethod
    def preset(cls, name, **overrides):
        try:
            base = PRESETS[name]
        except KeyError:
            raise ConfigError(f"unknown injector preset {name!r}; choose from {sorted(PRESETS)}") from None
        return cls(**{**base, **overrides})


# 128 is not divisible by 3: the large preset uses 3 heads of width 42,
# concatenated to 126 and projected back to 128.
PRESETS = {
    "base": dict(layers=3, d_model=128, heads=2),
    "large": dict(layers=4, d_model=128, heads=3),
}


def init_injector(cfg, store=None):
    store = store if store is not None else ParameterStore()
    rng = make_rng(cfg.seed, "injector.init")
    for i in range(cfg.layers):
        layers.init_encoder_layer(store, f"{PREFIX}enc.{i}", cfg.d_model, cfg.heads, cfg.d_ff, rng)
    for i in range(cfg.layers):
        layers.init_decoder_layer(store, f"{PREFIX}dec.{i}", cfg.d_model, cfg.heads, cfg.d_ff, rng)
    return store


def _check_width(x, cfg):
    if x.shape[-1] != cfg.d_model:
        raise ConfigError(f"input width {x.shape[-1]} does not match injector d_model={cfg.d_model}")


def encode(embedded, cfg, params, pad=None, training=False, rng=None):
    """Spliced embeddings -> memory of the same shape."""
    x, lifted = layers.batched(embedded)
    _check_width(x, cfg)
    for i in range(cfg.layers):
        x = layers.encoder_layer(params, f"{PREFIX}enc.{i}", x, pad, cfg.heads, cfg.dropout, rng, training)
    return x.reshape(x.shape[1:]) if lifted else x


def decode(sentence_embedded, memory, cfg, params, sentence_pad=None, memory_pad=None, training=False, rng=None):
    """Sentence embeddings as queries over the memory -> (sent_len, d_model) per sequence."""
    y, lifted = layers.batched(sentence_embedded)
    mem, _ = layers.batched(memory)
    _check_width(y, cfg)
    _check_width(mem, cfg)
    for i in range(cfg.layers):
        y = layers.decoder_layer(
            params, f"{PREFIX}dec.{i}", y, sentence_pad, mem, memory_pad, cfg.heads, cfg.dropout, rng, training
        )
    return y.reshape(y.shape[1:]) if lifted else y


def forward(spliced, sentence, table, cfg, params, training=False, rng=None):
    """Batched splice-embedded inputs -> enriched (batch, sent_len, d_model)."""
    memory = encode(spliced.embedded(table), cfg, params, spliced.pad, training, rng)
    return decode(sentence.embedded(table), memory, cfg, params, sentence.pad, spliced.pad, training, rng)


def inject(sentence, facts, vocab, table, params, cfg, max_len=None):
    """splice -> embed -> encode -> decode for one matched sentence.

    Returns the enriched (sent_len, d_model) array.
    """
    seq = splice(sentence, facts, max_len)
    sent = seq.sentence()
    spliced = encode_batch([vocab.ids(seq.texts)], [np.add(seq.alphas, seq.betas)], cfg.d_model)
    plain = encode_batch([vocab.ids(sent.texts)], [np.add(sent.alphas, sent.betas)], cfg.d_model)
    out = forward(spliced, plain, table, cfg, params)
    return out.data[0]

