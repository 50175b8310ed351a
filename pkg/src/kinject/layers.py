"""Post-norm transformer sublayers shared by the injector and the backbone.

Every forward function reads its weights from a ParameterStore under a name
prefix, takes batched input of shape (batch, length, d_model), and accepts a
boolean ``pad`` mask (True marks padding) for the attended keys.
"""
from __future__ import annotations

import numpy as np

from . import tensor as T
from .params import uniform_init

NEG_INF = -1e9


def head_width(d_model, heads):
    return d_model // heads


def init_linear(store, name, fan_in, fan_out, rng):
    store.add(f"{name}.w", uniform_init(rng, fan_in, (fan_in, fan_out)))
    store.add(f"{name}.b", np.zeros(fan_out))


def init_norm(store, name, d_model):
    store.add(f"{name}.g", np.ones(d_model))
    store.add(f"{name}.b", np.zeros(d_model))


def init_attention(store, name, d_model, heads, rng):
    inner = heads * head_width(d_model, heads)
    for proj in ("q", "k", "v"):
        init_linear(store, f"{name}.{proj}", d_model, inner, rng)
    init_linear(store, f"{name}.o", inner, d_model, rng)


def init_ffn(store, name, d_model, d_ff, rng):
    init_linear(store, f"{name}.in", d_model, d_ff, rng)
    init_linear(store, f"{name}.out", d_ff, d_model, rng)


def linear(store, name, x):
    return x @ store[f"{name}.w"] + store[f"{name}.b"]


def norm(store, name, x, eps=1e-5):
    return T.layer_norm(x, store[f"{name}.g"], store[f"{name}.b"], eps)


def _split_heads(x, heads, dh):
    b, n, _ = x.shape
    return x.reshape(b, n, heads, dh).transpose(0, 2, 1, 3)


def attention(store, name, queries, keys, pad, heads, drop=0.0, rng=None, training=False):
    b, nq, d = queries.shape
    dh = head_width(d, heads)
    q = _split_heads(linear(store, f"{name}.q", queries), heads, dh)
    k = _split_heads(linear(store, f"{name}.k", keys), heads, dh)
    v = _split_heads(linear(store, f"{name}.v", keys), heads, dh)
    scores = (q @ k.transpose(0, 1, 3, 2)) * (1.0 / np.sqrt(dh))
    if pad is not None and pad.any():
        scores = scores + T.Tensor(np.where(pad, NEG_INF, 0.0)[:, None, None, :])
    weights = T.dropout(T.softmax(scores, axis=-1), drop, rng, training)
    mixed = (weights @ v).transpose(0, 2, 1, 3).reshape(b, nq, heads * dh)
    return linear(store, f"{name}.o", mixed)


def ffn(store, name, x, drop=0.0, rng=None, training=False):
    hidden = T.relu(linear(store, f"{name}.in", x))
    return linear(store, f"{name}.out", T.dropout(hidden, drop, rng, training))


def init_encoder_layer(store, name, d_model, heads, d_ff, rng):
    init_attention(store, f"{name}.attn", d_model, heads, rng)
    init_norm(store, f"{name}.ln1", d_model)
    init_ffn(store, f"{name}.ff", d_model, d_ff, rng)
    init_norm(store, f"{name}.ln2", d_model)


def encoder_layer(store, name, x, pad, heads, drop=0.0, rng=None, training=False):
    a = attention(store, f"{name}.attn", x, x, pad, heads, drop, rng, training)
    x = norm(store, f"{name}.ln1", x + T.dropout(a, drop, rng, training))
    f = ffn(store, f"{name}.ff", x, drop, rng, training)
    return norm(store, f"{name}.ln2", x + T.dropout(f, drop, rng, training))


def init_decoder_layer(store, name, d_model, heads, d_ff, rng):
    init_attention(store, f"{name}.self", d_model, heads, rng)
    init_norm(store, f"{name}.ln1", d_model)
    init_attention(store, f"{name}.cross", d_model, heads, rng)
    init_norm(store, f"{name}.ln2", d_model)
    init_ffn(store, f"{name}.ff", d_model, d_ff, rng)
    init_norm(store, f"{name}.ln3", d_model)


def decoder_layer(store, name, y, y_pad, memory, memory_pad, heads, drop=0.0, rng=None, training=False):
    # full (non-causal) self-attention: every sentence position sees every other
    a = attention(store, f"{name}.self", y, y, y_pad, heads, drop, rng, training)
    y = norm(store, f"{name}.ln1", y + T.dropout(a, drop, rng, training))
    c = attention(store, f"{name}.cross", y, memory, memory_pad, heads, drop, rng, training)
    y = norm(store, f"{name}.ln2", y + T.dropout(c, drop, rng, training))
    f = ffn(store, f"{name}.ff", y, drop, rng, training)
    return norm(store, f"{name}.ln3", y + T.dropout(f, drop, rng, training))


def batched(x):
    """Lift an unbatched (length, d) tensor to (1, length, d)."""
    x = T.as_tensor(x)
    return (x.reshape(1, *x.shape), True) if x.ndim == 2 else (x, False)
