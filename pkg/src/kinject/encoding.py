"""Spliced sentence+fact sequences, dual position indices and their embedding."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import ConfigError, ConsistencyError, DataError
from .params import make_rng
from .tensor import Tensor, add, take_rows

PAD, UNK, MASK = 0, 1, 2
RESERVED = ("<pad>", "<unk>", "<mask>")


class Origin(str, Enum):
    SENTENCE = "SENTENCE"
    SUBJ = "SUBJ"
    PRED = "PRED"
    OBJ = "OBJ"


@dataclass(frozen=True)
class SplicedToken:
    text: str
    alpha: int
    beta: int
    origin: Origin


@dataclass
class SplicedSequence:
    tokens: list = field(default_factory=list)
    sentence_len: int = 0

    def __len__(self):
        return len(self.tokens)

    @property
    def alphas(self):
        return [t.alpha for t in self.tokens]

    @property
    def betas(self):
        return [t.beta for t in self.tokens]

    @property
    def texts(self):
        return [t.text for t in self.tokens]

    @property
    def origins(self):
        return [t.origin.value for t in self.tokens]

    def sentence(self):
        return SplicedSequence(self.tokens[: self.sentence_len], self.sentence_len)

    def to_json(self):
        return json.dumps(
            {"tokens": self.texts, "alphas": self.alphas, "betas": self.betas, "origins": self.origins},
            ensure_ascii=False,
        )


def splice(sentence, facts, max_len=None):
    """Sentence tokens first (alpha == beta == position), then each fact as S, P, O words.

    ``sentence`` is a merged SentenceTokens (or a plain token list); ``facts``
    is an ordered list of (1-based matched index, Triple). Facts that would
    overflow ``max_len`` are dropped from the right.
    """
    words = list(getattr(sentence, "tokens", sentence))
    n = len(words)
    if max_len is not None and n > max_len:
        raise DataError(f"sentence has {n} tokens, more than max_seq_len={max_len}")
    out = [SplicedToken(w, i, i, Origin.SENTENCE) for i, w in enumerate(words, 1)]
    prev = 0
    for index, triple in facts:
        if not 1 <= index <= n:
            raise ConsistencyError(f"fact index {index} outside sentence of length {n}")
        if index < prev:
            raise ConsistencyError("facts must be ordered by matched token index")
        prev = index
        group = []
        for origin, side in zip((Origin.SUBJ, Origin.PRED, Origin.OBJ), triple):
            for w in side:
                group.append((w, origin))
        if max_len is not None and len(out) + len(group) > max_len:
            break
        start = len(out) + 1
        out.extend(SplicedToken(w, start + k, index, o) for k, (w, o) in enumerate(group))
    return SplicedSequence(out, n)


def position_codes(pos, d_model):
    """Sinusoids of ``pos`` (any shape): sin on even, cos on odd components."""
    if d_model <= 0 or d_model % 2:
        raise ConfigError(f"d_model must be a positive even integer, got {d_model}")
    pos = np.asarray(pos, dtype=np.float64)[..., None]
    rates = 10000.0 ** (-np.arange(0, d_model, 2, dtype=np.float64) / d_model)
    out = np.empty(pos.shape[:-1] + (d_model,))
    out[..., 0::2] = np.sin(pos * rates)
    out[..., 1::2] = np.cos(pos * rates)
    return out


def position_code(alpha, beta, d_model):
    """Code for one token: the sinusoid at pos = alpha + beta."""
    if alpha < 0 or beta < 0:
        raise ValueError("position indices must be nonnegative")
    return position_codes(alpha + beta, d_model)


class Vocabulary:
    def __init__(self, tokens=()):
        self.itos = list(RESERVED)
        self.stoi = {t: i for i, t in enumerate(self.itos)}
        self.extend(tokens)

    def __len__(self):
        return len(self.itos)

    def __contains__(self, token):
        return token in self.stoi

    def __eq__(self, other):
        return isinstance(other, Vocabulary) and self.itos == other.itos

    def extend(self, tokens):
        """Append unseen tokens; returns the newly added ones."""
        added = []
        for t in tokens:
            if t not in self.stoi:
                self.stoi[t] = len(self.itos)
                self.itos.append(t)
                added.append(t)
        return added

    def copy(self):
        v = Vocabulary()
        v.itos = list(self.itos)
        v.stoi = dict(self.stoi)
        return v

    def ids(self, tokens):
        return [self.stoi.get(t, UNK) for t in tokens]

    def save(self, path):
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for t in self.itos[len(RESERVED) :]:
                fh.write(t + "\n")

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls(line.rstrip("\n") for line in fh if line.rstrip("\n"))


def init_embedding_rows(seed, tokens, d_model):
    """One uniform [-1, 1] row per token, seeded by the token string itself.

    A lookup is a one-hot product with fan-in 1, hence the unit bound. Seeding
    per token keeps a word's vector identical however the vocabulary grows.
    """
    rows = np.empty((len(tokens), d_model))
    for k, tok in enumerate(tokens):
        rows[k] = make_rng(seed, "embed:" + tok).uniform(-1.0, 1.0, size=d_model)
    return rows


def embed(seq, vocab, table, d_model):
    """Rows of ``table`` for each token plus its position code; (len, d_model)."""
    ids = np.array(vocab.ids(seq.texts), dtype=np.int64)
    codes = position_codes(np.array(seq.alphas) + np.array(seq.betas), d_model)
    return add(take_rows(table, ids), Tensor(codes))


@dataclass
class EncodedBatch:
    """Padded ids and position codes for a list of sequences."""

    ids: np.ndarray  # (B, L) int
    codes: np.ndarray  # (B, L, d)
    pad: np.ndarray  # (B, L) bool, True where padded

    def embedded(self, table):
        return add(take_rows(table, self.ids), Tensor(self.codes))

    def select(self, rows):
        return EncodedBatch(self.ids[rows], self.codes[rows], self.pad[rows])


def encode_batch(id_lists, pos_lists, d_model, length=None):
    length = length or max(len(x) for x in id_lists)
    b = len(id_lists)
    ids = np.full((b, length), PAD, dtype=np.int64)
    pos = np.zeros((b, length))
    pad = np.ones((b, length), dtype=bool)
    for r, (i, p) in enumerate(zip(id_lists, pos_lists)):
        ids[r, : len(i)] = i
        pos[r, : len(p)] = p
        pad[r, : len(i)] = False
    codes = position_codes(pos, d_model)
    codes[pad] = 0.0
    return EncodedBatch(ids, codes, pad)
