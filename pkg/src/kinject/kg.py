"""SPO triple ingestion and the frequency-annotated surface-form dictionary."""
from __future__ import annotations

import logging
import string
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

from .errors import ParseError

log = logging.getLogger(__name__)

PUNCT = string.punctuation + "“”‘’…"


def normalize_word(word):
    return word.strip(PUNCT).casefold()


def normalize_phrase(text):
    """Whitespace split, strip surrounding punctuation, case-fold; drop empties."""
    return tuple(w for w in (normalize_word(t) for t in text.split()) if w)


def surface_key(tokens):
    return " ".join(tokens)


class Triple(NamedTuple):
    subject: tuple
    predicate: tuple
    object: tuple

    @classmethod
    def from_text(cls, s, p, o):
        return cls(normalize_phrase(s), normalize_phrase(p), normalize_phrase(o))

    @property
    def subject_key(self):
        return surface_key(self.subject)

    def tokens(self):
        return self.subject + self.predicate + self.object

    def __str__(self):
        return f"({' '.join(self.subject)}, {' '.join(self.predicate)}, {' '.join(self.object)})"


@dataclass
class TripleStore:
    triples: list = field(default_factory=list)
    by_subject: dict = field(default_factory=dict)

    @classmethod
    def from_triples(cls, triples):
        store = cls()
        for t in triples:
            store.add(t)
        return store

    def add(self, triple):
        self.by_subject.setdefault(triple.subject_key, []).append(len(self.triples))
        self.triples.append(triple)

    def __len__(self):
        return len(self.triples)

    def __iter__(self):
        return iter(self.triples)

    def truncated(self, budget):
        """The store holding only the first ``budget`` triples."""
        return TripleStore.from_triples(self.triples[: max(0, int(budget))])

    def vocabulary_tokens(self):
        """Every KG word plus each multi-word subject as one merged token."""
        seen = {}
        for t in self.triples:
            for w in t.tokens():
                seen.setdefault(w, None)
            seen.setdefault(t.subject_key, None)
        return list(seen)


def _data_lines(path):
    with open(path, encoding="utf-8", newline="") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.rstrip("\r\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            yield lineno, line


def load_triples(path):
    store = TripleStore()
    for lineno, line in _data_lines(path):
        fields = line.split("\t")
        if len(fields) != 3:
            raise ParseError(f"expected 3 tab-separated fields, got {len(fields)}", lineno, path)
        triple = Triple.from_text(*fields)
        for side, tokens in zip(("subject", "predicate", "object"), triple):
            if not tokens:
                raise ParseError(f"empty {side} field", lineno, path)
        store.add(triple)
    return store


def save_triples(store, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for t in store:
            fh.write("\t".join(" ".join(side) for side in t) + "\n")


def facts_for(store, subject, cap=1):
    """First ``cap`` triples for ``subject`` in insertion order."""
    return [store.triples[i] for i in store.by_subject.get(subject, ())[: max(0, int(cap))]]


class SurfaceDict:
    """Surface form -> (subject id, frequency), single-valued after homonym resolution.

    Lookups walk a token-level trie so the matcher never materializes n-gram
    strings it does not need.
    """

    def __init__(self, entries=None, skipped_rows=0):
        self.entries = dict(entries or {})
        self.skipped_rows = skipped_rows
        self._trie = None

    def __len__(self):
        return len(self.entries)

    def __contains__(self, surface):
        return surface in self.entries

    def get(self, surface):
        hit = self.entries.get(surface)
        return None if hit is None else hit[0]

    def frequency(self, surface):
        return self.entries[surface][1]

    @property
    def trie(self):
        if self._trie is None:
            root = {}
            for surface in self.entries:
                node = root
                for word in surface.split(" "):
                    node = node.setdefault(word, {})
                node[None] = surface
            self._trie = root
        return self._trie

    def to_rows(self):
        return [(s, subj, freq) for s, (subj, freq) in self.entries.items()]


def build_surface_dict(store, freq_file=None):
    # candidates[surface][subject] = [frequency, first-seen order]
    candidates = {}
    order = 0
    for key, idxs in store.by_subject.items():
        candidates.setdefault(key, {})[key] = [len(idxs), order]
        order += 1

    skipped = 0
    if freq_file is not None:
        for lineno, line in _data_lines(freq_file):
            fields = line.split("\t")
            if len(fields) != 3:
                raise ParseError(f"expected surface<TAB>subject<TAB>count, got {len(fields)} fields", lineno, freq_file)
            surface = surface_key(normalize_phrase(fields[0]))
            subject = surface_key(normalize_phrase(fields[1]))
            try:
                count = int(fields[2])
            except ValueError:
                raise ParseError(f"count {fields[2]!r} is not an integer", lineno, freq_file) from None
            if count < 0:
                raise ParseError(f"negative count {count}", lineno, freq_file)
            if subject not in store.by_subject or not surface:
                log.warning("%s:%d: unknown subject %r, row skipped", freq_file, lineno, fields[1])
                skipped += 1
                continue
            slot = candidates.setdefault(surface, {})
            if subject in slot:
                slot[subject][0] = count
            else:
                slot[subject] = [count, order]
                order += 1
        if skipped:
            log.warning("%s: skipped %d row(s) naming unknown subjects", freq_file, skipped)

    entries = {}
    for surface, subjects in candidates.items():
        subject, (freq, _) = min(subjects.items(), key=lambda kv: (-kv[1][0], kv[1][1]))
        entries[surface] = (subject, freq)
    return SurfaceDict(entries, skipped_rows=skipped)


def save_surface_dict(sdict, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for surface, subject, freq in sdict.to_rows():
            fh.write(f"{surface}\t{subject}\t{freq}\n")
