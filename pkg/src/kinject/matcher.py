"""Subject tokenizer: greedy longest-match of sentence n-grams against a SurfaceDict."""
from __future__ import annotations

import re
from dataclasses import dataclass, field

from .errors import DataError
from .kg import PUNCT, facts_for, normalize_word

_WORD = re.compile(r"\S+")


@dataclass
class SentenceTokens:
    tokens: list
    spans: list
    merged: list = field(default_factory=list)
    widths: list = field(default_factory=list)

    def __post_init__(self):
        if not self.merged:
            self.merged = [False] * len(self.tokens)
        if not self.widths:
            self.widths = [len(t.split(" ")) for t in self.tokens]

    def __len__(self):
        return len(self.tokens)

    @property
    def text(self):
        return " ".join(self.tokens)


@dataclass
class MatchResult:
    matches: list = field(default_factory=list)  # (1-based token index, subject id)
    facts: list = field(default_factory=list)  # (1-based token index, Triple)


def tokenize(text):
    tokens, spans = [], []
    for m in _WORD.finditer(text):
        raw = m.group()
        word = normalize_word(raw)
        if not word:
            continue
        start = m.start() + len(raw) - len(raw.lstrip(PUNCT))
        tokens.append(word)
        spans.append((start, start + len(raw.strip(PUNCT))))
    if not tokens:
        raise DataError(f"empty sentence: {text!r}")
    return SentenceTokens(tokens, spans)


def match_subjects(tokens, sdict, max_ngram=4):
    """Left-to-right greedy longest match; each hit becomes one merged token.

    ``max_ngram`` counts words, so a previously merged token counts as its
    full width and re-matching a merged sentence is a no-op.
    """
    if max_ngram < 1:
        raise ValueError("max_ngram must be >= 1")
    trie = sdict.trie
    out_tokens, out_spans, out_merged, out_widths = [], [], [], []
    result = MatchResult()
    i, n = 0, len(tokens.tokens)
    while i < n:
        node, width, best = trie, 0, None
        j = i
        while j < n:
            width += tokens.widths[j]
            if width > max_ngram:
                break
            for word in tokens.tokens[j].split(" "):
                node = node.get(word)
                if node is None:
                    break
            if node is None:
                break
            if None in node:
                best = (j, node[None])
            j += 1
        if best is None:
            out_tokens.append(tokens.tokens[i])
            out_spans.append(tokens.spans[i])
            out_merged.append(tokens.merged[i])
            out_widths.append(tokens.widths[i])
            i += 1
            continue
        end, surface = best
        out_tokens.append(surface)
        out_spans.append((tokens.spans[i][0], tokens.spans[end][1]))
        out_merged.append(end > i or tokens.merged[i])
        out_widths.append(sum(tokens.widths[i : end + 1]))
        result.matches.append((len(out_tokens), sdict.get(surface)))
        i = end + 1
    return SentenceTokens(out_tokens, out_spans, out_merged, out_widths), result


def gather_facts(result, store, per_subject_cap=1, per_sentence_cap=8):
    if per_subject_cap < 1 or per_sentence_cap < 1:
        raise ValueError("fact caps must be >= 1")
    facts = []
    for index, subject in result.matches:
        for triple in facts_for(store, subject, per_subject_cap):
            if len(facts) >= per_sentence_cap:
                break
            facts.append((index, triple))
    return MatchResult(list(result.matches), facts)


def match_sentence(text, sdict, store, max_ngram=4, per_subject_cap=1, per_sentence_cap=8):
    """tokenize -> match_subjects -> gather_facts in one call."""
    merged, result = match_subjects(tokenize(text), sdict, max_ngram)
    return merged, gather_facts(result, store, per_subject_cap, per_sentence_cap)


def format_match_line(text, merged, result):
    """One TSV output row for the ``match`` CLI subcommand."""
    subjects = ";".join(f"{subj}@{idx}" for idx, subj in result.matches)
    facts = ";".join(
        "|".join(" ".join(side) for side in triple) for _, triple in result.facts
    )
    return f"{text}\t{subjects}\t{facts}"
