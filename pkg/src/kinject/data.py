"""Labelled TSV datasets and the synthetic knowledge-separable task generator."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from .errors import DataError, ParseError
from .params import make_rng


@dataclass
class Dataset:
    examples: list = field(default_factory=list)  # (text, label)
    split: str = ""

    def __len__(self):
        return len(self.examples)

    @property
    def texts(self):
        return [t for t, _ in self.examples]

    @property
    def labels(self):
        return [y for _, y in self.examples]


def load_dataset(path, split="", label_set=None):
    """Read ``label<TAB>text`` lines; labels outside ``label_set`` are errors."""
    examples = []
    allowed = None if not label_set else set(label_set)
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.rstrip("\r\n")
            if not line.strip() or line.startswith("#"):
                continue
            if "\t" not in line:
                raise ParseError("expected label<TAB>text", lineno, path)
            label, text = line.split("\t", 1)
            label = label.strip()
            if allowed is not None and label not in allowed:
                raise ParseError(f"label {label!r} not in declared set {sorted(allowed)}", lineno, path)
            if not text.strip():
                raise ParseError("empty text", lineno, path)
            examples.append((text, label))
    return Dataset(examples, split or Path(path).stem)


def save_dataset(ds, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for text, label in ds.examples:
            fh.write(f"{label}\t{text}\n")


def check_disjoint(*datasets):
    seen = {}
    for ds in datasets:
        for text, _ in ds.examples:
            if text in seen and seen[text] != ds.split:
                raise DataError(f"example {text!r} appears in both {seen[text]} and {ds.split}")
            seen.setdefault(text, ds.split)


# --- synthetic tasks -------------------------------------------------------

TEMPLATES = [
    "i watched {e} last night with my cousin",
    "everyone at work keeps talking about {e}",
    "we finally saw {e} at the downtown cinema",
    "my neighbour lent me a copy of {e}",
    "the festival closed with a screening of {e}",
    "after dinner we put on {e} again",
    "a friend recommended {e} to me last week",
    "they showed {e} on the late channel",
]
POSITIVE = ["acclaimed", "celebrated", "beloved", "masterful"]
NEGATIVE = ["panned", "dreadful", "forgettable", "botched"]
NEUTRAL_OBJECTS = [
    "building", "evening", "season", "colour", "river", "island", "vehicle", "tradition",
    "machine", "language", "animal", "garden", "instrument", "sport", "holiday", "planet",
]
NOISE_PREDICATES = ["related_to", "part_of", "located_in", "made_of", "used_for", "instance_of"]
SEPARABLE_POS = ["great", "wonderful", "superb", "delightful"]
SEPARABLE_NEG = ["awful", "terrible", "boring", "dismal"]
_SYLLABLES = ["ka", "zo", "rin", "vel", "mor", "tes", "qui", "lan", "dro", "pe", "sha", "nu", "bix", "fal", "gor", "yem"]


def _template_words():
    words = set()
    for t in TEMPLATES:
        words.update(w for w in t.split() if w != "{e}")
    return words


def _pseudo_words(rng, count, taken):
    out = []
    while len(out) < count:
        w = "".join(rng.choice(_SYLLABLES, size=rng.integers(2, 4)))
        if w not in taken:
            taken.add(w)
            out.append(w)
    return out


def _balanced_names(rng, n, width, taken):
    """``n`` distinct names (n/2 pos, n/2 neg) over a pool of n/2 words.

    In every slot of the name, each pool word occurs once in a positive and
    once in a negative name, so no single word predicts the label.
    """
    pool = _pseudo_words(rng, n // 2, taken)
    for _ in range(1000):
        slots = [[rng.permutation(pool), rng.permutation(pool)] for _ in range(width)]
        names = {
            label: [" ".join(str(slots[s][c][k]) for s in range(width)) for k in range(n // 2)]
            for c, label in enumerate(("pos", "neg"))
        }
        flat = names["pos"] + names["neg"]
        words_ok = all(len(set(name.split())) == width for name in flat)
        if len(set(flat)) == n and words_ok:
            return [(name, label) for k in range(n // 2) for label, name in (("pos", names["pos"][k]), ("neg", names["neg"][k]))]
    raise ValueError("could not draw label-balanced entity names")


@dataclass
class SyntheticTask:
    train: Dataset
    dev: Dataset
    test: Dataset
    triples: list  # (s, p, o) strings, informative first
    informative: int

    def write(self, directory):
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        for ds in (self.train, self.dev, self.test):
            save_dataset(ds, d / f"{ds.split}.tsv")
        with open(d / "kg.tsv", "w", encoding="utf-8", newline="\n") as fh:
            for s, p, o in self.triples:
                fh.write(f"{s}\t{p}\t{o}\n")
        return d


def knowledge_task(seed=0, entities=100, noise=900, mentions=8, split=(0.6, 0.2, 0.2), name_words=2):
    """Entities whose class is stated only in the KG.

    Each entity has a hidden good/bad reputation stored as one KG triple.
    Sentences mention the entity in a neutral template, so the label is not
    recoverable from text. Training names reuse a small word pool in a
    label-balanced way, so no single name word is a label cue either. Dev
    and test use entities never seen in training and pair every positive
    with a negative sentence of identical template and name length, which
    makes any text-only model score exactly 50%.
    The KG lists the informative triples first (shuffled across splits),
    then ``noise`` uninformative ones, half about template words that do
    occur in sentences and half about entities that never do.
    """
    rng = make_rng(seed, "synth.knowledge")
    taken = _template_words() | set(POSITIVE) | set(NEGATIVE) | set(NEUTRAL_OBJECTS)
    n_train = int(round(entities * split[0])) // 2 * 2
    n_dev = int(round(entities * split[1])) // 2 * 2
    n_test = entities - n_train - n_dev
    if min(n_train, n_dev, n_test) < 2 or n_test % 2:
        raise ValueError(f"cannot split {entities} entities into balanced train/dev/test")

    def fresh_entities(n):
        ents = []
        for _ in range(n // 2):
            for label in ("pos", "neg"):
                ents.append((" ".join(_pseudo_words(rng, name_words, taken)), label))
        return ents

    groups = {
        "train": _balanced_names(rng, n_train, name_words, taken),
        "dev": fresh_entities(n_dev),
        "test": fresh_entities(n_test),
    }

    facts = {}
    for name, label in [e for g in groups.values() for e in g]:
        word = rng.choice(POSITIVE if label == "pos" else NEGATIVE)
        facts[name] = (name, "reputation", str(word))

    train = []
    for name, label in groups["train"]:
        for t in rng.choice(len(TEMPLATES), size=mentions, replace=False if mentions <= len(TEMPLATES) else True):
            train.append((TEMPLATES[t].format(e=name), label))
    order = rng.permutation(len(train))
    train = [train[i] for i in order]

    def paired(ents):
        out = []
        for k in range(0, len(ents), 2):
            (pos_name, _), (neg_name, _) = ents[k], ents[k + 1]
            for t in TEMPLATES:
                out.append((t.format(e=pos_name), "pos"))
                out.append((t.format(e=neg_name), "neg"))
        return out

    informative = [facts[name] for name, _ in [e for g in groups.values() for e in g]]
    informative = [informative[i] for i in rng.permutation(len(informative))]

    noise_triples = []
    in_text = sorted(_template_words() - {"a", "i", "we", "me", "my", "the", "at", "on", "of", "to", "with"})
    off_text = _pseudo_words(rng, max(1, noise // 4), taken)
    for k in range(noise):
        pool = in_text if k % 2 == 0 else off_text
        subject = str(pool[rng.integers(len(pool))])
        noise_triples.append(
            (subject, str(rng.choice(NOISE_PREDICATES)), str(rng.choice(NEUTRAL_OBJECTS)))
        )

    return SyntheticTask(
        Dataset(train, "train"),
        Dataset(paired(groups["dev"]), "dev"),
        Dataset(paired(groups["test"]), "test"),
        informative + noise_triples,
        len(informative),
    )


def separable_task(seed=0, n_train=400, n_dev=100, n_test=100):
    """Text-only task: a sentiment word in the sentence decides the label."""
    rng = make_rng(seed, "synth.separable")
    taken = _template_words() | set(SEPARABLE_POS) | set(SEPARABLE_NEG)
    names = _pseudo_words(rng, 40, taken)
    seen = set()

    def sample(n, split):
        out = []
        while len(out) < n:
            label = "pos" if len(out) % 2 == 0 else "neg"
            word = rng.choice(SEPARABLE_POS if label == "pos" else SEPARABLE_NEG)
            t = TEMPLATES[rng.integers(len(TEMPLATES))]
            text = t.format(e=str(rng.choice(names))) + f" and it was {word}"
            if text in seen:
                continue
            seen.add(text)
            out.append((text, label))
        return Dataset(out, split)

    return SyntheticTask(sample(n_train, "train"), sample(n_dev, "dev"), sample(n_test, "test"), [], 0)
