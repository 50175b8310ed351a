from collections import Counter

import pytest

from kinject.data import NEGATIVE, POSITIVE, load_dataset, knowledge_task, separable_task
from kinject.errors import DataError, ParseError
from kinject.kg import normalize_word


@pytest.fixture(scope="module")
def task():
    return knowledge_task(seed=3)


def test_sizes_and_order(task):
    assert task.informative == 100 and len(task.triples) == 1000
    assert all(p == "reputation" for _, p, _ in task.triples[:100])
    assert all(p != "reputation" for _, p, _ in task.triples[100:])


def test_label_lives_only_in_kg(task):
    reputation = {s: o for s, p, o in task.triples[:100]}
    for ds in (task.train, task.dev, task.test):
        for text, label in ds.examples:
            words = set(text.split())
            assert not words & (set(POSITIVE) | set(NEGATIVE))
            (name,) = [s for s in reputation if s in text]
            assert (reputation[name] in POSITIVE) == (label == "pos")


def test_heldout_entities_are_unseen_and_paired(task):
    train_words = {w for t in task.train.texts for w in t.split()}
    for ds in (task.dev, task.test):
        labels = Counter(ds.labels)
        assert labels["pos"] == labels["neg"]
        for (t1, y1), (t2, y2) in zip(ds.examples[::2], ds.examples[1::2]):
            assert (y1, y2) == ("pos", "neg")
            a, b = t1.split(), t2.split()
            assert len(a) == len(b) and sum(x != y for x, y in zip(a, b)) == 2
            assert not (set(a) ^ set(b)) & train_words


def test_training_name_words_are_label_balanced(task):
    reputation = {s: o in POSITIVE for s, _, o in task.triples[:100]}
    train_names = {s for s in reputation if any(s in t for t in task.train.texts)}
    per_word = Counter()
    for name in train_names:
        for w in name.split():
            per_word[w] += 1 if reputation[name] else -1
    assert per_word and all(v == 0 for v in per_word.values())


def test_generator_is_deterministic():
    a, b = knowledge_task(seed=1), knowledge_task(seed=1)
    assert a.train.examples == b.train.examples and a.triples == b.triples
    assert knowledge_task(seed=2).train.examples != a.train.examples


def test_written_files_load(tmp_path, task):
    d = task.write(tmp_path)
    ds = load_dataset(d / "dev.tsv", "dev", ["neg", "pos"])
    assert ds.examples == task.dev.examples


def test_separable_word_decides_label():
    t = separable_task(seed=0)
    for text, label in t.train.examples:
        last = normalize_word(text.split()[-1])
        assert (last in {"great", "wonderful", "superb", "delightful"}) == (label == "pos")


def test_load_dataset_errors(tmp_path):
    bad = tmp_path / "bad.tsv"
    bad.write_text("pos\tfine\nmaybe\tnot allowed\n")
    with pytest.raises(ParseError) as err:
        load_dataset(bad, "train", ["pos", "neg"])
    assert err.value.lineno == 2
    bad.write_text("no tab here\n")
    with pytest.raises(DataError):
        load_dataset(bad)
