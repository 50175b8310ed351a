import logging

import pytest

from kinject.errors import ParseError
from kinject.kg import (
    Triple,
    TripleStore,
    build_surface_dict,
    facts_for,
    load_triples,
    save_triples,
)


@pytest.fixture
def kg_file(tmp_path):
    path = tmp_path / "kg.tsv"
    path.write_text(
        "# example knowledge\n"
        "Xiaomi\tis_a\tscience and technology company\n"
        "Hong Kong\tis_a\tcity\n"
        "Xiaomi\tfounded_in\t2010\n",
        encoding="utf-8",
    )
    return path


def test_load_triples_tokenizes_sides(kg_file):
    store = load_triples(kg_file)
    assert len(store) == 3
    assert store.triples[0] == Triple(("xiaomi",), ("is_a",), ("science", "and", "technology", "company"))
    assert store.triples[1].subject == ("hong", "kong")
    assert store.by_subject["xiaomi"] == [0, 2]


def test_empty_file_gives_empty_store(tmp_path):
    (tmp_path / "e.tsv").write_text("", encoding="utf-8")
    assert len(load_triples(tmp_path / "e.tsv")) == 0


@pytest.mark.parametrize("line", ["a\tb\n", "a\tb\tc\td\n", "a\t...\tc\n"])
def test_malformed_lines_report_line_number(tmp_path, line):
    path = tmp_path / "bad.tsv"
    path.write_text("x\ty\tz\n" + line, encoding="utf-8")
    with pytest.raises(ParseError) as err:
        load_triples(path)
    assert err.value.lineno == 2


def test_round_trip_preserves_triples(kg_file, tmp_path):
    store = load_triples(kg_file)
    save_triples(store, tmp_path / "out.tsv")
    again = load_triples(tmp_path / "out.tsv")
    assert again.triples == store.triples


def test_surface_dict_counts_triples(kg_file):
    sdict = build_surface_dict(load_triples(kg_file))
    assert sdict.entries == {"xiaomi": ("xiaomi", 2), "hong kong": ("hong kong", 1)}
    assert len(build_surface_dict(TripleStore())) == 0


def test_frequency_file_overrides_and_skips_unknown(kg_file, tmp_path, caplog):
    freq = tmp_path / "freq.tsv"
    freq.write_text("Xiaomi\txiaomi\t100\nHKEx\tnobody\t5\nhk\tHong Kong\t7\n", encoding="utf-8")
    with caplog.at_level(logging.WARNING):
        sdict = build_surface_dict(load_triples(kg_file), freq)
    assert sdict.entries["xiaomi"] == ("xiaomi", 100)
    assert sdict.entries["hk"] == ("hong kong", 7)
    assert sdict.skipped_rows == 1
    assert "nobody" in caplog.text


def test_homonyms_keep_most_frequent_then_first(tmp_path):
    store = TripleStore.from_triples(
        [Triple.from_text("apple inc", "is_a", "company"), Triple.from_text("apple fruit", "is_a", "fruit")]
    )
    freq = tmp_path / "freq.tsv"
    freq.write_text("apple\tapple fruit\t3\napple\tapple inc\t9\nmac\tapple inc\t2\nmac\tapple fruit\t2\n")
    sdict = build_surface_dict(store, freq)
    assert sdict.get("apple") == "apple inc"
    assert sdict.get("mac") == "apple inc"


def test_build_is_deterministic(kg_file):
    a = build_surface_dict(load_triples(kg_file))
    b = build_surface_dict(load_triples(kg_file))
    assert a.entries == b.entries


def test_facts_for_prefix_semantics(kg_file):
    store = load_triples(kg_file)
    assert facts_for(store, "xiaomi", cap=1) == [store.triples[0]]
    assert facts_for(store, "xiaomi", cap=10) == [store.triples[0], store.triples[2]]
    assert facts_for(store, "hong kong") == [Triple.from_text("Hong Kong", "is_a", "city")]
    assert facts_for(store, "unknown") == []


def test_every_surface_form_has_facts(kg_file):
    store = load_triples(kg_file)
    for surface, (subject, _) in build_surface_dict(store).entries.items():
        assert facts_for(store, subject)


def test_truncation_keeps_prefix(kg_file):
    store = load_triples(kg_file)
    assert store.truncated(2).triples == store.triples[:2]
    assert len(store.truncated(0)) == 0
