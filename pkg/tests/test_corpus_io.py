from __future__ import annotations

import csv

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from abstract_sentiment.corpus_io import (
    AbstractRecord,
    CorpusError,
    dedupe,
    dedupe_key,
    load_corpus,
    load_scored_corpus,
    normalize_text,
    write_corpus,
    write_scored_corpus,
)
from abstract_sentiment.scoring import SentimentResult

from oracles import normalize_by_codepoint

CAPITALISED = {"journal": "Journal", "title": "Title", "year": "Year", "abstract": "Abstract"}


def rec(i: int, abstract: str, journal: str = "J", year: int = 2015) -> AbstractRecord:
    return AbstractRecord(i, journal, f"title {i}", year, abstract)


# ---------------------------------------------------------------- load_corpus


def test_valid_fixture_loads_every_row(fixtures):
    records, errors = load_corpus(fixtures / "corpus_valid.csv", CAPITALISED)
    assert len(records) == 4
    assert errors == []
    assert [r.record_id for r in records] == [0, 1, 2, 3]
    assert records[3].title == 'A "quoted" title'
    assert records[1].year == 2012


def test_row_errors_are_collected(fixtures):
    records, errors = load_corpus(fixtures / "corpus_errors.csv")
    assert [(e.row_number, e.reason) for e in errors] == [
        (2, "bad_year"),
        (3, "empty_abstract"),
        (4, "missing_field"),
        (5, "bad_year"),
    ]
    assert [r.title for r in records] == ["T1", "T6"]
    assert [r.record_id for r in records] == [0, 1]


def test_bad_year_only_rejects_its_row(tmp_path):
    path = tmp_path / "c.csv"
    path.write_text("journal,title,year,abstract\nJ,T,2001,a\nJ,T,20x1,b\nJ,T,2002,c\n")
    records, errors = load_corpus(path)
    assert len(records) == 2
    assert len(errors) == 1 and errors[0].reason == "bad_year" and errors[0].row_number == 2


def test_undecodable_row_is_an_encoding_error(tmp_path):
    path = tmp_path / "c.csv"
    path.write_bytes(b"journal,title,year,abstract\nJ,T,2001,ok\nJ,T\xff,2002,bad\n")
    records, errors = load_corpus(path)
    assert len(records) == 1
    assert errors[0].reason == "encoding_error" and errors[0].row_number == 2


def test_short_row_is_missing_field(tmp_path):
    path = tmp_path / "c.csv"
    path.write_text("journal,title,year,abstract\nJ,T,2001\n")
    _, errors = load_corpus(path)
    assert errors[0].reason == "missing_field"


@pytest.mark.parametrize(
    "content",
    [b"", b"journal,title,abstract\nJ,T,a\n", b"jour\xffnal,title,year,abstract\n"],
    ids=["no-header", "missing-column", "undecodable-header"],
)
def test_fatal_corpus_problems(tmp_path, content):
    path = tmp_path / "c.csv"
    path.write_bytes(content)
    with pytest.raises(CorpusError):
        load_corpus(path)


def test_missing_file_is_fatal(tmp_path):
    with pytest.raises(CorpusError, match="not found"):
        load_corpus(tmp_path / "absent.csv")


row_cell = st.text(alphabet=st.characters(blacklist_categories=("Cs",), blacklist_characters="\x00"), max_size=12)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(row_cell, row_cell, st.one_of(row_cell, st.integers(1800, 2200).map(str)), row_cell), max_size=15))
def test_every_row_is_a_record_or_an_error(tmp_path_factory, rows):
    path = tmp_path_factory.mktemp("rows") / "c.csv"
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["journal", "title", "year", "abstract"])
        writer.writerows(rows)
    with open(path, encoding="utf-8", newline="") as handle:
        n_rows = sum(1 for _ in csv.reader(handle)) - 1
    records, errors = load_corpus(path)
    assert len(records) + len(errors) == n_rows
    assert [r.record_id for r in records] == list(range(len(records)))


# -------------------------------------------------------------- normalize_text


@pytest.mark.parametrize(
    "raw, expected",
    [("  Lyme\t\tdisease ", "Lyme disease"), ("abc", "abc"), ("A\nB\r\nC", "A B C"), ("ﬁne", "fine")],
)
def test_normalize_examples(raw, expected):
    assert normalize_text(raw) == expected


def test_zero_width_space_matches_codepoint_oracle():
    raw = "Borrelia​burgdorferi  infection rates\x07 remain​ unclear"
    assert normalize_text(raw) == normalize_by_codepoint(raw)
    assert normalize_text(raw) == "Borreliaburgdorferi infection rates remain unclear"


@given(st.text())
def test_normalize_matches_codepoint_oracle(raw):
    assert normalize_text(raw) == normalize_by_codepoint(raw)


@given(st.text())
def test_normalize_is_idempotent(raw):
    once = normalize_text(raw)
    assert normalize_text(once) == once


# ----------------------------------------------------------------------- dedupe


def test_exact_duplicate_dropped():
    kept, dropped = dedupe([rec(0, "Same text."), rec(1, "Same text.")])
    assert [r.record_id for r in kept] == [0]
    assert [r.record_id for r in dropped] == [1]


def test_case_and_whitespace_variants_are_duplicates():
    kept, dropped = dedupe([rec(0, "Same  Text."), rec(1, " same text. ")])
    assert len(kept) == 1 and len(dropped) == 1


def test_dedupe_counts_match_set_oracle():
    abstracts = ["a b", "c", "A  B", "d", "C", "e", "d", "f", "g", "D"]
    records = [rec(i, a) for i, a in enumerate(abstracts)]
    kept, dropped = dedupe(records)
    distinct = {" ".join(a.split()).lower() for a in abstracts}
    assert len(kept) == len(distinct) == 6
    assert [r.record_id for r in kept] == [0, 1, 3, 5, 7, 8]
    assert [r.record_id for r in dropped] == [2, 4, 6, 9]


@given(st.lists(st.sampled_from(["x", "X", " x ", "y", "Y  z", "y z", "w"]), max_size=20))
def test_dedupe_partition_and_idempotence(abstracts):
    records = [rec(i, a) for i, a in enumerate(abstracts)]
    kept, dropped = dedupe(records)
    assert sorted(r.record_id for r in kept + dropped) == list(range(len(records)))
    assert [r.record_id for r in kept] == sorted(r.record_id for r in kept)
    assert len({dedupe_key(r.abstract) for r in kept}) == len(kept)
    assert dedupe(kept) == (kept, [])


# ------------------------------------------------------------ scored corpus io


def result(i: int, score: float, label: int) -> SentimentResult:
    return SentimentResult(i, label, 1.0, score)


def test_score_formatting(tmp_path):
    path = tmp_path / "scored.csv"
    write_scored_corpus([rec(0, "text")], [result(0, 0.25, 2)], path)
    lines = path.read_text().splitlines()
    assert lines[0] == "journal,title,year,abstract,sentiment_score,sentiment_label"
    assert lines[1].endswith(",0.250000,2")


def test_scored_round_trip(tmp_path, fixtures):
    records, _ = load_corpus(fixtures / "corpus_valid.csv", CAPITALISED)
    results = [result(r.record_id, s, l) for r, s, l in zip(records, [0.0, 0.3125, 1.0, 0.123456], [1, 2, 5, 1])]
    path = tmp_path / "scored.csv"
    write_scored_corpus(records, results, path, CAPITALISED)
    again, scores = load_scored_corpus(path, CAPITALISED)
    assert again == records
    assert [(s.normalized_score, s.label) for s in scores] == [(0.0, 1), (0.3125, 2), (1.0, 5), (0.123456, 1)]


def test_load_write_load_is_identity(tmp_path, fixtures):
    records, _ = load_corpus(fixtures / "corpus_valid.csv", CAPITALISED)
    write_corpus(records, tmp_path / "c.csv")
    assert load_corpus(tmp_path / "c.csv")[0] == records


def test_empty_corpus_writes_header_only(tmp_path):
    path = tmp_path / "scored.csv"
    write_scored_corpus([], [], path)
    assert path.read_text() == "journal,title,year,abstract,sentiment_score,sentiment_label\n"
    assert load_scored_corpus(path) == ([], [])


def test_misaligned_results_rejected(tmp_path):
    with pytest.raises(ValueError):
        write_scored_corpus([rec(0, "a")], [result(1, 0.5, 3)], tmp_path / "x.csv")
