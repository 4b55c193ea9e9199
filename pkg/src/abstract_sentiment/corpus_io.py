"""
Loading, cleaning and persisting a corpus of journal abstracts stored as CSV.

Each accepted row becomes an :class:`AbstractRecord`; rows that fail
validation are reported as :class:`RowError` instead of being dropped
silently, so a cleaning pass can always be audited.
"""

from __future__ import annotations

import csv
import io
import re
import unicodedata
from collections.abc import Mapping, Sequence
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING, Literal

if TYPE_CHECKING:
    from .scoring import SentimentResult

__all__ = [
    "AbstractRecord",
    "CorpusError",
    "DEFAULT_COLUMNS",
    "RowError",
    "ScoredRow",
    "dedupe",
    "dedupe_key",
    "load_corpus",
    "load_scored_corpus",
    "normalize_text",
    "write_corpus",
    "write_scored_corpus",
]

DEFAULT_COLUMNS: dict[str, str] = {
    "journal": "journal",
    "title": "title",
    "year": "year",
    "abstract": "abstract",
}
YEAR_MIN, YEAR_MAX = 1900, 2100
SCORE_COLUMN = "sentiment_score"
LABEL_COLUMN = "sentiment_label"

RowErrorReason = Literal["missing_field", "bad_year", "empty_abstract", "encoding_error"]


class CorpusError(Exception):
    """Fatal problem with a corpus file (missing, undecodable header, bad columns)."""


@dataclass(frozen=True)
class AbstractRecord:
    record_id: int
    journal: str
    title: str
    year: int
    abstract: str


@dataclass(frozen=True)
class RowError:
    row_number: int  # 1-based data row, header excluded
    reason: RowErrorReason
    detail: str


@dataclass(frozen=True)
class ScoredRow:
    """Score columns read back from a scored corpus file."""

    record_id: int
    label: int
    normalized_score: float


_WS_RUN = re.compile(r"\s+")


def normalize_text(raw: str) -> str:
    """NFKC-normalize, drop control/format characters and collapse whitespace.

    Whitespace characters (including tabs and newlines) become single spaces;
    other control (Cc) and format (Cf, e.g. zero-width space) characters are
    removed outright, which joins the text on either side of them. Case is
    preserved.
    """
    text = unicodedata.normalize("NFKC", raw)
    text = "".join(
        ch
        for ch in text
        if ch.isspace() or unicodedata.category(ch) not in ("Cc", "Cf")
    )
    return _WS_RUN.sub(" ", text).strip()


def dedupe_key(abstract: str) -> str:
    return normalize_text(abstract).casefold()


def _map_columns(column_map: Mapping[str, str] | None) -> dict[str, str]:
    mapping = dict(DEFAULT_COLUMNS)
    if column_map:
        unknown = set(column_map) - set(DEFAULT_COLUMNS)
        if unknown:
            raise CorpusError(f"unknown logical column(s): {sorted(unknown)}")
        mapping.update(column_map)
    return mapping


def _read_text(path: Path) -> str:
    try:
        data = path.read_bytes()
    except FileNotFoundError:
        raise CorpusError(f"corpus file not found: {path}") from None
    except OSError as exc:
        raise CorpusError(f"cannot read corpus file {path}: {exc}") from exc
    if data.startswith(b"\xef\xbb\xbf"):
        data = data[3:]
    # Undecodable bytes survive as lone surrogates so they can be reported per row.
    return data.decode("utf-8", errors="surrogateescape")


def _has_surrogates(value: str) -> bool:
    return any("\udc80" <= ch <= "\udcff" for ch in value)


def _parse_year(value: str) -> int | None:
    value = value.strip()
    if not re.fullmatch(r"[+-]?\d+", value):
        return None
    year = int(value)
    if not YEAR_MIN <= year <= YEAR_MAX:
        return None
    return year


def _read_rows(
    path: str | Path, column_map: Mapping[str, str] | None, extra: Sequence[str] = ()
) -> tuple[list[tuple[int, dict[str, str] | RowError]], dict[str, str]]:
    mapping = _map_columns(column_map)
    reader = csv.reader(io.StringIO(_read_text(Path(path)), newline=""))
    try:
        header = next(reader)
    except StopIteration:
        raise CorpusError(f"{path}: missing header row") from None
    except csv.Error as exc:
        raise CorpusError(f"{path}: malformed CSV header: {exc}") from exc
    if any(_has_surrogates(h) for h in header):
        raise CorpusError(f"{path}: header is not valid UTF-8")
    header = [h.strip() for h in header]
    wanted = [*mapping.values(), *extra]
    missing = [c for c in wanted if c not in header]
    if missing:
        raise CorpusError(f"{path}: missing column(s) {missing}; header is {header}")
    index = {name: header.index(name) for name in wanted}

    rows: list[tuple[int, dict[str, str] | RowError]] = []
    try:
        for row_number, row in enumerate(reader, start=1):
            rows.append((row_number, _split_row(row_number, row, index)))
    except csv.Error as exc:
        raise CorpusError(f"{path}: malformed CSV near data row {len(rows) + 1}: {exc}") from exc
    return rows, mapping


def _split_row(row_number: int, row: list[str], index: dict[str, int]) -> dict[str, str] | RowError:
    if not row:  # csv yields [] for a blank line
        return RowError(row_number, "missing_field", "blank line")
    if any(_has_surrogates(cell) for cell in row):
        return RowError(row_number, "encoding_error", "row is not valid UTF-8")
    absent = [name for name, i in index.items() if i >= len(row)]
    if absent:
        return RowError(row_number, "missing_field", f"row has no {absent} cell")
    return {name: row[i] for name, i in index.items()}


def _validate(
    row_number: int, fields: dict[str, str], mapping: Mapping[str, str], record_id: int
) -> AbstractRecord | RowError:
    journal = normalize_text(fields[mapping["journal"]])
    title = normalize_text(fields[mapping["title"]])
    abstract = normalize_text(fields[mapping["abstract"]])
    raw_year = fields[mapping["year"]]
    for logical, value in (("journal", journal), ("title", title)):
        if not value:
            return RowError(row_number, "missing_field", f"empty {logical}")
    if not raw_year.strip():
        return RowError(row_number, "missing_field", "empty year")
    year = _parse_year(raw_year)
    if year is None:
        return RowError(
            row_number, "bad_year", f"{raw_year!r} is not an integer in [{YEAR_MIN}, {YEAR_MAX}]"
        )
    if not abstract:
        return RowError(row_number, "empty_abstract", "abstract has no visible text")
    return AbstractRecord(record_id, journal, title, year, abstract)


def load_corpus(
    path: str | Path, column_map: Mapping[str, str] | None = None
) -> tuple[list[AbstractRecord], list[RowError]]:
    """Read a UTF-8 CSV corpus.

    Every data row yields exactly one record or one row error; record ids
    are assigned 0, 1, ... over accepted rows in file order. Text fields are
    passed through :func:`normalize_text`.

    Raises:
        CorpusError: the file is missing or unreadable, has no header, has an
            undecodable header, or lacks one of the mapped columns.
    """
    rows, mapping = _read_rows(path, column_map)
    records: list[AbstractRecord] = []
    errors: list[RowError] = []
    for row_number, fields in rows:
        if isinstance(fields, RowError):
            errors.append(fields)
            continue
        outcome = _validate(row_number, fields, mapping, len(records))
        if isinstance(outcome, RowError):
            errors.append(outcome)
        else:
            records.append(outcome)
    return records, errors


def dedupe(
    records: Sequence[AbstractRecord],
) -> tuple[list[AbstractRecord], list[AbstractRecord]]:
    """Split records into (kept, dropped), keeping the first record per abstract.

    Abstracts are compared after normalization and case folding.
    """
    seen: set[str] = set()
    kept: list[AbstractRecord] = []
    dropped: list[AbstractRecord] = []
    for record in records:
        key = dedupe_key(record.abstract)
        if key in seen:
            dropped.append(record)
        else:
            seen.add(key)
            kept.append(record)
    return kept, dropped


def _writer(handle) -> csv.writer:
    return csv.writer(handle, lineterminator="\n", quoting=csv.QUOTE_MINIMAL)


def _record_cells(record: AbstractRecord) -> list[str]:
    return [record.journal, record.title, str(record.year), record.abstract]


def write_corpus(
    records: Sequence[AbstractRecord],
    path: str | Path,
    column_map: Mapping[str, str] | None = None,
) -> None:
    mapping = _map_columns(column_map)
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = _writer(handle)
        writer.writerow([mapping[k] for k in DEFAULT_COLUMNS])
        writer.writerows(_record_cells(r) for r in records)


def write_scored_corpus(
    records: Sequence[AbstractRecord],
    results: Sequence[SentimentResult],
    path: str | Path,
    column_map: Mapping[str, str] | None = None,
) -> None:
    """Write records plus ``sentiment_score`` (6 decimals) and ``sentiment_label``.

    ``results`` may be in any order but must cover exactly the given records.
    """
    by_id = {r.record_id: r for r in results}
    if len(by_id) != len(results) or set(by_id) != {r.record_id for r in records}:
        raise ValueError("records and results are not aligned by record_id")
    mapping = _map_columns(column_map)
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = _writer(handle)
        writer.writerow([*(mapping[k] for k in DEFAULT_COLUMNS), SCORE_COLUMN, LABEL_COLUMN])
        for record in records:
            result = by_id[record.record_id]
            writer.writerow(
                [*_record_cells(record), f"{result.normalized_score:.6f}", str(result.label)]
            )


def load_scored_corpus(
    path: str | Path, column_map: Mapping[str, str] | None = None
) -> tuple[list[AbstractRecord], list[ScoredRow]]:
    """Read back a file produced by :func:`write_scored_corpus`.

    Unlike :func:`load_corpus` this is strict: any invalid row is fatal,
    since a scored file is a pipeline artifact rather than raw input.
    """
    rows, mapping = _read_rows(path, column_map, extra=(SCORE_COLUMN, LABEL_COLUMN))
    records: list[AbstractRecord] = []
    scores: list[ScoredRow] = []
    for row_number, fields in rows:
        if isinstance(fields, RowError):
            raise CorpusError(f"{path}: row {row_number}: {fields.detail}")
        outcome = _validate(row_number, fields, mapping, len(records))
        if isinstance(outcome, RowError):
            raise CorpusError(f"{path}: row {row_number}: {outcome.detail}")
        try:
            score = float(fields[SCORE_COLUMN])
            label = int(fields[LABEL_COLUMN])
        except ValueError:
            raise CorpusError(f"{path}: row {row_number}: malformed score columns") from None
        if not (0.0 <= score <= 1.0 and 1 <= label <= 5):
            raise CorpusError(f"{path}: row {row_number}: score or label out of range")
        records.append(outcome)
        scores.append(ScoredRow(outcome.record_id, label, score))
    return records, scores
