"""
Corpus-level views of per-abstract sentiment: score histogram, yearly
trend and per-journal comparison, each with a chart and a CSV table.
"""

from __future__ import annotations

import csv
import math
import statistics
from collections import defaultdict
from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol

import numpy as np

from .corpus_io import AbstractRecord

__all__ = [
    "Histogram",
    "JournalEntry",
    "JournalStats",
    "TrendEntry",
    "YearlyTrend",
    "build_histogram",
    "journal_stats",
    "read_table",
    "render_charts",
    "write_tables",
    "yearly_trend",
]


class Scored(Protocol):
    record_id: int
    normalized_score: float


@dataclass(frozen=True)
class Histogram:
    bin_edges: tuple[float, ...]
    counts: tuple[int, ...]

    @property
    def total(self) -> int:
        return sum(self.counts)


@dataclass(frozen=True)
class TrendEntry:
    year: int
    mean_score: float | None
    count: int


@dataclass(frozen=True)
class YearlyTrend:
    entries: tuple[TrendEntry, ...]


@dataclass(frozen=True)
class JournalEntry:
    journal: str
    count: int
    mean_score: float
    std_dev: float


@dataclass(frozen=True)
class JournalStats:
    entries: tuple[JournalEntry, ...]


def _mean(values: Sequence[float]) -> float:
    return math.fsum(values) / len(values)


def build_histogram(results: Sequence[Scored], n_bins: int = 20) -> Histogram:
    """Count normalized scores into ``n_bins`` equal-width bins over [0, 1].

    A score falls in bin i when ``edges[i] <= s < edges[i + 1]``; 1.0 goes to
    the last bin.
    """
    # i / n_bins is the double nearest each edge; linspace can land one ulp off
    edges = np.arange(n_bins + 1) / n_bins
    scores = np.array([r.normalized_score for r in results], dtype=float)
    if scores.size and (scores.min() < 0.0 or scores.max() > 1.0):
        raise ValueError("normalized scores must lie in [0, 1]")
    idx = np.clip(np.searchsorted(edges, scores, side="right") - 1, 0, n_bins - 1)
    counts = np.bincount(idx, minlength=n_bins)
    return Histogram(tuple(edges.tolist()), tuple(int(c) for c in counts))


def _join(records: Sequence[AbstractRecord], results: Sequence[Scored]):
    """Pair each result with its record; results without a record are ignored."""
    by_id = {r.record_id: r for r in records}
    return [(by_id[res.record_id], res) for res in results if res.record_id in by_id]


def yearly_trend(
    records: Sequence[AbstractRecord],
    results: Sequence[Scored],
    year_from: int,
    year_to: int,
) -> YearlyTrend:
    if year_from > year_to:
        raise ValueError(f"empty year range {year_from}..{year_to}")
    by_year: dict[int, list[float]] = defaultdict(list)
    for record, result in _join(records, results):
        if year_from <= record.year <= year_to:
            by_year[record.year].append(result.normalized_score)
    entries = []
    for year in range(year_from, year_to + 1):
        scores = by_year.get(year, [])
        entries.append(TrendEntry(year, _mean(scores) if scores else None, len(scores)))
    return YearlyTrend(tuple(entries))


def journal_stats(
    records: Sequence[AbstractRecord], results: Sequence[Scored], top_n: int = 20
) -> JournalStats:
    """Per-journal count, mean and population std dev of normalized scores.

    Journals are ranked by count (descending, ties by name) and cut to ``top_n``.
    """
    if top_n < 1:
        raise ValueError("top_n must be >= 1")
    by_journal: dict[str, list[float]] = defaultdict(list)
    for record, result in _join(records, results):
        by_journal[record.journal].append(result.normalized_score)
    ranked = sorted(by_journal.items(), key=lambda item: (-len(item[1]), item[0]))
    return JournalStats(
        tuple(
            JournalEntry(name, len(scores), _mean(scores), statistics.pstdev(scores))
            for name, scores in ranked[:top_n]
        )
    )


# ---------------------------------------------------------------------------- output

TABLE_COLUMNS = {
    "histogram": ("bin_low", "bin_high", "count"),
    "trend": ("year", "count", "mean_score"),
    "journals": ("journal", "count", "mean_score", "std_dev"),
}


def _fmt(x: float | None) -> str:
    # repr round-trips exactly; absent means become empty cells
    return "" if x is None else repr(float(x))


def _table_rows(histogram: Histogram, trend: YearlyTrend, stats: JournalStats):
    edges = histogram.bin_edges
    return {
        "histogram": [
            (_fmt(edges[i]), _fmt(edges[i + 1]), str(c)) for i, c in enumerate(histogram.counts)
        ],
        "trend": [(str(e.year), str(e.count), _fmt(e.mean_score)) for e in trend.entries],
        "journals": [
            (e.journal, str(e.count), _fmt(e.mean_score), _fmt(e.std_dev)) for e in stats.entries
        ],
    }


def write_tables(
    histogram: Histogram, trend: YearlyTrend, stats: JournalStats, out_dir: str | Path
) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, rows in _table_rows(histogram, trend, stats).items():
        path = out_dir / f"{name}.csv"
        with open(path, "w", encoding="utf-8", newline="") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(TABLE_COLUMNS[name])
            writer.writerows(rows)
        paths.append(path)
    return paths


def read_table(path: str | Path) -> list[dict[str, str]]:
    with open(path, encoding="utf-8", newline="") as handle:
        return list(csv.DictReader(handle))


def _plot_histogram(ax, histogram: Histogram) -> None:
    edges = np.asarray(histogram.bin_edges)
    ax.bar(edges[:-1], histogram.counts, width=np.diff(edges), align="edge", edgecolor="white")
    ax.set_xlim(0, 1)
    ax.set_xlabel("normalized sentiment score")
    ax.set_ylabel("abstracts")
    ax.set_title("Distribution of sentiment scores")


def _plot_trend(ax, trend: YearlyTrend) -> None:
    years = [e.year for e in trend.entries]
    means = [np.nan if e.mean_score is None else e.mean_score for e in trend.entries]
    ax.plot(years, means, marker="o")
    if years:
        ax.set_xticks(years)
        ax.tick_params(axis="x", labelrotation=45)
    ax.set_ylim(0, 1)
    ax.set_xlabel("publication year")
    ax.set_ylabel("mean normalized score")
    ax.set_title("Average sentiment by year")


def _plot_journals(ax, stats: JournalStats) -> None:
    names = [e.journal for e in stats.entries]
    ax.barh(
        range(len(names)),
        [e.mean_score for e in stats.entries],
        xerr=[e.std_dev for e in stats.entries],
        capsize=2,
    )
    ax.set_yticks(range(len(names)), labels=names, fontsize=7)
    ax.invert_yaxis()
    ax.set_xlim(0, 1)
    ax.set_xlabel("mean normalized score (± population std)")
    ax.set_title(f"Top {len(names)} journals by abstract count")


def render_charts(
    histogram: Histogram,
    trend: YearlyTrend,
    stats: JournalStats,
    out_dir: str | Path,
    fmt: str = "png",
) -> list[Path]:
    """Write one chart per view plus the matching CSV tables; returns all paths.

    ``fmt`` is any matplotlib output format (``"png"``, ``"svg"``, ``"pdf"``).
    Empty inputs still produce (empty) charts.
    """
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "abstract-sentiment"

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    # no creation dates, so reruns give identical bytes
    metadata = {"svg": {"Date": None}, "pdf": {"CreationDate": None, "ModDate": None}}.get(fmt)

    paths = []
    for name, plot, height in (
        ("histogram", lambda ax: _plot_histogram(ax, histogram), 4),
        ("trend", lambda ax: _plot_trend(ax, trend), 4),
        ("journals", lambda ax: _plot_journals(ax, stats), 6),
    ):
        fig, ax = plt.subplots(figsize=(7, height))
        plot(ax)
        fig.tight_layout()
        path = out_dir / f"{name}.{fmt}"
        fig.savefig(path, format=fmt, metadata=metadata)
        plt.close(fig)
        paths.append(path)
    return paths + write_tables(histogram, trend, stats, out_dir)
