"""
Histogram, yearly trend and journal comparison
==============================================
"""

import tempfile

import numpy as np

from abstract_sentiment import AbstractRecord, build_histogram, journal_stats, render_charts, yearly_trend
from abstract_sentiment.corpus_io import ScoredRow

rng = np.random.default_rng(3)
journals = ["Lyme Review", "Vector Borne Dis", "Pathogen Letters", "Clin Infect"]
records = [
    AbstractRecord(i, str(rng.choice(journals)), f"t{i}", int(rng.integers(2010, 2021)), f"abstract {i}")
    for i in range(300)
]
# a mild downward drift in later years, just to give the trend something to show
scores = [
    float(np.clip(rng.normal(0.55 - 0.01 * (r.year - 2010), 0.15), 0, 1)) for r in records
]
results = [ScoredRow(r.record_id, 3, s) for r, s in zip(records, scores)]

hist = build_histogram(results, n_bins=20)
trend = yearly_trend(records, results, 2010, 2020)
stats = journal_stats(records, results, top_n=20)

print("fullest bin:", hist.bin_edges[int(np.argmax(hist.counts))], "count", max(hist.counts))
for e in trend.entries:
    print(e.year, e.count, round(e.mean_score, 3))
for e in stats.entries:
    print(f"{e.journal:18s} n={e.count:3d} mean={e.mean_score:.3f} sd={e.std_dev:.3f}")

out = tempfile.mkdtemp()
for path in render_charts(hist, trend, stats, out, fmt="svg"):
    print("wrote", path)
