"""
Loading and cleaning an abstract corpus
=======================================

Rows that fail validation are reported, not silently dropped, and
near-identical abstracts collapse to their first occurrence.
"""

import tempfile
from pathlib import Path

from abstract_sentiment import dedupe, load_corpus

csv_text = """journal,title,year,abstract
Vector Borne Dis,Tick density survey,2014,Tick density rose in  northern regions.
Vector Borne Dis,Tick density survey (reprint),2014,"tick density ROSE in northern regions."
Lyme Review,Untitled,19xx,Persistent fatigue was reported.
Lyme Review,Empty one,2016,
"""
path = Path(tempfile.mkdtemp()) / "corpus.csv"
path.write_text(csv_text, encoding="utf-8")

# other header names can be mapped with column_map={"abstract": "Summary", ...}
records, errors = load_corpus(path)
for err in errors:
    print(f"row {err.row_number}: {err.reason} ({err.detail})")

# whitespace and case differences do not make a new abstract
kept, dropped = dedupe(records)
print(f"{len(records)} valid, {len(kept)} kept, {len(dropped)} duplicate(s)")
print(kept[0].abstract)
