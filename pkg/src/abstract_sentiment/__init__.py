"""Sentiment scoring, analytics and explanation for corpora of journal abstracts."""

from .analytics import build_histogram, journal_stats, render_charts, yearly_trend
from .corpus_io import AbstractRecord, RowError, dedupe, load_corpus, normalize_text, write_scored_corpus
from .explain import AttributionReport, attribute_exact, attribute_sampled, render_attribution_html
from .scoring import (
    ChunkScore,
    LabelDistribution,
    LexiconBackend,
    SentimentResult,
    TransformerBackend,
    aggregate_chunks,
    backend_from_spec,
    chunk_text,
    distribution_for_text,
    load_lexicon,
    score_corpus,
    score_record,
)

__version__ = "0.1.0"

__all__ = [
    "AbstractRecord",
    "AttributionReport",
    "ChunkScore",
    "LabelDistribution",
    "LexiconBackend",
    "RowError",
    "SentimentResult",
    "TransformerBackend",
    "aggregate_chunks",
    "attribute_exact",
    "attribute_sampled",
    "backend_from_spec",
    "build_histogram",
    "chunk_text",
    "dedupe",
    "distribution_for_text",
    "journal_stats",
    "load_corpus",
    "load_lexicon",
    "normalize_text",
    "render_attribution_html",
    "render_charts",
    "score_corpus",
    "score_record",
    "write_scored_corpus",
    "yearly_trend",
]
