"""
Scoring abstracts, long ones included
=====================================

The shipped word-polarity lexicon stands in for the transformer model.
Text longer than the token budget is split at word boundaries and the
per-chunk distributions are averaged, weighted by token count.
"""

from abstract_sentiment import LexiconBackend, chunk_text, distribution_for_text, load_lexicon
from abstract_sentiment.config import builtin_lexicon_path

backend = LexiconBackend(load_lexicon(builtin_lexicon_path()), max_tokens=16)

short = "Prompt treatment was effective and outcomes improved."
dist = distribution_for_text(short, backend)
print("label", dist.label, "score", round(dist.normalized_score, 3))

# a budget of 16 leaves 14 words per chunk once delimiters are reserved
long_text = " ".join([short] * 3 + ["Chronic pain and severe fatigue persisted in many patients."] * 2)
for chunk in chunk_text(long_text, backend):
    print(len(chunk.split()), "|", chunk[:60])

dist = distribution_for_text(long_text, backend)
print("aggregated p:", [round(x, 3) for x in dist.p])
print("label", dist.label, "score", round(dist.normalized_score, 3))
