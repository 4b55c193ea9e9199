"""
Cross-checking labels against an LLM
====================================

Runs entirely offline: responses come from a pre-filled cache, the same
way the ``validate`` command works in fixture mode. Set ``mode="live"``
plus an endpoint and token to query a real chat-completions service;
every answer is then cached for the next run.
"""

from abstract_sentiment import AbstractRecord
from abstract_sentiment.corpus_io import ScoredRow
from abstract_sentiment.llm_validate import (
    SENTIMENT_TEMPLATE,
    LlmClient,
    ResponseCache,
    build_prompt,
    cross_validate,
)

abstracts = [
    "Persistent symptoms remain poorly understood.",
    "Early treatment was highly effective.",
    "We measured seroprevalence in two regions.",
    "Chronic fatigue severely limited daily life.",
]
records = [AbstractRecord(i, "J", f"t{i}", 2015, a) for i, a in enumerate(abstracts)]
model_labels = [ScoredRow(0, 2, 0.25), ScoredRow(1, 5, 1.0), ScoredRow(2, 3, 0.5), ScoredRow(3, 1, 0.0)]

# LLMs answer in many phrasings; the parser copes with all of these
answers = ["I would rate this a 2 out of 5.", "Rating: 4/5", "3", "Sentiment: 1 (very negative)"]
cache = ResponseCache()
for r, answer in zip(records, answers):
    cache.put("gpt-3.5-turbo", build_prompt(SENTIMENT_TEMPLATE, r.abstract), answer)

client = LlmClient(model="gpt-3.5-turbo", cache=cache, mode="fixture")
stats = cross_validate(records, model_labels, client, sample_size=4, seed=0)
print("exact match", stats.exact_match_rate, "MAE", stats.mean_absolute_star_error)
for row in stats.confusion:
    print(row)
