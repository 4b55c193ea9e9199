"""
Which words drive a prediction?
===============================

Exact Shapley values for short text, a permutation-sampled estimate for
longer text, and the red/blue highlighted HTML view.
"""

import tempfile
from pathlib import Path

from abstract_sentiment import LexiconBackend, attribute_exact, attribute_sampled, load_lexicon
from abstract_sentiment.config import builtin_lexicon_path
from abstract_sentiment.explain import render_attribution_html

backend = LexiconBackend(load_lexicon(builtin_lexicon_path()))
text = "Prompt treatment can prevent chronic pain in most patients"

report = attribute_exact(text, backend)
for a in report.attributions:
    print(f"{a.token:10s} {a.value:+.4f}")
# efficiency: base value plus attributions is the model output
print("base", report.base_value, "output", report.model_output, "gap", report.additivity_gap)

# the sampled estimate carries a standard error per word
sampled = attribute_sampled(text, backend, samples=2000, seed=7)
for a, se in zip(sampled.attributions, sampled.standard_errors):
    print(f"{a.token:10s} {a.value:+.4f} ± {se:.4f}")

out = Path(tempfile.mkdtemp()) / "attribution.html"
render_attribution_html(report, text, out)
print("open", out)
