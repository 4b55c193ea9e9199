"""
Word-level Shapley attributions for a single abstract's sentiment.

Players are the whitespace-separated words of the normalized text. A
coalition is scored by classifying the text that keeps only its words
(everything else removed), so every backend that accepts shorter text
works unchanged.
"""

from __future__ import annotations

import html
import itertools
import json
import math
from collections.abc import Callable
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Literal

import numpy as np

from .corpus_io import normalize_text
from .scoring import N_STARS, ScoringBackend, distribution_for_text

__all__ = [
    "AttributionReport",
    "MAX_EXACT_WORDS",
    "TokenAttribution",
    "TooManyWordsError",
    "attribute_exact",
    "attribute_sampled",
    "render_attribution_html",
    "value_function",
    "write_report_json",
]

MAX_EXACT_WORDS = 12
NEUTRAL_SCORE = 0.5  # star 3
UNIFORM_PROBABILITY = 1.0 / N_STARS

ExplainedQuantity = Literal["normalized_score", "probability_of_label"]


class TooManyWordsError(ValueError):
    pass


@dataclass(frozen=True)
class TokenAttribution:
    token: str
    value: float


@dataclass(frozen=True)
class AttributionReport:
    record_id: int
    explained_quantity: ExplainedQuantity
    base_value: float
    attributions: tuple[TokenAttribution, ...]
    model_output: float
    method: Literal["exact_shapley", "sampled_shapley"]
    sample_count: int
    label: int
    # per-token standard error of the sampled estimate; empty for exact
    standard_errors: tuple[float, ...] = field(default=())

    @property
    def additivity_gap(self) -> float:
        return self.base_value + math.fsum(a.value for a in self.attributions) - self.model_output

    def to_dict(self) -> dict:
        out = asdict(self)
        out["additivity_gap"] = self.additivity_gap
        return out

    @classmethod
    def from_dict(cls, data: dict) -> AttributionReport:
        data = {k: v for k, v in data.items() if k != "additivity_gap"}
        data["attributions"] = tuple(TokenAttribution(**a) for a in data["attributions"])
        data["standard_errors"] = tuple(data.get("standard_errors", ()))
        return cls(**data)


def value_function(
    words: list[str],
    backend: ScoringBackend,
    explained_quantity: ExplainedQuantity,
    label: int | None = None,
) -> tuple[Callable[[int], float], int]:
    """Coalition value over a bitmask of kept words, and the explained label.

    ``label`` defaults to the argmax label of the full text. An empty
    coalition is worth the neutral score 0.5, or probability 1/5.
    """
    if explained_quantity not in ("normalized_score", "probability_of_label"):
        raise ValueError(f"unknown explained quantity {explained_quantity!r}")
    if label is None:
        label = distribution_for_text(" ".join(words), backend).label
    cache: dict[int, float] = {}

    def value(mask: int) -> float:
        hit = cache.get(mask)
        if hit is not None:
            return hit
        kept = " ".join(w for i, w in enumerate(words) if mask >> i & 1)
        if not kept:
            v = NEUTRAL_SCORE if explained_quantity == "normalized_score" else UNIFORM_PROBABILITY
        else:
            dist = distribution_for_text(kept, backend)
            v = dist.normalized_score if explained_quantity == "normalized_score" else dist.p[label - 1]
        cache[mask] = v
        return v

    return value, label


def _split(text: str) -> list[str]:
    words = normalize_text(text).split()
    if not words:
        raise ValueError("text is empty after normalization")
    return words


def attribute_exact(
    text: str,
    backend: ScoringBackend,
    explained_quantity: ExplainedQuantity = "normalized_score",
    *,
    record_id: int = -1,
    jobs: int = 1,
) -> AttributionReport:
    """Exact Shapley values by evaluating all 2^n word coalitions (n <= 12)."""
    words = _split(text)
    n = len(words)
    if n > MAX_EXACT_WORDS:
        raise TooManyWordsError(f"{n} words; exact mode supports at most {MAX_EXACT_WORDS}")
    value, label = value_function(words, backend, explained_quantity)

    masks = np.arange(1 << n)
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            values = np.array(list(pool.map(value, masks.tolist())))
    else:
        values = np.array([value(m) for m in masks.tolist()])

    sizes = np.array([bin(m).count("1") for m in masks.tolist()])
    # weight of a coalition of size s that excludes the player: s!(n-s-1)!/n!
    weight = np.array(
        [math.factorial(s) * math.factorial(n - s - 1) / math.factorial(n) for s in range(n)]
    )
    phi = np.empty(n)
    for i in range(n):
        without = masks[(masks >> i & 1) == 0]
        phi[i] = np.sum(weight[sizes[without]] * (values[without | (1 << i)] - values[without]))

    return AttributionReport(
        record_id=record_id,
        explained_quantity=explained_quantity,
        base_value=float(values[0]),
        attributions=tuple(TokenAttribution(w, float(v)) for w, v in zip(words, phi)),
        model_output=float(values[-1]),
        method="exact_shapley",
        sample_count=0,
        label=label,
    )


def attribute_sampled(
    text: str,
    backend: ScoringBackend,
    explained_quantity: ExplainedQuantity = "normalized_score",
    samples: int = 500,
    seed: int = 0,
    *,
    record_id: int = -1,
    all_permutations: bool = False,
    jobs: int = 1,
) -> AttributionReport:
    """Permutation-sampling Shapley estimate.

    Each sample walks one random ordering of the words, crediting every word
    with the change in value when it joins. Orderings are drawn up front from
    ``seed``, so the result does not depend on ``jobs``. With
    ``all_permutations`` every ordering is walked once instead (``samples``
    must then equal n!), which reproduces the exact values.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    words = _split(text)
    n = len(words)
    if all_permutations:
        if samples != math.factorial(n):
            raise ValueError(f"all_permutations needs samples == {n}! == {math.factorial(n)}")
        orders = list(itertools.permutations(range(n)))
    else:
        rng = np.random.default_rng(seed)
        orders = [tuple(rng.permutation(n).tolist()) for _ in range(samples)]
    value, label = value_function(words, backend, explained_quantity)

    def walk(order: tuple[int, ...]) -> np.ndarray:
        gains = np.empty(n)
        mask, prev = 0, value(0)
        for j in order:
            mask |= 1 << j
            cur = value(mask)
            gains[j] = cur - prev
            prev = cur
        return gains

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            gains = np.array(list(pool.map(walk, orders)))
    else:
        gains = np.array([walk(o) for o in orders])

    phi = gains.mean(axis=0)
    # a single sample carries no spread information
    stderr = gains.std(axis=0, ddof=1) / math.sqrt(samples) if samples > 1 else ()
    return AttributionReport(
        record_id=record_id,
        explained_quantity=explained_quantity,
        base_value=value(0),
        attributions=tuple(TokenAttribution(w, float(v)) for w, v in zip(words, phi)),
        model_output=value((1 << n) - 1),
        method="sampled_shapley",
        sample_count=samples,
        label=label,
        standard_errors=tuple(float(s) for s in stderr),
    )


def write_report_json(report: AttributionReport, path: str | Path) -> None:
    Path(path).write_text(json.dumps(report.to_dict(), indent=2) + "\n", encoding="utf-8")


# ------------------------------------------------------------------------------ html

POSITIVE_RGB = (255, 0, 81)
NEGATIVE_RGB = (0, 139, 251)

_PAGE = """<!DOCTYPE html>
<html lang="en">
<head>
<meta charset="utf-8">
<title>Attribution for record {record_id}</title>
</head>
<body style="font-family: sans-serif; max-width: 56em; margin: 2em auto; line-height: 1.9;">
<p style="color: #555; font-size: 0.9em;">{caption}</p>
<p class="legend" style="font-size: 0.85em;">
<span style="background: rgba({pos}, 0.8); padding: 0 4px;">raises the output</span>
<span style="background: rgba({neg}, 0.8); padding: 0 4px;">lowers the output</span>
</p>
<div class="text">
{tokens}
</div>
</body>
</html>
"""


def render_attribution_html(report: AttributionReport, text: str, out_path: str | Path) -> None:
    """Write a self-contained page highlighting each word by its attribution.

    Positive values are red and negative values blue, with opacity
    |value| / max |value|; if every value is zero nothing is highlighted.
    """
    tokens = [a.token for a in report.attributions]
    if normalize_text(text).split() != tokens:
        raise ValueError("report tokens do not match the given text")
    scale = max((abs(a.value) for a in report.attributions), default=0.0)

    spans = []
    for a in report.attributions:
        alpha = abs(a.value) / scale if scale > 0 else 0.0
        if alpha > 0:
            rgb = POSITIVE_RGB if a.value > 0 else NEGATIVE_RGB
            style = f"background: rgba({', '.join(map(str, rgb))}, {alpha:.4f}); "
        else:
            style = ""
        spans.append(
            f'<span class="token" title="{a.value:+.6f}" '
            f'style="{style}padding: 1px 2px; border-radius: 3px;">{html.escape(a.token)}</span>'
        )

    if report.method == "exact_shapley":
        method = "exact Shapley values"
    else:
        method = f"sampled Shapley values ({report.sample_count} permutations)"
    quantity = (
        "normalized sentiment score"
        if report.explained_quantity == "normalized_score"
        else f"probability of star {report.label}"
    )
    caption = (
        f"Explained quantity: {quantity}. Base value {report.base_value:.4f}, "
        f"model output {report.model_output:.4f}, predicted star {report.label}; {method}."
    )
    page = _PAGE.format(
        record_id=report.record_id,
        caption=html.escape(caption),
        pos=", ".join(map(str, POSITIVE_RGB)),
        neg=", ".join(map(str, NEGATIVE_RGB)),
        tokens="\n".join(spans),
    )
    Path(out_path).write_text(page, encoding="utf-8")
