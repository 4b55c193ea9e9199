"""
Five-star sentiment scoring with chunked inference.

A backend maps text to a probability distribution over star labels 1-5.
Texts longer than the backend's token budget are split greedily at word
boundaries and the per-chunk distributions are averaged with token-count
weights.
"""

from __future__ import annotations

import logging
import math
import re
import threading
import warnings
from collections.abc import Mapping, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Protocol, runtime_checkable

import numpy as np

from .corpus_io import AbstractRecord, normalize_text

__all__ = [
    "BackendSpecError",
    "ChunkScore",
    "ChunkTruncationWarning",
    "LabelDistribution",
    "LexiconBackend",
    "RecordFailure",
    "ScoringBackend",
    "ScoringError",
    "SentimentResult",
    "TransformerBackend",
    "aggregate_chunks",
    "backend_from_spec",
    "chunk_text",
    "distribution_for_text",
    "lexicon_classify",
    "load_lexicon",
    "score_corpus",
    "score_record",
]

logger = logging.getLogger(__name__)

N_STARS = 5
DELIMITER_TOKENS = 2  # sequence start/end markers added by transformer tokenizers


class ScoringError(Exception):
    pass


class BackendSpecError(ValueError):
    """A backend spec string could not be resolved to a backend."""


class ChunkTruncationWarning(UserWarning):
    pass


@dataclass(frozen=True)
class LabelDistribution:
    """Probabilities over star labels; ``p[i]`` belongs to star ``i + 1``."""

    p: tuple[float, ...]

    def __post_init__(self) -> None:
        p = tuple(float(x) for x in self.p)
        if len(p) != N_STARS:
            raise ValueError(f"expected {N_STARS} probabilities, got {len(p)}")
        if any(not (0.0 <= x <= 1.0) for x in p):
            raise ValueError(f"probabilities must lie in [0, 1]: {p}")
        if abs(math.fsum(p) - 1.0) > 1e-9:
            raise ValueError(f"probabilities must sum to 1: {p}")
        object.__setattr__(self, "p", p)

    @classmethod
    def one_hot(cls, star: int) -> LabelDistribution:
        if not 1 <= star <= N_STARS:
            raise ValueError(f"star must be in 1..{N_STARS}")
        return cls(tuple(1.0 if i == star - 1 else 0.0 for i in range(N_STARS)))

    @property
    def label(self) -> int:
        # max() returns the first maximal element, so ties go to the lower star
        return max(range(N_STARS), key=lambda i: self.p[i]) + 1

    @property
    def confidence(self) -> float:
        return self.p[self.label - 1]

    @property
    def expected_stars(self) -> float:
        return math.fsum((i + 1) * x for i, x in enumerate(self.p))

    @property
    def normalized_score(self) -> float:
        # clamp guards against fsum landing a hair outside [1, 5]
        return min(1.0, max(0.0, (self.expected_stars - 1.0) / (N_STARS - 1)))


@dataclass(frozen=True)
class ChunkScore:
    chunk_index: int
    token_count: int
    distribution: LabelDistribution


@dataclass(frozen=True)
class SentimentResult:
    record_id: int
    label: int
    confidence: float
    normalized_score: float
    chunk_scores: tuple[ChunkScore, ...] = ()

    @classmethod
    def from_distribution(
        cls, record_id: int, dist: LabelDistribution, chunk_scores: Sequence[ChunkScore] = ()
    ) -> SentimentResult:
        return cls(record_id, dist.label, dist.confidence, dist.normalized_score, tuple(chunk_scores))


@dataclass(frozen=True)
class RecordFailure:
    record_id: int
    reason: str


@runtime_checkable
class ScoringBackend(Protocol):
    """What the scorer needs from a classifier.

    ``shareable`` says whether one instance may be used from several threads
    at once; if not, :func:`score_corpus` asks ``clone()`` for a private
    instance per worker.
    """

    max_tokens: int
    shareable: bool

    def classify(self, text: str) -> LabelDistribution: ...

    def count_tokens(self, text: str) -> int: ...

    def clone(self) -> ScoringBackend: ...


# --------------------------------------------------------------------------- lexicon

_WORD = re.compile(r"\w+(?:['’-]\w+)*")


def _words(text: str) -> list[str]:
    return _WORD.findall(text.casefold())


def lexicon_classify(text: str, lexicon: Mapping[str, int]) -> LabelDistribution:
    """One-hot distribution at the star implied by lexicon hit polarity.

    With P positive and N negative hits, polarity r = (P - N) / max(1, P + N)
    and the star is 3 + 2r rounded half away from zero. Arithmetic is exact.
    """
    if not lexicon:
        raise ValueError("lexicon is empty")
    pos = neg = 0
    for word in _words(text):
        polarity = lexicon.get(word)
        if polarity is None:
            continue
        if polarity > 0:
            pos += 1
        elif polarity < 0:
            neg += 1
    stars = 3 + Fraction(2 * (pos - neg), max(1, pos + neg))
    star = math.floor(stars + Fraction(1, 2))  # stars >= 1, so floor(x + 1/2) rounds away from zero
    return LabelDistribution.one_hot(min(N_STARS, max(1, star)))


def load_lexicon(path: str | Path) -> dict[str, int]:
    """Read ``word<TAB>+1|-1`` lines; blank lines and ``#`` comments are skipped."""
    lexicon: dict[str, int] = {}
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.rstrip("\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            try:
                word, polarity = line.split("\t")
            except ValueError:
                raise ValueError(f"{path}:{lineno}: expected 'word<TAB>polarity'") from None
            if polarity.strip() not in ("+1", "-1", "1"):
                raise ValueError(f"{path}:{lineno}: polarity must be +1 or -1")
            lexicon[word.strip().casefold()] = int(polarity)
    if not lexicon:
        raise ValueError(f"{path}: lexicon is empty")
    return lexicon


@dataclass
class LexiconBackend:
    """Deterministic word-polarity classifier; tokens are whitespace-separated words."""

    lexicon: Mapping[str, int]
    max_tokens: int = 512
    shareable: bool = True

    def __post_init__(self) -> None:
        if not self.lexicon:
            raise ValueError("lexicon is empty")
        self.lexicon = {k.casefold(): v for k, v in self.lexicon.items()}

    @classmethod
    def from_file(cls, path: str | Path, max_tokens: int = 512) -> LexiconBackend:
        return cls(load_lexicon(path), max_tokens=max_tokens)

    def classify(self, text: str) -> LabelDistribution:
        return lexicon_classify(text, self.lexicon)

    def count_tokens(self, text: str) -> int:
        return len(text.split())

    def clone(self) -> LexiconBackend:
        return self


# ----------------------------------------------------------------------- transformer


@dataclass
class TransformerBackend:
    """Hugging Face sequence classifier with five star-rating outputs.

    The model is loaded lazily on first use; ``transformers`` and ``torch``
    are only imported then.
    """

    model_id: str = "nlptown/bert-base-multilingual-uncased-sentiment"
    max_tokens: int = 512
    device: str = "cpu"
    shareable: bool = False
    _model: object = field(default=None, init=False, repr=False)
    _tokenizer: object = field(default=None, init=False, repr=False)

    def _load(self) -> None:
        if self._model is not None:
            return
        from transformers import AutoModelForSequenceClassification, AutoTokenizer

        self._tokenizer = AutoTokenizer.from_pretrained(self.model_id)
        self._model = AutoModelForSequenceClassification.from_pretrained(self.model_id)
        self._model.to(self.device).eval()
        n_labels = self._model.config.num_labels
        if n_labels != N_STARS:
            raise ScoringError(f"{self.model_id} has {n_labels} labels, expected {N_STARS}")

    def count_tokens(self, text: str) -> int:
        if not text:
            return 0
        self._load()
        return len(self._tokenizer(text, add_special_tokens=False)["input_ids"])

    def classify(self, text: str) -> LabelDistribution:
        import torch

        self._load()
        enc = self._tokenizer(
            text, truncation=True, max_length=self.max_tokens, return_tensors="pt"
        ).to(self.device)
        with torch.no_grad():
            logits = self._model(**enc).logits[0].double()
        probs = torch.softmax(logits, dim=-1).cpu().numpy()
        probs = probs / probs.sum()
        return LabelDistribution(tuple(probs.tolist()))

    def clone(self) -> TransformerBackend:
        return TransformerBackend(self.model_id, self.max_tokens, self.device)


def backend_from_spec(spec: str, max_tokens: int = 512) -> ScoringBackend:
    """Build a backend from ``"lexicon:<file>"`` or ``"transformer:<model-id>"``."""
    kind, sep, arg = spec.partition(":")
    if not sep or not arg:
        raise BackendSpecError(f"backend spec must look like 'kind:argument', got {spec!r}")
    if kind == "lexicon":
        try:
            return LexiconBackend.from_file(arg, max_tokens=max_tokens)
        except (OSError, ValueError) as exc:
            raise BackendSpecError(f"cannot load lexicon {arg!r}: {exc}") from exc
    if kind == "transformer":
        return TransformerBackend(arg, max_tokens=max_tokens)
    raise BackendSpecError(f"unknown backend kind {kind!r}")


# -------------------------------------------------------------------------- chunking


def _max_fitting_prefix(n: int, fits) -> int:
    """Largest k in [0, n] with fits(k), assuming fits is monotone and fits(0)."""
    lo, hi = 0, n
    while lo < hi:
        mid = (lo + hi + 1) // 2
        if fits(mid):
            lo = mid
        else:
            hi = mid - 1
    return lo


def chunk_text(text: str, backend: ScoringBackend, budget: int | None = None) -> list[str]:
    """Split normalized text into word-boundary chunks that fit the token budget.

    The usable budget is ``(budget or backend.max_tokens) - 2``. Each chunk
    takes the longest prefix of the remaining words whose token count fits.
    A single word that is too long on its own is cut down to fit, with a
    :class:`ChunkTruncationWarning`.
    """
    limit = (budget if budget is not None else backend.max_tokens) - DELIMITER_TOKENS
    if limit < 1:
        raise ValueError(f"token budget leaves no room for text: {limit + DELIMITER_TOKENS}")
    words = normalize_text(text).split()
    if not words:
        raise ValueError("text is empty after normalization")

    chunks: list[str] = []
    start = 0
    while start < len(words):
        rest = words[start:]
        k = _max_fitting_prefix(
            len(rest), lambda m: m == 0 or backend.count_tokens(" ".join(rest[:m])) <= limit
        )
        if k == 0:
            word = rest[0]
            cut = _max_fitting_prefix(
                len(word), lambda m: backend.count_tokens(word[:m]) <= limit
            )
            warnings.warn(
                f"word of {backend.count_tokens(word)} tokens truncated to fit budget {limit}",
                ChunkTruncationWarning,
                stacklevel=2,
            )
            chunks.append(word[: max(cut, 1)])
            start += 1
        else:
            chunks.append(" ".join(rest[:k]))
            start += k
    return chunks


def aggregate_chunks(chunk_scores: Sequence[ChunkScore]) -> LabelDistribution:
    """Token-count-weighted mean of the chunk distributions."""
    if not chunk_scores:
        raise ValueError("cannot aggregate an empty list of chunks")
    if len(chunk_scores) == 1:
        return chunk_scores[0].distribution
    weights = np.array([c.token_count for c in chunk_scores], dtype=float)
    probs = np.array([c.distribution.p for c in chunk_scores], dtype=float)
    mixed = weights @ probs / weights.sum()
    return LabelDistribution(tuple(np.clip(mixed, 0.0, 1.0).tolist()))


def _chunk_scores(text: str, backend: ScoringBackend) -> list[ChunkScore]:
    scores = []
    for i, chunk in enumerate(chunk_text(text, backend)):
        scores.append(ChunkScore(i, max(1, backend.count_tokens(chunk)), backend.classify(chunk)))
    return scores


def distribution_for_text(text: str, backend: ScoringBackend) -> LabelDistribution:
    """Aggregated distribution for arbitrary-length text (chunked when needed)."""
    return aggregate_chunks(_chunk_scores(text, backend))


def score_record(record: AbstractRecord, backend: ScoringBackend) -> SentimentResult:
    """Score one abstract.

    Raises:
        ScoringError: chunking or the backend failed; the message carries the cause.
    """
    try:
        chunks = _chunk_scores(record.abstract, backend)
    except Exception as exc:
        raise ScoringError(f"record {record.record_id}: {type(exc).__name__}: {exc}") from exc
    return SentimentResult.from_distribution(record.record_id, aggregate_chunks(chunks), chunks)


def score_corpus(
    records: Sequence[AbstractRecord], backend: ScoringBackend, parallelism: int = 1
) -> tuple[list[SentimentResult], list[RecordFailure]]:
    """Score every record, isolating per-record failures.

    Returns results and failures, each ordered by record id. Output does not
    depend on ``parallelism``.
    """
    if parallelism < 1:
        raise ValueError("parallelism must be >= 1")

    local = threading.local()

    def worker_backend() -> ScoringBackend:
        if backend.shareable or parallelism == 1:
            return backend
        if not hasattr(local, "backend"):
            local.backend = backend.clone()
        return local.backend

    def run(record: AbstractRecord) -> SentimentResult | RecordFailure:
        try:
            return score_record(record, worker_backend())
        except ScoringError as exc:
            return RecordFailure(record.record_id, str(exc))

    if parallelism == 1:
        outcomes = [run(r) for r in records]
    else:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            outcomes = list(pool.map(run, records))

    results = sorted((o for o in outcomes if isinstance(o, SentimentResult)), key=lambda r: r.record_id)
    failures = sorted((o for o in outcomes if isinstance(o, RecordFailure)), key=lambda f: f.record_id)
    if failures:
        logger.warning("%d of %d records failed to score", len(failures), len(records))
    return results, failures
