from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import pytest

from abstract_sentiment.scoring import LabelDistribution, LexiconBackend, load_lexicon

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def fixtures() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def lexicon() -> dict[str, int]:
    return load_lexicon(FIXTURES / "lexicon.tsv")


@pytest.fixture(scope="session")
def lexicon_backend(lexicon) -> LexiconBackend:
    return LexiconBackend(lexicon)


@dataclass
class StubBackend:
    """Backend whose distribution comes from a caller-supplied function."""

    fn: Callable[[str], LabelDistribution]
    max_tokens: int = 512
    tokens: Callable[[str], int] = field(default=lambda text: len(text.split()))
    shareable: bool = True

    def classify(self, text: str) -> LabelDistribution:
        return self.fn(text)

    def count_tokens(self, text: str) -> int:
        return self.tokens(text)

    def clone(self) -> StubBackend:
        return self


def expected_score(p) -> float:
    return (sum((i + 1) * x for i, x in enumerate(p)) - 1) / 4


def isclose(a: float, b: float, tol: float) -> bool:
    return math.isclose(a, b, rel_tol=0, abs_tol=tol)
