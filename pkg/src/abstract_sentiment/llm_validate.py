"""
Cross-checking star labels against a chat-completion language model.

Every completion goes through a content-addressed response cache (an
append-only JSON-lines file). In ``fixture`` mode the cache is the only
source of responses and a miss is an error, which keeps the whole module
usable offline and reproducible.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import threading
import time
from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Literal, Protocol

import httpx
import numpy as np

from .corpus_io import AbstractRecord

__all__ = [
    "AgreementStats",
    "DEFAULT_TEMPLATES",
    "FixtureMissError",
    "LlmAuthError",
    "LlmClient",
    "LlmError",
    "LlmVerdict",
    "PromptTemplate",
    "RatingParseError",
    "ResponseCache",
    "SENTIMENT_TEMPLATE",
    "SUBJECTIVITY_TEMPLATE",
    "build_prompt",
    "cache_key",
    "cross_validate",
    "parse_star_rating",
    "parse_subjective_phrases",
    "query_llm",
    "rate_record",
    "subjectivity_of_record",
]

logger = logging.getLogger(__name__)

PLACEHOLDER = "{abstract}"
TOKEN_ENV_VAR = "ABSTRACT_SENTIMENT_LLM_TOKEN"

PromptName = Literal["sentiment_1_to_5", "subjectivity_phrases"]


class LlmError(Exception):
    pass


class LlmAuthError(LlmError):
    """Missing or rejected credentials. Never retried."""


class FixtureMissError(LlmError):
    pass


class RatingParseError(ValueError):
    def __init__(self, response: str):
        super().__init__(f"no 1-5 rating found in response: {response[:200]!r}")
        self.response = response


@dataclass(frozen=True)
class PromptTemplate:
    name: PromptName
    template_text: str

    def __post_init__(self) -> None:
        count = self.template_text.count(PLACEHOLDER)
        if count != 1:
            raise ValueError(f"template {self.name!r} must contain {PLACEHOLDER} exactly once, found {count}")


# Reconstructed prompts; override through the pipeline config when needed.
SENTIMENT_TEMPLATE = PromptTemplate(
    "sentiment_1_to_5",
    "Classify the sentiment of the following scientific abstract on a scale from 1 to 5, "
    "where 1 is very negative, 3 is neutral and 5 is very positive. "
    "State the rating as a single number and briefly explain it.\n\n"
    "Abstract:\n{abstract}",
)
SUBJECTIVITY_TEMPLATE = PromptTemplate(
    "subjectivity_phrases",
    "Identify the specific words and phrases in the following scientific abstract that show "
    "a higher level of subjectivity. List each one in double quotes on its own line.\n\n"
    "Abstract:\n{abstract}",
)
DEFAULT_TEMPLATES = {t.name: t for t in (SENTIMENT_TEMPLATE, SUBJECTIVITY_TEMPLATE)}


def build_prompt(template: PromptTemplate, abstract: str) -> str:
    if not abstract:
        raise ValueError("abstract is empty")
    before, after = template.template_text.split(PLACEHOLDER)
    return before + abstract + after


# ----------------------------------------------------------------------------- cache


def cache_key(model: str, prompt: str) -> str:
    payload = json.dumps([model, prompt], ensure_ascii=False).encode("utf-8")
    return hashlib.sha256(payload).hexdigest()


class ResponseCache:
    """JSON-lines response store keyed by :func:`cache_key`; later lines win.

    Reads are lock-free dictionary lookups; appends are serialized.
    """

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path is not None else None
        self._entries: dict[str, str] = {}
        self._lock = threading.Lock()
        if self.path is not None and self.path.exists():
            with open(self.path, encoding="utf-8") as handle:
                for lineno, line in enumerate(handle, start=1):
                    if not line.strip():
                        continue
                    try:
                        entry = json.loads(line)
                        self._entries[entry["key_hash"]] = entry["response"]
                    except (json.JSONDecodeError, KeyError):
                        logger.warning("%s:%d: skipping malformed cache line", self.path, lineno)

    def __len__(self) -> int:
        return len(self._entries)

    def get(self, model: str, prompt: str) -> str | None:
        return self._entries.get(cache_key(model, prompt))

    def put(self, model: str, prompt: str, response: str) -> None:
        key = cache_key(model, prompt)
        entry = {
            "key_hash": key,
            "model": model,
            "prompt": prompt,
            "response": response,
            "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        }
        with self._lock:
            self._entries[key] = response
            if self.path is not None:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                with open(self.path, "a", encoding="utf-8") as handle:
                    handle.write(json.dumps(entry, ensure_ascii=False) + "\n")


# ---------------------------------------------------------------------------- client


@dataclass
class LlmClient:
    """Chat-completion client with caching and bounded retries.

    ``mode="live"`` needs a token (argument or the environment variable
    named by ``token_env``); a missing token raises :class:`LlmAuthError`
    at construction, before any request. ``mode="fixture"`` never touches
    the network.
    """

    model: str
    cache: ResponseCache = field(default_factory=ResponseCache)
    mode: Literal["live", "fixture"] = "fixture"
    endpoint: str = "https://api.openai.com/v1"
    token: str | None = None
    token_env: str = TOKEN_ENV_VAR
    max_attempts: int = 4
    backoff: float = 1.0
    timeout: float = 60.0
    http: httpx.Client | None = None
    sleep: Callable[[float], None] = time.sleep
    network_calls: int = field(default=0, init=False)

    def __post_init__(self) -> None:
        if self.mode not in ("live", "fixture"):
            raise ValueError(f"unknown LLM mode {self.mode!r}")
        if self.mode == "live":
            self.token = self.token or os.environ.get(self.token_env)
            if not self.token:
                raise LlmAuthError(f"live mode needs an API token in ${self.token_env}")
        self._count_lock = threading.Lock()

    def _post(self, prompt: str) -> str:
        with self._count_lock:
            self.network_calls += 1
        http = self.http or httpx.Client(timeout=self.timeout)
        try:
            reply = http.post(
                self.endpoint.rstrip("/") + "/chat/completions",
                headers={"Authorization": f"Bearer {self.token}"},
                json={
                    "model": self.model,
                    "messages": [{"role": "user", "content": prompt}],
                    "temperature": 0,
                },
            )
        finally:
            if self.http is None:
                http.close()
        if reply.status_code in (401, 403):
            raise LlmAuthError(f"endpoint rejected credentials (HTTP {reply.status_code})")
        reply.raise_for_status()
        try:
            return reply.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise LlmError(f"unexpected response body: {reply.text[:200]!r}") from exc

    def complete(self, prompt: str) -> tuple[str, bool]:
        """Return (response, from_cache)."""
        cached = self.cache.get(self.model, prompt)
        if cached is not None:
            return cached, True
        if self.mode == "fixture":
            raise FixtureMissError(f"no fixture response for prompt key {cache_key(self.model, prompt)}")

        for attempt in range(1, self.max_attempts + 1):
            try:
                response = self._post(prompt)
                break
            except httpx.HTTPStatusError as exc:
                status = exc.response.status_code
                if status != 429 and status < 500 or attempt == self.max_attempts:
                    raise LlmError(f"request failed: HTTP {status}") from exc
                error = exc
            except httpx.TransportError as exc:
                if attempt == self.max_attempts:
                    raise LlmError(f"request failed after {attempt} attempts: {exc}") from exc
                error = exc
            delay = self.backoff * 2 ** (attempt - 1)
            logger.info("LLM request attempt %d failed (%s); retrying in %.1fs", attempt, error, delay)
            self.sleep(delay)
        self.cache.put(self.model, prompt, response)
        return response, False


def query_llm(client: LlmClient, prompt: str) -> str:
    return client.complete(prompt)[0]


# --------------------------------------------------------------------------- parsing

_RANGE = re.compile(r"\b[1-5]\s*(?:-|–|—|to)\s*[1-5]\b", re.IGNORECASE)
_OUT_OF = re.compile(r"(?<![\w.])([1-5])(?:\.0)?\s*(?:/|out\s+of)\s*5(?!\w|\.\d)", re.IGNORECASE)
_STANDALONE = re.compile(r"(?<![\w.,/-])([1-5])(?![\w%/]|[.,]\d)")
_CUE = re.compile(r"\b(?:rat(?:e|ed|es|ing)|scor(?:e|ed|es|ing)|classif\w*)\b", re.IGNORECASE)


def _blank(text: str, spans) -> str:
    chars = list(text)
    for start, end in spans:
        chars[start:end] = " " * (end - start)
    return "".join(chars)


def parse_star_rating(response: str) -> int:
    """Extract a 1-5 star rating from free-text model output.

    Scale descriptions such as "1 to 5" are ignored. The rating is the first
    standalone 1-5 after the first rating cue (rate, rating, score,
    classify, ...); failing that, the first "X out of 5" or "X/5"; failing
    that, the first standalone 1-5 anywhere.

    Raises:
        RatingParseError: nothing rating-like was found.
    """
    text = _blank(response, (m.span() for m in _RANGE.finditer(response)))
    candidates: list[tuple[int, int]] = []  # (position, rating)
    out_of = [(m.start(), int(m.group(1))) for m in _OUT_OF.finditer(text)]
    candidates += out_of
    rest = _blank(text, (m.span() for m in _OUT_OF.finditer(text)))
    candidates += [(m.start(), int(m.group(1))) for m in _STANDALONE.finditer(rest)]
    candidates.sort()

    cue = _CUE.search(text)
    if cue is not None:
        after = [rating for pos, rating in candidates if pos >= cue.end()]
        if after:
            return after[0]
    if out_of:
        return out_of[0][1]
    if candidates:
        return candidates[0][1]
    raise RatingParseError(response)


_QUOTED = re.compile(r'"([^"\n]+)"|“([^”\n]+)”|‘([^’\n]+)’|(?<!\w)\'([^\'\n]+)\'(?!\w)')
_LIST_ITEM = re.compile(r"^\s*(?:\d+[.)]|[-*•])\s+(.+?)\s*$")
_ITEM_EXPLANATION = re.compile(r"\s*(?::\s|\s[-–—]\s).*$")


def _clean_phrase(phrase: str) -> str:
    return phrase.strip().strip("*_`").strip().rstrip(".,;:").strip()


def parse_subjective_phrases(response: str) -> list[str]:
    """Pull quoted spans and list items out of a response, in order, without repeats.

    A list item that contains quotes contributes only its quoted spans;
    otherwise the item text up to an explanatory ": " or " - " is used.
    Repeats are detected case-insensitively; the first spelling is kept.
    """
    phrases: list[str] = []
    for line in response.splitlines():
        quoted = [next(g for g in m.groups() if g is not None) for m in _QUOTED.finditer(line)]
        if quoted:
            phrases += quoted
            continue
        item = _LIST_ITEM.match(line)
        if item:
            phrases.append(_ITEM_EXPLANATION.sub("", item.group(1)))

    out: list[str] = []
    seen: set[str] = set()
    for phrase in map(_clean_phrase, phrases):
        key = phrase.casefold()
        if phrase and key not in seen:
            seen.add(key)
            out.append(phrase)
    return out


# ------------------------------------------------------------------------ validation


@dataclass(frozen=True)
class LlmVerdict:
    record_id: int
    prompt_name: PromptName
    stars: int | None
    subjective_phrases: tuple[str, ...]
    raw_response: str
    from_cache: bool


def rate_record(
    record: AbstractRecord, client: LlmClient, template: PromptTemplate = SENTIMENT_TEMPLATE
) -> LlmVerdict:
    """Ask for a 1-5 rating; ``stars`` is None when the reply cannot be parsed."""
    response, cached = client.complete(build_prompt(template, record.abstract))
    try:
        stars = parse_star_rating(response)
    except RatingParseError:
        stars = None
    return LlmVerdict(record.record_id, template.name, stars, (), response, cached)


def subjectivity_of_record(
    record: AbstractRecord, client: LlmClient, template: PromptTemplate = SUBJECTIVITY_TEMPLATE
) -> LlmVerdict:
    response, cached = client.complete(build_prompt(template, record.abstract))
    phrases = tuple(parse_subjective_phrases(response))
    return LlmVerdict(record.record_id, template.name, None, phrases, response, cached)


@dataclass(frozen=True)
class AgreementStats:
    n: int
    exact_match_rate: float
    mean_absolute_star_error: float
    # confusion[model_label - 1][llm_stars - 1]
    confusion: tuple[tuple[int, ...], ...]
    sampled_record_ids: tuple[int, ...] = ()
    parse_failures: tuple[int, ...] = ()
    verdicts: tuple[LlmVerdict, ...] = ()

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "exact_match_rate": self.exact_match_rate,
            "mean_absolute_star_error": self.mean_absolute_star_error,
            "confusion": [list(row) for row in self.confusion],
            "sampled_record_ids": list(self.sampled_record_ids),
            "parse_failures": list(self.parse_failures),
            "verdicts": [
                {"record_id": v.record_id, "stars": v.stars, "raw_response": v.raw_response}
                for v in self.verdicts
            ],
        }


class Labelled(Protocol):
    record_id: int
    label: int


def sample_record_ids(record_ids: Sequence[int], sample_size: int, seed: int) -> list[int]:
    """Seeded sample without replacement, returned in ascending id order."""
    ids = sorted(record_ids)
    if not 1 <= sample_size <= len(ids):
        raise ValueError(f"sample_size must be in 1..{len(ids)}, got {sample_size}")
    picked = np.random.default_rng(seed).choice(len(ids), size=sample_size, replace=False)
    return sorted(ids[i] for i in picked.tolist())


def cross_validate(
    records: Sequence[AbstractRecord],
    results: Sequence[Labelled],
    client: LlmClient,
    sample_size: int,
    seed: int = 0,
    *,
    template: PromptTemplate = SENTIMENT_TEMPLATE,
    jobs: int = 1,
) -> AgreementStats:
    """Compare model labels with LLM star ratings on a seeded sample.

    Replies that cannot be parsed are left out of ``n`` and listed in
    ``parse_failures``.

    Raises:
        LlmError: every sampled reply failed to parse.
    """
    labels = {r.record_id: r.label for r in results}
    by_id = {r.record_id: r for r in records if r.record_id in labels}
    sampled = sample_record_ids(list(by_id), sample_size, seed)

    def ask(record_id: int) -> LlmVerdict:
        return rate_record(by_id[record_id], client, template)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            verdicts = list(pool.map(ask, sampled))
    else:
        verdicts = [ask(i) for i in sampled]

    confusion = np.zeros((5, 5), dtype=int)
    errors = []
    failures = []
    for verdict in verdicts:
        if verdict.stars is None:
            failures.append(verdict.record_id)
            continue
        label = labels[verdict.record_id]
        confusion[label - 1, verdict.stars - 1] += 1
        errors.append(abs(label - verdict.stars))
    n = len(errors)
    if n == 0:
        raise LlmError(f"none of the {len(sampled)} sampled responses had a parseable rating")
    return AgreementStats(
        n=n,
        exact_match_rate=int(np.trace(confusion)) / n,
        mean_absolute_star_error=sum(errors) / n,
        confusion=tuple(tuple(int(x) for x in row) for row in confusion),
        sampled_record_ids=tuple(sampled),
        parse_failures=tuple(failures),
        verdicts=tuple(verdicts),
    )
