from __future__ import annotations

import json

import httpx
import pytest
from hypothesis import given
from hypothesis import strategies as st

from abstract_sentiment.corpus_io import AbstractRecord, ScoredRow
from abstract_sentiment.llm_validate import (
    DEFAULT_TEMPLATES,
    FixtureMissError,
    LlmAuthError,
    LlmClient,
    LlmError,
    PromptTemplate,
    RatingParseError,
    ResponseCache,
    SENTIMENT_TEMPLATE,
    build_prompt,
    cache_key,
    cross_validate,
    parse_star_rating,
    parse_subjective_phrases,
    query_llm,
    rate_record,
    sample_record_ids,
    subjectivity_of_record,
)

MODEL = "test-model"


def records_and_labels(labels):
    records = [AbstractRecord(i, "J", f"t{i}", 2015, f"Abstract number {i}.") for i in range(len(labels))]
    return records, [ScoredRow(i, label, (label - 1) / 4) for i, label in enumerate(labels)]


def warmed_cache(records, answer, template=SENTIMENT_TEMPLATE, path=None) -> ResponseCache:
    cache = ResponseCache(path)
    for r in records:
        cache.put(MODEL, build_prompt(template, r.abstract), answer(r))
    return cache


def chat_reply(content: str) -> httpx.Response:
    return httpx.Response(200, json={"choices": [{"message": {"role": "assistant", "content": content}}]})


class Recorder:
    """Mock transport handler that replays a scripted list of responses."""

    def __init__(self, *responses):
        self.responses = list(responses)
        self.requests: list[httpx.Request] = []

    def __call__(self, request: httpx.Request) -> httpx.Response:
        self.requests.append(request)
        item = self.responses.pop(0)
        if isinstance(item, Exception):
            raise item
        return item


def live_client(handler, cache=None, **kw) -> LlmClient:
    return LlmClient(
        model=MODEL,
        cache=cache or ResponseCache(),
        mode="live",
        endpoint="https://llm.example/v1",
        token="secret",
        http=httpx.Client(transport=httpx.MockTransport(handler)),
        sleep=lambda s: None,
        **kw,
    )


# ------------------------------------------------------------------ prompts


def test_substitution():
    assert build_prompt(PromptTemplate("sentiment_1_to_5", "Rate: {abstract}"), "text") == "Rate: text"


def test_braces_in_abstract_survive():
    template = PromptTemplate("sentiment_1_to_5", "Rate: {abstract}")
    assert build_prompt(template, "sets {x} and {abstract}") == "Rate: sets {x} and {abstract}"


def test_placeholder_must_occur_once():
    with pytest.raises(ValueError):
        PromptTemplate("sentiment_1_to_5", "no placeholder")
    with pytest.raises(ValueError):
        PromptTemplate("sentiment_1_to_5", "{abstract} {abstract}")


@pytest.mark.parametrize("name", sorted(DEFAULT_TEMPLATES))
def test_default_templates_embed_abstract_once(name):
    abstract = "Persistent fatigue was reported in 12% of patients {sic}."
    prompt = build_prompt(DEFAULT_TEMPLATES[name], abstract)
    assert prompt.count(abstract) == 1


# ------------------------------------------------------------------- client


def test_second_identical_prompt_is_cached():
    handler = Recorder(chat_reply("Rating: 3"))
    client = live_client(handler)
    assert client.complete("p") == ("Rating: 3", False)
    assert client.complete("p") == ("Rating: 3", True)
    assert len(handler.requests) == 1 and client.network_calls == 1
    body = json.loads(handler.requests[0].content)
    assert body["model"] == MODEL and body["messages"][0]["content"] == "p"
    assert handler.requests[0].headers["authorization"] == "Bearer secret"
    assert str(handler.requests[0].url) == "https://llm.example/v1/chat/completions"


def test_fixture_miss_is_an_error():
    client = LlmClient(model=MODEL, mode="fixture")
    with pytest.raises(FixtureMissError):
        query_llm(client, "never seen")


def test_cache_file_round_trip(tmp_path):
    path = tmp_path / "cache.jsonl"
    cache = ResponseCache(path)
    cache.put(MODEL, "prompt one", "answer one")
    cache.put(MODEL, "prompt two", "answer ü two")
    first = path.read_bytes()
    entry = json.loads(first.decode().splitlines()[0])
    assert set(entry) == {"key_hash", "model", "prompt", "response", "timestamp"}
    assert entry["key_hash"] == cache_key(MODEL, "prompt one")

    reloaded = ResponseCache(path)
    client = LlmClient(model=MODEL, cache=reloaded, mode="fixture")
    assert query_llm(client, "prompt two") == "answer ü two"
    assert path.read_bytes() == first


def test_cache_key_depends_on_model():
    assert cache_key("a", "p") != cache_key("b", "p")


def test_transient_failures_are_retried():
    handler = Recorder(httpx.ConnectError("down"), httpx.Response(503), chat_reply("4/5"))
    delays = []
    client = live_client(handler)
    client.sleep = delays.append
    assert query_llm(client, "p") == "4/5"
    assert delays == [1.0, 2.0]
    assert client.network_calls == 3


def test_retries_are_bounded():
    handler = Recorder(*[httpx.ConnectError("down")] * 3)
    client = live_client(handler, max_attempts=3)
    with pytest.raises(LlmError, match="3 attempts"):
        query_llm(client, "p")
    assert len(handler.requests) == 3


def test_auth_failure_not_retried():
    handler = Recorder(httpx.Response(401), chat_reply("never"))
    with pytest.raises(LlmAuthError):
        query_llm(live_client(handler), "p")
    assert len(handler.requests) == 1


def test_live_mode_without_token_fails_early(monkeypatch):
    monkeypatch.delenv("ABSTRACT_SENTIMENT_LLM_TOKEN", raising=False)
    with pytest.raises(LlmAuthError):
        LlmClient(model=MODEL, mode="live")


def test_token_read_from_environment(monkeypatch):
    monkeypatch.setenv("MY_TOKEN", "from-env")
    assert LlmClient(model=MODEL, mode="live", token_env="MY_TOKEN").token == "from-env"


# ------------------------------------------------------------------ parsing


def test_canonical_rating():
    assert parse_star_rating("I would classify this abstract as a 2 out of 5.") == 2


def test_slash_rating():
    assert parse_star_rating("Rating: 4/5. The tone is...") == 4


def test_phrasing_fixture(fixtures):
    cases = json.loads((fixtures / "rating_responses.json").read_text())
    assert len(cases) == 12
    assert [parse_star_rating(c["response"]) for c in cases] == [c["stars"] for c in cases]


@pytest.mark.parametrize("response", ["No idea.", "The cohort of 12 patients", "Ratings range from 6 to 9", ""])
def test_unparseable_rating(response):
    with pytest.raises(RatingParseError) as info:
        parse_star_rating(response)
    assert info.value.response == response


@given(st.text())
def test_rating_is_always_in_range(response):
    try:
        assert 1 <= parse_star_rating(response) <= 5
    except RatingParseError:
        pass


def test_three_quoted_phrases():
    response = 'Subjective: "strongly suggests", "remarkably", and "it is clear that".'
    assert parse_subjective_phrases(response) == ["strongly suggests", "remarkably", "it is clear that"]


def test_no_phrases():
    assert parse_subjective_phrases("The abstract is entirely objective.") == []


def test_mixed_phrase_fixture(fixtures):
    response = (fixtures / "subjectivity_response.txt").read_text()
    assert parse_subjective_phrases(response) == [
        "making it difficult to diagnose",
        "controversial",
        "strongly suggests",
        "debilitating condition",
        "Prompt treatment can prevent disability",
        "poorly understood",
    ]


def test_apostrophes_are_not_quotes():
    assert parse_subjective_phrases("The patients' outcomes weren't 'clearly' better") == ["clearly"]


# --------------------------------------------------------------- validation


def test_verdicts():
    records, _ = records_and_labels([3])
    cache = warmed_cache(records, lambda r: "I rate it 2.")
    cache.put(MODEL, build_prompt(DEFAULT_TEMPLATES["subjectivity_phrases"], records[0].abstract), '"hedged"')
    client = LlmClient(model=MODEL, cache=cache)
    verdict = rate_record(records[0], client)
    assert (verdict.stars, verdict.from_cache, verdict.prompt_name) == (2, True, "sentiment_1_to_5")
    verdict = subjectivity_of_record(records[0], client)
    assert verdict.stars is None and verdict.subjective_phrases == ("hedged",)


def test_perfect_agreement():
    records, labels = records_and_labels([1, 2, 3, 4, 5, 3, 2])
    by_id = {s.record_id: s.label for s in labels}
    client = LlmClient(model=MODEL, cache=warmed_cache(records, lambda r: f"Rating: {by_id[r.record_id]}/5"))
    stats = cross_validate(records, labels, client, sample_size=7, seed=0)
    assert stats.n == 7 and stats.exact_match_rate == 1.0 and stats.mean_absolute_star_error == 0


def test_maximal_disagreement():
    records, labels = records_and_labels([1] * 6)
    client = LlmClient(model=MODEL, cache=warmed_cache(records, lambda r: "I would rate this 5 out of 5"))
    stats = cross_validate(records, labels, client, sample_size=4, seed=1)
    assert stats.exact_match_rate == 0.0 and stats.mean_absolute_star_error == 4
    assert stats.confusion[0][4] == 4


def test_confusion_matches_hand_tally():
    labels = [1, 2, 2, 3, 3, 3, 4, 4, 5, 5]
    llm = [1, 3, 2, 3, 2, None, 5, 4, 5, 3]
    records, scored = records_and_labels(labels)
    answers = {i: ("no rating given" if s is None else f"Score: {s}") for i, s in enumerate(llm)}
    client = LlmClient(model=MODEL, cache=warmed_cache(records, lambda r: answers[r.record_id]))
    stats = cross_validate(records, scored, client, sample_size=10, seed=4)
    # rows: model label, cols: LLM stars; record 5 failed to parse
    expected = [
        [1, 0, 0, 0, 0],
        [0, 1, 1, 0, 0],
        [0, 1, 1, 0, 0],
        [0, 0, 0, 1, 1],
        [0, 0, 1, 0, 1],
    ]
    assert [list(r) for r in stats.confusion] == expected
    assert stats.n == 9 and stats.parse_failures == (5,)
    assert stats.exact_match_rate == 5 / 9
    assert stats.mean_absolute_star_error == pytest.approx((0 + 1 + 0 + 0 + 1 + 1 + 0 + 0 + 2) / 9)


def test_all_failures_is_an_error():
    records, labels = records_and_labels([3, 3])
    client = LlmClient(model=MODEL, cache=warmed_cache(records, lambda r: "cannot say"))
    with pytest.raises(LlmError):
        cross_validate(records, labels, client, sample_size=2, seed=0)


def test_sample_is_seeded_and_parallel_safe():
    records, labels = records_and_labels([3] * 30)
    client = LlmClient(model=MODEL, cache=warmed_cache(records, lambda r: "3"))
    a = cross_validate(records, labels, client, sample_size=8, seed=42)
    b = cross_validate(records, labels, client, sample_size=8, seed=42, jobs=4)
    assert a == b
    assert list(a.sampled_record_ids) == sample_record_ids(range(30), 8, 42)
    assert len(set(a.sampled_record_ids)) == 8


def test_sample_size_bounds():
    with pytest.raises(ValueError):
        sample_record_ids(range(3), 4, 0)


def test_warmed_cache_needs_no_network():
    records, labels = records_and_labels([2, 4, 5])
    handler = Recorder()
    client = live_client(handler, cache=warmed_cache(records, lambda r: "Rating: 4"))
    stats = cross_validate(records, labels, client, sample_size=3, seed=0)
    assert client.network_calls == 0 and handler.requests == []
    assert stats.to_dict() == cross_validate(records, labels, client, sample_size=3, seed=0).to_dict()
