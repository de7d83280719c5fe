import json
import logging
import threading

import httpx
import pytest

from traitdistill.augmenter import (
    AspectAnalyses,
    CacheConflictError,
    ChatClient,
    DetectionParseError,
    GenerationCache,
    LLMRequestError,
    MissingAugmentation,
    NetworkDisabledError,
    OfflineClient,
    ParseError,
    ReplayClient,
    TokenBucket,
    augment_posts,
    build_detect_prompt,
    build_label_prompt,
    build_post_prompt,
    generate_label_descriptions,
    generate_post_augmentation,
    llm_direct_detect,
    load_label_descriptions,
    parse_aspects,
    parse_mbti_code,
    read_augmentations,
    run_llm_baseline,
    sample_shots,
    save_label_descriptions,
    text_hash,
    write_augmentations,
)
from traitdistill.augmenter.prompts import POST_INSTRUCTION, POST_PROMPT_VERSION
from traitdistill.corpus import POLE_NAMES, TraitLabels, UserRecord

ANSWER = json.dumps({"semantic": "A", "sentiment": "B", "linguistic": "C"})


# --- prompts ---------------------------------------------------------------


def test_post_prompt_contains_instruction_and_post():
    p = build_post_prompt("hello")
    assert POST_INSTRUCTION in p and "hello" in p
    assert "ends with an ellipsis" in p and "you should ignore it" in p
    assert build_post_prompt("hello") == p


def test_post_prompts_differ_only_in_post():
    a, b = build_post_prompt("first post"), build_post_prompt("second one")
    prefix = POST_INSTRUCTION + " post:"
    assert a.startswith(prefix) and b.startswith(prefix)
    assert a.replace("first post", "second one") == b
    with pytest.raises(ValueError):
        build_post_prompt("")


def test_label_and_detect_prompts():
    assert "Introversion" in build_label_prompt("Introversion")
    posts = ["one", "two"]
    zero = build_detect_prompt(posts)
    assert "- one" in zero and "- two" in zero
    assert "step by step" in build_detect_prompt(posts, "cot")
    few = build_detect_prompt(posts, "few_shot", [(["x"], "INTJ"), (["y"], "ESFP"), (["z"], "ENFJ")])
    assert "Example 3 type: ENFJ" in few
    with pytest.raises(ValueError):
        build_detect_prompt(posts, "other")


# --- parsing ---------------------------------------------------------------


def test_parse_header_split():
    assert parse_aspects("Semantics: A. Sentiments: B. Linguistics: C.") == {
        "semantic": "A",
        "sentiment": "B",
        "linguistic": "C",
    }


def test_parse_structured():
    assert parse_aspects("Sure!\n" + ANSWER) == {"semantic": "A", "sentiment": "B", "linguistic": "C"}


def test_parse_markdown_headers_and_emotion_alias():
    raw = "**Semantic analysis:** talks about work\n\n**Emotional aspect:** upbeat\n\n**Linguistic:** short sentences"
    out = parse_aspects(raw)
    assert out == {"semantic": "talks about work", "sentiment": "upbeat", "linguistic": "short sentences"}


@pytest.mark.parametrize("raw", ["no sections here", "", "Semantics: A. Linguistics: C.", '{"semantic": "A"}'])
def test_parse_failures_carry_raw(raw):
    with pytest.raises(ParseError) as info:
        parse_aspects(raw)
    assert info.value.raw == raw


def test_parse_mbti_code():
    assert parse_mbti_code("ISFJ, because the posts are caring").code == "ISFJ"
    assert parse_mbti_code("I'd guess this is an entp.").code == "ENTP"
    with pytest.raises(DetectionParseError):
        parse_mbti_code("no idea")


# --- cache -----------------------------------------------------------------


def test_cache_round_trip_across_instances(tmp_path):
    path = tmp_path / "cache.jsonl"
    cache = GenerationCache(path)
    key = ("post-v1", "m", text_hash("p"))
    response = 'weird é "quoted"\nresponse'
    cache.put(key, response, {"semantic": "a", "sentiment": "b", "linguistic": "c"})
    again = GenerationCache(path)
    assert again.get(key)["response"] == response
    assert key in again and len(again) == 1
    assert again.get(("post-v2", "m", text_hash("p"))) is None


def test_cache_rejects_duplicate_keys(tmp_path):
    cache = GenerationCache(tmp_path / "c.jsonl")
    cache.put(("v", "m", "h"), "first")
    with pytest.raises(CacheConflictError):
        cache.put(("v", "m", "h"), "second")
    assert GenerationCache(tmp_path / "c.jsonl").get(("v", "m", "h"))["response"] == "first"


def test_cache_skips_torn_line(tmp_path):
    path = tmp_path / "c.jsonl"
    GenerationCache(path).put(("v", "m", "h"), "ok")
    with open(path, "a") as fh:
        fh.write('{"key": {"prompt_version"')
    assert len(GenerationCache(path)) == 1


def test_cache_concurrent_writers(tmp_path):
    cache = GenerationCache(tmp_path / "c.jsonl")

    def work(n):
        for i in range(50):
            cache.put(("v", "m", f"{n}-{i}"), str(i))

    threads = [threading.Thread(target=work, args=(n,)) for n in range(4)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert len(GenerationCache(tmp_path / "c.jsonl")) == 200


# --- clients ---------------------------------------------------------------


def _transport(replies):
    """MockTransport answering successive requests from ``replies``
    (an int is an HTTP status, a str a completion)."""
    seen = []

    def handler(request):
        seen.append(request)
        reply = replies[min(len(seen) - 1, len(replies) - 1)]
        if isinstance(reply, int):
            return httpx.Response(reply, json={"error": "boom"})
        body = {"choices": [{"message": {"content": reply}}], "usage": {"prompt_tokens": 7, "completion_tokens": 3}}
        return httpx.Response(200, json=body)

    return httpx.MockTransport(handler), seen


def test_chat_client_retries_then_succeeds(monkeypatch, caplog):
    monkeypatch.setenv("TEST_KEY", "sk-secret-123")
    transport, seen = _transport([500, 429, "done"])
    sleeps = []
    client = ChatClient(api_key_env="TEST_KEY", transport=transport, sleep=sleeps.append, rate_per_sec=1e6)
    with caplog.at_level(logging.DEBUG):
        assert client.complete("hi") == "done"
    assert len(seen) == 3
    assert sleeps == [1.0, 2.0]
    assert client.usage == {"requests": 1, "prompt_tokens": 7, "completion_tokens": 3}
    body = json.loads(seen[0].content)
    assert body["temperature"] == 0.0 and body["messages"][0]["content"] == "hi"
    assert seen[0].headers["authorization"] == "Bearer sk-secret-123"
    assert "sk-secret-123" not in caplog.text


def test_chat_client_gives_up_after_three_attempts(monkeypatch):
    monkeypatch.setenv("TEST_KEY", "k")
    transport, seen = _transport([503])
    client = ChatClient(api_key_env="TEST_KEY", transport=transport, sleep=lambda s: None, rate_per_sec=1e6)
    with pytest.raises(LLMRequestError):
        client.complete("hi")
    assert len(seen) == 3


def test_chat_client_needs_key(monkeypatch):
    monkeypatch.delenv("TEST_KEY", raising=False)
    transport, seen = _transport(["x"])
    with pytest.raises(LLMRequestError):
        ChatClient(api_key_env="TEST_KEY", transport=transport).complete("hi")
    assert not seen


def test_token_bucket_waits():
    t = [0.0]
    sleeps = []

    def sleep(s):
        sleeps.append(s)
        t[0] += s

    bucket = TokenBucket(2.0, capacity=1, clock=lambda: t[0], sleep=sleep)
    for _ in range(3):
        bucket.acquire()
    assert sleeps == pytest.approx([0.5, 0.5])


def test_offline_client_always_fails():
    client = OfflineClient()
    with pytest.raises(NetworkDisabledError):
        client.complete("x")
    assert client.calls == 1


# --- generation ------------------------------------------------------------


def test_cached_post_makes_no_call(tmp_path):
    cache = GenerationCache(tmp_path / "c.jsonl")
    client = ReplayClient(lambda p: ANSWER, model_id="m")
    first = generate_post_augmentation("a post...", client, cache)
    second = generate_post_augmentation("a post...", client, cache)
    assert client.calls == 1
    assert first == second
    assert (first.semantic, first.sentiment, first.linguistic) == ("A", "B", "C")
    assert first.source_post_hash == text_hash("a post...")
    assert first.prompt_version == POST_PROMPT_VERSION and first.model_id == "m"


def test_api_failure_becomes_missing_augmentation():
    with pytest.raises(MissingAugmentation):
        generate_post_augmentation("p", OfflineClient(), None)


def test_unparseable_response_raises_parse_error_and_is_not_cached(tmp_path):
    cache = GenerationCache(tmp_path / "c.jsonl")
    with pytest.raises(ParseError):
        generate_post_augmentation("p", ReplayClient(lambda p: "nothing useful"), cache)
    assert len(cache) == 0


def test_augment_posts_partial_failure_and_replay(tmp_path):
    posts = [f"post {i}" for i in range(10)] + ["post 3"]

    def answer(prompt):
        if "post 4" in prompt:
            return "garbage"
        if "post 7" in prompt:
            raise LLMRequestError("down")
        return json.dumps({"semantic": prompt[-200:], "sentiment": "s", "linguistic": "l"})

    cache = GenerationCache(tmp_path / "c.jsonl")
    client = ReplayClient(answer, model_id="m")
    augs, missing = augment_posts(posts, client, cache, workers=4)
    assert len(augs) == 8 and client.calls == 10
    assert [m["post_hash"] for m in missing] == [text_hash("post 4"), text_hash("post 7")]
    assert list(augs) == [text_hash(p) for p in posts[:10] if p not in ("post 4", "post 7")]

    # a resumed run only retries the failures; the result is otherwise identical
    client2 = ReplayClient(answer, model_id="m")
    augs2, missing2 = augment_posts(posts, client2, GenerationCache(tmp_path / "c.jsonl"), workers=2)
    assert client2.calls == 2
    assert augs2 == augs and missing2 == missing

    write_augmentations(augs, tmp_path / "a.jsonl")
    assert read_augmentations(tmp_path / "a.jsonl") == augs


def test_aspect_analyses_json_round_trip():
    a = AspectAnalyses("x", "y", "z", "h", "m", "v")
    assert AspectAnalyses.from_json(a.to_json()) == a
    assert a.texts(("linguistic", "semantic")) == ["z", "x"]


def test_bundled_label_descriptions():
    descs = load_label_descriptions()
    texts = descs.texts()
    assert len(texts) == 24 and all(t.strip() for t in texts)
    assert descs.poles[0][0] == "Introversion"
    assert all(len(t.split()) <= 70 for t in texts)


def test_generate_label_descriptions_layout(tmp_path):
    client = ReplayClient(lambda p: json.dumps({a: f"{a} of {p.split('trait ')[1].split('.')[0]}" for a in ("semantic", "sentiment", "linguistic")}))
    cache = GenerationCache(tmp_path / "c.jsonl")
    descs = generate_label_descriptions(client, cache)
    assert len(descs.texts()) == 24 and client.calls == 8
    assert descs.entries[0][0]["semantic"] == "semantic of Introversion"
    assert descs.entries[3][1]["linguistic"] == "linguistic of Judging"
    save_label_descriptions(descs, tmp_path / "l1.json")
    again = generate_label_descriptions(client, GenerationCache(tmp_path / "c.jsonl"))
    save_label_descriptions(again, tmp_path / "l2.json")
    assert client.calls == 8
    assert (tmp_path / "l1.json").read_bytes() == (tmp_path / "l2.json").read_bytes()
    assert load_label_descriptions(tmp_path / "l1.json") == descs
    data = json.loads((tmp_path / "l1.json").read_text())
    assert data["I/E"]["Introversion"]["semantic"] == "semantic of Introversion"


# --- direct detection baseline --------------------------------------------


def _users():
    return [UserRecord(f"u{i}", [f"text {i}"], TraitLabels.from_code(c)) for i, c in enumerate(["ISFJ", "ENTP", "INFJ"])]


def test_direct_detect_and_shots():
    client = ReplayClient(lambda p: "ISFJ, because of the caring tone")
    assert llm_direct_detect(["hi"], client).code == "ISFJ"
    with pytest.raises(ValueError):
        llm_direct_detect(["hi"], client, "few_shot", shots=[(["a"], "INTJ")])
    train = [UserRecord(f"t{i}", [f"p{i}"], TraitLabels.from_code("INTJ")) for i in range(5)]
    shots = sample_shots(train, seed=3)
    assert shots == sample_shots(train, seed=3)
    assert len(shots) == 3
    assert llm_direct_detect(["hi"], client, "few_shot", shots).code == "ISFJ"


def test_baseline_scores_parse_failures_as_wrong():
    answers = {"text 0": "ISFJ", "text 1": "no idea", "text 2": "INFJ"}
    client = ReplayClient(lambda p: next(v for k, v in answers.items() if f"- {k}" in p))
    report, failures = run_llm_baseline(_users(), client)
    assert failures == [{"user_id": "u1", "error": "DetectionParseError"}]
    assert report.n_users == 3
    # u1 (ENTP) is counted as ISFJ on every dimension
    assert report.confusion[0].sum() == 3
    assert report.per_dim_f1[0] < 1.0


def test_baseline_cache_avoids_repeat_calls(tmp_path):
    cache = GenerationCache(tmp_path / "c.jsonl")
    client = ReplayClient(lambda p: "INTJ")
    run_llm_baseline(_users(), client, cache=cache)
    run_llm_baseline(_users(), OfflineClient(model_id="replay"), cache=GenerationCache(tmp_path / "c.jsonl"))
    assert client.calls == 3


def test_pole_names_cover_taxonomy():
    assert [p for dim in POLE_NAMES for p in dim] == [
        "Introversion", "Extroversion", "Sensing", "iNtuition", "Thinking", "Feeling", "Perception", "Judging",
    ]
