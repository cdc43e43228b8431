from __future__ import annotations

import itertools
import json
import threading
import time

import httpx
import pytest

from biometaphor.affect import DEFAULT_OCTANT_TABLE
from biometaphor.errors import (
    BackendError,
    ConfigurationError,
    FixtureError,
    FixtureMissError,
    TransportError,
)
from biometaphor.metaphor import builtin_scenes
from biometaphor.reasoning import (
    STEP_IDS,
    BackendConfig,
    ChatRequest,
    RemoteChatBackend,
    ScriptedFixture,
    complete,
    load_fixture,
    make_scripted,
)

from conftest import RecordingTransport

SECRET = "sk-test-VERY-SECRET-0123456789"


def chat_reply(text: str) -> httpx.Response:
    return httpx.Response(200, json={"choices": [{"message": {"role": "assistant", "content": text}}]})


def request(tags=(("step", "step1"), ("octant", "excitement"), ("scene", "concert"))) -> ChatRequest:
    return ChatRequest("system", ("hello",), 1.0, 64, tags=tags)


@pytest.fixture
def api_key(monkeypatch):
    monkeypatch.setenv("BM_TEST_KEY", SECRET)
    return "BM_TEST_KEY"


def remote(api_key_env: str, **kw) -> BackendConfig:
    return BackendConfig(backend_id="remote-test", endpoint_url="https://llm.invalid/v1/chat", api_key_env=api_key_env, **kw)


class TestChatRequest:
    def test_messages_interleave(self):
        r = ChatRequest("sys", ("u1", "u2"), 1.0, 10, assistant_turns=("a1",))
        assert [m["role"] for m in r.messages()] == ["system", "user", "assistant", "user"]

    def test_turn_count_checked(self):
        with pytest.raises(ValueError):
            ChatRequest("sys", ("u1", "u2"), 1.0, 10)

    def test_dict_round_trip(self):
        r = request()
        assert ChatRequest.from_dict(json.loads(json.dumps(r.to_dict()))) == r


class TestBackendConfig:
    def test_inline_key_rejected(self):
        with pytest.raises(ConfigurationError):
            BackendConfig.from_dict({"backend_id": "x", "api_key": "sk-inline"})

    def test_unknown_field_rejected(self):
        with pytest.raises(ConfigurationError):
            BackendConfig.from_dict({"backend_id": "x", "colour": "red"})

    @pytest.mark.parametrize("field,value", [("temperature", -0.1), ("max_retries", -1), ("timeout_ms", 0), ("kind", "magic")])
    def test_invalid_values(self, field, value):
        with pytest.raises(ConfigurationError):
            BackendConfig(backend_id="x", **{field: value})


class TestRemote:
    def test_payload_carries_configured_temperature(self, api_key):
        transport = RecordingTransport(lambda r: chat_reply("ok"))
        cfg = remote(api_key, model_name="deepseek-chat", temperature=1.3)
        assert complete(cfg, request(), transport=transport) == "ok"
        body = json.loads(transport.requests[0].content)
        assert body["temperature"] == 1.3
        assert body["model"] == "deepseek-chat"
        assert body["messages"][0] == {"role": "system", "content": "system"}
        assert "tags" not in body

    def test_bearer_header(self, api_key):
        transport = RecordingTransport(lambda r: chat_reply("ok"))
        complete(remote(api_key), request(), transport=transport)
        assert transport.requests[0].headers["authorization"] == f"Bearer {SECRET}"

    def test_unreachable_gives_up_after_three_attempts(self, api_key, no_sleep):
        delays, sleep = no_sleep
        transport = RecordingTransport()
        backend = RemoteChatBackend(remote(api_key, max_retries=2), transport=transport, sleep=sleep, rng=lambda: 1.0)
        with pytest.raises(TransportError) as info:
            backend.complete(request())
        assert len(transport.requests) == 3
        assert info.value.attempts == 3
        assert delays == [0.25, 0.5]

    @pytest.mark.parametrize("max_retries,failures", list(itertools.product(range(4), range(5))))
    def test_attempt_count_contract(self, api_key, no_sleep, max_retries, failures):
        _, sleep = no_sleep
        seen = []

        def handler(r):
            seen.append(r)
            if len(seen) <= failures:
                return httpx.Response(503, text="busy")
            return chat_reply("fine")

        transport = RecordingTransport(handler)
        backend = RemoteChatBackend(remote(api_key, max_retries=max_retries), transport=transport, sleep=sleep)
        if failures <= max_retries:
            assert backend.complete(request()) == "fine"
            assert len(seen) == failures + 1
        else:
            with pytest.raises(BackendError) as info:
                backend.complete(request())
            assert info.value.status == 503
            assert len(seen) == max_retries + 1

    def test_non_transient_status_not_retried(self, api_key):
        transport = RecordingTransport(lambda r: httpx.Response(400, text="bad request body"))
        with pytest.raises(BackendError) as info:
            complete(remote(api_key), request(), transport=transport)
        assert len(transport.requests) == 1
        assert info.value.status == 400
        assert "bad request body" in info.value.body_excerpt

    def test_credential_never_leaks(self, api_key, caplog, no_sleep):
        _, sleep = no_sleep
        echo = RecordingTransport(lambda r: httpx.Response(401, text=f"invalid key {SECRET}"))
        with pytest.raises(BackendError) as info:
            complete(remote(api_key), request(), transport=echo)
        assert SECRET not in str(info.value)
        assert SECRET not in info.value.body_excerpt

        garbage = RecordingTransport(lambda r: httpx.Response(200, text=f"not json {SECRET}"))
        with pytest.raises(BackendError) as info:
            complete(remote(api_key), request(), transport=garbage)
        assert SECRET not in str(info.value)

        busy = RecordingTransport(lambda r: httpx.Response(503, text=SECRET))
        backend = RemoteChatBackend(remote(api_key, max_retries=1), transport=busy, sleep=sleep)
        with caplog.at_level("DEBUG"):
            with pytest.raises(BackendError) as info:
                backend.complete(request())
        assert SECRET not in str(info.value)
        assert SECRET not in caplog.text
        assert SECRET not in json.dumps(remote(api_key).to_dict())

    def test_missing_env_var(self, monkeypatch):
        monkeypatch.delenv("BM_ABSENT_KEY", raising=False)
        transport = RecordingTransport(lambda r: chat_reply("ok"))
        with pytest.raises(ConfigurationError, match="BM_ABSENT_KEY"):
            complete(remote("BM_ABSENT_KEY"), request(), transport=transport)
        assert transport.requests == []

    def test_malformed_completion(self, api_key):
        transport = RecordingTransport(lambda r: httpx.Response(200, json={"choices": []}))
        with pytest.raises(BackendError):
            complete(remote(api_key), request(), transport=transport)

    def test_in_flight_cap(self, api_key):
        lock = threading.Lock()
        state = {"now": 0, "peak": 0}

        def handler(r):
            with lock:
                state["now"] += 1
                state["peak"] = max(state["peak"], state["now"])
            time.sleep(0.02)
            with lock:
                state["now"] -= 1
            return chat_reply("ok")

        backend = RemoteChatBackend(remote(api_key, max_in_flight=2), transport=RecordingTransport(handler))
        threads = [threading.Thread(target=backend.complete, args=(request(),)) for _ in range(8)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert state["peak"] <= 2


class TestScripted:
    @pytest.mark.parametrize("name", ["gpt-4o", "deepseek-chat"])
    def test_builtin_fixture_is_total(self, name):
        fixture = load_fixture(f"builtin:{name}")
        octants = DEFAULT_OCTANT_TABLE.labels
        expected = set(itertools.product(STEP_IDS, octants, sorted(builtin_scenes())))
        assert len(expected) == 96
        assert fixture.keys() == expected

    def test_lookup_is_byte_identical(self):
        backend = make_scripted(load_fixture("builtin:gpt-4o"))
        first = backend.complete(request())
        assert first == backend.complete(request())
        assert first == load_fixture("builtin:gpt-4o").responses[("step1", "excitement", "concert")]

    def test_empty_fixture_misses(self):
        backend = make_scripted(ScriptedFixture())
        with pytest.raises(FixtureMissError) as info:
            backend.complete(request())
        assert "step1|excitement|concert" in str(info.value)

    def test_untagged_request_misses(self):
        with pytest.raises(FixtureMissError):
            make_scripted(load_fixture("builtin:gpt-4o")).complete(request(tags=()))

    def test_duplicate_key_rejected(self):
        with pytest.raises(FixtureError):
            ScriptedFixture.from_items([(("step1", "a", "b"), "x"), (("step1", "a", "b"), "y")])
        with pytest.raises(FixtureError):
            ScriptedFixture.from_json('{"step1|a|b": "x", "step1|a|b": "y"}')

    def test_non_object_rejected(self):
        with pytest.raises(FixtureError):
            ScriptedFixture.from_json('[["step1|a|b", "x"]]')

    def test_json_round_trip(self):
        fixture = load_fixture("builtin:deepseek-chat")
        assert ScriptedFixture.from_json(fixture.to_json()) == fixture

    def test_missing_fixture_file(self, tmp_path):
        with pytest.raises(ConfigurationError):
            load_fixture(str(tmp_path / "absent.json"))
