import json
import math
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest
from hypothesis import given, settings, strategies as st

from lmxevo.backends import (
    CapabilityError,
    CompletionRequest,
    ConfigurationError,
    EngineError,
    HttpEngine,
    RecordingEngine,
    ReplayEngine,
    ReplayMissError,
    SamplingParams,
    SubtreeMockEngine,
    TransportError,
    UmdaMockEngine,
    make_replay_engine,
    make_subtree_mock,
    make_umda_mock,
    truncate_at_stop,
)
from lmxevo.exprs import Unary, parse_expression, serialize, subtrees


def request(prompt, seed=None, temperature=1.0, **kwargs):
    return CompletionRequest(
        prompt=prompt,
        params=SamplingParams(temperature=temperature, rng_seed=seed, **kwargs),
    )


bitstrings = st.integers(min_value=1, max_value=10).flatmap(
    lambda length: st.lists(
        st.text(alphabet="01", min_size=length, max_size=length),
        min_size=1,
        max_size=32,
    )
)


class TestTruncateAtStop:
    def test_earliest_stop_wins(self):
        text, hit = truncate_at_stop("abc|def#ghi", ["#", "|"])
        assert text == "abc" and hit

    def test_no_stop(self):
        assert truncate_at_stop("abc", ["zz"]) == ("abc", False)


class TestUmdaMock:
    def test_empty_parent_list_is_a_configuration_error(self):
        with pytest.raises(ConfigurationError):
            make_umda_mock([])

    def test_mixed_lengths_rejected(self):
        with pytest.raises(ConfigurationError):
            make_umda_mock(["01", "011"])

    def test_unanimous_parents_reproduce_exactly(self):
        engine = make_umda_mock(["11", "11"])
        response = engine.complete(request("11\n11\n", seed=3))
        assert response.text.splitlines() == ["11", "11", "11"]

    def test_underscore_codec_degenerate_marginals(self):
        engine = make_umda_mock(["00", "00"], codec="underscore")
        response = engine.complete(request("_0_0\n_0_0\n", seed=9))
        assert all(line == "_0_0" for line in response.text.splitlines())

    def test_first_bit_is_fair_coin(self):
        engine = make_umda_mock(["01", "10"])
        dist = engine.next_token_distribution("01\n10\n", ["0", "1"])
        assert dist.probability("0") == 0.5 and dist.probability("1") == 0.5

    def test_hand_counted_marginals(self):
        # parents {111, 110, 100, 100}: ones per column are 4/4, 2/4, 1/4
        engine = make_umda_mock(["111", "110", "100", "100"])
        prompt = "111\n110\n100\n100\n"
        probs = [
            engine.next_token_distribution(prompt + committed, ["0", "1"]).probability("1")
            for committed in ("", "1", "11")
        ]
        assert probs == [1.0, 0.5, 0.25]

    def test_prompt_parents_override_constructor_parents(self):
        engine = make_umda_mock(["00"])
        response = engine.complete(request("11\n11\n", seed=5))
        assert response.text.splitlines()[0] == "11"

    def test_single_candidate_renormalizes_to_one(self):
        engine = make_umda_mock(["10", "10"])
        dist = engine.next_token_distribution("10\n10\n", ["1"])
        assert dist.probability("1") == 1.0

    def test_temperature_zero_is_deterministic_across_seeds(self):
        engine = make_umda_mock(["1100", "1010", "1001"])
        prompt = "1100\n1010\n1001\n"
        first = engine.complete(request(prompt, seed=1, temperature=0.0))
        second = engine.complete(request(prompt, seed=2, temperature=0.0))
        assert first.text == second.text

    def test_greedy_ties_break_to_zero(self):
        engine = make_umda_mock(["01", "10"])
        response = engine.complete(request("01\n10\n", temperature=0.0))
        assert response.text.splitlines()[0] == "00"

    def test_stop_sequence_never_in_output(self):
        engine = make_umda_mock(["11", "11"])
        response = engine.complete(
            CompletionRequest(
                prompt="11\n11\n",
                params=SamplingParams(stop_sequences=["\n"], rng_seed=0),
            )
        )
        assert "\n" not in response.text
        assert response.finish_reason == "stop-sequence"

    def test_token_budget_truncates(self):
        engine = make_umda_mock(["1111", "1111"])
        response = engine.complete(
            CompletionRequest(
                prompt="1111\n1111\n", params=SamplingParams(max_new_tokens=6, rng_seed=0)
            )
        )
        assert response.finish_reason == "length"
        assert response.text == "1111\n1"

    def test_logprobs_cover_generated_bits(self):
        engine = make_umda_mock(["10", "11"])
        response = engine.complete(
            CompletionRequest(
                prompt="10\n11\n",
                params=SamplingParams(rng_seed=0),
                want_logprobs=True,
            )
        )
        bits = response.text.replace("\n", "")
        assert response.token_logprobs is not None
        assert len(response.token_logprobs) == len(bits)
        for entry in response.token_logprobs:
            assert set(entry.top_alternatives) == {"0", "1"}

    @settings(max_examples=60, deadline=None)
    @given(bitstrings)
    def test_distribution_matches_frequencies_exactly(self, parents):
        engine = make_umda_mock(parents)
        prompt = "\n".join(parents) + "\n"
        m = len(parents)
        for j in range(len(parents[0])):
            committed = parents[0][:j]
            dist = engine.next_token_distribution(prompt + committed, ["0", "1"])
            expected = sum(1 for p in parents if p[j] == "1") / m
            assert dist.probability("1") == pytest.approx(expected, abs=1e-12)
            assert abs(sum(dist.candidates.values()) - 1.0) <= 1e-9


class TestSubtreeMock:
    def test_single_node_parents_swap(self):
        engine = make_subtree_mock()
        response = engine.complete(request("x1\nx2\n", seed=0))
        assert response.text in ("x1", "x2")

    def test_child_is_in_swap_closure(self):
        # oracle: enumerate every subtree exchange between the two parents
        p1 = parse_expression("sin(x1)")
        p2 = parse_expression("cos(x2)")
        closure = set()
        for a, b in ((p1, p2), (p2, p1)):
            for donor in subtrees(b):
                closure.add(serialize(donor))  # replace the root
                closure.add(serialize(Unary(a.op, donor)))  # replace the operand
        engine = make_subtree_mock()
        for seed in range(25):
            response = engine.complete(request("sin(x1)\ncos(x2)\n", seed=seed))
            assert response.text in closure

    def test_unparseable_prompt_yields_empty_completion(self):
        engine = make_subtree_mock()
        response = engine.complete(request("hello world\n<>!\n", seed=1))
        assert response.text == ""

    def test_header_line_is_ignored(self):
        engine = make_subtree_mock()
        response = engine.complete(
            request("Below are 10 expressions that approximate the dataset:\nx1\nx2\n", seed=2)
        )
        assert response.text in ("x1", "x2")

    def test_temperature_zero_deterministic(self):
        engine = make_subtree_mock()
        prompt = "x1 + x2\nsin(x1)\ncos(x2)\n"
        a = engine.complete(request(prompt, seed=1, temperature=0.0))
        b = engine.complete(request(prompt, seed=2, temperature=0.0))
        assert a.text == b.text


class TestReplay:
    def test_primed_response(self):
        engine = make_replay_engine([("p", "r")])
        assert engine.complete(request("p")).text == "r"

    def test_miss_after_exhaustion(self):
        engine = make_replay_engine([("p", "r")])
        engine.complete(request("p"))
        with pytest.raises(ReplayMissError):
            engine.complete(request("p"))
        with pytest.raises(ReplayMissError):
            engine.complete(request("q"))

    def test_repeated_prompts_replay_in_order(self):
        engine = make_replay_engine([("p", "first"), ("p", "second")])
        assert engine.complete(request("p")).text == "first"
        assert engine.complete(request("p")).text == "second"

    def test_recording_wrapper_captures_traffic(self, tmp_path):
        inner = make_umda_mock(["11", "11"])
        recorder = RecordingEngine(inner)
        response = recorder.complete(request("11\n11\n", seed=0))
        assert recorder.recording == [("11\n11\n", response.text)]
        path = tmp_path / "traffic.jsonl"
        recorder.save_jsonl(str(path))
        replay = ReplayEngine.from_jsonl(str(path))
        assert replay.complete(request("11\n11\n")).text == response.text


class _StubHandler(BaseHTTPRequestHandler):
    server_version = "stub"
    fail_next = 0
    requests_seen = []
    logprobs_enabled = True

    def do_POST(self):
        length = int(self.headers["Content-Length"])
        body = json.loads(self.rfile.read(length))
        type(self).requests_seen.append(body)
        if type(self).fail_next > 0:
            type(self).fail_next -= 1
            self.send_response(500)
            self.end_headers()
            self.wfile.write(b"boom")
            return
        text = "echo:" + body["prompt"][-3:]
        payload = {"choices": [{"text": text, "finish_reason": "stop"}]}
        if body.get("logprobs") and type(self).logprobs_enabled:
            payload["choices"][0]["logprobs"] = {
                "tokens": ["1"],
                "token_logprobs": [math.log(0.6)],
                "top_logprobs": [{"1": math.log(0.6), "0": math.log(0.4)}],
            }
        data = json.dumps(payload).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, *args):
        pass


@pytest.fixture()
def stub_server():
    _StubHandler.fail_next = 0
    _StubHandler.requests_seen = []
    _StubHandler.logprobs_enabled = True
    server = HTTPServer(("127.0.0.1", 0), _StubHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_port}/v1/completions"
    server.shutdown()


class TestHttpEngine:
    def test_round_trip_and_body_shape(self, stub_server):
        engine = HttpEngine(stub_server, model="tiny")
        response = engine.complete(
            CompletionRequest(
                prompt="abc",
                params=SamplingParams(
                    temperature=0.5, top_p=0.9, max_new_tokens=7, stop_sequences=["##"], rng_seed=4
                ),
            )
        )
        assert response.text == "echo:abc"
        body = _StubHandler.requests_seen[-1]
        assert body["prompt"] == "abc"
        assert body["max_tokens"] == 7
        assert body["temperature"] == 0.5
        assert body["top_p"] == 0.9
        assert body["stop"] == ["##"]
        assert body["seed"] == 4
        assert body["model"] == "tiny"

    def test_retries_transport_failures(self, stub_server):
        _StubHandler.fail_next = 2
        engine = HttpEngine(stub_server, backoff=0.01)
        assert engine.complete(request("xyz")).text == "echo:xyz"
        assert len(_StubHandler.requests_seen) == 3

    def test_gives_up_after_retries(self, stub_server):
        _StubHandler.fail_next = 10
        engine = HttpEngine(stub_server, backoff=0.01, max_retries=2)
        with pytest.raises(TransportError):
            engine.complete(request("xyz"))

    def test_unreachable_endpoint_is_transport_error(self):
        engine = HttpEngine("http://127.0.0.1:9/v1/completions", backoff=0.01, max_retries=1)
        with pytest.raises(TransportError):
            engine.complete(request("abc"))

    def test_next_token_distribution_from_alternatives(self, stub_server):
        engine = HttpEngine(stub_server)
        dist = engine.next_token_distribution("prefix", ["0", "1"])
        assert dist.probability("1") == pytest.approx(0.6, abs=1e-9)
        assert dist.probability("0") == pytest.approx(0.4, abs=1e-9)

    def test_missing_candidate_gets_floor_probability(self, stub_server):
        engine = HttpEngine(stub_server)
        dist = engine.next_token_distribution("prefix", ["1", "z"])
        # "z" is absent from the top alternatives; it gets the smallest
        # reported probability (0.4) before renormalization
        assert dist.probability("z") == pytest.approx(0.4 / 1.0, abs=1e-9)

    def test_capability_error_without_logprobs(self, stub_server):
        _StubHandler.logprobs_enabled = False
        engine = HttpEngine(stub_server)
        with pytest.raises(CapabilityError):
            engine.next_token_distribution("prefix", ["0", "1"])

    def test_engines_without_logprob_support_raise(self):
        with pytest.raises(CapabilityError):
            SubtreeMockEngine().next_token_distribution("x1\n", ["0", "1"])
