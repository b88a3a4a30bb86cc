"""Completion engines: the autoregressive text-completion contract and its
interchangeable implementations.

Engines share one contract: complete() turns a prompt plus sampling
parameters into text, and logprob-capable engines additionally expose
next_token_distribution() -- renormalized probabilities over a caller-chosen
candidate token set. Implementations here:

  * HttpEngine       -- client for a minimal JSON completions protocol.
  * UmdaMockEngine   -- samples each bit of an offspring independently from
                        the per-position '1' frequencies of the parents it
                        sees in the prompt; an exact univariate-marginal
                        stand-in for a language model on bitstrings.
  * SubtreeMockEngine-- parses prompt lines as math expressions and emits a
                        subtree-exchange child; a deterministic stand-in for
                        symbolic-regression runs.
  * ReplayEngine     -- canned (prompt, response) traffic, plus a recording
                        wrapper for capturing live traffic.

All engines honor stop sequences (returned text never contains one) and are
deterministic at temperature 0. Mock engines derive per-call randomness from
the request itself (prompt text and per-request seed), so concurrent calls
stay reproducible.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

from . import codec as codec_mod
from . import exprs
from .core import RngStream, RunLog, NULL_LOG

FINISH_STOP = "stop-sequence"
FINISH_LENGTH = "length"
FINISH_ERROR = "error"

RENORM_TOLERANCE = 1e-9


class EngineError(RuntimeError):
    """Engine-internal failure; not retryable."""


class TransportError(EngineError):
    """Transport-level failure (connection, timeout, 5xx); retryable."""


class CapabilityError(EngineError):
    """The engine lacks a capability the caller requires (e.g. logprobs)."""


class ReplayMissError(EngineError):
    """Replay engine saw a prompt with no remaining recorded response."""


class ConfigurationError(ValueError):
    """Engine constructed with unusable arguments."""


@dataclass
class SamplingParams:
    temperature: float = 1.0
    top_k: Optional[int] = None
    top_p: float = 1.0
    max_new_tokens: int = 150
    stop_sequences: list[str] = field(default_factory=list)
    rng_seed: Optional[int] = None

    def __post_init__(self) -> None:
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.top_k is not None and self.top_k < 1:
            raise ValueError("top_k must be >= 1 or None for unlimited")
        if not 0.0 < self.top_p <= 1.0:
            raise ValueError("top_p must be in (0, 1]")
        if self.max_new_tokens < 1:
            raise ValueError("max_new_tokens must be >= 1")


@dataclass
class TokenLogprob:
    token: str
    logprob: float
    top_alternatives: dict[str, float] = field(default_factory=dict)


@dataclass
class CompletionRequest:
    prompt: str
    params: SamplingParams = field(default_factory=SamplingParams)
    want_logprobs: bool = False
    logprob_top_n: int = 5


@dataclass
class CompletionResponse:
    text: str
    finish_reason: str = FINISH_STOP
    token_logprobs: Optional[list[TokenLogprob]] = None


@dataclass
class NextTokenDistribution:
    prefix: str
    candidates: dict[str, float]

    def __post_init__(self) -> None:
        total = sum(self.candidates.values())
        if abs(total - 1.0) > RENORM_TOLERANCE:
            raise ValueError(f"candidate probabilities sum to {total}, not 1")

    def probability(self, token: str) -> float:
        return self.candidates.get(token, 0.0)


class CompletionEngine:
    """Base contract; subclasses must implement complete()."""

    supports_logprobs = False

    def complete(self, req: CompletionRequest) -> CompletionResponse:
        raise NotImplementedError

    def next_token_distribution(
        self, prefix: str, candidates: Sequence[str], temperature: float = 1.0
    ) -> NextTokenDistribution:
        raise CapabilityError(
            f"{type(self).__name__} does not expose per-token probabilities"
        )


def truncate_at_stop(text: str, stop_sequences: Sequence[str]) -> tuple[str, bool]:
    """Cut text at the first occurrence of any stop sequence (excluded)."""
    cut = None
    for stop in stop_sequences:
        if not stop:
            continue
        idx = text.find(stop)
        if idx != -1 and (cut is None or idx < cut):
            cut = idx
    if cut is None:
        return text, False
    return text[:cut], True


def _call_stream(seed: int, prompt: str, request_seed: Optional[int], deterministic: bool) -> RngStream:
    digest = hashlib.sha256(prompt.encode("utf-8")).hexdigest()[:16]
    label = f"call/{digest}" if deterministic else f"call/{digest}/{request_seed}"
    return RngStream(seed, label)


def _temperature_weights(weights: Sequence[float], temperature: float) -> list[float]:
    """Rescale nonnegative weights by exponent 1/temperature.

    temperature 0 is greedy: all mass on the largest weight, first index
    winning ties.
    """
    if temperature == 0:
        best = max(range(len(weights)), key=lambda i: weights[i])
        return [1.0 if i == best else 0.0 for i in range(len(weights))]
    if temperature == 1.0:
        return list(weights)
    return [w ** (1.0 / temperature) if w > 0 else 0.0 for w in weights]


def _renormalize(weights: Sequence[float]) -> list[float]:
    total = sum(weights)
    if total <= 0:
        raise EngineError("no probability mass on the supplied candidates")
    if total == 1.0:
        return list(weights)
    return [w / total for w in weights]


def _nucleus_filter(probs: Sequence[float], top_k: Optional[int], top_p: float) -> list[float]:
    """Standard top-k then top-p filtering over a small candidate set.

    Keeps the top_k most probable tokens, then the smallest prefix of the
    remaining tokens whose cumulative probability reaches top_p; everything
    else gets zero mass. Earlier indices win probability ties.
    """
    order = sorted(range(len(probs)), key=lambda i: (-probs[i], i))
    kept = order[:top_k] if top_k is not None else order
    cumulative = 0.0
    nucleus = []
    for i in kept:
        nucleus.append(i)
        cumulative += probs[i]
        if cumulative >= top_p:
            break
    return _renormalize([probs[i] if i in nucleus else 0.0 for i in range(len(probs))])


# --- UMDA mock ----------------------------------------------------------------


class UmdaMockEngine(CompletionEngine):
    """Univariate-marginal mock over fixed-length bitstrings.

    The engine models the parents it finds in each prompt: every line that
    decodes (under the configured codec) to a bitstring of the configured
    length counts as a parent, and offspring bits are sampled independently
    from the per-position '1' frequencies of those parents. Prompts with no
    decodable parent lines fall back to the parents supplied at
    construction. Bit positions are independent by construction, so
    next_token_distribution() reports exactly the marginal of the position
    the prefix has reached.

    Token accounting: one token per bit (including its underscore under the
    underscore codec) and one per newline.
    """

    supports_logprobs = True

    def __init__(
        self,
        parents: Sequence[str],
        codec: str = codec_mod.CODEC_PLAIN,
        children_per_call: int = 3,
        seed: int = 0,
    ) -> None:
        if not parents:
            raise ConfigurationError("parent list must be non-empty")
        lengths = {len(p) for p in parents}
        if len(lengths) != 1:
            raise ConfigurationError("parents must share one length")
        if not all(codec_mod.is_bitstring(p) for p in parents):
            raise ConfigurationError("parents must be bitstrings")
        if children_per_call < 1:
            raise ConfigurationError("children_per_call must be >= 1")
        self.length = lengths.pop()
        self.codec = codec
        self.children_per_call = children_per_call
        self.seed = seed
        self._default_counts = self._count_ones(parents)

    def _count_ones(self, parents: Sequence[str]) -> tuple[list[int], int]:
        counts = [sum(1 for p in parents if p[j] == "1") for j in range(self.length)]
        return counts, len(parents)

    def _parents_from_prompt(self, prompt: str) -> tuple[list[int], int]:
        found = []
        for line in prompt.split("\n"):
            decoded = codec_mod.decode(line.strip(), self.codec)
            if decoded is not None and len(decoded) == self.length:
                found.append(decoded)
        if not found:
            return self._default_counts
        return self._count_ones(found)

    def marginals(self, prompt: str) -> list[float]:
        counts, m = self._parents_from_prompt(prompt)
        return [c / m for c in counts]

    def _bit_weights(self, counts: tuple[list[int], int], position: int) -> tuple[int, int]:
        ones = counts[0][position]
        return counts[1] - ones, ones  # (weight of '0', weight of '1')

    def complete(self, req: CompletionRequest) -> CompletionResponse:
        if not req.prompt:
            raise ValueError("prompt must be non-empty")
        params = req.params
        counts = self._parents_from_prompt(req.prompt)
        rng = _call_stream(self.seed, req.prompt, params.rng_seed, params.temperature == 0)
        lines: list[str] = []
        logprobs: list[TokenLogprob] = []
        tokens_left = params.max_new_tokens
        truncated = False
        for _ in range(self.children_per_call):
            bits = []
            for j in range(self.length):
                if tokens_left <= 0:
                    truncated = True
                    break
                zeros, ones = self._bit_weights(counts, j)
                w0, w1 = _temperature_weights([zeros, ones], params.temperature)
                p0, p1 = _renormalize([w0, w1])
                _, p_one = _nucleus_filter([p0, p1], params.top_k, params.top_p)
                bit = "1" if (p_one == 1.0 or (0.0 < p_one and rng.uniform() < p_one)) else "0"
                bits.append(bit)
                tokens_left -= 1
                if req.want_logprobs:
                    p = p_one if bit == "1" else 1.0 - p_one
                    logprobs.append(
                        TokenLogprob(
                            token=bit,
                            logprob=math.log(p) if p > 0 else -math.inf,
                            top_alternatives={
                                "0": 1.0 - p_one,
                                "1": p_one,
                            },
                        )
                    )
            if truncated:
                if bits:
                    lines.append(codec_mod.encode("".join(bits), self.codec))
                break
            lines.append(codec_mod.encode("".join(bits), self.codec))
            if tokens_left <= 0:
                truncated = True
                break
            tokens_left -= 1  # the newline after a full offspring line
        text = "\n".join(lines)
        text, stopped = truncate_at_stop(text, params.stop_sequences)
        if stopped:
            reason = FINISH_STOP
        elif truncated:
            reason = FINISH_LENGTH
        else:
            reason = FINISH_STOP
        return CompletionResponse(
            text=text,
            finish_reason=reason,
            token_logprobs=logprobs if req.want_logprobs else None,
        )

    def _position_from_prefix(self, prefix: str) -> int:
        partial = prefix.rsplit("\n", 1)[-1]
        if self.codec == codec_mod.CODEC_UNDERSCORE and partial.endswith("_"):
            partial = partial[:-1]
        if partial == "":
            return 0
        decoded = codec_mod.decode(partial, self.codec)
        if decoded is None:
            raise EngineError(f"cannot locate a bit position after {partial!r}")
        if len(decoded) >= self.length:
            raise EngineError("offspring prefix is already complete")
        return len(decoded)

    def next_token_distribution(
        self, prefix: str, candidates: Sequence[str], temperature: float = 1.0
    ) -> NextTokenDistribution:
        if not candidates:
            raise ValueError("candidates must be non-empty")
        counts = self._parents_from_prompt(prefix)
        position = self._position_from_prefix(prefix)
        zeros, ones = self._bit_weights(counts, position)
        raw = {"0": zeros, "1": ones}
        weights = [float(raw.get(c, 0)) for c in candidates]
        weights = _temperature_weights(weights, temperature)
        probs = _renormalize(weights)
        return NextTokenDistribution(prefix, dict(zip(candidates, probs)))


def make_umda_mock(
    parents: Sequence[str],
    codec: str = codec_mod.CODEC_PLAIN,
    children_per_call: int = 3,
    seed: int = 0,
) -> UmdaMockEngine:
    return UmdaMockEngine(parents, codec, children_per_call, seed)


# --- subtree mock ---------------------------------------------------------


class SubtreeMockEngine(CompletionEngine):
    """Deterministic stand-in for symbolic-regression runs.

    Each prompt line that parses as a math expression is a parent; the
    completion is one line: the serialization of a subtree exchange between
    two of those parents. Unparseable prompts yield empty completions.
    Token accounting treats each output character as one token.
    """

    def __init__(self, seed: int = 0) -> None:
        self.seed = seed

    def complete(self, req: CompletionRequest) -> CompletionResponse:
        if not req.prompt:
            raise ValueError("prompt must be non-empty")
        params = req.params
        parents = []
        for line in req.prompt.split("\n"):
            tree = exprs.try_parse(line.strip()) if line.strip() else None
            if tree is not None:
                parents.append(tree)
        if not parents:
            return CompletionResponse(text="", finish_reason=FINISH_STOP)
        rng = _call_stream(self.seed, req.prompt, params.rng_seed, params.temperature == 0)
        if len(parents) >= 2:
            p1, p2 = rng.sample(parents, 2)
        else:
            p1 = p2 = parents[0]
        child = exprs.subtree_crossover(p1, p2, rng)
        text = exprs.serialize(child)
        truncated = len(text) > params.max_new_tokens
        if truncated:
            text = text[: params.max_new_tokens]
        text, stopped = truncate_at_stop(text, params.stop_sequences)
        if stopped:
            reason = FINISH_STOP
        else:
            reason = FINISH_LENGTH if truncated else FINISH_STOP
        return CompletionResponse(text=text, finish_reason=reason)


def make_subtree_mock(seed: int = 0) -> SubtreeMockEngine:
    return SubtreeMockEngine(seed)


# --- replay / recording -----------------------------------------------------


class ReplayEngine(CompletionEngine):
    """Replays recorded (prompt, response-text) traffic by exact prompt
    match; responses for a repeated prompt return in recorded order."""

    def __init__(self, recording: Iterable[tuple[str, str]]) -> None:
        self._queues: dict[str, deque[str]] = {}
        for prompt, response in recording:
            self._queues.setdefault(prompt, deque()).append(response)

    @classmethod
    def from_jsonl(cls, path: str) -> "ReplayEngine":
        pairs = []
        with open(path, "r", encoding="utf-8") as handle:
            for line in handle:
                if line.strip():
                    record = json.loads(line)
                    pairs.append((record["prompt"], record["response"]))
        return cls(pairs)

    def complete(self, req: CompletionRequest) -> CompletionResponse:
        queue = self._queues.get(req.prompt)
        if not queue:
            raise ReplayMissError(f"no recorded response for prompt {req.prompt!r}")
        text = queue.popleft()
        text, _ = truncate_at_stop(text, req.params.stop_sequences)
        return CompletionResponse(text=text, finish_reason=FINISH_STOP)


class RecordingEngine(CompletionEngine):
    """Pass-through wrapper that records (prompt, response) verbatim."""

    def __init__(self, inner: CompletionEngine) -> None:
        self.inner = inner
        self.recording: list[tuple[str, str]] = []

    @property
    def supports_logprobs(self) -> bool:  # type: ignore[override]
        return self.inner.supports_logprobs

    def complete(self, req: CompletionRequest) -> CompletionResponse:
        response = self.inner.complete(req)
        self.recording.append((req.prompt, response.text))
        return response

    def next_token_distribution(
        self, prefix: str, candidates: Sequence[str], temperature: float = 1.0
    ) -> NextTokenDistribution:
        return self.inner.next_token_distribution(prefix, candidates, temperature)

    def save_jsonl(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as handle:
            for prompt, response in self.recording:
                handle.write(json.dumps({"prompt": prompt, "response": response}) + "\n")


def make_replay_engine(recording: Iterable[tuple[str, str]]) -> ReplayEngine:
    return ReplayEngine(recording)


# --- HTTP engine -----------------------------------------------------------


class HttpEngine(CompletionEngine):
    """Client for a minimal JSON completions protocol.

    POST {endpoint} with body {prompt, max_tokens, temperature, top_p,
    stop, logprobs, seed [, top_k, model]}; the response carries
    {choices: [{text, finish_reason, logprobs?}]}. Transport failures are
    retried up to max_retries times with exponential backoff.

    Per-token probabilities are approximated from top-n logprob
    alternatives of a 1-token completion; candidates missing from the
    top-n get the smallest reported probability, and the approximation is
    flagged in the run log.
    """

    supports_logprobs = True

    def __init__(
        self,
        endpoint: str,
        model: Optional[str] = None,
        auth_env_var: Optional[str] = None,
        timeout: float = 60.0,
        max_retries: int = 3,
        backoff: float = 0.25,
        logprob_top_n: int = 10,
        log: RunLog = NULL_LOG,
    ) -> None:
        self.endpoint = endpoint
        self.model = model
        self.auth_env_var = auth_env_var
        self.timeout = timeout
        self.max_retries = max_retries
        self.backoff = backoff
        self.logprob_top_n = logprob_top_n
        self.log = log

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self.auth_env_var:
            token = os.environ.get(self.auth_env_var, "")
            if token:
                headers["Authorization"] = f"Bearer {token}"
        return headers

    def _post(self, body: dict) -> dict:
        import requests

        last_error: Optional[Exception] = None
        for attempt in range(self.max_retries + 1):
            try:
                response = requests.post(
                    self.endpoint, json=body, headers=self._headers(), timeout=self.timeout
                )
            except requests.RequestException as err:
                last_error = TransportError(f"transport failure: {err}")
            else:
                if response.status_code >= 500 or response.status_code == 429:
                    last_error = TransportError(
                        f"server error {response.status_code}: {response.text[:200]}"
                    )
                elif response.status_code >= 400:
                    raise EngineError(
                        f"request rejected ({response.status_code}): {response.text[:500]}"
                    )
                else:
                    return response.json()
            if attempt < self.max_retries:
                time.sleep(self.backoff * (2**attempt))
        raise last_error  # type: ignore[misc]

    def _body(self, req: CompletionRequest) -> dict:
        params = req.params
        body: dict = {
            "prompt": req.prompt,
            "max_tokens": params.max_new_tokens,
            "temperature": params.temperature,
            "top_p": params.top_p,
            "stop": params.stop_sequences or None,
            "logprobs": req.logprob_top_n if req.want_logprobs else None,
            "seed": params.rng_seed,
        }
        if params.top_k is not None:
            body["top_k"] = params.top_k
        if self.model is not None:
            body["model"] = self.model
        return body

    @staticmethod
    def _parse_logprobs(payload: Optional[dict]) -> Optional[list[TokenLogprob]]:
        if not payload:
            return None
        tokens = payload.get("tokens") or []
        token_lps = payload.get("token_logprobs") or []
        tops = payload.get("top_logprobs") or [None] * len(tokens)
        out = []
        for token, lp, top in zip(tokens, token_lps, tops):
            out.append(TokenLogprob(token=token, logprob=lp, top_alternatives=dict(top or {})))
        return out

    def complete(self, req: CompletionRequest) -> CompletionResponse:
        if not req.prompt:
            raise ValueError("prompt must be non-empty")
        payload = self._post(self._body(req))
        try:
            choice = payload["choices"][0]
        except (KeyError, IndexError) as err:
            raise EngineError(f"malformed completion response: {err}") from err
        reason = choice.get("finish_reason", "stop")
        finish = {
            "stop": FINISH_STOP,
            "stop_sequence": FINISH_STOP,
            "length": FINISH_LENGTH,
        }.get(reason, FINISH_ERROR)
        text, _ = truncate_at_stop(choice.get("text", ""), req.params.stop_sequences)
        return CompletionResponse(
            text=text,
            finish_reason=finish,
            token_logprobs=self._parse_logprobs(choice.get("logprobs")),
        )

    def next_token_distribution(
        self, prefix: str, candidates: Sequence[str], temperature: float = 1.0
    ) -> NextTokenDistribution:
        if not candidates:
            raise ValueError("candidates must be non-empty")
        req = CompletionRequest(
            prompt=prefix,
            params=SamplingParams(temperature=1.0, max_new_tokens=1),
            want_logprobs=True,
            logprob_top_n=self.logprob_top_n,
        )
        response = self.complete(req)
        if not response.token_logprobs:
            raise CapabilityError("server returned no logprobs for a 1-token completion")
        alternatives = response.token_logprobs[0].top_alternatives
        if not alternatives:
            raise CapabilityError("server returned no top-n alternatives")
        floor = min(math.exp(lp) for lp in alternatives.values())
        weights = []
        approximated = []
        for cand in candidates:
            if cand in alternatives:
                weights.append(math.exp(alternatives[cand]))
            else:
                weights.append(floor)
                approximated.append(cand)
        if approximated:
            self.log.event(
                "logprob-approximation",
                None,
                prefix=prefix,
                missing_candidates=approximated,
                floor_probability=floor,
            )
        weights = _temperature_weights(weights, temperature)
        probs = _renormalize(weights)
        return NextTokenDistribution(prefix, dict(zip(candidates, probs)))
