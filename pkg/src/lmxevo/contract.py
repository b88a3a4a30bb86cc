"""Engine contract checks, runnable against any completion engine.

These are the behavioral guarantees every engine implementation must hold:
temperature-0 determinism, stop-sequence exclusion, seeded reproducibility,
logprob/token accounting, and renormalized candidate distributions. The
test suite applies them to the bundled mocks; a server implementing the
HTTP completions protocol can be certified by pointing them at an HttpEngine
wired to it.
"""

from __future__ import annotations

from .backends import CompletionEngine, CompletionRequest, SamplingParams


def check_temperature_zero_determinism(
    engine: CompletionEngine, prompt: str = "1\n2\n3\n4\n", max_new_tokens: int = 16
) -> str:
    """Two greedy completions of the same prompt must be identical."""
    responses = [
        engine.complete(
            CompletionRequest(
                prompt=prompt,
                params=SamplingParams(
                    temperature=0.0, max_new_tokens=max_new_tokens, rng_seed=seed
                ),
            )
        )
        for seed in (11, 99)
    ]
    assert responses[0].text == responses[1].text, (
        f"temperature-0 completions differ: {responses[0].text!r} vs {responses[1].text!r}"
    )
    return responses[0].text


def check_seeded_reproducibility(
    engine: CompletionEngine, prompt: str = "1\n2\n3\n4\n", seed: int = 1234,
    temperature: float = 1.0, max_new_tokens: int = 16,
) -> str:
    """Same seed and temperature must reproduce the same sampled text."""
    responses = [
        engine.complete(
            CompletionRequest(
                prompt=prompt,
                params=SamplingParams(
                    temperature=temperature,
                    max_new_tokens=max_new_tokens,
                    rng_seed=seed,
                ),
            )
        )
        for _ in range(2)
    ]
    assert responses[0].text == responses[1].text, (
        f"seeded completions differ: {responses[0].text!r} vs {responses[1].text!r}"
    )
    return responses[0].text


def check_stop_sequence_exclusion(
    engine: CompletionEngine, prompt: str = "1\n2\n3\n4\n", seed: int = 77,
    max_new_tokens: int = 24,
) -> None:
    """A stop sequence taken from a free-running completion must truncate a
    reseeded completion and never appear in the returned text."""
    free = engine.complete(
        CompletionRequest(
            prompt=prompt,
            params=SamplingParams(max_new_tokens=max_new_tokens, rng_seed=seed),
        )
    )
    if not free.text:
        return
    stop = free.text[len(free.text) // 2]
    stopped = engine.complete(
        CompletionRequest(
            prompt=prompt,
            params=SamplingParams(
                max_new_tokens=max_new_tokens, rng_seed=seed, stop_sequences=[stop]
            ),
        )
    )
    assert stop not in stopped.text, f"stop {stop!r} leaked into {stopped.text!r}"
    assert free.text.startswith(stopped.text), (
        f"stopped text {stopped.text!r} is not a prefix of {free.text!r}"
    )


def check_logprob_accounting(
    engine: CompletionEngine, prompt: str = "1\n2\n3\n4\n", top_n: int = 5,
    max_new_tokens: int = 12, seed: int = 5,
) -> None:
    """Logprob entries must cover the returned tokens, each carrying top-n
    alternatives."""
    response = engine.complete(
        CompletionRequest(
            prompt=prompt,
            params=SamplingParams(max_new_tokens=max_new_tokens, rng_seed=seed),
            want_logprobs=True,
            logprob_top_n=top_n,
        )
    )
    assert response.token_logprobs is not None, "engine returned no logprobs"
    joined = "".join(entry.token for entry in response.token_logprobs)
    assert joined == response.text, (
        f"logprob tokens {joined!r} do not reconstruct the text {response.text!r}"
    )
    for entry in response.token_logprobs:
        assert len(entry.top_alternatives) == top_n, (
            f"token {entry.token!r} carries {len(entry.top_alternatives)} "
            f"alternatives, expected {top_n}"
        )


def check_candidate_distribution(
    engine: CompletionEngine, prefix: str = "1\n2\n3\n4\n", candidates: tuple = ("0", "1")
) -> None:
    """Candidate probabilities must renormalize to 1."""
    dist = engine.next_token_distribution(prefix, list(candidates), temperature=1.0)
    total = sum(dist.candidates.values())
    assert abs(total - 1.0) <= 1e-9, f"candidate probabilities sum to {total}"


def run_engine_contract_checks(
    engine: CompletionEngine,
    with_logprobs: bool = True,
    with_candidates: bool = True,
) -> None:
    """The full battery; raises AssertionError on the first violation.

    with_logprobs requires a vocabulary of at least top-n tokens, so it is
    aimed at real model servers; the bitstring mock runs the candidate
    distribution check only.
    """
    check_temperature_zero_determinism(engine)
    check_seeded_reproducibility(engine)
    check_stop_sequence_exclusion(engine)
    if with_logprobs:
        check_logprob_accounting(engine)
    if with_candidates:
        check_candidate_distribution(engine)
