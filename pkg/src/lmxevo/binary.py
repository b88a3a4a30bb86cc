"""Binary-string domain: validity, OneMax/LeadingOnes fitness, the
one-point-crossover baseline, neighborhoods, and variation metrics.

Genotypes are canonical bitstrings ("0101..."); the underscore codec is
applied only at the engine boundary.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

from .backends import CompletionEngine, SamplingParams
from .codec import (
    CODEC_PLAIN,
    CODEC_UNDERSCORE,
    decode,
    decode_underscore,
    encode,
    encode_underscore,
    is_bitstring,
)
from .core import Individual, RngStream
from .operator import OffspringParser, PromptTemplate, lmx

__all__ = [
    "BitstringSpec",
    "BinaryDomain",
    "encode_underscore",
    "decode_underscore",
    "onemax",
    "leading_ones",
    "one_point_crossover_mutate",
    "hamming",
    "neighborhood",
    "variation_metrics",
    "default_sampling",
]

FITNESS_ONEMAX = "onemax"
FITNESS_LEADING_ONES = "leading-ones"


@dataclass
class BitstringSpec:
    length: int
    codec: str = CODEC_PLAIN

    def __post_init__(self) -> None:
        if self.length < 1:
            raise ValueError("length must be >= 1")
        if self.codec not in (CODEC_PLAIN, CODEC_UNDERSCORE):
            raise ValueError(f"unknown codec: {self.codec!r}")

    def is_valid(self, text: str) -> bool:
        """Valid genotypes decode to exactly `length` bits."""
        bits = decode(text, self.codec)
        return bits is not None and len(bits) == self.length and is_bitstring(bits)


def onemax(bits: str) -> int:
    return bits.count("1")


def leading_ones(bits: str) -> int:
    count = 0
    for c in bits:
        if c != "1":
            break
        count += 1
    return count


def hamming(a: str, b: str) -> int:
    if len(a) != len(b):
        raise ValueError("bitstrings must have equal length")
    return sum(1 for x, y in zip(a, b) if x != y)


def one_point_crossover_mutate(p1: str, p2: str, flip_prob: float, rng: RngStream) -> str:
    """One-point crossover, then independent per-bit flips.

    For length-1 strings there is no interior cut, so the child is p1.
    """
    if len(p1) != len(p2):
        raise ValueError("parents must have equal length")
    if not 0.0 <= flip_prob <= 1.0:
        raise ValueError("flip_prob must be in [0, 1]")
    length = len(p1)
    if length > 1:
        cut = 1 + rng.randrange(length - 1)
        child = list(p1[:cut] + p2[cut:])
    else:
        child = list(p1)
    for i in range(length):
        if flip_prob > 0 and rng.uniform() < flip_prob:
            child[i] = "1" if child[i] == "0" else "0"
    return "".join(child)


def neighborhood(ref: str) -> list[str]:
    """All strings at Hamming distance exactly 1 from ref."""
    out = []
    for i in range(len(ref)):
        flipped = "1" if ref[i] == "0" else "0"
        out.append(ref[:i] + flipped + ref[i + 1:])
    return out


def default_sampling(seed: Optional[int] = None) -> SamplingParams:
    """Sampling defaults for bitstring crossover: top-p 0.8, top-k 30."""
    return SamplingParams(temperature=1.0, top_k=30, top_p=0.8, max_new_tokens=150, rng_seed=seed)


def variation_metrics(
    parent_set: Sequence[str],
    engine: CompletionEngine,
    trials: int,
    children_per_trial: int,
    spec: BitstringSpec,
    rng: RngStream,
    params: Optional[SamplingParams] = None,
) -> tuple[float, int]:
    """Repeated crossover on one parent set.

    Runs `trials` crossover calls; each call's completion is truncated to
    the first `children_per_trial` lines, which count as offspring whether
    or not they are valid. Returns (percent of valid offspring, number of
    distinct valid offspring not present among the parents).
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    template = PromptTemplate(ordering="given")
    take_lines = OffspringParser(
        validator=lambda _: True, max_children=children_per_trial
    )
    total = 0
    valid = 0
    novel: set[str] = set()
    parents = [Individual(encode(p, spec.codec)) for p in parent_set]
    for trial in range(trials):
        call_params = params or default_sampling()
        call_params = SamplingParams(
            temperature=call_params.temperature,
            top_k=call_params.top_k,
            top_p=call_params.top_p,
            max_new_tokens=call_params.max_new_tokens,
            stop_sequences=list(call_params.stop_sequences),
            rng_seed=rng.child(f"trial-{trial}").fresh_seed(),
        )
        lines = lmx(parents, engine, template, take_lines, call_params, rng.child(f"order-{trial}"))
        for line in lines:
            total += 1
            if spec.is_valid(line):
                valid += 1
                bits = decode(line, spec.codec)
                if bits not in parent_set:
                    novel.add(bits)
    valid_pct = 100.0 * valid / total if total else 0.0
    return valid_pct, len(novel)


class BinaryDomain:
    """Domain adapter used by the evolution loops."""

    def __init__(self, spec: BitstringSpec, fitness_kind: str = FITNESS_ONEMAX) -> None:
        if fitness_kind not in (FITNESS_ONEMAX, FITNESS_LEADING_ONES):
            raise ValueError(f"unknown fitness kind: {fitness_kind!r}")
        self.spec = spec
        self.fitness_kind = fitness_kind

    def init_genotypes(self, n: int, rng: RngStream) -> list[str]:
        """Uniform i.i.d. random bits."""
        return [
            "".join("1" if rng.uniform() < 0.5 else "0" for _ in range(self.spec.length))
            for _ in range(n)
        ]

    def validate(self, text: str) -> bool:
        return self.spec.is_valid(text)

    def canonical(self, text: str) -> Optional[str]:
        return decode(text, self.spec.codec)

    def encode_for_prompt(self, bits: str) -> str:
        return encode(bits, self.spec.codec)

    def fitness(self, text: str) -> Optional[float]:
        bits = decode(text, self.spec.codec) if not is_bitstring(text) else text
        if bits is None or len(bits) != self.spec.length:
            return None
        if self.fitness_kind == FITNESS_ONEMAX:
            return float(onemax(bits))
        return float(leading_ones(bits))

    def descriptor(self, text: str) -> Optional[tuple[float, ...]]:
        """Fraction of ones; a 1-D behavior coordinate in [0, 1]."""
        bits = decode(text, self.spec.codec) if not is_bitstring(text) else text
        if bits is None:
            return None
        return (onemax(bits) / self.spec.length,)

    @property
    def optimum(self) -> float:
        return float(self.spec.length)
