"""Marginal-distribution studies of the crossover operator.

Two explicit distributions are compared: the univariate marginal model
(per-position '1' frequency among the parents) and the operator's implicit
model, read off a logprob-capable engine one bit position at a time. The
ordering-bias study measures how parent sort order skews offspring scores.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .backends import CompletionEngine, SamplingParams
from .binary import BitstringSpec, leading_ones, onemax
from .codec import CODEC_PLAIN, decode, encode
from .core import Individual, RngStream, RunLog, NULL_LOG
from .operator import OffspringParser, PromptTemplate, ORDER_GIVEN, format_prompt, lmx

EngineOrFactory = Union[CompletionEngine, Callable[[Sequence[str]], CompletionEngine]]

SORT_ONES = "ones"
SORT_LEADING_ONES = "leading-ones"
ORDER_ASC = "ascending"
ORDER_DESC = "descending"
ORDER_RAND = "random"


@dataclass
class MarginalDistribution:
    """Per-position probability of a '1'."""

    p_one: tuple[float, ...]

    def __post_init__(self) -> None:
        if any(not 0.0 <= p <= 1.0 for p in self.p_one):
            raise ValueError("marginals must lie in [0, 1]")

    def __len__(self) -> int:
        return len(self.p_one)


def umda_marginals(parents: Sequence[str]) -> MarginalDistribution:
    """Relative frequency of '1' at each position across the parents."""
    if not parents:
        raise ValueError("parents must be non-empty")
    length = len(parents[0])
    if any(len(p) != length for p in parents):
        raise ValueError("parents must share one length")
    m = len(parents)
    return MarginalDistribution(
        tuple(sum(1 for p in parents if p[j] == "1") / m for j in range(length))
    )


def lmx_marginals(
    parents: Sequence[str],
    engine: CompletionEngine,
    template: Optional[PromptTemplate] = None,
    rng: Optional[RngStream] = None,
    codec: str = CODEC_PLAIN,
    temperature: float = 1.0,
) -> MarginalDistribution:
    """Implicit per-position marginals extracted from an engine.

    Builds the parent prompt, then walks the offspring one position at a
    time: at each step the probability of '1' is read from
    next_token_distribution over {"0", "1"}, and the higher-probability bit
    (ties to '0') is committed to the prefix before moving on.
    """
    if not parents:
        raise ValueError("parents must be non-empty")
    template = template or PromptTemplate()
    rng = rng or RngStream(0, "lmx-marginals")
    length = len(parents[0])
    prompt = format_prompt(
        [Individual(encode(p, codec)) for p in parents], template, rng
    )
    committed = ""
    p_one: list[float] = []
    for _ in range(length):
        dist = engine.next_token_distribution(prompt + committed, ["0", "1"], temperature)
        p = dist.probability("1")
        p_one.append(p)
        bit = "1" if p > dist.probability("0") else "0"
        committed += encode(bit, codec)
    return MarginalDistribution(tuple(p_one))


def mean_abs_diff(a: MarginalDistribution, b: MarginalDistribution) -> float:
    """Mean absolute per-position difference; a pseudometric on
    equal-length distributions."""
    if len(a) != len(b):
        raise ValueError("distributions must have equal length")
    return sum(abs(x - y) for x, y in zip(a.p_one, b.p_one)) / len(a)


def _resolve_engine(engine: EngineOrFactory, parents: Sequence[str]) -> CompletionEngine:
    if isinstance(engine, CompletionEngine):
        return engine
    return engine(parents)


def sample_parents_from(probs: Sequence[float], m: int, rng: RngStream) -> list[str]:
    """m bitstrings with independent per-position Bernoulli(probs) bits."""
    return [
        "".join("1" if rng.uniform() < p else "0" for p in probs) for _ in range(m)
    ]


@dataclass
class EdaCompareRow:
    parent_count: int
    mean_diff: float
    std_diff: float


def eda_compare_experiment(
    length: int,
    parent_counts: Sequence[int],
    repeats: int,
    engine: EngineOrFactory,
    rng: RngStream,
    template: Optional[PromptTemplate] = None,
    codec: str = CODEC_PLAIN,
) -> list[EdaCompareRow]:
    """How closely the implicit marginals track the explicit ones as the
    parent count grows.

    Per repeat: draw a per-position probability vector uniformly from
    [0, 1]; for each parent count m, sample m parents from it and measure
    mean_abs_diff between the two marginal extractions. Rows carry the mean
    and standard deviation over repeats.
    """
    diffs: dict[int, list[float]] = {m: [] for m in parent_counts}
    for rep in range(repeats):
        rep_rng = rng.child(f"repeat-{rep}")
        probs = [rep_rng.uniform() for _ in range(length)]
        for m in parent_counts:
            parents = sample_parents_from(probs, m, rep_rng.child(f"parents-{m}"))
            resolved = _resolve_engine(engine, parents)
            implicit = lmx_marginals(
                parents,
                resolved,
                template,
                rep_rng.child(f"order-{m}"),
                codec=codec,
            )
            diffs[m].append(mean_abs_diff(umda_marginals(parents), implicit))
    return [
        EdaCompareRow(m, float(np.mean(diffs[m])), float(np.std(diffs[m])))
        for m in parent_counts
    ]


@dataclass
class OrderingBiasResult:
    """Offspring score counts per parent ordering."""

    sort_key: str
    counts: dict[str, Counter]

    def rows(self) -> list[tuple[str, int, int]]:
        out = []
        for order in sorted(self.counts):
            for score in sorted(self.counts[order]):
                out.append((order, score, self.counts[order][score]))
        return out


def _score_fn(sort_key: str) -> Callable[[str], int]:
    if sort_key == SORT_ONES:
        return onemax
    if sort_key == SORT_LEADING_ONES:
        return leading_ones
    raise ValueError(f"unknown sort key: {sort_key!r}")


def ordering_bias_experiment(
    length: int,
    sort_key: str,
    orders: Sequence[str],
    experiments: int,
    children_per_experiment: int,
    engine: EngineOrFactory,
    rng: RngStream,
    parents_per_experiment: int = 5,
    codec: str = CODEC_PLAIN,
    params: Optional[SamplingParams] = None,
    log: RunLog = NULL_LOG,
    max_calls_per_quota: int = 10,
) -> OrderingBiasResult:
    """Score offspring under each parent ordering policy.

    Per experiment a fresh random parent set is drawn; for every ordering
    the same parents are sorted by the sort key (or shuffled), fed through
    the crossover operator until the per-experiment child quota is met, and
    the children's scores are tallied.
    """
    score = _score_fn(sort_key)
    spec = BitstringSpec(length, codec)
    template = PromptTemplate(ordering=ORDER_GIVEN)
    parser = OffspringParser(validator=spec.is_valid, max_children=children_per_experiment)
    counts: dict[str, Counter] = {order: Counter() for order in orders}
    for exp in range(experiments):
        exp_rng = rng.child(f"experiment-{exp}")
        parents = [
            "".join("1" if exp_rng.uniform() < 0.5 else "0" for _ in range(length))
            for _ in range(parents_per_experiment)
        ]
        resolved = _resolve_engine(engine, parents)
        for order in orders:
            if order == ORDER_RAND:
                arranged = list(parents)
                exp_rng.child(f"shuffle-{order}").shuffle(arranged)
            elif order == ORDER_ASC:
                arranged = sorted(parents, key=score)
            elif order == ORDER_DESC:
                arranged = sorted(parents, key=score, reverse=True)
            else:
                raise ValueError(f"unknown ordering: {order!r}")
            individuals = [Individual(encode(p, codec)) for p in arranged]
            gathered = 0
            call_rng = exp_rng.child(f"calls-{order}")
            for call in range(max_calls_per_quota):
                if gathered >= children_per_experiment:
                    break
                call_params = params or SamplingParams()
                call_params = SamplingParams(
                    temperature=call_params.temperature,
                    top_k=call_params.top_k,
                    top_p=call_params.top_p,
                    max_new_tokens=call_params.max_new_tokens,
                    stop_sequences=list(call_params.stop_sequences),
                    rng_seed=call_rng.child(f"call-{call}").fresh_seed(),
                )
                children = lmx(
                    individuals, resolved, template, parser, call_params, call_rng, log
                )
                for child in children:
                    if gathered >= children_per_experiment:
                        break
                    bits = decode(child, codec)
                    if bits is None:
                        continue
                    counts[order][score(bits)] += 1
                    gathered += 1
    return OrderingBiasResult(sort_key=sort_key, counts=counts)
