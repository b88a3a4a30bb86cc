"""Shared data model: individuals, populations, run configuration, seeded
RNG streams, and the JSONL run log.

Fitness is maximized everywhere in this package; domains that naturally
minimize must negate internally. Individuals that cannot be evaluated are
filtered out before they enter a population -- fitness, once set, is always
a finite float.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from typing import Callable, IO, Iterable, Optional, Sequence

import numpy as np

# Provenance labels recorded in the run log.
PROV_SEED = "seed"
PROV_LMX = "lmx"
PROV_BASELINE = "baseline-op"
PROV_PRIOR = "prior-injection"

# Run-log event types.
EVENT_EVALUATION = "evaluation"
EVENT_LMX_CALL = "lmx-call"
EVENT_SELECTION = "selection"

# Fitness functions return a finite float for valid genotypes and None for
# genotypes that cannot be evaluated.
FitnessFn = Callable[[str], Optional[float]]


class InitializationError(RuntimeError):
    """Raised when a domain initializer yields zero valid individuals."""


@dataclass
class Individual:
    """A text genotype with cached fitness and optional behavior descriptor."""

    genotype: str
    fitness: Optional[float] = None
    descriptor: Optional[tuple[float, ...]] = None
    provenance: str = PROV_SEED

    def __post_init__(self) -> None:
        if not self.genotype:
            raise ValueError("genotype must be non-empty text")
        if self.fitness is not None and not math.isfinite(self.fitness):
            raise ValueError("fitness must be finite once set")

    @property
    def evaluated(self) -> bool:
        return self.fitness is not None

    def with_fitness(self, fitness: float) -> "Individual":
        return replace(self, fitness=float(fitness))


@dataclass
class Population:
    """Ordered collection of individuals at a given generation.

    Size bounds are the evolution loop's responsibility, not the container's.
    """

    members: list[Individual] = field(default_factory=list)
    generation: int = 0

    def __len__(self) -> int:
        return len(self.members)

    def __iter__(self):
        return iter(self.members)

    def genotypes(self) -> list[str]:
        return [m.genotype for m in self.members]

    def best(self) -> Individual:
        evaluated = [m for m in self.members if m.evaluated]
        if not evaluated:
            raise ValueError("population has no evaluated members")
        return max(evaluated, key=lambda m: m.fitness)


@dataclass
class RunConfig:
    """Knobs of the generational loop.

    selection is either "tournament" (with tournament_size draws) or
    "truncation" (keep the top keep_fraction plus the all-time elite as the
    parent pool, refine merged populations by a top-n cut).
    """

    population_size: int = 10
    parents_per_crossover: int = 3
    generations: int = 10
    rng_seed: int = 0
    selection: str = "truncation"
    tournament_size: int = 3
    keep_fraction: float = 0.5
    prior_injection_prob: float = 0.0
    offspring_cap: int = 3
    duplicate_policy: str = "allow"
    target_fitness: Optional[float] = None

    def validate(self) -> None:
        if self.population_size < 1:
            raise ValueError("population_size must be >= 1")
        if self.parents_per_crossover < 1:
            raise ValueError("parents_per_crossover must be >= 1")
        if self.generations < 0:
            raise ValueError("generations must be >= 0")
        if self.selection not in ("tournament", "truncation"):
            raise ValueError(f"unknown selection policy: {self.selection!r}")
        if self.selection == "tournament" and not (
            1 <= self.tournament_size <= self.population_size
        ):
            raise ValueError("tournament_size must be in [1, population_size]")
        if not 0.0 < self.keep_fraction <= 1.0:
            raise ValueError("keep_fraction must be in (0, 1]")
        if not 0.0 <= self.prior_injection_prob <= 1.0:
            raise ValueError("prior_injection_prob must be in [0, 1]")
        if self.offspring_cap < 1:
            raise ValueError("offspring_cap must be >= 1")
        if self.duplicate_policy not in ("discard", "allow"):
            raise ValueError(f"unknown duplicate_policy: {self.duplicate_policy!r}")


def _derive_seed(seed: int, label: str) -> int:
    digest = hashlib.sha256(f"{seed}|{label}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


class RngStream:
    """Named, splittable random stream.

    The same (seed, label) pair always produces the same sequence, and
    distinct labels yield independent streams, so adding a new consumer
    never perturbs existing ones. Child streams extend the label path.
    """

    def __init__(self, seed: int, label: str = "root") -> None:
        self.seed = int(seed)
        self.label = label
        self.gen = np.random.Generator(np.random.PCG64(_derive_seed(self.seed, label)))

    def child(self, sub_label: str) -> "RngStream":
        return RngStream(self.seed, f"{self.label}/{sub_label}")

    def uniform(self) -> float:
        return float(self.gen.random())

    def randrange(self, n: int) -> int:
        return int(self.gen.integers(0, n))

    def choice(self, seq: Sequence):
        return seq[self.randrange(len(seq))]

    def sample(self, seq: Sequence, k: int) -> list:
        """k draws without replacement when possible, else with replacement."""
        if k <= len(seq):
            idx = self.gen.choice(len(seq), size=k, replace=False)
        else:
            idx = self.gen.integers(0, len(seq), size=k)
        return [seq[int(i)] for i in idx]

    def shuffle(self, items: list) -> None:
        self.gen.shuffle(items)

    def fresh_seed(self) -> int:
        """A 63-bit seed for handing off to an engine call."""
        return int(self.gen.integers(0, 2**63 - 1))


class RunLog:
    """JSONL event sink; one JSON object per line.

    Records carry no timestamps so that two runs with identical seeds and a
    deterministic backend produce byte-identical logs.
    """

    def __init__(self, sink: Optional[IO[str]] = None) -> None:
        self._sink = sink

    def event(self, event: str, generation: Optional[int] = None, **fields) -> None:
        if self._sink is None:
            return
        record = {"event": event, "generation": generation}
        record.update(fields)
        self._sink.write(json.dumps(record, sort_keys=True) + "\n")

    def evaluation(
        self,
        generation: Optional[int],
        genotype: str,
        fitness: Optional[float],
        provenance: str,
        stream: str,
    ) -> None:
        self.event(
            EVENT_EVALUATION,
            generation,
            genotype=genotype,
            fitness=fitness,
            provenance=provenance,
            stream=stream,
        )


NULL_LOG = RunLog(None)


def evaluate_population(
    pop: Population,
    fitness: FitnessFn,
    log: RunLog = NULL_LOG,
    stream_label: str = "",
) -> Population:
    """Evaluate every unevaluated member; drop members whose evaluation is
    invalid (None or non-finite). Survivor order is preserved and members
    that already carry a fitness are left untouched, so the operation is
    idempotent on fully evaluated populations.
    """
    survivors: list[Individual] = []
    for member in pop.members:
        if member.evaluated:
            survivors.append(member)
            continue
        value = fitness(member.genotype)
        if value is None or not math.isfinite(value):
            log.evaluation(pop.generation, member.genotype, None, member.provenance, stream_label)
            continue
        evaluated = member.with_fitness(float(value))
        log.evaluation(
            pop.generation, evaluated.genotype, evaluated.fitness, evaluated.provenance, stream_label
        )
        survivors.append(evaluated)
    return Population(members=survivors, generation=pop.generation)


def evaluate_texts(
    texts: Iterable[str],
    fitness: FitnessFn,
    provenance: str,
    generation: int,
    log: RunLog = NULL_LOG,
    stream_label: str = "",
) -> tuple[list[Individual], int]:
    """Evaluate raw genotype texts; returns (valid individuals, attempts)."""
    out: list[Individual] = []
    attempts = 0
    for text in texts:
        attempts += 1
        value = fitness(text)
        if value is None or not math.isfinite(value):
            log.evaluation(generation, text, None, provenance, stream_label)
            continue
        ind = Individual(text, fitness=float(value), provenance=provenance)
        log.evaluation(generation, text, ind.fitness, provenance, stream_label)
        out.append(ind)
    return out, attempts
