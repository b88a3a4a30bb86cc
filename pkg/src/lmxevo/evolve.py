"""Optimization loops: a generational GA with pluggable selection and
variation, and a generic N-dimensional MAP-Elites archive with QD-score
tracking.

Variation operators produce candidate genotype texts from parent
individuals; the loops own selection, evaluation, merging, logging, and
history bookkeeping.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Protocol, Sequence, TextIO

from .backends import CompletionEngine, SamplingParams
from .core import (
    Individual,
    InitializationError,
    Population,
    PROV_BASELINE,
    PROV_LMX,
    PROV_PRIOR,
    PROV_SEED,
    RngStream,
    RunConfig,
    RunLog,
    NULL_LOG,
    EVENT_SELECTION,
    evaluate_texts,
)
from .operator import OffspringParser, PromptTemplate, lmx

# Ceiling on proposals per generation so a degenerate engine (all children
# invalid or duplicated) cannot stall a run.
_STALL_FACTOR = 20


class VariationOp(Protocol):
    parents_needed: int

    def propose(
        self, parents: Sequence[Individual], rng: RngStream, log: RunLog, generation: int
    ) -> list[str]: ...


@dataclass
class LmxVariation:
    """Crossover through a completion engine."""

    engine: CompletionEngine
    template: PromptTemplate
    parser: OffspringParser
    sampling: SamplingParams
    parents_needed: int = 3
    encode: Callable[[str], str] = staticmethod(lambda text: text)
    decode: Callable[[str], Optional[str]] = staticmethod(lambda text: text)
    char_budget: int = 2000
    provenance: str = PROV_LMX

    def propose(
        self, parents: Sequence[Individual], rng: RngStream, log: RunLog, generation: int
    ) -> list[str]:
        encoded = [
            Individual(self.encode(p.genotype), fitness=p.fitness, provenance=p.provenance)
            for p in parents
        ]
        params = SamplingParams(
            temperature=self.sampling.temperature,
            top_k=self.sampling.top_k,
            top_p=self.sampling.top_p,
            max_new_tokens=self.sampling.max_new_tokens,
            stop_sequences=list(self.sampling.stop_sequences),
            rng_seed=rng.fresh_seed(),
        )
        children = lmx(
            encoded,
            self.engine,
            self.template,
            self.parser,
            params,
            rng,
            log,
            self.char_budget,
            generation,
        )
        decoded = [self.decode(c) for c in children]
        return [c for c in decoded if c]


@dataclass
class BaselineVariation:
    """Classical two-parent recombination, e.g. one-point crossover."""

    crossover: Callable[[str, str, RngStream], str]
    parents_needed: int = 2
    provenance: str = PROV_BASELINE

    def propose(
        self, parents: Sequence[Individual], rng: RngStream, log: RunLog, generation: int
    ) -> list[str]:
        if len(parents) < 2:
            parents = list(parents) * 2
        return [self.crossover(parents[0].genotype, parents[1].genotype, rng)]


# --- selection ---------------------------------------------------------------


def tournament_select(pop: Population, size: int, rng: RngStream) -> Individual:
    """Best of `size` uniform draws with replacement; the earliest draw wins
    ties."""
    if not pop.members:
        raise ValueError("cannot select from an empty population")
    if size < 1:
        raise ValueError("tournament size must be >= 1")
    best = pop.members[rng.randrange(len(pop.members))]
    for _ in range(size - 1):
        challenger = pop.members[rng.randrange(len(pop.members))]
        if challenger.fitness > best.fitness:
            best = challenger
    return best


def truncation_step(
    pop: Population, elite: Optional[Individual], keep_fraction: float
) -> list[Individual]:
    """Top ceil(keep_fraction * n) by fitness plus the all-time elite,
    without duplicating the elite's genotype; ties break toward earlier
    population index."""
    if not 0.0 < keep_fraction <= 1.0:
        raise ValueError("keep_fraction must be in (0, 1]")
    keep = math.ceil(keep_fraction * len(pop.members))
    ranked = sorted(
        range(len(pop.members)), key=lambda i: (-pop.members[i].fitness, i)
    )
    chosen = [pop.members[i] for i in ranked[:keep]]
    if elite is not None and all(m.genotype != elite.genotype for m in chosen):
        chosen.append(elite)
    return chosen


def _refine(members: list[Individual], config: RunConfig, rng: RngStream) -> list[Individual]:
    n = config.population_size
    if config.selection == "truncation":
        ranked = sorted(range(len(members)), key=lambda i: (-members[i].fitness, i))
        return [members[i] for i in ranked[:n]]
    pool = Population(members)
    return [tournament_select(pool, config.tournament_size, rng) for _ in range(n)]


# --- GA ----------------------------------------------------------------------


@dataclass
class GenerationStats:
    generation: int
    best_fitness: float
    mean_fitness: float
    validity_rate: float
    novel_count: int
    evaluations: int


@dataclass
class GaHistory:
    rows: list[GenerationStats] = field(default_factory=list)
    best_ever: Optional[Individual] = None
    final_population: Optional[Population] = None

    def best_fitness_reached(self) -> float:
        return max(row.best_fitness for row in self.rows)

    def write_csv(self, handle: TextIO) -> None:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(
            ["generation", "best_fitness", "mean_fitness", "validity_rate", "novel_count", "evaluations"]
        )
        for row in self.rows:
            writer.writerow(
                [
                    row.generation,
                    repr(row.best_fitness),
                    repr(row.mean_fitness),
                    repr(row.validity_rate),
                    row.novel_count,
                    row.evaluations,
                ]
            )


def _stats_row(
    pop: Population, generation: int, attempts: int, valid: int, novel: int, evaluations: int
) -> GenerationStats:
    fitnesses = [m.fitness for m in pop.members]
    return GenerationStats(
        generation=generation,
        best_fitness=max(fitnesses),
        mean_fitness=sum(fitnesses) / len(fitnesses),
        validity_rate=valid / attempts if attempts else 1.0,
        novel_count=novel,
        evaluations=evaluations,
    )


def _update_elite(elite: Optional[Individual], pop: Population) -> Optional[Individual]:
    for member in pop.members:
        if elite is None or member.fitness > elite.fitness:
            elite = member
    return elite


def ga_run(
    config: RunConfig,
    domain,
    variation: VariationOp,
    log: RunLog = NULL_LOG,
    init_size: Optional[int] = None,
) -> GaHistory:
    """Generational loop: initialize, then repeatedly gather n new
    candidates through the variation operator, merge them with the current
    population, and refine back down to n with the configured selection.

    The domain supplies init_genotypes(n, rng) and fitness(text); a domain
    with a prior_sample(rng) hook participates in prior injection. Children
    are dropped unevaluated when duplicate_policy is "discard" and their
    genotype already occurs in the population or the pending candidate set.
    """
    config.validate()
    rng = RngStream(config.rng_seed, "ga")
    n = config.population_size
    seeds = domain.init_genotypes(init_size or n, rng.child("init"))
    members, attempts = evaluate_texts(
        seeds, domain.fitness, PROV_SEED, 0, log, "ga/init"
    )
    if not members:
        raise InitializationError("domain initializer produced zero valid individuals")
    evaluations = attempts
    if len(members) > n:
        members = _refine(members, config, rng.child("refine-init"))
    pop = Population(members, generation=0)
    elite = _update_elite(None, pop)
    history = GaHistory()
    history.rows.append(_stats_row(pop, 0, attempts, len(members), 0, evaluations))

    prior_sample = getattr(domain, "prior_sample", None)
    for gen in range(1, config.generations + 1):
        if config.target_fitness is not None and elite.fitness >= config.target_fitness:
            break
        gen_rng = rng.child(f"gen-{gen}")
        if config.selection == "truncation":
            pool = truncation_step(pop, elite, config.keep_fraction)
        else:
            pool = pop.members
        start_genotypes = set(pop.genotypes())
        seen = set(start_genotypes)
        new_members: list[Individual] = []
        gen_attempts = 0
        gen_valid = 0
        gen_novel = 0
        proposals = 0
        max_proposals = max(_STALL_FACTOR * n, 100)
        call = 0
        while len(new_members) < n and proposals < max_proposals:
            call += 1
            call_rng = gen_rng.child(f"call-{call}")
            if (
                prior_sample is not None
                and config.prior_injection_prob > 0
                and call_rng.uniform() < config.prior_injection_prob
            ):
                texts = [prior_sample(call_rng.child("prior"))]
                provenance = PROV_PRIOR
            else:
                draw = min(variation.parents_needed, len(pool))
                parents = call_rng.sample(pool, draw)
                texts = variation.propose(parents, call_rng.child("op"), log, gen)
                provenance = variation.provenance
            if not texts:
                proposals += 1
                continue
            for text in texts:
                proposals += 1
                if config.duplicate_policy == "discard" and text in seen:
                    continue
                valid, _ = evaluate_texts(
                    [text], domain.fitness, provenance, gen, log, f"ga/gen-{gen}"
                )
                gen_attempts += 1
                evaluations += 1
                if not valid:
                    continue
                child = valid[0]
                gen_valid += 1
                seen.add(child.genotype)
                if child.genotype not in start_genotypes:
                    gen_novel += 1
                new_members.append(child)
        merged = pop.members + new_members
        refined = _refine(merged, config, gen_rng.child("refine"))
        pop = Population(refined, generation=gen)
        elite = _update_elite(elite, pop)
        for member in pop.members:
            log.event(
                EVENT_SELECTION,
                gen,
                genotype=member.genotype,
                fitness=member.fitness,
                provenance=member.provenance,
                stream=f"ga/gen-{gen}",
            )
        history.rows.append(
            _stats_row(pop, gen, gen_attempts, gen_valid, gen_novel, evaluations)
        )
    history.best_ever = elite
    history.final_population = pop
    return history


# --- MAP-Elites -------------------------------------------------------------


@dataclass
class MapDim:
    lower: float
    upper: float
    bins: int

    def __post_init__(self) -> None:
        if self.bins < 1:
            raise ValueError("bins must be >= 1")
        if not self.upper > self.lower:
            raise ValueError("upper bound must exceed lower bound")

    def index_of(self, value: float) -> int:
        """Bin index with out-of-range values clamped to the boundary bins."""
        if value <= self.lower:
            return 0
        if value >= self.upper:
            return self.bins - 1
        return min(int((value - self.lower) / (self.upper - self.lower) * self.bins), self.bins - 1)


class EliteMap:
    """N-dimensional grid of niches, each holding the best-so-far
    individual; replacement requires strictly greater fitness."""

    def __init__(self, dims: Sequence[MapDim]) -> None:
        if not dims:
            raise ValueError("at least one dimension required")
        self.dims = list(dims)
        self.cells: dict[tuple[int, ...], Individual] = {}

    def cell_index(self, descriptor: Sequence[float]) -> tuple[int, ...]:
        if len(descriptor) != len(self.dims):
            raise ValueError(
                f"descriptor has {len(descriptor)} dims, map has {len(self.dims)}"
            )
        return tuple(dim.index_of(v) for dim, v in zip(self.dims, descriptor))

    def insert(self, ind: Individual) -> bool:
        if ind.fitness is None:
            raise ValueError("individual must be evaluated before insertion")
        if ind.descriptor is None:
            raise ValueError("individual must carry a behavior descriptor")
        cell = self.cell_index(ind.descriptor)
        incumbent = self.cells.get(cell)
        if incumbent is None or ind.fitness > incumbent.fitness:
            self.cells[cell] = ind
            return True
        return False

    def niches_filled(self) -> int:
        return len(self.cells)

    def qd_score(self) -> float:
        return sum(ind.fitness for ind in self.cells.values())

    def elites(self) -> list[Individual]:
        return list(self.cells.values())


def map_insert(elite_map: EliteMap, ind: Individual) -> bool:
    return elite_map.insert(ind)


def qd_score(elite_map: EliteMap) -> float:
    return elite_map.qd_score()


PARENTS_UNIFORM = "uniform"
PARENTS_NEAR = "near"


@dataclass
class MapElitesStats:
    evaluations: int
    qd_score: float
    niches_filled: int
    best_fitness: float


@dataclass
class MapElitesHistory:
    rows: list[MapElitesStats] = field(default_factory=list)

    def write_csv(self, handle: TextIO) -> None:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["evaluations", "qd_score", "niches_filled", "best_fitness"])
        for row in self.rows:
            writer.writerow(
                [row.evaluations, repr(row.qd_score), row.niches_filled, repr(row.best_fitness)]
            )


def _sample_parent_cells(
    elite_map: EliteMap, k: int, policy: str, radius: int, rng: RngStream
) -> list[Individual]:
    cells = sorted(elite_map.cells.keys())
    if policy == PARENTS_UNIFORM:
        return [elite_map.cells[rng.choice(cells)] for _ in range(k)]
    center = rng.choice(cells)
    nearby = [
        c for c in cells if all(abs(a - b) <= radius for a, b in zip(c, center))
    ]
    return [elite_map.cells[rng.choice(nearby)] for _ in range(k)]


def map_elites_run(
    config: RunConfig,
    domain,
    variation: VariationOp,
    dims: Sequence[MapDim],
    evaluations: int,
    log: RunLog = NULL_LOG,
    parent_policy: str = PARENTS_UNIFORM,
    near_radius: int = 3,
) -> tuple[EliteMap, MapElitesHistory]:
    """Seed the map from the domain initializer, then repeatedly cross over
    elites sampled from occupied cells, evaluate the children, and insert.
    History records QD score and niches filled after every evaluation."""
    config.validate()
    if parent_policy not in (PARENTS_UNIFORM, PARENTS_NEAR):
        raise ValueError(f"unknown parent policy: {parent_policy!r}")
    rng = RngStream(config.rng_seed, "map-elites")
    elite_map = EliteMap(dims)
    seeds = domain.init_genotypes(config.population_size, rng.child("init"))
    seeded, _ = evaluate_texts(seeds, domain.fitness, PROV_SEED, 0, log, "map/init")
    for ind in seeded:
        descriptor = domain.descriptor(ind.genotype)
        if descriptor is None:
            continue
        elite_map.insert(
            Individual(ind.genotype, ind.fitness, tuple(descriptor), ind.provenance)
        )
    if not elite_map.cells:
        raise InitializationError("seeding filled no map cells")
    history = MapElitesHistory()
    used = 0
    step = 0
    while used < evaluations:
        step += 1
        step_rng = rng.child(f"step-{step}")
        parents = _sample_parent_cells(
            elite_map, config.parents_per_crossover, parent_policy, near_radius, step_rng
        )
        texts = variation.propose(parents, step_rng.child("op"), log, step)
        for text in texts:
            if used >= evaluations:
                break
            used += 1
            valid, _ = evaluate_texts(
                [text], domain.fitness, variation.provenance, step, log, f"map/step-{step}"
            )
            if valid:
                child = valid[0]
                descriptor = domain.descriptor(child.genotype)
                if descriptor is not None:
                    elite_map.insert(
                        Individual(child.genotype, child.fitness, tuple(descriptor), child.provenance)
                    )
            best = max((ind.fitness for ind in elite_map.cells.values()), default=0.0)
            history.rows.append(
                MapElitesStats(used, elite_map.qd_score(), elite_map.niches_filled(), best)
            )
        if not texts:
            # count a wasted call so a silent engine cannot spin forever
            used += 1
            best = max((ind.fitness for ind in elite_map.cells.values()), default=0.0)
            history.rows.append(
                MapElitesStats(used, elite_map.qd_score(), elite_map.niches_filled(), best)
            )
    return elite_map, history
