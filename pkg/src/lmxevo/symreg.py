"""Symbolic-regression domain: datasets, R-squared fitness, benchmark-seeded
initialization, a subtree-crossover baseline, and Pareto-front reporting.

Genotypes are expression texts; parsing, evaluation, and simplification live
in the exprs module. Fitness is the coefficient of determination on the
training split; any child that fails to parse or evaluate is discarded
rather than scored.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional, Sequence, TextIO

import numpy as np

from .backends import SamplingParams
from .core import RngStream, RunConfig
from .exprs import (
    Binary,
    Constant,
    Expr,
    Unary,
    Variable,
    evaluate,
    expression_size,
    parse_expression,
    serialize,
    simplify,
    subtree_crossover,
    try_parse,
)
from .operator import OffspringParser, PromptTemplate, ORDER_RANDOM

# Prompt header used for expression crossover; the stated count is part of
# the fixed template and is not adjusted to the actual number of parents.
SR_PROMPT_HEADER = "Below are 10 expressions that approximate the dataset:"
SR_PARENTS_PER_PROMPT = 7
SR_MAX_CHILDREN = 3
SR_TEMPERATURE = 0.8
SR_POPULATION = 50
SR_PRIOR_INJECTION = 0.05
SR_TOKEN_BUDGET = 500


def r2(y: np.ndarray, y_hat: np.ndarray) -> float:
    """Coefficient of determination, 1 - SS_res/SS_tot; unbounded below."""
    y = np.asarray(y, dtype=float)
    y_hat = np.asarray(y_hat, dtype=float)
    if y.shape != y_hat.shape or y.ndim != 1:
        raise ValueError("y and y_hat must be equal-length vectors")
    if y.size < 2:
        raise ValueError("need at least two samples")
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0.0:
        raise ValueError("y has zero variance")
    ss_res = float(np.sum((y - y_hat) ** 2))
    return 1.0 - ss_res / ss_tot


@dataclass
class RegressionDataset:
    X: np.ndarray
    y: np.ndarray
    train_idx: np.ndarray
    test_idx: np.ndarray

    def __post_init__(self) -> None:
        if self.X.ndim != 2 or self.y.ndim != 1 or self.X.shape[0] != self.y.shape[0]:
            raise ValueError("X must be (n, d) and y must be (n,)")
        if not (np.all(np.isfinite(self.X)) and np.all(np.isfinite(self.y))):
            raise ValueError("dataset contains non-finite entries")

    @property
    def var_count(self) -> int:
        return self.X.shape[1]

    @property
    def X_train(self) -> np.ndarray:
        return self.X[self.train_idx]

    @property
    def y_train(self) -> np.ndarray:
        return self.y[self.train_idx]

    @property
    def X_test(self) -> np.ndarray:
        return self.X[self.test_idx]

    @property
    def y_test(self) -> np.ndarray:
        return self.y[self.test_idx]

    @classmethod
    def from_arrays(
        cls, X: np.ndarray, y: np.ndarray, test_fraction: float = 0.25, rng: Optional[RngStream] = None
    ) -> "RegressionDataset":
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        n = X.shape[0]
        order = np.arange(n)
        if rng is not None:
            rng.gen.shuffle(order)
        n_test = int(round(test_fraction * n))
        return cls(X, y, train_idx=np.sort(order[n_test:]), test_idx=np.sort(order[:n_test]))

    @classmethod
    def from_csv(
        cls, path: str, test_fraction: float = 0.25, rng: Optional[RngStream] = None
    ) -> "RegressionDataset":
        """Load a dataset CSV with header row x1..xd,y."""
        with open(path, "r", encoding="utf-8", newline="") as handle:
            reader = csv.reader(handle)
            header = next(reader, None)
            if header is None:
                raise ValueError(f"{path}: empty dataset file")
            expected = [f"x{i}" for i in range(1, len(header))] + ["y"]
            if [h.strip() for h in header] != expected:
                raise ValueError(
                    f"{path}: header must be {','.join(expected)}, got {','.join(header)}"
                )
            rows = [[float(v) for v in row] for row in reader if row]
        data = np.asarray(rows, dtype=float)
        if data.size == 0:
            raise ValueError(f"{path}: no data rows")
        return cls.from_arrays(data[:, :-1], data[:, -1], test_fraction, rng)


# --- benchmark prior --------------------------------------------------------


def load_benchmarks(path: str) -> list[Expr]:
    """Benchmark expression file: CSV with header expression,variables.

    The variables column is an arity annotation used for validation: the
    expression must not reference a variable index above it.
    """
    out: list[Expr] = []
    with open(path, "r", encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["expression", "variables"]:
            raise ValueError(f"{path}: expected header 'expression,variables'")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            text, arity = row[0].strip(), int(row[1])
            tree = try_parse(text)
            if tree is None:
                raise ValueError(f"{path}:{lineno}: unparseable benchmark {text!r}")
            if _max_var_index(tree) > arity:
                raise ValueError(f"{path}:{lineno}: {text!r} uses more than {arity} variables")
            out.append(tree)
    if not out:
        raise ValueError(f"{path}: no benchmark expressions")
    return out


def _max_var_index(expr: Expr) -> int:
    if isinstance(expr, Variable):
        return expr.index
    if isinstance(expr, Unary):
        return _max_var_index(expr.operand)
    if isinstance(expr, Binary):
        return max(_max_var_index(expr.left), _max_var_index(expr.right))
    return 0


def remap_variables(expr: Expr, mapping: dict[int, int]) -> Expr:
    if isinstance(expr, Variable):
        return Variable(mapping.get(expr.index, expr.index))
    if isinstance(expr, Unary):
        return Unary(expr.op, remap_variables(expr.operand, mapping))
    if isinstance(expr, Binary):
        return Binary(
            expr.op,
            remap_variables(expr.left, mapping),
            remap_variables(expr.right, mapping),
        )
    return expr


def seed_expression(benchmarks: Sequence[Expr], var_count: int, rng: RngStream) -> Expr:
    """One seed: a uniformly chosen benchmark with each of its source
    variables independently remapped to a uniform x1..x<var_count>."""
    tree = rng.choice(list(benchmarks))
    indices = sorted(_var_indices(tree))
    mapping = {idx: 1 + rng.randrange(var_count) for idx in indices}
    return remap_variables(tree, mapping)


def _var_indices(expr: Expr) -> set[int]:
    if isinstance(expr, Variable):
        return {expr.index}
    if isinstance(expr, Unary):
        return _var_indices(expr.operand)
    if isinstance(expr, Binary):
        return _var_indices(expr.left) | _var_indices(expr.right)
    return set()


def seed_population(
    benchmarks: Sequence[Expr], n: int, var_count: int, rng: RngStream
) -> list[Expr]:
    if not benchmarks:
        raise ValueError("benchmark list must be non-empty")
    return [seed_expression(benchmarks, var_count, rng) for _ in range(n)]


def subtree_crossover_text(p1: str, p2: str, rng: RngStream) -> str:
    """Text-level wrapper for the GP baseline; unparseable parents yield an
    empty child, which the loop discards."""
    t1 = try_parse(p1)
    t2 = try_parse(p2)
    if t1 is None or t2 is None:
        return ""
    return serialize(subtree_crossover(t1, t2, rng))


# --- domain adapter ----------------------------------------------------------


class SymregDomain:
    """Domain adapter: benchmark-seeded initialization, train-split
    R-squared fitness, and prior injection draws."""

    def __init__(
        self,
        dataset: RegressionDataset,
        benchmarks: Sequence[Expr],
        init_size: Optional[int] = None,
    ) -> None:
        if not benchmarks:
            raise ValueError("benchmark list must be non-empty")
        self.dataset = dataset
        self.benchmarks = list(benchmarks)
        self.init_size = init_size

    def init_genotypes(self, n: int, rng: RngStream) -> list[str]:
        count = self.init_size or n
        return [
            serialize(tree)
            for tree in seed_population(self.benchmarks, count, self.dataset.var_count, rng)
        ]

    def validate(self, text: str) -> bool:
        return try_parse(text) is not None

    def prior_sample(self, rng: RngStream) -> str:
        return serialize(seed_expression(self.benchmarks, self.dataset.var_count, rng))

    def _r2_on(self, text: str, X: np.ndarray, y: np.ndarray) -> Optional[float]:
        tree = try_parse(text)
        if tree is None:
            return None
        values = evaluate(tree, X)
        if values is None:
            return None
        score = r2(y, values)
        return score if np.isfinite(score) else None

    def fitness(self, text: str) -> Optional[float]:
        return self._r2_on(text, self.dataset.X_train, self.dataset.y_train)

    def test_r2(self, text: str) -> Optional[float]:
        if len(self.dataset.test_idx) < 2:
            return None
        return self._r2_on(text, self.dataset.X_test, self.dataset.y_test)

    def descriptor(self, text: str) -> Optional[tuple[float, ...]]:
        tree = try_parse(text)
        if tree is None:
            return None
        return (float(expression_size(simplify(tree))),)

    def reported_size(self, text: str) -> Optional[int]:
        """Complexity measure: node count of the constant-folded tree."""
        tree = try_parse(text)
        if tree is None:
            return None
        return expression_size(simplify(tree))


# --- reporting ---------------------------------------------------------------


@dataclass
class ParetoPoint:
    r2_train: float
    r2_test: Optional[float]
    size: int
    expression: str


def pareto_front(
    population_texts: Sequence[str], domain: SymregDomain
) -> list[ParetoPoint]:
    """Non-dominated (train R-squared maximized, size minimized) points of a
    population, deduplicated by genotype, sorted by size."""
    points: list[ParetoPoint] = []
    seen: set[str] = set()
    for text in population_texts:
        if text in seen:
            continue
        seen.add(text)
        fitness = domain.fitness(text)
        size = domain.reported_size(text)
        if fitness is None or size is None:
            continue
        points.append(ParetoPoint(fitness, domain.test_r2(text), size, text))
    front = [
        p
        for p in points
        if not any(
            (q.r2_train >= p.r2_train and q.size < p.size)
            or (q.r2_train > p.r2_train and q.size <= p.size)
            for q in points
        )
    ]
    front.sort(key=lambda p: (p.size, -p.r2_train))
    deduped: list[ParetoPoint] = []
    for p in front:
        if not any(q.size == p.size and q.r2_train == p.r2_train for q in deduped):
            deduped.append(p)
    return deduped


def write_pareto_csv(points: Sequence[ParetoPoint], handle: TextIO) -> None:
    writer = csv.writer(handle, lineterminator="\n")
    writer.writerow(["r2_train", "r2_test", "size", "expression"])
    for p in points:
        writer.writerow(
            [repr(p.r2_train), "" if p.r2_test is None else repr(p.r2_test), p.size, p.expression]
        )


# --- run defaults -------------------------------------------------------------


def default_sr_template() -> PromptTemplate:
    return PromptTemplate(header=SR_PROMPT_HEADER, ordering=ORDER_RANDOM)


def default_sr_parser(domain: SymregDomain) -> OffspringParser:
    return OffspringParser(validator=domain.validate, max_children=SR_MAX_CHILDREN)


def default_sr_sampling() -> SamplingParams:
    return SamplingParams(temperature=SR_TEMPERATURE, max_new_tokens=SR_TOKEN_BUDGET)


def default_sr_config(seed: int = 0, generations: int = 200) -> RunConfig:
    return RunConfig(
        population_size=SR_POPULATION,
        parents_per_crossover=SR_PARENTS_PER_PROMPT,
        generations=generations,
        rng_seed=seed,
        selection="tournament",
        tournament_size=3,
        prior_injection_prob=SR_PRIOR_INJECTION,
        offspring_cap=SR_MAX_CHILDREN,
        duplicate_policy="discard",
    )
