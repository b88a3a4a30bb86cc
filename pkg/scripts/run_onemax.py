#!/usr/bin/env python3
"""OneMax at paper scale: 20 seeded runs of the crossover loop (univariate
marginal mock engine) against the one-point-crossover baseline.

Writes history CSVs under the output directory and prints how many runs of
each variant reached the optimum.
"""

import argparse
import io
import os

from lmxevo.backends import SamplingParams, make_umda_mock
from lmxevo.binary import BinaryDomain, BitstringSpec, one_point_crossover_mutate
from lmxevo.core import RngStream, RunConfig
from lmxevo.evolve import BaselineVariation, LmxVariation, ga_run
from lmxevo.operator import OffspringParser, PromptTemplate


def run_variant(name, domain, make_variation, out_dir, runs, duplicate_policy):
    optimum = float(domain.spec.length)
    hits = 0
    for seed in range(runs):
        config = RunConfig(
            population_size=10,
            parents_per_crossover=6 if name == "lmx" else 2,
            generations=10,
            rng_seed=seed,
            selection="truncation",
            keep_fraction=0.5,
            duplicate_policy=duplicate_policy,
            target_fitness=optimum,
        )
        history = ga_run(config, domain, make_variation(seed))
        hits += history.best_fitness_reached() >= optimum
        buffer = io.StringIO()
        history.write_csv(buffer)
        with open(os.path.join(out_dir, f"{name}_seed{seed}.csv"), "w") as handle:
            handle.write(buffer.getvalue())
    print(f"{name}: optimum reached in {hits}/{runs} runs")
    return hits


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out-dir", default="out/onemax")
    parser.add_argument("--runs", type=int, default=20)
    parser.add_argument("--length", type=int, default=10)
    args = parser.parse_args()
    os.makedirs(args.out_dir, exist_ok=True)

    domain = BinaryDomain(BitstringSpec(args.length))

    def lmx_variation(seed):
        engine = make_umda_mock(
            domain.init_genotypes(2, RngStream(seed, "fallback")),
            children_per_call=3,
            seed=seed,
        )
        return LmxVariation(
            engine=engine,
            template=PromptTemplate(),
            parser=OffspringParser(validator=domain.validate, max_children=3),
            sampling=SamplingParams(temperature=1.0),
            parents_needed=6,
        )

    def baseline_variation(seed):
        return BaselineVariation(
            lambda a, b, rng: one_point_crossover_mutate(a, b, 0.1, rng)
        )

    run_variant("baseline", domain, baseline_variation, args.out_dir, args.runs, "allow")
    run_variant("lmx", domain, lmx_variation, args.out_dir, args.runs, "discard")


if __name__ == "__main__":
    main()
