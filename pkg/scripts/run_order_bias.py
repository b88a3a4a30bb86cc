#!/usr/bin/env python3
"""Parent-ordering bias: offspring score histograms when the same parents
are sorted ascending, descending, or randomly before crossover.

The mock engine is order-insensitive by construction, so its histograms
coincide; a live completions endpoint (--endpoint) exposes the bias of a
real autoregressive model.
"""

import argparse
import os

from lmxevo.analysis import ordering_bias_experiment
from lmxevo.backends import HttpEngine, SamplingParams, make_umda_mock
from lmxevo.codec import CODEC_UNDERSCORE
from lmxevo.core import RngStream


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out-dir", default="out/order_bias")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--length", type=int, default=10)
    parser.add_argument("--sort-key", choices=["ones", "leading-ones"], default="ones")
    parser.add_argument("--experiments", type=int, default=100)
    parser.add_argument("--children", type=int, default=10)
    parser.add_argument("--parents", type=int, default=5)
    parser.add_argument("--endpoint", default=None)
    parser.add_argument("--model", default=None)
    args = parser.parse_args()
    os.makedirs(args.out_dir, exist_ok=True)

    if args.endpoint:
        engine = HttpEngine(args.endpoint, model=args.model)
        codec = CODEC_UNDERSCORE
        params = SamplingParams(temperature=1.0, top_k=30, top_p=0.8, max_new_tokens=150)
    else:
        engine = lambda parents: make_umda_mock(parents, children_per_call=10)  # noqa: E731
        codec = "plain"
        params = SamplingParams(temperature=1.0)

    result = ordering_bias_experiment(
        args.length,
        args.sort_key,
        ["ascending", "descending", "random"],
        args.experiments,
        args.children,
        engine,
        RngStream(args.seed, "order-bias"),
        parents_per_experiment=args.parents,
        codec=codec,
        params=params,
    )
    path = os.path.join(args.out_dir, "order_bias.csv")
    with open(path, "w") as handle:
        handle.write("order,score,count\n")
        for order, score, count in result.rows():
            handle.write(f"{order},{score},{count}\n")
    for order in sorted(result.counts):
        counter = result.counts[order]
        total = sum(counter.values())
        mean = sum(s * c for s, c in counter.items()) / total if total else float("nan")
        print(f"{order:10s} children={total:4d} mean score={mean:.3f}")
    print(f"wrote {path}")


if __name__ == "__main__":
    main()
