#!/usr/bin/env python3
"""Explicit vs implicit marginal comparison across parent-set sizes.

With the default mock engine the difference is exactly zero (the mock IS
the univariate marginal model); pointing --endpoint at a live completions
server measures how closely the model's implicit parent distribution tracks
the explicit frequencies as parents increase.
"""

import argparse
import os

from lmxevo.analysis import eda_compare_experiment
from lmxevo.backends import HttpEngine, make_umda_mock
from lmxevo.codec import CODEC_UNDERSCORE
from lmxevo.core import RngStream


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out-dir", default="out/eda_compare")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--length", type=int, default=6)
    parser.add_argument("--repeats", type=int, default=20)
    parser.add_argument("--parent-counts", type=int, nargs="+", default=[1, 2, 4, 8, 16, 32])
    parser.add_argument("--endpoint", default=None, help="completions URL; mock if omitted")
    parser.add_argument("--model", default=None)
    args = parser.parse_args()
    os.makedirs(args.out_dir, exist_ok=True)

    if args.endpoint:
        engine = HttpEngine(args.endpoint, model=args.model)
        codec = CODEC_UNDERSCORE  # keeps each bit a single token for any tokenizer
    else:
        engine = lambda parents: make_umda_mock(parents)  # noqa: E731
        codec = "plain"

    rows = eda_compare_experiment(
        args.length,
        args.parent_counts,
        args.repeats,
        engine,
        RngStream(args.seed, "eda-compare"),
        codec=codec,
    )
    path = os.path.join(args.out_dir, "eda_compare.csv")
    with open(path, "w") as handle:
        handle.write("parents,mean_abs_diff,std_abs_diff\n")
        for row in rows:
            handle.write(f"{row.parent_count},{row.mean_diff!r},{row.std_diff!r}\n")
    for row in rows:
        print(f"parents={row.parent_count:3d} mean={row.mean_diff:.6f} std={row.std_diff:.6f}")
    print(f"wrote {path}")


if __name__ == "__main__":
    main()
