"""Command-line entry point.

Subcommands
  run          execute a configured GA or MAP-Elites loop
  variation    offspring validity/novelty sweep over parent counts
  eda-compare  explicit vs implicit marginal comparison table
  order-bias   offspring score histograms under parent orderings

Configuration is one strict JSON document; unknown sections or keys are
rejected and every default is listed in CONFIG_SCHEMA below. Exit codes:
0 success, 2 config error, 3 engine error, 4 capability error.
"""

from __future__ import annotations

import argparse
import io
import json
import os
import sys
from typing import Any, Callable, Optional, Sequence

from . import analysis, binary, symreg
from .backends import (
    CapabilityError,
    CompletionEngine,
    EngineError,
    HttpEngine,
    ReplayEngine,
    SamplingParams,
    SubtreeMockEngine,
    UmdaMockEngine,
)
from .codec import CODEC_PLAIN, CODEC_UNDERSCORE
from .core import InitializationError, RngStream, RunConfig, RunLog
from .evolve import (
    BaselineVariation,
    LmxVariation,
    MapDim,
    ga_run,
    map_elites_run,
)
from .operator import OffspringParser, PromptTemplate

# Schema: section -> key -> (default, type-or-checker). A None default with
# no entry in REQUIRED means the key is optional.
CONFIG_SCHEMA: dict[str, dict[str, Any]] = {
    "engine": {
        "kind": "umda-mock",  # http | umda-mock | subtree-mock | replay
        "endpoint": None,
        "model": None,
        "auth_env_var": None,
        "children_per_call": 3,
        "recording": None,
        "logprob_top_n": 10,
    },
    "domain": {
        "kind": "binary",  # binary | symreg
        "length": 10,
        "codec": CODEC_PLAIN,
        "fitness": binary.FITNESS_ONEMAX,
        "dataset": None,
        "benchmarks": None,
        "init_size": None,
        "test_fraction": 0.25,
    },
    "loop": {
        "kind": "ga",  # ga | map-elites
        "population_size": 10,
        "parents_per_crossover": 3,
        "generations": 10,
        "seed": 0,
        "selection": "truncation",
        "tournament_size": 3,
        "keep_fraction": 0.5,
        "prior_injection_prob": 0.0,
        "offspring_cap": 3,
        "duplicate_policy": "allow",
        "target_fitness": None,
        "variation": "lmx",  # lmx | baseline
        "baseline_flip_prob": 0.1,
        "dims": [[0.0, 1.5, 30]],
        "evaluations": 2500,
        "parent_policy": "uniform",
        "near_radius": 3,
    },
    "template": {
        "header": None,
        "item_prefix": "",
        "delimiter": "\n",
        "trailer": None,
        "trailer_starts_child": False,
        "ordering": "random",
    },
    "sampling": {
        "temperature": 1.0,
        "top_k": None,
        "top_p": 1.0,
        "max_new_tokens": 150,
        "stop_sequences": [],
        "seed": None,
    },
    "output": {
        "directory": "out",
        "plot": True,
    },
    "variation_sweep": {
        "min_parents": 2,
        "max_parents": 5,
        "parent_sets": 20,
        "trials": 20,
        "children_per_trial": 3,
    },
    "eda_compare": {
        "length": 6,
        "parent_counts": [1, 2, 4, 8, 16, 32],
        "repeats": 20,
    },
    "order_bias": {
        "length": 10,
        "sort_key": analysis.SORT_ONES,
        "orders": [analysis.ORDER_ASC, analysis.ORDER_DESC, analysis.ORDER_RAND],
        "experiments": 100,
        "children_per_experiment": 10,
        "parents_per_experiment": 5,
    },
}

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ENGINE = 3
EXIT_CAPABILITY = 4


class ConfigError(Exception):
    pass


def load_config(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as handle:
            raw = handle.read()
    except OSError as err:
        raise ConfigError(f"{path}: cannot read config: {err}") from err
    try:
        document = json.loads(raw)
    except json.JSONDecodeError as err:
        raise ConfigError(f"{path}:{err.lineno}:{err.colno}: {err.msg}") from err
    if not isinstance(document, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    merged: dict[str, dict] = {}
    for section, keys in CONFIG_SCHEMA.items():
        merged[section] = dict(keys)
    for section, value in document.items():
        if section not in CONFIG_SCHEMA:
            raise ConfigError(f"{path}: unknown section {section!r}")
        if not isinstance(value, dict):
            raise ConfigError(f"{path}: section {section!r} must be an object")
        for key, item in value.items():
            if key not in CONFIG_SCHEMA[section]:
                raise ConfigError(f"{path}: unknown key {section}.{key}")
            merged[section][key] = item
    _validate(merged, path)
    return merged


def _require(condition: bool, path: str, field: str, message: str) -> None:
    if not condition:
        raise ConfigError(f"{path}: {field}: {message}")


def _validate(config: dict, path: str) -> None:
    engine = config["engine"]
    _require(
        engine["kind"] in ("http", "umda-mock", "subtree-mock", "replay"),
        path, "engine.kind", f"unknown engine kind {engine['kind']!r}",
    )
    if engine["kind"] == "http":
        _require(bool(engine["endpoint"]), path, "engine.endpoint", "required for http engines")
    if engine["kind"] == "replay":
        _require(bool(engine["recording"]), path, "engine.recording", "required for replay engines")
    domain = config["domain"]
    _require(domain["kind"] in ("binary", "symreg"), path, "domain.kind",
             f"unknown domain kind {domain['kind']!r}")
    if domain["kind"] == "binary":
        _require(int(domain["length"]) >= 1, path, "domain.length", "must be >= 1")
        _require(domain["codec"] in (CODEC_PLAIN, CODEC_UNDERSCORE), path, "domain.codec",
                 f"unknown codec {domain['codec']!r}")
    else:
        _require(bool(domain["dataset"]), path, "domain.dataset", "required for symreg domains")
    loop = config["loop"]
    _require(loop["kind"] in ("ga", "map-elites"), path, "loop.kind",
             f"unknown loop kind {loop['kind']!r}")
    _require(int(loop["population_size"]) >= 1, path, "loop.population_size", "must be >= 1")
    _require(int(loop["parents_per_crossover"]) >= 1, path, "loop.parents_per_crossover",
             "must be >= 1")
    _require(int(loop["generations"]) >= 0, path, "loop.generations", "must be >= 0")
    _require(loop["variation"] in ("lmx", "baseline"), path, "loop.variation",
             f"unknown variation {loop['variation']!r}")
    _require(int(loop["offspring_cap"]) >= 1, path, "loop.offspring_cap", "must be >= 1")
    sampling = config["sampling"]
    _require(float(sampling["temperature"]) >= 0, path, "sampling.temperature", "must be >= 0")
    _require(0 < float(sampling["top_p"]) <= 1, path, "sampling.top_p", "must be in (0, 1]")


def run_config_from(config: dict) -> RunConfig:
    loop = config["loop"]
    rc = RunConfig(
        population_size=int(loop["population_size"]),
        parents_per_crossover=int(loop["parents_per_crossover"]),
        generations=int(loop["generations"]),
        rng_seed=int(loop["seed"]),
        selection=loop["selection"],
        tournament_size=int(loop["tournament_size"]),
        keep_fraction=float(loop["keep_fraction"]),
        prior_injection_prob=float(loop["prior_injection_prob"]),
        offspring_cap=int(loop["offspring_cap"]),
        duplicate_policy=loop["duplicate_policy"],
        target_fitness=None if loop["target_fitness"] is None else float(loop["target_fitness"]),
    )
    try:
        rc.validate()
    except ValueError as err:
        raise ConfigError(f"loop: {err}") from err
    return rc


def template_from(config: dict) -> PromptTemplate:
    t = config["template"]
    try:
        return PromptTemplate(
            header=t["header"],
            item_prefix=t["item_prefix"],
            delimiter=t["delimiter"],
            trailer=t["trailer"],
            trailer_starts_child=bool(t["trailer_starts_child"]),
            ordering=t["ordering"],
        )
    except ValueError as err:
        raise ConfigError(f"template: {err}") from err


def sampling_from(config: dict) -> SamplingParams:
    s = config["sampling"]
    try:
        return SamplingParams(
            temperature=float(s["temperature"]),
            top_k=None if s["top_k"] is None else int(s["top_k"]),
            top_p=float(s["top_p"]),
            max_new_tokens=int(s["max_new_tokens"]),
            stop_sequences=list(s["stop_sequences"]),
            rng_seed=None if s["seed"] is None else int(s["seed"]),
        )
    except ValueError as err:
        raise ConfigError(f"sampling: {err}") from err


def build_domain(config: dict):
    d = config["domain"]
    if d["kind"] == "binary":
        spec = binary.BitstringSpec(int(d["length"]), d["codec"])
        return binary.BinaryDomain(spec, d["fitness"])
    dataset_path = d["dataset"]
    if not os.path.exists(dataset_path):
        raise ConfigError(f"domain.dataset: dataset file not found: {dataset_path}")
    seed = int(config["loop"]["seed"])
    dataset = symreg.RegressionDataset.from_csv(
        dataset_path, float(d["test_fraction"]), RngStream(seed, "dataset-split")
    )
    benchmarks_path = d["benchmarks"] or default_benchmarks_path()
    if not os.path.exists(benchmarks_path):
        raise ConfigError(f"domain.benchmarks: benchmark file not found: {benchmarks_path}")
    benchmarks = symreg.load_benchmarks(benchmarks_path)
    init_size = None if d["init_size"] is None else int(d["init_size"])
    return symreg.SymregDomain(dataset, benchmarks, init_size)


def default_benchmarks_path() -> str:
    return os.path.join(os.path.dirname(__file__), "data", "benchmarks.csv")


def build_engine(config: dict, domain, log: RunLog) -> CompletionEngine:
    e = config["engine"]
    seed = int(config["loop"]["seed"])
    if e["kind"] == "http":
        return HttpEngine(
            endpoint=e["endpoint"],
            model=e["model"],
            auth_env_var=e["auth_env_var"],
            logprob_top_n=int(e["logprob_top_n"]),
            log=log,
        )
    if e["kind"] == "subtree-mock":
        return SubtreeMockEngine(seed=seed)
    if e["kind"] == "replay":
        try:
            return ReplayEngine.from_jsonl(e["recording"])
        except OSError as err:
            raise ConfigError(f"engine.recording: {err}") from err
    # umda-mock: fallback parents are random strings of the domain length
    if not isinstance(domain, binary.BinaryDomain):
        raise ConfigError("engine.kind: umda-mock requires a binary domain")
    fallback = domain.init_genotypes(2, RngStream(seed, "engine-fallback"))
    return UmdaMockEngine(
        fallback,
        codec=domain.spec.codec,
        children_per_call=int(e["children_per_call"]),
        seed=seed,
    )


def build_variation(config: dict, domain, engine: CompletionEngine):
    loop = config["loop"]
    k = int(loop["parents_per_crossover"])
    if loop["variation"] == "baseline":
        if isinstance(domain, binary.BinaryDomain):
            flip = float(loop["baseline_flip_prob"])
            return BaselineVariation(
                lambda a, b, rng: binary.one_point_crossover_mutate(a, b, flip, rng)
            )
        return BaselineVariation(symreg.subtree_crossover_text)
    parser = OffspringParser(
        validator=domain.validate, max_children=int(loop["offspring_cap"])
    )
    kwargs: dict = {}
    if isinstance(domain, binary.BinaryDomain):
        kwargs["encode"] = domain.encode_for_prompt
        kwargs["decode"] = domain.canonical
    return LmxVariation(
        engine=engine,
        template=template_from(config),
        parser=parser,
        sampling=sampling_from(config),
        parents_needed=k,
        **kwargs,
    )


def atomic_write(path: str, content: str) -> None:
    tmp = f"{path}.tmp-{os.getpid()}"
    with open(tmp, "w", encoding="utf-8") as handle:
        handle.write(content)
    os.replace(tmp, path)


def _plot_safely(plot_fn: Callable[[], None]) -> None:
    try:
        plot_fn()
    except Exception as err:  # plotting failures never fail the run
        print(f"warning: plot skipped: {err}", file=sys.stderr)


def _plot_history_csv(csv_path: str, image_path: str) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    import csv as csv_mod

    with open(csv_path, "r", encoding="utf-8") as handle:
        rows = list(csv_mod.DictReader(handle))
    if not rows:
        return
    fig, ax = plt.subplots(figsize=(6, 4))
    if "generation" in rows[0]:
        x = [int(r["generation"]) for r in rows]
        ax.plot(x, [float(r["best_fitness"]) for r in rows], label="best")
        ax.plot(x, [float(r["mean_fitness"]) for r in rows], label="mean")
        ax.set_xlabel("generation")
        ax.set_ylabel("fitness")
    else:
        x = [int(r["evaluations"]) for r in rows]
        ax.plot(x, [float(r["qd_score"]) for r in rows], label="QD score")
        ax.plot(x, [int(r["niches_filled"]) for r in rows], label="niches filled")
        ax.set_xlabel("evaluations")
    ax.legend()
    fig.tight_layout()
    fig.savefig(image_path)
    plt.close(fig)


def cmd_run(args: argparse.Namespace) -> int:
    config = _load_with_overrides(args)
    out_dir = config["output"]["directory"]
    os.makedirs(out_dir, exist_ok=True)
    log_buffer = io.StringIO()
    log = RunLog(log_buffer)
    domain = build_domain(config)
    engine = build_engine(config, domain, log)
    variation = build_variation(config, domain, engine)
    run_config = run_config_from(config)
    loop = config["loop"]
    history_path = os.path.join(out_dir, "history.csv")
    if loop["kind"] == "ga":
        history = ga_run(run_config, domain, variation, log)
        buffer = io.StringIO()
        history.write_csv(buffer)
        atomic_write(history_path, buffer.getvalue())
        best = history.best_ever
        print(f"best genotype: {best.genotype}")
        print(f"best fitness: {best.fitness!r}")
        if isinstance(domain, symreg.SymregDomain) and history.final_population is not None:
            front = symreg.pareto_front(history.final_population.genotypes(), domain)
            pareto_buffer = io.StringIO()
            symreg.write_pareto_csv(front, pareto_buffer)
            atomic_write(os.path.join(out_dir, "pareto.csv"), pareto_buffer.getvalue())
    else:
        dims = [MapDim(float(lo), float(hi), int(bins)) for lo, hi, bins in loop["dims"]]
        elite_map, map_history = map_elites_run(
            run_config,
            domain,
            variation,
            dims,
            int(loop["evaluations"]),
            log,
            parent_policy=loop["parent_policy"],
            near_radius=int(loop["near_radius"]),
        )
        buffer = io.StringIO()
        map_history.write_csv(buffer)
        atomic_write(history_path, buffer.getvalue())
        best = max(elite_map.elites(), key=lambda ind: ind.fitness)
        print(f"best genotype: {best.genotype}")
        print(f"best fitness: {best.fitness!r}")
        print(f"qd score: {elite_map.qd_score()!r}")
        print(f"niches filled: {elite_map.niches_filled()}")
    atomic_write(os.path.join(out_dir, "run.jsonl"), log_buffer.getvalue())
    if config["output"]["plot"]:
        _plot_safely(lambda: _plot_history_csv(history_path, os.path.join(out_dir, "history.png")))
    return EXIT_OK


def cmd_variation(args: argparse.Namespace) -> int:
    config = _load_with_overrides(args)
    domain = build_domain(config)
    if not isinstance(domain, binary.BinaryDomain):
        raise ConfigError("domain.kind: the variation sweep requires a binary domain")
    try:
        with open(args.parents, "r", encoding="utf-8") as handle:
            lines = [line.strip() for line in handle if line.strip()]
    except OSError as err:
        raise ConfigError(f"parents file: {err}") from err
    pool = [line for line in lines if domain.validate(line) or domain.canonical(line)]
    pool = [domain.canonical(line) or line for line in pool]
    if not pool:
        raise ConfigError("parents file: no valid genotypes (one per line expected)")
    log = RunLog(None)
    engine = build_engine(config, domain, log)
    sweep = config["variation_sweep"]
    seed = int(config["loop"]["seed"])
    rng = RngStream(seed, "variation-sweep")
    rows = []
    for m in range(int(sweep["min_parents"]), int(sweep["max_parents"]) + 1):
        if m > len(pool):
            break
        pct_sum = 0.0
        novel_sum = 0
        sets = int(sweep["parent_sets"])
        for set_idx in range(sets):
            set_rng = rng.child(f"m{m}-set{set_idx}")
            parent_set = set_rng.sample(pool, m)
            pct, novel = binary.variation_metrics(
                parent_set,
                engine,
                int(sweep["trials"]),
                int(sweep["children_per_trial"]),
                domain.spec,
                set_rng,
                params=sampling_from(config),
            )
            pct_sum += pct
            novel_sum += novel
        rows.append((m, pct_sum / sets, novel_sum / sets))
    out_dir = config["output"]["directory"]
    os.makedirs(out_dir, exist_ok=True)
    csv_lines = ["parents,valid_pct,novel_count"]
    csv_lines += [f"{m},{pct!r},{novel!r}" for m, pct, novel in rows]
    csv_path = os.path.join(out_dir, "variation.csv")
    atomic_write(csv_path, "\n".join(csv_lines) + "\n")
    for m, pct, novel in rows:
        print(f"parents={m} valid_pct={pct:.1f} novel_count={novel:.1f}")
    if config["output"]["plot"]:
        _plot_safely(lambda: _plot_variation(rows, os.path.join(out_dir, "variation.png")))
    return EXIT_OK


def _plot_variation(rows, image_path: str) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 4))
    ms = [r[0] for r in rows]
    ax1.plot(ms, [r[1] for r in rows], marker="o")
    ax1.set_xlabel("parents")
    ax1.set_ylabel("valid offspring (%)")
    ax2.plot(ms, [r[2] for r in rows], marker="o")
    ax2.set_xlabel("parents")
    ax2.set_ylabel("novel offspring")
    fig.tight_layout()
    fig.savefig(image_path)
    plt.close(fig)


def _logprob_engine_or_factory(config: dict, domain) -> analysis.EngineOrFactory:
    e = config["engine"]
    seed = int(config["loop"]["seed"])
    if e["kind"] == "umda-mock":
        codec = config["domain"]["codec"]

        def factory(parents: Sequence[str]) -> CompletionEngine:
            return UmdaMockEngine(
                parents, codec=codec, children_per_call=int(e["children_per_call"]), seed=seed
            )

        return factory
    if e["kind"] == "http":
        return build_engine(config, domain, RunLog(None))
    raise CapabilityError(
        f"engine kind {e['kind']!r} does not expose per-token probabilities"
    )


def cmd_eda_compare(args: argparse.Namespace) -> int:
    config = _load_with_overrides(args)
    section = config["eda_compare"]
    length = int(section["length"])
    spec_config = dict(config["domain"])
    spec_config["kind"] = "binary"
    spec_config["length"] = length
    domain = build_domain({**config, "domain": spec_config})
    engine = _logprob_engine_or_factory(config, domain)
    rng = RngStream(int(config["loop"]["seed"]), "eda-compare")
    rows = analysis.eda_compare_experiment(
        length,
        [int(m) for m in section["parent_counts"]],
        int(section["repeats"]),
        engine,
        rng,
        codec=config["domain"]["codec"],
    )
    out_dir = config["output"]["directory"]
    os.makedirs(out_dir, exist_ok=True)
    lines = ["parents,mean_abs_diff,std_abs_diff"]
    lines += [f"{r.parent_count},{r.mean_diff!r},{r.std_diff!r}" for r in rows]
    csv_path = os.path.join(out_dir, "eda_compare.csv")
    atomic_write(csv_path, "\n".join(lines) + "\n")
    for r in rows:
        print(f"parents={r.parent_count} mean_abs_diff={r.mean_diff:.6f} std={r.std_diff:.6f}")
    if config["output"]["plot"]:
        _plot_safely(lambda: _plot_eda(rows, os.path.join(out_dir, "eda_compare.png")))
    return EXIT_OK


def _plot_eda(rows, image_path: str) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.errorbar(
        [r.parent_count for r in rows],
        [r.mean_diff for r in rows],
        yerr=[r.std_diff for r in rows],
        marker="o",
        capsize=3,
    )
    ax.set_xlabel("parents")
    ax.set_ylabel("mean absolute difference")
    fig.tight_layout()
    fig.savefig(image_path)
    plt.close(fig)


def cmd_order_bias(args: argparse.Namespace) -> int:
    config = _load_with_overrides(args)
    section = config["order_bias"]
    domain_config = dict(config["domain"])
    domain_config["kind"] = "binary"
    domain_config["length"] = int(section["length"])
    domain = build_domain({**config, "domain": domain_config})
    e = config["engine"]
    if e["kind"] in ("umda-mock",):
        codec = config["domain"]["codec"]
        seed = int(config["loop"]["seed"])
        engine: analysis.EngineOrFactory = lambda parents: UmdaMockEngine(
            parents, codec=codec, children_per_call=int(e["children_per_call"]), seed=seed
        )
    else:
        engine = build_engine(config, domain, RunLog(None))
    rng = RngStream(int(config["loop"]["seed"]), "order-bias")
    result = analysis.ordering_bias_experiment(
        int(section["length"]),
        section["sort_key"],
        list(section["orders"]),
        int(section["experiments"]),
        int(section["children_per_experiment"]),
        engine,
        rng,
        parents_per_experiment=int(section["parents_per_experiment"]),
        codec=config["domain"]["codec"],
        params=sampling_from(config),
    )
    out_dir = config["output"]["directory"]
    os.makedirs(out_dir, exist_ok=True)
    lines = ["order,score,count"]
    lines += [f"{order},{score},{count}" for order, score, count in result.rows()]
    csv_path = os.path.join(out_dir, "order_bias.csv")
    atomic_write(csv_path, "\n".join(lines) + "\n")
    for order in sorted(result.counts):
        total = sum(result.counts[order].values())
        mean = (
            sum(score * count for score, count in result.counts[order].items()) / total
            if total
            else float("nan")
        )
        print(f"order={order} children={total} mean_score={mean:.3f}")
    if config["output"]["plot"]:
        _plot_safely(lambda: _plot_order_bias(result, os.path.join(out_dir, "order_bias.png")))
    return EXIT_OK


def _plot_order_bias(result, image_path: str) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    orders = sorted(result.counts)
    scores = sorted({s for c in result.counts.values() for s in c})
    width = 0.8 / max(len(orders), 1)
    for i, order in enumerate(orders):
        xs = [s + (i - len(orders) / 2) * width for s in scores]
        ax.bar(xs, [result.counts[order].get(s, 0) for s in scores], width=width, label=order)
    ax.set_xlabel("offspring score")
    ax.set_ylabel("count")
    ax.legend()
    fig.tight_layout()
    fig.savefig(image_path)
    plt.close(fig)


def _load_with_overrides(args: argparse.Namespace) -> dict:
    config = load_config(args.config)
    if args.seed is not None:
        config["loop"]["seed"] = args.seed
    if args.out_dir is not None:
        config["output"]["directory"] = args.out_dir
    if args.no_plot:
        config["output"]["plot"] = False
    if args.engine_override is not None:
        config["engine"]["kind"] = args.engine_override
        _validate(config, args.config)
    return config


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", required=True, help="path to the JSON experiment config")
    parser.add_argument("--seed", type=int, default=None, help="override loop.seed")
    parser.add_argument("--out-dir", default=None, help="override output.directory")
    parser.add_argument("--no-plot", action="store_true", help="disable plot emission")
    parser.add_argument(
        "--engine-override",
        default=None,
        choices=["http", "umda-mock", "subtree-mock", "replay"],
        help="replace engine.kind from the config",
    )


def build_arg_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lmxevo", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    run_parser = sub.add_parser("run", help="execute the configured evolution loop")
    _add_common(run_parser)
    run_parser.set_defaults(fn=cmd_run)
    var_parser = sub.add_parser("variation", help="offspring validity/novelty sweep")
    _add_common(var_parser)
    var_parser.add_argument("--parents", required=True, help="file with one genotype per line")
    var_parser.set_defaults(fn=cmd_variation)
    eda_parser = sub.add_parser("eda-compare", help="explicit vs implicit marginals")
    _add_common(eda_parser)
    eda_parser.set_defaults(fn=cmd_eda_compare)
    order_parser = sub.add_parser("order-bias", help="parent-ordering bias histograms")
    _add_common(order_parser)
    order_parser.set_defaults(fn=cmd_order_bias)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_arg_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except CapabilityError as err:
        print(f"capability error: {err}", file=sys.stderr)
        return EXIT_CAPABILITY
    except (EngineError, InitializationError) as err:
        print(f"engine error: {err}", file=sys.stderr)
        return EXIT_ENGINE


if __name__ == "__main__":
    sys.exit(main())
