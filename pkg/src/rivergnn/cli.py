"""Command-line entry point: ``rivergnn <command> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Any, Sequence

import numpy as np
import yaml

from . import __version__
from .adjacency import dump_adjacency
from .dataset import interpolate_gaps, read_gauge_csv, read_signals, save_signal_cache, zscore_normalize
from .diffcore import load_checkpoint
from .exceptions import ConfigError, DataError, DomainError, IntegrityError, NumericError, RiverGNNError
from .experiment import (
    SIGNAL_CACHE,
    ExperimentConfig,
    Unit,
    default_output_root,
    grid_adjacency,
    load_context,
    parse_sweep,
    run_grid,
    run_sweep,
    run_unit,
)
from .gradsuite import run_suite
from .models import build_model
from .report import render_report
from .river_graph import filter_gauges, inverse_dfs, read_graph, slope_inconsistencies, validate, write_graph
from .synthdata import PRESETS, SynthConfig, generate_network, generate_signals, write_dataset

logger = logging.getLogger("rivergnn")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC, EXIT_PARTIAL = 0, 2, 3, 4, 5

# flag dest -> configuration key (hyperparameter-table names)
HYPER_FLAGS = {
    "window_size": int,
    "lead_time": int,
    "architecture": str,
    "network_depth": int,
    "latent_space_dim": int,
    "edge_direction": str,
    "adjacency_type": str,
    "epochs": int,
    "batch_size": int,
    "learning_rate": float,
    "regularisation_strength": float,
    "holdout_fraction": float,
    "gcnii_alpha": float,
    "gcnii_lambda": float,
    "gat_heads": int,
    "folds": str,
    "period_mode": str,
    "seed": int,
    "data": str,
    "synth_preset": str,
    "synth_hours": int,
    "jobs": int,
}


def _normalise_key(key: str) -> str:
    key = key.split("(")[0].strip().lower()
    return key.replace("# ", "").replace(" ", "_").replace("-", "_")


def load_config_file(path: str | Path) -> dict[str, Any]:
    try:
        raw = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"config {path} must be a mapping of hyperparameter names to values")
    return {_normalise_key(k): v for k, v in raw.items()}


def experiment_config(args: argparse.Namespace) -> ExperimentConfig:
    values = load_config_file(args.config) if getattr(args, "config", None) else {}
    flags = {k: getattr(args, k) for k in HYPER_FLAGS if getattr(args, k, None) is not None}
    # a data source given on the command line replaces the file's
    if "data" in flags:
        values.pop("synth_preset", None)
    if "synth_preset" in flags:
        values.pop("data", None)
    values.update(flags)
    if getattr(args, "out", None):
        values["output"] = args.out
    return ExperimentConfig.from_mapping(values)


def _add_hyper_flags(p: argparse.ArgumentParser, grid: bool) -> None:
    g = p.add_argument_group("hyperparameters (override the config file)")
    for key, typ in HYPER_FLAGS.items():
        if not grid and key in ("jobs",):
            continue
        flag = "--" + key.replace("_", "-")
        g.add_argument(flag, dest=key, type=typ, default=None, metavar=key.upper())
    p.add_argument("--config", help="YAML or JSON file keyed by hyperparameter names")
    p.add_argument("--out", help="output directory")


# --- commands ----------------------------------------------------------------


def cmd_synth(args) -> int:
    preset = None if args.preset == "random" else args.preset
    cfg = SynthConfig(
        n_gauges=args.gauges,
        max_depth=args.max_depth,
        max_indegree=args.max_indegree,
        hours=args.hours,
        seed=args.seed,
        spike_rate=args.spike_rate,
        lag_per_edge=args.lag,
        noise_std=args.noise,
        local_runoff=args.local_runoff,
        start=args.start,
    )
    out = Path(args.out or default_output_root() / f"synth_{args.preset}_seed{args.seed}")
    if out.exists() and any(out.iterdir()):
        if not args.force:
            raise ConfigError(f"{out} is not empty; pass --force to overwrite")
        for stale in [*out.glob("gauge_*.csv"), out / "edges.csv", out / "nodes.csv"]:
            stale.unlink(missing_ok=True)
    graph = generate_network(cfg, preset)
    write_dataset(out, graph, generate_signals(graph, cfg))
    print(f"wrote {graph.n} gauges and {len(graph.edges)} edges to {out}")
    return EXIT_OK


def cmd_preprocess(args) -> int:
    data = Path(args.data)
    graph = read_graph(data)
    for v in validate(graph):
        print(f"warning: {v}", file=sys.stderr)
    sinks = graph.sinks()
    sink = args.sink if args.sink is not None else (sinks[0] if len(sinks) == 1 else None)
    if sink is None:
        raise ConfigError(f"graph has {len(sinks)} sinks; choose one with --sink")
    if sink not in graph.nodes:
        raise DataError(f"sink {sink} is not a gauge of {data}")
    region = graph.subgraph(inverse_dfs(graph, sink))

    start, stop = args.start, args.stop
    if start is None or stop is None:
        ts, _ = read_gauge_csv(data / f"gauge_{sink}.csv")
        if not len(ts):
            raise DataError(f"gauge {sink} has no records")
        start, stop = start or ts[0], stop or ts[-1]
    signal = read_signals(data, region.order, start, stop)
    filled, long_gaps = interpolate_gaps(signal, args.max_gap)
    if sink in long_gaps:
        raise DataError(f"sink {sink} has gaps longer than {args.max_gap} h; choose another period or sink")
    kept = filter_gauges(region, lambda v: v not in long_gaps)
    normed, params = zscore_normalize(filled.select(kept.order))

    out = Path(args.out or data / "preprocessed")
    out.mkdir(parents=True, exist_ok=True)
    write_graph(kept, out)
    save_signal_cache(out / SIGNAL_CACHE, normed, params)
    report = {
        "sink": sink,
        "nodes_before": graph.n,
        "nodes_after_dfs": region.n,
        "nodes_after_filter": kept.n,
        "removed": {str(g): [list(gap) for gap in gaps] for g, gaps in sorted(long_gaps.items())},
        "max_gap_hours": args.max_gap,
        "period": [str(normed.timestamps[0]), str(normed.timestamps[-1])],
        "slope_inconsistent_edges": [list(e) for e in slope_inconsistencies(kept)],
    }
    (out / "preprocess_report.json").write_text(json.dumps(report, indent=2) + "\n")
    print(f"gauges: {graph.n} -> {region.n} (upstream of {sink}) -> {kept.n} (complete); wrote {out}")
    return EXIT_OK


def cmd_train(args) -> int:
    config = experiment_config(args)
    if len(config.architecture) != 1 or len(config.adjacency_type) != 1 or len(config.edge_direction) != 1:
        raise ConfigError("train runs one cell; give a single architecture, adjacency type and edge direction")
    fold = config.folds[0] if args.fold is None else args.fold
    out = Path(args.out or config.output or default_output_root() / "train")
    out.mkdir(parents=True, exist_ok=True)
    ctx = load_context(replace(config, folds=(fold,)), out)
    arch = config.architecture[0]
    unit = Unit(arch, grid_adjacency(arch, config.adjacency_type[0]), config.edge_direction[0], fold, config.edge_direction)
    result = run_unit(ctx, config, unit)
    print(f"{unit.key}: summary NSE {result.summary:.4f} (unweighted {result.summary_unweighted:.4f})")
    if args.adjacency_dump:
        model = build_model(config.model_config(unit.arch, unit.adjacency, unit.orientation), ctx.graph, np.random.default_rng(0))
        model.load_state_dict(load_checkpoint(out / "checkpoints" / f"{unit.key}.ckpt"))
        dump_adjacency(model.normalized_adjacency().data, args.adjacency_dump)
        print(f"normalised adjacency written to {args.adjacency_dump}")
    return EXIT_OK


def cmd_run(args) -> int:
    config = experiment_config(args)
    out = Path(args.out or config.output or default_output_root() / "run")
    outcomes = [run_grid(config, out)]
    if args.sweep:
        outcomes += run_sweep(config, parse_sweep(args.sweep), out)
    failed = sum(len(o.failures) for o in outcomes)
    total = sum(len(o.results) for o in outcomes)
    for o in outcomes:
        print(f"{o.out}: {len(o.results) - len(o.failures)}/{len(o.results)} training runs completed")
    if failed:
        print(f"{failed} of {total} training runs failed; see failures.csv", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_report(args) -> int:
    text = render_report(args.results)
    out = Path(args.out) if args.out else Path(args.results) / "report.md"
    out.write_text(text, encoding="utf-8")
    print(text)
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    results, seconds = run_suite(args.seed)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name:<22} max rel err {r.error:.3e}  (tol {r.tol:g})")
    ok = all(r.passed for r in results)
    print(f"{sum(r.passed for r in results)}/{len(results)} checks passed in {seconds:.1f} s")
    return EXIT_OK if ok else EXIT_NUMERIC


# --- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rivergnn", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic gauge network and signals")
    p.add_argument("--preset", default="fig4_iv", choices=[*PRESETS, "random"])
    p.add_argument("--gauges", type=int, default=SynthConfig.n_gauges)
    p.add_argument("--max-depth", type=int, default=SynthConfig.max_depth)
    p.add_argument("--max-indegree", type=int, default=SynthConfig.max_indegree)
    p.add_argument("--hours", type=int, default=SynthConfig.hours)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--spike-rate", type=float, default=SynthConfig.spike_rate, help="storms per 1000 h")
    p.add_argument("--lag", type=int, default=SynthConfig.lag_per_edge, help="hours per edge")
    p.add_argument("--noise", type=float, default=SynthConfig.noise_std)
    p.add_argument("--local-runoff", type=float, default=SynthConfig.local_runoff)
    p.add_argument("--start", default=SynthConfig.start)
    p.add_argument("--out")
    p.add_argument("--force", action="store_true", help="overwrite a non-empty output directory")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("preprocess", help="region selection, gap filling, gauge filtering, normalisation")
    p.add_argument("data", help="directory with edges.csv, nodes.csv and gauge_<id>.csv files")
    p.add_argument("--sink", type=int, help="outlet gauge (default: the unique sink)")
    p.add_argument("--start", help="first hour, e.g. 2000-01-01T00")
    p.add_argument("--stop", help="last hour (inclusive)")
    p.add_argument("--max-gap", type=int, default=6, help="longest gap in hours filled by interpolation")
    p.add_argument("--out")
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("train", help="train and evaluate a single grid cell")
    _add_hyper_flags(p, grid=False)
    p.add_argument("--fold", choices=["even", "odd", "contiguous"])
    p.add_argument("--adjacency-dump", help="write the trained normalised adjacency to this CSV")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("run", help="cross-validate the full configuration grid")
    _add_hyper_flags(p, grid=True)
    p.add_argument("--sweep", nargs="+", metavar="AXIS=V1,V2", help="extra grids over W and/or L, e.g. W=12,24 L=1,6")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("report", help="render Markdown tables from a results directory")
    p.add_argument("results")
    p.add_argument("--out", help="Markdown file (default: <results>/report.md)")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("gradcheck", help="finite-difference gradient suite")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s"
    )
    try:
        return args.func(args)
    except ConfigError as exc:
        code = EXIT_CONFIG
        msg = str(exc)
    except (DataError, IntegrityError, DomainError) as exc:
        code = EXIT_DATA
        msg = str(exc)
    except NumericError as exc:
        code = EXIT_NUMERIC
        msg = f"numeric failure: {exc}"
    except RiverGNNError as exc:
        code = EXIT_DATA
        msg = str(exc)
    print(f"rivergnn: error: {msg}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
