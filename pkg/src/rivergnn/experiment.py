"""Configuration-driven topology-comparison grid.

A grid cell is one (architecture, adjacency, orientation, fold) combination.
Isolated adjacency ignores the orientation, so it is trained once per
(architecture, fold) and its result replicated across the requested
orientations.
"""

from __future__ import annotations

import csv
import itertools
import json
import logging
import os
import traceback
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from ._rng import substream
from .adjacency import PHYSICAL_TYPES, AdjacencyType, EdgeOrientation, oriented_edges
from .dataset import (
    SPLITS_BY_NAME,
    NodeSignal,
    NormalizationParams,
    SampleSet,
    extract_samples,
    load_signal_cache,
    make_splits,
    period_labels,
    unnormalize,
    zscore_normalize,
)
from .diffcore import load_checkpoint, save_checkpoint
from .evaluation import fold_summary, pearson_corr, weight_stats, weighted_nse, worst_windows
from .exceptions import ConfigError, DataError, RiverGNNError
from .models import Architecture, ModelConfig, build_model
from .river_graph import RiverGraph, read_graph
from .synthdata import SynthConfig, generate_network, generate_signals
from .training import TrainConfig, predict, train

logger = logging.getLogger(__name__)

OUTPUT_ENV = "RIVERGNN_OUTPUT"
SIGNAL_CACHE = "signal.bin"
RESULTS_HEADER = ["arch", "adjacency", "orientation", "fold", "summary_nse", "summary_nse_unweighted"]
CORRELATION_HEADER = ["arch", "orientation", "physical_weight", "pearson_r"]
WORST_HEADER = ["gauge", "start", "deviation"]

# Hyperparameter names; list-valued keys span the grid.
GRID_KEYS = ("architecture", "adjacency_type", "edge_direction")
FIXED_CHOICES = {"normalisation": "z-score", "initialisation": "kaiming", "optimiser": "adam"}


def default_output_root() -> Path:
    return Path(os.environ.get(OUTPUT_ENV, "rivergnn-output"))


def _as_tuple(v) -> tuple:
    if isinstance(v, str):
        return tuple(s.strip() for s in v.split(",") if s.strip())
    return tuple(v)


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a grid run depends on; field names follow the hyperparameter table."""

    data: str | None = None  # preprocessed directory (graph CSVs + signal cache)
    synth_preset: str | None = None
    synth_hours: int = 3 * 8760
    synth_random_gauges: int = 8
    window_size: int = 24
    lead_time: int = 6
    normalisation: str = "z-score"
    architecture: tuple[str, ...] = ("GCNII",)
    network_depth: int = 19
    latent_space_dim: int = 128
    edge_direction: tuple[str, ...] = ("bidirected",)
    adjacency_type: tuple[str, ...] = ("binary",)
    initialisation: str = "kaiming"
    optimiser: str = "adam"
    epochs: int = 100
    batch_size: int = 64
    learning_rate: float = 1e-4
    regularisation_strength: float = 1e-5
    holdout_fraction: float = 0.2
    gcnii_alpha: float = 0.1
    gcnii_lambda: float = 0.5
    gat_heads: int = 1
    folds: tuple[str, ...] = ("even", "odd", "contiguous")
    period_mode: str = "calendar"
    seed: int = 0
    output: str | None = None
    jobs: int = 1

    def __post_init__(self):
        for key in GRID_KEYS + ("folds",):
            object.__setattr__(self, key, _as_tuple(getattr(self, key)))
        for key, allowed in FIXED_CHOICES.items():
            if getattr(self, key) != allowed:
                raise ConfigError(f"{key} must be {allowed!r}, got {getattr(self, key)!r}")
        if (self.data is None) == (self.synth_preset is None):
            raise ConfigError("set exactly one data source: data (preprocessed directory) or synth_preset")
        if self.window_size < 3:
            raise ConfigError("window_size must be at least 3 (the relevancy score differentiates the window)")
        if self.lead_time < 0 or self.jobs < 1:
            raise ConfigError("lead_time must be non-negative and jobs positive")
        if not all(getattr(self, k) for k in GRID_KEYS + ("folds",)):
            raise ConfigError("architecture, adjacency_type, edge_direction and folds need at least one entry")
        for name in self.folds:
            if name not in SPLITS_BY_NAME:
                raise ConfigError(f"unknown fold {name!r}; choose from {sorted(SPLITS_BY_NAME)}")
        if self.period_mode not in ("calendar", "blocks"):
            raise ConfigError("period_mode must be 'calendar' or 'blocks'")
        try:
            archs = [Architecture(a) for a in self.architecture]
            [AdjacencyType(a) for a in self.adjacency_type]
            [EdgeOrientation(o) for o in self.edge_direction]
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        for arch in archs:
            for adj in self.adjacency_type:
                self.model_config(arch, grid_adjacency(arch, adj), self.edge_direction[0])
        TrainConfig(**self.train_kwargs())

    @classmethod
    def from_mapping(cls, values: Mapping[str, Any]) -> "ExperimentConfig":
        names = {f.name for f in fields(cls)}
        unknown = sorted(set(values) - names)
        if unknown:
            raise ConfigError(f"unknown configuration keys: {', '.join(unknown)}")
        return cls(**{k: v for k, v in values.items() if v is not None})

    def to_dict(self) -> dict[str, Any]:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}

    def model_config(self, arch, adjacency, orientation) -> ModelConfig:
        return ModelConfig(
            arch=arch,
            N=self.network_depth,
            d=self.latent_space_dim,
            W=self.window_size,
            adjacency=adjacency,
            orientation=orientation,
            gcnii_alpha=self.gcnii_alpha,
            gcnii_lambda=self.gcnii_lambda,
            gat_heads=self.gat_heads,
        )

    def train_kwargs(self) -> dict[str, Any]:
        return dict(
            epochs=self.epochs,
            batch_size=self.batch_size,
            lr=self.learning_rate,
            weight_decay=self.regularisation_strength,
            holdout_fraction=self.holdout_fraction,
            seed=self.seed,
        )


def grid_adjacency(arch, adjacency) -> str:
    """Attention models replace the learned adjacency with all physical features."""
    if Architecture(arch) is Architecture.RESGAT and AdjacencyType(adjacency) is AdjacencyType.LEARNED:
        return AdjacencyType.ALL_PHYSICAL.value
    return AdjacencyType(adjacency).value


@dataclass(frozen=True)
class Unit:
    """One training run; ``orientations`` lists the result rows it fills."""

    arch: str
    adjacency: str
    orientation: str
    fold: str
    orientations: tuple[str, ...]

    @property
    def key(self) -> str:
        return f"{self.arch}_{self.adjacency}_{self.orientation}_{self.fold}"


def expand_grid(config: ExperimentConfig) -> list[Unit]:
    units = []
    adjacencies = list(dict.fromkeys(grid_adjacency(a, adj) for a in config.architecture for adj in config.adjacency_type))
    for arch in config.architecture:
        arch_adj = list(dict.fromkeys(grid_adjacency(arch, a) for a in config.adjacency_type))
        for adj in sorted(arch_adj, key=adjacencies.index):
            if adj == AdjacencyType.ISOLATED.value:
                runs = [(config.edge_direction[0], config.edge_direction)]
            else:
                runs = [(o, (o,)) for o in config.edge_direction]
            for orientation, replicas in runs:
                for fold in config.folds:
                    units.append(Unit(arch, adj, orientation, fold, replicas))
    return units


# --- data --------------------------------------------------------------------


@dataclass
class Context:
    graph: RiverGraph
    signal: NodeSignal
    params: NormalizationParams
    years: np.ndarray
    out: Path


def load_context(config: ExperimentConfig, out: Path) -> Context:
    if config.synth_preset is not None:
        synth = SynthConfig(hours=config.synth_hours, seed=config.seed, n_gauges=config.synth_random_gauges)
        preset = None if config.synth_preset == "random" else config.synth_preset
        graph = generate_network(synth, preset)
        signal, params = zscore_normalize(generate_signals(graph, synth))
    else:
        root = Path(config.data)
        if not (root / SIGNAL_CACHE).exists():
            raise DataError(f"no preprocessed cache at {root / SIGNAL_CACHE}; run 'rivergnn preprocess' first")
        graph = read_graph(root)
        signal, params = load_signal_cache(root / SIGNAL_CACHE)
        if tuple(signal.gauge_ids) != graph.order:
            raise DataError("signal cache and graph list different gauges")
    years = period_labels(signal.timestamps, config.period_mode)
    return Context(graph, signal, params, years, out)


def fold_samples(ctx: Context, config: ExperimentConfig, fold: str) -> tuple[SampleSet, SampleSet]:
    samples = extract_samples(ctx.signal, config.window_size, config.lead_time)
    train_set, test_set = make_splits(samples, SPLITS_BY_NAME[fold], ctx.years)
    if not len(train_set) or not len(test_set):
        raise DataError(f"fold {fold}: empty train or test set (period_mode={config.period_mode!r})")
    return train_set, test_set


# --- one unit ----------------------------------------------------------------


@dataclass
class UnitResult:
    unit: Unit
    summary: float = float("nan")
    summary_unweighted: float = float("nan")
    per_gauge: list[float] = field(default_factory=list)
    per_gauge_unweighted: list[float] = field(default_factory=list)
    omega: list[float] | None = None
    physical: dict[str, list[float]] | None = None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


def run_unit(ctx: Context, config: ExperimentConfig, unit: Unit) -> UnitResult:
    model_cfg = config.model_config(unit.arch, unit.adjacency, unit.orientation)
    train_set, test_set = fold_samples(ctx, config, unit.fold)
    model = build_model(model_cfg, ctx.graph, substream(config.seed, "init"))
    model, history = train(model, train_set, ctx.params, TrainConfig(**config.train_kwargs()))
    preds = predict(model, test_set)
    report = weighted_nse(
        preds, test_set.targets(), test_set.windows()[..., 0], ctx.params,
        gauge_ids=ctx.graph.order, fold=unit.fold, config_id=unit.key,
    )

    for sub in ("histories", "checkpoints"):
        (ctx.out / sub).mkdir(parents=True, exist_ok=True)
    history.write_csv(ctx.out / "histories" / f"{unit.key}.csv")
    save_checkpoint(ctx.out / "checkpoints" / f"{unit.key}.ckpt", model.state_dict())
    manifest = {
        "model": model_cfg.to_dict(),
        "train": config.train_kwargs(),
        "seed": config.seed,
        "fold": unit.fold,
        "graph_sha256": ctx.graph.content_hash(),
        "selected_epoch": history.selected_epoch,
    }
    (ctx.out / "checkpoints" / f"{unit.key}.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")

    result = UnitResult(
        unit, report.summary, report.summary_unweighted, report.per_gauge.tolist(), report.per_gauge_unweighted.tolist()
    )
    if model.learned_weights is not None:
        edges = oriented_edges(ctx.graph, unit.orientation)
        result.omega = model.learned_weights.data.tolist()
        result.physical = {k.value: edges.physical(k).tolist() for k in PHYSICAL_TYPES}
    return result


def _safe_run(ctx: Context, config: ExperimentConfig, unit: Unit) -> UnitResult:
    try:
        return run_unit(ctx, config, unit)
    except (RiverGNNError, ValueError, ArithmeticError) as exc:
        logger.error("cell %s failed: %s", unit.key, exc)
        logger.debug("%s", traceback.format_exc())
        return UnitResult(unit, error=f"{type(exc).__name__}: {exc}")


_WORKER: dict[str, Any] = {}


def _worker_init(config: ExperimentConfig, out: str) -> None:
    _WORKER["config"] = config
    _WORKER["ctx"] = load_context(config, Path(out))


def _worker_run(unit: Unit) -> UnitResult:
    return _safe_run(_WORKER["ctx"], _WORKER["config"], unit)


# --- output ------------------------------------------------------------------


def _fmt(x: float) -> str:
    return repr(float(x))


def _write_csv(path: Path, header: Sequence[str], rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _result_rows(config: ExperimentConfig, results: list[UnitResult]):
    """One row per (arch, adjacency, orientation, fold) in grid order."""
    rows = []
    for r in results:
        if r.ok:
            for o in r.unit.orientations:
                rows.append((r.unit.arch, r.unit.adjacency, o, r.unit.fold, r))
    o_pos = {o: i for i, o in enumerate(config.edge_direction)}
    f_pos = {f: i for i, f in enumerate(config.folds)}
    order = {(r.unit.arch, r.unit.adjacency): i for i, r in enumerate(results)}
    rows.sort(key=lambda t: (order[(t[0], t[1])], o_pos[t[2]], f_pos[t[3]]))
    return rows


@dataclass
class GridOutcome:
    out: Path
    results: list[UnitResult]

    @property
    def failures(self) -> list[UnitResult]:
        return [r for r in self.results if not r.ok]


def write_outputs(ctx: Context, config: ExperimentConfig, results: list[UnitResult]) -> None:
    out = ctx.out
    rows = _result_rows(config, results)
    _write_csv(
        out / "results.csv",
        RESULTS_HEADER,
        [(a, adj, o, f, _fmt(r.summary), _fmt(r.summary_unweighted)) for a, adj, o, f, r in rows],
    )
    gauge_rows = []
    for a, adj, o, f, r in rows:
        for gid, v, vu in zip(ctx.graph.order, r.per_gauge, r.per_gauge_unweighted):
            gauge_rows.append((a, adj, o, f, gid, _fmt(v), _fmt(vu)))
    _write_csv(
        out / "per_gauge_nse.csv", ["arch", "adjacency", "orientation", "fold", "gauge", "nse", "nse_unweighted"], gauge_rows
    )
    _write_csv(
        out / "failures.csv",
        ["arch", "adjacency", "orientation", "fold", "error"],
        [(r.unit.arch, r.unit.adjacency, r.unit.orientation, r.unit.fold, r.error) for r in results if not r.ok],
    )
    _write_learned(out, config, [r for r in results if r.ok and r.omega is not None])
    (out / "manifest.json").write_text(
        json.dumps(
            {
                "config": config.to_dict(),
                "seed": config.seed,
                "graph_sha256": ctx.graph.content_hash(),
                "gauges": list(ctx.graph.order),
                "period": [str(ctx.signal.timestamps[0]), str(ctx.signal.timestamps[-1])],
                "cells": [r.unit.key for r in results],
            },
            indent=2,
        )
        + "\n"
    )


def _edge_corr(omega: np.ndarray, physical: np.ndarray) -> float:
    if len(omega) < 2:
        warnings.warn("correlation undefined with fewer than two edges", RuntimeWarning, stacklevel=2)
        return float("nan")
    return pearson_corr(omega, physical)


def _write_learned(out: Path, config: ExperimentConfig, learned: list[UnitResult]) -> None:
    by_fold, corr_rows, stat_rows = [], [], []
    groups: dict[tuple[str, str], list[UnitResult]] = {}
    for r in learned:
        groups.setdefault((r.unit.arch, r.unit.orientation), []).append(r)
    stat_names = ["mean", "std", "min", "q25", "median", "q75", "max"]
    for (arch, orientation), rs in groups.items():
        for kind in PHYSICAL_TYPES:
            vals = []
            for r in rs:
                c = _edge_corr(r.omega, r.physical[kind.value])
                vals.append(c)
                by_fold.append((arch, orientation, kind.value, r.unit.fold, _fmt(c)))
            corr_rows.append((arch, orientation, kind.value, _fmt(np.mean(vals))))
        for r in rs:
            st = weight_stats(r.omega).as_dict()
            stat_rows.append((arch, orientation, r.unit.fold, *(_fmt(st[k]) for k in stat_names)))
        st = weight_stats(np.concatenate([r.omega for r in rs])).as_dict()
        stat_rows.append((arch, orientation, "all", *(_fmt(st[k]) for k in stat_names)))
    _write_csv(out / "correlations.csv", CORRELATION_HEADER, corr_rows)
    _write_csv(out / "correlations_by_fold.csv", CORRELATION_HEADER[:3] + ["fold", "pearson_r"], by_fold)
    _write_csv(out / "weight_stats.csv", ["arch", "orientation", "fold", *stat_names], stat_rows)


def write_worst_windows(ctx: Context, config: ExperimentConfig, results: list[UnitResult], horizon: int = 48, k: int = 5):
    """Worst gauge of the best configuration: its top-``k`` disjoint windows.

    The best configuration has the highest mean summary NSE over folds; within
    it the fold with the highest summary NSE is analysed.
    """
    groups: dict[tuple[str, str, str], list[UnitResult]] = {}
    for r in results:
        if r.ok and np.isfinite(r.summary):
            groups.setdefault((r.unit.arch, r.unit.adjacency, r.unit.orientation), []).append(r)
    if not groups:
        return None
    best_key = max(groups, key=lambda g: np.mean([r.summary for r in groups[g]]))
    best = max(groups[best_key], key=lambda r: r.summary)
    unit = best.unit
    g = int(np.nanargmin(best.per_gauge))
    gid = ctx.graph.order[g]

    model = build_model(config.model_config(unit.arch, unit.adjacency, unit.orientation), ctx.graph, substream(0, "init"))
    model.load_state_dict(load_checkpoint(ctx.out / "checkpoints" / f"{unit.key}.ckpt"))
    _, test_set = fold_samples(ctx, config, unit.fold)
    pred = unnormalize(predict(model, test_set), ctx.params)[:, g]
    truth = unnormalize(test_set.targets(), ctx.params)[:, g]
    h = min(horizon, len(pred))
    picks = worst_windows(pred, truth, h, k)
    hours = ctx.signal.timestamps[test_set.target_hours]
    _write_csv(ctx.out / "worst_windows.csv", WORST_HEADER, [(gid, str(hours[s]), _fmt(d)) for s, d in picks])
    summary = {
        "arch": unit.arch,
        "adjacency": unit.adjacency,
        "orientation": unit.orientation,
        "fold": unit.fold,
        "gauge": gid,
        "gauge_nse": best.per_gauge[g],
        "summary_nse": best.summary,
        "horizon": h,
    }
    (ctx.out / "worst_gauge.json").write_text(json.dumps(summary, indent=2) + "\n")
    return summary


def run_grid(config: ExperimentConfig, out: str | Path | None = None) -> GridOutcome:
    out = Path(out or config.output or default_output_root() / "run")
    out.mkdir(parents=True, exist_ok=True)
    ctx = load_context(config, out)
    units = expand_grid(config)
    logger.info("grid: %d training runs into %s", len(units), out)
    if config.jobs > 1 and len(units) > 1:
        with ProcessPoolExecutor(config.jobs, initializer=_worker_init, initargs=(config, str(out))) as pool:
            results = list(pool.map(_worker_run, units))
    else:
        results = []
        for i, unit in enumerate(units, 1):
            logger.info("[%d/%d] %s", i, len(units), unit.key)
            results.append(_safe_run(ctx, config, unit))
    write_outputs(ctx, config, results)
    write_worst_windows(ctx, config, results)
    return GridOutcome(out, results)


def parse_sweep(specs: Sequence[str]) -> dict[str, list[int]]:
    """``["W=12,24", "L=1,6"]`` -> ``{"W": [12, 24], "L": [1, 6]}``."""
    axes: dict[str, list[int]] = {}
    for spec in specs:
        name, _, values = spec.partition("=")
        name = name.strip().upper()
        if name not in ("W", "L") or not values:
            raise ConfigError(f"bad sweep axis {spec!r}; expected W=... or L=...")
        try:
            axes[name] = [int(v) for v in values.split(",")]
        except ValueError:
            raise ConfigError(f"sweep values must be integers: {spec!r}") from None
    return axes


def run_sweep(config: ExperimentConfig, axes: Mapping[str, Sequence[int]], out: str | Path) -> list[GridOutcome]:
    """One grid per (W, L) combination in ``out/sweep_W{W}_L{L}``."""
    Ws = axes.get("W", [config.window_size])
    Ls = axes.get("L", [config.lead_time])
    outcomes = []
    for W, L in itertools.product(Ws, Ls):
        cfg = replace(config, window_size=W, lead_time=L)
        outcomes.append(run_grid(cfg, Path(out) / f"sweep_W{W}_L{L}"))
    return outcomes
