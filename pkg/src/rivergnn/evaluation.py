"""Weighted Nash-Sutcliffe efficiency, fold aggregation, learned-weight
statistics and worst-window diagnostics."""

from __future__ import annotations

import logging
import math
import statistics
import warnings
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .dataset import NormalizationParams, relevancy_score, unnormalize
from .exceptions import DomainError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class NseReport:
    per_gauge: np.ndarray
    summary: float
    per_gauge_unweighted: np.ndarray
    summary_unweighted: float
    gauge_ids: tuple[int, ...] = ()
    excluded: tuple[int, ...] = ()
    fold: str | None = None
    config_id: str | None = None

    def worst_gauge(self) -> int:
        """Gauge id (or index without ids) with the lowest weighted NSE."""
        i = int(np.nanargmin(self.per_gauge))
        return self.gauge_ids[i] if self.gauge_ids else i


def nse_per_gauge(pred_raw: np.ndarray, truth_raw: np.ndarray, mu: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """``1 - sum(w (pred - truth)^2) / sum(w (mu - truth)^2)`` per gauge (column).

    NaN where the denominator vanishes.
    """
    num = np.sum(weights * (pred_raw - truth_raw) ** 2, axis=0)
    den = np.sum(weights * (mu - truth_raw) ** 2, axis=0)
    out = np.full(num.shape, np.nan)
    ok = den > 0
    out[ok] = 1.0 - num[ok] / den[ok]
    return out


def _summary(values: np.ndarray) -> float:
    ok = values[~np.isnan(values)]
    return float(np.sum(ok) / len(ok)) if len(ok) else float("nan")


def weighted_nse(
    preds: np.ndarray,
    targets: np.ndarray,
    windows: np.ndarray | None,
    params: NormalizationParams,
    *,
    scores: np.ndarray | None = None,
    gauge_ids: Sequence[int] = (),
    fold: str | None = None,
    config_id: str | None = None,
) -> NseReport:
    """NSE of normalised predictions against normalised targets, in physical units.

    Each time step is weighted by the relevancy score of its input window
    (``windows`` with shape (S, n, W) or (S, n, W, C)), or by precomputed
    ``scores`` of shape (S, n). The mean discharge of the normalisation is
    the reference predictor. Gauges with a vanishing denominator are excluded
    from the summary.
    """
    preds = np.asarray(preds, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if preds.shape != targets.shape:
        raise DomainError(f"predictions {preds.shape} and targets {targets.shape} differ in shape")
    if scores is None:
        w = np.asarray(windows)
        if w.ndim == 4:
            w = w[..., 0]
        scores = relevancy_score(w, params)
    if scores.shape != preds.shape:
        raise DomainError("scores must match predictions in shape")
    pred_raw, truth_raw = unnormalize(preds, params), unnormalize(targets, params)
    mu = params.discharge_mu
    per = nse_per_gauge(pred_raw, truth_raw, mu, scores)
    per_unw = nse_per_gauge(pred_raw, truth_raw, mu, np.ones_like(scores))
    excluded = [int(gauge_ids[g]) if len(gauge_ids) else g for g in np.flatnonzero(np.isnan(per))]
    if excluded:
        warnings.warn(f"NSE undefined for gauges {excluded}; excluded from the summary", RuntimeWarning, stacklevel=2)
    return NseReport(per, _summary(per), per_unw, _summary(per_unw), tuple(gauge_ids), tuple(excluded), fold, config_id)


@dataclass(frozen=True)
class FoldSummary:
    values: tuple[float, ...]
    mean: float
    std: float


def fold_summary(values: Iterable[float]) -> FoldSummary:
    """Mean and sample standard deviation (denominator folds - 1)."""
    vals = tuple(float(v) for v in values)
    if not vals:
        raise DomainError("need at least one fold value")
    if any(math.isnan(v) for v in vals):
        return FoldSummary(vals, float("nan"), float("nan"))
    # exact rational arithmetic: identical folds give exactly zero spread
    std = statistics.stdev(vals) if len(vals) > 1 else 0.0
    return FoldSummary(vals, float(statistics.mean(vals)), float(std))


def cross_validate(run_fold: Callable[[object], float], splits: Sequence) -> FoldSummary:
    """Run ``run_fold(split)`` for each split and aggregate its summary NSE."""
    if len(splits) < 1:
        raise DomainError("need at least one fold")
    return fold_summary(run_fold(s) for s in splits)


def pearson_corr(a: Sequence[float], b: Sequence[float]) -> float:
    """Pearson correlation coefficient; NaN (with a warning) for constant inputs."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1 or len(a) < 2:
        raise DomainError("pearson_corr needs two vectors of equal length >= 2")
    da, db = a - a.mean(), b - b.mean()
    saa, sbb = float(np.dot(da, da)), float(np.dot(db, db))
    if saa == 0.0 or sbb == 0.0:
        warnings.warn("correlation undefined for a constant vector", RuntimeWarning, stacklevel=2)
        return float("nan")
    return float(np.clip(np.dot(da, db) / math.sqrt(saa * sbb), -1.0, 1.0))


@dataclass(frozen=True)
class WeightStats:
    mean: float
    std: float
    min: float
    q25: float
    median: float
    q75: float
    max: float

    def as_dict(self) -> dict[str, float]:
        return dict(self.__dict__)


def weight_stats(omega: Sequence[float]) -> WeightStats:
    """Moments and linearly interpolated quartiles of the learned edge weights."""
    w = np.asarray(omega, dtype=np.float64).ravel()
    if w.size == 0:
        raise DomainError("weight_stats needs at least one weight")
    q = np.percentile(w, [0, 25, 50, 75, 100], method="linear")
    std = float(w.std(ddof=1)) if w.size > 1 else 0.0
    return WeightStats(float(w.mean()), std, float(q[0]), float(q[1]), float(q[2]), float(q[3]), float(q[4]))


def worst_windows(pred: np.ndarray, truth: np.ndarray, horizon: int = 48, k: int = 5) -> list[tuple[int, float]]:
    """Greedy top-``k`` pairwise disjoint windows by summed squared deviation.

    Returns ``(start, deviation)`` pairs in descending order of deviation;
    fewer than ``k`` when the series cannot hold more disjoint windows.
    """
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape or pred.ndim != 1:
        raise DomainError("pred and truth must be aligned 1-D series")
    if horizon < 1 or horizon > len(pred):
        raise DomainError(f"horizon {horizon} does not fit a series of length {len(pred)}")
    sq = np.concatenate([[0.0], np.cumsum((pred - truth) ** 2)])
    scores = sq[horizon:] - sq[:-horizon]
    picks: list[tuple[int, float]] = []
    for start in np.argsort(-scores, kind="stable"):
        if len(picks) == k:
            break
        if all(abs(int(start) - s) >= horizon for s, _ in picks):
            picks.append((int(start), float(scores[start])))
    return picks
