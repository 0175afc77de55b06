"""Node signals: gap filling, standard-score normalisation, sample extraction,
train/test splits and the relevancy score."""

from __future__ import annotations

import csv
import logging
import math
import struct
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .exceptions import DataError, DomainError

logger = logging.getLogger(__name__)

CHANNELS = ("discharge", "precipitation", "topsoil_moisture", "air_temperature", "surface_pressure")
GAUGE_HEADER = [
    "timestamp",
    "discharge_m3s",
    "precip_mm",
    "topsoil_moisture",
    "air_temp_c",
    "surface_pressure_hpa",
]
HOUR = np.timedelta64(1, "h")


@dataclass(frozen=True)
class NodeSignal:
    """Hourly multichannel measurements, ``values[gauge, time, channel]``.

    Channel 0 is discharge. Missing values are NaN.
    """

    values: np.ndarray
    timestamps: np.ndarray  # datetime64[h]
    gauge_ids: tuple[int, ...]

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        ts = np.asarray(self.timestamps).astype("datetime64[h]")
        if values.ndim != 3:
            raise DomainError("signal values must have shape (gauges, time, channels)")
        if values.shape[0] != len(self.gauge_ids) or values.shape[1] != len(ts):
            raise DomainError("signal shape does not match gauge ids / timestamps")
        if len(ts) > 1 and not np.all(np.diff(ts) == HOUR):
            raise DomainError("timestamps must be strictly increasing with hourly spacing")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "gauge_ids", tuple(int(g) for g in self.gauge_ids))

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def T(self) -> int:
        return self.values.shape[1]

    @property
    def discharge(self) -> np.ndarray:
        return self.values[:, :, 0]

    def select(self, gauge_ids: Iterable[int]) -> "NodeSignal":
        pos = {g: i for i, g in enumerate(self.gauge_ids)}
        ids = sorted(gauge_ids)
        return NodeSignal(self.values[[pos[g] for g in ids]], self.timestamps, tuple(ids))


# --- gap filling -------------------------------------------------------------


def _missing_runs(x: np.ndarray) -> list[tuple[int, int]]:
    """(start, length) of every run of NaN in a 1-D array."""
    miss = np.isnan(x)
    if not miss.any():
        return []
    edges = np.diff(np.concatenate([[0], miss.astype(np.int8), [0]]))
    starts = np.flatnonzero(edges == 1)
    stops = np.flatnonzero(edges == -1)
    return [(int(a), int(b - a)) for a, b in zip(starts, stops)]


def interpolate_gaps(signal: NodeSignal, max_gap: int = 6) -> tuple[NodeSignal, dict[int, list[tuple[int, int]]]]:
    """Fill discharge gaps of at most ``max_gap`` hours linearly.

    Longer gaps, and gaps touching either end of the series, stay missing and
    are reported per gauge as ``(start_index, length)`` pairs.
    """
    if np.isnan(signal.values[:, :, 1:]).any():
        raise DomainError("only the discharge channel may contain missing values")
    values = signal.values.copy()
    report: dict[int, list[tuple[int, int]]] = {}
    T = signal.T
    for g, gid in enumerate(signal.gauge_ids):
        q = values[g, :, 0]
        long = []
        for start, length in _missing_runs(q):
            if length > max_gap or start == 0 or start + length == T:
                long.append((start, length))
                continue
            left, right = q[start - 1], q[start + length]
            frac = np.arange(1, length + 1) / (length + 1)
            q[start : start + length] = left + frac * (right - left)
        if long:
            report[gid] = long
    return NodeSignal(values, signal.timestamps, signal.gauge_ids), report


# --- normalisation -----------------------------------------------------------


@dataclass(frozen=True)
class NormalizationParams:
    mu: np.ndarray  # (n, C)
    sigma: np.ndarray  # (n, C), sample standard deviation

    @property
    def discharge_mu(self) -> np.ndarray:
        return self.mu[:, 0]

    @property
    def discharge_sigma(self) -> np.ndarray:
        return self.sigma[:, 0]


def zscore_normalize(
    signal: NodeSignal, hours: np.ndarray | None = None
) -> tuple[NodeSignal, NormalizationParams]:
    """Per gauge and channel standard score.

    Statistics come from all hours, or only from the boolean ``hours`` mask
    when given (train-only normalisation).
    """
    values = signal.values
    if np.isnan(values).any():
        raise DomainError("cannot normalise a signal with missing values")
    ref = values if hours is None else values[:, np.asarray(hours, dtype=bool), :]
    if ref.shape[1] < 2:
        raise DomainError("normalisation needs at least two time steps")
    mu = ref.mean(axis=1)
    sigma = ref.std(axis=1, ddof=1)
    bad = np.argwhere(~(sigma > 0))
    if len(bad):
        g, c = bad[0]
        raise DomainError(f"gauge {signal.gauge_ids[g]} has a constant {CHANNELS[c]} channel")
    normed = (values - mu[:, None, :]) / sigma[:, None, :]
    return NodeSignal(normed, signal.timestamps, signal.gauge_ids), NormalizationParams(mu, sigma)


def unnormalize(v: np.ndarray, params: NormalizationParams) -> np.ndarray:
    """Map normalised discharge (last axis = gauges) back to physical units."""
    return params.discharge_sigma * np.asarray(v) + params.discharge_mu


def denormalize_signal(signal: NodeSignal, params: NormalizationParams) -> NodeSignal:
    return NodeSignal(
        signal.values * params.sigma[:, None, :] + params.mu[:, None, :], signal.timestamps, signal.gauge_ids
    )


# --- samples -----------------------------------------------------------------


@dataclass(frozen=True)
class SampleSet:
    """Windowed samples over a normalised signal.

    Sample ``k`` ends at hour ``t[k]`` (0-based): its window covers hours
    ``t-W+1 .. t`` and its target is discharge at hour ``t+L``. Windows are
    sliced from the signal on demand.
    """

    signal: NodeSignal
    W: int
    L: int
    t: np.ndarray

    def __len__(self) -> int:
        return len(self.t)

    @property
    def target_hours(self) -> np.ndarray:
        return self.t + self.L

    def windows(self, idx=None) -> np.ndarray:
        """Feature windows, shape (B, n, W, C)."""
        t = self.t if idx is None else self.t[idx]
        offsets = np.arange(-self.W + 1, 1)
        return np.transpose(self.signal.values[:, t[:, None] + offsets, :], (1, 0, 2, 3))

    def targets(self, idx=None) -> np.ndarray:
        """Normalised discharge targets, shape (B, n)."""
        t = self.t if idx is None else self.t[idx]
        return self.signal.values[:, t + self.L, 0].T

    def subset(self, idx) -> "SampleSet":
        return SampleSet(self.signal, self.W, self.L, self.t[idx])


class ArraySamples:
    """Materialised windows ``X`` (S, n, W, C) and targets ``y`` (S, n) with the
    :class:`SampleSet` access interface."""

    def __init__(self, X: np.ndarray, y: np.ndarray):
        self.X = np.asarray(X, dtype=np.float64)
        self.y = np.asarray(y, dtype=np.float64)
        if self.X.ndim != 4 or self.y.shape != self.X.shape[:2]:
            raise DomainError(f"expected X (S, n, W, C) and y (S, n); got {self.X.shape} and {self.y.shape}")

    def __len__(self) -> int:
        return len(self.X)

    def windows(self, idx=None) -> np.ndarray:
        return self.X if idx is None else self.X[idx]

    def targets(self, idx=None) -> np.ndarray:
        return self.y if idx is None else self.y[idx]

    def subset(self, idx) -> "ArraySamples":
        return ArraySamples(self.X[idx], self.y[idx])


def sample_count(T: int, W: int, L: int) -> int:
    return T - L - W + 1


def extract_samples(signal: NodeSignal, W: int, L: int) -> SampleSet:
    if W < 1 or L < 0:
        raise DomainError("window size must be positive and lead time non-negative")
    if signal.T < W + L:
        raise DomainError(f"series of {signal.T} h is too short for W={W}, L={L}")
    return SampleSet(signal, W, L, np.arange(W - 1, signal.T - L))


# --- splits ------------------------------------------------------------------


@dataclass(frozen=True)
class SplitSpec:
    name: str
    train_years: frozenset[int]
    test_years: frozenset[int]

    def __post_init__(self):
        object.__setattr__(self, "train_years", frozenset(self.train_years))
        object.__setattr__(self, "test_years", frozenset(self.test_years))
        if self.train_years & self.test_years:
            raise DomainError(f"split {self.name}: train and test years overlap")
        if self.train_years and self.test_years and max(self.train_years) >= min(self.test_years):
            raise DomainError(f"split {self.name}: every train year must precede every test year")


TEST_YEARS = frozenset({2016, 2017})
STANDARD_SPLITS = (
    SplitSpec("even", frozenset(range(2000, 2016, 2)), TEST_YEARS),
    SplitSpec("odd", frozenset(range(2001, 2016, 2)), TEST_YEARS),
    SplitSpec("contiguous", frozenset(range(2008, 2016)), TEST_YEARS),
)
SPLITS_BY_NAME = {s.name: s for s in STANDARD_SPLITS}


def period_labels(timestamps: np.ndarray, mode: str = "calendar", n_blocks: int = 18, first_year: int = 2000):
    """Year label of every hour.

    ``calendar`` uses the timestamp's year. ``blocks`` cuts the series into
    ``n_blocks`` equal consecutive blocks labelled ``first_year, first_year+1, ...``
    so that the standard splits also apply to short series.
    """
    ts = np.asarray(timestamps).astype("datetime64[h]")
    if mode == "calendar":
        return ts.astype("datetime64[Y]").astype(np.int64) + 1970
    if mode == "blocks":
        T = len(ts)
        return first_year + (np.arange(T) * n_blocks) // T
    raise DomainError(f"unknown period mode {mode!r}")


def make_splits(
    samples: SampleSet, spec: SplitSpec, years: np.ndarray | None = None
) -> tuple[SampleSet, SampleSet]:
    """Partition samples by the year of their target hour.

    A sample whose window or target touches an hour of the opposite partition
    is dropped to avoid leakage. ``years`` labels every hour of the signal
    (default: calendar years).
    """
    if years is None:
        years = period_labels(samples.signal.timestamps)
    years = np.asarray(years)
    in_train = np.isin(years, list(spec.train_years))
    in_test = np.isin(years, list(spec.test_years))
    # prefix sums answer "does hour range [a, b] touch a set" in O(1)
    c_train = np.concatenate([[0], np.cumsum(in_train)])
    c_test = np.concatenate([[0], np.cumsum(in_test)])
    start = samples.t - samples.W + 1
    stop = samples.target_hours + 1
    target = samples.target_hours

    train_mask = in_train[target] & (c_test[stop] - c_test[start] == 0)
    test_mask = in_test[target] & (c_train[stop] - c_train[start] == 0)
    dropped = len(samples) - int(train_mask.sum()) - int(test_mask.sum())
    if dropped:
        logger.info("split %s: %d samples outside train/test years or straddling them", spec.name, dropped)
    if not train_mask.any() or not test_mask.any():
        warnings.warn(f"split {spec.name}: empty train or test partition", RuntimeWarning, stacklevel=2)
    return samples.subset(np.flatnonzero(train_mask)), samples.subset(np.flatnonzero(test_mask))


# --- relevancy ---------------------------------------------------------------


def relevancy_score(X: np.ndarray, params: NormalizationParams) -> np.ndarray:
    """Per-gauge relevancy of normalised discharge windows.

    ``X`` has shape (..., n, W). Each row is unnormalised, differentiated with
    second-order central differences (second-order one-sided at the ends) and
    integrated with the trapezoidal rule; the score is
    ``mean(grad / mu)**2 * (integral / mu)``, clamped at zero.
    """
    X = np.asarray(X, dtype=np.float64)
    W = X.shape[-1]
    if W < 3:
        raise DomainError("relevancy score needs windows of at least 3 hours")
    mu = params.discharge_mu
    if not np.all(mu > 0):
        raise DomainError("relevancy score needs a positive mean discharge at every gauge")
    raw = X * params.discharge_sigma[:, None] + mu[:, None]
    grad = np.gradient(raw, axis=-1, edge_order=2)
    integral = np.trapezoid(raw, axis=-1)
    rate = grad.mean(axis=-1) / mu
    return np.maximum(rate * rate * (integral / mu), 0.0)


# --- files -------------------------------------------------------------------


def _fmt(x: float) -> str:
    return "" if math.isnan(x) else repr(float(x))


def write_gauge_csv(path: str | Path, timestamps: np.ndarray, values: np.ndarray) -> None:
    ts = np.asarray(timestamps).astype("datetime64[h]")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(GAUGE_HEADER)
        for stamp, row in zip(ts, values):
            w.writerow([f"{stamp}:00"] + [_fmt(v) for v in row])


def read_gauge_csv(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if header[: len(GAUGE_HEADER)] != GAUGE_HEADER:
                raise DataError(f"{path}: header must be {','.join(GAUGE_HEADER)}")
            stamps, rows = [], []
            for rec in reader:
                stamps.append(rec[0])
                rows.append([float(v) if v.strip() else np.nan for v in rec[1 : len(GAUGE_HEADER)]])
    except (OSError, StopIteration, ValueError) as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    return np.array(stamps, dtype="datetime64[h]"), np.array(rows, dtype=np.float64).reshape(-1, len(CHANNELS))


def write_signals(directory: str | Path, signal: NodeSignal) -> None:
    directory = Path(directory)
    for g, gid in enumerate(signal.gauge_ids):
        write_gauge_csv(directory / f"gauge_{gid}.csv", signal.timestamps, signal.values[g])


def read_signals(
    directory: str | Path, gauge_ids: Sequence[int], start=None, stop=None
) -> NodeSignal:
    """Load gauge CSVs onto a common hourly axis.

    The axis spans ``start..stop`` (inclusive); by default the union of all
    files' ranges. Hours a file does not cover become missing discharge.
    Meteorology must be complete over the axis.
    """
    directory = Path(directory)
    loaded = {}
    for gid in gauge_ids:
        path = directory / f"gauge_{gid}.csv"
        if not path.exists():
            raise DataError(f"missing signal file {path}")
        loaded[gid] = read_gauge_csv(path)
    if start is None:
        start = min(ts[0] for ts, _ in loaded.values())
    if stop is None:
        stop = max(ts[-1] for ts, _ in loaded.values())
    start, stop = np.datetime64(start, "h"), np.datetime64(stop, "h")
    axis = np.arange(start, stop + HOUR, HOUR)
    ids = sorted(gauge_ids)
    values = np.full((len(ids), len(axis), len(CHANNELS)), np.nan)
    for g, gid in enumerate(ids):
        ts, vals = loaded[gid]
        pos = (ts - start).astype(np.int64)
        ok = (pos >= 0) & (pos < len(axis))
        values[g, pos[ok]] = vals[ok]
        if np.isnan(values[g, :, 1:]).any():
            raise DataError(f"gauge {gid}: meteorological channels incomplete over the common time range")
    return NodeSignal(values, axis, tuple(ids))


CACHE_MAGIC = b"RGSG"
CACHE_VERSION = 1


def save_signal_cache(path: str | Path, signal: NodeSignal, params: NormalizationParams) -> None:
    """Binary cache: magic, u8 version, u64 n/T/C, i64 first hour (since epoch),
    i64 gauge ids, then f64 values (gauge, time, channel), mu and sigma; all
    little-endian, row-major."""
    n, T, C = signal.values.shape
    head = CACHE_MAGIC + struct.pack("<B3Qq", CACHE_VERSION, n, T, C, int(signal.timestamps[0].astype(np.int64)))
    body = [
        np.asarray(signal.gauge_ids, dtype="<i8").tobytes(),
        np.ascontiguousarray(signal.values, dtype="<f8").tobytes(),
        np.ascontiguousarray(params.mu, dtype="<f8").tobytes(),
        np.ascontiguousarray(params.sigma, dtype="<f8").tobytes(),
    ]
    Path(path).write_bytes(head + b"".join(body))


def load_signal_cache(path: str | Path) -> tuple[NodeSignal, NormalizationParams]:
    try:
        buf = Path(path).read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read cache {path}: {exc}") from exc
    if buf[:4] != CACHE_MAGIC:
        raise DataError(f"{path} is not a signal cache")
    version, n, T, C, first = struct.unpack_from("<B3Qq", buf, 4)
    if version != CACHE_VERSION:
        raise DataError(f"unsupported cache version {version}")
    pos = 4 + struct.calcsize("<B3Qq")
    ids = np.frombuffer(buf, "<i8", n, pos)
    pos += 8 * n
    values = np.frombuffer(buf, "<f8", n * T * C, pos).reshape(n, T, C).astype(np.float64)
    pos += 8 * n * T * C
    mu = np.frombuffer(buf, "<f8", n * C, pos).reshape(n, C).astype(np.float64)
    pos += 8 * n * C
    sigma = np.frombuffer(buf, "<f8", n * C, pos).reshape(n, C).astype(np.float64)
    ts = np.datetime64(int(first), "h") + np.arange(T) * HOUR
    return NodeSignal(values, ts, tuple(int(i) for i in ids)), NormalizationParams(mu, sigma)
