"""Synthetic gauge networks and hourly signals with known routing.

Each gauge has its own storm process. Rain reaches the river through a
gamma-shaped unit hydrograph on top of a seasonal base flow; a gauge's
discharge is the sum of its upstream gauges' discharge delayed by a fixed
number of hours per edge plus its own local runoff.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.signal import lfilter

from ._rng import substream
from .dataset import CHANNELS, NodeSignal, write_signals
from .exceptions import DomainError
from .river_graph import EdgeAttrs, RiverGraph, topological_order, write_graph

HOURS_PER_YEAR = 8760

PRESETS: dict[str, list[tuple[int, int]]] = {
    # depth 1, sink in-degree 1
    "fig4_i": [(531, 532)],
    # depth 2, sink in-degree 2
    "fig4_ii": [(383, 385), (384, 385), (385, 387), (386, 387)],
    # depth 1, sink in-degree 4
    "fig4_iii": [(67, 71), (68, 71), (69, 71), (70, 71)],
    # depth 4, sink in-degree 3
    "fig4_iv": [(200, 204), (201, 204), (204, 206), (206, 207), (207, 211), (208, 209), (209, 211), (210, 211)],
}


@dataclass(frozen=True)
class SynthConfig:
    n_gauges: int = 8
    max_depth: int = 3
    max_indegree: int = 3
    hours: int = 3 * HOURS_PER_YEAR
    seed: int = 0
    spike_rate: float = 25.0  # storms per 1000 h per gauge
    lag_per_edge: int = 3
    noise_std: float = 0.02  # relative, multiplicative
    local_runoff: float = 1.0  # scale of own inflow at gauges with upstream neighbours; 0 = pure routing
    start: str = "2000-01-01T00"

    def __post_init__(self):
        if min(self.n_gauges, self.max_depth, self.max_indegree, self.hours) < 1:
            raise DomainError("n_gauges, max_depth, max_indegree and hours must be positive")
        if self.spike_rate < 0 or self.noise_std < 0 or self.local_runoff < 0 or self.lag_per_edge < 0:
            raise DomainError("rates, noise, runoff scale and lag must be non-negative")


def _log_uniform(rng, lo, hi, size=None):
    return np.exp(rng.uniform(np.log(lo), np.log(hi), size))


def _attrs(rng) -> EdgeAttrs:
    return EdgeAttrs.from_length_and_drop(float(_log_uniform(rng, 2e3, 4e4)), float(_log_uniform(rng, 2.0, 150.0)))


def generate_network(config: SynthConfig | None = None, preset: str | None = None) -> RiverGraph:
    """A preset subnetwork or a random in-tree with one sink.

    Random trees respect ``max_depth`` (edges from any gauge to the sink) and
    ``max_indegree``; the sink gets id 1 and later gauges count upwards.
    """
    config = config or SynthConfig()
    rng = substream(config.seed, "network", preset or "random")
    if preset is not None:
        if preset not in PRESETS:
            raise DomainError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
        pairs = PRESETS[preset]
        nodes = {v for e in pairs for v in e}
        return RiverGraph(nodes, {e: _attrs(rng) for e in pairs})

    n, D, m = config.n_gauges, config.max_depth, config.max_indegree
    capacity = sum(m**k for k in range(D + 1)) if m > 1 else D + 1
    if n > capacity:
        raise DomainError(f"{n} gauges do not fit depth {D} with in-degree at most {m}")
    depth = {1: 0}
    indeg = {1: 0}
    edges = {}
    for child in range(2, n + 1):
        open_ = [v for v in sorted(depth) if depth[v] < D and indeg[v] < m]
        parent = open_[rng.integers(len(open_))]
        depth[child], indeg[child] = depth[parent] + 1, 0
        indeg[parent] += 1
        edges[(child, parent)] = _attrs(rng)
    return RiverGraph(set(depth), edges)


def _unit_hydrograph(shape: float = 4.0, scale: float = 6.0, length: int = 200) -> np.ndarray:
    t = np.arange(length) + 0.5
    k = t ** (shape - 1) * np.exp(-t / scale)
    return k / k.sum()


@dataclass
class SynthRun:
    """Simulation on an extended horizon; the first ``burn_in`` hours are discarded."""

    graph: RiverGraph
    values: np.ndarray  # (n, burn_in + hours, C), observed
    local: np.ndarray  # (n, burn_in + hours), noise-free local inflow per gauge
    storms: dict[int, list[tuple[int, int, float]]]  # gauge -> (start, duration, intensity), extended index
    burn_in: int
    config: SynthConfig

    def signal(self) -> NodeSignal:
        start = np.datetime64(self.config.start, "h")
        ts = start + np.arange(self.config.hours) * np.timedelta64(1, "h")
        return NodeSignal(self.values[:, self.burn_in :, :], ts, self.graph.order)


def simulate(graph: RiverGraph, config: SynthConfig) -> SynthRun:
    if graph.n == 0:
        raise DomainError("cannot simulate an empty network")
    order = graph.order
    depth_bound = len(topological_order(graph))
    kernel = _unit_hydrograph()
    burn_in = config.lag_per_edge * depth_bound + len(kernel) + 24 * 7
    T = burn_in + config.hours
    t = np.arange(T) - burn_in
    season = np.sin(2 * np.pi * t / HOURS_PER_YEAR)

    values = np.zeros((graph.n, T, len(CHANNELS)))
    local = np.zeros((graph.n, T))
    storms: dict[int, list[tuple[int, int, float]]] = {}
    for g, gid in enumerate(order):
        rng = substream(config.seed, "signals", gid)
        n_storms = rng.poisson(config.spike_rate * T / 1000.0)
        starts = np.sort(rng.integers(0, T, n_storms))
        durations = 1 + rng.geometric(1 / 8.0, n_storms)
        intensity = rng.gamma(16.0, 3.0 / 16.0, n_storms)
        precip = np.zeros(T)
        for s, dur, amp in zip(starts, durations, intensity):
            precip[s : s + dur] += amp
        storms[gid] = [(int(s), int(d), float(a)) for s, d, a in zip(starts, durations, intensity)]

        base = _log_uniform(rng, 5.0, 30.0)
        gain = _log_uniform(rng, 3.0, 10.0)
        runoff = gain * np.convolve(precip, kernel)[:T]
        own = base * (1.0 + 0.3 * season) + runoff
        local[g] = own if not graph.predecessors[gid] else config.local_runoff * own

        moisture = lfilter([1.0], [1.0, -0.98], precip)
        phase = rng.uniform(0, 24)
        ar = lfilter([0.1], [1.0, -0.995], rng.standard_normal(T))
        values[g, :, 1] = precip
        values[g, :, 2] = 0.2 + 0.6 * (1.0 - np.exp(-moisture / 10.0))
        values[g, :, 3] = 12.0 - 8.0 * np.cos(2 * np.pi * t / HOURS_PER_YEAR) + 3.0 * np.sin(2 * np.pi * (t + phase) / 24)
        values[g, :, 4] = 1013.0 - rng.uniform(0, 80) + 3.0 * ar

    true_q = np.zeros((graph.n, T))
    lag = config.lag_per_edge
    for gid in topological_order(graph):
        g = graph.index[gid]
        q = local[g].copy()
        for u in graph.predecessors[gid]:
            up = true_q[graph.index[u]]
            q[lag:] += up[: T - lag] if lag else up
            q[:lag] += up[0]
        true_q[g] = q

    noise_rng = substream(config.seed, "noise")
    noise = 1.0 + config.noise_std * noise_rng.standard_normal(true_q.shape) if config.noise_std else 1.0
    values[:, :, 0] = np.maximum(true_q * noise, 0.0)
    return SynthRun(graph, values, local, storms, burn_in, config)


def generate_signals(graph: RiverGraph, config: SynthConfig) -> NodeSignal:
    """Observed hourly signals for every gauge of ``graph``; all values are non-negative."""
    return simulate(graph, config).signal()


def write_dataset(directory: str | Path, graph: RiverGraph, signal: NodeSignal) -> None:
    """Write ``edges.csv``, ``nodes.csv`` and one ``gauge_<id>.csv`` per gauge."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_graph(graph, directory)
    write_signals(directory, signal)
