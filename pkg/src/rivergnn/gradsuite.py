"""Finite-difference checks for every differentiable primitive and for the
full training loss of each architecture."""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import diffcore as dc
from ._rng import substream
from .adjacency import AdjacencyType
from .models import Architecture, ModelConfig, build_model, forward
from .river_graph import EdgeAttrs, RiverGraph
from .training import loss_from_scores

PRIMITIVE_TOL = 1e-7
MODEL_TOL = 1e-4


@dataclass(frozen=True)
class CheckResult:
    name: str
    error: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.error < self.tol


def _away_from_zero(rng, shape, margin=0.05):
    x = rng.standard_normal(shape)
    return np.where(np.abs(x) < margin, np.sign(x + 1e-300) * margin + x, x)


def _contract(t: dc.Tensor, w: np.ndarray) -> dc.Tensor:
    """Scalar ``sum(t * w)`` so the check sees the whole Jacobian."""
    return dc.sum(dc.hadamard(t, w))


def primitive_cases(seed: int = 0) -> dict[str, tuple[Callable[[], dc.Tensor], list[dc.Tensor]]]:
    rng = substream(seed, "gradcheck", "primitives")

    def T(*shape, positive=False):
        data = rng.uniform(0.5, 2.0, shape) if positive else _away_from_zero(rng, shape)
        return dc.Tensor(data, requires_grad=True)

    a3, b3 = T(2, 3, 4), T(2, 4, 3)
    m1, m2, v = T(3, 4), T(3, 4), T(4)
    p = T(3, 4, positive=True)
    mask = rng.uniform(size=(2, 4, 4)) < 0.6
    mask[:, 0, :] = True
    x_soft = T(2, 4, 4)
    vals = T(5)
    rows, cols = np.array([0, 1, 2, 3, 0]), np.array([1, 2, 3, 0, 0])
    c1, c2 = T(3, 2), T(3, 5)
    w = {k: rng.standard_normal(s) for k, s in {
        "mm": (2, 3, 3), "t": (2, 4, 3), "m": (3, 4), "s": (2, 4, 4), "sc": (4, 4), "cat": (3, 7),
        "r": (4, 3), "d": (4, 4), "ax": (4,),
    }.items()}

    return {
        "matmul": (lambda: _contract(dc.matmul(a3, b3), w["mm"]), [a3, b3]),
        "transpose": (lambda: _contract(dc.transpose(a3), w["t"]), [a3]),
        "add": (lambda: _contract(dc.add(m1, v), w["m"]), [m1, v]),
        "sub": (lambda: _contract(dc.sub(m1, m2), w["m"]), [m1, m2]),
        "scale": (lambda: _contract(dc.scale(m1, -1.7), w["m"]), [m1]),
        "hadamard": (lambda: _contract(dc.hadamard(m1, v), w["m"]), [m1, v]),
        "relu": (lambda: _contract(dc.relu(m1), w["m"]), [m1]),
        "leaky_relu": (lambda: _contract(dc.leaky_relu(m1, 0.2), w["m"]), [m1]),
        "softmax_over_mask": (lambda: _contract(dc.softmax_over_mask(x_soft, mask, axis=-2), w["s"]), [x_soft]),
        "sum": (lambda: _contract(dc.sum(m1, axis=0), w["ax"]), [m1]),
        "mean": (lambda: _contract(dc.mean(m1, axis=0), w["ax"]), [m1]),
        "square": (lambda: _contract(dc.square(m1), w["m"]), [m1]),
        "power": (lambda: _contract(dc.power(p, -0.5), w["m"]), [p]),
        "concat": (lambda: _contract(dc.concat([c1, c2], axis=-1), w["cat"]), [c1, c2]),
        "reshape": (lambda: _contract(dc.reshape(m1, (4, 3)), w["r"]), [m1]),
        "diag": (lambda: _contract(dc.diag(v), w["d"]), [v]),
        "scatter": (lambda: _contract(dc.scatter(vals, rows, cols, (4, 4)), w["sc"]), [vals]),
    }


def check_primitives(seed: int = 0) -> list[CheckResult]:
    return [CheckResult(name, dc.grad_check(f, params), PRIMITIVE_TOL) for name, (f, params) in primitive_cases(seed).items()]


def four_node_graph() -> RiverGraph:
    """Two sources joining at gauge 3, which drains into the sink 4."""
    attrs = {
        (1, 3): EdgeAttrs.from_length_and_drop(1200.0, 4.0),
        (2, 3): EdgeAttrs.from_length_and_drop(2500.0, 11.0),
        (3, 4): EdgeAttrs.from_length_and_drop(800.0, 1.5),
    }
    return RiverGraph(frozenset({1, 2, 3, 4}), attrs)


MODEL_CASES = (
    (Architecture.RESGCN, AdjacencyType.LEARNED),
    (Architecture.GCNII, AdjacencyType.LEARNED),
    (Architecture.RESGAT, AdjacencyType.ALL_PHYSICAL),
)


def check_models(seed: int = 0, d: int = 8, W: int = 6, N: int = 3, batch: int = 3) -> list[CheckResult]:
    """Full weighted loss w.r.t. every parameter, bidirected edges."""
    graph = four_node_graph()
    rng = substream(seed, "gradcheck", "models")
    X = rng.standard_normal((batch, graph.n, W, 5))
    y = rng.standard_normal((batch, graph.n))
    scores = rng.uniform(0.5, 2.0, (batch, graph.n))
    out = []
    for arch, adj in MODEL_CASES:
        cfg = ModelConfig(arch=arch, N=N, d=d, W=W, adjacency=adj, orientation="bidirected")
        model = build_model(cfg, graph, substream(seed, "init", arch.value))
        err = dc.grad_check(lambda: loss_from_scores(forward(model, X), y, scores), model.parameters())
        out.append(CheckResult(f"{arch.value}/{adj.value}", err, MODEL_TOL))
    return out


def run_suite(seed: int = 0) -> tuple[list[CheckResult], float]:
    t0 = time.perf_counter()
    results = check_primitives(seed) + check_models(seed)
    return results, time.perf_counter() - t0
