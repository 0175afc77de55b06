"""Adjacency matrices for every (type, orientation) pair and their normalised
augmented form.

Convention: ``A[i, j] != 0`` for an oriented edge ``i -> j``. Layers aggregate
with ``A_hat.T @ H`` so node ``j`` collects messages from its in-neighbours.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from . import diffcore as dc
from .exceptions import ConfigError, DomainError
from .river_graph import EdgeAttrs, RiverGraph


class AdjacencyType(str, Enum):
    ISOLATED = "isolated"
    BINARY = "binary"
    STREAM_LENGTH = "stream_length"
    ELEVATION_DIFFERENCE = "elevation_difference"
    AVERAGE_SLOPE = "average_slope"
    LEARNED = "learned"
    ALL_PHYSICAL = "all_physical"

    @property
    def is_physical(self) -> bool:
        return self in PHYSICAL_TYPES


class EdgeOrientation(str, Enum):
    DOWNSTREAM = "downstream"
    UPSTREAM = "upstream"
    BIDIRECTED = "bidirected"


PHYSICAL_TYPES = (
    AdjacencyType.STREAM_LENGTH,
    AdjacencyType.ELEVATION_DIFFERENCE,
    AdjacencyType.AVERAGE_SLOPE,
)

_ATTR = {
    AdjacencyType.STREAM_LENGTH: "stream_length",
    AdjacencyType.ELEVATION_DIFFERENCE: "elevation_difference",
    AdjacencyType.AVERAGE_SLOPE: "average_slope",
}


def physical_weight(attrs: EdgeAttrs, kind: AdjacencyType) -> float:
    return float(getattr(attrs, _ATTR[AdjacencyType(kind)]))


@dataclass(frozen=True)
class OrientedEdges:
    """Oriented edge list in node-index space plus the physical attributes each edge carries."""

    rows: np.ndarray
    cols: np.ndarray
    attrs: tuple[EdgeAttrs, ...]
    orientation: EdgeOrientation

    def __len__(self) -> int:
        return len(self.attrs)

    def pairs(self) -> list[tuple[int, int]]:
        return list(zip(self.rows.tolist(), self.cols.tolist()))

    def physical(self, kind: AdjacencyType) -> np.ndarray:
        return np.array([physical_weight(a, kind) for a in self.attrs])


def oriented_edges(graph: RiverGraph, orientation: EdgeOrientation) -> OrientedEdges:
    """Downstream edges sorted by (src, dst); upstream reverses that list;
    bidirected is downstream followed by upstream."""
    orientation = EdgeOrientation(orientation)
    down = graph.sorted_edges()
    src = np.array([graph.index[u] for u, _ in down], dtype=np.intp)
    dst = np.array([graph.index[v] for _, v in down], dtype=np.intp)
    attrs = tuple(graph.edges[e] for e in down)
    if orientation is EdgeOrientation.DOWNSTREAM:
        return OrientedEdges(src, dst, attrs, orientation)
    if orientation is EdgeOrientation.UPSTREAM:
        return OrientedEdges(dst, src, attrs, orientation)
    return OrientedEdges(np.concatenate([src, dst]), np.concatenate([dst, src]), attrs + attrs, orientation)


@dataclass(frozen=True)
class Adjacency:
    matrix: np.ndarray
    edges: OrientedEdges
    type: AdjacencyType
    features: np.ndarray | None = None  # (m, 3) physical table for ALL_PHYSICAL


def build_adjacency(
    graph: RiverGraph,
    type: AdjacencyType,
    orientation: EdgeOrientation,
    learned: np.ndarray | None = None,
) -> Adjacency:
    type = AdjacencyType(type)
    edges = oriented_edges(graph, orientation)
    n = graph.n
    if type is AdjacencyType.LEARNED:
        if learned is None:
            raise DomainError("learned adjacency needs a weight vector")
        learned = np.asarray(learned, dtype=np.float64)
        if learned.shape != (len(edges),):
            raise DomainError(f"learned weights must have length {len(edges)}, got shape {learned.shape}")
    elif learned is not None:
        raise DomainError(f"weight vector given for {type.value} adjacency")

    A = np.zeros((n, n))
    features = None
    if type is AdjacencyType.ISOLATED:
        pass
    elif type is AdjacencyType.BINARY:
        A[edges.rows, edges.cols] = 1.0
    elif type is AdjacencyType.LEARNED:
        A[edges.rows, edges.cols] = learned
    elif type is AdjacencyType.ALL_PHYSICAL:
        A[edges.rows, edges.cols] = 1.0
        features = np.stack([edges.physical(k) for k in PHYSICAL_TYPES], axis=1).reshape(len(edges), 3)
    else:
        A[edges.rows, edges.cols] = edges.physical(type)
    return Adjacency(A, edges, type, features)


@dataclass(frozen=True)
class NormalizedAdjacency:
    matrix: np.ndarray
    type: AdjacencyType
    orientation: EdgeOrientation | None
    self_loop_weights: np.ndarray


def self_loop_weights(A: np.ndarray, type: AdjacencyType) -> np.ndarray:
    """Mean of the non-zero incoming weights per node; 1 without any (or when isolated)."""
    n = A.shape[0]
    if AdjacencyType(type) is AdjacencyType.ISOLATED:
        return np.ones(n)
    count = (A != 0).sum(axis=0)
    total = A.sum(axis=0)
    return np.where(count > 0, total / np.maximum(count, 1), 1.0)


def normalize_augmented(
    A: np.ndarray, type: AdjacencyType, orientation: EdgeOrientation | None = None
) -> NormalizedAdjacency:
    """``(D_in + diag(xi))^-1/2 (A + diag(xi)) (D_in + diag(xi))^-1/2``."""
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DomainError("adjacency must be square")
    if not np.all(np.isfinite(A)) or (A < 0).any():
        raise DomainError("adjacency entries must be finite and non-negative")
    type = AdjacencyType(type)
    xi = self_loop_weights(A, type)
    if type is AdjacencyType.ISOLATED:
        A = np.zeros_like(A)
    s = 1.0 / np.sqrt(A.sum(axis=0) + xi)
    hat = s[:, None] * (A + np.diag(xi)) * s[None, :]
    return NormalizedAdjacency(hat, type, orientation, xi)


def normalize_learned(omega: dc.Tensor, edges: OrientedEdges, n: int) -> dc.Tensor:
    """Differentiable ``A_hat`` for learned weights ``omega``.

    Matches :func:`normalize_augmented`; the count of non-zero incoming
    weights is treated as a constant.
    """
    A = dc.scatter(omega, edges.rows, edges.cols, (n, n))
    count = np.zeros(n)
    np.add.at(count, edges.cols, (omega.data != 0).astype(np.float64))
    inv_count = np.where(count > 0, 1.0 / np.maximum(count, 1.0), 0.0)
    colsum = dc.sum(A, axis=0)
    xi = dc.add(dc.hadamard(colsum, inv_count), (count == 0).astype(np.float64))
    s = dc.power(dc.add(colsum, xi), -0.5)
    aug = dc.add(A, dc.diag(xi))
    return dc.hadamard(dc.hadamard(aug, dc.reshape(s, (n, 1))), dc.reshape(s, (1, n)))


@dataclass(frozen=True)
class AttentionInputs:
    mask: np.ndarray  # (n, n) bool, mask[i, j]: i sends to j; includes self-loops
    features: np.ndarray  # (n, n, k)


def attention_inputs(graph: RiverGraph, type: AdjacencyType, orientation: EdgeOrientation) -> AttentionInputs:
    """Neighbour mask and edge-feature tensor for attention layers.

    Physical features are divided by their maximum over edges so every channel
    lies in [0, 1]; self-loops carry the mean of the incoming features (1 for
    nodes without in-edges).
    """
    type = AdjacencyType(type)
    if type is AdjacencyType.LEARNED:
        raise ConfigError("attention layers learn their own edge weighting; use all_physical instead of learned")
    n = graph.n
    edges = oriented_edges(graph, orientation)
    mask = np.eye(n, dtype=bool)
    if type is AdjacencyType.ISOLATED:
        return AttentionInputs(mask, np.zeros((n, n, 0)))
    mask[edges.rows, edges.cols] = True
    if type is AdjacencyType.BINARY:
        return AttentionInputs(mask, np.zeros((n, n, 0)))
    kinds = PHYSICAL_TYPES if type is AdjacencyType.ALL_PHYSICAL else (type,)
    feats = np.zeros((n, n, len(kinds)))
    for c, kind in enumerate(kinds):
        w = edges.physical(kind)
        top = w.max() if len(w) and w.max() > 0 else 1.0
        feats[edges.rows, edges.cols, c] = w / top
        A = np.zeros((n, n))
        A[edges.rows, edges.cols] = w / top
        loops = self_loop_weights(A, AdjacencyType.BINARY)
        feats[np.arange(n), np.arange(n), c] = loops
    return AttentionInputs(mask, feats)


def dump_adjacency(matrix: np.ndarray, path: str | Path) -> None:
    """Row-major CSV with 17 significant digits."""
    np.savetxt(path, np.asarray(matrix), delimiter=",", fmt="%.17g")
