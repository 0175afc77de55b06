"""Encoder -> N graph layers -> decoder networks (ResGCN, GCNII, ResGAT)."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from enum import Enum

import numpy as np

from . import diffcore as dc
from .adjacency import (
    AdjacencyType,
    EdgeOrientation,
    attention_inputs,
    build_adjacency,
    normalize_augmented,
    normalize_learned,
    oriented_edges,
)
from .exceptions import ConfigError, DomainError
from .river_graph import RiverGraph


class Architecture(str, Enum):
    RESGCN = "ResGCN"
    GCNII = "GCNII"
    RESGAT = "ResGAT"


@dataclass(frozen=True)
class ModelConfig:
    arch: Architecture = Architecture.GCNII
    N: int = 19
    d: int = 128
    W: int = 24
    C: int = 5
    adjacency: AdjacencyType = AdjacencyType.BINARY
    orientation: EdgeOrientation = EdgeOrientation.BIDIRECTED
    gcnii_alpha: float = 0.1
    gcnii_lambda: float = 0.5
    gat_heads: int = 1
    gat_leaky_slope: float = 0.2

    def __post_init__(self):
        object.__setattr__(self, "arch", Architecture(self.arch))
        object.__setattr__(self, "adjacency", AdjacencyType(self.adjacency))
        object.__setattr__(self, "orientation", EdgeOrientation(self.orientation))
        if self.N < 1 or self.d < 1 or self.W < 1 or self.C < 1 or self.gat_heads < 1:
            raise ConfigError("N, d, W, C and gat_heads must be positive")
        if not 0 < self.gcnii_alpha < 1:
            raise ConfigError("gcnii_alpha must lie in (0, 1)")
        if self.adjacency is AdjacencyType.ALL_PHYSICAL and self.arch is not Architecture.RESGAT:
            raise ConfigError("all_physical adjacency is only available for ResGAT")
        if self.adjacency is AdjacencyType.LEARNED and self.arch is Architecture.RESGAT:
            raise ConfigError("ResGAT learns attention weights itself; use all_physical instead of learned")

    def to_dict(self) -> dict:
        return {k: (v.value if isinstance(v, Enum) else v) for k, v in asdict(self).items()}


def gcnii_beta(layer: int, lam: float) -> float:
    """Identity-mapping strength for 1-based ``layer``."""
    return math.log(lam / layer + 1.0)


# --- layers ------------------------------------------------------------------


def res_gcn_layer(H, A_hat, theta) -> dc.Tensor:
    """``H + ReLU(A_hat^T H Theta)``."""
    return dc.add(H, dc.relu(dc.matmul(dc.matmul(dc.transpose(A_hat), H), theta)))


def gcnii_layer(H, H0, A_hat, theta, alpha: float, beta: float) -> dc.Tensor:
    """``ReLU(((1-alpha) A_hat^T H + alpha H0) ((1-beta) I + beta Theta))``."""
    mixed = dc.add(dc.scale(dc.matmul(dc.transpose(A_hat), H), 1.0 - alpha), dc.scale(H0, alpha))
    return dc.relu(dc.add(dc.scale(mixed, 1.0 - beta), dc.scale(dc.matmul(mixed, theta), beta)))


def attention_weights(Z, mask, features, att_src, att_dst, att_edge, slope: float) -> dc.Tensor:
    """Attention ``att[b, i, j]`` of target j on source i, normalised over sources.

    Logits are ``LeakyReLU(a . [Z_i || Z_j || e_ij])`` with ``a`` split into
    its source, target and edge-feature parts.
    """
    src = dc.matmul(Z, att_src)  # (B, n, 1)
    dst = dc.transpose(dc.matmul(Z, att_dst))  # (B, 1, n)
    logits = dc.add(src, dst)
    k = features.shape[-1]
    if k:
        n = features.shape[0]
        edge = dc.reshape(dc.matmul(dc.reshape(dc.Tensor(features), (n * n, k)), att_edge), (n, n))
        logits = dc.add(logits, edge)
    return dc.softmax_over_mask(dc.leaky_relu(logits, slope), mask, axis=-2)


def res_gat_layer(H, mask, features, heads, slope: float) -> dc.Tensor:
    """``H + ReLU(mean_h att_h^T (H Theta_h))``; ``heads`` holds
    ``(theta, att_src, att_dst, att_edge)`` per head."""
    msgs = None
    for theta, a_src, a_dst, a_edge in heads:
        Z = dc.matmul(H, theta)
        att = attention_weights(Z, mask, features, a_src, a_dst, a_edge, slope)
        msg = dc.matmul(dc.transpose(att), Z)
        msgs = msg if msgs is None else dc.add(msgs, msg)
    if len(heads) > 1:
        msgs = dc.scale(msgs, 1.0 / len(heads))
    return dc.add(H, dc.relu(msgs))


# --- model -------------------------------------------------------------------


class Model:
    """Parameter store plus the graph-derived constants a forward pass needs."""

    def __init__(self, config: ModelConfig, graph: RiverGraph, params: dict[str, dc.Tensor]):
        self.config = config
        self.graph = graph
        self.params = params
        self.edges = oriented_edges(graph, config.orientation)
        self._static_hat = None
        self._attention = None
        if config.arch is Architecture.RESGAT:
            self._attention = attention_inputs(graph, config.adjacency, config.orientation)
        elif config.adjacency is not AdjacencyType.LEARNED:
            A = build_adjacency(graph, config.adjacency, config.orientation).matrix
            self._static_hat = dc.Tensor(normalize_augmented(A, config.adjacency, config.orientation).matrix)

    @property
    def learned_weights(self) -> dc.Tensor | None:
        return self.params.get("edge_weights")

    def parameters(self) -> list[dc.Tensor]:
        return list(self.params.values())

    def parameter_count(self) -> int:
        return int(sum(p.data.size for p in self.params.values()))

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: p.data.copy() for k, p in self.params.items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        if set(state) != set(self.params):
            raise DomainError("state dict keys do not match the model's parameters")
        for k, p in self.params.items():
            if state[k].shape != p.data.shape:
                raise DomainError(f"shape mismatch for {k}")
            p.data = np.array(state[k], dtype=np.float64, copy=True)

    def normalized_adjacency(self) -> dc.Tensor:
        """Current ``A_hat`` (rebuilt from the edge weights when they are learned)."""
        if self._static_hat is not None:
            return self._static_hat
        if self.config.arch is Architecture.RESGAT:
            raise DomainError("attention models have no fixed normalised adjacency")
        return normalize_learned(self.params["edge_weights"], self.edges, self.graph.n)

    def __call__(self, X) -> dc.Tensor:
        return forward(self, X)


def _layer_heads(params, layer: int, heads: int):
    p = f"layers.{layer}"
    return [
        (params[f"{p}.head{h}.weight"], params[f"{p}.head{h}.att_src"], params[f"{p}.head{h}.att_dst"],
         params[f"{p}.head{h}.att_edge"])
        for h in range(heads)
    ]


def build_model(config: ModelConfig, graph: RiverGraph, rng: np.random.Generator) -> Model:
    """Kaiming-initialised weights, zero biases; learned edge weights ~ U[0.9, 1.1]."""
    d, n_in = config.d, config.W * config.C
    params: dict[str, dc.Tensor] = {
        "encoder.weight": dc.kaiming_init((n_in, d), n_in, rng),
        "encoder.bias": dc.Tensor(np.zeros(d), requires_grad=True),
    }
    k = 0
    if config.arch is Architecture.RESGAT:
        k = attention_inputs(graph, config.adjacency, config.orientation).features.shape[-1]
    for layer in range(1, config.N + 1):
        if config.arch is Architecture.RESGAT:
            for h in range(config.gat_heads):
                p = f"layers.{layer}.head{h}"
                params[f"{p}.weight"] = dc.kaiming_init((d, d), d, rng)
                params[f"{p}.att_src"] = dc.kaiming_init((d, 1), 2 * d + k, rng)
                params[f"{p}.att_dst"] = dc.kaiming_init((d, 1), 2 * d + k, rng)
                params[f"{p}.att_edge"] = dc.kaiming_init((k, 1), 2 * d + k, rng)
        else:
            params[f"layers.{layer}.weight"] = dc.kaiming_init((d, d), d, rng)
    params["decoder.weight"] = dc.kaiming_init((d, 1), d, rng)
    params["decoder.bias"] = dc.Tensor(np.zeros(1), requires_grad=True)
    if config.adjacency is AdjacencyType.LEARNED:
        m = len(oriented_edges(graph, config.orientation))
        params["edge_weights"] = dc.Tensor(rng.uniform(0.9, 1.1, size=m), requires_grad=True)
    return Model(config, graph, params)


def expected_parameter_count(config: ModelConfig, n_edges: int = 0, k: int = 0) -> int:
    """Closed-form parameter count; ``n_edges`` counts oriented edges, ``k`` edge-feature channels."""
    d = config.d
    if config.arch is Architecture.RESGAT:
        per_layer = config.gat_heads * (d * d + 2 * d + k)
    else:
        per_layer = d * d
    total = (config.W * config.C + 1) * d + config.N * per_layer + (d + 1)
    if config.adjacency is AdjacencyType.LEARNED:
        total += n_edges
    return total


def forward(model: Model, X) -> dc.Tensor:
    """Predictions of shape (B, n) for windows ``X`` of shape (B, n, W, C) or (n, W, C)."""
    cfg = model.config
    data = X.data if isinstance(X, dc.Tensor) else np.asarray(X, dtype=np.float64)
    squeeze = data.ndim == 3
    if squeeze:
        data = data[None]
    B, n = data.shape[:2]
    if n != model.graph.n or data.shape[2:] != (cfg.W, cfg.C):
        raise DomainError(f"expected windows of shape (B, {model.graph.n}, {cfg.W}, {cfg.C}), got {data.shape}")
    p = model.params
    x = dc.Tensor(data.reshape(B, n, cfg.W * cfg.C))
    H = dc.add(dc.matmul(x, p["encoder.weight"]), p["encoder.bias"])
    H0 = H
    if cfg.arch is Architecture.RESGAT:
        att_in = model._attention
        for layer in range(1, cfg.N + 1):
            heads = _layer_heads(p, layer, cfg.gat_heads)
            H = dc.relu(res_gat_layer(H, att_in.mask, att_in.features, heads, cfg.gat_leaky_slope))
    else:
        A_hat = model.normalized_adjacency()
        for layer in range(1, cfg.N + 1):
            theta = p[f"layers.{layer}.weight"]
            if cfg.arch is Architecture.RESGCN:
                H = dc.relu(res_gcn_layer(H, A_hat, theta))
            else:
                beta = gcnii_beta(layer, cfg.gcnii_lambda)
                H = dc.relu(gcnii_layer(H, H0, A_hat, theta, cfg.gcnii_alpha, beta))
    out = dc.add(dc.matmul(H, p["decoder.weight"]), p["decoder.bias"])
    out = dc.reshape(out, (B, n))
    return dc.reshape(out, (n,)) if squeeze else out


def clip_learned_weights(model: Model) -> Model:
    """Set negative learned edge weights to zero (no-op without learned weights)."""
    w = model.learned_weights
    if w is not None:
        w.data = np.maximum(w.data, 0.0)
    return model
