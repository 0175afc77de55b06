import math

import numpy as np
import pytest

from rivergnn import diffcore as dc
from rivergnn.adjacency import (
    AdjacencyType,
    EdgeOrientation,
    attention_inputs,
    build_adjacency,
    dump_adjacency,
    normalize_augmented,
    normalize_learned,
    oriented_edges,
)
from rivergnn.exceptions import ConfigError, DomainError
from rivergnn.river_graph import EdgeAttrs, RiverGraph
from rivergnn.synthdata import generate_network

ALL_ORIENT = list(EdgeOrientation)
NON_LEARNED = [t for t in AdjacencyType if t not in (AdjacencyType.LEARNED,)]


def edge(length, drop=1.0):
    return EdgeAttrs.from_length_and_drop(float(length), float(drop))


@pytest.fixture
def pair():
    return RiverGraph(frozenset({1, 2}), {(1, 2): edge(5.0, 1.0)})


def test_isolated_is_zero(pair):
    assert not build_adjacency(pair, "isolated", "bidirected").matrix.any()


def test_binary_upstream_reverses(pair):
    A = build_adjacency(pair, "binary", "upstream").matrix
    np.testing.assert_array_equal(A, [[0, 0], [1, 0]])


def test_stream_length_bidirected_symmetric(pair):
    A = build_adjacency(pair, "stream_length", "bidirected").matrix
    np.testing.assert_array_equal(A, [[0, 5], [5, 0]])


@pytest.mark.parametrize("kind", ["binary", "stream_length", "elevation_difference", "average_slope"])
def test_bidirected_is_sum(kind):
    g = generate_network(preset="fig4_iv")
    down = build_adjacency(g, kind, "downstream").matrix
    up = build_adjacency(g, kind, "upstream").matrix
    both = build_adjacency(g, kind, "bidirected").matrix
    np.testing.assert_array_equal(both, down + up)
    assert len(oriented_edges(g, "bidirected")) == 2 * len(oriented_edges(g, "downstream"))


def test_edge_order_deterministic():
    g = generate_network(preset="fig4_iv")
    a, b = oriented_edges(g, "bidirected"), oriented_edges(g, "bidirected")
    assert a.pairs() == b.pairs()
    down = oriented_edges(g, "downstream").pairs()
    assert down == sorted(down)


def test_learned_weight_length_checked(pair):
    with pytest.raises(DomainError):
        build_adjacency(pair, "learned", "bidirected", learned=np.ones(1))
    A = build_adjacency(pair, "learned", "bidirected", learned=np.array([0.5, 2.0])).matrix
    np.testing.assert_array_equal(A, [[0, 0.5], [2.0, 0]])


def test_normalize_isolated_identity_bitwise():
    g = generate_network(preset="fig4_iv")
    A = build_adjacency(g, "isolated", "bidirected").matrix
    hat = normalize_augmented(A, "isolated").matrix
    assert np.array_equal(hat, np.eye(g.n))
    assert normalize_augmented(np.zeros((3, 3)), "isolated").matrix.tobytes() == np.eye(3).tobytes()


def test_normalize_binary_hand_value():
    A = np.array([[0.0, 1.0], [0.0, 0.0]])
    res = normalize_augmented(A, "binary")
    np.testing.assert_allclose(res.matrix, [[1, 1 / math.sqrt(2)], [0, 0.5]], rtol=0, atol=1e-15)
    np.testing.assert_array_equal(res.self_loop_weights, [1, 1])


def test_normalize_weighted_hand_value():
    A = np.array([[0.0, 4.0], [0.0, 0.0]])
    res = normalize_augmented(A, "stream_length")
    np.testing.assert_allclose(res.matrix, [[1, 4 / math.sqrt(8)], [0, 0.5]], rtol=0, atol=1e-15)
    np.testing.assert_array_equal(res.self_loop_weights, [1, 4])


def test_normalize_rejects_negative():
    with pytest.raises(DomainError):
        normalize_augmented(np.array([[0.0, -1.0], [0.0, 0.0]]), "binary")


@pytest.mark.parametrize("orientation", ALL_ORIENT)
def test_binary_hat_in_unit_interval(orientation):
    g = generate_network(preset="fig4_iv")
    hat = normalize_augmented(build_adjacency(g, "binary", orientation).matrix, "binary").matrix
    assert (hat >= 0).all() and (hat <= 1).all()
    assert (np.diag(hat) > 0).all()


def test_column_depends_only_on_in_edges():
    rng = np.random.default_rng(0)
    A = np.triu(rng.uniform(0.5, 2.0, (6, 6)), 1) * (rng.uniform(size=(6, 6)) < 0.6)
    hat = normalize_augmented(A, "stream_length").matrix
    # column 5's in-neighbours and their own in-edges determine it; perturb edge (0, 1) when 1 is not an in-neighbour of 5
    j = 5
    in_nb = set(np.flatnonzero(A[:, j])) | {j}
    for a in range(6):
        for b in range(6):
            if b in in_nb or a == b or A[a, b] == 0:
                continue
            B = A.copy()
            B[a, b] *= 3.0
            np.testing.assert_array_equal(normalize_augmented(B, "stream_length").matrix[:, j], hat[:, j])


def test_normalize_learned_matches_static():
    g = generate_network(preset="fig4_iv")
    edges = oriented_edges(g, "bidirected")
    omega = np.random.default_rng(1).uniform(0.9, 1.1, len(edges))
    omega[3] = 0.0
    static = normalize_augmented(build_adjacency(g, "learned", "bidirected", learned=omega).matrix, "learned").matrix
    dyn = normalize_learned(dc.Tensor(omega), edges, g.n).data
    np.testing.assert_allclose(dyn, static, rtol=1e-14, atol=1e-15)


def test_normalize_learned_gradient():
    g = generate_network(preset="fig4_ii")
    edges = oriented_edges(g, "bidirected")
    omega = dc.Tensor(np.random.default_rng(2).uniform(0.9, 1.1, len(edges)), requires_grad=True)
    w = np.random.default_rng(3).standard_normal((g.n, g.n))
    err = dc.grad_check(lambda: dc.sum(dc.hadamard(normalize_learned(omega, edges, g.n), w)), omega)
    assert err < 1e-7


def test_attention_inputs():
    g = generate_network(preset="fig4_iii")
    att = attention_inputs(g, "all_physical", "downstream")
    assert att.features.shape == (g.n, g.n, 3)
    assert np.all(np.diag(att.mask))
    assert att.features.max() <= 1.0
    sink = g.index[71]
    # self-loop feature of the sink = mean of its incoming features
    inc = att.features[:, sink, :][att.mask[:, sink] & (np.arange(g.n) != sink)]
    np.testing.assert_allclose(att.features[sink, sink], inc.mean(axis=0))
    assert attention_inputs(g, "binary", "upstream").features.shape[-1] == 0
    with pytest.raises(ConfigError):
        attention_inputs(g, "learned", "upstream")


def test_dump_adjacency(tmp_path):
    m = np.array([[1.0, 1 / 3], [0.0, 0.1]])
    path = tmp_path / "a.csv"
    dump_adjacency(m, path)
    back = np.loadtxt(path, delimiter=",")
    assert np.array_equal(back, m)
