"""Independent reference implementations used as test oracles.

Everything here is written without the package's own graph or metric code:
plain Python sets and lists, brute-force loops.
"""

from __future__ import annotations

import math
import random

from rivergnn.river_graph import EdgeAttrs, RiverGraph


def reach_sets(nodes, edges) -> dict[int, set[int]]:
    """descendants[v]: every node reachable from v by a path of length >= 1 (BFS per node)."""
    succ = {v: [] for v in nodes}
    for u, v in edges:
        succ[u].append(v)
    out = {}
    for s in nodes:
        seen, frontier = set(), [s]
        while frontier:
            nxt = []
            for u in frontier:
                for v in succ[u]:
                    if v not in seen:
                        seen.add(v)
                        nxt.append(v)
            frontier = nxt
        out[s] = seen
    return out


def ancestors_bruteforce(nodes, edges, target) -> set[int]:
    """Nodes from which ``target`` is reachable, plus ``target`` itself."""
    reach = reach_sets(nodes, edges)
    return {u for u in nodes if target in reach[u]} | {target}


def transitive_reduction(nodes, edges) -> set[tuple[int, int]]:
    reach = reach_sets(nodes, edges)
    keep = set()
    for u, v in edges:
        if not any(v in reach[w] for w in nodes if w != v and w in reach[u]):
            keep.add((u, v))
    return keep


def random_antitransitive_dag(rng: random.Random, n: int, p: float = 0.35, integer_attrs: bool = True) -> RiverGraph:
    """Random DAG over ids drawn from 1..100, reduced to be anti-transitive."""
    ids = rng.sample(range(1, 101), n)
    edges = {(ids[i], ids[j]) for i in range(n) for j in range(i + 1, n) if rng.random() < p}
    reduced = transitive_reduction(ids, edges)
    attrs = {}
    for e in sorted(reduced):
        if integer_attrs:
            length, drop = float(rng.randint(100, 5000)), float(rng.randint(0, 200))
        else:
            length, drop = rng.uniform(100, 5000), rng.uniform(0, 200)
        attrs[e] = EdgeAttrs.from_length_and_drop(length, drop)
    return RiverGraph(frozenset(ids), attrs)


def pearson_two_pass(a, b) -> float:
    n = len(a)
    ma = sum(a) / n
    mb = sum(b) / n
    cov = sum((x - ma) * (y - mb) for x, y in zip(a, b))
    va = sum((x - ma) ** 2 for x in a)
    vb = sum((y - mb) ** 2 for y in b)
    return cov / math.sqrt(va * vb)


def nse_formula(pred, truth, mu, weights) -> float:
    """Weighted NSE of one gauge, straight from the definition."""
    num = sum(w * (p - t) ** 2 for p, t, w in zip(pred, truth, weights))
    den = sum(w * (mu - t) ** 2 for t, w in zip(truth, weights))
    return 1.0 - num / den


def random_in_forest(rng: random.Random, n: int, p_root: float = 0.15) -> RiverGraph:
    """Random river-like graph: every gauge drains into at most one downstream gauge."""
    ids = rng.sample(range(1, 101), n)
    edges = {}
    for i, v in enumerate(ids[:-1]):
        if rng.random() >= p_root:
            parent = ids[rng.randrange(i + 1, n)]
            edges[(v, parent)] = EdgeAttrs.from_length_and_drop(rng.uniform(100, 5000), rng.uniform(0, 200))
    return RiverGraph(frozenset(ids), edges)
