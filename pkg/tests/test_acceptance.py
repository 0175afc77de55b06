"""Acceptance criteria, one test each; every test prints a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v -s``; the lines are also
repeated in the terminal summary of a normal run.
"""

import random
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from oracles import ancestors_bruteforce, pearson_two_pass, random_antitransitive_dag, reach_sets
from rivergnn.adjacency import build_adjacency, normalize_augmented
from rivergnn.cli import main
from rivergnn.dataset import (
    ArraySamples,
    NodeSignal,
    NormalizationParams,
    denormalize_signal,
    extract_samples,
    interpolate_gaps,
    sample_count,
    zscore_normalize,
)
from rivergnn.evaluation import pearson_corr, weight_stats, weighted_nse
from rivergnn.experiment import ExperimentConfig, run_grid
from rivergnn.gradsuite import run_suite
from rivergnn.models import ModelConfig, build_model, forward
from rivergnn.report import render_report
from rivergnn.river_graph import EdgeAttrs, RiverGraph, inverse_dfs, rewire_remove
from rivergnn.synthdata import generate_network
from rivergnn.training import TrainConfig, train

HOUR = np.timedelta64(1, "h")
T0 = np.datetime64("2000-01-01T00", "h")


def verdict(name: str, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert ok, line


def test_gradient_correctness():
    results, seconds = run_suite(seed=0)
    worst_prim = max(r.error for r in results if r.tol == 1e-7)
    worst_model = max(r.error for r in results if r.tol == 1e-4)
    archs = {r.name.split("/")[0] for r in results if r.tol == 1e-4}
    ok = all(r.passed for r in results) and seconds < 60 and archs >= {"ResGCN", "GCNII", "ResGAT"}
    verdict(
        "gradient correctness",
        ok,
        f"{len(results)} checks, primitives max {worst_prim:.1e} (<1e-7), models max {worst_model:.1e} (<1e-4), "
        f"{seconds:.1f} s (<60 s)",
    )


def test_metric_identities():
    rng = np.random.default_rng(2024)
    bad_nse = 0
    worst_pearson = 0.0
    for _ in range(100):
        n, S = int(rng.integers(1, 6)), int(rng.integers(2, 60))
        params = NormalizationParams(rng.uniform(0.5, 100, (n, 5)), rng.uniform(0.1, 20, (n, 5)))
        truth = rng.standard_normal((S, n))
        scores = rng.uniform(0.01, 3, (S, n))
        mean_rep = weighted_nse(np.zeros_like(truth), truth, None, params, scores=scores)
        oracle_rep = weighted_nse(truth, truth, None, params, scores=scores)
        bad_nse += int(not (np.all(mean_rep.per_gauge == 0.0) and np.all(oracle_rep.per_gauge == 1.0)))
        a, b = rng.standard_normal(S) * rng.uniform(0.1, 10), rng.standard_normal(S) + rng.uniform(-5, 5)
        worst_pearson = max(worst_pearson, abs(pearson_corr(a, b) - pearson_two_pass(a, b)))
    verdict(
        "metric identities",
        bad_nse == 0 and worst_pearson <= 1e-12,
        f"100 instances, NSE identity violations {bad_nse}, Pearson max deviation {worst_pearson:.1e} (<=1e-12)",
    )


def test_graph_algorithm_oracles():
    rng = random.Random(500)
    mismatches = 0
    for _ in range(500):
        g = random_antitransitive_dag(rng, rng.randint(1, 12), integer_attrs=False)
        for s in g.nodes:
            mismatches += int(inverse_dfs(g, s) != ancestors_bruteforce(g.nodes, g.edges, s))
        victim = rng.choice(sorted(g.nodes))
        out = rewire_remove(g, victim)
        before, after = reach_sets(g.nodes, g.edges), reach_sets(out.nodes, out.edges)
        mismatches += sum(int(after[u] != before[u] - {victim}) for u in out.nodes)
    verdict("graph-algorithm oracles", mismatches == 0, f"500 random anti-transitive DAGs (n<=12), {mismatches} mismatches")


def test_isolated_adjacency_structure():
    identity_ok = True
    for preset in ("fig4_i", "fig4_ii", "fig4_iii", "fig4_iv"):
        g = generate_network(preset=preset)
        for orient in ("downstream", "upstream", "bidirected"):
            hat = normalize_augmented(build_adjacency(g, "isolated", orient).matrix, "isolated").matrix
            identity_ok &= hat.tobytes() == np.eye(g.n).tobytes()
    rng = np.random.default_rng(6)
    pairs = violations = 0
    for preset in ("fig4_ii", "fig4_iii"):  # 5 nodes each
        g = generate_network(preset=preset)
        for arch in ("ResGCN", "GCNII", "ResGAT"):
            cfg = ModelConfig(arch=arch, N=3, d=6, W=4, C=5, adjacency="isolated", orientation="bidirected")
            m = build_model(cfg, g, rng)
            X = rng.standard_normal((g.n, 4, 5))
            base = forward(m, X).data
            for i in range(g.n):
                Xp = X.copy()
                Xp[i] = rng.standard_normal((4, 5))
                out = forward(m, Xp).data
                for j in range(g.n):
                    if j != i:
                        pairs += 1
                        violations += int(out[j] != base[j])
    verdict(
        "isolated-adjacency structure",
        identity_ok and violations == 0,
        f"A_hat == I bitwise: {identity_ok}; {pairs} (i, j) pairs checked on n=5, {violations} dependent",
    )


def test_depth_propagation():
    failures = []
    for N in (1, 2, 4, 8, 19):
        ids = list(range(1, N + 2))
        g = RiverGraph(frozenset(ids), {(a, a + 1): EdgeAttrs.from_length_and_drop(1.0, 1.0) for a in ids[:-1]})

        def reach(layers):
            cfg = ModelConfig(arch="ResGCN", N=layers, d=1, W=1, C=1, adjacency="binary", orientation="downstream")
            m = build_model(cfg, g, np.random.default_rng(0))
            state = {k: np.ones_like(v) for k, v in m.state_dict().items()}
            state["encoder.bias"][:] = 0
            state["decoder.bias"][:] = 0
            m.load_state_dict(state)
            X = np.zeros((g.n, 1, 1))
            X[0] = 1.0
            return forward(m, X).data[-1] != 0.0

        if not reach(N) or (N > 1 and reach(N - 1)):
            failures.append(N)
    verdict("depth propagation", not failures, f"paths of N in (1, 2, 4, 8, 19) edges, failures {failures}")


def test_desk_scale_experiment(tmp_path):
    cfg = ExperimentConfig(
        synth_preset="fig4_ii",
        synth_hours=3 * 8760,
        period_mode="blocks",
        architecture="GCNII",
        network_depth=4,
        latent_space_dim=32,
        window_size=24,
        lead_time=6,
        epochs=30,
        adjacency_type="isolated,binary",
        edge_direction="bidirected",
    )
    start = time.perf_counter()
    outcome = run_grid(cfg, tmp_path)
    seconds = time.perf_counter() - start
    means = {}
    for r in outcome.results:
        if r.ok:
            means.setdefault(r.unit.adjacency, []).append(r.summary)
    report = render_report(tmp_path)
    complete = not outcome.failures and set(means) == {"isolated", "binary"} and all(len(v) == 3 for v in means.values())
    layout = "### GCNII" in report and "| adjacency type | bidirected |" in report and "| isolated |" in report
    mean_nse = {k: float(np.mean(v)) for k, v in means.items()}
    ok = complete and layout and all(v >= 0.5 for v in mean_nse.values()) and seconds < 600
    detail = ", ".join(f"{k} {v:.3f}" for k, v in mean_nse.items())
    verdict("desk-scale experiment", ok, f"mean summary NSE over 3 folds: {detail} (>=0.5); {seconds:.0f} s (<600 s)")


def test_edge_weight_contract():
    g = generate_network(preset="fig4_iv")
    rng = np.random.default_rng(11)
    cfg = ModelConfig(arch="ResGCN", N=2, d=6, W=4, C=2, adjacency="learned", orientation="bidirected")
    model = build_model(cfg, g, np.random.default_rng(1))
    init = model.learned_weights.data.copy()
    X = rng.standard_normal((80, g.n, 4, 2))
    y = 3.0 * rng.standard_normal((80, g.n))
    params = NormalizationParams(np.full((g.n, 2), 2.0), np.ones((g.n, 2)))
    model, _ = train(model, ArraySamples(X, y), params, TrainConfig(epochs=3, batch_size=4, lr=0.1))
    omega = model.learned_weights.data
    st = weight_stats(omega)
    ordered = st.min <= st.q25 <= st.median <= st.q75 <= st.max
    ok = init.min() >= 0.9 and init.max() <= 1.1 and omega.min() >= 0 and ordered
    verdict(
        "edge-weight contract",
        ok,
        f"initial range [{init.min():.3f}, {init.max():.3f}], trained min {omega.min():.3f} "
        f"({int(np.sum(omega == 0))} clipped of {len(omega)}), quartiles ordered {ordered}",
    )


def test_run_determinism(tmp_path):
    flags = [
        "run", "--synth-preset", "fig4_ii", "--synth-hours", "2160", "--period-mode", "blocks",
        "--window-size", "12", "--lead-time", "2", "--network-depth", "2", "--latent-space-dim", "8",
        "--epochs", "3", "--adjacency-type", "binary,learned", "--edge-direction", "downstream",
    ]
    codes = [main([*flags, "--out", str(tmp_path / d)]) for d in ("a", "b")]
    a, b = ((tmp_path / d / "results.csv").read_bytes() for d in ("a", "b"))
    ok = codes == [0, 0] and a == b and len(a.splitlines()) == 7
    verdict("determinism", ok, f"exit codes {codes}, results.csv byte-identical: {a == b}")


def test_data_layer_invariants():
    rng = np.random.default_rng(77)
    worst = 0.0
    for _ in range(20):
        n, T = int(rng.integers(1, 5)), int(rng.integers(3, 200))
        raw = rng.uniform(0.01, 1e3, (n, T, 5))
        sig = NodeSignal(raw, T0 + np.arange(T) * HOUR, tuple(range(1, n + 1)))
        normed, params = zscore_normalize(sig)
        back = denormalize_signal(normed, params).values
        worst = max(worst, float(np.max(np.abs(back - raw) / np.maximum(1.0, np.abs(raw)))))

    count_bad = 0
    for _ in range(200):
        W, L = int(rng.integers(1, 50)), int(rng.integers(0, 30))
        T = W + L + int(rng.integers(0, 100))
        sig = NodeSignal(np.ones((1, T, 5)), T0 + np.arange(T) * HOUR, (1,))
        count_bad += int(len(extract_samples(sig, W, L)) != sample_count(T, W, L) or sample_count(T, W, L) != T - L - W + 1)

    def gap_result(gap):
        q = np.concatenate([[1.0], np.full(gap, np.nan), [9.0]])
        values = np.concatenate([q[None, :, None], np.ones((1, len(q), 4))], axis=2)
        filled, report = interpolate_gaps(NodeSignal(values, T0 + np.arange(len(q)) * HOUR, (1,)))
        return not np.isnan(filled.discharge).any(), report

    six_filled, six_report = gap_result(6)
    seven_filled, seven_report = gap_result(7)
    rule_ok = six_filled and six_report == {} and not seven_filled and seven_report == {1: [(1, 7)]}
    ok = worst <= 1e-10 and count_bad == 0 and rule_ok
    verdict(
        "data-layer invariants",
        ok,
        f"z-score round trip max rel err {worst:.1e} (<=1e-10), sample count mismatches {count_bad}/200, "
        f"6 h gap filled {six_filled}, 7 h gap reported {seven_report == {1: [(1, 7)]}}",
    )


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q", "-s"]))
