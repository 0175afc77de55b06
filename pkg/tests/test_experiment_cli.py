import csv
import json

import numpy as np
import pytest

from rivergnn.cli import EXIT_CONFIG, EXIT_DATA, EXIT_OK, main
from rivergnn.exceptions import ConfigError
from rivergnn.experiment import ExperimentConfig, expand_grid, parse_sweep, run_grid

TINY = dict(
    synth_preset="fig4_i",
    synth_hours=18 * 60,
    period_mode="blocks",
    window_size=6,
    lead_time=1,
    network_depth=1,
    latent_space_dim=4,
    epochs=2,
    batch_size=64,
    learning_rate=1e-3,
)

TINY_FLAGS = [
    "--synth-preset", "fig4_i", "--synth-hours", str(18 * 60), "--period-mode", "blocks",
    "--window-size", "6", "--lead-time", "1", "--network-depth", "1", "--latent-space-dim", "4",
    "--epochs", "2", "--learning-rate", "1e-3",
]


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# --- configuration -------------------------------------------------------------


def test_config_defaults_follow_hyperparameter_table():
    c = ExperimentConfig(synth_preset="fig4_ii")
    assert (c.window_size, c.lead_time, c.network_depth, c.latent_space_dim) == (24, 6, 19, 128)
    assert (c.epochs, c.batch_size, c.learning_rate, c.regularisation_strength) == (100, 64, 1e-4, 1e-5)
    assert c.folds == ("even", "odd", "contiguous")


@pytest.mark.parametrize(
    "bad",
    [
        dict(),
        dict(synth_preset="fig4_i", data="x"),
        dict(synth_preset="fig4_i", window_size=2),
        dict(synth_preset="fig4_i", architecture="ResGCN", adjacency_type="all_physical"),
        dict(synth_preset="fig4_i", folds="even,weekly"),
        dict(synth_preset="fig4_i", optimiser="sgd"),
        dict(synth_preset="fig4_i", architecture="MLP"),
    ],
)
def test_config_rejections(bad):
    with pytest.raises(ConfigError):
        ExperimentConfig(**bad)


def test_unknown_key_rejected():
    with pytest.raises(ConfigError, match="dropout"):
        ExperimentConfig.from_mapping({"synth_preset": "fig4_i", "dropout": 0.1})


def test_comma_lists():
    c = ExperimentConfig(synth_preset="fig4_i", adjacency_type="isolated, binary", edge_direction="upstream")
    assert c.adjacency_type == ("isolated", "binary") and c.edge_direction == ("upstream",)


def test_full_grid_shape():
    c = ExperimentConfig(
        synth_preset="fig4_i",
        architecture="ResGCN,GCNII,ResGAT",
        adjacency_type="isolated,binary,stream_length,elevation_difference,average_slope,learned",
        edge_direction="downstream,upstream,bidirected",
    )
    units = expand_grid(c)
    rows = sum(len(u.orientations) for u in units)
    assert rows == 3 * 6 * 3 * 3  # archs x adjacencies x orientations x folds
    gat = {u.adjacency for u in units if u.arch == "ResGAT"}
    assert "all_physical" in gat and "learned" not in gat
    # isolated trains once per fold and arch
    assert sum(u.adjacency == "isolated" for u in units) == 3 * 3


def test_parse_sweep():
    assert parse_sweep(["W=12,24", "L=1,6"]) == {"W": [12, 24], "L": [1, 6]}
    with pytest.raises(ConfigError):
        parse_sweep(["X=1"])


# --- grid runs -----------------------------------------------------------------


@pytest.fixture(scope="module")
def grid_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("grid")
    cfg = ExperimentConfig(**{**TINY, "synth_preset": "fig4_ii"}, adjacency_type="isolated,learned",
                           edge_direction="downstream,bidirected")
    outcome = run_grid(cfg, out)
    assert not outcome.failures
    return out


def test_results_layout(grid_dir):
    rows = read_rows(grid_dir / "results.csv")
    assert list(rows[0]) == ["arch", "adjacency", "orientation", "fold", "summary_nse", "summary_nse_unweighted"]
    assert len(rows) == 2 * 2 * 3


def test_isolated_rows_identical_across_orientations(grid_dir):
    rows = read_rows(grid_dir / "results.csv")
    iso = {}
    for r in rows:
        if r["adjacency"] == "isolated":
            iso.setdefault(r["fold"], set()).add((r["summary_nse"], r["summary_nse_unweighted"]))
    assert len(iso) == 3 and all(len(v) == 1 for v in iso.values())
    assert len(list((grid_dir / "histories").glob("GCNII_isolated_*"))) == 3


def test_learned_outputs(grid_dir):
    stats = read_rows(grid_dir / "weight_stats.csv")
    assert stats and all(float(r["min"]) >= 0 for r in stats)
    for r in stats:
        vals = [float(r[k]) for k in ("min", "q25", "median", "q75", "max")]
        assert vals == sorted(vals)
    corr = read_rows(grid_dir / "correlations.csv")
    assert {r["physical_weight"] for r in corr} == {"stream_length", "elevation_difference", "average_slope"}
    assert all(-1 <= float(r["pearson_r"]) <= 1 for r in corr)


def test_checkpoint_manifests(grid_dir):
    manifests = list((grid_dir / "checkpoints").glob("*.json"))
    assert len(manifests) == 9  # 3 isolated + 2 orientations x 3 folds learned
    m = json.loads(manifests[0].read_text())
    assert {"model", "train", "seed", "fold", "graph_sha256", "selected_epoch"} <= set(m)


def test_worst_windows_written(grid_dir):
    rows = read_rows(grid_dir / "worst_windows.csv")
    assert rows and list(rows[0]) == ["gauge", "start", "deviation"]
    devs = [float(r["deviation"]) for r in rows]
    assert devs == sorted(devs, reverse=True)


def test_report_renders(grid_dir, capsys):
    assert main(["report", str(grid_dir)]) == EXIT_OK
    text = (grid_dir / "report.md").read_text()
    assert "GCNII" in text and "±" in text and "**" in text
    assert "worst" in text.lower()


# --- CLI ------------------------------------------------------------------------


def test_synth_command(tmp_path):
    out = tmp_path / "s"
    assert main(["synth", "--preset", "fig4_iv", "--hours", "200", "--seed", "7", "--out", str(out)]) == EXIT_OK
    files = {p.name: p.read_bytes() for p in out.iterdir()}
    assert len([f for f in files if f.startswith("gauge_")]) == 9 and "edges.csv" in files
    # non-empty output without --force
    assert main(["synth", "--preset", "fig4_iv", "--hours", "200", "--seed", "7", "--out", str(out)]) == EXIT_CONFIG
    assert main(["synth", "--preset", "fig4_iv", "--hours", "200", "--seed", "7", "--out", str(out), "--force"]) == 0
    assert {p.name: p.read_bytes() for p in out.iterdir()} == files


def test_synth_fig4_i_two_gauges(tmp_path):
    assert main(["synth", "--preset", "fig4_i", "--hours", "50", "--out", str(tmp_path / "a")]) == EXIT_OK
    assert len(list((tmp_path / "a").glob("gauge_*.csv"))) == 2


def test_preprocess_complete_and_gap(tmp_path):
    raw = tmp_path / "raw"
    assert main(["synth", "--preset", "fig4_iv", "--hours", "300", "--out", str(raw)]) == EXIT_OK
    assert main(["preprocess", str(raw), "--out", str(tmp_path / "p1")]) == EXIT_OK
    rep = json.loads((tmp_path / "p1" / "preprocess_report.json").read_text())
    assert (rep["nodes_before"], rep["nodes_after_dfs"], rep["nodes_after_filter"]) == (9, 9, 9)
    assert rep["removed"] == {}

    # 10 h discharge gap at gauge 204 (between 200/201 and 206)
    path = raw / "gauge_204.csv"
    lines = path.read_text().splitlines()
    for i in range(51, 61):
        parts = lines[i].split(",")
        parts[1] = ""
        lines[i] = ",".join(parts)
    path.write_text("\n".join(lines) + "\n")
    assert main(["preprocess", str(raw), "--out", str(tmp_path / "p2")]) == EXIT_OK
    rep = json.loads((tmp_path / "p2" / "preprocess_report.json").read_text())
    assert rep["nodes_after_filter"] == 8 and list(rep["removed"]) == ["204"]
    edges = (tmp_path / "p2" / "edges.csv").read_text()
    assert "200,206," in edges and "201,206," in edges


def test_preprocess_unknown_sink(tmp_path, capsys):
    raw = tmp_path / "raw"
    main(["synth", "--preset", "fig4_i", "--hours", "50", "--out", str(raw)])
    assert main(["preprocess", str(raw), "--sink", "999"]) == EXIT_DATA
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1 and err[0].startswith("rivergnn: error:") and "999" in err[0]


def test_run_on_preprocessed_and_train_cell(tmp_path):
    raw, pre = tmp_path / "raw", tmp_path / "pre"
    main(["synth", "--preset", "fig4_i", "--hours", str(18 * 60), "--out", str(raw)])
    main(["preprocess", str(raw), "--out", str(pre)])
    flags = TINY_FLAGS[:]
    flags[0:2] = ["--data", str(pre)]
    flags.remove("--synth-hours")
    flags.remove(str(18 * 60))
    assert main(["run", *flags, "--adjacency-type", "binary", "--out", str(tmp_path / "r")]) == EXIT_OK
    assert len(read_rows(tmp_path / "r" / "results.csv")) == 3
    dump = tmp_path / "adj.csv"
    code = main(["train", *flags, "--adjacency-type", "learned", "--fold", "odd", "--out", str(tmp_path / "t"),
                 "--adjacency-dump", str(dump)])
    assert code == EXIT_OK
    A = np.loadtxt(dump, delimiter=",")
    assert A.shape == (2, 2) and (A >= 0).all()


def test_run_missing_cache(tmp_path):
    assert main(["run", "--data", str(tmp_path), "--out", str(tmp_path / "o")]) == EXIT_DATA


def test_report_on_empty_results(tmp_path, capsys):
    (tmp_path / "results.csv").write_text("arch,adjacency,orientation,fold,summary_nse,summary_nse_unweighted\n")
    assert main(["report", str(tmp_path)]) != 0
    assert main(["report", str(tmp_path / "missing")]) != 0


def test_config_file_with_flag_override(tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text(
        "synth_preset: fig4_i\n"
        "Window size (W): 6\n"
        "lead time: 1\n"
        "network depth: 1\n"
        "latent space dim: 4\n"
        "epochs: 1\n"
        "synth_hours: 1080\n"
        "period_mode: blocks\n"
        "folds: [even]\n"
    )
    out = tmp_path / "o"
    assert main(["run", "--config", str(cfg), "--epochs", "2", "--out", str(out)]) == EXIT_OK
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"]["epochs"] == 2 and manifest["config"]["window_size"] == 6
    assert len(read_rows(out / "results.csv")) == 1


def test_bad_config_exit_code(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text('{"synth_preset": "fig4_i", "dropout": 0.5}')
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    assert main(["run", "--synth-preset", "fig4_i", "--window-size", "2", "--out", str(tmp_path / "o")]) == EXIT_CONFIG


def test_sweep_groups(tmp_path):
    out = tmp_path / "sw"
    code = main(["run", *TINY_FLAGS, "--folds", "even", "--out", str(out), "--sweep", "W=4,6", "L=1,2"])
    assert code == EXIT_OK
    groups = sorted(p.name for p in out.iterdir() if p.is_dir() and p.name.startswith("sweep_"))
    assert groups == ["sweep_W4_L1", "sweep_W4_L2", "sweep_W6_L1", "sweep_W6_L2"]
    assert all((out / g / "results.csv").exists() for g in groups)


def test_output_env_default(tmp_path, monkeypatch):
    monkeypatch.setenv("RIVERGNN_OUTPUT", str(tmp_path / "root"))
    assert main(["synth", "--preset", "fig4_i", "--hours", "30"]) == EXIT_OK
    assert (tmp_path / "root" / "synth_fig4_i_seed0" / "edges.csv").exists()


def test_gradcheck_command(capsys):
    assert main(["gradcheck"]) == EXIT_OK
    assert "checks passed" in capsys.readouterr().out
