"""Markdown rendering of a finished grid run."""

from __future__ import annotations

import csv
import json
from collections import defaultdict
from pathlib import Path

import numpy as np

from .evaluation import fold_summary
from .exceptions import DataError

ORIENTATIONS = ("downstream", "upstream", "bidirected")
PHYSICAL = ("stream_length", "elevation_difference", "average_slope")

# Published full-network values, for orientation only: they need the original
# 358-gauge dataset and are not expected on synthetic data.
REFERENCE_NOTES = (
    "Published full-network reference values (original river dataset, not reproducible here): "
    "isolated ResGCN 85.07% ± 0.66%; best GCNII cell 85.56% ± 1.41% (learned, bidirected); "
    "correlation of learned vs. stream-length weights for downstream ResGCN -0.375 ± 0.012."
)


def _read(path: Path) -> list[dict[str, str]]:
    with open(path, encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


def _label(name: str) -> str:
    return "all physical" if name == "all_physical" else name.replace("_", " ")


def _cell(mean: float, std: float, pct: bool = True) -> str:
    if pct:
        return f"{100 * mean:.2f}% ± {100 * std:.2f}%"
    return f"{mean:.3f} ± {std:.3f}"


def _markdown_table(header: list[str], rows: list[list[str]]) -> list[str]:
    lines = ["| " + " | ".join(header) + " |", "|" + "|".join(["---"] + ["---:"] * (len(header) - 1)) + "|"]
    lines += ["| " + " | ".join(r) + " |" for r in rows]
    return lines


def nse_tables(rows: list[dict[str, str]]) -> list[str]:
    """Per-architecture adjacency x orientation tables of mean ± std summary NSE;
    the best mean per column is bold."""
    cells: dict[str, dict[tuple[str, str], list[float]]] = defaultdict(lambda: defaultdict(list))
    for r in rows:
        cells[r["arch"]][(r["adjacency"], r["orientation"])].append(float(r["summary_nse"]))
    out = []
    for arch, grid in cells.items():
        adjs = list(dict.fromkeys(a for a, _ in grid))
        orients = [o for o in ORIENTATIONS if any(o == g[1] for g in grid)]
        stats = {k: fold_summary(v) for k, v in grid.items()}
        best = {}
        for o in orients:
            means = [stats[(a, o)].mean for a in adjs if (a, o) in stats and np.isfinite(stats[(a, o)].mean)]
            best[o] = max(means) if means else None
        table = []
        for a in adjs:
            line = [_label(a)]
            for o in orients:
                if (a, o) not in stats:
                    line.append("")
                    continue
                s = stats[(a, o)]
                text = _cell(s.mean, s.std)
                line.append(f"**{text}**" if best[o] is not None and s.mean == best[o] else text)
            table.append(line)
        n_folds = max(len(v) for v in grid.values())
        out += [f"### {arch}", "", f"Summary weighted NSE over {n_folds} fold(s), mean ± sample std.", ""]
        out += _markdown_table(["adjacency type", *orients], table) + [""]
    return out


def correlation_table(rows: list[dict[str, str]]) -> list[str]:
    groups: dict[tuple[str, str, str], list[float]] = defaultdict(list)
    for r in rows:
        groups[(r["physical_weight"], r["orientation"], r["arch"])].append(float(r["pearson_r"]))
    if not groups:
        return []
    columns = [(o, a) for o in ORIENTATIONS for a in dict.fromkeys(k[2] for k in groups) if any(k[1:] == (o, a) for k in groups)]
    table = []
    for p in PHYSICAL:
        line = [_label(p)]
        for o, a in columns:
            vals = groups.get((p, o, a))
            line.append(_cell(*_mean_std(vals), pct=False) if vals else "")
        table.append(line)
    header = ["physical edge weights", *(f"{a} {o}" for o, a in columns)]
    return ["## Learned vs. physical edge weights", "", "Pearson correlation, mean ± std over folds.", ""] + _markdown_table(
        header, table
    ) + [""]


def _mean_std(vals):
    s = fold_summary(vals)
    return s.mean, s.std


def worst_gauge_section(root: Path) -> list[str]:
    info_path = root / "worst_gauge.json"
    if not info_path.exists():
        return []
    info = json.loads(info_path.read_text())
    out = [
        "## Worst gauge",
        "",
        f"Best configuration: {info['arch']}, {_label(info['adjacency'])}, {info['orientation']} "
        f"(fold {info['fold']}, summary NSE {100 * info['summary_nse']:.2f}%).",
        f"Lowest per-gauge NSE: gauge {info['gauge']} at {100 * info['gauge_nse']:.2f}%.",
        "",
    ]
    ww = root / "worst_windows.csv"
    if ww.exists():
        rows = _read(ww)
        out.append(f"Top {len(rows)} disjoint {info['horizon']} h windows by squared deviation:")
        out.append("")
        out += _markdown_table(["start", "deviation"], [[r["start"], f"{float(r['deviation']):.4g}"] for r in rows])
        out.append("")
    return out


def render_report(results_dir: str | Path) -> str:
    root = Path(results_dir)
    path = root / "results.csv"
    if not path.exists():
        raise DataError(f"no results.csv in {root}")
    rows = _read(path)
    if not rows:
        raise DataError(f"{path} has no result rows")
    lines = ["# Topology comparison", ""]
    lines += nse_tables(rows)
    by_fold = root / "correlations_by_fold.csv"
    if by_fold.exists():
        lines += correlation_table(_read(by_fold))
    lines += worst_gauge_section(root)
    failures = root / "failures.csv"
    if failures.exists() and _read(failures):
        lines += ["## Failed cells", ""] + [
            f"- {r['arch']} {r['adjacency']} {r['orientation']} {r['fold']}: {r['error']}" for r in _read(failures)
        ] + [""]
    lines += ["---", "", REFERENCE_NOTES, ""]
    return "\n".join(lines)
