"""Figure rendering for study results.

Reads the delimited output of a sweep and writes matplotlib figures next to
it: error against depth, error against branching base, and measured cost
against accuracy.  The CSV stays the canonical artifact; figures are a view.
"""

from __future__ import annotations

import csv
import math
from pathlib import Path

__all__ = ["load_rows", "render_report"]

_FLOAT_COLS = (
    "t", "alpha", "value_mean", "value_rmse", "grad_rmse",
    "stderr_value", "stderr_grad", "wall_ms",
)
_INT_COLS = ("d", "n", "M", "N", "runs", "evals_g", "evals_f", "evals_mu",
             "evals_sigma", "scalars_drawn", "seed")


def load_rows(path: str | Path) -> list[dict]:
    rows = []
    with open(path, newline="") as fh:
        for raw in csv.DictReader(fh):
            row: dict = dict(raw)
            for col in _FLOAT_COLS:
                row[col] = float(raw[col])
            for col in _INT_COLS:
                row[col] = int(raw[col])
            rows.append(row)
    return rows


def _group(rows, keys):
    groups: dict[tuple, list[dict]] = {}
    for row in rows:
        groups.setdefault(tuple(row[k] for k in keys), []).append(row)
    return groups


def _finite(pairs):
    return [(a, b) for a, b in pairs if math.isfinite(b) and b > 0.0]


def render_report(results_path: str | Path, outdir: str | Path | None = None) -> list[Path]:
    """Render figures for one results file; returns the written paths."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    results_path = Path(results_path)
    outdir = results_path.parent if outdir is None else Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    rows = load_rows(results_path)
    if not rows:
        return []
    stem = results_path.stem
    written: list[Path] = []

    def plot_series(axis_key, fixed_keys, fname, xlabel):
        fig, axes = plt.subplots(1, 2, figsize=(9.0, 3.6), sharex=True)
        drew = False
        for key, grp in sorted(_group(rows, fixed_keys).items()):
            grp = sorted(grp, key=lambda r: r[axis_key])
            label = ",".join(f"{k}={v}" for k, v in zip(fixed_keys, key))
            for ax, col, title in (
                (axes[0], "value_rmse", "value RMSE"),
                (axes[1], "grad_rmse", "gradient RMSE"),
            ):
                pts = _finite([(r[axis_key], r[col]) for r in grp])
                if len(pts) >= 1:
                    ax.plot(*zip(*pts), marker="o", label=label)
                    ax.set_title(title)
                    ax.set_xlabel(xlabel)
                    ax.set_yscale("log")
                    drew = drew or len(pts) > 0
        if not drew:
            plt.close(fig)
            return
        axes[0].set_ylabel("RMSE")
        axes[0].legend(fontsize=7)
        fig.tight_layout()
        path = outdir / f"{stem}_{fname}.png"
        fig.savefig(path, dpi=150)
        plt.close(fig)
        written.append(path)

    plot_series("n", ["M", "N", "alpha"], "rmse_vs_depth", "depth n")
    plot_series("M", ["n", "N", "alpha"], "rmse_vs_branching", "branching M")

    pts = _finite([(r["scalars_drawn"], r["value_rmse"]) for r in rows])
    if pts:
        fig, ax = plt.subplots(figsize=(4.8, 3.6))
        ax.loglog(*zip(*pts), "o")
        ax.set_xlabel("random scalars drawn")
        ax.set_ylabel("value RMSE")
        ax.set_title("cost vs accuracy")
        fig.tight_layout()
        path = outdir / f"{stem}_cost_vs_error.png"
        fig.savefig(path, dpi=150)
        plt.close(fig)
        written.append(path)
    return written
