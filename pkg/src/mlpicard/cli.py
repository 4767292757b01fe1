"""Experiment runner.

``mlpicard run`` executes a sweep over (n, M, N, alpha) cells for one
problem and writes one aggregate row per cell as CSV or JSON; ``mlpicard
report`` renders figures from a results file.  Configuration is flat
``key = value`` text with comma-separated list values, overridable from the
command line.  Re-running an identical configuration reproduces every
numeric column except wall-clock timing bit-for-bit.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field, replace
from itertools import product
from pathlib import Path
from typing import Optional

import numpy as np

from .cost import cost_recursion, unit_costs
from .errors import ConfigError, SolverError
from .mlp import Estimate, MlpConfig, collect_runs, _jackknife_rmse_se, _resolve_reference
from .oracle import PicardConfig, picard_reference
from .problems import make_problem
from .sampler import root_key

__all__ = ["RunConfig", "main", "parse_config_text", "run"]

CSV_COLUMNS = [
    "problem", "d", "t", "n", "M", "N", "alpha", "runs",
    "value_mean", "value_rmse", "grad_rmse", "stderr_value", "stderr_grad",
    "wall_ms", "evals_g", "evals_f", "evals_mu", "evals_sigma",
    "scalars_drawn", "cc1_bound", "seed",
]

_PICARD_REFERENCE_DEFAULTS = dict(iterations_K=3, outer_samples=20000, euler_N=64)


@dataclass(frozen=True)
class RunConfig:
    """Parsed sweep configuration; sweep axes are Cartesian-producted."""

    problem_key: str = "linear-gaussian"
    dim: Optional[int] = None
    t: float = 0.0
    x_spec: str | tuple[float, ...] = "zeros"
    n_list: tuple[int, ...] = (1,)
    m_list: tuple[int, ...] = (1,)
    steps_list: tuple[Optional[int], ...] = (None,)   # None selects the exact-path scheme
    alpha_list: tuple[float, ...] = (0.5,)
    runs: int = 1
    seed: int = 0
    reference: str = "exact"
    output_path: str = "results.csv"
    format: str = "csv"
    workers: Optional[int] = None

    def __post_init__(self) -> None:
        if self.runs < 1:
            raise ConfigError(f"runs must be >= 1, got {self.runs}")
        if self.t < 0.0:
            raise ConfigError(f"t must be >= 0, got {self.t}")
        if self.reference not in ("exact", "picard", "none"):
            raise ConfigError(f"reference must be exact|picard|none, got {self.reference!r}")
        if self.format not in ("csv", "json"):
            raise ConfigError(f"format must be csv|json, got {self.format!r}")
        for name, axis in (("n", self.n_list), ("M", self.m_list),
                           ("N", self.steps_list), ("alpha", self.alpha_list)):
            if len(axis) == 0:
                raise ConfigError(f"sweep list {name} must be nonempty")

    def to_text(self) -> str:
        x = self.x_spec if isinstance(self.x_spec, str) else ",".join(
            f"{v:.17g}" for v in self.x_spec
        )
        lines = [
            f"problem = {self.problem_key}",
            f"d = {self.dim if self.dim is not None else 'default'}",
            f"t = {self.t:.17g}",
            f"x = {x}",
            "n = " + ",".join(str(v) for v in self.n_list),
            "M = " + ",".join(str(v) for v in self.m_list),
            "N = " + ",".join("exact" if v is None else str(v) for v in self.steps_list),
            "alpha = " + ",".join(f"{v:.17g}" for v in self.alpha_list),
            f"runs = {self.runs}",
            f"seed = {self.seed}",
            f"reference = {self.reference}",
            f"out = {self.output_path}",
            f"format = {self.format}",
        ]
        return "\n".join(lines) + "\n"


def _parse_int_list(text: str) -> tuple[int, ...]:
    return tuple(int(v.strip()) for v in text.split(",") if v.strip())


def _parse_steps_list(text: str) -> tuple[Optional[int], ...]:
    out = []
    for v in text.split(","):
        v = v.strip()
        if not v:
            continue
        out.append(None if v in ("exact", "0") else int(v))
    return tuple(out)


def _parse_float_list(text: str) -> tuple[float, ...]:
    return tuple(float(v.strip()) for v in text.split(",") if v.strip())


def parse_config_text(text: str) -> RunConfig:
    """Parse flat ``key = value`` configuration text ('#' starts a comment)."""
    fields: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        try:
            if key == "problem":
                fields["problem_key"] = value
            elif key == "d":
                fields["dim"] = None if value == "default" else int(value)
            elif key == "t":
                fields["t"] = float(value)
            elif key == "x":
                fields["x_spec"] = value if value in ("zeros", "ones") else _parse_float_list(value)
            elif key == "n":
                fields["n_list"] = _parse_int_list(value)
            elif key == "M":
                fields["m_list"] = _parse_int_list(value)
            elif key == "N":
                fields["steps_list"] = _parse_steps_list(value)
            elif key == "alpha":
                fields["alpha_list"] = _parse_float_list(value)
            elif key == "runs":
                fields["runs"] = int(value)
            elif key == "seed":
                fields["seed"] = int(value)
            elif key == "reference":
                fields["reference"] = value
            elif key == "out":
                fields["output_path"] = value
            elif key == "format":
                fields["format"] = value
            elif key == "workers":
                fields["workers"] = int(value)
            else:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: {exc}") from exc
    return RunConfig(**fields)


def _resolve_x(config: RunConfig, dim: int) -> np.ndarray:
    if config.x_spec == "zeros":
        return np.zeros(dim)
    if config.x_spec == "ones":
        return np.ones(dim)
    x = np.asarray(config.x_spec, dtype=float)
    if x.shape != (dim,):
        raise ConfigError(f"x has shape {x.shape}, problem dimension is {dim}")
    return x


def _fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)


def run(config: RunConfig) -> list[dict]:
    """Execute the sweep and write the output file; returns the rows."""
    problem = make_problem(config.problem_key, dim=config.dim)
    if not config.t < problem.horizon:
        raise ConfigError(f"t={config.t} must precede the horizon {problem.horizon}")
    x = _resolve_x(config, problem.dim)

    reference = None
    if config.reference == "picard":
        reference = picard_reference(
            problem, config.t, x,
            PicardConfig(**_PICARD_REFERENCE_DEFAULTS, alpha=config.alpha_list[0]),
            root_key(config.seed),
        )
    ref_point: Optional[tuple[float, np.ndarray]] = None
    if config.reference != "none":
        ref_point = _resolve_reference(problem, config.t, x, reference)

    rows: list[dict] = []
    cells = list(product(config.n_list, config.m_list, config.steps_list, config.alpha_list))
    for cell_index, (n, m, steps, alpha) in enumerate(cells):
        try:
            mlp_config = MlpConfig(depth_n=n, branching_M=m, euler_N=steps, alpha=alpha)
            values, gradients, counters, wall_ms = collect_runs(
                problem, config.t, x, mlp_config, config.runs, config.seed,
                config_index=cell_index, workers=config.workers,
            )
        except SolverError as exc:
            raise ConfigError(
                f"sweep cell (n={n}, M={m}, N={steps}, alpha={alpha}) failed: {exc}"
            ) from exc
        if ref_point is not None:
            sq_val = (values - ref_point[0]) ** 2
            sq_grad = np.sum((gradients - ref_point[1]) ** 2, axis=1)
            value_rmse = float(np.sqrt(sq_val.mean()))
            grad_rmse = float(np.sqrt(sq_grad.mean()))
            stderr_value = _jackknife_rmse_se(sq_val)
            stderr_grad = _jackknife_rmse_se(sq_grad)
        else:
            value_rmse = grad_rmse = stderr_value = stderr_grad = float("nan")
        e_unit, g_unit, f_unit = unit_costs(problem.dim, steps)
        rows.append({
            "problem": problem.name,
            "d": problem.dim,
            "t": config.t,
            "n": n,
            "M": m,
            "N": 0 if steps is None else steps,
            "alpha": alpha,
            "runs": config.runs,
            "value_mean": float(values.mean()),
            "value_rmse": value_rmse,
            "grad_rmse": grad_rmse,
            "stderr_value": stderr_value,
            "stderr_grad": stderr_grad,
            "wall_ms": wall_ms,
            **counters.as_dict(),
            "cc1_bound": cost_recursion(n, m, e_unit, g_unit, f_unit),
            "seed": config.seed,
        })

    out = Path(config.output_path)
    if out.parent != Path(""):
        out.parent.mkdir(parents=True, exist_ok=True)
    if config.format == "csv":
        with open(out, "w", newline="") as fh:
            fh.write(",".join(CSV_COLUMNS) + "\n")
            for row in rows:
                fh.write(",".join(_fmt(row[col]) for col in CSV_COLUMNS) + "\n")
    else:
        with open(out, "w") as fh:
            json.dump(rows, fh, indent=1, default=_fmt)
            fh.write("\n")
    return rows


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mlpicard",
        description="Multilevel Picard experiment runner",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    runp = sub.add_parser("run", help="execute a sweep and write csv/json results")
    runp.add_argument("--config", type=str, default=None, help="path to key=value config text")
    runp.add_argument("--problem", type=str, default=None)
    runp.add_argument("--d", type=int, default=None)
    runp.add_argument("--t", type=float, default=None)
    runp.add_argument("--x", type=str, default=None, help="zeros | ones | comma-separated floats")
    runp.add_argument("--n", type=str, default=None, help="comma-separated depths")
    runp.add_argument("--M", type=str, default=None, help="comma-separated branching bases")
    runp.add_argument("--N", type=str, default=None,
                      help="comma-separated Euler step counts; 'exact' or 0 for exact paths")
    runp.add_argument("--alpha", type=str, default=None)
    runp.add_argument("--runs", type=int, default=None)
    runp.add_argument("--seed", type=int, default=None)
    runp.add_argument("--reference", type=str, default=None, choices=["exact", "picard", "none"])
    runp.add_argument("--out", type=str, default=None)
    runp.add_argument("--format", type=str, default=None, choices=["csv", "json"])
    runp.add_argument("--workers", type=int, default=None,
                      help="worker processes (default: MLPICARD_WORKERS or all cores)")

    repp = sub.add_parser("report", help="render figures from a results csv")
    repp.add_argument("--results", type=str, required=True)
    repp.add_argument("--outdir", type=str, default=None)
    return parser


def _config_from_args(args: argparse.Namespace) -> RunConfig:
    if args.config is not None:
        config = parse_config_text(Path(args.config).read_text())
    else:
        config = RunConfig()
    updates: dict = {}
    if args.problem is not None:
        updates["problem_key"] = args.problem
    if args.d is not None:
        updates["dim"] = args.d
    if args.t is not None:
        updates["t"] = args.t
    if args.x is not None:
        updates["x_spec"] = args.x if args.x in ("zeros", "ones") else _parse_float_list(args.x)
    if args.n is not None:
        updates["n_list"] = _parse_int_list(args.n)
    if args.M is not None:
        updates["m_list"] = _parse_int_list(args.M)
    if args.N is not None:
        updates["steps_list"] = _parse_steps_list(args.N)
    if args.alpha is not None:
        updates["alpha_list"] = _parse_float_list(args.alpha)
    if args.runs is not None:
        updates["runs"] = args.runs
    if args.seed is not None:
        updates["seed"] = args.seed
    if args.reference is not None:
        updates["reference"] = args.reference
    if args.out is not None:
        updates["output_path"] = args.out
    if args.format is not None:
        updates["format"] = args.format
    if args.workers is not None:
        updates["workers"] = args.workers
    return replace(config, **updates) if updates else config


def main(argv: Optional[list[str]] = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            config = _config_from_args(args)
            rows = run(config)
            print(f"wrote {len(rows)} rows to {config.output_path}")
            return 0
        if args.command == "report":
            from .report import render_report

            written = render_report(args.results, args.outdir)
            for path in written:
                print(f"wrote {path}")
            return 0
        return 2
    except (SolverError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
