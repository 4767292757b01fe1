"""Recursive multilevel estimator for the value/gradient pair.

``estimate`` realises the full-history recursion: depth 0 is identically
zero; at depth n the estimate is the terminal anchor (g(x), 0), plus a
control-variate average of M^n terminal samples [g(X_T) - g(x)] (1, V_T),
plus one importance-sampled source sum per level l < n with M^(n-l)
replicates.  Each replicate draws an interior time R from the symmetric
endpoint-singular law, simulates one path segment to R, and weights the
telescoped source difference

    f(R, X_R, U_l(R, X_R)) - [l >= 1] f(R, X_R, U_{l-1}(R, X_R))

by the reciprocal sampling density; both recursive sub-estimates are
evaluated at the same sampled point and multiplied by the same weight vector
(1, V_R), which is what makes the level differences telescope.

The recursion is depth-first with keyed substreams instead of a
pre-expanded random tree: memory is O(n) and results are bit-reproducible
for a fixed seed regardless of scheduling.  Sums run in replicate order.
"""

from __future__ import annotations

import os
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .cost import CostCounters
from .errors import (
    DegenerateInterval,
    DomainError,
    MissingReference,
    NonFiniteCoefficient,
    NotExactlySimulable,
    RecursionBudgetExceeded,
)
from .model import PdeProblem
from .paths import _euler_batch, _exact_batch
from .sampler import StreamKey, TimeSampler, root_key

__all__ = ["Estimate", "MlpConfig", "NodeTrace", "RmseRow", "Trace", "estimate", "rmse_study"]


@dataclass(frozen=True)
class Estimate:
    """Joint estimate of the solution value and its spatial gradient."""

    value: float
    gradient: np.ndarray

    def as_array(self) -> np.ndarray:
        return np.concatenate(([self.value], self.gradient))


@dataclass(frozen=True)
class MlpConfig:
    """Estimator parameters: depth, branching base, optional Euler step count.

    ``euler_N`` absent selects the exact-path scheme (the problem must carry
    constant coefficients).  ``cost_cap`` is a hard cap on counted operations;
    exceeding it aborts with :class:`RecursionBudgetExceeded`.
    """

    depth_n: int
    branching_M: int
    euler_N: Optional[int] = None
    alpha: float = 0.5
    cost_cap: int = 10**9

    def __post_init__(self) -> None:
        if self.depth_n < 0:
            raise DomainError(f"depth_n must be >= 0, got {self.depth_n}")
        if self.branching_M < 1:
            raise DomainError(f"branching_M must be >= 1, got {self.branching_M}")
        if self.euler_N is not None and self.euler_N < 1:
            raise DomainError(f"euler_N must be >= 1 when present, got {self.euler_N}")


@dataclass
class NodeTrace:
    """Record of one source-sum replicate, for structural assertions."""

    owner_depth: int
    level: int
    replicate: int
    sample_time: float
    x_id: int
    v_id: int
    time_pos: float
    x_pos_id: int
    time_neg: Optional[float] = None
    x_neg_id: Optional[int] = None


@dataclass
class Trace:
    """Instrumentation collected during one estimate when requested."""

    nodes: list[NodeTrace] = field(default_factory=list)
    g_blocks: list[tuple[int, int]] = field(default_factory=list)  # (owner_depth, samples)


def _check_scalar(val: float, what: str) -> float:
    val = float(val)
    if not np.isfinite(val):
        raise NonFiniteCoefficient(f"{what} returned a non-finite value")
    return val


def estimate(
    problem: PdeProblem,
    t: float,
    x: np.ndarray,
    config: MlpConfig,
    stream: StreamKey,
    counters: Optional[CostCounters] = None,
    trace: Optional[Trace] = None,
) -> Estimate:
    """One realisation of the depth-``config.depth_n`` estimator at (t, x).

    Pure function of (problem, t, x, config, stream): a fixed stream key
    reproduces the result bit-for-bit.  Raises
    :class:`RecursionBudgetExceeded` once the operation counters pass
    ``config.cost_cap``, and :class:`NonFiniteCoefficient` as soon as a user
    function emits NaN/Inf (silently averaging NaNs would destroy the
    statistics).
    """
    horizon = problem.horizon
    if not 0.0 <= t < horizon:
        raise DegenerateInterval(f"need 0 <= t < horizon, got t={t}, horizon={horizon}")
    x = np.asarray(x, dtype=float).reshape(problem.dim)
    if config.euler_N is None and problem.exact_sim is None:
        raise NotExactlySimulable(
            "exact-path scheme requested but the problem declares no constant coefficients"
        )
    counters = counters if counters is not None else CostCounters()
    sampler = TimeSampler(config.alpha)
    m_base = config.branching_M
    zero_grad = np.zeros(problem.dim)

    def simulate(t0: float, x0: np.ndarray, s: float, gen) -> tuple[np.ndarray, np.ndarray]:
        if config.euler_N is None:
            xs, vs = _exact_batch(problem, t0, x0, s, gen, 1, counters)
            return xs[0], vs[0]
        xs, _, vs, _ = _euler_batch(
            problem, t0, x0, s, config.euler_N, gen, 1, counters, need_flow=True
        )
        return xs[0], vs[0]

    def recurse(n: int, t0: float, x0: np.ndarray, key: StreamKey) -> tuple[float, np.ndarray]:
        if n == 0:
            return 0.0, zero_grad.copy()
        if counters.total() > config.cost_cap:
            raise RecursionBudgetExceeded(
                f"cost cap {config.cost_cap} exceeded at {counters.total()} operations"
            )
        g0 = _check_scalar(problem.terminal(x0), "terminal")
        counters.evals_g += 1
        m_n = m_base**n
        gsum_val = 0.0
        gsum_grad = zero_grad.copy()
        for i in range(1, m_n + 1):
            xs, vs = simulate(t0, x0, horizon, key.child(0, i, -1).generator())
            gi = _check_scalar(problem.terminal(xs), "terminal")
            counters.evals_g += 1
            bracket = gi - g0
            gsum_val += bracket
            gsum_grad += bracket * vs
        value = g0 + gsum_val / m_n
        gradient = gsum_grad / m_n
        if trace is not None:
            trace.g_blocks.append((n, m_n))

        for level in range(n):
            m_l = m_base ** (n - level)
            fsum_val = 0.0
            fsum_grad = zero_grad.copy()
            for i in range(1, m_l + 1):
                pos_key = key.child(level, i, 1)
                gen = pos_key.generator()
                xi = sampler.sample_xi(gen)
                counters.scalars_drawn += 1
                r = t0 + (horizon - t0) * xi
                while not t0 < r < horizon:
                    xi = sampler.sample_xi(gen)
                    counters.scalars_drawn += 1
                    r = t0 + (horizon - t0) * xi
                xs, vs = simulate(t0, x0, r, gen)
                weight = 1.0 / sampler.density(xi)
                u_val, u_grad = recurse(level, r, xs, pos_key)
                f_pos = _check_scalar(
                    problem.nonlinearity(r, xs, u_val, u_grad), "nonlinearity"
                )
                counters.evals_f += 1
                delta = f_pos
                record = None
                if trace is not None:
                    record = NodeTrace(
                        owner_depth=n, level=level, replicate=i, sample_time=r,
                        x_id=id(xs), v_id=id(vs), time_pos=r, x_pos_id=id(xs),
                    )
                if level >= 1:
                    neg_key = key.child(level, i, -1)
                    un_val, un_grad = recurse(level - 1, r, xs, neg_key)
                    f_neg = _check_scalar(
                        problem.nonlinearity(r, xs, un_val, un_grad), "nonlinearity"
                    )
                    counters.evals_f += 1
                    delta -= f_neg
                    if record is not None:
                        record.time_neg = r
                        record.x_neg_id = id(xs)
                if record is not None:
                    trace.nodes.append(record)
                fsum_val += weight * delta
                fsum_grad += (weight * delta) * vs
            scale = (horizon - t0) / m_l
            value += scale * fsum_val
            gradient += scale * fsum_grad
        return value, gradient

    val, grad = recurse(config.depth_n, float(t), x, stream)
    return Estimate(value=val, gradient=grad)


# ---------------------------------------------------------------------------
# Repeated-run aggregation


@dataclass
class RmseRow:
    """Aggregate of one (config, runs) cell of a study."""

    config: MlpConfig
    runs: int
    value_mean: float
    rmse_value: float
    rmse_gradient: float
    stderr_value: float
    stderr_gradient: float
    wall_ms: float
    counters: CostCounters
    values: np.ndarray
    gradients: np.ndarray


_WORKER_STATE: dict = {}


def _worker_init(problem, t, x, config, seed, config_index):
    _WORKER_STATE.update(
        problem=problem, t=t, x=x, config=config, seed=seed, config_index=config_index
    )


def _worker_run(run_index: int):
    st = _WORKER_STATE
    counters = CostCounters()
    key = root_key(st["seed"]).child(st["config_index"], run_index, 1)
    est = estimate(st["problem"], st["t"], st["x"], st["config"], key, counters)
    return est.value, est.gradient, counters


def resolve_workers(workers: Optional[int]) -> int:
    if workers is not None:
        return max(1, int(workers))
    env = os.environ.get("MLPICARD_WORKERS", "")
    if env.strip():
        return max(1, int(env))
    return os.cpu_count() or 1


def collect_runs(
    problem: PdeProblem,
    t: float,
    x: np.ndarray,
    config: MlpConfig,
    runs: int,
    seed: int,
    config_index: int = 0,
    workers: Optional[int] = None,
) -> tuple[np.ndarray, np.ndarray, CostCounters, float]:
    """Values, gradients and merged counters over independent top-level streams.

    Run r uses the key ``root(seed) -> child(config_index, r)``; results are
    gathered in run order, so the output is identical for every worker count.
    """
    if runs < 1:
        raise DomainError(f"runs must be >= 1, got {runs}")
    x = np.asarray(x, dtype=float).reshape(problem.dim)
    n_workers = resolve_workers(workers)
    t0 = time.perf_counter()
    results: list[tuple[float, np.ndarray, CostCounters]] = []
    if n_workers > 1 and runs > 1:
        import multiprocessing as mp
        from concurrent.futures import ProcessPoolExecutor

        try:
            ctx = mp.get_context("fork")
        except ValueError:  # pragma: no cover - non-POSIX fallback
            ctx = None
        if ctx is not None:
            with ProcessPoolExecutor(
                max_workers=min(n_workers, runs),
                mp_context=ctx,
                initializer=_worker_init,
                initargs=(problem, t, x, config, seed, config_index),
            ) as pool:
                results = list(pool.map(_worker_run, range(runs), chunksize=max(1, runs // (4 * n_workers))))
    if not results:
        _worker_init(problem, t, x, config, seed, config_index)
        results = [_worker_run(r) for r in range(runs)]
    wall_ms = (time.perf_counter() - t0) * 1e3
    values = np.array([r[0] for r in results])
    gradients = np.stack([r[1] for r in results])
    counters = CostCounters()
    for r in results:
        counters.merge(r[2])
    return values, gradients, counters, wall_ms


def _jackknife_rmse_se(sq_errors: np.ndarray) -> float:
    """Standard error of the RMSE statistic by leave-one-out jackknife."""
    n = sq_errors.shape[0]
    if n < 2:
        return float("nan")
    total = float(np.sum(sq_errors))
    loo = np.sqrt(np.maximum(total - sq_errors, 0.0) / (n - 1))
    return float(np.sqrt((n - 1) / n * np.sum((loo - loo.mean()) ** 2)))


def _resolve_reference(problem, t, x, reference) -> tuple[float, np.ndarray]:
    if reference is None:
        if problem.exact_solution is None:
            raise MissingReference(
                "no exact solution on the problem and no reference estimate supplied"
            )
        u_fn, w_fn = problem.exact_solution
        return float(u_fn(t, x)), np.asarray(w_fn(t, x), dtype=float).reshape(problem.dim)
    if isinstance(reference, Estimate):
        return reference.value, np.asarray(reference.gradient, dtype=float)
    if callable(reference):
        ref = reference(t, x)
        return ref.value, np.asarray(ref.gradient, dtype=float)
    raise MissingReference(f"unsupported reference specification: {reference!r}")


def rmse_study(
    problem: PdeProblem,
    t: float,
    x: np.ndarray,
    configs: Sequence[MlpConfig],
    runs: int,
    seed: int,
    reference: Union[None, Estimate, Callable] = None,
    workers: Optional[int] = None,
) -> list[RmseRow]:
    """Root-mean-square errors of repeated estimates against a reference.

    The reference is the problem's exact solution unless an explicit
    :class:`Estimate` (or callable ``(t, x) -> Estimate``) is supplied.
    Per config the row reports the RMSE of the value and of the gradient
    norm over ``runs`` independent top-level streams, with jackknife
    standard errors; deterministic given the seed.
    """
    ref_val, ref_grad = _resolve_reference(problem, t, x, reference)
    rows: list[RmseRow] = []
    for idx, config in enumerate(configs):
        values, gradients, counters, wall_ms = collect_runs(
            problem, t, x, config, runs, seed, config_index=idx, workers=workers
        )
        sq_val = (values - ref_val) ** 2
        sq_grad = np.sum((gradients - ref_grad) ** 2, axis=1)
        rows.append(
            RmseRow(
                config=config,
                runs=runs,
                value_mean=float(values.mean()),
                rmse_value=float(np.sqrt(sq_val.mean())),
                rmse_gradient=float(np.sqrt(sq_grad.mean())),
                stderr_value=_jackknife_rmse_se(sq_val),
                stderr_gradient=_jackknife_rmse_se(sq_grad),
                wall_ms=wall_ms,
                counters=counters,
                values=values,
                gradients=gradients,
            )
        )
    return rows
