"""Reference solvers: closed forms and a brute-force nested Picard iteration.

The nested solver approximates the fixed-point map

    Phi(v)(t, x) = E[ g(X_T) (1, V_T) ]
                   + int_t^T E[ f(s, X_s, v(s, X_s)) (1, V_s) ] ds

by Monte Carlo for the expectations and Gauss-Legendre quadrature for the
time integral, iterated K times from v_0 = 0.  The quadrature runs in the
distribution space of the interior-time law and re-weights by the
reciprocal density, so the endpoint singularity of the gradient weight is
tamed exactly as in the main estimator, and no node touches t or T.  Nested
values v_{k-1}(s, X_s) come from recursive calls over the flattened batch of
sample points; cost grows exponentially in K, which is why this is the slow
trusted oracle, usable at desk scale only (d <= 3, K <= 4).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .cost import CostCounters
from .errors import (
    BudgetExceeded,
    DegenerateInterval,
    NonFiniteCoefficient,
    UnsupportedTerminal,
)
from .mlp import Estimate
from .model import AffineTerminal, ExpAffineTerminal, PdeProblem
from .paths import _euler_batch, invert
from .sampler import StreamKey, TimeSampler

__all__ = ["ORACLE_NAMESPACE", "PicardConfig", "closed_form_linear", "picard_reference"]

# First-triple level reserved for oracle streams; estimator keys only ever
# use levels below their (small) depth, so the namespaces never collide.
ORACLE_NAMESPACE = 1 << 20


@dataclass(frozen=True)
class PicardConfig:
    """Nested-iteration parameters.

    ``outer_samples`` paths back each expectation at the top iteration;
    deeper iterations use ``inner_samples`` (their noise enters the final
    average once more per nesting level, so modest counts suffice).
    ``euler_N`` only matters for problems without constant coefficients.
    """

    iterations_K: int
    outer_samples: int
    time_quadrature_nodes: int = 6
    euler_N: int = 16
    inner_samples: int = 12
    alpha: float = 0.5
    max_paths: int = 100_000_000

    def __post_init__(self) -> None:
        if min(self.iterations_K, self.outer_samples, self.time_quadrature_nodes,
               self.euler_N, self.inner_samples) < 1:
            raise BudgetExceeded("all nested-iteration parameters must be positive")


def closed_form_linear(problem: PdeProblem, t: float, x: np.ndarray) -> Estimate:
    """Exact (value, gradient) by Gaussian integration for linear problems.

    Supported: constant coefficients with affine or exponential-affine
    terminal, and one-dimensional linear (GBM-type) coefficients with affine
    terminal; the source must be identically zero.
    """
    if not problem.zero_nonlinearity:
        raise UnsupportedTerminal("closed form requires an identically zero source")
    x = np.asarray(x, dtype=float).reshape(problem.dim)
    tau = problem.horizon - t
    form = problem.terminal_form
    if problem.exact_sim is not None and isinstance(form, AffineTerminal):
        mean = x + np.asarray(problem.exact_sim.drift, dtype=float) * tau
        return Estimate(value=float(form.a @ mean + form.b), gradient=form.a.copy())
    if problem.exact_sim is not None and isinstance(form, ExpAffineTerminal):
        sig = np.asarray(problem.exact_sim.diffusion, dtype=float)
        mean = x + np.asarray(problem.exact_sim.drift, dtype=float) * tau
        quad = float(form.a @ (sig @ sig.T) @ form.a)
        value = form.scale * float(np.exp(form.a @ mean + 0.5 * quad * tau))
        return Estimate(value=value, gradient=form.a * value)
    if problem.gbm is not None and isinstance(form, AffineTerminal):
        growth = float(np.exp(problem.gbm.rate * tau))
        return Estimate(
            value=float(form.a[0] * x[0] * growth + form.b),
            gradient=np.array([form.a[0] * growth]),
        )
    raise UnsupportedTerminal(
        f"no closed form for problem {problem.name!r} with terminal {form!r}"
    )


def _eval_terminal(problem: PdeProblem, pts: np.ndarray) -> np.ndarray:
    if problem.vectorized:
        out = np.asarray(problem.terminal(pts), dtype=float).reshape(pts.shape[0])
    else:
        out = np.array([float(problem.terminal(p)) for p in pts])
    if not np.all(np.isfinite(out)):
        raise NonFiniteCoefficient("terminal returned non-finite values")
    return out


def _eval_source(problem: PdeProblem, times, pts, vals, grads) -> np.ndarray:
    if problem.vectorized:
        out = np.asarray(problem.nonlinearity(times, pts, vals, grads), dtype=float)
        out = out.reshape(pts.shape[0])
    else:
        out = np.array([
            float(problem.nonlinearity(times[i], pts[i], vals[i], grads[i]))
            for i in range(pts.shape[0])
        ])
    if not np.all(np.isfinite(out)):
        raise NonFiniteCoefficient("source returned non-finite values")
    return out


def _sample_pairs(problem, t_vec, s_vec, x_mat, m, gen, euler_n, counters):
    """(X, V) samples at per-row end times; shapes (B, m, d) each."""
    b, d = x_mat.shape
    if problem.exact_sim is not None:
        tau = (s_vec - t_vec)[:, None, None]
        drift = np.asarray(problem.exact_sim.drift, dtype=float)
        sig = np.asarray(problem.exact_sim.diffusion, dtype=float)
        dw = gen.standard_normal((b, m, d)) * np.sqrt(tau)
        xs = x_mat[:, None, :] + drift[None, None, :] * tau + np.einsum("ij,bmj->bmi", sig, dw)
        vs = np.einsum("ji,bmj->bmi", invert(sig), dw) / tau
        if counters is not None:
            counters.evals_mu += b * m
            counters.evals_sigma += b * m
            counters.scalars_drawn += b * m * d
        return xs, vs
    xs = np.empty((b, m, d))
    vs = np.empty((b, m, d))
    for i in range(b):
        xe, _, ve, _ = _euler_batch(
            problem, float(t_vec[i]), x_mat[i], float(s_vec[i]), euler_n, gen, m,
            counters, need_flow=True,
        )
        xs[i] = xe
        vs[i] = ve
    return xs, vs


def picard_reference(
    problem: PdeProblem,
    t: float,
    x: np.ndarray,
    config: PicardConfig,
    stream: StreamKey,
    counters: CostCounters | None = None,
) -> Estimate:
    """Monte Carlo approximation of the K-th fixed-point iterate at (t, x).

    Randomness lives under a dedicated namespace of the supplied key, so the
    oracle never shares draws with an estimator seeded from the same root.
    """
    if problem.dim > 3 or config.iterations_K > 4:
        raise BudgetExceeded(
            f"nested reference is desk-scale only (d <= 3, K <= 4); "
            f"got d={problem.dim}, K={config.iterations_K}"
        )
    horizon = problem.horizon
    if not 0.0 <= t < horizon:
        raise DegenerateInterval(f"need 0 <= t < horizon, got t={t}")
    x = np.asarray(x, dtype=float).reshape(problem.dim)
    sampler = TimeSampler(config.alpha)
    d = problem.dim

    # Gauss-Legendre in the distribution space of the time law: nodes are law
    # quantiles, weights carry the reciprocal density.
    y, wy = np.polynomial.legendre.leggauss(config.time_quadrature_nodes)
    u_nodes = 0.5 * (y + 1.0)
    u_weights = 0.5 * wy
    z_nodes = stats.beta.ppf(u_nodes, sampler.shape, sampler.shape)
    w_eff = u_weights / sampler.density(z_nodes)

    key = stream.child(ORACLE_NAMESPACE, 0, 1)
    paths_used = [0]

    def charge(n_paths: int) -> None:
        paths_used[0] += n_paths
        if paths_used[0] > config.max_paths:
            raise BudgetExceeded(f"nested reference exceeded {config.max_paths} path samples")

    def recurse(k: int, t_vec: np.ndarray, x_mat: np.ndarray, node_key: StreamKey) -> np.ndarray:
        b = t_vec.shape[0]
        if k == 0:
            return np.zeros((b, 1 + d))
        m = config.outer_samples if k == config.iterations_K else config.inner_samples
        charge(b * m)
        gen = node_key.child(k, 0, 1).generator()
        xs, vs = _sample_pairs(
            problem, t_vec, np.full(b, horizon), x_mat, m, gen, config.euler_N, counters
        )
        gv = _eval_terminal(problem, xs.reshape(-1, d)).reshape(b, m)
        if counters is not None:
            counters.evals_g += b * m
        out = np.empty((b, 1 + d))
        out[:, 0] = gv.mean(axis=1)
        out[:, 1:] = (gv[:, :, None] * vs).mean(axis=1)
        if problem.zero_nonlinearity:
            return out
        for q, (z_q, w_q) in enumerate(zip(z_nodes, w_eff)):
            s_q = t_vec + (horizon - t_vec) * z_q
            charge(b * m)
            gen_q = node_key.child(k, q + 1, 1).generator()
            xq, vq = _sample_pairs(problem, t_vec, s_q, x_mat, m, gen_q, config.euler_N, counters)
            t_rep = np.repeat(s_q, m)
            x_flat = xq.reshape(-1, d)
            if k == 1:
                inner_val = np.zeros(b * m)
                inner_grad = np.zeros((b * m, d))
            else:
                inner = recurse(k - 1, t_rep, x_flat, node_key.child(k, q + 1, -1))
                inner_val = inner[:, 0]
                inner_grad = inner[:, 1:]
            fv = _eval_source(problem, t_rep, x_flat, inner_val, inner_grad).reshape(b, m)
            if counters is not None:
                counters.evals_f += b * m
            scale = (horizon - t_vec) * w_q
            out[:, 0] += scale * fv.mean(axis=1)
            out[:, 1:] += scale[:, None] * (fv[:, :, None] * vq).mean(axis=1)
        return out

    result = recurse(config.iterations_K, np.array([float(t)]), x[None, :], key)
    return Estimate(value=float(result[0, 0]), gradient=result[0, 1:].copy())
