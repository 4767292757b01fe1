"""Path simulation: state, derivative flow and gradient weight.

One Euler trajectory carries three coupled objects driven by the same
Brownian increments:

* the state ``X`` (explicit scheme with coefficients frozen at the last grid
  point),
* the derivative flow ``D`` in R^{dxd}, column k approximating dX_s/dx_k,
  solving the linearised update with the drift/diffusion Jacobians evaluated
  at the frozen state,
* the running integral ``V`` accumulating (sigma^{-1} D)^T dW, divided once
  by (s - t) at the end; pairing a payoff sample with ``V`` turns it into a
  gradient sample.

The time grid has spacing (horizon - t) / n_steps and is truncated at the
query time s with one partial final step.  All updates in a step use the
pre-step state, flow and coefficients.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Optional

import numpy as np
from scipy import linalg as _slinalg

from .errors import (
    DegenerateInterval,
    DomainError,
    NonFiniteCoefficient,
    NotExactlySimulable,
    SingularDiffusion,
)
from .sampler import StreamKey

if TYPE_CHECKING:  # pragma: no cover
    from .cost import CostCounters
    from .model import PdeProblem

__all__ = [
    "EulerGrid",
    "PathState",
    "euler_terminal_batch",
    "exact_state_batch",
    "invert",
    "simulate_euler",
    "simulate_exact",
]

_PIVOT_RTOL = 1e-12


@dataclass(frozen=True)
class PathState:
    """Joint state of one trajectory at the query time."""

    x_end: np.ndarray   # (d,)
    d_end: np.ndarray   # (d, d); column k = sensitivity to x_k
    v_end: np.ndarray   # (d,)


@dataclass(frozen=True)
class EulerGrid:
    """Step layout for a trajectory from t to s on the grid over [t, horizon].

    ``n_steps_full`` full steps of length (horizon - t) / n_steps precede one
    partial step of length ``last_dt`` (zero when s falls on a grid point, in
    which case the partial step is skipped and draws nothing).
    """

    t: float
    s: float
    n_steps_full: int
    last_dt: float
    full_dt: float

    @classmethod
    def build(cls, t: float, s: float, horizon: float, n_steps: int) -> "EulerGrid":
        if n_steps < 1:
            raise DomainError(f"n_steps must be >= 1, got {n_steps}")
        if not t < s <= horizon:
            raise DegenerateInterval(f"need t < s <= horizon, got t={t}, s={s}, horizon={horizon}")
        h = (horizon - t) / n_steps
        n_full = int(np.floor((s - t) / h))
        n_full = min(max(n_full, 0), n_steps)
        while n_full > 0 and t + n_full * h > s:
            n_full -= 1
        while n_full < n_steps and t + (n_full + 1) * h <= s:
            n_full += 1
        last_dt = s - (t + n_full * h)
        if last_dt < 0.0:
            last_dt = 0.0
        return cls(t=t, s=s, n_steps_full=n_full, last_dt=last_dt, full_dt=h)

    def step_sizes(self) -> np.ndarray:
        full = np.full(self.n_steps_full, self.full_dt)
        if self.last_dt > 0.0:
            return np.concatenate([full, [self.last_dt]])
        return full


def invert(matrix: np.ndarray) -> np.ndarray:
    """Inverse via LU factorisation with partial pivoting.

    Raises :class:`SingularDiffusion` when a pivot magnitude falls below
    1e-12 times the Frobenius norm of the input.  The result satisfies
    ||A A^{-1} - I||_F < 1e-10 * d for reasonably conditioned inputs.
    """
    a = np.asarray(matrix, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DomainError(f"invert expects a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NonFiniteCoefficient("matrix with non-finite entries")
    scale = float(np.linalg.norm(a))
    if scale == 0.0:
        raise SingularDiffusion("zero matrix")
    try:
        lu, piv = _slinalg.lu_factor(a, check_finite=False)
    except _slinalg.LinAlgError as exc:
        raise SingularDiffusion(str(exc)) from exc
    pivots = np.abs(np.diag(lu))
    if np.min(pivots) < _PIVOT_RTOL * scale:
        raise SingularDiffusion(
            f"pivot {np.min(pivots):.3e} below {_PIVOT_RTOL:.0e} * ||A|| = {_PIVOT_RTOL * scale:.3e}"
        )
    return _slinalg.lu_solve((lu, piv), np.eye(a.shape[0]), check_finite=False)


def _matvec(mats: np.ndarray, vecs: np.ndarray) -> np.ndarray:
    # Single shared contraction so per-path and batched runs agree bitwise.
    return np.einsum("...ij,...j->...i", mats, vecs)


def _invert_rows(mats: np.ndarray) -> np.ndarray:
    if mats.shape[-1] == 1:
        if np.any(mats[..., 0, 0] == 0.0):
            raise SingularDiffusion("scalar diffusion vanished along the path")
        return 1.0 / mats
    out = np.empty_like(mats)
    for i in range(mats.shape[0]):
        out[i] = invert(mats[i])
    return out


def _eval_vector(problem, fn, x_batch: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if problem.vectorized:
        out = np.asarray(fn(x_batch), dtype=float)
        return np.broadcast_to(out, x_batch.shape[:1] + shape).reshape(x_batch.shape[:1] + shape)
    rows = [np.asarray(fn(row), dtype=float).reshape(shape) for row in x_batch]
    return np.stack(rows)


def _eval_drift_jac(problem, x_batch: np.ndarray) -> np.ndarray:
    d = problem.dim
    if problem.vectorized and problem.drift_jacobian is not None:
        out = np.asarray(problem.drift_jacobian(x_batch), dtype=float)
        return np.broadcast_to(out, (x_batch.shape[0], d, d)).reshape(x_batch.shape[0], d, d)
    return np.stack([problem.drift_jacobian_at(row) for row in x_batch])


def _eval_diffusion_jacs(problem, x_batch: np.ndarray) -> np.ndarray:
    d = problem.dim
    if problem.vectorized and problem.diffusion_jacobians is not None:
        out = np.asarray(problem.diffusion_jacobians(x_batch), dtype=float)
        return np.broadcast_to(out, (x_batch.shape[0], d, d, d)).reshape(x_batch.shape[0], d, d, d)
    return np.stack([problem.diffusion_jacobians_at(row) for row in x_batch])


def _require_finite(arr: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise NonFiniteCoefficient(f"non-finite {what} along the path")


def _euler_batch(
    problem: "PdeProblem",
    t: float,
    x0: np.ndarray,
    s: float,
    n_steps: int,
    gen: np.random.Generator,
    n_paths: int,
    counters: Optional["CostCounters"],
    need_flow: bool,
    collect_wsum: bool = False,
):
    """Shared Euler kernel over a batch of paths driven by one stream.

    Returns (X, D, V, Wsum); D and V are None when ``need_flow`` is off and
    Wsum is None unless requested.
    """
    d = problem.dim
    x0 = np.asarray(x0, dtype=float)
    x = np.empty((n_paths, d))
    x[:] = x0
    grid = EulerGrid.build(t, s, problem.horizon, n_steps)
    dts = grid.step_sizes()
    flow = np.broadcast_to(np.eye(d), (n_paths, d, d)).copy() if need_flow else None
    vsum = np.zeros((n_paths, d)) if need_flow else None
    wsum = np.zeros((n_paths, d)) if collect_wsum else None

    # sigma is constant for exactly simulable problems, so its inverse can be
    # hoisted out of the step loop.
    const_sig_inv = None
    if need_flow and problem.exact_sim is not None:
        const_sig_inv = invert(np.asarray(problem.exact_sim.diffusion, dtype=float))[None, :, :]

    for dt in dts:
        dw = gen.standard_normal((n_paths, d)) * np.sqrt(dt)
        mu = _eval_vector(problem, problem.drift, x, (d,))
        sig = _eval_vector(problem, problem.diffusion, x, (d, d))
        _require_finite(mu, "drift")
        _require_finite(sig, "diffusion")
        if counters is not None:
            counters.evals_mu += n_paths
            counters.evals_sigma += n_paths
            counters.scalars_drawn += n_paths * d
        if need_flow:
            sig_inv = const_sig_inv if const_sig_inv is not None else _invert_rows(sig)
            a = np.matmul(sig_inv, flow)
            vsum += _matvec(np.swapaxes(a, -1, -2), dw)
            jac_mu = _eval_drift_jac(problem, x)
            jac_sig = _eval_diffusion_jacs(problem, x)
            if counters is not None:
                counters.evals_mu += n_paths
                counters.evals_sigma += n_paths
            flow = flow + np.matmul(jac_mu, flow) * dt + np.einsum(
                "pjkl,plm,pj->pkm", jac_sig, flow, dw
            )
        x = x + mu * dt + _matvec(sig, dw)
        if collect_wsum:
            wsum = wsum + dw
    _require_finite(x, "state")
    v = vsum / (s - t) if need_flow else None
    return x, flow, v, wsum


def _exact_batch(
    problem: "PdeProblem",
    t: float,
    x0: np.ndarray,
    s: float,
    gen: np.random.Generator,
    n_paths: int,
    counters: Optional["CostCounters"],
):
    """Exact constant-coefficient sampler; mirrors the one-step Euler arithmetic."""
    cc = problem.exact_sim
    if cc is None:
        raise NotExactlySimulable(f"problem {problem.name!r} declares no exact sampler")
    d = problem.dim
    tau = s - t
    drift = np.asarray(cc.drift, dtype=float)
    sig = np.asarray(cc.diffusion, dtype=float)
    dw = gen.standard_normal((n_paths, d)) * np.sqrt(tau)
    x = np.asarray(x0, dtype=float) + drift * tau + _matvec(sig[None, :, :], dw)
    sig_inv = invert(sig)
    v = _matvec(np.swapaxes(sig_inv, -1, -2)[None, :, :], dw) / tau
    if counters is not None:
        counters.evals_mu += n_paths
        counters.evals_sigma += n_paths
        counters.scalars_drawn += n_paths * d
    return x, v


def _resolve_gen(stream) -> np.random.Generator:
    return stream.generator() if isinstance(stream, StreamKey) else stream


def _init_state(problem: "PdeProblem", x: np.ndarray) -> PathState:
    d = problem.dim
    x = np.asarray(x, dtype=float).reshape(d)
    return PathState(x_end=x.copy(), d_end=np.eye(d), v_end=np.zeros(d))


def simulate_euler(
    problem: "PdeProblem",
    t: float,
    x: np.ndarray,
    s: float,
    n_steps: int,
    stream,
    counters: Optional["CostCounters"] = None,
) -> PathState:
    """Run one Euler trajectory from (t, x) to time s with the full flow triple.

    ``stream`` may be a :class:`StreamKey` or an already-positioned
    generator; each grid step consumes one length-d standard normal vector.
    Querying s == t returns the initial state (x, I, 0) without drawing.
    """
    if s == t:
        return _init_state(problem, x)
    gen = _resolve_gen(stream)
    x_end, flow, v, _ = _euler_batch(
        problem, t, np.asarray(x, dtype=float).reshape(problem.dim), s, n_steps, gen, 1,
        counters, need_flow=True,
    )
    return PathState(x_end=x_end[0], d_end=flow[0], v_end=v[0])


def simulate_exact(
    problem: "PdeProblem",
    t: float,
    x: np.ndarray,
    s: float,
    stream,
    counters: Optional["CostCounters"] = None,
) -> PathState:
    """Sample the exact constant-coefficient state and gradient weight at time s.

    Requires the problem to declare :class:`ConstantCoefficients`; then
    X = x + mu (s-t) + sigma dW and V = sigma^{-T} dW / (s-t) with
    dW = sqrt(s-t) G, matching one Euler step bit-for-bit on a shared stream.
    """
    if s == t:
        return _init_state(problem, x)
    if not t < s <= problem.horizon:
        raise DegenerateInterval(f"need t < s <= horizon, got t={t}, s={s}")
    gen = _resolve_gen(stream)
    x_end, v = _exact_batch(
        problem, t, np.asarray(x, dtype=float).reshape(problem.dim), s, gen, 1, counters
    )
    return PathState(x_end=x_end[0], d_end=np.eye(problem.dim), v_end=v[0])


def euler_terminal_batch(
    problem: "PdeProblem",
    t: float,
    x: np.ndarray,
    s: float,
    n_steps: int,
    stream,
    n_paths: int,
    counters: Optional["CostCounters"] = None,
    return_brownian_sum: bool = False,
):
    """Vectorised Euler endpoint states for ``n_paths`` trajectories.

    All paths share one stream (one (n_paths, d) normal block per step).  The
    flow and gradient weight are skipped; optionally returns the summed
    Brownian increments per path for coupling against exact solutions.
    """
    gen = _resolve_gen(stream)
    x_end, _, _, wsum = _euler_batch(
        problem, t, np.asarray(x, dtype=float), s, n_steps, gen, n_paths,
        counters, need_flow=False, collect_wsum=return_brownian_sum,
    )
    return (x_end, wsum) if return_brownian_sum else x_end


def euler_state_batch(
    problem: "PdeProblem",
    t: float,
    x: np.ndarray,
    s: float,
    n_steps: int,
    stream,
    n_paths: int,
    counters: Optional["CostCounters"] = None,
):
    """Vectorised Euler endpoint (X, V) pairs for ``n_paths`` trajectories."""
    gen = _resolve_gen(stream)
    x_end, _, v, _ = _euler_batch(
        problem, t, np.asarray(x, dtype=float), s, n_steps, gen, n_paths,
        counters, need_flow=True,
    )
    return x_end, v


def exact_state_batch(
    problem: "PdeProblem",
    t: float,
    x: np.ndarray,
    s: float,
    stream,
    n_paths: int,
    counters: Optional["CostCounters"] = None,
):
    """Vectorised exact (X, V) pairs for constant-coefficient problems."""
    if not t < s <= problem.horizon:
        raise DegenerateInterval(f"need t < s <= horizon, got t={t}, s={s}")
    gen = _resolve_gen(stream)
    return _exact_batch(problem, t, np.asarray(x, dtype=float), s, gen, n_paths, counters)
