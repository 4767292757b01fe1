"""Problem definitions and sampling-based assumption checks.

A :class:`PdeProblem` packages the data of a terminal-value problem

    du/dt + <grad_x u, mu(x)> + 1/2 Tr(sigma sigma^T Hess_x u)
        + f(t, x, u, grad_x u) = 0,        u(T, x) = g(x),

together with metadata (Lipschitz constant, growth exponent, ellipticity
floor) and optional structure used by exact samplers and closed-form
references.  The standing assumptions are global statements over all of R^d
and cannot be checked exhaustively; :func:`validate` probes them at sampled
points, which is enough to catch coding errors in problem definitions.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .errors import DomainError, NonFiniteCoefficient, SingularDiffusion

__all__ = [
    "AffineTerminal",
    "ConstantCoefficients",
    "ExpAffineTerminal",
    "GbmCoefficients",
    "PdeProblem",
    "ProbeReport",
    "ValidationReport",
    "fibonacci_sphere",
    "jacobian_fd",
    "validate",
]

_FD_EPS_CUBE_ROOT = float(np.finfo(float).eps) ** (1.0 / 3.0)


@dataclass(frozen=True)
class ConstantCoefficients:
    """Constant drift vector and diffusion matrix, enabling exact path sampling."""

    drift: np.ndarray
    diffusion: np.ndarray


@dataclass(frozen=True)
class AffineTerminal:
    """Terminal condition g(x) = <a, x> + b."""

    a: np.ndarray
    b: float = 0.0


@dataclass(frozen=True)
class ExpAffineTerminal:
    """Terminal condition g(x) = scale * exp(<a, x>)."""

    a: np.ndarray
    scale: float = 1.0


@dataclass(frozen=True)
class GbmCoefficients:
    """One-dimensional linear coefficients mu(x) = rate*x, sigma(x) = vol*x."""

    rate: float
    vol: float


def jacobian_fd(fn: Callable[[np.ndarray], np.ndarray], x: np.ndarray, h: float | None = None) -> np.ndarray:
    """Central-difference Jacobian of ``fn`` at ``x``.

    Column k is (fn(x + h e_k) - fn(x - h e_k)) / (2h).  The default step is
    eps^(1/3) * max(1, ||x||), the usual central-difference optimum.
    """
    x = np.asarray(x, dtype=float)
    if h is None:
        h = _FD_EPS_CUBE_ROOT * max(1.0, float(np.linalg.norm(x)))
    if h <= 0.0:
        raise DomainError(f"finite-difference step must be positive, got {h}")
    d = x.shape[0]
    cols = []
    for k in range(d):
        step = np.zeros(d)
        step[k] = h
        hi = np.asarray(fn(x + step), dtype=float)
        lo = np.asarray(fn(x - step), dtype=float)
        if not (np.all(np.isfinite(hi)) and np.all(np.isfinite(lo))):
            raise NonFiniteCoefficient(f"non-finite value while differencing at x={x}, k={k}")
        cols.append((hi - lo) / (2.0 * h))
    return np.stack([c.reshape(-1) for c in cols], axis=-1)


@dataclass(frozen=True)
class PdeProblem:
    """Coefficients, nonlinearity and terminal condition of one problem instance.

    Immutable after construction; all callables must be safe for concurrent
    invocation.  ``drift`` maps R^d -> R^d, ``diffusion`` maps R^d -> R^{dxd},
    ``nonlinearity`` is f(t, x, v, w) -> R and ``terminal`` is g(x) -> R.
    ``diffusion_jacobians`` returns a (d, d, d) stack whose j-th slice is the
    Jacobian of the j-th diffusion column.  When ``vectorized`` is set, every
    callable also accepts arrays with leading batch dimensions.
    """

    dim: int
    horizon: float
    drift: Callable
    diffusion: Callable
    nonlinearity: Callable
    terminal: Callable
    drift_jacobian: Optional[Callable] = None
    diffusion_jacobians: Optional[Callable] = None
    lipschitz_L: float = 1.0
    growth_p: float = 1.0
    ellipticity_eps: float = 1.0
    exact_solution: Optional[tuple[Callable, Callable]] = None
    exact_sim: Optional[ConstantCoefficients] = None
    zero_nonlinearity: bool = False
    terminal_form: Optional[Union[AffineTerminal, ExpAffineTerminal]] = None
    gbm: Optional[GbmCoefficients] = None
    vectorized: bool = False
    name: str = ""

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise DomainError(f"dim must be >= 1, got {self.dim}")
        if not self.horizon > 0.0:
            raise DomainError(f"horizon must be positive, got {self.horizon}")
        if not 0.0 < self.ellipticity_eps <= 1.0:
            raise DomainError(
                f"ellipticity_eps must lie in (0, 1], got {self.ellipticity_eps}"
            )
        if self.lipschitz_L < 0.0 or self.growth_p < 0.0:
            raise DomainError("lipschitz_L and growth_p must be non-negative")

    # -- Jacobian access with finite-difference fallback -------------------

    def drift_jacobian_at(self, x: np.ndarray) -> np.ndarray:
        if self.drift_jacobian is not None:
            return np.asarray(self.drift_jacobian(x), dtype=float).reshape(self.dim, self.dim)
        return jacobian_fd(self.drift, x)

    def diffusion_jacobians_at(self, x: np.ndarray) -> np.ndarray:
        """(d, d, d) array; slice j is the Jacobian of diffusion column j."""
        d = self.dim
        if self.diffusion_jacobians is not None:
            return np.asarray(self.diffusion_jacobians(x), dtype=float).reshape(d, d, d)
        out = np.empty((d, d, d))
        for j in range(d):
            out[j] = jacobian_fd(
                lambda y, _j=j: np.asarray(self.diffusion(y), dtype=float).reshape(d, d)[:, _j], x
            )
        return out


@dataclass(frozen=True)
class ProbeReport:
    """Assumption checks evaluated at a single probe point."""

    point: np.ndarray
    ellipticity_margin: float
    drift_jacobian_resid: float
    diffusion_jacobian_resid: float
    finite: bool
    issues: tuple[str, ...] = ()


@dataclass(frozen=True)
class ValidationReport:
    probes: tuple[ProbeReport, ...]
    passed: bool


def fibonacci_sphere(n: int) -> np.ndarray:
    """n quasi-uniform directions on the unit sphere in R^3 (golden-angle lattice)."""
    i = np.arange(n, dtype=float) + 0.5
    phi = np.arccos(1.0 - 2.0 * i / n)
    theta = np.pi * (1.0 + 5.0**0.5) * i
    return np.stack(
        [np.cos(theta) * np.sin(phi), np.sin(theta) * np.sin(phi), np.cos(phi)], axis=-1
    )


def _default_unit_dirs(dim: int, n_sphere: int = 64) -> np.ndarray:
    axes = np.eye(dim)
    if dim == 1 or dim > 8:
        # Quadratic form is homogeneous, so axes suffice when sphere sweeps get costly.
        return axes
    if dim == 3:
        extra = fibonacci_sphere(n_sphere)
    else:
        gen = np.random.Generator(np.random.Philox(np.random.SeedSequence(0x5D1AE)))
        raw = gen.standard_normal((n_sphere, dim))
        extra = raw / np.linalg.norm(raw, axis=1, keepdims=True)
    return np.concatenate([axes, extra], axis=0)


def _default_probe_points(dim: int) -> np.ndarray:
    # Deterministic, and avoids the origin where degenerate coefficients
    # (e.g. proportional ones) lose ellipticity trivially.
    gen = np.random.Generator(np.random.Philox(np.random.SeedSequence(0xA11CE)))
    pts = [np.ones(dim), -np.ones(dim), 0.5 * np.ones(dim)]
    pts.extend(0.25 + gen.standard_normal((8, dim)))
    return np.stack(pts)


def validate(
    problem: PdeProblem,
    probe_points: Optional[Sequence[np.ndarray]] = None,
    unit_dirs: Optional[Sequence[np.ndarray]] = None,
    raise_on_error: bool = False,
) -> ValidationReport:
    """Probe the standing assumptions at sampled points.

    Per probe point the report records the worst ellipticity margin
    min_y (y^T sigma sigma^T y - eps ||y||^2) over the supplied unit
    directions, the relative residual between analytic and finite-difference
    Jacobians (NaN when no analytic Jacobian is supplied), and whether every
    coefficient evaluation was finite.  Validation passes iff all margins are
    >= 0, all evaluations finite, and all supplied Jacobians agree with
    central differences to relative tolerance 1e-5.

    With ``raise_on_error`` the first offending point raises
    :class:`NonFiniteCoefficient` or :class:`SingularDiffusion` instead of
    being folded into the report.
    """
    from .paths import invert  # local import; paths has no runtime dependency on model

    if probe_points is None:
        probe_points = _default_probe_points(problem.dim)
    probe_points = [np.asarray(p, dtype=float) for p in probe_points]
    if len(probe_points) == 0:
        raise DomainError("probe_points must be nonempty")
    if unit_dirs is None:
        dirs = _default_unit_dirs(problem.dim)
    else:
        dirs = np.asarray(list(unit_dirs), dtype=float)
        norms = np.linalg.norm(dirs, axis=1)
        if not np.allclose(norms, 1.0, atol=1e-9):
            raise DomainError("unit_dirs must have unit norm")

    eps = problem.ellipticity_eps
    probes: list[ProbeReport] = []
    all_ok = True
    for x in probe_points:
        issues: list[str] = []
        finite = True
        margin = np.nan
        mu_resid = np.nan
        sig_resid = np.nan
        try:
            mu = np.asarray(problem.drift(x), dtype=float).reshape(problem.dim)
            sig = np.asarray(problem.diffusion(x), dtype=float).reshape(problem.dim, problem.dim)
            gval = float(problem.terminal(x))
            fval = float(problem.nonlinearity(0.0, x, 0.0, np.zeros(problem.dim)))
            vals = np.concatenate([mu, sig.reshape(-1), [gval, fval]])
            if not np.all(np.isfinite(vals)):
                finite = False
                issues.append("non-finite coefficient value")
                if raise_on_error:
                    raise NonFiniteCoefficient(f"non-finite coefficient at x={x}")
            if finite:
                ssT = sig @ sig.T
                quad = np.einsum("ki,ij,kj->k", dirs, ssT, dirs)
                margin = float(np.min(quad - eps * np.einsum("ki,ki->k", dirs, dirs)))
                # Exact-boundary cases (margin 0) land within rounding noise.
                if margin < -1e-12 * max(1.0, float(np.linalg.norm(ssT))):
                    issues.append(f"ellipticity margin {margin:.3e} < 0")
                try:
                    invert(sig)
                except SingularDiffusion:
                    if raise_on_error:
                        raise
                    issues.append("diffusion not invertible")
                if problem.drift_jacobian is not None:
                    ana = problem.drift_jacobian_at(x)
                    fd = jacobian_fd(problem.drift, x)
                    mu_resid = float(
                        np.linalg.norm(ana - fd) / max(1.0, np.linalg.norm(ana))
                    )
                    if mu_resid > 1e-5:
                        issues.append(f"drift Jacobian residual {mu_resid:.3e} > 1e-5")
                if problem.diffusion_jacobians is not None:
                    ana = problem.diffusion_jacobians_at(x)
                    fd = np.empty_like(ana)
                    for j in range(problem.dim):
                        fd[j] = jacobian_fd(
                            lambda y, _j=j: np.asarray(problem.diffusion(y), dtype=float)
                            .reshape(problem.dim, problem.dim)[:, _j],
                            x,
                        )
                    sig_resid = float(
                        np.linalg.norm((ana - fd).reshape(-1))
                        / max(1.0, np.linalg.norm(ana.reshape(-1)))
                    )
                    if sig_resid > 1e-5:
                        issues.append(f"diffusion Jacobian residual {sig_resid:.3e} > 1e-5")
        except (NonFiniteCoefficient, SingularDiffusion):
            raise
        except Exception as exc:  # user callables may fail arbitrarily
            if raise_on_error:
                raise NonFiniteCoefficient(str(exc)) from exc
            finite = False
            issues.append(f"evaluation failed: {exc}")
        ok = finite and not issues
        all_ok = all_ok and ok
        probes.append(
            ProbeReport(
                point=x,
                ellipticity_margin=margin,
                drift_jacobian_resid=mu_resid,
                diffusion_jacobian_resid=sig_resid,
                finite=finite,
                issues=tuple(issues),
            )
        )
    return ValidationReport(probes=tuple(probes), passed=all_ok)
