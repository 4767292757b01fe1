"""Built-in benchmark problems, selectable by string key from the CLI.

All registry problems mark ``vectorized=True``: their coefficient callables
accept arrays with leading batch dimensions, which the batched path kernels
and the nested-sampling reference solver exploit.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError
from .model import (
    AffineTerminal,
    ConstantCoefficients,
    GbmCoefficients,
    PdeProblem,
)

__all__ = [
    "REGISTRY",
    "gbm_linear_g",
    "heat_allen_cahn",
    "linear_gaussian",
    "make_problem",
    "manufactured_gradient",
]


def linear_gaussian(dim: int = 3, horizon: float = 1.0, slope: np.ndarray | None = None) -> PdeProblem:
    """Driftless unit-diffusion problem with affine terminal <a, x> and zero source.

    The value is the martingale <a, x> at every time and the gradient is a,
    so the problem doubles as an unbiasedness fixture for both estimator
    components.  Default slope is a = (1, 2, ..., d).
    """
    a = np.arange(1.0, dim + 1.0) if slope is None else np.asarray(slope, dtype=float)
    if a.shape != (dim,):
        raise ConfigError(f"slope must have shape ({dim},), got {a.shape}")
    eye = np.eye(dim)
    zeros_jac = np.zeros((dim, dim))
    zeros_dj = np.zeros((dim, dim, dim))
    return PdeProblem(
        dim=dim,
        horizon=horizon,
        drift=lambda x: np.zeros(np.shape(x)),
        diffusion=lambda x: eye,
        drift_jacobian=lambda x: zeros_jac,
        diffusion_jacobians=lambda x: zeros_dj,
        nonlinearity=lambda t, x, v, w: 0.0 * v,
        terminal=lambda x: np.asarray(x) @ a,
        lipschitz_L=float(a @ a),
        growth_p=1.0,
        ellipticity_eps=1.0,
        exact_solution=(
            lambda t, x: float(np.asarray(x) @ a),
            lambda t, x: a.copy(),
        ),
        exact_sim=ConstantCoefficients(drift=np.zeros(dim), diffusion=eye),
        zero_nonlinearity=True,
        terminal_form=AffineTerminal(a=a, b=0.0),
        vectorized=True,
        name="linear-gaussian",
    )


def gbm_linear_g(horizon: float = 1.0, rate: float = 0.06, vol: float = 0.2) -> PdeProblem:
    """One-dimensional geometric Brownian motion with identity terminal g(x) = x.

    Linear coefficients mu(x) = rate*x and sigma(x) = vol*x, so paths must be
    discretised; the value x * exp(rate * (horizon - t)) is known in closed
    form.  Ellipticity degenerates at the origin, so validation probes should
    stay away from x = 0 (the defaults do).
    """
    jac_mu = np.array([[rate]])
    jac_sig = np.array([[[vol]]])
    return PdeProblem(
        dim=1,
        horizon=horizon,
        drift=lambda x: rate * np.asarray(x, dtype=float),
        diffusion=lambda x: vol * np.asarray(x, dtype=float)[..., None],
        drift_jacobian=lambda x: jac_mu,
        diffusion_jacobians=lambda x: jac_sig,
        nonlinearity=lambda t, x, v, w: 0.0 * v,
        terminal=lambda x: np.asarray(x, dtype=float) @ np.ones(1),
        lipschitz_L=float(max(rate, vol) ** 2 + 1.0),
        growth_p=1.0,
        ellipticity_eps=min(1.0, 1e-6),
        exact_solution=(
            lambda t, x: float(np.asarray(x).reshape(1)[0] * np.exp(rate * (horizon - t))),
            lambda t, x: np.array([np.exp(rate * (horizon - t))]),
        ),
        zero_nonlinearity=True,
        terminal_form=AffineTerminal(a=np.ones(1), b=0.0),
        gbm=GbmCoefficients(rate=rate, vol=vol),
        vectorized=True,
        name="gbm-linear-g",
    )


def manufactured_gradient(dim: int = 2, horizon: float = 1.0, coupling: float = 0.25) -> PdeProblem:
    """Gradient-dependent source with a manufactured exact solution.

    With u(t, x) = exp(t - horizon) * sum(x) the choice

        f(t, x, v, w) = coupling * (sum(w) - v - dim * exp(t - horizon))
                        - (1 - coupling) * exp(t - horizon) * sum(x)

    makes u satisfy du/dt + 1/2 tr(Hess u) + f(t, x, u, grad u) = 0 for zero
    drift and unit diffusion: du/dt = u, sum(grad u) = dim * e^(t-T), so f
    evaluates to -u along the solution for any coupling.  The coupling
    controls the sensitivity of f to (v, w); the default keeps the
    value/gradient feedback contractive over a unit horizon, so successive
    fixed-point iterates converge at desk-scale depths instead of riding the
    non-contractive transient.  Terminal condition g(x) = sum(x).
    """
    eye = np.eye(dim)
    zeros_jac = np.zeros((dim, dim))
    zeros_dj = np.zeros((dim, dim, dim))
    tshift = float(horizon)
    kappa = float(coupling)

    def source(t, x, v, w):
        decay = np.exp(np.asarray(t) - tshift)
        lin = np.sum(np.asarray(x, dtype=float), axis=-1)
        return kappa * (np.sum(w, axis=-1) - v - dim * decay) - (1.0 - kappa) * decay * lin

    return PdeProblem(
        dim=dim,
        horizon=horizon,
        drift=lambda x: np.zeros(np.shape(x)),
        diffusion=lambda x: eye,
        drift_jacobian=lambda x: zeros_jac,
        diffusion_jacobians=lambda x: zeros_dj,
        nonlinearity=source,
        terminal=lambda x: np.sum(np.asarray(x, dtype=float), axis=-1),
        lipschitz_L=float(dim + 1),
        growth_p=1.0,
        ellipticity_eps=1.0,
        exact_solution=(
            lambda t, x: float(np.exp(t - tshift) * np.sum(x)),
            lambda t, x: np.exp(t - tshift) * np.ones(dim),
        ),
        exact_sim=ConstantCoefficients(drift=np.zeros(dim), diffusion=eye),
        zero_nonlinearity=False,
        vectorized=True,
        name="manufactured-gradient",
    )


def heat_allen_cahn(dim: int = 2, horizon: float = 0.3) -> PdeProblem:
    """Heat equation with the bistable cubic source f(v) = v - v^3.

    No exact solution is attached; the problem exercises a genuinely
    nonlinear source on constant coefficients at desk scale.
    """
    eye = np.eye(dim)
    zeros_jac = np.zeros((dim, dim))
    zeros_dj = np.zeros((dim, dim, dim))
    return PdeProblem(
        dim=dim,
        horizon=horizon,
        drift=lambda x: np.zeros(np.shape(x)),
        diffusion=lambda x: eye,
        drift_jacobian=lambda x: zeros_jac,
        diffusion_jacobians=lambda x: zeros_dj,
        nonlinearity=lambda t, x, v, w: v - v**3,
        terminal=lambda x: 1.0 / (2.0 + 0.4 * np.sum(np.asarray(x, dtype=float) ** 2, axis=-1)),
        lipschitz_L=4.0,
        growth_p=1.0,
        ellipticity_eps=1.0,
        exact_sim=ConstantCoefficients(drift=np.zeros(dim), diffusion=eye),
        zero_nonlinearity=False,
        vectorized=True,
        name="heat-allen-cahn-type",
    )


REGISTRY = {
    "linear-gaussian": linear_gaussian,
    "gbm-linear-g": gbm_linear_g,
    "manufactured-gradient": manufactured_gradient,
    "heat-allen-cahn-type": heat_allen_cahn,
}


def make_problem(key: str, dim: int | None = None, horizon: float | None = None, **kwargs) -> PdeProblem:
    """Instantiate a built-in problem by registry key."""
    if key not in REGISTRY:
        raise ConfigError(f"unknown problem {key!r}; choose from {sorted(REGISTRY)}")
    factory = REGISTRY[key]
    if key == "gbm-linear-g":
        if dim not in (None, 1):
            raise ConfigError("gbm-linear-g is one-dimensional")
        if horizon is not None:
            kwargs["horizon"] = horizon
        return factory(**kwargs)
    if dim is not None:
        kwargs["dim"] = dim
    if horizon is not None:
        kwargs["horizon"] = horizon
    return factory(**kwargs)
