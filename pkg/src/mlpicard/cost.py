"""Operation counters and the analytic cost recursion of the estimator.

Counting conventions: one unit per delivered coefficient evaluation (drift
and diffusion Jacobian calls count toward their coefficient's counter), one
unit per delivered random scalar.  Finer accounting (e.g. rejection redraws
inside the Beta sampler) is deliberately out of scope; a path of N Euler
steps in dimension d therefore books N drift evals, N diffusion evals and
N*d scalars, plus the Jacobian units when the flow is carried.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

from .errors import DomainError

__all__ = ["CostBound", "CostCounters", "cost_bound_sum", "cost_recursion", "unit_costs"]


@dataclass
class CostCounters:
    """Monotone counters accumulated during a run; all zero at start."""

    evals_g: int = 0
    evals_f: int = 0
    evals_mu: int = 0
    evals_sigma: int = 0
    scalars_drawn: int = 0

    def total(self) -> int:
        return self.evals_g + self.evals_f + self.evals_mu + self.evals_sigma + self.scalars_drawn

    def merge(self, other: "CostCounters") -> None:
        self.evals_g += other.evals_g
        self.evals_f += other.evals_f
        self.evals_mu += other.evals_mu
        self.evals_sigma += other.evals_sigma
        self.scalars_drawn += other.scalars_drawn

    def as_dict(self) -> dict[str, int]:
        return {
            "evals_g": self.evals_g,
            "evals_f": self.evals_f,
            "evals_mu": self.evals_mu,
            "evals_sigma": self.evals_sigma,
            "scalars_drawn": self.scalars_drawn,
        }


def cost_recursion(n: int, branching: int, e, g, f):
    """Deterministic cost recursion with unit costs (e, g, f) per path/terminal/source.

    C_0 = C_{-1} = 0 and for n >= 1

        C_n = M^n (M^M e + g)
              + sum_{l=0}^{n-1} M^{n-l} (M^M e + f + C_l + C_{l-1}).

    Evaluated as an equality so it doubles as an exact comparator; measured
    counters are checked against it as an upper bound.  Integer inputs are
    computed exactly in big-integer arithmetic (the M^M factor explodes
    quickly); float inputs may saturate to inf.
    """
    if n < 0 or branching < 1:
        raise DomainError(f"need n >= 0 and branching >= 1, got n={n}, M={branching}")
    m = int(branching)
    mm = m**m
    costs = {-1: 0 * e, 0: 0 * e}
    for k in range(1, n + 1):
        total = m**k * (mm * e + g)
        for l in range(k):
            total += m ** (k - l) * (mm * e + f + costs[l] + costs[l - 1])
        costs[k] = total
    return costs[n]


class CostBound(NamedTuple):
    """Log-space value of the closed-form cost bound."""

    log_value: float
    exp_overflows: bool

    @property
    def value(self) -> float:
        return math.inf if self.exp_overflows else math.exp(self.log_value)


def cost_bound_sum(n: int, e: float, g: float, f: float) -> CostBound:
    """Closed-form bound 12 (3e + g + f) * 12^(5 n^3) * n^(8 n^3), in log space.

    Returned as (natural log, overflow flag); the flag marks values beyond
    float range in linear space.
    """
    if n < 1:
        raise DomainError(f"need n >= 1, got {n}")
    log_value = math.log(12.0 * (3.0 * e + g + f)) + 5.0 * n**3 * math.log(12.0)
    if n > 1:
        log_value += 8.0 * n**3 * math.log(n)
    max_log = math.log(1.7976931348623157e308)
    return CostBound(log_value=log_value, exp_overflows=log_value > max_log)


def unit_costs(dim: int, euler_steps: int | None) -> tuple[int, int, int]:
    """Nominal per-sample unit costs (e, g, f) used for reporting.

    One path booked at (dim + 2) units per Euler step (drift, diffusion,
    dim scalars) plus one unit for the interior-time draw; exact sampling
    counts as a single step.
    """
    steps = 1 if euler_steps is None else int(euler_steps)
    return steps * (dim + 2) + 1, 1, 1
