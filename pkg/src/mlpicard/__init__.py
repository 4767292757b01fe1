"""Multilevel Picard Monte Carlo solver for semilinear parabolic PDEs.

Estimates the solution value and its spatial gradient jointly: values come
from terminal/source sampling along simulated diffusion paths, gradients
from pairing the same samples with an inverse-diffusion weight built on the
derivative flow, and the full-history recursion allocates exponentially
fewer samples to higher iterates via telescoped source differences.
"""

from .cost import CostBound, CostCounters, cost_bound_sum, cost_recursion, unit_costs
from .errors import (
    BudgetExceeded,
    ConfigError,
    DegenerateInterval,
    DomainError,
    MissingReference,
    NonFiniteCoefficient,
    NotExactlySimulable,
    RecursionBudgetExceeded,
    SingularDiffusion,
    SolverError,
    UnsupportedTerminal,
)
from .mlp import Estimate, MlpConfig, NodeTrace, RmseRow, Trace, estimate, rmse_study
from .model import (
    AffineTerminal,
    ConstantCoefficients,
    ExpAffineTerminal,
    GbmCoefficients,
    PdeProblem,
    ProbeReport,
    ValidationReport,
    jacobian_fd,
    validate,
)
from .oracle import PicardConfig, closed_form_linear, picard_reference
from .paths import (
    EulerGrid,
    PathState,
    euler_terminal_batch,
    exact_state_batch,
    invert,
    simulate_euler,
    simulate_exact,
)
from .problems import REGISTRY, make_problem
from .sampler import StreamKey, TimeSampler, root_key

__all__ = [
    "AffineTerminal",
    "BudgetExceeded",
    "ConfigError",
    "ConstantCoefficients",
    "CostBound",
    "CostCounters",
    "DegenerateInterval",
    "DomainError",
    "Estimate",
    "EulerGrid",
    "ExpAffineTerminal",
    "GbmCoefficients",
    "MissingReference",
    "MlpConfig",
    "NodeTrace",
    "NonFiniteCoefficient",
    "NotExactlySimulable",
    "PathState",
    "PdeProblem",
    "PicardConfig",
    "ProbeReport",
    "REGISTRY",
    "RecursionBudgetExceeded",
    "RmseRow",
    "SingularDiffusion",
    "SolverError",
    "StreamKey",
    "TimeSampler",
    "Trace",
    "UnsupportedTerminal",
    "ValidationReport",
    "closed_form_linear",
    "cost_bound_sum",
    "cost_recursion",
    "estimate",
    "euler_terminal_batch",
    "exact_state_batch",
    "invert",
    "jacobian_fd",
    "make_problem",
    "picard_reference",
    "rmse_study",
    "root_key",
    "simulate_euler",
    "simulate_exact",
    "unit_costs",
    "validate",
]

__version__ = "0.1.0"
