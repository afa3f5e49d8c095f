"""Doubly relaxed forward-Douglas-Rachford splitting for nonconvex composite
problems with a difference-of-convex term."""

from .core import (
    GammaRestartConfig,
    IterateState,
    ObjectiveSpec,
    ProxOracle,
    SmoothOracle,
    SolveReport,
    SolverConfig,
    StoppingRule,
    SubgradOracle,
    check_fd_gradient,
    inner,
    norm,
)
from .params import GammaRange, ProblemConstants, eta_upper_bound, gamma_range, phi, validate_config
from .solver import drfdr_step, lyapunov, solve, stationarity_residuals

__version__ = "0.1.0"
