"""Admissible stepsize ranges for the splitting iteration.

Sufficient decrease of the merit function holds when the quadratic

    phi(gamma) = 2 theta kappa (kappa + ell) gamma^2
                 - ((eta theta + 2 - 2 theta) alpha - (3 eta - 2) theta ell) gamma
                 + eta - 2

is negative. The functions here locate the interval where that happens and
classify the parameter regime (cases ``a``, ``b`` and ``c``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

__all__ = [
    "ProblemConstants",
    "GammaRange",
    "Validation",
    "phi",
    "discriminant",
    "gamma_range",
    "eta_upper_bound",
    "case_b_alpha_bound",
    "validate_config",
]


@dataclass(frozen=True)
class ProblemConstants:
    alpha: float
    kappa: float
    ell: float
    theta: float = 1.0
    eta: float = 1.0

    def __post_init__(self):
        if self.kappa < 0 or self.ell < 0:
            raise ValueError("kappa and ell must be nonnegative")
        if not -self.kappa <= self.alpha <= self.kappa:
            raise ValueError(f"need -kappa <= alpha <= kappa, got alpha={self.alpha}, kappa={self.kappa}")
        if not 0 < self.theta <= 1:
            raise ValueError("theta must lie in (0, 1]")
        if not self.eta > 0:
            raise ValueError("eta must be positive")


@dataclass(frozen=True)
class GammaRange:
    """Open interval ``(lower, upper)`` of admissible stepsizes."""

    lower: float
    upper: float
    case_label: Optional[str]
    feasible: bool
    delta: Optional[float] = None
    reason: str = ""

    def contains(self, gamma: float) -> bool:
        return self.feasible and self.lower < gamma < self.upper


@dataclass(frozen=True)
class Validation:
    valid: bool
    case_label: Optional[str]
    message: str = ""


def _coefficients(c: ProblemConstants) -> tuple[float, float, float]:
    # phi(gamma) = a gamma^2 - b gamma + c0
    a = 2.0 * c.theta * c.kappa * (c.kappa + c.ell)
    b = (c.eta * c.theta + 2.0 - 2.0 * c.theta) * c.alpha - (3.0 * c.eta - 2.0) * c.theta * c.ell
    c0 = c.eta - 2.0
    return a, b, c0


def phi(constants: ProblemConstants, gamma: float) -> float:
    a, b, c0 = _coefficients(constants)
    return a * gamma * gamma - b * gamma + c0


def discriminant(constants: ProblemConstants) -> float:
    a, b, c0 = _coefficients(constants)
    return b * b - 4.0 * a * c0


def _roots(a: float, b: float, c0: float, delta: float) -> tuple[float, float]:
    """Roots of ``a g^2 - b g + c0`` with ``a > 0`` and ``delta >= 0``, ordered."""
    sq = math.sqrt(delta)
    # conjugate form avoids cancellation when |b| dominates
    q = 0.5 * (b + math.copysign(sq, b)) if b != 0 else 0.5 * sq
    if q == 0.0:
        return 0.0, 0.0
    r1 = q / a
    r2 = c0 / q
    return min(r1, r2), max(r1, r2)


def eta_upper_bound(constants: ProblemConstants) -> float:
    """``2 + 2 kappa / (theta (kappa + ell))``; undefined when kappa = ell = 0."""
    s = constants.kappa + constants.ell
    if s == 0:
        raise ValueError("eta upper bound undefined when kappa = ell = 0")
    return 2.0 + 2.0 * constants.kappa / (constants.theta * s)


def case_b_alpha_bound(constants: ProblemConstants) -> float:
    """Lower bound that alpha must strictly exceed when ``eta >= 2``."""
    c = constants
    num = (3 * c.eta - 2) * c.theta * c.ell + 2 * math.sqrt(
        2 * (c.eta - 2) * c.theta * c.kappa * (c.kappa + c.ell))
    return num / (c.eta * c.theta + 2 - 2 * c.theta)


def gamma_range(constants: ProblemConstants) -> GammaRange:
    c = constants
    eta, ell, theta = c.eta, c.ell, c.theta

    if c.kappa == 0:
        if not 0 < eta < 2:
            return GammaRange(0.0, 0.0, None, False,
                              reason=f"kappa = 0 requires eta in (0, 2), got eta={eta}")
        if ell == 0:
            upper = math.inf
        elif eta <= 1:
            upper = 1.0 / (theta * ell)
        else:
            upper = (2.0 - eta) / ((3.0 * eta - 2.0) * theta * ell)
        return GammaRange(0.0, upper, "c", True)

    a, b, c0 = _coefficients(c)
    delta = b * b - 4.0 * a * c0

    eta_ok_a = (0 < eta < 2) if ell == 0 else (1 <= eta < 2)
    if eta_ok_a:
        _, upper = _roots(a, b, c0, delta)
        return GammaRange(0.0, upper, "a", True, delta=delta)

    if ell > 0 and eta < 1:
        return GammaRange(0.0, 0.0, None, False, delta=delta,
                          reason=f"ell > 0 requires eta >= 1, got eta={eta}")

    eta_max = eta_upper_bound(c)
    if not 2 <= eta < eta_max:
        return GammaRange(0.0, 0.0, None, False, delta=delta,
                          reason=f"eta={eta} outside [2, {eta_max:.6g})")

    bound = case_b_alpha_bound(c)
    if not c.alpha > bound:
        return GammaRange(0.0, 0.0, "b", False, delta=delta,
                          reason=f"eta >= 2 requires alpha > {bound:.6g}, got alpha={c.alpha}")
    lower, upper = _roots(a, b, c0, delta)
    return GammaRange(max(lower, 0.0), upper, "b", True, delta=delta)


def validate_config(constants: ProblemConstants, gamma: float) -> Validation:
    """Check that ``gamma`` lies strictly inside the admissible interval."""
    rng = gamma_range(constants)
    if not rng.feasible:
        return Validation(False, rng.case_label, f"infeasible parameters: {rng.reason}")
    if not gamma > rng.lower:
        return Validation(False, rng.case_label,
                          f"gamma={gamma} <= lower bound {rng.lower:.6g} (case {rng.case_label})")
    if not gamma < rng.upper:
        return Validation(False, rng.case_label,
                          f"gamma={gamma} >= upper bound {rng.upper:.6g} (case {rng.case_label})")
    return Validation(True, rng.case_label, "ok")
