"""Reference methods for benchmarking.

Forward-backward splitting (FBS) and the generalized proximal point
algorithm (GPPA, a proximal DCA) are implemented independently. Douglas-
Rachford (DRS), its Tikhonov-regularized variant (DRSR), Davis-Yin (DYS)
and Peaceman-Rachford (PRS) are special parameterizations of the main
iteration and are produced by the ``make_*`` constructors.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from .core import (
    ObjectiveSpec,
    Point,
    ProxOracle,
    SmoothOracle,
    SolveReport,
    SolverConfig,
    StoppingRule,
    SubgradOracle,
    norm,
    zero_smooth,
    zero_subgrad,
)

__all__ = [
    "GppaSplit",
    "fbs_step",
    "fbs",
    "gppa_step",
    "gppa",
    "make_drs",
    "make_drsr",
    "make_dys",
    "make_prs",
    "fold_tikhonov",
]


def fbs_step(x: Point, smooth: SmoothOracle, nonsmooth: ProxOracle, gamma: float) -> Point:
    """``prox_{gamma nonsmooth}(x - gamma grad smooth(x))``."""
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    return nonsmooth.prox(x - gamma * smooth.grad(x), gamma)


@dataclass(frozen=True)
class GppaSplit:
    """``g1 + g2 - h`` with ``g1`` proximable, ``g2`` smooth (Lipschitz
    constant ``g2.lipschitz``) and ``h`` convex. The stepsize defaults to
    ``1/g2.lipschitz``."""

    g1: ProxOracle
    g2: SmoothOracle
    h: SubgradOracle
    stepsize: Optional[float] = None

    def __post_init__(self):
        if self.stepsize is None:
            if not self.g2.lipschitz > 0:
                raise ValueError("stepsize required when g2 has zero Lipschitz constant")
            object.__setattr__(self, "stepsize", 1.0 / self.g2.lipschitz)
        if not self.stepsize > 0:
            raise ValueError("stepsize must be positive")

    def objective(self, x: Point) -> float:
        return self.g1.eval(x) + self.g2.eval(x) - self.h.eval(x)


def gppa_step(x: Point, split: GppaSplit) -> Point:
    """``prox_{t g1}(x - t grad g2(x) + t xi)`` with ``xi`` a subgradient of ``h`` at ``x``."""
    t = split.stepsize
    return split.g1.prox(x - t * split.g2.grad(x) + t * split.h.subgrad(x), t)


def _iterate(step: Callable[[Point], Point], objective: Callable[[Point], float], x0: Point,
             max_iters: int, stopping: StoppingRule, metric, record: bool) -> SolveReport:
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")
    x = np.array(x0, dtype=float)
    traj = {"F": [], "y_step": []} if record else {}
    reason = "max_iters"
    n = 0
    t0 = time.perf_counter()
    for n in range(1, max_iters + 1):
        x_new = step(x)
        if not np.all(np.isfinite(x_new)):
            x = x_new
            reason = "diverged"
            break
        if record:
            traj["F"].append(objective(x_new))
            traj["y_step"].append(norm(x_new - x))
        done = stopping.satisfied(x_new, x)
        x = x_new
        if done:
            reason = "converged"
            break
    wall = time.perf_counter() - t0
    report = SolveReport(y=x, iterations=n, reason=reason, wall_time=wall,
                         trajectory={k: np.asarray(v) for k, v in traj.items()})
    if metric is not None:
        report.relative_error = float(metric(x))
    return report


def fbs(smooth: SmoothOracle, nonsmooth: ProxOracle, x0: Point, gamma: float,
        max_iters: int = 1000, stopping: Optional[StoppingRule] = None,
        metric=None, record: bool = False) -> SolveReport:
    """Forward-backward splitting with a constant stepsize."""
    stopping = stopping or StoppingRule()
    return _iterate(lambda x: fbs_step(x, smooth, nonsmooth, gamma),
                    lambda x: smooth.eval(x) + nonsmooth.eval(x),
                    x0, max_iters, stopping, metric, record)


def gppa(split: GppaSplit, x0: Point, max_iters: int = 1000,
         stopping: Optional[StoppingRule] = None, metric=None, record: bool = False) -> SolveReport:
    stopping = stopping or StoppingRule()
    return _iterate(lambda x: gppa_step(x, split), split.objective,
                    x0, max_iters, stopping, metric, record)


# Special cases of the main iteration

def _config(theta: float, eta: float, config: Optional[SolverConfig], **kwargs) -> SolverConfig:
    if config is not None:
        return replace(config, theta=theta, eta=eta, **kwargs)
    return SolverConfig(theta=theta, eta=eta, **kwargs)


def make_drs(f: SmoothOracle, g: ProxOracle, config: Optional[SolverConfig] = None,
             **kwargs) -> tuple[ObjectiveSpec, SolverConfig]:
    """Douglas-Rachford: no DC term, ``theta = eta = 1``."""
    return ObjectiveSpec(f, g, zero_smooth(), zero_subgrad()), _config(1.0, 1.0, config, **kwargs)


def make_prs(f: SmoothOracle, g: ProxOracle, config: Optional[SolverConfig] = None,
             **kwargs) -> tuple[ObjectiveSpec, SolverConfig]:
    """Peaceman-Rachford: no DC term, ``theta = 1, eta = 2``."""
    return ObjectiveSpec(f, g, zero_smooth(), zero_subgrad()), _config(1.0, 2.0, config, **kwargs)


def make_dys(f: SmoothOracle, g: ProxOracle, hbar: SmoothOracle,
             config: Optional[SolverConfig] = None, **kwargs) -> tuple[ObjectiveSpec, SolverConfig]:
    """Davis-Yin: smooth third term, no concave part, ``theta = eta = 1``."""
    return ObjectiveSpec(f, g, hbar, zero_subgrad()), _config(1.0, 1.0, config, **kwargs)


def fold_tikhonov(f: SmoothOracle, rho: float) -> SmoothOracle:
    """``f + (rho/2)||.||^2`` with prox
    ``prox_{t(f + rho/2||.||^2)}(z) = prox_{t/(1+t rho) f}(z / (1 + t rho))``."""
    if f.prox is None:
        raise ValueError("f must provide a prox")

    def prox(z, t):
        s = 1.0 + t * rho
        return f.prox(np.asarray(z, dtype=float) / s, t / s)

    return SmoothOracle(
        eval=lambda x: f.eval(x) + 0.5 * rho * float(np.vdot(x, x)),
        grad=lambda x: f.grad(x) + rho * np.asarray(x, dtype=float),
        lipschitz=f.lipschitz + abs(rho),
        alpha=f.alpha + rho,
        prox=prox,
    )


def make_drsr(f: SmoothOracle, g: ProxOracle, tikhonov: float,
              config: Optional[SolverConfig] = None, **kwargs) -> tuple[ObjectiveSpec, SolverConfig]:
    """Douglas-Rachford on ``f + (tikhonov/2)||.||^2`` and ``g``."""
    return make_drs(fold_tikhonov(f, tikhonov), g, config, **kwargs)
