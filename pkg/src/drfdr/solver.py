"""Doubly relaxed forward-Douglas-Rachford splitting (DRFDR).

For ``min f + g + hbar - hunder`` one iteration reads

    y*_n    in  subdiff hunder(y_n)
    x_{n+1} =   prox_{gamma f}(z_n)
    y_{n+1} in  prox_{theta gamma g}((theta+1) x_{n+1} - theta z_n
                                     - theta gamma grad hbar(x_{n+1}) + theta gamma y*_n)
    z_{n+1} =   z_n + eta (y_{n+1} - x_{n+1})

with stepsize ``gamma``, relaxation ``theta`` in (0, 1] and ``eta > 0``.
Along the iterates the merit function ``L_n`` (see :func:`lyapunov`)
decreases whenever ``phi(gamma) < 0``; :mod:`drfdr.params` computes that
range. Coercivity of the objective, needed for boundedness, is the
caller's responsibility.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .core import (
    GammaRestartConfig,
    IterateState,
    ObjectiveSpec,
    Point,
    SolveReport,
    SolverConfig,
    inner,
    norm,
)
from .params import ProblemConstants, phi, validate_config

__all__ = [
    "OracleError",
    "LyapunovRecord",
    "Residuals",
    "initial_state",
    "drfdr_step",
    "lyapunov",
    "stationarity_residuals",
    "apply_gamma_restart",
    "solve",
    "TRAJECTORY_KEYS",
    "STEP_KEYS",
]

logger = logging.getLogger(__name__)

STEP_KEYS = ("x_step", "y_step", "z_step", "step_sq")
TRAJECTORY_KEYS = (
    "F", "L", "decrease_slack", "decrease_bound", "lower_gap", "upper_gap",
    "x_step", "y_step", "z_step", "step_sq", "fixed_point_residual",
    "opt_cond_residual", "z_identity_residual", "x_opt_residual", "gamma",
)


class OracleError(RuntimeError):
    """An oracle raised during an iteration; ``iteration`` is the failing step."""

    def __init__(self, iteration: int, message: str):
        super().__init__(f"iteration {iteration}: {message}")
        self.iteration = iteration


@dataclass(frozen=True)
class LyapunovRecord:
    L: float
    lower_gap: float
    upper_gap: float
    decrease_slack: Optional[float] = None


@dataclass(frozen=True)
class Residuals:
    fixed_point_residual: float
    y_step: float
    opt_cond_residual: float


def initial_state(y0: Point, z0: Optional[Point] = None, gamma: float = 1.0) -> IterateState:
    y0 = np.array(y0, dtype=float)
    z0 = y0.copy() if z0 is None else np.array(z0, dtype=float)
    if z0.shape != y0.shape:
        raise ValueError("y0 and z0 must have the same shape")
    return IterateState(x=y0.copy(), y=y0, z=z0, y_star=None, n=0, gamma=float(gamma))


def drfdr_step(state: IterateState, spec: ObjectiveSpec, config: SolverConfig) -> IterateState:
    """One iteration; uses ``state.gamma`` (which the restart heuristic may have
    lowered) together with ``config.theta`` and ``config.eta``."""
    gamma, theta, eta = state.gamma, config.theta, config.eta
    n = state.n
    try:
        y_star = spec.hunder.subgrad(state.y)
        x = spec.f.prox(state.z, gamma)
        u = (theta + 1.0) * x - theta * state.z - theta * gamma * spec.hbar.grad(x) + theta * gamma * y_star
        y = spec.g.prox(u, theta * gamma)
    except Exception as exc:
        raise OracleError(n + 1, f"{type(exc).__name__}: {exc}") from exc
    z = state.z + eta * (y - x)
    return IterateState(
        x=x, y=y, z=z, y_star=y_star, n=n + 1, gamma=gamma,
        y_prev=state.y, z_prev=state.z, x_prev=state.x if n >= 1 else None,
        last_y_step=norm(y - state.y),
        last_x_step=norm(x - state.x) if n >= 1 else math.nan,
    )


def lyapunov(state: IterateState, spec: ObjectiveSpec, config: SolverConfig,
             previous: Optional[float] = None) -> Optional[LyapunovRecord]:
    """Merit value ``L_n`` and the gaps to its lower and upper bounds.

    ``L_n = f(x) + g(y) + hbar(x) + <grad hbar(x), y - x> - hunder(y_prev)
    - <y*_prev, y - y_prev> + <z - x, y - x>/gamma
    - (2 eta theta - 1)/(2 theta gamma) ||y - x||^2``.

    ``lower_gap = L_n - [F(y) + (1/(theta gamma) - kappa - ell) ||y - x||^2 / 2]``
    and ``upper_gap = [F(y) + <y*_n - y*_prev, y - y_prev>
    + (1/(theta gamma) + kappa + ell) ||y - x||^2 / 2] - L_n``; both are
    nonnegative in theory. Returns ``None`` at ``n = 0``.
    """
    if state.n < 1:
        return None
    gamma, theta, eta = state.gamma, config.theta, config.eta
    x, y, z = state.x, state.y, state.z
    d = y - x
    dy = y - state.y_prev
    d2 = inner(d, d)
    L = (spec.f.eval(x) + spec.g.eval(y) + spec.hbar.eval(x) + inner(spec.hbar.grad(x), d)
         - spec.hunder.eval(state.y_prev) - inner(state.y_star, dy)
         + inner(z - x, d) / gamma - (2 * eta * theta - 1) / (2 * theta * gamma) * d2)
    F = spec.F_eval(y)
    kl = spec.kappa + spec.ell
    lower_gap = L - (F + 0.5 * (1 / (theta * gamma) - kl) * d2)
    y_star_now = spec.hunder.subgrad(y)
    upper_gap = F + inner(y_star_now - state.y_star, dy) + 0.5 * (1 / (theta * gamma) + kl) * d2 - L
    slack = None if previous is None else L - previous
    return LyapunovRecord(L=L, lower_gap=lower_gap, upper_gap=upper_gap, decrease_slack=slack)


def stationarity_residuals(state: IterateState, spec: ObjectiveSpec, config: SolverConfig) -> Residuals:
    """Fixed-point residual ``||y_n - x_n||``, step ``||y_n - y_{n-1}||`` and an
    optimality residual at ``y_n``.

    The optimality residual is the norm of ``grad f(y_n) + v + grad hbar(y_n)
    - y*_{n-1}``, where ``v`` is the element of ``subdiff g(y_n)`` certified
    by the y-update. It vanishes at a fixed point.
    """
    if state.n < 1:
        raise ValueError("residuals need at least one iteration")
    gamma, theta = state.gamma, config.theta
    x, y = state.x, state.y
    v = (-(y - x) / (theta * gamma) - (state.z_prev - x) / gamma
         - spec.hbar.grad(x) + state.y_star)
    w = spec.f.grad(y) + v + spec.hbar.grad(y) - state.y_star
    return Residuals(norm(y - x), norm(y - state.y_prev), norm(w))


def apply_gamma_restart(gamma: float, restart: GammaRestartConfig, x_step: float,
                        x_norm: float, n: int) -> float:
    """Shrink ``gamma`` to ``max(gamma/2, 0.9999 gamma)`` when it is above the
    floor ``gamma0`` and the x-iterates jump (``x_step > coeff/n``) or blow up."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if gamma > restart.gamma0 and (x_step > restart.step_blowup_coeff / n
                                   or x_norm > restart.blowup_norm):
        return max(gamma / 2.0, 0.9999 * gamma)
    return gamma


def _step_norms(state: IterateState, prev: IterateState) -> tuple[float, float, float, float]:
    x_step = state.last_x_step
    z_step = norm(state.z - state.z_prev)
    step_sq = (x_step ** 2 if prev.n >= 1 else math.nan) + state.last_y_step ** 2 + z_step ** 2
    return x_step, state.last_y_step, z_step, step_sq


def _record(traj: dict, state: IterateState, prev: IterateState, spec: ObjectiveSpec,
            config: SolverConfig, prev_L: Optional[float], phi_coef: float) -> Optional[float]:
    rec = lyapunov(state, spec, config, previous=prev_L)
    res = stationarity_residuals(state, spec, config)
    x_step, _, z_step, step_sq = _step_norms(state, prev)
    traj["F"].append(spec.F_eval(state.y))
    traj["L"].append(rec.L)
    traj["decrease_slack"].append(math.nan if rec.decrease_slack is None else rec.decrease_slack)
    traj["decrease_bound"].append(phi_coef * x_step ** 2 if prev.n >= 1 else math.nan)
    traj["lower_gap"].append(rec.lower_gap)
    traj["upper_gap"].append(rec.upper_gap)
    traj["x_step"].append(x_step)
    traj["y_step"].append(state.last_y_step)
    traj["z_step"].append(z_step)
    traj["step_sq"].append(step_sq)
    traj["fixed_point_residual"].append(res.fixed_point_residual)
    traj["opt_cond_residual"].append(res.opt_cond_residual)
    traj["z_identity_residual"].append(
        norm((state.y - state.x) - (state.z - state.z_prev) / config.eta))
    traj["x_opt_residual"].append(
        norm(state.z_prev - state.x - state.gamma * spec.f.grad(state.x)))
    traj["gamma"].append(state.gamma)
    return rec.L


def solve(spec: ObjectiveSpec, config: SolverConfig, y0: Point, z0: Optional[Point] = None,
          metric: Optional[Callable[[Point], float]] = None) -> SolveReport:
    """Run the iteration from ``(y0, z0)`` until the stopping rule fires.

    ``z0`` defaults to ``y0``. ``metric`` (e.g. relative error against a
    ground truth) is evaluated on the final ``y``. With
    ``config.record_trajectory`` every iteration's merit value, bound gaps
    and residuals are stored (keys in ``TRAJECTORY_KEYS``); with
    ``config.record_steps`` only the keys in ``STEP_KEYS``.
    """
    state = initial_state(y0, z0, config.gamma)
    constants = None
    try:
        constants = ProblemConstants(spec.alpha, spec.kappa, spec.ell, config.theta, config.eta)
        check = validate_config(constants, config.gamma)
        if not check.valid:
            # a restart run starts above the range on purpose
            level = logging.INFO if config.restart is not None else logging.WARNING
            logger.log(level, "stepsize outside the admissible range: %s", check.message)
    except ValueError as exc:
        logger.warning("cannot validate parameters: %s", exc)

    record = config.record_trajectory
    steps_only = config.record_steps and not record
    traj = {k: [] for k in (TRAJECTORY_KEYS if record else STEP_KEYS if steps_only else ())}
    restart = config.restart
    restart_events = []
    reason = "max_iters"
    prev_L = None
    phi_coef = math.nan

    t0 = time.perf_counter()
    for _ in range(config.max_iters):
        prev = state
        state = drfdr_step(state, spec, config)
        if record:
            if constants is not None:
                phi_coef = phi(constants, state.gamma) / (2 * config.eta * config.theta * state.gamma)
            prev_L = _record(traj, state, prev, spec, config, prev_L, phi_coef)
        elif steps_only:
            for key, value in zip(STEP_KEYS, _step_norms(state, prev)):
                traj[key].append(value)

        x_norm = norm(state.x)
        if not (np.all(np.isfinite(state.x)) and np.all(np.isfinite(state.y))
                and np.all(np.isfinite(state.z))):
            reason = "diverged"
            break
        if config.stopping.satisfied(state.y, prev.y):
            reason = "converged"
            break
        if restart is not None and prev.n >= 1:
            new_gamma = apply_gamma_restart(state.gamma, restart, state.last_x_step, x_norm, prev.n)
            if new_gamma != state.gamma:
                restart_events.append(state.n)
                state.gamma = new_gamma
                prev_L = None  # monotonicity only holds for a fixed stepsize
        blowup = restart.blowup_norm if restart is not None else 1e10
        if x_norm > blowup and (restart is None or state.gamma <= restart.gamma0):
            reason = "diverged"
            break
    wall = time.perf_counter() - t0

    report = SolveReport(
        y=state.y, x=state.x, z=state.z, iterations=state.n, reason=reason, wall_time=wall,
        trajectory={k: np.asarray(v, dtype=float) for k, v in traj.items()},
        gamma=state.gamma, restart_events=restart_events,
    )
    if metric is not None:
        report.relative_error = float(metric(state.y))
    return report
