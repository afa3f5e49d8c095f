"""Shared types: function oracles, objective specification, solver configuration,
iterate state and run reports.

Points are plain dense ``numpy`` arrays. Vectors and matrices are handled
uniformly; matrices use the Frobenius inner product.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Literal, Optional

import numpy as np

INF = math.inf

Point = np.ndarray


def inner(a: Point, b: Point) -> float:
    """Real (Frobenius) inner product of two points of the same shape."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return float(np.vdot(a, b))


def norm(a: Point) -> float:
    """Euclidean norm for vectors, Frobenius norm for matrices."""
    return float(np.linalg.norm(np.ravel(a)))


@dataclass(frozen=True)
class SmoothOracle:
    """Differentiable function with a Lipschitz gradient.

    ``alpha`` is the convexity modulus (``f - alpha/2 ||.||^2`` convex); it
    may be negative. ``prox`` is optional and only required for the smooth
    term that the solver handles through its proximity operator.
    """

    eval: Callable[[Point], float]
    grad: Callable[[Point], Point]
    lipschitz: float
    alpha: Optional[float] = None
    prox: Optional[Callable[[Point, float], Point]] = None

    def __post_init__(self):
        if not self.lipschitz >= 0:
            raise ValueError(f"lipschitz constant must be nonnegative, got {self.lipschitz}")
        if self.alpha is None:
            object.__setattr__(self, "alpha", -float(self.lipschitz))
        if self.alpha > self.lipschitz:
            raise ValueError(
                f"convexity modulus alpha={self.alpha} exceeds lipschitz constant {self.lipschitz}")
        if self.alpha < -self.lipschitz:
            raise ValueError(
                f"convexity modulus alpha={self.alpha} is below -lipschitz={-self.lipschitz}")


@dataclass(frozen=True)
class ProxOracle:
    """Extended-real function with a computable proximity operator.

    ``eval`` may return ``INF`` (e.g. for indicators); ``prox(u, t)``
    returns a minimizer of ``eval(.) + ||. - u||^2 / (2t)``.
    """

    eval: Callable[[Point], float]
    prox: Callable[[Point, float], Point]


@dataclass(frozen=True)
class SubgradOracle:
    """Continuous convex function together with a subgradient selection."""

    eval: Callable[[Point], float]
    subgrad: Callable[[Point], Point]


def zero_smooth() -> SmoothOracle:
    return SmoothOracle(
        eval=lambda x: 0.0,
        grad=np.zeros_like,
        lipschitz=0.0,
        alpha=0.0,
        prox=lambda x, t: np.array(x, dtype=float, copy=True),
    )


def zero_prox() -> ProxOracle:
    return ProxOracle(eval=lambda x: 0.0,
                      prox=lambda x, t: np.array(x, dtype=float, copy=True))


def zero_subgrad() -> SubgradOracle:
    return SubgradOracle(eval=lambda x: 0.0, subgrad=np.zeros_like)


def add_smooth(a: SmoothOracle, b: SmoothOracle) -> SmoothOracle:
    """Sum of two smooth oracles (no prox; constants add)."""
    return SmoothOracle(
        eval=lambda x: a.eval(x) + b.eval(x),
        grad=lambda x: a.grad(x) + b.grad(x),
        lipschitz=a.lipschitz + b.lipschitz,
        alpha=a.alpha + b.alpha,
    )


@dataclass(frozen=True)
class ObjectiveSpec:
    """The objective ``f + g + hbar - hunder``.

    ``f`` must carry a prox; ``hbar`` is smooth; ``hunder`` is convex with
    a subgradient oracle. Missing terms default to zero oracles.
    """

    f: SmoothOracle
    g: ProxOracle
    hbar: SmoothOracle = field(default_factory=zero_smooth)
    hunder: SubgradOracle = field(default_factory=zero_subgrad)

    def __post_init__(self):
        if self.f.prox is None:
            raise ValueError("the f oracle must provide a prox")
        if self.f.alpha > self.f.lipschitz:
            raise ValueError("alpha must not exceed kappa")

    @property
    def alpha(self) -> float:
        return self.f.alpha

    @property
    def kappa(self) -> float:
        return self.f.lipschitz

    @property
    def ell(self) -> float:
        return self.hbar.lipschitz

    def F_eval(self, x: Point) -> float:
        gx = self.g.eval(x)
        if gx == INF:
            return INF
        return self.f.eval(x) + gx + self.hbar.eval(x) - self.hunder.eval(x)


@dataclass(frozen=True)
class StoppingRule:
    """Termination test applied after each iteration.

    ``y_step``: ``||y_{n+1} - y_n|| < tol``; ``rel_y_step``: the same divided by
    ``||y_n||``; ``observed_residual``: ``residual(y_{n+1}) < tol`` with a
    problem-supplied ``residual`` callable.
    """

    kind: Literal["y_step", "rel_y_step", "observed_residual"] = "y_step"
    tol: float = 1e-3
    residual: Optional[Callable[[Point], float]] = None

    def __post_init__(self):
        if self.kind not in ("y_step", "rel_y_step", "observed_residual"):
            raise ValueError(f"unknown stopping rule {self.kind!r}")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.kind == "observed_residual" and self.residual is None:
            raise ValueError("observed_residual stopping needs a residual callable")

    def value(self, y_new: Point, y_old: Point) -> float:
        if self.kind == "observed_residual":
            return float(self.residual(y_new))
        step = norm(y_new - y_old)
        if self.kind == "y_step":
            return step
        base = norm(y_old)
        if base == 0.0:
            return 0.0 if step == 0.0 else INF
        return step / base

    def satisfied(self, y_new: Point, y_old: Point) -> bool:
        return self.value(y_new, y_old) < self.tol


@dataclass(frozen=True)
class GammaRestartConfig:
    """Stepsize-shrinking heuristic: start at ``k * gamma0`` and shrink while
    the iterates look unstable and gamma is still above ``gamma0``."""

    gamma0: float
    k: float = 1e6
    blowup_norm: float = 1e10
    step_blowup_coeff: float = 1000.0

    def __post_init__(self):
        for name in ("gamma0", "k", "blowup_norm", "step_blowup_coeff"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    @property
    def initial_gamma(self) -> float:
        return self.k * self.gamma0


@dataclass(frozen=True)
class SolverConfig:
    """Parameters of the splitting iteration.

    If ``gamma`` is omitted and a ``restart`` heuristic is given, the
    initial stepsize is ``restart.k * restart.gamma0``.
    ``record_trajectory`` stores every diagnostic; ``record_steps`` only the
    cheap step norms (``x_step``, ``y_step``, ``z_step``, ``step_sq``).
    """

    gamma: Optional[float] = None
    theta: float = 1.0
    eta: float = 1.0
    max_iters: int = 1000
    stopping: StoppingRule = field(default_factory=StoppingRule)
    restart: Optional[GammaRestartConfig] = None
    record_trajectory: bool = False
    record_steps: bool = False

    def __post_init__(self):
        if self.gamma is None:
            if self.restart is None:
                raise ValueError("gamma is required when no restart heuristic is configured")
            object.__setattr__(self, "gamma", self.restart.initial_gamma)
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if not 0 < self.theta <= 1:
            raise ValueError("theta must lie in (0, 1]")
        if not self.eta > 0:
            raise ValueError("eta must be positive")
        if int(self.max_iters) != self.max_iters or self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")


@dataclass
class IterateState:
    """Iterate ``(x_n, y_n, z_n, y*_{n-1})`` plus what the monitors need.

    At ``n = 0`` only ``y`` and ``z`` are meaningful; ``x`` holds a copy of
    ``y`` and ``y_star`` is ``None``.
    """

    x: Point
    y: Point
    z: Point
    y_star: Optional[Point]
    n: int
    gamma: float
    y_prev: Optional[Point] = None
    z_prev: Optional[Point] = None
    x_prev: Optional[Point] = None
    L: Optional[float] = None
    last_y_step: float = math.nan
    last_x_step: float = math.nan


@dataclass
class SolveReport:
    """Outcome of one solver run.

    ``trajectory`` maps a diagnostic name to a per-iteration array (length
    ``iterations``) and is empty unless recording was requested.
    """

    y: Point
    iterations: int
    reason: Literal["converged", "max_iters", "diverged"]
    wall_time: float
    trajectory: dict = field(default_factory=dict)
    relative_error: Optional[float] = None
    x: Optional[Point] = None
    z: Optional[Point] = None
    gamma: Optional[float] = None
    restart_events: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    @property
    def converged(self) -> bool:
        return self.reason == "converged"


def check_fd_gradient(oracle: SmoothOracle, x: Point, h: float = 1e-5) -> float:
    """Largest relative central-difference error of ``oracle.grad`` at ``x``.

    Returns ``max_i |fd_i - grad_i| / (1 + |grad_i|)``.
    """
    if not h > 0:
        raise ValueError("h must be positive")
    x = np.array(x, dtype=float)
    g = np.ravel(oracle.grad(x))
    flat = x.ravel()
    worst = 0.0
    for i in range(flat.size):
        e = np.zeros_like(flat)
        e[i] = h
        fp = oracle.eval((flat + e).reshape(x.shape))
        fm = oracle.eval((flat - e).reshape(x.shape))
        fd = (fp - fm) / (2 * h)
        worst = max(worst, abs(fd - g[i]) / (1 + abs(g[i])))
    return worst
