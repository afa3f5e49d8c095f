"""Test problems and synthetic data.

Four problem families are wired to the solver:

* ``toy``:   ``||A x||^2 + rho ||x||_1 + exp(-||x||^2)/2 - rho ||x||``
* ``lrmc``:  ``||P_Omega(X - M)||^2/2 + indicator(rank X <= r) + rho ||X||^2/2``
* ``cs``:    ``||A x - b||^2/2 + rho (||x||_1 - ||x||)``
* ``slrme``: ``||X - A||^2/2 + rho1 ||X||_1 + rho2 (||X||_F^2 - kyfan2k_sq(X, k))``

Each ``build_*`` returns a :class:`Problem` bundling the objective, the
constants ``(alpha, kappa, ell)``, a default starting point, the
evaluation metric and per-algorithm default settings.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .core import ObjectiveSpec, ProxOracle, SmoothOracle, StoppingRule, norm, zero_subgrad
from .prox import (
    LeastSquaresProx,
    kyfan_oracle,
    l1_oracle,
    l2norm_oracle,
    prox_quadratic_full,
    prox_quadratic_masked,
    rank_indicator_oracle,
    sq_norm_oracle,
)

__all__ = [
    "RNG_NAME",
    "TOY_ELL",
    "LRMC_K",
    "ConvergenceError",
    "Problem",
    "ToyInstance",
    "LrmcInstance",
    "CsInstance",
    "SlrmeInstance",
    "power_iteration_lmax",
    "relative_error",
    "build_toy",
    "build_lrmc",
    "build_cs",
    "build_slrme",
    "lrmc_data_term",
    "generate_lrmc",
    "generate_cs",
    "generate_slrme",
    "save_instance",
    "load_instance",
]

RNG_NAME = "numpy.random.PCG64"
TOY_ELL = math.exp(-2)
# Initial stepsize multiplier for the LRMC restart heuristic. Much larger
# values (1e6) are tuned for very large matrices; on 100-500 dimensional
# instances the heuristic rarely triggers and such stepsizes stall.
LRMC_K = 10.0


class ConvergenceError(RuntimeError):
    pass


@dataclass
class Problem:
    """Everything needed to run one experiment instance."""

    name: str
    spec: ObjectiveSpec
    y0: np.ndarray
    z0: Optional[np.ndarray] = None
    metric: Optional[Callable[[np.ndarray], float]] = None
    stopping: StoppingRule = field(default_factory=StoppingRule)
    max_iters: int = 2000
    # per-algorithm defaults (gamma, gamma0, k, theta, eta, ...); an algorithm
    # is offered for a problem only if it appears here
    algo_defaults: dict = field(default_factory=dict)
    instance: object = None

    @property
    def constants(self) -> tuple[float, float, float]:
        return self.spec.alpha, self.spec.kappa, self.spec.ell


def relative_error(Y, truth) -> float:
    return norm(np.asarray(Y) - truth) / norm(truth)


def power_iteration_lmax(A, tol: float = 1e-13, max_iters: int = 100000, seed: int = 0) -> float:
    """Largest eigenvalue of ``A^T A`` by power iteration (deterministic start)."""
    A = np.asarray(A, dtype=float)
    if not np.any(A):
        raise ValueError("A must be nonzero")
    v = np.random.default_rng(seed).standard_normal(A.shape[1])
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(max_iters):
        w = A.T @ (A @ v)
        lam_new = float(v @ w)
        nw = np.linalg.norm(w)
        if nw == 0:
            return 0.0
        v = w / nw
        if abs(lam_new - lam) <= tol * abs(lam_new):
            return lam_new
        lam = lam_new
    raise ConvergenceError(f"power iteration did not converge in {max_iters} iterations")


# Toy problem

@dataclass
class ToyInstance:
    A: np.ndarray
    rho: float = 0.1


def build_toy(A, rho: float = 0.1, ell: float = TOY_ELL,
              y0=(10.0, 10.0)) -> Problem:
    """``f = ||Ax||^2``, ``g = rho||.||_1``, ``hbar = exp(-||x||^2)/2``,
    ``hunder = rho||.||``.

    ``ell`` defaults to ``exp(-2)``. The gradient of ``hbar`` is in fact
    1-Lipschitz (its Hessian is ``-I`` at the origin); pass ``ell=1.0`` when
    the decrease guarantees must hold near the origin.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("A must be square")
    ls = LeastSquaresProx(A, None, weight=2.0)
    eig = np.linalg.eigvalsh(A.T @ A)
    alpha, kappa = 2.0 * max(eig[0], 0.0), 2.0 * max(eig[-1], 0.0)
    f = SmoothOracle(eval=ls.eval, grad=ls.grad, lipschitz=kappa, alpha=alpha, prox=ls)
    hbar = SmoothOracle(
        eval=lambda x: 0.5 * math.exp(-float(x @ x)),
        grad=lambda x: -x * math.exp(-float(x @ x)),
        lipschitz=ell,
    )
    spec = ObjectiveSpec(f=f, g=l1_oracle(rho), hbar=hbar, hunder=l2norm_oracle(rho))
    y0 = np.array(y0, dtype=float)
    if y0.shape != (A.shape[0],):
        y0 = np.full(A.shape[0], 10.0)
    return Problem(
        name="toy", spec=spec, y0=y0, z0=y0.copy(),
        metric=lambda y: norm(y),
        stopping=StoppingRule("y_step", 1e-3),
        max_iters=10000,
        algo_defaults={
            "drfdr": {"gamma": 0.22, "eta": 1.5},
            "gppa": {"gamma": 1.0 / max(kappa + ell, 1e-12)},
        },
        instance=ToyInstance(A, rho),
    )


# Low-rank matrix completion

@dataclass
class LrmcInstance:
    M: np.ndarray
    mask: np.ndarray
    r: int
    rho: float = 1.8e-6
    R: float = 0.2

    @property
    def omega_size(self) -> int:
        return int(self.mask.sum())


def lrmc_data_term(inst: LrmcInstance) -> SmoothOracle:
    """``1/2 ||P_Omega(X - M)||^2`` (convex, 1-Lipschitz gradient)."""
    M, mask = inst.M, inst.mask
    PM = np.where(mask, M, 0.0)

    def f_eval(X):
        D = np.where(mask, X - M, 0.0)
        return 0.5 * float(np.vdot(D, D))

    return SmoothOracle(
        eval=f_eval,
        grad=lambda X: np.where(mask, X, 0.0) - PM,
        lipschitz=1.0,
        alpha=0.0,
        prox=lambda Z, t: prox_quadratic_masked(Z, M, mask, t),
    )


def build_lrmc(inst: LrmcInstance) -> Problem:
    M, mask = inst.M, inst.mask
    PM = np.where(mask, M, 0.0)
    pm_norm = norm(PM)
    spec = ObjectiveSpec(
        f=lrmc_data_term(inst),
        g=rank_indicator_oracle(inst.r),
        hbar=sq_norm_oracle(inst.rho),
        hunder=zero_subgrad(),
    )

    def observed_residual(Y):
        return norm(np.where(mask, Y - M, 0.0)) / pm_norm

    return Problem(
        name="lrmc", spec=spec, y0=PM.copy(), z0=PM.copy(),
        metric=lambda Y: relative_error(Y, M),
        stopping=StoppingRule("observed_residual", 1e-4, residual=observed_residual),
        max_iters=2000,
        algo_defaults={
            "drfdr": {"gamma0": 0.2, "k": LRMC_K, "eta": 1.8},
            "dys": {"gamma0": 0.15, "k": LRMC_K},
            "drs": {"gamma0": 0.22, "k": LRMC_K},
            "drsr": {"gamma0": 0.22, "k": LRMC_K, "tikhonov": inst.rho},
            "prs": {"gamma0": 0.22, "k": LRMC_K},
            "fbs": {"gamma": 2.0 / 3.0},
            "gppa": {"gamma": 1.0 / (1.0 + inst.rho)},
        },
        instance=inst,
    )


def generate_lrmc(seed: int, m: int = 200, r: int = 5, R: float = 0.2,
                  rho: float = 1.8e-6) -> LrmcInstance:
    """``M = M1 M2^T`` with Gaussian ``m x r`` factors; ``ceil(R m^2)``
    entries observed, sampled without replacement."""
    if not 1 <= r <= m:
        raise ValueError("need 1 <= r <= m")
    if not 0 < R <= 1:
        raise ValueError("sampling ratio must lie in (0, 1]")
    rng = np.random.default_rng(seed)
    M1 = rng.standard_normal((m, r))
    M2 = rng.standard_normal((m, r))
    M = M1 @ M2.T
    size = math.ceil(R * m * m)
    idx = rng.choice(m * m, size=size, replace=False)
    mask = np.zeros(m * m, dtype=bool)
    mask[idx] = True
    return LrmcInstance(M=M, mask=mask.reshape(m, m), r=r, rho=rho, R=R)


# Compressed sensing

@dataclass
class CsInstance:
    A: np.ndarray
    b: np.ndarray
    rho: float = 1e-4
    x_true: Optional[np.ndarray] = None


def build_cs(inst: CsInstance) -> Problem:
    A = np.asarray(inst.A, dtype=float)
    m, d = A.shape
    kappa = power_iteration_lmax(A)
    alpha = 0.0 if m < d else max(float(np.linalg.eigvalsh(A.T @ A)[0]), 0.0)
    ls = LeastSquaresProx(A, inst.b, weight=1.0)
    f = SmoothOracle(eval=ls.eval, grad=ls.grad, lipschitz=kappa, alpha=min(alpha, kappa), prox=ls)
    spec = ObjectiveSpec(f=f, g=l1_oracle(inst.rho), hunder=l2norm_oracle(inst.rho))
    metric = None if inst.x_true is None else (lambda x: relative_error(x, inst.x_true))
    gamma_bar = math.sqrt(0.1) / kappa  # upper root of phi for alpha = ell = 0, eta = 1.8
    return Problem(
        name="cs", spec=spec, y0=np.zeros(d), z0=np.zeros(d),
        metric=metric,
        stopping=StoppingRule("rel_y_step", 1e-5),
        max_iters=3000,
        algo_defaults={
            "drfdr": {"gamma0": 0.9 * gamma_bar, "k": 200.0, "eta": 1.8},
            "gppa": {"gamma": 1.0 / kappa},
        },
        instance=inst,
    )


def generate_cs(seed: int, m: int = 100, d: int = 200, sparsity: int = 10,
                noise: float = 0.0, rho: float = 1e-4) -> CsInstance:
    """Gaussian sensing matrix with ``N(0, 1/m)`` entries and a ``sparsity``-sparse
    signal with Gaussian nonzeros."""
    if not (1 <= m and 1 <= d and 0 <= sparsity <= d):
        raise ValueError("invalid dimensions")
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((m, d)) / math.sqrt(m)
    x = np.zeros(d)
    support = rng.choice(d, size=sparsity, replace=False)
    x[support] = rng.standard_normal(sparsity)
    b = A @ x
    if noise > 0:
        b = b + noise * rng.standard_normal(m)
    return CsInstance(A=A, b=b, rho=rho, x_true=x)


# Sparse and low-rank matrix estimation

@dataclass
class SlrmeInstance:
    A_G: np.ndarray
    A: np.ndarray
    rho1: float = 0.1
    rho2: float = 0.1
    k: int = 5
    R: float = 0.15
    sigma: float = 0.1
    blocks: tuple = (30, 40, 10, 20, 10)


def build_slrme(inst: SlrmeInstance, alpha: float = 1.0) -> Problem:
    """``alpha`` is the convexity modulus declared for ``f = ||X - A||^2/2``;
    ``f`` is 1-strongly convex, so any value in ``[0, 1]`` is valid."""
    A = np.asarray(inst.A, dtype=float)

    def f_eval(X):
        D = X - A
        return 0.5 * float(np.vdot(D, D))

    f = SmoothOracle(eval=f_eval, grad=lambda X: X - A, lipschitz=1.0, alpha=alpha,
                     prox=lambda Z, t: prox_quadratic_full(Z, A, t))
    spec = ObjectiveSpec(
        f=f,
        g=l1_oracle(inst.rho1),
        hbar=sq_norm_oracle(2.0 * inst.rho2),
        hunder=kyfan_oracle(inst.k, inst.rho2),
    )
    return Problem(
        name="slrme", spec=spec, y0=A.copy(), z0=A.copy(),
        metric=lambda Y: relative_error(Y, inst.A_G),
        stopping=StoppingRule("rel_y_step", 1e-6),
        max_iters=2000,
        algo_defaults={
            "drfdr": {"gamma_offset": 1e-12, "eta": 1.4},
            "gppa": {"gamma": 1.0 / (1.0 + 2.0 * inst.rho2)},
        },
        instance=inst,
    )


def generate_slrme(seed: int, blocks=(30, 40, 10, 20, 10), R: float = 0.15,
                   sigma: float = 0.1, rho1: float = 0.1, rho2: float = 0.1,
                   k: Optional[int] = None) -> SlrmeInstance:
    """Block-diagonal ``A_G`` with rank-one blocks ``v v^T`` (``v`` uniform on
    ``[-1, 1]``); Gaussian noise of std ``sigma`` on ``ceil(R m^2)`` entries."""
    blocks = tuple(int(b) for b in blocks)
    if not blocks or min(blocks) < 1:
        raise ValueError("block sizes must be positive")
    rng = np.random.default_rng(seed)
    m = sum(blocks)
    A_G = np.zeros((m, m))
    start = 0
    for size in blocks:
        v = rng.uniform(-1.0, 1.0, size)
        A_G[start:start + size, start:start + size] = np.outer(v, v)
        start += size
    count = math.ceil(R * m * m)
    idx = rng.choice(m * m, size=count, replace=False)
    noise = np.zeros(m * m)
    noise[idx] = sigma * rng.standard_normal(count)
    A = A_G + noise.reshape(m, m)
    return SlrmeInstance(A_G=A_G, A=A, rho1=rho1, rho2=rho2,
                         k=len(blocks) if k is None else int(k), R=R, sigma=sigma, blocks=blocks)


# Serialization: a directory holding meta.json and arrays.npz

_KINDS = {"toy": ToyInstance, "lrmc": LrmcInstance, "cs": CsInstance, "slrme": SlrmeInstance}


def save_instance(instance, path) -> Path:
    kind = next((k for k, cls in _KINDS.items() if isinstance(instance, cls)), None)
    if kind is None:
        raise TypeError(f"cannot serialize {type(instance).__name__}")
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    arrays, meta = {}, {"kind": kind, "rng": RNG_NAME, "fields": {}}
    for fld in fields(instance):
        value = getattr(instance, fld.name)
        if isinstance(value, np.ndarray):
            arrays[fld.name] = value
        else:
            meta["fields"][fld.name] = list(value) if isinstance(value, tuple) else value
    np.savez(path / "arrays.npz", **arrays)
    (path / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return path


def load_instance(path):
    path = Path(path)
    meta = json.loads((path / "meta.json").read_text())
    cls = _KINDS[meta["kind"]]
    with np.load(path / "arrays.npz") as data:
        kwargs = {name: data[name] for name in data.files}
    for name, value in meta["fields"].items():
        kwargs[name] = tuple(value) if isinstance(value, list) else value
    return cls(**kwargs)
