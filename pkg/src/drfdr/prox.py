"""Proximal and subgradient operators used by the experiments, plus oracle
factories wrapping them."""

from __future__ import annotations

import threading
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
from scipy.sparse.linalg import ArpackError, ArpackNoConvergence, svds

from .core import INF, ProxOracle, SmoothOracle, SubgradOracle, norm

__all__ = [
    "TruncatedSVD",
    "truncated_svd",
    "soft_threshold",
    "project_rank",
    "numerical_rank",
    "prox_quadratic_masked",
    "prox_quadratic_full",
    "prox_quadratic_leastsquares",
    "LeastSquaresProx",
    "subgrad_l2norm",
    "kyfan2k_sq",
    "subgrad_kyfan2k_sq",
    "l1_oracle",
    "rank_indicator_oracle",
    "l2norm_oracle",
    "kyfan_oracle",
    "sq_norm_oracle",
]


@dataclass(frozen=True)
class TruncatedSVD:
    U: np.ndarray
    singular_values: np.ndarray
    V: np.ndarray

    def matrix(self) -> np.ndarray:
        return (self.U * self.singular_values) @ self.V.T


# Below these sizes a dense SVD is cheap enough; above them, a Lanczos
# solver with a fixed start vector is several times faster and deterministic.
ITERATIVE_MIN_DIM = 64
ITERATIVE_MAX_FRACTION = 0.1


def _svd_dense(X: np.ndarray, r: int) -> TruncatedSVD:
    U, s, Vt = np.linalg.svd(X, full_matrices=False)
    return TruncatedSVD(U[:, :r], s[:r], Vt[:r].T)


def _svd_lanczos(X: np.ndarray, r: int) -> TruncatedSVD:
    v0 = np.random.default_rng(0).standard_normal(min(X.shape))
    U, s, Vt = svds(X, k=r, v0=v0, tol=0, solver="arpack")
    order = np.argsort(s)[::-1]
    return TruncatedSVD(U[:, order], s[order], Vt[order].T)


def truncated_svd(X: np.ndarray, r: int, method: str = "auto") -> TruncatedSVD:
    """Top-``r`` singular triplets.

    ``method`` is ``"dense"`` (full LAPACK SVD), ``"lanczos"`` (ARPACK with a
    fixed start vector) or ``"auto"``, which uses Lanczos only for large
    matrices and small ``r`` and falls back to the dense SVD if it fails.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError("truncated_svd expects a matrix")
    if not 0 <= r <= min(X.shape):
        raise ValueError(f"rank {r} out of range for shape {X.shape}")
    if method not in ("auto", "dense", "lanczos"):
        raise ValueError(f"unknown method {method!r}")
    small = min(X.shape)
    if method == "auto":
        method = ("lanczos" if small >= ITERATIVE_MIN_DIM and 1 <= r <= ITERATIVE_MAX_FRACTION * small
                  else "dense")
    if method == "lanczos" and 1 <= r < small and np.any(X):
        try:
            return _svd_lanczos(X, r)
        except (ArpackError, ArpackNoConvergence):
            pass
    return _svd_dense(X, r)


def soft_threshold(u, tau: float) -> np.ndarray:
    """Entrywise shrinkage ``sign(u) max(|u| - tau, 0)``."""
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    u = np.asarray(u, dtype=float)
    if tau == 0:
        return u.copy()
    return np.where(np.abs(u) > tau, u - np.copysign(tau, u), 0.0)


def project_rank(X: np.ndarray, r: int) -> np.ndarray:
    """Best rank-``r`` approximation in Frobenius norm (a projection onto the
    rank-``r`` matrices, hence a prox of their indicator for any stepsize)."""
    return truncated_svd(X, r).matrix()


def numerical_rank(X: np.ndarray, rtol: float = 1e-8) -> int:
    s = np.linalg.svd(np.asarray(X, dtype=float), compute_uv=False)
    if s.size == 0 or s[0] == 0:
        return 0
    return int(np.sum(s > rtol * s[0]))


def prox_quadratic_masked(Z: np.ndarray, M: np.ndarray, mask: np.ndarray, gamma: float) -> np.ndarray:
    """Prox of ``1/2 ||P_mask(X - M)||^2``: observed entries move toward ``M``."""
    Z = np.asarray(Z, dtype=float)
    if Z.shape != np.shape(M) or Z.shape != np.shape(mask):
        raise ValueError("shape mismatch")
    return np.where(mask, (Z + gamma * M) / (1.0 + gamma), Z)


def prox_quadratic_full(Z: np.ndarray, A: np.ndarray, gamma: float) -> np.ndarray:
    """Prox of ``1/2 ||X - A||^2``, i.e. ``(gamma A + Z) / (1 + gamma)``."""
    Z = np.asarray(Z, dtype=float)
    if Z.shape != np.shape(A):
        raise ValueError("shape mismatch")
    return (gamma * A + Z) / (1.0 + gamma)


def prox_quadratic_leastsquares(z, A, b, gamma: float, weight: float = 1.0) -> np.ndarray:
    """Prox of ``(weight/2) ||A x - b||^2``.

    Solves ``(weight gamma A^T A + I) x = z + weight gamma A^T b``. With
    ``weight = 1`` this is ``(A^T A + I/gamma)^{-1} (A^T b + z/gamma)``; the
    toy objective ``||A x||^2`` corresponds to ``weight = 2, b = 0``.
    """
    return LeastSquaresProx(A, b, weight)(z, gamma)


class LeastSquaresProx:
    """Prox of ``(weight/2) ||A x - b||^2`` with a cached Cholesky factor.

    The factor of the most recent stepsize is kept; a new stepsize triggers
    refactorization. Safe to share between threads.
    """

    def __init__(self, A, b=None, weight: float = 1.0):
        self.A = np.asarray(A, dtype=float)
        if self.A.ndim != 2:
            raise ValueError("A must be a matrix")
        self.b = np.zeros(self.A.shape[0]) if b is None else np.asarray(b, dtype=float)
        if self.b.shape != (self.A.shape[0],):
            raise ValueError("b has the wrong length")
        self.weight = float(weight)
        self._gram = self.A.T @ self.A
        self._Atb = self.A.T @ self.b
        self._lock = threading.Lock()
        self._cache = None

    def factor(self, gamma: float):
        with self._lock:
            if self._cache is not None and self._cache[0] == gamma:
                return self._cache[1]
            K = self.weight * gamma * self._gram + np.eye(self._gram.shape[0])
            try:
                cf = sla.cho_factor(K, lower=True, check_finite=True)
            except sla.LinAlgError as exc:
                raise np.linalg.LinAlgError(
                    f"least-squares prox system not positive definite at gamma={gamma}") from exc
            self._cache = (gamma, cf)
            return cf

    def __call__(self, z, gamma: float) -> np.ndarray:
        if not gamma > 0:
            raise ValueError("gamma must be positive")
        z = np.asarray(z, dtype=float)
        rhs = z + self.weight * gamma * self._Atb
        return sla.cho_solve(self.factor(gamma), rhs)

    def eval(self, x) -> float:
        r = self.A @ x - self.b
        return 0.5 * self.weight * float(r @ r)

    def grad(self, x) -> np.ndarray:
        return self.weight * (self._gram @ x - self._Atb)


def subgrad_l2norm(y, rho: float = 1.0) -> np.ndarray:
    """Subgradient of ``rho ||y||``: ``rho y/||y||``, and zero at the origin."""
    y = np.asarray(y, dtype=float)
    n = norm(y)
    if n == 0.0:
        return np.zeros_like(y)
    return (rho / n) * y


def kyfan2k_sq(X: np.ndarray, k: int) -> float:
    """Sum of the ``k`` largest squared singular values."""
    X = np.asarray(X, dtype=float)
    if not 1 <= k <= min(X.shape):
        raise ValueError(f"k={k} out of range for shape {X.shape}")
    s = np.linalg.svd(X, compute_uv=False)
    return float(np.sum(s[:k] ** 2))


def subgrad_kyfan2k_sq(X: np.ndarray, k: int, rho2: float = 1.0) -> np.ndarray:
    """``2 rho2 U_k S_k V_k^T``, a subgradient of ``rho2 * kyfan2k_sq(., k)``.

    Ties between the k-th and (k+1)-th singular values are resolved by the
    SVD's own ordering.
    """
    X = np.asarray(X, dtype=float)
    if not 1 <= k <= min(X.shape):
        raise ValueError(f"k={k} out of range for shape {X.shape}")
    return 2.0 * rho2 * truncated_svd(X, k).matrix()


# Oracle factories

def l1_oracle(rho: float) -> ProxOracle:
    return ProxOracle(eval=lambda x: rho * float(np.abs(x).sum()),
                      prox=lambda u, t: soft_threshold(u, rho * t))


def rank_indicator_oracle(r: int, rtol: float = 1e-8) -> ProxOracle:
    return ProxOracle(eval=lambda X: 0.0 if numerical_rank(X, rtol) <= r else INF,
                      prox=lambda U, t: project_rank(U, r))


def l2norm_oracle(rho: float) -> SubgradOracle:
    return SubgradOracle(eval=lambda y: rho * norm(y),
                         subgrad=lambda y: subgrad_l2norm(y, rho))


def kyfan_oracle(k: int, rho2: float) -> SubgradOracle:
    return SubgradOracle(eval=lambda X: rho2 * kyfan2k_sq(X, k),
                         subgrad=lambda X: subgrad_kyfan2k_sq(X, k, rho2))


def sq_norm_oracle(weight: float) -> SmoothOracle:
    """``(weight/2) ||x||^2``; gradient ``weight x``."""
    return SmoothOracle(
        eval=lambda x: 0.5 * weight * float(np.vdot(x, x)),
        grad=lambda x: weight * np.asarray(x, dtype=float),
        lipschitz=abs(weight),
        alpha=weight,
        prox=lambda u, t: np.asarray(u, dtype=float) / (1.0 + weight * t),
    )
