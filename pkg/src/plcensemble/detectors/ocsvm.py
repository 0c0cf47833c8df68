"""One-class SVM with an RBF kernel, solved in the dual by pairwise coordinate steps.

Dual problem (training rows x_1..x_n)::

    min_a  1/2 a^T K a    s.t.  0 <= a_i <= 1/(nu n),  sum_i a_i = 1

Identical training rows have identical kernel rows, so the problem only
depends on the summed coefficient of each distinct row. The solver therefore
works on the sorted distinct rows with box bounds ``count/(nu n)``; this is
exact, and it makes the fit independent of training-row order.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np

from ..errors import InvalidParams, NonConvergence
from .base import DetectorKind, as_matrix, check_train, pointwise, to_list

logger = logging.getLogger(__name__)

_FULL_KERNEL_MAX = 4000
_CACHE_COLUMNS = 512
_TAU = 1e-12
_ROUNDING_SLACK = 1e-12


@dataclass(frozen=True)
class OcsvmParams:
    nu: float = 0.05
    rbf_gamma: float | None = None  # None -> 1 / n_features
    tolerance: float = 1e-4
    max_passes: int = 50

    def __post_init__(self):
        if not 0.0 < self.nu <= 1.0:
            raise InvalidParams("nu must be in (0, 1]")
        if self.rbf_gamma is not None and self.rbf_gamma <= 0:
            raise InvalidParams("rbf_gamma must be positive")
        if self.tolerance <= 0:
            raise InvalidParams("tolerance must be positive")
        if self.max_passes < 1:
            raise InvalidParams("max_passes must be >= 1")


def rbf_kernel(A: np.ndarray, B: np.ndarray, gamma: float) -> np.ndarray:
    sq = (A * A).sum(axis=1)[:, None] + (B * B).sum(axis=1)[None, :] - 2.0 * (A @ B.T)
    np.maximum(sq, 0.0, out=sq)
    return np.exp(-gamma * sq)


class _KernelColumns:
    """Kernel column access; full matrix for small problems, small cache otherwise."""

    def __init__(self, U: np.ndarray, gamma: float):
        self.U = U
        self.gamma = gamma
        self.full = rbf_kernel(U, U, gamma) if U.shape[0] <= _FULL_KERNEL_MAX else None
        self._cache: dict[int, np.ndarray] = {}

    def column(self, i: int) -> np.ndarray:
        if self.full is not None:
            return self.full[:, i]
        col = self._cache.get(i)
        if col is None:
            if len(self._cache) >= _CACHE_COLUMNS:
                self._cache.pop(next(iter(self._cache)))
            col = rbf_kernel(self.U, self.U[i : i + 1], self.gamma)[:, 0]
            self._cache[i] = col
        return col

    def matvec(self, a: np.ndarray) -> np.ndarray:
        if self.full is not None:
            return self.full @ a
        nz = np.flatnonzero(a)
        out = np.zeros(self.U.shape[0])
        for s in range(0, nz.size, 256):
            idx = nz[s : s + 256]
            out += rbf_kernel(self.U, self.U[idx], self.gamma) @ a[idx]
        return out


@dataclass(frozen=True)
class OcsvmDetector:
    params: OcsvmParams
    gamma: float
    support_vectors: np.ndarray
    dual_coef: np.ndarray  # summed coefficient per support vector (sums to 1)
    support_counts: np.ndarray  # training rows merged into each support vector
    rho: float
    n_train: int
    feature_count: int
    converged: bool
    kind: DetectorKind = DetectorKind.OCSVM

    def decision_function(self, data) -> np.ndarray:
        X = as_matrix(data, self.feature_count)
        return pointwise(self._raw, X)

    def _raw(self, X: np.ndarray) -> np.ndarray:
        return rbf_kernel(X, self.support_vectors, self.gamma) @ self.dual_coef - self.rho

    @property
    def per_sample_dual(self) -> np.ndarray:
        """Dual coefficient of each underlying training row behind a support vector."""
        return self.dual_coef / self.support_counts

    def to_dict(self) -> dict:
        return {
            "params": {
                "nu": self.params.nu,
                "rbf_gamma": self.params.rbf_gamma,
                "tolerance": self.params.tolerance,
                "max_passes": self.params.max_passes,
            },
            "state": {
                "gamma": self.gamma,
                "support_vectors": to_list(self.support_vectors),
                "dual_coef": to_list(self.dual_coef),
                "support_counts": to_list(self.support_counts),
                "rho": self.rho,
                "n_train": self.n_train,
                "feature_count": self.feature_count,
                "converged": self.converged,
            },
        }

    @classmethod
    def from_dict(cls, doc: dict) -> OcsvmDetector:
        st = doc["state"]
        d = int(st["feature_count"])
        return cls(
            params=OcsvmParams(**doc["params"]),
            gamma=float(st["gamma"]),
            support_vectors=np.asarray(st["support_vectors"], dtype=np.float64).reshape(-1, d),
            dual_coef=np.asarray(st["dual_coef"], dtype=np.float64),
            support_counts=np.asarray(st["support_counts"], dtype=np.int64),
            rho=float(st["rho"]),
            n_train=int(st["n_train"]),
            feature_count=d,
            converged=bool(st["converged"]),
        )


def _initial_alpha(upper: np.ndarray) -> np.ndarray:
    # fill bounds in index order until the coefficients sum to one
    alpha = np.zeros_like(upper)
    remaining = 1.0
    for i, ub in enumerate(upper):
        take = min(ub, remaining)
        alpha[i] = take
        remaining -= take
        if remaining <= 0.0:
            break
    return alpha


def _solve(kc: _KernelColumns, upper: np.ndarray, tol: float, max_iter: int):
    m = upper.shape[0]
    alpha = _initial_alpha(upper)
    grad = kc.matvec(alpha)
    gap = np.inf
    it = 0
    for it in range(max_iter):
        can_up = alpha < upper
        can_down = alpha > 0.0
        i = int(np.argmin(np.where(can_up, grad, np.inf)))
        j = int(np.argmax(np.where(can_down, grad, -np.inf)))
        gap = grad[j] - grad[i]
        if gap < tol:
            break
        Ki = kc.column(i)
        Kj = kc.column(j)
        eta = max(Ki[i] + Kj[j] - 2.0 * Ki[j], _TAU)
        delta = min(gap / eta, upper[i] - alpha[i], alpha[j])
        alpha[i] += delta
        alpha[j] -= delta
        if upper[i] - alpha[i] < 1e-15 * upper[i]:
            alpha[i] = upper[i]
        if alpha[j] < 1e-15 * upper[j]:
            alpha[j] = 0.0
        grad += delta * (Ki - Kj)
    else:
        it = max_iter
    logger.debug("ocsvm solver: %d iterations over %d distinct rows, gap %.3g", it, m, gap)
    return alpha, grad, gap


def _offset(alpha: np.ndarray, grad: np.ndarray, upper: np.ndarray) -> float:
    # Margin support vectors agree on rho only up to the KKT tolerance; taking the
    # smallest keeps every one of them on the normal side (score >= 0).
    free = (alpha > 0.0) & (alpha < upper)
    if free.any():
        rho = float(grad[free].min())
        return rho - _ROUNDING_SLACK * max(1.0, abs(rho))
    at_upper = alpha >= upper
    at_zero = alpha <= 0.0
    lo = grad[at_upper].max() if at_upper.any() else None
    hi = grad[at_zero].min() if at_zero.any() else None
    if lo is None:
        return float(hi)
    if hi is None:
        return float(lo)
    return float(0.5 * (lo + hi))


def fit_ocsvm(train, params: OcsvmParams | None = None) -> OcsvmDetector:
    params = params or OcsvmParams()
    X = as_matrix(train)
    check_train(X)
    n, d = X.shape
    gamma = params.rbf_gamma if params.rbf_gamma is not None else 1.0 / d
    U, counts = np.unique(X, axis=0, return_counts=True)
    upper = counts / (params.nu * n)
    kc = _KernelColumns(U, gamma)
    alpha, grad, gap = _solve(kc, upper, params.tolerance, params.max_passes * max(U.shape[0], 100))
    converged = bool(gap < 10 * params.tolerance)
    if not converged:
        warnings.warn(f"OCSVM stopped with KKT gap {gap:.3g} (tolerance {params.tolerance})", NonConvergence)
    rho = _offset(alpha, grad, upper)
    sv = alpha > 0.0
    return OcsvmDetector(
        params=params,
        gamma=float(gamma),
        support_vectors=U[sv],
        dual_coef=alpha[sv],
        support_counts=counts[sv],
        rho=rho,
        n_train=n,
        feature_count=d,
        converged=converged,
    )
