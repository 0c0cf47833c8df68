"""One-class neural network: one hidden layer, linear output, quantile offset.

Objective, minimized over the weights with the offset ``r`` held fixed between
refreshes::

    1/2 ||w||^2 + 1/2 ||V||^2 + 1/(nu n) * sum_i max(0, r - w . g(V [x_i, 1])) - r

``r`` is reset to the nu-quantile of the training outputs every
``quantile_update_every`` epochs and once more after the last epoch, so about
a nu fraction of the training rows ends up below it. Weights are updated with
minibatch Adam steps.

The hidden activation is the Gaussian bump ``g(z) = exp(-z^2 / 2)``. It is
bounded like tanh but decays away from the data, so outputs for far-away
points fall to zero and land below a positive offset.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InvalidParams
from .base import DetectorKind, as_matrix, check_train, pointwise, to_list

_BETA1, _BETA2, _EPS = 0.9, 0.999, 1e-8


@dataclass(frozen=True)
class OcnnParams:
    hidden_units: int = 32
    nu: float = 0.05
    learning_rate: float = 1e-3
    epochs: int = 200
    quantile_update_every: int = 10
    batch_size: int = 256
    init_scale: float | None = None  # None -> 1/sqrt(fan_in)
    rng_seed: int = 0

    def __post_init__(self):
        if self.hidden_units < 1:
            raise InvalidParams("hidden_units must be >= 1")
        if not 0.0 < self.nu <= 1.0:
            raise InvalidParams("nu must be in (0, 1]")
        if self.learning_rate <= 0:
            raise InvalidParams("learning_rate must be positive")
        if self.epochs < 1 or self.quantile_update_every < 1 or self.batch_size < 1:
            raise InvalidParams("epochs, quantile_update_every and batch_size must be >= 1")


def _hidden(X: np.ndarray, V: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    z = X @ V[:-1] + V[-1]
    return z, np.exp(-0.5 * z * z)


@dataclass(frozen=True)
class OcnnDetector:
    params: OcnnParams
    V: np.ndarray  # (n_features + 1, hidden_units); last row is the hidden bias
    w: np.ndarray
    r: float
    feature_count: int
    kind: DetectorKind = DetectorKind.OCNN

    def output(self, X: np.ndarray) -> np.ndarray:
        return _hidden(X, self.V)[1] @ self.w

    def decision_function(self, data) -> np.ndarray:
        X = as_matrix(data, self.feature_count)
        return pointwise(lambda A: self.output(A) - self.r, X)

    def to_dict(self) -> dict:
        p = self.params
        return {
            "params": {
                "hidden_units": p.hidden_units,
                "nu": p.nu,
                "learning_rate": p.learning_rate,
                "epochs": p.epochs,
                "quantile_update_every": p.quantile_update_every,
                "batch_size": p.batch_size,
                "init_scale": p.init_scale,
                "rng_seed": p.rng_seed,
            },
            "state": {
                "V": to_list(self.V),
                "w": to_list(self.w),
                "r": self.r,
                "feature_count": self.feature_count,
            },
        }

    @classmethod
    def from_dict(cls, doc: dict) -> OcnnDetector:
        st = doc["state"]
        d = int(st["feature_count"])
        params = OcnnParams(**doc["params"])
        return cls(
            params=params,
            V=np.asarray(st["V"], dtype=np.float64).reshape(d + 1, params.hidden_units),
            w=np.asarray(st["w"], dtype=np.float64),
            r=float(st["r"]),
            feature_count=d,
        )


def fit_ocnn(train, params: OcnnParams | None = None) -> OcnnDetector:
    params = params or OcnnParams()
    X = as_matrix(train)
    check_train(X)
    n, d = X.shape
    H = params.hidden_units
    rng = np.random.default_rng(params.rng_seed)
    v_scale = params.init_scale if params.init_scale is not None else 1.0 / np.sqrt(d + 1)
    w_scale = params.init_scale if params.init_scale is not None else 1.0 / np.sqrt(H)
    V = rng.uniform(-v_scale, v_scale, size=(d + 1, H))
    w = rng.uniform(-w_scale, w_scale, size=H)
    nu = params.nu
    lr = params.learning_rate

    def quantile(V, w):
        return float(np.quantile(_hidden(X, V)[1] @ w, nu))

    r = quantile(V, w)
    mV, vV = np.zeros_like(V), np.zeros_like(V)
    mw, vw = np.zeros_like(w), np.zeros_like(w)
    step = 0
    bs = min(params.batch_size, n)
    for epoch in range(1, params.epochs + 1):
        order = rng.permutation(n)
        for start in range(0, n, bs):
            xb = X[order[start : start + bs]]
            z, h = _hidden(xb, V)
            y = h @ w
            coef = (y < r) / (nu * xb.shape[0])
            gw = w - h.T @ coef
            gz = -(coef[:, None] * w[None, :]) * (-z * h)
            gV = V.copy()
            gV[:-1] += xb.T @ gz
            gV[-1] += gz.sum(axis=0)

            step += 1
            c1 = 1.0 - _BETA1**step
            c2 = 1.0 - _BETA2**step
            mw = _BETA1 * mw + (1 - _BETA1) * gw
            vw = _BETA2 * vw + (1 - _BETA2) * gw * gw
            mV = _BETA1 * mV + (1 - _BETA1) * gV
            vV = _BETA2 * vV + (1 - _BETA2) * gV * gV
            w = w - lr * (mw / c1) / (np.sqrt(vw / c2) + _EPS)
            V = V - lr * (mV / c1) / (np.sqrt(vV / c2) + _EPS)
        if epoch % params.quantile_update_every == 0:
            r = quantile(V, w)
    r = quantile(V, w)
    return OcnnDetector(params=params, V=V, w=w, r=r, feature_count=d)
