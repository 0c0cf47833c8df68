"""Isolation forest with a quantile-calibrated signed score.

Each tree is grown on a subsample of ``max_samples`` rows drawn without
replacement, up to depth ``ceil(log2(max_samples))``. A node splits on an
attribute drawn uniformly among those that are not constant in the node, at a
value uniform between the node's min and max on it. Nodes whose rows are all
identical become leaves.

Path length of x in a tree is the depth of its leaf plus ``c(size)`` of that
leaf. The anomaly measure is ``a(x) = 2 ** (-E[h(x)] / c(max_samples))`` and
the signed score is ``threshold - a(x)`` with ``threshold`` the
(1 - contamination) quantile of ``a`` over the training rows.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import digamma

from ..errors import InvalidParams
from .base import DetectorKind, as_matrix, check_train, pointwise, to_list

logger = logging.getLogger(__name__)

_EXACT_HARMONIC_MAX = 1000
_HARMONIC = np.concatenate([[0.0], [math.fsum(1.0 / k for k in range(1, m + 1)) for m in range(1, _EXACT_HARMONIC_MAX)]])


@dataclass(frozen=True)
class IforestParams:
    n_estimators: int = 100
    max_samples: int = 256
    contamination: float = 0.007
    rng_seed: int = 0

    def __post_init__(self):
        if self.n_estimators < 1:
            raise InvalidParams("n_estimators must be >= 1")
        if self.max_samples < 2:
            raise InvalidParams("max_samples must be >= 2")
        if not 0.0 < self.contamination < 0.5:
            raise InvalidParams("contamination must be in (0, 0.5)")


def harmonic(m):
    """H(m) = 1 + 1/2 + ... + 1/m, exact sums below 1000 and digamma above."""
    m = np.asarray(m, dtype=np.int64)
    small = m < _EXACT_HARMONIC_MAX
    out = np.empty(m.shape, dtype=np.float64)
    out[small] = _HARMONIC[np.clip(m[small], 0, None)]
    big = ~small
    if big.any():
        out[big] = digamma(m[big] + 1.0) + np.euler_gamma
    return out if out.ndim else float(out)


def average_path_length(n):
    """c(n) = 2 H(n-1) - 2 (n-1)/n, with c(n) = 0 for n <= 1."""
    n = np.asarray(n, dtype=np.int64)
    safe = np.maximum(n, 2)
    c = 2.0 * np.asarray(harmonic(safe - 1)) - 2.0 * (safe - 1) / safe
    c = np.where(n <= 1, 0.0, c)
    return c if c.ndim else float(c)


@dataclass(frozen=True)
class IsolationTree:
    """Flat node arrays; ``feature == -1`` marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    size: np.ndarray
    depth: np.ndarray

    @property
    def max_depth(self) -> int:
        return int(self.depth.max())

    def leaf_index(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(X.shape[0], dtype=np.int64)
        rows = np.arange(X.shape[0])
        for _ in range(self.max_depth):
            feat = self.feature[node]
            inner = feat >= 0
            if not inner.any():
                break
            go_left = X[rows[inner], feat[inner]] < self.threshold[node[inner]]
            node[inner] = np.where(go_left, self.left[node[inner]], self.right[node[inner]])
        return node

    def path_length(self, X: np.ndarray) -> np.ndarray:
        leaf = self.leaf_index(X)
        return self.depth[leaf] + average_path_length(self.size[leaf])


def grow_tree(S: np.ndarray, height_limit: int, rng: np.random.Generator) -> IsolationTree:
    feature, threshold, left, right, size, depth = [], [], [], [], [], []

    def new_node(n: int, d: int) -> int:
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        size.append(n)
        depth.append(d)
        return len(feature) - 1

    stack = [(new_node(S.shape[0], 0), S)]
    while stack:
        node, rows = stack.pop()
        d = depth[node]
        if d >= height_limit or rows.shape[0] <= 1:
            continue
        lo = rows.min(axis=0)
        hi = rows.max(axis=0)
        varying = np.flatnonzero(hi > lo)
        if varying.size == 0:
            continue
        q = int(varying[rng.integers(varying.size)])
        p = float(rng.uniform(lo[q], hi[q]))
        if p <= lo[q]:
            p = float(np.nextafter(lo[q], hi[q]))
        mask = rows[:, q] < p
        feature[node] = q
        threshold[node] = p
        lchild = new_node(int(mask.sum()), d + 1)
        rchild = new_node(int((~mask).sum()), d + 1)
        left[node] = lchild
        right[node] = rchild
        stack.append((rchild, rows[~mask]))
        stack.append((lchild, rows[mask]))
    return IsolationTree(
        feature=np.array(feature, dtype=np.int64),
        threshold=np.array(threshold, dtype=np.float64),
        left=np.array(left, dtype=np.int64),
        right=np.array(right, dtype=np.int64),
        size=np.array(size, dtype=np.int64),
        depth=np.array(depth, dtype=np.int64),
    )


@dataclass(frozen=True)
class IforestDetector:
    params: IforestParams
    trees: tuple[IsolationTree, ...]
    sample_size: int
    threshold: float
    feature_count: int
    kind: DetectorKind = DetectorKind.IFOREST

    def expected_path_length(self, data) -> np.ndarray:
        X = as_matrix(data, self.feature_count)
        total = np.zeros(X.shape[0])
        for tree in self.trees:
            total += tree.path_length(X)
        return total / len(self.trees)

    def anomaly_measure(self, data) -> np.ndarray:
        X = as_matrix(data, self.feature_count)
        return pointwise(self._measure, X)

    def _measure(self, X: np.ndarray) -> np.ndarray:
        return 2.0 ** (-self.expected_path_length(X) / average_path_length(self.sample_size))

    def decision_function(self, data) -> np.ndarray:
        return self.threshold - self.anomaly_measure(data)

    def to_dict(self) -> dict:
        p = self.params
        return {
            "params": {
                "n_estimators": p.n_estimators,
                "max_samples": p.max_samples,
                "contamination": p.contamination,
                "rng_seed": p.rng_seed,
            },
            "state": {
                "sample_size": self.sample_size,
                "threshold": self.threshold,
                "feature_count": self.feature_count,
                "trees": [
                    {
                        "feature": to_list(t.feature),
                        "threshold": to_list(t.threshold),
                        "left": to_list(t.left),
                        "right": to_list(t.right),
                        "size": to_list(t.size),
                        "depth": to_list(t.depth),
                    }
                    for t in self.trees
                ],
            },
        }

    @classmethod
    def from_dict(cls, doc: dict) -> IforestDetector:
        st = doc["state"]
        trees = tuple(
            IsolationTree(
                feature=np.asarray(t["feature"], dtype=np.int64),
                threshold=np.asarray(t["threshold"], dtype=np.float64),
                left=np.asarray(t["left"], dtype=np.int64),
                right=np.asarray(t["right"], dtype=np.int64),
                size=np.asarray(t["size"], dtype=np.int64),
                depth=np.asarray(t["depth"], dtype=np.int64),
            )
            for t in st["trees"]
        )
        return cls(
            params=IforestParams(**doc["params"]),
            trees=trees,
            sample_size=int(st["sample_size"]),
            threshold=float(st["threshold"]),
            feature_count=int(st["feature_count"]),
        )


def fit_iforest(train, params: IforestParams | None = None) -> IforestDetector:
    params = params or IforestParams()
    X = as_matrix(train)
    check_train(X)
    n, d = X.shape
    psi = params.max_samples
    if psi > n:
        warnings.warn(f"max_samples={psi} exceeds {n} training rows; using {n}", UserWarning)
        psi = n
    height_limit = math.ceil(math.log2(psi))
    rng = np.random.default_rng(params.rng_seed)
    trees = []
    for _ in range(params.n_estimators):
        idx = rng.choice(n, size=psi, replace=False)
        trees.append(grow_tree(X[idx], height_limit, rng))
    forest = IforestDetector(params=params, trees=tuple(trees), sample_size=psi, threshold=0.0, feature_count=d)
    measure = forest.anomaly_measure(X)
    threshold = float(np.quantile(measure, 1.0 - params.contamination))
    return IforestDetector(params=params, trees=forest.trees, sample_size=psi, threshold=threshold, feature_count=d)
