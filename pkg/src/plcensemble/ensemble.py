"""Score-level ensembles over the three base detectors.

Training fits OCSVM, OCNN and the isolation forest on normal data, records
each detector's training-score range, normalizes the scores into a
three-column matrix ``D`` and fits the voting state. Prediction scores new
rows with the same detectors, normalizes them with the stored ranges and
applies the voting rule. A final score below zero means anomaly.

Normalization keeps the sign: positive scores are scaled by the training
maximum onto [0, 1] and negative scores by the training minimum onto [-1, 0).
A plain min-max onto [0, 1] would make every normalized score nonnegative and
the zero threshold meaningless.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np
from scipy.spatial import cKDTree

from . import detectors as det
from .detectors import IforestParams, OcnnParams, OcsvmParams, TrainedDetector
from .errors import DegenerateMatrix, DimensionMismatch, InvalidParams, ModelFormatError
from .seeding import derive_seed

logger = logging.getLogger(__name__)

_EPS = 1e-12
_DENORM_MIN = np.nextafter(0.0, 1.0)
ENSEMBLE_FORMAT = "plcensemble.ensemble"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class FeatureRange:
    min: float
    max: float

    def __post_init__(self):
        if not (np.isfinite(self.min) and np.isfinite(self.max)):
            raise ValueError("feature range must be finite")
        if self.max < self.min:
            raise ValueError("feature range max < min")

    @classmethod
    def of(cls, scores: np.ndarray) -> FeatureRange:
        scores = np.asarray(scores, dtype=np.float64)
        return cls(float(scores.min()), float(scores.max()))


def normalize_scores(raw, feature_range: FeatureRange) -> np.ndarray:
    """Sign-preserving two-sided min-max scaling, clamped to [-1, 1].

    If the stored range is exactly (0, 0) the detector never produced a nonzero
    training score and every output is 0.
    """
    raw = np.asarray(raw, dtype=np.float64)
    if feature_range.min == 0.0 and feature_range.max == 0.0:
        return np.zeros_like(raw)
    pos_scale = max(feature_range.max, _EPS)
    neg_scale = -min(feature_range.min, -_EPS)
    out = np.where(raw >= 0.0, raw / pos_scale, raw / neg_scale)
    # keep tiny nonzero scores from underflowing to zero and losing their sign
    out = np.where(raw < 0.0, np.minimum(out, -_DENORM_MIN), out)
    out = np.where(raw > 0.0, np.maximum(out, _DENORM_MIN), out)
    return np.clip(out, -1.0, 1.0)


# ---------------------------------------------------------------------------
# voting rules; each accepts one row or a (n_samples, k) matrix


def vote_majority(scores) -> np.ndarray | float:
    """Mean of the entries on the side of the majority sign (zero counts as normal).

    The label is the mode of the per-detector labels; the magnitude only exists
    so that confidence histograms have something to show. A tie goes to normal.
    """
    S = np.asarray(scores, dtype=np.float64)
    M = np.atleast_2d(S)
    normal = M >= 0.0
    k = M.shape[1]
    n_normal = normal.sum(axis=1)
    majority_normal = 2 * n_normal >= k
    side = np.where(majority_normal[:, None], normal, ~normal)
    out = (M * side).sum(axis=1) / side.sum(axis=1)
    return float(out[0]) if S.ndim == 1 else out


def vote_max(scores) -> np.ndarray | float:
    S = np.asarray(scores, dtype=np.float64)
    out = S.max(axis=-1)
    return float(out) if S.ndim == 1 else out


def vote_soft(scores) -> np.ndarray | float:
    S = np.asarray(scores, dtype=np.float64)
    out = S.mean(axis=-1)
    return float(out) if S.ndim == 1 else out


def vote_weighted(scores, weights) -> np.ndarray | float:
    S = np.asarray(scores, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (S.shape[-1],):
        raise DimensionMismatch(f"{w.shape[0]} weights for {S.shape[-1]} detectors")
    out = (S * w).max(axis=-1)
    return float(out) if S.ndim == 1 else out


def vote_stacking(scores, meta: TrainedDetector) -> np.ndarray | float:
    S = np.asarray(scores, dtype=np.float64)
    out = det.score(meta, np.atleast_2d(S))
    return float(out[0]) if S.ndim == 1 else out


# ---------------------------------------------------------------------------
# weight learning


class WeightLearner(str, Enum):
    RMSE = "rmse"
    OLS = "ols"
    RIDGE = "ridge"
    KNN = "knn"


def _with_intercept(X: np.ndarray) -> np.ndarray:
    return np.column_stack([np.ones(X.shape[0]), X])


def ols_predict(X: np.ndarray, y: np.ndarray) -> np.ndarray:
    A = _with_intercept(X)
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    return A @ coef


def ridge_predict(X: np.ndarray, y: np.ndarray, lam: float) -> np.ndarray:
    """Ridge fit with an unpenalized intercept, evaluated in-sample."""
    x_mean = X.mean(axis=0)
    y_mean = y.mean()
    Xc = X - x_mean
    beta = np.linalg.solve(Xc.T @ Xc + lam * np.eye(X.shape[1]), Xc.T @ (y - y_mean))
    return Xc @ beta + y_mean


def knn_predict(X: np.ndarray, y: np.ndarray, k: int) -> np.ndarray:
    """Uniform average of the k nearest rows (Euclidean, the row itself included)."""
    k = min(k, X.shape[0])
    _, idx = cKDTree(X).query(X, k=k)
    idx = idx.reshape(X.shape[0], k)
    return y[idx].mean(axis=1)


def r_squared(y: np.ndarray, pred: np.ndarray) -> float:
    var = np.mean((y - y.mean()) ** 2)
    mse = np.mean((y - pred) ** 2)
    return float(1.0 - mse / var)


def learn_weights(
    D,
    learner: WeightLearner | str = WeightLearner.OLS,
    ridge_lambda: float = 1.0,
    knn_k: int = 5,
) -> np.ndarray:
    """Weight per column from how well the other columns predict it.

    R^2 clamped to [0, 1] for OLS, ridge and KNN; ``max(0, 1 - RMSE)`` of the
    OLS fit for the RMSE learner. A constant column gets weight 0.
    """
    learner = WeightLearner(learner)
    D = np.asarray(D, dtype=np.float64)
    if D.ndim != 2 or D.shape[0] < 2:
        raise DegenerateMatrix("weight learning needs a 2-D score matrix with at least 2 rows")
    k = D.shape[1]
    weights = np.zeros(k)
    for col in range(k):
        y = D[:, col]
        if np.ptp(y) == 0.0:
            continue
        X = np.delete(D, col, axis=1)
        if learner is WeightLearner.RIDGE:
            pred = ridge_predict(X, y, ridge_lambda)
        elif learner is WeightLearner.KNN:
            pred = knn_predict(X, y, knn_k)
        else:
            pred = ols_predict(X, y)
        if learner is WeightLearner.RMSE:
            w = 1.0 - np.sqrt(np.mean((y - pred) ** 2))
        else:
            w = r_squared(y, pred)
        weights[col] = min(max(w, 0.0), 1.0)
    return weights


# ---------------------------------------------------------------------------
# strategies and models


class StrategyKind(str, Enum):
    MAJORITY = "majority"
    MAXSCORE = "maxscore"
    SOFT = "soft"
    WEIGHTED = "weighted"
    STACKING = "stacking"


@dataclass(frozen=True)
class VotingStrategy:
    kind: StrategyKind
    learner: WeightLearner = WeightLearner.OLS
    ridge_lambda: float = 1.0
    knn_k: int = 5
    meta: IforestParams = field(default_factory=IforestParams)

    def __post_init__(self):
        object.__setattr__(self, "kind", StrategyKind(self.kind))
        object.__setattr__(self, "learner", WeightLearner(self.learner))
        if self.knn_k < 1:
            raise InvalidParams("knn_k must be >= 1")
        if self.ridge_lambda < 0:
            raise InvalidParams("ridge_lambda must be >= 0")

    @property
    def name(self) -> str:
        if self.kind is StrategyKind.WEIGHTED:
            return f"wv-{self.learner.value}"
        return self.kind.value

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "learner": self.learner.value,
            "ridge_lambda": self.ridge_lambda,
            "knn_k": self.knn_k,
            "meta": {
                "n_estimators": self.meta.n_estimators,
                "max_samples": self.meta.max_samples,
                "contamination": self.meta.contamination,
                "rng_seed": self.meta.rng_seed,
            },
        }

    @classmethod
    def from_dict(cls, doc: dict) -> VotingStrategy:
        return cls(
            kind=doc["kind"],
            learner=doc["learner"],
            ridge_lambda=float(doc["ridge_lambda"]),
            knn_k=int(doc["knn_k"]),
            meta=IforestParams(**doc["meta"]),
        )


def all_strategies(seed: int = 0) -> list[VotingStrategy]:
    """Eight configurations: three plain votes, four weighted learners, stacking."""
    meta = IforestParams(rng_seed=derive_seed(seed, "meta_iforest"))
    out = [VotingStrategy(k) for k in (StrategyKind.MAJORITY, StrategyKind.MAXSCORE, StrategyKind.SOFT)]
    out += [VotingStrategy(StrategyKind.WEIGHTED, learner=lrn) for lrn in WeightLearner]
    out.append(VotingStrategy(StrategyKind.STACKING, meta=meta))
    return out


@dataclass(frozen=True)
class DetectorParams:
    ocsvm: OcsvmParams = field(default_factory=OcsvmParams)
    ocnn: OcnnParams = field(default_factory=OcnnParams)
    iforest: IforestParams = field(default_factory=IforestParams)

    @classmethod
    def seeded(cls, seed: int, **overrides) -> DetectorParams:
        base = cls(**overrides)
        return cls(
            ocsvm=base.ocsvm,
            ocnn=replace(base.ocnn, rng_seed=derive_seed(seed, "ocnn")),
            iforest=replace(base.iforest, rng_seed=derive_seed(seed, "iforest")),
        )


@dataclass(frozen=True)
class BaseFit:
    """Fitted base detectors plus their training-score ranges and normalized matrix."""

    detectors: tuple[TrainedDetector, ...]
    ranges: tuple[FeatureRange, ...]
    train_scores: np.ndarray  # normalized, (n_train, 3)


def fit_base(train, params: DetectorParams | None = None) -> BaseFit:
    params = params or DetectorParams()
    X = det.base.as_matrix(train)
    fitted = (
        det.fit_ocsvm(X, params.ocsvm),
        det.fit_ocnn(X, params.ocnn),
        det.fit_iforest(X, params.iforest),
    )
    raw = [det.score(d, X) for d in fitted]
    ranges = tuple(FeatureRange.of(r) for r in raw)
    D = np.column_stack([normalize_scores(r, fr) for r, fr in zip(raw, ranges)])
    for d, fr in zip(fitted, ranges):
        logger.info("%s training score range [%.6g, %.6g]", d.kind.value, fr.min, fr.max)
    return BaseFit(fitted, ranges, D)


@dataclass(frozen=True)
class EnsembleModel:
    detectors: tuple[TrainedDetector, ...]
    ranges: tuple[FeatureRange, ...]
    strategy: VotingStrategy
    weights: np.ndarray | None = None
    meta: TrainedDetector | None = None

    @property
    def feature_count(self) -> int:
        return self.detectors[0].feature_count

    def normalized_scores(self, data) -> np.ndarray:
        X = det.base.as_matrix(data, self.feature_count)
        return np.column_stack(
            [normalize_scores(det.score(d, X), fr) for d, fr in zip(self.detectors, self.ranges)]
        ).reshape(X.shape[0], len(self.detectors))

    def vote(self, D: np.ndarray) -> np.ndarray:
        kind = self.strategy.kind
        if D.shape[0] == 0:
            return np.empty(0)
        if kind is StrategyKind.MAJORITY:
            return vote_majority(D)
        if kind is StrategyKind.MAXSCORE:
            return vote_max(D)
        if kind is StrategyKind.SOFT:
            return vote_soft(D)
        if kind is StrategyKind.WEIGHTED:
            return vote_weighted(D, self.weights)
        return vote_stacking(D, self.meta)


def fit_ensemble(
    train,
    strategy: VotingStrategy,
    params: DetectorParams | None = None,
    base: BaseFit | None = None,
) -> EnsembleModel:
    """Fit base detectors (unless ``base`` is given) and the strategy's voting state."""
    if base is None:
        base = fit_base(train, params)
    D = base.train_scores
    weights = meta = None
    if strategy.kind is StrategyKind.WEIGHTED:
        weights = learn_weights(D, strategy.learner, strategy.ridge_lambda, strategy.knn_k)
        logger.info("%s weights %s", strategy.name, np.array2string(weights, precision=4))
    elif strategy.kind is StrategyKind.STACKING:
        meta = det.fit_iforest(D, strategy.meta)
    return EnsembleModel(base.detectors, base.ranges, strategy, weights, meta)


def predict_ensemble(model: EnsembleModel, data) -> tuple[np.ndarray, np.ndarray]:
    """Return (labels, final scores); label 1 (anomaly) exactly when the score is < 0."""
    final = model.vote(model.normalized_scores(data))
    return (final < 0.0).astype(np.int64), final


# ---------------------------------------------------------------------------
# serialization


def model_to_document(model: EnsembleModel) -> dict:
    state: dict = {}
    if model.weights is not None:
        state["weights"] = model.weights.tolist()
    if model.meta is not None:
        state["meta"] = det.detector_to_document(model.meta)
    return {
        "format": ENSEMBLE_FORMAT,
        "version": FORMAT_VERSION,
        "strategy": model.strategy.to_dict(),
        "detectors": [det.detector_to_document(d) for d in model.detectors],
        "ranges": [[fr.min, fr.max] for fr in model.ranges],
        "state": state,
    }


def model_from_document(doc: dict) -> EnsembleModel:
    if doc.get("format") != ENSEMBLE_FORMAT:
        raise ModelFormatError(f"not an ensemble document: format={doc.get('format')!r}")
    if doc.get("version") != FORMAT_VERSION:
        raise ModelFormatError(f"unsupported ensemble document version {doc.get('version')!r}")
    try:
        state = doc["state"]
        weights = np.asarray(state["weights"], dtype=np.float64) if "weights" in state else None
        meta = det.detector_from_document(state["meta"]) if "meta" in state else None
        return EnsembleModel(
            detectors=tuple(det.detector_from_document(d) for d in doc["detectors"]),
            ranges=tuple(FeatureRange(float(lo), float(hi)) for lo, hi in doc["ranges"]),
            strategy=VotingStrategy.from_dict(doc["strategy"]),
            weights=weights,
            meta=meta,
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ModelFormatError):
            raise
        raise ModelFormatError(f"malformed ensemble document: {exc}") from exc


def dumps(model: EnsembleModel) -> str:
    return json.dumps(model_to_document(model), allow_nan=False)


def loads(text: str) -> EnsembleModel:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"not valid JSON: {exc}") from exc
    return model_from_document(doc)
