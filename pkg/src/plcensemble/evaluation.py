"""Confusion-matrix metrics, score histograms and multi-model comparison.

*Normal* is the positive class and *anomaly* the negative one, so

    tp  normal predicted normal        tn  anomaly predicted anomaly
    fp  anomaly predicted normal       fn  normal predicted anomaly

Precision, recall and F1 are computed per class and averaged with weights
equal to each class's support, which makes accuracy equal weighted recall.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .dataset import ANOMALY, NORMAL, SimConfig, standard_test_configs, simulate_tlight
from .ensemble import EnsembleModel, predict_ensemble
from .errors import LengthMismatch
from .seeding import derive_seed
from .stats import AnovaResult, anova_oneway

logger = logging.getLogger(__name__)

OUTCOMES = ("TP", "TN", "FP", "FN")
METRIC_NAMES = ("accuracy", "precision", "recall", "f1")
DEFAULT_BINS = 20


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    tn: int
    fp: int
    fn: int

    @property
    def n(self) -> int:
        return self.tp + self.tn + self.fp + self.fn


@dataclass(frozen=True)
class ClassReport:
    precision: float
    recall: float
    f1: float
    support: int


@dataclass(frozen=True)
class MetricsReport:
    accuracy: float
    precision: float
    recall: float
    f1: float
    normal: ClassReport
    anomaly: ClassReport
    undefined: tuple[str, ...] = ()  # ratios with a zero denominator, reported as 0

    def as_dict(self) -> dict[str, float]:
        return {name: getattr(self, name) for name in METRIC_NAMES}


def _labels(a, name: str) -> np.ndarray:
    arr = np.asarray(a).astype(np.int64).reshape(-1)
    if not np.isin(arr, (NORMAL, ANOMALY)).all():
        raise ValueError(f"{name} must contain only 0 (normal) and 1 (anomaly)")
    return arr


def confusion(labels_true, labels_pred) -> ConfusionCounts:
    t = _labels(labels_true, "labels_true")
    p = _labels(labels_pred, "labels_pred")
    if t.shape != p.shape:
        raise LengthMismatch(f"{t.size} true labels vs {p.size} predictions")
    return ConfusionCounts(
        tp=int(np.sum((t == NORMAL) & (p == NORMAL))),
        tn=int(np.sum((t == ANOMALY) & (p == ANOMALY))),
        fp=int(np.sum((t == ANOMALY) & (p == NORMAL))),
        fn=int(np.sum((t == NORMAL) & (p == ANOMALY))),
    )


def _ratio(num: int, den: int, name: str, undefined: list[str]) -> float:
    if den == 0:
        undefined.append(name)
        return 0.0
    return num / den


def _f1(p: float, r: float) -> float:
    return 0.0 if p + r == 0 else 2.0 * p * r / (p + r)


def metrics(counts: ConfusionCounts) -> MetricsReport:
    n = counts.n
    if n < 1:
        raise ValueError("metrics need at least one sample")
    undefined: list[str] = []
    p_norm = _ratio(counts.tp, counts.tp + counts.fp, "precision_normal", undefined)
    r_norm = _ratio(counts.tp, counts.tp + counts.fn, "recall_normal", undefined)
    p_anom = _ratio(counts.tn, counts.tn + counts.fn, "precision_anomaly", undefined)
    r_anom = _ratio(counts.tn, counts.tn + counts.fp, "recall_anomaly", undefined)
    normal = ClassReport(p_norm, r_norm, _f1(p_norm, r_norm), counts.tp + counts.fn)
    anomaly = ClassReport(p_anom, r_anom, _f1(p_anom, r_anom), counts.tn + counts.fp)

    def weighted(attr: str) -> float:
        return (getattr(normal, attr) * normal.support + getattr(anomaly, attr) * anomaly.support) / n

    return MetricsReport(
        accuracy=(counts.tp + counts.tn) / n,
        precision=weighted("precision"),
        recall=weighted("recall"),
        f1=weighted("f1"),
        normal=normal,
        anomaly=anomaly,
        undefined=tuple(undefined),
    )


def evaluate(labels_true, labels_pred) -> MetricsReport:
    return metrics(confusion(labels_true, labels_pred))


# ---------------------------------------------------------------------------
# histograms


@dataclass(frozen=True)
class HistogramExport:
    edges: np.ndarray
    counts: dict[str, np.ndarray]
    percentages: dict[str, np.ndarray]

    def rows(self) -> list[tuple[str, float, float, int, float]]:
        out = []
        for outcome in OUTCOMES:
            for b in range(self.edges.size - 1):
                out.append(
                    (outcome, float(self.edges[b]), float(self.edges[b + 1]),
                     int(self.counts[outcome][b]), float(self.percentages[outcome][b]))
                )
        return out

    def to_csv(self, path: str | Path | None = None) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["outcome", "bin_left", "bin_right", "count", "percent"])
        for outcome, lo, hi, count, pct in self.rows():
            writer.writerow([outcome, repr(lo), repr(hi), count, repr(pct)])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text, encoding="utf-8")
        return text

    def to_text(self) -> str:
        header = ["bin"] + list(OUTCOMES)
        lines = []
        for b in range(self.edges.size - 1):
            label = f"[{self.edges[b]:+.2f},{self.edges[b + 1]:+.2f})"
            lines.append([label] + [f"{self.percentages[o][b]:.2f}" for o in OUTCOMES])
        return format_table(header, lines)


def histogram_export(final_scores, labels_true, labels_pred, n_bins: int = DEFAULT_BINS) -> HistogramExport:
    """Bin each outcome stream's scores over [-1, 1]; frequencies in percent per stream."""
    if n_bins < 2:
        raise ValueError("n_bins must be >= 2")
    s = np.asarray(final_scores, dtype=np.float64).reshape(-1)
    t = _labels(labels_true, "labels_true")
    p = _labels(labels_pred, "labels_pred")
    if not (s.size == t.size == p.size):
        raise LengthMismatch("scores, true labels and predictions must have equal length")
    edges = np.linspace(-1.0, 1.0, n_bins + 1)
    masks = {
        "TP": (t == NORMAL) & (p == NORMAL),
        "TN": (t == ANOMALY) & (p == ANOMALY),
        "FP": (t == ANOMALY) & (p == NORMAL),
        "FN": (t == NORMAL) & (p == ANOMALY),
    }
    counts, pcts = {}, {}
    for outcome, mask in masks.items():
        c, _ = np.histogram(np.clip(s[mask], -1.0, 1.0), bins=edges)
        counts[outcome] = c
        total = c.sum()
        pcts[outcome] = 100.0 * c / total if total else np.zeros(n_bins)
    return HistogramExport(edges, counts, pcts)


# ---------------------------------------------------------------------------
# tables and model comparison


def format_table(header: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    widths = [max(len(str(h)), *(len(str(r[i])) for r in rows)) if rows else len(str(h)) for i, h in enumerate(header)]
    fmt = lambda row: "  ".join(str(c).rjust(w) if i else str(c).ljust(w) for i, (c, w) in enumerate(zip(row, widths)))
    return "\n".join([fmt(header), fmt(["-" * w for w in widths])] + [fmt(r) for r in rows])


@dataclass(frozen=True)
class ModelSummary:
    name: str
    mean: dict[str, float]
    std: dict[str, float]
    f1_samples: np.ndarray  # one per (replicate, test spec) cell
    per_spec_f1: np.ndarray  # (resamples, n_specs)


@dataclass(frozen=True)
class ComparisonResult:
    summaries: tuple[ModelSummary, ...]
    anova: AnovaResult
    resamples: int
    n_specs: int

    def table_rows(self) -> list[list[str]]:
        rows = []
        for s in self.summaries:
            row = [s.name]
            for m in METRIC_NAMES:
                row += [f"{s.mean[m]:.3f}", f"{s.std[m]:.3f}"]
            rows.append(row)
        return rows

    @property
    def header(self) -> list[str]:
        h = ["technique"]
        for m in METRIC_NAMES:
            h += [f"{m}_mean", f"{m}_std"]
        return h

    def to_text(self) -> str:
        return format_table(self.header, self.table_rows()) + "\n" + self.anova_line()

    def anova_line(self) -> str:
        a = self.anova
        return f"F={a.f_value:.4f}, p={a.p_value:.4g} (df={a.df_between},{a.df_within})"

    def to_csv(self, path: str | Path | None = None) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.header)
        for s in self.summaries:
            row = [s.name]
            for m in METRIC_NAMES:
                row += [repr(s.mean[m]), repr(s.std[m])]
            writer.writerow(row)
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text, encoding="utf-8")
        return text


def compare_models(
    models: Sequence[EnsembleModel],
    test_specs: Sequence[SimConfig] | None = None,
    resamples: int = 20,
    rng_seed: int = 0,
    names: Sequence[str] | None = None,
) -> ComparisonResult:
    """Evaluate every model on ``resamples`` fresh replicates of each test spec.

    Replicate ``r`` of spec ``i`` is regenerated with the spec's sizes and
    mixture under a seed derived from ``rng_seed``; all models see the same
    replicates. ANOVA runs over the per-cell F1 scores, one group per model.
    """
    if resamples < 2:
        raise ValueError("resamples must be >= 2")
    if len(models) < 1:
        raise ValueError("need at least one model")
    specs = list(test_specs) if test_specs is not None else standard_test_configs(rng_seed)
    names = list(names) if names is not None else [m.strategy.name for m in models]
    scores = np.zeros((len(models), resamples, len(specs), len(METRIC_NAMES)))
    for r in range(resamples):
        for i, spec in enumerate(specs):
            data = simulate_tlight(replace(spec, rng_seed=derive_seed(rng_seed, f"replicate/{i}/{r}")))
            for k, model in enumerate(models):
                labels, _ = predict_ensemble(model, data.X)
                rep = evaluate(data.labels, labels)
                scores[k, r, i] = [getattr(rep, m) for m in METRIC_NAMES]
        logger.info("replicate %d/%d done", r + 1, resamples)
    summaries = []
    for k, name in enumerate(names):
        cells = scores[k].reshape(-1, len(METRIC_NAMES))
        summaries.append(
            ModelSummary(
                name=name,
                mean={m: float(cells[:, j].mean()) for j, m in enumerate(METRIC_NAMES)},
                std={m: float(cells[:, j].std(ddof=1)) for j, m in enumerate(METRIC_NAMES)},
                f1_samples=cells[:, 3].copy(),
                per_spec_f1=scores[k, :, :, 3].copy(),
            )
        )
    if len(models) >= 2:
        anova = anova_oneway([s.f1_samples for s in summaries])
    else:
        anova = AnovaResult(math.nan, math.nan, 0, 0, math.nan, math.nan)
    return ComparisonResult(tuple(summaries), anova, resamples, len(specs))


def training_flag_bound(model: EnsembleModel) -> float:
    """Upper bound on the fraction of the model's own training rows it flags.

    Each base detector puts at most nu (OCSVM, OCNN) or contamination (IF) of
    the training rows below zero, and every plain or weighted vote needs at
    least one negative detector to go negative, so the sum bounds them all.
    Stacking is bounded by its meta-detector's contamination. Quantile
    interpolation can add up to one row per detector on top of the bound.
    """
    if model.meta is not None:
        return model.meta.params.contamination
    total = 0.0
    for d in model.detectors:
        p = d.params
        total += p.contamination if hasattr(p, "contamination") else p.nu
    return min(1.0, total)
