"""Score-level ensembles of one-class detectors for PLC/SCADA telemetry.

Three base detectors (one-class SVM, one-class neural network, isolation
forest) are fitted on normal historian data; their signed scores are
normalized and combined by majority, max-score, soft, weighted or stacking
votes. A final score below zero marks an anomaly.
"""

from .dataset import (
    FeatureMatrix,
    LabeledSet,
    SimConfig,
    constraint_violations,
    load_csv,
    make_paper_splits,
    standard_test_configs,
    simulate_tlight,
    write_csv,
)
from .detectors import (
    DetectorKind,
    IforestParams,
    OcnnParams,
    OcsvmParams,
    TrainedDetector,
    fit_iforest,
    fit_ocnn,
    fit_ocsvm,
    score,
)
from .ensemble import (
    DetectorParams,
    EnsembleModel,
    FeatureRange,
    StrategyKind,
    VotingStrategy,
    WeightLearner,
    all_strategies,
    fit_base,
    fit_ensemble,
    learn_weights,
    normalize_scores,
    predict_ensemble,
    vote_majority,
    vote_max,
    vote_soft,
    vote_stacking,
    vote_weighted,
)
from .evaluation import (
    ConfusionCounts,
    HistogramExport,
    MetricsReport,
    compare_models,
    confusion,
    evaluate,
    histogram_export,
    metrics,
)
from .seeding import derive_seed
from .stats import AnovaResult, anova_oneway

__version__ = "0.1.0"
