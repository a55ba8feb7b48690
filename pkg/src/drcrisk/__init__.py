"""Doddington-category risk assessment for watchlist screening from match scores."""
__version__ = "0.1.0"

from .classify import (
    CLASSIFIERS,
    MARGIN,
    MIN_RULE,
    EvalConfig,
    MarginHyper,
    MarginModel,
    loocv,
    loocv_details,
    min_rule,
    predict_margin,
    sensitivity_table,
    train_margin,
)
from .landscape import (
    CATEGORIES,
    Add,
    DrcAssignment,
    DrcCategory,
    Landscape,
    Remove,
    Replace,
    ScoreDistribution,
    assign_drc,
    build_distribution,
    build_landscape,
    compute_landscape,
    flag_count,
    landscape_diff,
    mutate_watchlist,
)
from .metrics import ALL_METRICS, DissimilarityVector, MetricId, dissimilarity, dissimilarity_vector
from .risk import (
    DEFAULT_COSTS,
    CostProfile,
    RiskLevel,
    RiskReport,
    assess_traveler,
    risk_classified,
    risk_level,
    risk_r1,
)
from .scores import (
    ComparisonKind,
    ComparisonQuality,
    QualityTier,
    ScoreRecord,
    ScoreSet,
    from_records,
    ingest_scores,
    read_scores_csv,
    write_scores_csv,
)
from .synth import SynthConfig, generate, oracle_check
