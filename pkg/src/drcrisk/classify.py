"""Category prediction from dissimilarity features, and leave-one-out evaluation.

Two classifiers: the training-free minimum-dissimilarity rule, and a linear
one-vs-rest max-margin model trained by seeded subgradient descent.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, asdict
from typing import Callable, Iterable, Sequence

import numpy as np

from .landscape import (
    CATEGORIES,
    DEFAULT_BINS,
    DEFAULT_PERCENTILE,
    BandwidthSpec,
    DrcAssignment,
    DrcCategory,
    ScoreDistribution,
    assign_drc,
    build_distribution,
    record_cell_mask,
    smoothed_histogram,
    kernel_sum,
)
from .metrics import ALL_METRICS, DissimilarityVector, MetricId, dissimilarity
from .scores import KINDS, QUALITIES, ComparisonKind, ComparisonQuality, ScoreSet

log = logging.getLogger(__name__)

MIN_RULE = "min"
MARGIN = "margin"
CLASSIFIERS = (MARGIN, MIN_RULE)


class ClassifierError(ValueError):
    pass


def _break_tie(candidates: Iterable[DrcCategory]) -> DrcCategory:
    return max(candidates, key=lambda c: c.cost_rank)


def min_rule(v: DissimilarityVector) -> DrcCategory:
    """Category at minimum dissimilarity; exact ties go to the costlier category."""
    best = min(v.values.values())
    return _break_tie(c for c in CATEGORIES if v.values[c] == best)


# -- margin classifier -----------------------------------------------------------

@dataclass(frozen=True)
class MarginHyper:
    lambda_reg: float = 1e-3
    epochs: int = 200
    seed: int = 0
    learning_rate: float = 0.1


@dataclass(frozen=True)
class MarginModel:
    weights: np.ndarray  # (3, d), rows in CATEGORIES order
    biases: np.ndarray  # (3,)
    hyper: MarginHyper
    loss_history: tuple[float, ...] = ()

    @property
    def n_features(self) -> int:
        return self.weights.shape[1]

    def to_json(self) -> str:
        return json.dumps({
            "classes": [c.value for c in CATEGORIES],
            "weights": self.weights.tolist(),
            "biases": self.biases.tolist(),
            "hyper": asdict(self.hyper),
        }, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "MarginModel":
        d = json.loads(text)
        if d.get("classes") != [c.value for c in CATEGORIES]:
            raise ClassifierError("model classes do not match")
        return cls(np.asarray(d["weights"], dtype=float), np.asarray(d["biases"], dtype=float),
                   MarginHyper(**d["hyper"]))


def _as_matrix(features) -> np.ndarray:
    rows = [np.asarray(f, dtype=float).ravel() for f in features]
    if not rows:
        raise ClassifierError("no training examples")
    lengths = {r.size for r in rows}
    if len(lengths) != 1:
        raise ClassifierError(f"inconsistent feature lengths {sorted(lengths)}")
    X = np.vstack(rows)
    if X.shape[1] not in (3, 6):
        raise ClassifierError(f"feature length must be 3 or 6, got {X.shape[1]}")
    if not np.all(np.isfinite(X)):
        raise ClassifierError("non-finite feature value")
    return X


def _objective(X, Y, W, b, lam) -> float:
    margins = Y * (X @ W.T + b)
    return float(0.5 * lam * np.sum(W * W) + np.maximum(0.0, 1.0 - margins).mean(axis=0).sum())


def train_margin(features: Sequence, labels: Sequence[DrcCategory],
                 hyper: MarginHyper = MarginHyper()) -> MarginModel:
    """One-vs-rest linear classifier minimizing L2-regularized hinge loss.

    Per-example subgradient steps in a seeded shuffled order, step size
    ``learning_rate / sqrt(epoch + 1)``. The iterate with the lowest
    full-data objective seen at an epoch boundary is kept, so
    ``loss_history`` never increases.
    """
    return train_margin_batch([features], labels, hyper)[0]


def train_margin_batch(feature_sets: Sequence[Sequence], labels: Sequence[DrcCategory],
                       hyper: MarginHyper = MarginHyper()) -> list[MarginModel]:
    """Train one model per feature set, all sharing ``labels`` and the example order.

    Models advance in lockstep with elementwise arithmetic only, so each
    result is bit-identical to training that feature set alone.
    """
    Xs = [_as_matrix(f) for f in feature_sets]
    if len({X.shape for X in Xs}) != 1:
        raise ClassifierError("feature sets differ in shape")
    labels = [DrcCategory(c) for c in labels]
    if len(labels) != Xs[0].shape[0]:
        raise ClassifierError("features and labels differ in length")
    if len(set(labels)) < 2:
        raise ClassifierError("training needs at least two classes")
    X = np.stack(Xs)  # (models, n, d)
    n_models, n, d = X.shape
    Y = np.array([[1.0 if lab is c else -1.0 for c in CATEGORIES] for lab in labels])
    W = np.zeros((n_models, len(CATEGORIES), d))
    b = np.zeros((n_models, len(CATEGORIES)))
    lam = hyper.lambda_reg
    rng = np.random.default_rng(hyper.seed)
    best = [(_objective(X[k], Y, W[k], b[k], lam), W[k].copy(), b[k].copy())
            for k in range(n_models)]
    history = [[] for _ in range(n_models)]
    for epoch in range(hyper.epochs):
        eta = hyper.learning_rate / np.sqrt(epoch + 1.0)
        for i in rng.permutation(n):
            x = X[:, i, :]
            score = b.copy()
            for j in range(d):
                score += W[:, :, j] * x[:, j, None]
            step = eta * Y[i] * (Y[i] * score < 1.0)
            W *= 1.0 - eta * lam
            W += step[:, :, None] * x[:, None, :]
            b += step
        for k in range(n_models):
            loss = _objective(X[k], Y, W[k], b[k], lam)
            if loss < best[k][0]:
                best[k] = (loss, W[k].copy(), b[k].copy())
            history[k].append(best[k][0])
    return [MarginModel(w, bb, hyper, tuple(h)) for (_, w, bb), h in zip(best, history)]


def class_scores(m: MarginModel, f) -> np.ndarray:
    x = np.asarray(f, dtype=float).ravel()
    if x.size != m.n_features:
        raise ClassifierError(f"feature length {x.size} does not match model ({m.n_features})")
    return m.weights @ x + m.biases


def predict_margin(m: MarginModel, f) -> DrcCategory:
    s = class_scores(m, f)
    best = s.max()
    return _break_tie(c for c, v in zip(CATEGORIES, s) if v == best)


# -- leave-one-out evaluation ----------------------------------------------------

@dataclass(frozen=True)
class EvalConfig:
    percentile: float = DEFAULT_PERCENTILE
    bins: int = DEFAULT_BINS
    bandwidth: BandwidthSpec = None
    feature_mode: str = "per-kind"  # or "combined"
    hyper: MarginHyper = MarginHyper()
    min_subjects: int = 3


def feature_kinds(kind: ComparisonKind, mode: str) -> tuple[ComparisonKind, ...]:
    if mode == "per-kind":
        return (ComparisonKind(kind),)
    if mode == "combined":
        return KINDS
    raise ClassifierError(f"unknown feature mode {mode!r}")


@dataclass
class _Pool:
    """One landscape cell kept unnormalized so a subject can be subtracted."""
    mask: np.ndarray
    dist: ScoreDistribution
    raw: np.ndarray

    def without(self, s: ScoreSet, subject_idx: int) -> ScoreDistribution | None:
        mine = self.mask & ((s.idx_a == subject_idx) | (s.idx_b == subject_idx))
        if not mine.any():
            return self.dist
        n_left = self.dist.sample_count - int(mine.sum())
        if n_left <= 0:
            return None
        rest = self.raw - kernel_sum(np.sort(s.normalized[mine]), self.dist.centers,
                                     self.dist.bandwidth)
        rest = np.clip(rest, 0.0, None)
        total = rest.sum()
        if not total > 0:
            return None
        return ScoreDistribution(self.dist.bin_edges, rest / total, n_left, self.dist.bandwidth)


def _pools(s: ScoreSet, a: DrcAssignment, quality, kind, cfg: EvalConfig,
           keep: np.ndarray | None = None) -> dict:
    codes = a.codes(s.subject_ids)
    out = {}
    for c in CATEGORIES:
        mask = record_cell_mask(s, codes, c, quality, kind)
        if keep is not None:
            mask &= keep
        dist, raw = smoothed_histogram(s.normalized[mask], cfg.bins, cfg.bandwidth)
        out[c] = _Pool(mask, dist, raw)
    return out


def subject_distribution(s: ScoreSet, subject: str, quality, kind, cfg: EvalConfig,
                         keep: np.ndarray | None = None) -> ScoreDistribution:
    mask = s.involving(subject) & s.cell_mask(ComparisonQuality(quality), ComparisonKind(kind))
    if keep is not None:
        mask &= keep
    return build_distribution(s.normalized[mask], cfg.bins, cfg.bandwidth)


@dataclass
class TrainingExample:
    subject: str
    label: DrcCategory
    # per kind: (subject distribution, {category: leave-subject-out cell or None})
    parts: dict


def training_examples(s: ScoreSet, a: DrcAssignment, quality, kinds, cfg: EvalConfig,
                      pools: dict | None = None,
                      keep: np.ndarray | None = None) -> list[TrainingExample]:
    """Every assigned subject with data in all ``kinds``, each measured against
    cells from which its own records were removed. ``keep`` restricts the
    records (a fold's held-out subject is removed this way)."""
    pools = pools or {k: _pools(s, a, quality, k, cfg, keep) for k in kinds}
    out = []
    for sid in s.subject_ids:
        if sid not in a.categories:
            continue
        idx = s.subject_index(sid)
        parts = {}
        for k in kinds:
            own = subject_distribution(s, sid, quality, k, cfg, keep)
            if own.empty:
                break
            parts[k] = (own, {c: pools[k][c].without(s, idx) for c in CATEGORIES})
        else:
            out.append(TrainingExample(sid, a[sid], parts))
    return out


def example_features(m: MetricId, ex: TrainingExample, kinds) -> np.ndarray:
    vals = []
    for k in kinds:
        own, cells = ex.parts[k]
        # a cell emptied by removing the subject is treated as maximally far
        vals.extend(1.0 if cells[c] is None else dissimilarity(m, own, cells[c])
                    for c in CATEGORIES)
    return np.array(vals)


def traveler_features(m: MetricId, traveler: dict, cells: dict, kinds) -> np.ndarray:
    """``traveler``: kind -> distribution; ``cells``: kind -> {category: distribution}."""
    return np.array([dissimilarity(m, traveler[k], cells[k][c]) for k in kinds for c in CATEGORIES])


@dataclass
class Fold:
    held_out: str
    quality: ComparisonQuality
    truth: DrcCategory
    traveler: dict  # kind -> ScoreDistribution
    cells: dict  # kind -> {category: ScoreDistribution}
    training: list  # TrainingExample, empty unless the margin classifier is requested
    skipped: str | None = None


def iter_folds(s: ScoreSet, quality, kind, cfg: EvalConfig = EvalConfig(),
               with_training: bool = False, truth: DrcAssignment | None = None):
    """Yield one Fold per subject with data in the evaluated cell(s).

    Each fold re-ranks categories and rebuilds the landscape on the score set
    with the held-out subject removed entirely.
    """
    quality, kind = ComparisonQuality(quality), ComparisonKind(kind)
    kinds = feature_kinds(kind, cfg.feature_mode) if with_training else (kind,)
    truth = truth or assign_drc(s, cfg.percentile)
    for sid in s.subject_ids:
        traveler = {k: subject_distribution(s, sid, quality, k, cfg) for k in kinds}
        if any(d.empty for d in traveler.values()):
            continue
        a_fold = assign_drc(s, cfg.percentile, exclude=sid)
        keep = ~s.involving(sid)
        pools = {k: _pools(s, a_fold, quality, k, cfg, keep) for k in kinds}
        cells = {k: {c: pools[k][c].dist for c in CATEGORIES} for k in kinds}
        empty = [f"{c.value}/{quality.value}/{k.value}" for k in kinds for c in CATEGORIES
                 if cells[k][c].empty]
        training = []
        if with_training and not empty:
            training = training_examples(s, a_fold, quality, kinds, cfg, pools, keep)
        yield Fold(sid, quality, truth[sid], traveler, cells, training,
                   f"empty landscape cell {empty[0]}" if empty else None)


@dataclass
class LoocvResult:
    sensitivity: float
    n_correct: int
    n_total: int
    predictions: dict = field(default_factory=dict)  # subject -> (truth, predicted)
    skipped: dict = field(default_factory=dict)  # subject -> reason


def _predict_fold(fold: Fold, m: MetricId, classifier: str, kind, cfg: EvalConfig,
                  transform: Callable | None = None) -> DrcCategory:
    if classifier == MIN_RULE:
        k = ComparisonKind(kind)
        vec = {c: dissimilarity(m, fold.traveler[k], fold.cells[k][c]) for c in CATEGORIES}
        return min_rule(DissimilarityVector(vec, MetricId(m), fold.quality, k))
    if classifier != MARGIN:
        raise ClassifierError(f"unknown classifier {classifier!r}")
    kinds = feature_kinds(kind, cfg.feature_mode)
    xs, ys = [], []
    for ex in fold.training:
        f = example_features(m, ex, kinds)
        xs.append(transform(ex.subject, f) if transform else f)
        ys.append(ex.label)
    if len(set(ys)) < 2:
        raise ClassifierError("fold training set has fewer than two classes")
    model = train_margin(xs, ys, cfg.hyper)
    f = traveler_features(m, fold.traveler, fold.cells, kinds)
    return predict_margin(model, transform(fold.held_out, f) if transform else f)


def _predict_fold_margin(fold: Fold, metrics, kind, cfg: EvalConfig) -> dict:
    """Margin predictions for every metric of one fold, trained as a batch.
    Failures come back as ClassifierError values."""
    kinds = feature_kinds(kind, cfg.feature_mode)
    labels = [ex.label for ex in fold.training]
    try:
        if len(set(labels)) < 2:
            raise ClassifierError("fold training set has fewer than two classes")
        feats = [[example_features(m, ex, kinds) for ex in fold.training] for m in metrics]
        models = train_margin_batch(feats, labels, cfg.hyper)
    except ClassifierError as exc:
        return {m: exc for m in metrics}
    return {m: predict_margin(model, traveler_features(m, fold.traveler, fold.cells, kinds))
            for m, model in zip(metrics, models)}


def _tally(outcomes: dict, skipped: dict, min_subjects: int) -> LoocvResult:
    if len(outcomes) < min_subjects:
        raise ClassifierError(
            f"insufficient subjects for leave-one-out: {len(outcomes)} usable, "
            f"need {min_subjects}")
    correct = sum(1 for t, p in outcomes.values() if t is p)
    return LoocvResult(correct / len(outcomes), correct, len(outcomes), outcomes, skipped)


def loocv_details(s: ScoreSet, metric: MetricId, quality, kind, classifier: str = MIN_RULE,
                  cfg: EvalConfig = EvalConfig(), transform: Callable | None = None) -> LoocvResult:
    if s.n_subjects < cfg.min_subjects:
        raise ClassifierError(f"insufficient subjects: {s.n_subjects} < {cfg.min_subjects}")
    outcomes, skipped = {}, {}
    for fold in iter_folds(s, quality, kind, cfg, with_training=classifier == MARGIN):
        if fold.skipped:
            skipped[fold.held_out] = fold.skipped
            continue
        try:
            pred = _predict_fold(fold, metric, classifier, kind, cfg, transform)
        except ClassifierError as exc:
            skipped[fold.held_out] = str(exc)
            continue
        outcomes[fold.held_out] = (fold.truth, pred)
    return _tally(outcomes, skipped, cfg.min_subjects)


def loocv(s: ScoreSet, metric: MetricId, quality, kind, classifier: str = MIN_RULE,
          cfg: EvalConfig = EvalConfig()) -> float:
    return loocv_details(s, metric, quality, kind, classifier, cfg).sensitivity


# -- full grid --------------------------------------------------------------------

@dataclass
class SensitivityTable:
    metrics: tuple
    classifiers: tuple
    values: dict  # (metric, kind, quality, classifier) -> float | None
    reasons: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.values)

    def mean(self, kind=None, classifier=None) -> float:
        vals = [v for (m, k, q, c), v in self.values.items()
                if v is not None and (kind is None or k is ComparisonKind(kind))
                and (classifier is None or c == classifier)]
        return float(np.mean(vals)) if vals else float("nan")


def sensitivity_table(s: ScoreSet, cfg: EvalConfig = EvalConfig(),
                      metrics: Sequence[MetricId] = ALL_METRICS,
                      classifiers: Sequence[str] = CLASSIFIERS) -> SensitivityTable:
    """LOOCV sensitivity for every (metric, kind, quality, classifier).

    Folds are built once per (kind, quality) and shared by all metrics.
    Cells that cannot be evaluated are ``None`` with a reason.
    """
    metrics = tuple(MetricId(m) for m in metrics)
    classifiers = tuple(classifiers)
    truth = assign_drc(s, cfg.percentile)
    values, reasons = {}, {}
    for kind in KINDS:
        for quality in QUALITIES:
            outcomes = {(m, c): {} for m in metrics for c in classifiers}
            skipped = {(m, c): {} for m in metrics for c in classifiers}
            folds = iter_folds(s, quality, kind, cfg, with_training=MARGIN in classifiers,
                               truth=truth)
            for fold in folds:
                for c in classifiers:
                    if fold.skipped:
                        preds = {m: ClassifierError(fold.skipped) for m in metrics}
                    elif c == MARGIN:
                        preds = _predict_fold_margin(fold, metrics, kind, cfg)
                    else:
                        preds = {m: _predict_fold(fold, m, c, kind, cfg) for m in metrics}
                    for m, pred in preds.items():
                        if isinstance(pred, ClassifierError):
                            skipped[(m, c)][fold.held_out] = str(pred)
                        else:
                            outcomes[(m, c)][fold.held_out] = (fold.truth, pred)
            for m in metrics:
                for c in classifiers:
                    key = (m, kind, quality, c)
                    try:
                        values[key] = _tally(outcomes[(m, c)], skipped[(m, c)],
                                             cfg.min_subjects).sensitivity
                    except ClassifierError as exc:
                        values[key] = None
                        reasons[key] = str(exc)
    return SensitivityTable(metrics, classifiers, values, reasons)
