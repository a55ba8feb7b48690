"""Cost-weighted traveler risk.

R1 weighs the dissimilarity to every category by that category's cost,
``R = 1 - sum_j cost(j) * D(j)``; R2 and R3 report the cost of the category
picked by the minimum rule and the margin classifier respectively.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping

import numpy as np

from .classify import (
    MARGIN,
    MIN_RULE,
    EvalConfig,
    feature_kinds,
    min_rule,
    predict_margin,
    subject_distribution,
    traveler_features,
    train_margin,
    training_examples,
    example_features,
    ClassifierError,
)
from .landscape import CATEGORIES, DrcCategory, Landscape
from .metrics import DissimilarityVector, MetricError, MetricId, dissimilarity_vector
from .scores import KINDS, QUALITIES, ComparisonKind, ComparisonQuality, ScoreSet

log = logging.getLogger(__name__)


class RiskError(ValueError):
    pass


@dataclass(frozen=True)
class CostProfile:
    lam: Mapping[DrcCategory, float]
    name: str = "default"

    def __post_init__(self):
        missing = [c.value for c in CATEGORIES if c not in self.lam]
        if missing:
            raise RiskError(f"cost profile {self.name!r} lacks categories: {missing}")
        bad = {c.value: v for c, v in self.lam.items() if not (v >= 0.0)}
        if bad:
            raise RiskError(f"cost profile {self.name!r} has negative costs: {bad}")

    def __getitem__(self, c: DrcCategory) -> float:
        return self.lam[DrcCategory(c)]

    @property
    def unit_sum(self) -> bool:
        return abs(sum(self.lam.values()) - 1.0) <= 1e-9

    def to_dict(self) -> dict:
        return {"name": self.name, "lambda": {c.value: self.lam[c] for c in CATEGORIES}}

    @classmethod
    def from_dict(cls, d: Mapping) -> "CostProfile":
        try:
            lam = {DrcCategory(k): float(v) for k, v in d["lambda"].items()}
        except (KeyError, ValueError, TypeError, AttributeError) as exc:
            raise RiskError(f"malformed cost profile: {exc}") from None
        return cls(lam, str(d.get("name", "custom")))

    @classmethod
    def load(cls, path) -> "CostProfile":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


DEFAULT_COSTS = CostProfile({DrcCategory.SHEEP: 0.1, DrcCategory.GOAT: 0.3,
                             DrcCategory.WOLF_LAMB: 0.6}, "default")


class RiskLevel(str, Enum):
    LOW = "Low"
    MEDIUM = "Medium"
    HIGH = "High"


@dataclass(frozen=True)
class LevelThresholds:
    medium: float = 0.3
    high: float = 0.6


def risk_r1(c: CostProfile, d: DissimilarityVector) -> float:
    r = 1.0 - sum(c[j] * d[j] for j in CATEGORIES)
    return min(1.0, max(0.0, r))


def risk_classified(c: CostProfile, predicted: DrcCategory) -> float:
    return c[predicted]


def risk_level(r: float, thresholds: LevelThresholds = LevelThresholds()) -> RiskLevel:
    if not 0.0 <= r <= 1.0:
        raise RiskError(f"risk value {r} outside [0, 1]")
    if r < thresholds.medium:
        return RiskLevel.LOW
    if r < thresholds.high:
        return RiskLevel.MEDIUM
    return RiskLevel.HIGH


@dataclass(frozen=True)
class CellRisk:
    quality: ComparisonQuality
    kind: ComparisonKind
    dissimilarities: tuple[float, float, float]
    r1: float
    r2: float | None = None
    r3: float | None = None
    predicted_min: DrcCategory | None = None
    predicted_margin: DrcCategory | None = None

    def values(self) -> dict:
        return {k: v for k, v in (("R1", self.r1), ("R2", self.r2), ("R3", self.r3))
                if v is not None}


@dataclass(frozen=True)
class RiskReport:
    subject: str
    metric: MetricId
    cells: tuple[CellRisk, ...]
    average_risk: float
    variant_averages: Mapping[str, float]
    level: RiskLevel
    cost_profile: str
    landscape_version: int
    skipped: Mapping[str, str] = field(default_factory=dict)
    headline: str = "R1"

    @property
    def variants(self) -> tuple[str, ...]:
        return tuple(v for v in ("R1", "R2", "R3") if v in self.variant_averages)

    def to_dict(self) -> dict:
        return {
            "subject": self.subject,
            "metric": self.metric.value,
            "cost_profile": self.cost_profile,
            "landscape_version": self.landscape_version,
            "average_risk": self.average_risk,
            "headline_variant": self.headline,
            "variant_averages": dict(self.variant_averages),
            "level": self.level.value,
            "cells": [{
                "quality": c.quality.value,
                "kind": c.kind.value,
                "dissimilarity": dict(zip((x.value for x in CATEGORIES), c.dissimilarities)),
                "R1": c.r1, "R2": c.r2, "R3": c.r3,
                "predicted_min": c.predicted_min.value if c.predicted_min else None,
                "predicted_margin": c.predicted_margin.value if c.predicted_margin else None,
            } for c in self.cells],
            "skipped": dict(self.skipped),
        }

    def summary_line(self) -> str:
        return (f"{self.subject},{self.average_risk:.6f},{self.level.value},"
                f"{'+'.join(self.variants)},{self.landscape_version}")


SUMMARY_HEADER = "subject,avg_risk,level,variant_set,landscape_version"


# headline precedence: a classifier's verdict outranks the raw aggregate
HEADLINE_ORDER = ("R2", "R3", "R1")


def average_report(cells: Iterable[CellRisk]) -> tuple[float, dict, str]:
    """Mean of each variant over populated cells, plus the headline
    ``(value, variant)``: R2 if present, else R3, else R1."""
    cells = list(cells)
    by_variant = {}
    for name in ("R1", "R2", "R3"):
        vals = [c.values()[name] for c in cells if name in c.values()]
        if vals:
            by_variant[name] = float(np.mean(vals))
    head = next(v for v in HEADLINE_ORDER if v in by_variant)
    return by_variant[head], by_variant, head


def assess_traveler(subject: str, s: ScoreSet, l: Landscape, metric: MetricId,
                    c: CostProfile = DEFAULT_COSTS, classifiers: Iterable[str] = (MIN_RULE,),
                    cfg: EvalConfig | None = None,
                    thresholds: LevelThresholds = LevelThresholds()) -> RiskReport:
    """Risk of ``subject`` against a landscape built without the subject's scores."""
    s.subject_index(subject)
    if l.excluded != subject:
        raise RiskError(f"landscape must exclude {subject!r} (it excludes {l.excluded!r})")
    metric = MetricId(metric)
    classifiers = tuple(classifiers)
    cfg = cfg or EvalConfig(percentile=l.percentile, bins=l.bins, bandwidth=l.bandwidth)
    rest = s.exclude(subject) if MARGIN in classifiers else None
    cells, skipped = [], {}
    for kind in KINDS:
        for quality in QUALITIES:
            tag = f"{quality.value}/{kind.value}"
            own = subject_distribution(s, subject, quality, kind, cfg)
            if own.empty:
                skipped[tag] = "no scores for subject"
                continue
            try:
                vec = dissimilarity_vector(metric, own, l, quality, kind)
            except MetricError as exc:
                skipped[tag] = str(exc)
                continue
            r2 = r3 = pm = pg = None
            if MIN_RULE in classifiers:
                pm = min_rule(vec)
                r2 = risk_classified(c, pm)
            if MARGIN in classifiers:
                try:
                    pg = _margin_prediction(subject, s, rest, l, metric, quality, kind, cfg)
                    r3 = risk_classified(c, pg)
                except (ClassifierError, MetricError) as exc:
                    skipped[tag + "/margin"] = str(exc)
            cells.append(CellRisk(quality, kind, vec.as_tuple(), risk_r1(c, vec), r2, r3, pm, pg))
    if not cells:
        raise RiskError(f"no populated cells for subject {subject!r}")
    avg, by_variant, head = average_report(cells)
    return RiskReport(subject, metric, tuple(cells), avg, by_variant,
                      risk_level(avg, thresholds), c.name, l.version, skipped, head)


def _margin_prediction(subject, s, rest, l, metric, quality, kind, cfg) -> DrcCategory:
    kinds = feature_kinds(kind, cfg.feature_mode)
    examples = training_examples(rest, l.assignment, quality, kinds, cfg)
    if not examples:
        raise ClassifierError("no training subjects")
    model = train_margin([example_features(metric, ex, kinds) for ex in examples],
                         [ex.label for ex in examples], cfg.hyper)
    traveler = {k: subject_distribution(s, subject, quality, k, cfg) for k in kinds}
    if any(d.empty for d in traveler.values()):
        raise ClassifierError("subject lacks scores for combined features")
    cells = {k: {cat: l.cell(cat, quality, k) for cat in CATEGORIES} for k in kinds}
    if any(d.empty for cc in cells.values() for d in cc.values()):
        raise ClassifierError("empty landscape cell for combined features")
    return predict_margin(model, traveler_features(metric, traveler, cells, kinds))
