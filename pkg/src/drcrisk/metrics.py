"""Distances and similarities between binned probability distributions.

Every measure works on two mass vectors over the same bins. ``dissimilarity``
puts each one on a shared [0, 1] scale (0 = identical) so the category
classifiers and the risk formula can treat them interchangeably.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .landscape import CATEGORIES, DrcCategory, Landscape, ScoreDistribution
from .scores import ComparisonKind, ComparisonQuality

EPS = 1e-12


class MetricId(str, Enum):
    EUCLIDEAN = "euclidean"
    CITY_BLOCK = "city_block"
    CHEBYSHEV = "chebyshev"
    SORENSEN = "sorensen"
    CANBERRA = "canberra"
    LORENTZIAN = "lorentzian"
    WAVE_HEDGES = "wave_hedges"
    CZEKANOWSKI = "czekanowski"
    KULCZYNSKI_S = "kulczynski_s"
    HARMONIC_MEAN = "harmonic_mean"
    KUMAR_HASSEBROOK = "kumar_hassebrook"
    JACCARD = "jaccard"
    HELLINGER = "hellinger"
    MATUSITA = "matusita"
    SQUARED_CHORD = "squared_chord"
    SQUARED_EUCLIDEAN = "squared_euclidean"
    SQUARED_CHI_SQUARE = "squared_chi_square"
    CLARK = "clark"
    KULLBACK_LEIBLER = "kullback_leibler"
    K_DIVERGENCE = "k_divergence"
    JENSEN_SHANNON = "jensen_shannon"


ALL_METRICS = tuple(MetricId)

SIMILARITIES = frozenset({MetricId.KULCZYNSKI_S, MetricId.HARMONIC_MEAN,
                          MetricId.KUMAR_HASSEBROOK})
ASYMMETRIC = frozenset({MetricId.KULLBACK_LEIBLER, MetricId.K_DIVERGENCE})
# measures with a bin-wise ratio or logarithm: evaluated on eps-smoothed masses
_SMOOTHED = frozenset({
    MetricId.CANBERRA, MetricId.WAVE_HEDGES, MetricId.HARMONIC_MEAN,
    MetricId.SQUARED_CHI_SQUARE, MetricId.CLARK, MetricId.KULLBACK_LEIBLER,
    MetricId.K_DIVERGENCE, MetricId.JENSEN_SHANNON,
})


class MetricError(ValueError):
    pass


@dataclass(frozen=True)
class MetricKind:
    similarity: bool
    bounded_above: float | None


def metric_kind(m: MetricId, bins: int = 100) -> MetricKind:
    m = MetricId(m)
    if m is MetricId.KULCZYNSKI_S:
        return MetricKind(True, None)
    if m in SIMILARITIES:
        return MetricKind(True, 1.0)
    return MetricKind(False, _bound(m, bins))


def parse_metric(name: str) -> MetricId:
    key = str(name).strip().lower().replace("-", "_").replace(" ", "_")
    try:
        return MetricId(key)
    except ValueError:
        raise MetricError(f"unknown metric {name!r}") from None


def _ratio(num, den):
    # 0/0 -> 0
    return np.divide(num, den, out=np.zeros_like(num, dtype=float), where=den > 0)


def _xlogy_ratio(p, q):
    # sum p * ln(p / q), with 0 * ln(0 / q) = 0
    return float(np.sum(p * np.log(_ratio(p, q), where=p > 0, out=np.zeros_like(p))))


def smooth(p: np.ndarray, eps: float = EPS) -> np.ndarray:
    p = p + eps
    return p / p.sum()


def _euclidean(p, q):
    return math.sqrt(float(np.sum((p - q) ** 2)))


def _city_block(p, q):
    return float(np.sum(np.abs(p - q)))


def _chebyshev(p, q):
    return float(np.max(np.abs(p - q)))


def _sorensen(p, q):
    return float(np.sum(np.abs(p - q)) / np.sum(p + q))


def _canberra(p, q):
    return float(np.sum(_ratio(np.abs(p - q), p + q)))


def _lorentzian(p, q):
    return float(np.sum(np.log1p(np.abs(p - q))))


def _wave_hedges(p, q):
    return float(np.sum(_ratio(np.abs(p - q), np.maximum(p, q))))


def _czekanowski(p, q):
    # distance form: 1 - 2 sum(min) / sum(p + q)
    return 1.0 - float(2.0 * np.sum(np.minimum(p, q)) / np.sum(p + q))


def _kulczynski_s(p, q):
    # unbounded at P == Q; the floor keeps it finite
    return float(np.sum(np.minimum(p, q)) / max(float(np.sum(np.abs(p - q))), EPS))


def _harmonic_mean(p, q):
    return float(2.0 * np.sum(_ratio(p * q, p + q)))


def _kumar_hassebrook(p, q):
    pq = float(np.sum(p * q))
    return pq / (float(np.sum(p * p)) + float(np.sum(q * q)) - pq)


def _jaccard(p, q):
    pq = float(np.sum(p * q))
    return float(np.sum((p - q) ** 2)) / (float(np.sum(p * p)) + float(np.sum(q * q)) - pq)


def _squared_chord(p, q):
    return float(np.sum((np.sqrt(p) - np.sqrt(q)) ** 2))


def _hellinger(p, q):
    return math.sqrt(2.0 * _squared_chord(p, q))


def _matusita(p, q):
    return math.sqrt(_squared_chord(p, q))


def _squared_euclidean(p, q):
    return float(np.sum((p - q) ** 2))


def _squared_chi_square(p, q):
    return float(np.sum(_ratio((p - q) ** 2, p + q)))


def _clark(p, q):
    return math.sqrt(float(np.sum(_ratio(np.abs(p - q), p + q) ** 2)))


def _kullback_leibler(p, q):
    return _xlogy_ratio(p, q)


def _k_divergence(p, q):
    return _xlogy_ratio(p, 0.5 * (p + q))


def _jensen_shannon(p, q):
    m = 0.5 * (p + q)
    return 0.5 * (_xlogy_ratio(p, m) + _xlogy_ratio(q, m))


_MEASURES = {
    MetricId.EUCLIDEAN: _euclidean,
    MetricId.CITY_BLOCK: _city_block,
    MetricId.CHEBYSHEV: _chebyshev,
    MetricId.SORENSEN: _sorensen,
    MetricId.CANBERRA: _canberra,
    MetricId.LORENTZIAN: _lorentzian,
    MetricId.WAVE_HEDGES: _wave_hedges,
    MetricId.CZEKANOWSKI: _czekanowski,
    MetricId.KULCZYNSKI_S: _kulczynski_s,
    MetricId.HARMONIC_MEAN: _harmonic_mean,
    MetricId.KUMAR_HASSEBROOK: _kumar_hassebrook,
    MetricId.JACCARD: _jaccard,
    MetricId.HELLINGER: _hellinger,
    MetricId.MATUSITA: _matusita,
    MetricId.SQUARED_CHORD: _squared_chord,
    MetricId.SQUARED_EUCLIDEAN: _squared_euclidean,
    MetricId.SQUARED_CHI_SQUARE: _squared_chi_square,
    MetricId.CLARK: _clark,
    MetricId.KULLBACK_LEIBLER: _kullback_leibler,
    MetricId.K_DIVERGENCE: _k_divergence,
    MetricId.JENSEN_SHANNON: _jensen_shannon,
}


def _bound(m: MetricId, bins: int) -> float | None:
    """Supremum of the raw distance over pairs of unit-mass vectors on ``bins`` bins."""
    ln2 = math.log(2.0)
    return {
        MetricId.EUCLIDEAN: math.sqrt(2.0),
        MetricId.CITY_BLOCK: 2.0,
        MetricId.CHEBYSHEV: 1.0,
        MetricId.SORENSEN: 1.0,
        MetricId.CANBERRA: float(bins),
        # the maximum spreads |p - q| = 2/B over every bin
        MetricId.LORENTZIAN: bins * math.log1p(2.0 / bins),
        MetricId.WAVE_HEDGES: float(bins),
        MetricId.CZEKANOWSKI: 1.0,
        MetricId.JACCARD: 1.0,
        MetricId.HELLINGER: 2.0,
        MetricId.MATUSITA: math.sqrt(2.0),
        MetricId.SQUARED_CHORD: 2.0,
        MetricId.SQUARED_EUCLIDEAN: 2.0,
        MetricId.SQUARED_CHI_SQUARE: 2.0,
        MetricId.CLARK: math.sqrt(bins),
        MetricId.KULLBACK_LEIBLER: None,
        MetricId.K_DIVERGENCE: ln2,
        MetricId.JENSEN_SHANNON: ln2,
    }.get(m)


def _masses(P, Q) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(P, ScoreDistribution) and isinstance(Q, ScoreDistribution):
        if not P.same_grid(Q):
            raise MetricError("distributions are on different bin grids")
        if P.empty or Q.empty:
            raise MetricError("empty distribution")
        return P.mass, Q.mass
    p = np.asarray(getattr(P, "mass", P), dtype=float)
    q = np.asarray(getattr(Q, "mass", Q), dtype=float)
    if p.shape != q.shape or p.ndim != 1:
        raise MetricError(f"mass vectors differ in shape: {p.shape} vs {q.shape}")
    if not (p.sum() > 0 and q.sum() > 0):
        raise MetricError("empty distribution")
    return p, q


def raw_measure(m: MetricId, P, Q) -> float:
    """Raw value of metric ``m``. Accepts ScoreDistributions or mass vectors."""
    m = MetricId(m)
    p, q = _masses(P, Q)
    if m in _SMOOTHED:
        p, q = smooth(p), smooth(q)
    return _MEASURES[m](p, q)


def to_dissimilarity(m: MetricId, raw: float, bins: int) -> float:
    m = MetricId(m)
    if m is MetricId.KULCZYNSKI_S:
        d = 1.0 - raw / (1.0 + raw)
    elif m in SIMILARITIES:
        d = 1.0 - min(1.0, max(0.0, raw))
    elif m is MetricId.KULLBACK_LEIBLER:
        raw = max(0.0, raw)
        d = raw / (1.0 + raw)
    else:
        d = raw / _bound(m, bins)
    return min(1.0, max(0.0, d))


def dissimilarity(m: MetricId, P, Q) -> float:
    p, _ = _masses(P, Q)
    return to_dissimilarity(m, raw_measure(m, P, Q), p.size)


@dataclass(frozen=True)
class DissimilarityVector:
    values: dict  # DrcCategory -> float
    metric: MetricId
    quality: ComparisonQuality
    kind: ComparisonKind

    def __post_init__(self):
        for c in CATEGORIES:
            v = self.values.get(c)
            if v is None or not (0.0 <= v <= 1.0):
                raise MetricError(f"dissimilarity for {c.value} missing or outside [0, 1]: {v}")

    def __getitem__(self, c: DrcCategory) -> float:
        return self.values[DrcCategory(c)]

    def as_tuple(self) -> tuple[float, float, float]:
        return tuple(self.values[c] for c in CATEGORIES)

    @classmethod
    def from_tuple(cls, values, metric=MetricId.EUCLIDEAN,
                   quality=ComparisonQuality.HQ, kind=ComparisonKind.GENUINE):
        return cls(dict(zip(CATEGORIES, map(float, values))), MetricId(metric),
                   ComparisonQuality(quality), ComparisonKind(kind))


def dissimilarity_vector(m: MetricId, traveler: ScoreDistribution, l: Landscape,
                         quality: ComparisonQuality, kind: ComparisonKind) -> DissimilarityVector:
    if traveler.empty:
        raise MetricError("traveler distribution is empty")
    values = {}
    for c in CATEGORIES:
        cell = l.cell(c, quality, kind)
        if cell.empty:
            raise MetricError(
                f"empty landscape cell {c.value}/{ComparisonQuality(quality).value}/"
                f"{ComparisonKind(kind).value}")
        values[c] = dissimilarity(m, traveler, cell)
    return DissimilarityVector(values, MetricId(m), ComparisonQuality(quality), ComparisonKind(kind))
