import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from drcrisk.landscape import DrcCategory, assign_drc, build_landscape
from drcrisk.landscape import build_distribution
from drcrisk.metrics import (
    ALL_METRICS,
    ASYMMETRIC,
    SIMILARITIES,
    MetricError,
    MetricId,
    dissimilarity,
    dissimilarity_vector,
    parse_metric,
    raw_measure,
)
from drcrisk.scores import ComparisonKind, ComparisonQuality, QualityTier, ScoreRecord, from_records

M = MetricId
H = QualityTier.HIGH


def test_all_21_metrics():
    assert len(ALL_METRICS) == 21
    assert parse_metric("Jensen-Shannon") is M.JENSEN_SHANNON
    with pytest.raises(MetricError):
        parse_metric("cosine")


def test_city_block_on_disjoint_pair():
    assert raw_measure(M.CITY_BLOCK, [1.0, 0.0], [0.0, 1.0]) == 2.0
    assert dissimilarity(M.CITY_BLOCK, [1.0, 0.0], [0.0, 1.0]) == 1.0


def test_js_disjoint_is_ln2():
    p, q = np.r_[1.0, np.zeros(9)], np.r_[np.zeros(9), 1.0]
    assert math.isclose(raw_measure(M.JENSEN_SHANNON, p, q), math.log(2), rel_tol=1e-9)
    assert math.isclose(dissimilarity(M.JENSEN_SHANNON, p, q), 1.0, rel_tol=1e-9)
    assert math.isclose(dissimilarity(M.EUCLIDEAN, p, q), 1.0)


@pytest.mark.parametrize("m", ALL_METRICS)
def test_identity_gives_zero_dissimilarity(m):
    p = np.random.default_rng(1).dirichlet(np.ones(100))
    assert dissimilarity(m, p, p) == pytest.approx(0.0, abs=1e-9)


@pytest.mark.parametrize("m", ALL_METRICS)
def test_disjoint_gives_large_dissimilarity(m):
    if m in (M.CANBERRA, M.WAVE_HEDGES, M.CLARK):
        # bounds grow with the bin count; reached when the supports tile every bin
        p = np.r_[np.full(50, 0.02), np.zeros(50)]
        q = p[::-1].copy()
    else:
        p, q = np.zeros(100), np.zeros(100)
        p[10], q[90] = 1.0, 1.0
    assert dissimilarity(m, p, q) > 0.5


def _pair(seed, bins=100):
    rng = np.random.default_rng(seed)
    p = rng.dirichlet(np.full(bins, 0.3))
    q = rng.dirichlet(np.full(bins, 0.3))
    p[rng.random(bins) < 0.2] = 0
    return p / p.sum(), q


@pytest.mark.parametrize("m", ALL_METRICS)
def test_axioms_on_random_pairs(m):
    for seed in range(200):
        p, q = _pair(seed)
        d = dissimilarity(m, p, q)
        assert 0.0 <= d <= 1.0
        assert raw_measure(m, p, q) >= 0 or m in SIMILARITIES
        if m not in ASYMMETRIC:
            assert math.isclose(raw_measure(m, p, q), raw_measure(m, q, p),
                                rel_tol=1e-9, abs_tol=1e-12)


def test_kl_is_asymmetric():
    p, q = np.array([0.9, 0.1]), np.array([0.5, 0.5])
    assert raw_measure(M.KULLBACK_LEIBLER, p, q) != raw_measure(M.KULLBACK_LEIBLER, q, p)


@settings(max_examples=100)
@given(st.integers(0, 2 ** 32 - 1))
def test_js_is_mean_of_k_divergences(seed):
    p, q = _pair(seed, 30)
    js = raw_measure(M.JENSEN_SHANNON, p, q)
    kd = 0.5 * (raw_measure(M.K_DIVERGENCE, p, q) + raw_measure(M.K_DIVERGENCE, q, p))
    assert abs(js - kd) <= 1e-9


def test_mismatched_lengths_and_empty():
    with pytest.raises(MetricError):
        dissimilarity(M.EUCLIDEAN, [0.5, 0.5], [1.0, 0.0, 0.0])
    with pytest.raises(MetricError):
        dissimilarity(M.EUCLIDEAN, build_distribution([]), build_distribution([0.5]))


def _three_cluster_set():
    # subject means: g1 low genuine (goat), w1 high impostor (wolf/lamb), rest sheep
    recs = []
    for sid in [f"s{i}" for i in range(38)]:
        recs += [ScoreRecord(sid, sid, H, H, 0.9)] * 2
    recs += [ScoreRecord("g1", "g1", H, H, 0.1)] * 2
    recs += [ScoreRecord("w1", "w1", H, H, 0.9)] * 2
    others = [f"s{i}" for i in range(38)]
    for i, sid in enumerate(others):
        recs.append(ScoreRecord(sid, others[(i + 1) % 38], H, H, 0.05))
        recs.append(ScoreRecord("w1", sid, H, H, 0.6))
    recs.append(ScoreRecord("g1", "s0", H, H, 0.05))
    return from_records(recs)


def test_vector_for_landscape_member():
    s = _three_cluster_set()
    a = assign_drc(s)
    assert a["g1"] is DrcCategory.GOAT and a["w1"] is DrcCategory.WOLF_LAMB
    l = build_landscape(s, a, bins=100)
    goat_cell = l.cell(DrcCategory.GOAT, "HQ", "genuine")
    v = dissimilarity_vector(M.EUCLIDEAN, goat_cell, l, ComparisonQuality.HQ, ComparisonKind.GENUINE)
    assert v[DrcCategory.GOAT] == 0.0
    assert v[DrcCategory.SHEEP] > 0.5 and v[DrcCategory.WOLF_LAMB] > 0.5


def test_vector_empty_cell_raises():
    s = _three_cluster_set()
    l = build_landscape(s, assign_drc(s), bins=100)
    t = build_distribution([0.5])
    with pytest.raises(MetricError, match="empty landscape cell"):
        dissimilarity_vector(M.EUCLIDEAN, t, l, ComparisonQuality.LQ, ComparisonKind.GENUINE)
