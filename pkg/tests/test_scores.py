import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from drcrisk.scores import (
    ComparisonKind,
    ComparisonQuality,
    EmptyScoreSetError,
    GateConfig,
    QualityTier,
    ScoreError,
    ScoreRecord,
    UnknownSubjectError,
    classify_comparison,
    from_records,
    ingest_scores,
    normalize_score,
    quality_gate,
    read_scores_csv,
    subject_score_slices,
    write_scores_csv,
)

H, L = QualityTier.HIGH, QualityTier.LOW


def test_ingest_three_rows():
    s = ingest_scores([
        ("A", "A", "high", "high", "10"),
        ("A", "B", "HIGH", "low", "20"),
        ("B", "C", "Low", "low", "40"),
    ])
    assert len(s) == 3
    assert s.subjects == {"A", "B", "C"}
    assert (s.norm_min, s.norm_max) == (10.0, 40.0)


@pytest.mark.parametrize("row, fragment", [
    (("A", "B", "high", "low", "NaN"), "non-finite"),
    (("A", "B", "high", "low", "inf"), "non-finite"),
    (("A", "B", "high", "low", "abc"), "non-numeric"),
    (("A", "B", "high", "medium", "0.3"), "unknown tier"),
    (("A", "", "high", "low", "0.3"), "missing field"),
    (("A", "B", "high", "low"), "expected 5 or 7"),
])
def test_ingest_rejects_malformed_row_with_line_number(row, fragment):
    rows = [("A", "A", "high", "high", "0.5"), row]
    with pytest.raises(ScoreError) as exc:
        ingest_scores(rows, first_line=2)
    assert "line 3" in str(exc.value)
    assert fragment in str(exc.value)


def test_ingest_empty_is_distinct_error():
    with pytest.raises(EmptyScoreSetError):
        ingest_scores([])


def test_duplicate_pairs_are_kept():
    s = ingest_scores([("A", "B", "high", "high", "1"), ("A", "B", "high", "high", "2")])
    assert len(s) == 2


def test_identical_sample_self_pair_rejected_only_with_sample_ids():
    with pytest.raises(ScoreError, match="compared with itself"):
        ingest_scores([("A", "A", "high", "high", "1", "x1", "x1")])
    s = ingest_scores([("A", "A", "high", "high", "1", "x1", "x2"),
                       ("A", "A", "high", "high", "1", "", "")])
    assert len(s) == 2


def test_normalize_score_boundaries_and_midpoint():
    s = ingest_scores([("A", "A", "high", "high", v) for v in ("10", "20", "40")])
    assert normalize_score(s, 10) == 0.0
    assert normalize_score(s, 40) == 1.0
    assert normalize_score(s, 25) == 0.5
    assert normalize_score(s, -100) == 0.0
    assert normalize_score(s, 100) == 1.0


def test_normalize_degenerate_range():
    s = ingest_scores([("A", "A", "high", "high", "3"), ("A", "B", "high", "high", "3")])
    with pytest.raises(ScoreError, match="degenerate"):
        normalize_score(s, 3)


@given(st.lists(st.floats(-1e6, 1e6), min_size=2, max_size=30).filter(lambda v: max(v) > min(v)),
       st.floats(-2e6, 2e6), st.floats(-2e6, 2e6))
def test_normalize_monotone_and_extrema(raws, x, y):
    s = from_records([ScoreRecord("A", "B", H, H, r) for r in raws])
    assert normalize_score(s, min(raws)) == 0.0
    assert normalize_score(s, max(raws)) == 1.0
    lo, hi = sorted((x, y))
    assert normalize_score(s, lo) <= normalize_score(s, hi)
    assert np.all((s.normalized >= 0) & (s.normalized <= 1))


@pytest.mark.parametrize("rec, expected", [
    (ScoreRecord("A", "A", H, H, 1.0), (ComparisonKind.GENUINE, ComparisonQuality.HQ)),
    (ScoreRecord("A", "B", L, L, 1.0), (ComparisonKind.IMPOSTOR, ComparisonQuality.LQ)),
    (ScoreRecord("A", "B", H, L, 1.0), (ComparisonKind.IMPOSTOR, ComparisonQuality.VQ)),
    (ScoreRecord("A", "A", L, H, 1.0), (ComparisonKind.GENUINE, ComparisonQuality.VQ)),
])
def test_classify_comparison(rec, expected):
    assert classify_comparison(rec) == expected


@settings(max_examples=50)
@given(st.lists(st.tuples(st.sampled_from("ABCD"), st.sampled_from("ABCD"),
                          st.sampled_from([H, L]), st.sampled_from([H, L]),
                          st.floats(0, 100)), min_size=1, max_size=40))
def test_columnar_kind_matches_records(rows):
    recs = [ScoreRecord(*r) for r in rows]
    s = from_records(recs)
    for i, r in enumerate(s.records):
        kind, quality = classify_comparison(r)
        assert (kind is ComparisonKind.GENUINE) == (r.subject_a == r.subject_b) == bool(s.genuine[i])
        assert s.cell_mask(quality, kind)[i]


def _slice_lengths(sl):
    return tuple(len(sl[(k, q)]) for k in ComparisonKind for q in ComparisonQuality)


def test_slices_single_genuine():
    s = from_records([ScoreRecord("A", "A", H, H, 0.9), ScoreRecord("B", "C", L, L, 0.1)])
    assert _slice_lengths(subject_score_slices(s, "A")) == (1, 0, 0, 0, 0, 0)


def test_slices_unknown_subject():
    s = from_records([ScoreRecord("A", "A", H, H, 0.9)])
    with pytest.raises(UnknownSubjectError):
        subject_score_slices(s, "Z")


def test_slices_counts_against_brute_force():
    rng = np.random.default_rng(3)
    recs = [ScoreRecord("A", "A", H, H, float(rng.random())) for _ in range(4)]
    recs += [ScoreRecord("A", o, H, L, float(rng.random())) for o in "BCDBCD"]
    recs += [ScoreRecord("B", "C", H, H, float(rng.random())) for _ in range(5)]
    s = from_records(recs)
    sl = subject_score_slices(s, "A")
    # brute force: scan records
    counts = {}
    for r in recs:
        if "A" in (r.subject_a, r.subject_b):
            key = classify_comparison(r)
            counts[key] = counts.get(key, 0) + 1
    assert _slice_lengths(sl) == (4, 0, 0, 0, 0, 6)
    for (kind, q), vals in sl.items():
        assert len(vals) == counts.get((kind, q), 0)


def test_slices_union_is_subject_multiset():
    rng = np.random.default_rng(5)
    recs = [ScoreRecord(a, b, t1, t2, float(rng.random()))
            for a in "ABC" for b in "ABC" for t1 in (H, L) for t2 in (H, L)]
    s = from_records(recs)
    mine = sorted(float(x) for x, r in zip(s.normalized, s.records) if "B" in (r.subject_a, r.subject_b))
    pooled = sorted(v for vals in subject_score_slices(s, "B").values() for v in vals)
    assert pooled == mine


def _gate_set(genuine):
    recs = [ScoreRecord("E", "E", H, H, g) for g in genuine]
    recs += [ScoreRecord("F", "F", H, H, 0.0), ScoreRecord("F", "F", H, H, 1.0)]
    return from_records(recs)


def test_quality_gate_pass():
    v = quality_gate(_gate_set([0.9, 0.85]), "E")
    assert v.passed and v.label == "Pass"
    assert v.n_genuine == 2


def test_quality_gate_low_mean():
    v = quality_gate(_gate_set([0.05, 0.1]), "E")
    assert not v.passed and v.reason == "low mean genuine"


def test_quality_gate_insufficient_samples():
    v = quality_gate(_gate_set([0.9]), "E")
    assert not v.passed and v.reason == "insufficient samples"


def test_quality_gate_configurable():
    v = quality_gate(_gate_set([0.05, 0.1]), "E", GateConfig(min_mean_genuine=0.01))
    assert v.passed


def test_csv_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    recs = [ScoreRecord(a, b, H, L, float(rng.normal() * 100), f"{a}1", f"{b}2")
            for a in "XYZ" for b in "XYZ"]
    s = from_records(recs)
    path = tmp_path / "s.csv"
    write_scores_csv(s, path)
    again = read_scores_csv(path)
    assert again.records == s.records
    assert (again.norm_min, again.norm_max) == (s.norm_min, s.norm_max)


def test_csv_errors_use_file_line_numbers(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("subject_a,subject_b,tier_a,tier_b,score\nA,A,high,high,1\nA,B,high,mid,2\n")
    with pytest.raises(ScoreError, match="line 3"):
        read_scores_csv(path)
    path.write_text("subject_a,subject_b,tier_a,tier_b,score\n")
    with pytest.raises(EmptyScoreSetError):
        read_scores_csv(path)
    path.write_text("a,b,c\n")
    with pytest.raises(ScoreError, match="header"):
        read_scores_csv(path)


def test_scoreset_is_read_only():
    s = from_records([ScoreRecord("A", "A", H, H, 1.0), ScoreRecord("A", "B", H, H, 2.0)])
    with pytest.raises(ValueError):
        s.normalized[0] = 0.3


def test_exclude_keeps_scale():
    s = from_records([ScoreRecord("A", "A", H, H, 0.0), ScoreRecord("B", "B", H, H, 5.0),
                      ScoreRecord("C", "C", H, H, 10.0)])
    t = s.exclude("C")
    assert t.subjects == {"A", "B"}
    assert t.normalized.tolist() == [0.0, 0.5]
    assert math.isclose(t.norm_max, 10.0)
