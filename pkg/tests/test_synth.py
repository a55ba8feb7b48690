import numpy as np
import pytest

from drcrisk.landscape import DrcCategory, assign_drc
from drcrisk.scores import read_scores_csv, write_scores_csv
from drcrisk.synth import SynthConfig, SynthConfigError, generate, oracle_check


def test_deterministic():
    a, ta = generate(SynthConfig(n_subjects=12, seed=4))
    b, tb = generate(SynthConfig(n_subjects=12, seed=4))
    assert np.array_equal(a.raw, b.raw) and ta.planted == tb.planted
    c, _ = generate(SynthConfig(n_subjects=12, seed=5))
    assert not np.array_equal(a.raw, c.raw)


def test_planted_counts(synth40):
    s, truth = synth40
    assert s.n_subjects == 40
    assert len(truth.members(DrcCategory.GOAT)) == 1
    assert len(truth.members(DrcCategory.WOLF_LAMB)) == 1
    assert len(truth.members(DrcCategory.SHEEP)) == 38
    # 6 samples per subject, every pair compared once
    assert len(s) == 240 * 239 // 2


@pytest.mark.parametrize("kw", [dict(goat_frac=0.6), dict(goat_frac=0.25, wolf_frac=0.25),
                                dict(n_subjects=2), dict(samples_per_tier=1),
                                dict(sheep_genuine=(1.5, 0.1))])
def test_invalid_config(kw):
    with pytest.raises(SynthConfigError):
        generate(SynthConfig(**kw))


def test_csv_round_trip(tmp_path):
    s, _ = generate(SynthConfig(n_subjects=6, seed=2))
    p = tmp_path / "s.csv"
    write_scores_csv(s, p)
    t = read_scores_csv(p)
    assert t.records == s.records
    assert np.array_equal(t.normalized, s.normalized)


def test_goat_recovery_monte_carlo():
    sens = []
    for seed in range(5):
        s, truth = generate(SynthConfig(n_subjects=40, seed=seed))
        sens.append(oracle_check(truth, assign_drc(s)).sensitivity[DrcCategory.GOAT])
    assert np.mean(sens) >= 0.8


def test_oracle_check_rejects_other_universe(synth40, synth12):
    s, truth = synth40
    with pytest.raises(ValueError):
        oracle_check(truth, assign_drc(synth12[0]))
    rep = oracle_check(truth, assign_drc(s))
    assert 0.0 <= rep.accuracy <= 1.0
