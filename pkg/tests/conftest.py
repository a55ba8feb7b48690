import numpy as np
import pytest

from drcrisk.scores import QualityTier, ScoreRecord, from_records
from drcrisk.synth import SynthConfig, generate

H, L = QualityTier.HIGH, QualityTier.LOW


def ring_scoreset(n, seed=0, genuine=None):
    """Cheap set: one genuine HQ score per subject plus an impostor ring."""
    rng = np.random.default_rng(seed)
    ids = [f"p{i:05d}" for i in range(n)]
    g = rng.random(n) if genuine is None else np.asarray(genuine, dtype=float)
    recs = [ScoreRecord(ids[i], ids[i], H, H, float(g[i])) for i in range(n)]
    recs += [ScoreRecord(ids[i], ids[(i + 1) % n], H, H, float(rng.random())) for i in range(n)]
    return from_records(recs)


@pytest.fixture(scope="session")
def synth40():
    return generate(SynthConfig(n_subjects=40, seed=7))


@pytest.fixture(scope="session")
def synth12():
    return generate(SynthConfig(n_subjects=12, goat_frac=0.1, wolf_frac=0.1, seed=3))
