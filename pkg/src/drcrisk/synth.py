"""Synthetic score sets with planted Doddington categories.

Every sample is compared with every other sample once. Goats draw low
genuine scores; every comparison touching a planted wolf/lamb draws an
elevated impostor score. Low-tier samples pull genuine scores down and
widen their spread.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .landscape import CATEGORIES, DrcAssignment, DrcCategory
from .scores import ScoreSet


class SynthConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SynthConfig:
    n_subjects: int = 200
    goat_frac: float = 0.025
    wolf_frac: float = 0.025
    samples_per_tier: int = 3
    sheep_genuine: tuple[float, float] = (0.80, 0.08)
    goat_genuine: tuple[float, float] = (0.35, 0.10)
    wolf_genuine: tuple[float, float] = (0.95, 0.03)
    impostor: tuple[float, float] = (0.15, 0.08)
    wolf_impostor: tuple[float, float] = (0.55, 0.10)
    low_shift: float = 0.15
    low_inflate: float = 1.5
    seed: int = 0

    def validate(self) -> None:
        if self.n_subjects < 4:
            raise SynthConfigError(f"n_subjects must be >= 4, got {self.n_subjects}")
        if self.goat_frac < 0 or self.wolf_frac < 0:
            raise SynthConfigError("planted fractions must be non-negative")
        if not self.goat_frac + self.wolf_frac < 0.5:
            raise SynthConfigError(
                f"goat_frac + wolf_frac must be < 0.5, got {self.goat_frac + self.wolf_frac}")
        if self.samples_per_tier < 2:
            raise SynthConfigError("samples_per_tier must be >= 2")
        for name in ("sheep_genuine", "goat_genuine", "wolf_genuine", "impostor", "wolf_impostor"):
            mean, sd = getattr(self, name)
            if not 0.0 <= mean <= 1.0 or not sd > 0:
                raise SynthConfigError(f"{name}: mean must lie in [0, 1] and stddev be > 0")
        if self.low_inflate <= 0:
            raise SynthConfigError("low_inflate must be > 0")

    def planted_counts(self) -> tuple[int, int]:
        return _round_half_up(self.goat_frac * self.n_subjects), \
            _round_half_up(self.wolf_frac * self.n_subjects)


def _round_half_up(x: float) -> int:
    return int(math.floor(round(x, 9) + 0.5))


@dataclass(frozen=True)
class SynthTruth:
    planted: dict  # subject -> DrcCategory
    config: SynthConfig

    def members(self, category: DrcCategory) -> list[str]:
        return sorted(s for s, c in self.planted.items() if c is category)

    def to_json(self) -> str:
        return json.dumps({s: c.value for s, c in sorted(self.planted.items())}, indent=2)


def subject_id(i: int, n: int) -> str:
    return f"s{i:0{max(3, len(str(n - 1)))}d}"


def generate(cfg: SynthConfig = SynthConfig()) -> tuple[ScoreSet, SynthTruth]:
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    n = cfg.n_subjects
    ids = [subject_id(i, n) for i in range(n)]
    n_goat, n_wolf = cfg.planted_counts()
    order = rng.permutation(n)
    cat = np.full(n, 2, dtype=np.int8)  # CATEGORIES index: 0 goat, 1 wolf/lamb, 2 sheep
    cat[order[:n_goat]] = 0
    cat[order[n_goat:n_goat + n_wolf]] = 1
    planted = {ids[i]: CATEGORIES[cat[i]] for i in range(n)}

    k = cfg.samples_per_tier
    subj = np.repeat(np.arange(n), 2 * k)
    tier = np.tile(np.repeat([0, 1], k), n)  # 0 high, 1 low
    within = np.tile(np.arange(k), 2 * n)
    sample_names = [f"{ids[s]}_{'hl'[t]}{j}" for s, t, j in zip(subj, tier, within)]

    ia, ib = np.triu_indices(subj.size, k=1)
    sa, sb = subj[ia], subj[ib]
    ta, tb = tier[ia], tier[ib]
    genuine = sa == sb

    gen_params = np.array([cfg.goat_genuine, cfg.wolf_genuine, cfg.sheep_genuine])
    mean = np.empty(ia.size)
    sd = np.empty(ia.size)
    mean[genuine] = gen_params[cat[sa[genuine]], 0]
    sd[genuine] = gen_params[cat[sa[genuine]], 1]
    low = genuine & ((ta == 1) | (tb == 1))
    mean[low] -= cfg.low_shift
    sd[low] *= cfg.low_inflate
    imp = ~genuine
    wolfish = imp & ((cat[sa] == 1) | (cat[sb] == 1))
    mean[imp], sd[imp] = cfg.impostor
    mean[wolfish], sd[wolfish] = cfg.wolf_impostor
    scores = np.clip(mean + sd * rng.standard_normal(ia.size), 0.0, 1.0)

    s = ScoreSet(ids, sa, sb, ta, tb, scores,
                 [sample_names[i] for i in ia], [sample_names[i] for i in ib])
    return s, SynthTruth(planted, cfg)


@dataclass(frozen=True)
class RecoveryReport:
    sensitivity: dict  # DrcCategory -> float (nan when nothing was planted)
    accuracy: float


def oracle_check(truth: SynthTruth, a: DrcAssignment) -> RecoveryReport:
    if set(truth.planted) != set(a.categories):
        raise ValueError("truth and assignment cover different subjects")
    sens = {}
    for c in CATEGORIES:
        planted = truth.members(c)
        sens[c] = (sum(a[s] is c for s in planted) / len(planted)) if planted else float("nan")
    acc = sum(a[s] is c for s, c in truth.planted.items()) / len(truth.planted)
    return RecoveryReport(sens, acc)


def config_dict(cfg: SynthConfig) -> dict:
    return asdict(cfg)
