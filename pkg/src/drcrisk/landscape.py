"""Doddington category assignment and the watchlist landscape.

Subjects are ranked by mean normalized genuine score (lowest -> goat) and
mean normalized impostor score (highest -> wolf/lamb). The landscape is the
set of 18 Gaussian-smoothed score histograms, one per
(category, comparison quality, comparison kind).
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Sequence, Union

import numpy as np

from .scores import (
    KINDS,
    QUALITIES,
    ComparisonKind,
    ComparisonQuality,
    EmptyScoreSetError,
    ScoreError,
    ScoreRecord,
    ScoreSet,
    from_records,
    _TIER_CODE,
)

log = logging.getLogger(__name__)

DEFAULT_PERCENTILE = 0.025
DEFAULT_BINS = 100
MIN_BANDWIDTH = 0.01


class DrcCategory(str, Enum):
    GOAT = "goat"
    WOLF_LAMB = "wolf_lamb"
    SHEEP = "sheep"

    @property
    def cost_rank(self) -> int:
        # higher = more costly; used for tie-breaks
        return {"wolf_lamb": 2, "goat": 1, "sheep": 0}[self.value]


CATEGORIES = (DrcCategory.GOAT, DrcCategory.WOLF_LAMB, DrcCategory.SHEEP)
_CAT_CODE = {c: i for i, c in enumerate(CATEGORIES)}

CellKey = tuple  # (DrcCategory, ComparisonQuality, ComparisonKind)


def cell_keys() -> list[CellKey]:
    return [(c, q, k) for k in KINDS for q in QUALITIES for c in CATEGORIES]


def flag_count(n_subjects: int, percentile: float) -> int:
    """Number of subjects flagged per tail: ``ceil(percentile * n)``, within ``[1, n]``."""
    if n_subjects < 1:
        raise ValueError(f"n_subjects must be >= 1, got {n_subjects}")
    if not 0.0 < percentile < 0.5:
        raise ValueError(f"percentile must lie in (0, 0.5), got {percentile}")
    # round away float noise such as 0.025 * 40 = 1.0000000000000002
    k = math.ceil(round(percentile * n_subjects, 9))
    return min(n_subjects, max(1, k))


@dataclass(frozen=True)
class DrcAssignment:
    categories: Mapping[str, DrcCategory]
    mean_genuine: Mapping[str, float]
    mean_impostor: Mapping[str, float]
    percentile: float
    flagged_count: int
    n_ranked: int
    unranked: tuple[str, ...] = ()

    def __getitem__(self, subject: str) -> DrcCategory:
        return self.categories[subject]

    def members(self, category: DrcCategory) -> list[str]:
        return sorted(s for s, c in self.categories.items() if c is category)

    def counts(self) -> dict[DrcCategory, int]:
        out = {c: 0 for c in CATEGORIES}
        for c in self.categories.values():
            out[c] += 1
        return out

    def proportions(self) -> dict[DrcCategory, float]:
        n = len(self.categories)
        return {c: k / n for c, k in self.counts().items()}

    def codes(self, subject_ids: Sequence[str]) -> np.ndarray:
        """Category codes aligned with ``subject_ids`` (-1 for subjects not assigned)."""
        return np.array([_CAT_CODE[self.categories[s]] if s in self.categories else -1
                         for s in subject_ids], dtype=np.int8)


def subject_means(s: ScoreSet, keep: np.ndarray | None = None):
    """Per-subject (mean genuine, mean impostor, genuine count, impostor count)
    over the records selected by ``keep``.

    An impostor record counts toward both participants.
    """
    n = s.n_subjects
    g = s.genuine if keep is None else s.genuine & keep
    imp = ~s.genuine if keep is None else ~s.genuine & keep
    x = s.normalized
    ga, xg = s.idx_a[g], x[g]
    ia, ib, xi = s.idx_a[imp], s.idx_b[imp], x[imp]
    g_sum = np.bincount(ga, weights=xg, minlength=n)
    g_cnt = np.bincount(ga, minlength=n)
    i_sum = np.bincount(ia, weights=xi, minlength=n) + np.bincount(ib, weights=xi, minlength=n)
    i_cnt = np.bincount(ia, minlength=n) + np.bincount(ib, minlength=n)
    with np.errstate(invalid="ignore", divide="ignore"):
        return g_sum / g_cnt, i_sum / i_cnt, g_cnt, i_cnt


def assign_drc(s: ScoreSet, percentile: float = DEFAULT_PERCENTILE,
               exclude: str | None = None) -> DrcAssignment:
    """Rank subjects into goat / wolf-lamb / sheep.

    ``exclude`` drops a subject and every record involving it; the result
    equals ``assign_drc(s.exclude(subject))`` without copying the set.
    """
    if len(s) == 0 or s.n_subjects == 0:
        raise EmptyScoreSetError("cannot assign categories on an empty score set")
    keep = None
    members = np.ones(s.n_subjects, dtype=bool)
    if exclude is not None:
        keep = ~s.involving(exclude)
        members[s.subject_index(exclude)] = False
        if not members.any():
            raise EmptyScoreSetError("no subjects left after exclusion")
    mean_g, mean_i, g_cnt, i_cnt = subject_means(s, keep)
    ids = s.subject_ids
    usable = (g_cnt > 0) & (i_cnt > 0) & members
    unranked = tuple(ids[i] for i in np.flatnonzero(~usable & members))
    if unranked:
        log.warning("%d subject(s) lack genuine or impostor scores; assigned sheep: %s",
                    len(unranked), ", ".join(unranked[:10]))
    ranked = [i for i in range(len(ids)) if usable[i]]
    cats = {ids[i]: DrcCategory.SHEEP for i in np.flatnonzero(members)}
    k = 0
    if ranked:
        k = flag_count(len(ranked), percentile)
        # ids are sorted, so index order is the lexicographic tie-break
        by_genuine = sorted(ranked, key=lambda i: (mean_g[i], i))
        by_impostor = sorted(ranked, key=lambda i: (-mean_i[i], i))
        wolves = set(by_impostor[:k])
        goats = [i for i in by_genuine if i not in wolves][:k]
        for i in wolves:
            cats[ids[i]] = DrcCategory.WOLF_LAMB
        for i in goats:
            cats[ids[i]] = DrcCategory.GOAT
    return DrcAssignment(
        categories=cats,
        mean_genuine={ids[i]: float(mean_g[i]) for i in np.flatnonzero(members)},
        mean_impostor={ids[i]: float(mean_i[i]) for i in np.flatnonzero(members)},
        percentile=percentile,
        flagged_count=k,
        n_ranked=len(ranked),
        unranked=unranked,
    )


# -- distributions -------------------------------------------------------------

def bin_edges(bins: int) -> np.ndarray:
    return np.linspace(0.0, 1.0, bins + 1)


def silverman_bandwidth(scores) -> float:
    x = np.sort(np.asarray(scores, dtype=float))  # order-free sums
    n = x.size
    sigma = float(np.std(x, ddof=1)) if n > 1 else 0.0
    if n == 0:
        return MIN_BANDWIDTH
    return max(MIN_BANDWIDTH, 1.06 * sigma * n ** (-0.2))


def kernel_sum(scores, centers: np.ndarray, bandwidth: float, chunk: int = 20000) -> np.ndarray:
    """Unnormalized ``sum_s exp(-(c - s)^2 / (2 h^2))`` at every center ``c``."""
    x = np.asarray(scores, dtype=float)
    out = np.zeros(centers.size)
    two_h2 = 2.0 * bandwidth * bandwidth
    for start in range(0, x.size, chunk):
        d = centers[:, None] - x[None, start:start + chunk]
        out += np.exp(-(d * d) / two_h2).sum(axis=1)
    return out


@dataclass(frozen=True)
class ScoreDistribution:
    bin_edges: np.ndarray
    mass: np.ndarray
    sample_count: int
    bandwidth: float

    @property
    def bins(self) -> int:
        return self.mass.size

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.bin_edges[:-1] + self.bin_edges[1:])

    @property
    def empty(self) -> bool:
        return self.sample_count == 0

    def same_grid(self, other: "ScoreDistribution") -> bool:
        return self.bin_edges.shape == other.bin_edges.shape and np.array_equal(
            self.bin_edges, other.bin_edges)


BandwidthSpec = Union[float, str, None]


def resolve_bandwidth(scores, bandwidth: BandwidthSpec) -> float:
    if bandwidth is None or bandwidth == "auto":
        return silverman_bandwidth(scores)
    h = float(bandwidth)
    if not h > 0:
        raise ValueError(f"bandwidth must be > 0, got {bandwidth}")
    return h


def build_distribution(scores, bins: int = DEFAULT_BINS,
                       bandwidth: BandwidthSpec = None) -> ScoreDistribution:
    """Gaussian-smoothed histogram of normalized scores on ``bins`` equal bins of [0, 1]."""
    if bins < 2:
        raise ValueError(f"bins must be >= 2, got {bins}")
    x = np.asarray(scores, dtype=float).ravel()
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite score in distribution input")
    if x.size and (x.min() < 0.0 or x.max() > 1.0):
        raise ValueError("scores must be normalized to [0, 1]")
    return smoothed_histogram(x, bins, bandwidth)[0]


def smoothed_histogram(x: np.ndarray, bins: int, bandwidth: BandwidthSpec):
    """``(distribution, unnormalized kernel sums)`` for validated scores ``x``."""
    edges = bin_edges(bins)
    h = resolve_bandwidth(x, bandwidth)
    if x.size == 0:
        return ScoreDistribution(edges, np.zeros(bins), 0, h), np.zeros(bins)
    centers = 0.5 * (edges[:-1] + edges[1:])
    # sorting fixes the summation order, so mass is permutation invariant bit for bit
    raw = kernel_sum(np.sort(x), centers, h)
    total = raw.sum()
    if total <= 0.0:
        raise ValueError("kernel sum underflowed")
    return ScoreDistribution(edges, raw / total, int(x.size), h), raw


# -- landscape -------------------------------------------------------------------

@dataclass(frozen=True)
class Landscape:
    distributions: Mapping[CellKey, ScoreDistribution]
    proportions: Mapping[DrcCategory, float]
    assignment: DrcAssignment
    version: int = 0
    bins: int = DEFAULT_BINS
    bandwidth: BandwidthSpec = None
    excluded: str | None = None

    @property
    def percentile(self) -> float:
        return self.assignment.percentile

    def cell(self, category, quality, kind) -> ScoreDistribution:
        return self.distributions[(DrcCategory(category), ComparisonQuality(quality),
                                   ComparisonKind(kind))]


def record_cell_mask(s: ScoreSet, codes: np.ndarray, category: DrcCategory,
                     quality: ComparisonQuality, kind: ComparisonKind) -> np.ndarray:
    """Records pooled into one landscape cell.

    Genuine records go to the subject's category; an impostor record goes to
    every category held by either participant.
    """
    c = _CAT_CODE[category]
    base = s.cell_mask(quality, kind)
    if kind is ComparisonKind.GENUINE:
        return base & (codes[s.idx_a] == c)
    return base & ((codes[s.idx_a] == c) | (codes[s.idx_b] == c))


def build_landscape(s: ScoreSet, a: DrcAssignment, exclude: str | None = None,
                    bins: int = DEFAULT_BINS, bandwidth: BandwidthSpec = None,
                    version: int = 0, cells=None) -> Landscape:
    """Pool scores into the 18 cells. ``cells`` restricts which cells are built
    (the rest are left empty); LOOCV uses it to skip cells it does not read."""
    keep = np.ones(len(s), dtype=bool)
    if exclude is not None:
        keep &= ~s.involving(exclude)
    codes = a.codes(s.subject_ids)
    live = np.zeros(s.n_subjects, dtype=bool)
    live[s.idx_a[keep]] = True
    live[s.idx_b[keep]] = True
    missing = [s.subject_ids[i] for i in np.flatnonzero(live & (codes < 0))]
    if missing:
        raise ScoreError(f"assignment does not cover subjects: {missing[:5]}")
    wanted = None if cells is None else set(cells)
    dists = {}
    for key in cell_keys():
        if wanted is not None and key not in wanted:
            dists[key] = build_distribution([], bins, bandwidth)
            continue
        mask = keep & record_cell_mask(s, codes, *key)
        dists[key] = build_distribution(s.normalized[mask], bins, bandwidth)
    return Landscape(dists, a.proportions(), a, version, bins, bandwidth, exclude)


def landscape_proportions(l: Landscape) -> dict[DrcCategory, float]:
    return dict(l.proportions)


def compute_landscape(s: ScoreSet, percentile: float = DEFAULT_PERCENTILE,
                      bins: int = DEFAULT_BINS, bandwidth: BandwidthSpec = None,
                      version: int = 0) -> Landscape:
    return build_landscape(s, assign_drc(s, percentile), bins=bins,
                           bandwidth=bandwidth, version=version)


# -- monitoring ------------------------------------------------------------------

@dataclass(frozen=True)
class Add:
    records: Sequence[ScoreRecord]


@dataclass(frozen=True)
class Replace:
    subject: str
    records: Sequence[ScoreRecord]


@dataclass(frozen=True)
class Remove:
    subject: str


def append_records(s: ScoreSet, records: Sequence[ScoreRecord]) -> ScoreSet:
    """New ScoreSet with ``records`` appended; the score range is recomputed."""
    if not records:
        return s
    if len(s) == 0:
        return from_records(records, s.subject_ids)
    ids = sorted(set(s.subject_ids) | {r.subject_a for r in records} | {r.subject_b for r in records})
    index = {sid: i for i, sid in enumerate(ids)}
    remap = np.array([index[sid] for sid in s.subject_ids], dtype=np.int64)
    with_samples = s.sample_a is not None or any(r.sample_a is not None for r in records)
    old_sa = s.sample_a.tolist() if s.sample_a is not None else [None] * len(s)
    old_sb = s.sample_b.tolist() if s.sample_b is not None else [None] * len(s)
    return ScoreSet(
        ids,
        np.concatenate([remap[s.idx_a], [index[r.subject_a] for r in records]]),
        np.concatenate([remap[s.idx_b], [index[r.subject_b] for r in records]]),
        np.concatenate([s.tier_a, [_TIER_CODE[r.tier_a] for r in records]]),
        np.concatenate([s.tier_b, [_TIER_CODE[r.tier_b] for r in records]]),
        np.concatenate([s.raw, [r.raw_score for r in records]]),
        old_sa + [r.sample_a for r in records] if with_samples else None,
        old_sb + [r.sample_b for r in records] if with_samples else None,
    )


def remove_subject(s: ScoreSet, subject: str) -> ScoreSet:
    return s.select(~s.involving(subject), drop_subjects=[subject], keep_range=False)


def apply_mutation(s: ScoreSet, op) -> ScoreSet:
    if isinstance(op, Add):
        return append_records(s, op.records)
    if isinstance(op, Remove):
        return remove_subject(s, op.subject)
    if isinstance(op, Replace):
        s.subject_index(op.subject)
        stray = [r for r in op.records if op.subject not in (r.subject_a, r.subject_b)]
        if stray:
            raise ScoreError(f"replacement records must involve {op.subject!r}")
        kept = s.select(~s.involving(op.subject), keep_range=False) if len(s) else s
        return append_records(kept, op.records)
    raise TypeError(f"unknown watchlist mutation {op!r}")


def mutate_watchlist(l: Landscape, s: ScoreSet, op) -> tuple[ScoreSet, Landscape]:
    """Apply ``op`` and recompute the assignment and landscape from scratch."""
    new_s = apply_mutation(s, op)
    a = assign_drc(new_s, l.assignment.percentile)
    return new_s, build_landscape(new_s, a, bins=l.bins, bandwidth=l.bandwidth,
                                  version=l.version + 1)


def landscape_diff(old: Landscape, new: Landscape) -> dict:
    """Per-cell L1 mass deltas and per-subject category changes."""
    deltas = {key: float(np.abs(old.distributions[key].mass - new.distributions[key].mass).sum())
              for key in cell_keys()}
    changes = {}
    for sid in sorted(set(old.assignment.categories) | set(new.assignment.categories)):
        before = old.assignment.categories.get(sid)
        after = new.assignment.categories.get(sid)
        if before is not after:
            changes[sid] = (before, after)
    return {"cell_l1": deltas, "category_changes": changes,
            "old_version": old.version, "new_version": new.version}


# -- serialization ---------------------------------------------------------------

def landscape_to_dict(l: Landscape) -> dict:
    """JSON-ready form; the shared bin edges are stored once."""
    a = l.assignment
    return {
        "version": l.version,
        "bins": l.bins,
        "bandwidth": l.bandwidth,
        "percentile": a.percentile,
        "excluded": l.excluded,
        "bin_edges": bin_edges(l.bins).tolist(),
        "proportions": {c.value: l.proportions[c] for c in CATEGORIES},
        "assignment": {
            "flagged_count": a.flagged_count,
            "n_ranked": a.n_ranked,
            "unranked": list(a.unranked),
            "subjects": {sid: [a.categories[sid].value, a.mean_genuine[sid], a.mean_impostor[sid]]
                         for sid in sorted(a.categories)},
        },
        "cells": [{
            "category": c.value, "quality": q.value, "kind": k.value,
            "sample_count": l.distributions[(c, q, k)].sample_count,
            "bandwidth": l.distributions[(c, q, k)].bandwidth,
            "mass": l.distributions[(c, q, k)].mass.tolist(),
        } for c, q, k in cell_keys()],
    }


def landscape_from_dict(d: Mapping) -> Landscape:
    try:
        bins = int(d["bins"])
        edges = np.asarray(d["bin_edges"], dtype=float)
        if edges.size != bins + 1:
            raise ValueError(f"expected {bins + 1} bin edges, got {edges.size}")
        subj = d["assignment"]["subjects"]
        a = DrcAssignment(
            categories={s: DrcCategory(v[0]) for s, v in subj.items()},
            mean_genuine={s: float(v[1]) for s, v in subj.items()},
            mean_impostor={s: float(v[2]) for s, v in subj.items()},
            percentile=float(d["percentile"]),
            flagged_count=int(d["assignment"]["flagged_count"]),
            n_ranked=int(d["assignment"]["n_ranked"]),
            unranked=tuple(d["assignment"]["unranked"]),
        )
        dists = {}
        for cell in d["cells"]:
            key = (DrcCategory(cell["category"]), ComparisonQuality(cell["quality"]),
                   ComparisonKind(cell["kind"]))
            mass = np.asarray(cell["mass"], dtype=float)
            if mass.size != bins:
                raise ValueError(f"cell {'/'.join(x.value for x in key)} has {mass.size} bins")
            dists[key] = ScoreDistribution(edges, mass, int(cell["sample_count"]),
                                           float(cell["bandwidth"]))
        missing = [k for k in cell_keys() if k not in dists]
        if missing:
            raise ValueError(f"{len(missing)} landscape cell(s) missing")
        props = {DrcCategory(k): float(v) for k, v in d["proportions"].items()}
        return Landscape(dists, props, a, int(d["version"]), bins, d.get("bandwidth"),
                         d.get("excluded"))
    except (KeyError, TypeError, IndexError) as exc:
        raise ValueError(f"malformed landscape: {exc!r}") from None
