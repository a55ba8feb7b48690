"""Pairwise match-score storage, validation and indexing.

A ScoreSet holds every comparison as parallel numpy columns so the
ranking and landscape code can work on boolean masks instead of Python
objects. ScoreRecord is the row-level view used at the edges (ingest,
export, tests).
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence

import numpy as np


class ScoreError(ValueError):
    """Raised for malformed or inconsistent score input."""


class EmptyScoreSetError(ScoreError):
    pass


class UnknownSubjectError(ScoreError, KeyError):
    def __str__(self) -> str:  # KeyError quotes its message otherwise
        return str(self.args[0]) if self.args else ""


class QualityTier(str, Enum):
    HIGH = "high"
    LOW = "low"


class ComparisonQuality(str, Enum):
    HQ = "HQ"
    LQ = "LQ"
    VQ = "VQ"


class ComparisonKind(str, Enum):
    GENUINE = "genuine"
    IMPOSTOR = "impostor"


QUALITIES = (ComparisonQuality.HQ, ComparisonQuality.LQ, ComparisonQuality.VQ)
KINDS = (ComparisonKind.GENUINE, ComparisonKind.IMPOSTOR)

# integer codes used in the columnar store
_TIER_CODE = {QualityTier.HIGH: 0, QualityTier.LOW: 1}
_QUALITY_CODE = {ComparisonQuality.HQ: 0, ComparisonQuality.LQ: 1, ComparisonQuality.VQ: 2}


def parse_tier(label: str) -> QualityTier:
    try:
        return QualityTier(str(label).strip().lower())
    except ValueError:
        raise ScoreError(f"unknown tier label {label!r} (expected high|low)") from None


def pair_quality(tier_a: QualityTier, tier_b: QualityTier) -> ComparisonQuality:
    if tier_a != tier_b:
        return ComparisonQuality.VQ
    return ComparisonQuality.HQ if tier_a is QualityTier.HIGH else ComparisonQuality.LQ


@dataclass(frozen=True)
class ScoreRecord:
    subject_a: str
    subject_b: str
    tier_a: QualityTier
    tier_b: QualityTier
    raw_score: float
    sample_a: str | None = None
    sample_b: str | None = None

    def __post_init__(self):
        if not self.subject_a or not self.subject_b:
            raise ScoreError("subject ids must be non-empty")
        if not math.isfinite(self.raw_score):
            raise ScoreError(f"non-finite score {self.raw_score!r}")

    @property
    def kind(self) -> ComparisonKind:
        return classify_comparison(self)[0]

    @property
    def quality(self) -> ComparisonQuality:
        return classify_comparison(self)[1]


def classify_comparison(r: ScoreRecord) -> tuple[ComparisonKind, ComparisonQuality]:
    kind = ComparisonKind.GENUINE if r.subject_a == r.subject_b else ComparisonKind.IMPOSTOR
    return kind, pair_quality(r.tier_a, r.tier_b)


@dataclass(frozen=True)
class GateVerdict:
    passed: bool
    reason: str | None
    mean_genuine: float
    n_genuine: int

    @property
    def label(self) -> str:
        return "Pass" if self.passed else f"Flag({self.reason})"


class ScoreSet:
    """Immutable columnar collection of match scores.

    ``subject_ids`` is sorted, so subject indices (``idx_a``/``idx_b``)
    follow lexicographic id order. ``norm_min``/``norm_max`` default to the
    observed raw extrema; subsets made with :meth:`exclude` keep the parent
    range so normalized values stay comparable.
    """

    def __init__(self, subject_ids, idx_a, idx_b, tier_a, tier_b, raw,
                 sample_a=None, sample_b=None, norm_range=None):
        self.subject_ids: tuple[str, ...] = tuple(subject_ids)
        self.idx_a = _frozen(np.asarray(idx_a, dtype=np.int64))
        self.idx_b = _frozen(np.asarray(idx_b, dtype=np.int64))
        self.tier_a = _frozen(np.asarray(tier_a, dtype=np.int8))
        self.tier_b = _frozen(np.asarray(tier_b, dtype=np.int8))
        self.raw = _frozen(np.asarray(raw, dtype=np.float64))
        self.sample_a = None if sample_a is None else _frozen(_object_array(sample_a))
        self.sample_b = None if sample_b is None else _frozen(_object_array(sample_b))
        if self.raw.size == 0 and norm_range is None:
            raise EmptyScoreSetError("empty score set")
        if not np.all(np.isfinite(self.raw)):
            raise ScoreError("non-finite raw score in score set")
        if norm_range is None:
            norm_range = (float(self.raw.min()), float(self.raw.max()))
        self.norm_min, self.norm_max = float(norm_range[0]), float(norm_range[1])
        self._index = {sid: i for i, sid in enumerate(self.subject_ids)}

        self.genuine = _frozen(self.idx_a == self.idx_b)
        q = np.where(self.tier_a != self.tier_b, 2, self.tier_a).astype(np.int8)
        self.quality_code = _frozen(q)
        if self.norm_max > self.norm_min:
            norm = (self.raw - self.norm_min) / (self.norm_max - self.norm_min)
        else:
            norm = np.zeros_like(self.raw)
        self.normalized = _frozen(np.clip(norm, 0.0, 1.0))

    # -- basic views ---------------------------------------------------------

    def __len__(self) -> int:
        return int(self.raw.size)

    @property
    def subjects(self) -> frozenset[str]:
        return frozenset(self.subject_ids)

    @property
    def n_subjects(self) -> int:
        return len(self.subject_ids)

    def subject_index(self, subject: str) -> int:
        try:
            return self._index[subject]
        except KeyError:
            raise UnknownSubjectError(f"unknown subject {subject!r}") from None

    @property
    def records(self) -> list[ScoreRecord]:
        tiers = (QualityTier.HIGH, QualityTier.LOW)
        ids = self.subject_ids
        out = []
        for i in range(len(self)):
            out.append(ScoreRecord(
                ids[self.idx_a[i]], ids[self.idx_b[i]],
                tiers[self.tier_a[i]], tiers[self.tier_b[i]], float(self.raw[i]),
                None if self.sample_a is None else self.sample_a[i],
                None if self.sample_b is None else self.sample_b[i],
            ))
        return out

    def involving(self, subject: str) -> np.ndarray:
        i = self.subject_index(subject)
        return (self.idx_a == i) | (self.idx_b == i)

    def cell_mask(self, quality: ComparisonQuality, kind: ComparisonKind) -> np.ndarray:
        m = self.quality_code == _QUALITY_CODE[quality]
        return m & self.genuine if kind is ComparisonKind.GENUINE else m & ~self.genuine

    # -- derived sets ----------------------------------------------------------

    def select(self, mask: np.ndarray, drop_subjects: Iterable[str] = (),
               keep_range: bool = True) -> "ScoreSet":
        """Subset of records under ``mask``; subject universe minus ``drop_subjects``."""
        mask = np.asarray(mask, dtype=bool)
        drop = set(drop_subjects)
        keep_ids = [s for s in self.subject_ids if s not in drop]
        remap = np.full(len(self.subject_ids), -1, dtype=np.int64)
        for new, sid in enumerate(keep_ids):
            remap[self._index[sid]] = new
        a, b = remap[self.idx_a[mask]], remap[self.idx_b[mask]]
        if np.any(a < 0) or np.any(b < 0):
            raise ScoreError("selection keeps records of a dropped subject")
        return ScoreSet(
            keep_ids, a, b, self.tier_a[mask], self.tier_b[mask], self.raw[mask],
            None if self.sample_a is None else self.sample_a[mask],
            None if self.sample_b is None else self.sample_b[mask],
            norm_range=(self.norm_min, self.norm_max) if keep_range else None,
        )

    def exclude(self, subject: str) -> "ScoreSet":
        """Drop ``subject`` and every record involving it, keeping the score scale."""
        return self.select(~self.involving(subject), drop_subjects=[subject])


def _object_array(values) -> np.ndarray:
    if isinstance(values, np.ndarray) and values.dtype == object:
        return values
    out = np.empty(len(values), dtype=object)
    out[:] = list(values)
    return out


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def from_records(records: Sequence[ScoreRecord], subjects: Iterable[str] = ()) -> ScoreSet:
    if not records:
        raise EmptyScoreSetError("empty score set")
    ids = set(subjects)
    for r in records:
        ids.add(r.subject_a)
        ids.add(r.subject_b)
    ordered = sorted(ids)
    index = {s: i for i, s in enumerate(ordered)}
    has_samples = any(r.sample_a is not None or r.sample_b is not None for r in records)
    return ScoreSet(
        ordered,
        [index[r.subject_a] for r in records],
        [index[r.subject_b] for r in records],
        [_TIER_CODE[r.tier_a] for r in records],
        [_TIER_CODE[r.tier_b] for r in records],
        [r.raw_score for r in records],
        [r.sample_a for r in records] if has_samples else None,
        [r.sample_b for r in records] if has_samples else None,
    )


def ingest_scores(rows: Iterable[Sequence], first_line: int = 1) -> ScoreSet:
    """Validate parsed rows ``(subject_a, subject_b, tier_a, tier_b, score[, sample_a, sample_b])``.

    ``first_line`` is the 1-based line number of the first row, used in
    error messages (2 when a header precedes the data).
    """
    records = []
    for n, row in enumerate(rows, start=first_line):
        records.append(_parse_row(row, n))
    if not records:
        raise EmptyScoreSetError("empty set: no score rows")
    return from_records(records)


def _parse_row(row: Sequence, line: int) -> ScoreRecord:
    row = [str(x).strip() if x is not None else "" for x in row]
    if len(row) not in (5, 7):
        raise ScoreError(f"line {line}: expected 5 or 7 fields, got {len(row)}")
    if any(f == "" for f in row[:5]):
        raise ScoreError(f"line {line}: missing field")
    a, b, ta, tb, score = row[:5]
    try:
        tier_a, tier_b = parse_tier(ta), parse_tier(tb)
    except ScoreError as exc:
        raise ScoreError(f"line {line}: {exc}") from None
    try:
        value = float(score)
    except ValueError:
        raise ScoreError(f"line {line}: non-numeric score {score!r}") from None
    if not math.isfinite(value):
        raise ScoreError(f"line {line}: non-finite score {score!r}")
    sa = sb = None
    if len(row) == 7:
        sa, sb = row[5] or None, row[6] or None
        if a == b and sa is not None and sa == sb:
            raise ScoreError(f"line {line}: sample {sa!r} compared with itself")
    return ScoreRecord(a, b, tier_a, tier_b, value, sa, sb)


CSV_HEADER = ["subject_a", "subject_b", "tier_a", "tier_b", "score"]


def read_scores_csv(path) -> ScoreSet:
    with open(path, newline="") as fh:
        reader = csv.reader(row for row in fh if not row.startswith("#"))
        header = next(reader, None)
        if header is None:
            raise EmptyScoreSetError(f"{path}: empty set (no header)")
        header = [h.strip().lower() for h in header]
        if header[:5] != CSV_HEADER or header[5:] not in ([], ["sample_a", "sample_b"]):
            raise ScoreError(f"{path}: line 1: bad header {','.join(header)}")
        rows = [r for r in reader if r]
    return ingest_scores(rows, first_line=2)


def write_scores_csv(s: ScoreSet, path, comments: Sequence[str] = ()) -> None:
    """Write raw scores with ``repr`` precision so a re-read is lossless.
    ``comments`` become leading ``#`` lines, which the reader skips."""
    with_samples = s.sample_a is not None
    header = CSV_HEADER + (["sample_a", "sample_b"] if with_samples else [])
    tiers = ("high", "low")
    ids = s.subject_ids
    with open(path, "w", newline="") as fh:
        for c in comments:
            fh.write(f"# {c}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(len(s)):
            row = [ids[s.idx_a[i]], ids[s.idx_b[i]], tiers[s.tier_a[i]],
                   tiers[s.tier_b[i]], repr(float(s.raw[i]))]
            if with_samples:
                row += [s.sample_a[i] or "", s.sample_b[i] or ""]
            w.writerow(row)


def normalize_score(s: ScoreSet, raw: float) -> float:
    if not s.norm_max > s.norm_min:
        raise ScoreError("degenerate score range: norm_min == norm_max")
    v = (raw - s.norm_min) / (s.norm_max - s.norm_min)
    return min(1.0, max(0.0, v))


def subject_score_slices(s: ScoreSet, subject: str) -> dict:
    """Normalized scores of ``subject`` keyed by ``(kind, quality)`` (six lists)."""
    mask = s.involving(subject)
    out = {}
    for kind in KINDS:
        for quality in QUALITIES:
            out[(kind, quality)] = s.normalized[mask & s.cell_mask(quality, kind)].tolist()
    return out


@dataclass(frozen=True)
class GateConfig:
    min_mean_genuine: float = 0.2
    min_genuine_count: int = 2


def quality_gate(s: ScoreSet, entry: str, config: GateConfig = GateConfig()) -> GateVerdict:
    i = s.subject_index(entry)
    scores = s.normalized[s.genuine & (s.idx_a == i)]
    n = int(scores.size)
    mean = float(scores.mean()) if n else float("nan")
    if n < config.min_genuine_count:
        return GateVerdict(False, "insufficient samples", mean, n)
    if mean < config.min_mean_genuine:
        return GateVerdict(False, "low mean genuine", mean, n)
    return GateVerdict(True, None, mean, n)
