# app/core/ensemble.py
"""
Score containers and the convex-combination algebra of boosted ensembling.

An ensemble is built one member at a time:

    F_t = (1 - w_t) * F_{t-1} + w_t * f_{i_t},   F_1 = f_{i_1}

so every ensemble flattens to a weighted sum of its members whose
effective weights are w_t * prod_{u>t} (1 - w_u) and sum to one.
"""
import math
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, NamedTuple, Sequence, Tuple

import numpy as np

from .errors import (
    EnsembleStateError,
    GroundTruthError,
    MissingScoresError,
    ShapeError,
    UnknownCandidateError,
    WeightDomainError,
)


@dataclass(frozen=True, eq=False)
class ScoreMatrix:
    """Per-frame x per-class confidences of one video from one score source."""

    video_id: str
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64, copy=True)
        if values.ndim != 2:
            raise ShapeError(f"{self.video_id}: scores must be 2-D (frames x classes), got ndim={values.ndim}")
        if values.shape[0] < 1 or values.shape[1] < 1:
            raise ShapeError(f"{self.video_id}: empty score matrix {values.shape}")
        if not np.all(np.isfinite(values)):
            raise WeightDomainError(f"{self.video_id}: scores contain non-finite values")
        if values.min() < 0.0 or values.max() > 1.0:
            raise WeightDomainError(f"{self.video_id}: scores must lie in [0, 1]")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def num_frames(self) -> int:
        return self.values.shape[0]

    @property
    def num_classes(self) -> int:
        return self.values.shape[1]

    def same_layout(self, other: "ScoreMatrix") -> bool:
        return self.video_id == other.video_id and self.values.shape == other.values.shape


@dataclass(frozen=True)
class GroundTruth:
    """Labelled event instants of one video. Events are (frame, class) pairs."""

    video_id: str
    fps: float
    num_frames: int
    events: Tuple[Tuple[int, int], ...] = ()
    duplicates_dropped: int = 0

    def __post_init__(self):
        if not (math.isfinite(self.fps) and self.fps > 0):
            raise GroundTruthError(f"{self.video_id}: fps must be positive, got {self.fps}")
        if self.num_frames < 1:
            raise GroundTruthError(f"{self.video_id}: num_frames must be >= 1")
        events = tuple((int(f), int(c)) for f, c in self.events)
        for frame, cls in events:
            if not 0 <= frame < self.num_frames:
                raise GroundTruthError(f"{self.video_id}: event frame {frame} outside [0, {self.num_frames})")
            if cls < 0:
                raise GroundTruthError(f"{self.video_id}: negative class index {cls}")
        for prev, cur in zip(events, events[1:]):
            if not prev < cur:
                raise GroundTruthError(f"{self.video_id}: events must be sorted by (frame, class) without duplicates")
        object.__setattr__(self, "events", events)

    def check_classes(self, num_classes: int) -> None:
        for _, cls in self.events:
            if cls >= num_classes:
                raise GroundTruthError(f"{self.video_id}: class {cls} outside [0, {num_classes})")

    def frames_of(self, cls: int) -> List[int]:
        return [f for f, c in self.events if c == cls]


@dataclass(frozen=True, eq=False)
class CandidateModel:
    """An opaque per-frame score source plus how it was produced."""

    id: str
    scores: Mapping[str, ScoreMatrix] = field(default_factory=dict)
    arch_tag: str = ""
    optimizer_tag: str = ""
    stride_s: int = 1
    delta: int = 0

    def __post_init__(self):
        if self.stride_s < 1:
            raise ValueError(f"{self.id}: stride_s must be >= 1")
        if self.delta < 0:
            raise ValueError(f"{self.id}: delta must be >= 0")
        object.__setattr__(self, "scores", dict(self.scores))

    def scores_for(self, video_id: str) -> ScoreMatrix:
        try:
            return self.scores[video_id]
        except KeyError:
            raise MissingScoresError(f"candidate {self.id!r} has no scores for video {video_id!r}") from None


class EnsembleStep(NamedTuple):
    candidate_id: str
    weight: float


@dataclass(frozen=True)
class EnsembleSpec:
    """Ordered (candidate, step weight) pairs. The first step weight is always 1."""

    steps: Tuple[EnsembleStep, ...] = ()

    def __post_init__(self):
        steps = tuple(EnsembleStep(str(cid), float(w)) for cid, w in self.steps)
        for t, (cid, w) in enumerate(steps):
            if not (math.isfinite(w) and 0.0 < w <= 1.0):
                raise WeightDomainError(f"step {t + 1} ({cid}): weight {w} outside (0, 1]")
        if steps and steps[0].weight != 1.0:
            raise WeightDomainError(f"first step weight must be 1, got {steps[0].weight}")
        object.__setattr__(self, "steps", steps)

    def __len__(self) -> int:
        return len(self.steps)

    @property
    def candidate_ids(self) -> List[str]:
        return [s.candidate_id for s in self.steps]

    def extend(self, candidate_id: str, weight: float) -> "EnsembleSpec":
        if not self.steps:
            weight = 1.0
        return EnsembleSpec(self.steps + (EnsembleStep(candidate_id, weight),))


def combine(prev: ScoreMatrix, member: ScoreMatrix, w: float) -> ScoreMatrix:
    """(1 - w) * prev + w * member, cell by cell."""
    if not prev.same_layout(member):
        raise ShapeError(
            f"cannot combine {prev.video_id}{prev.values.shape} with {member.video_id}{member.values.shape}"
        )
    if not (math.isfinite(w) and 0.0 <= w <= 1.0):
        raise WeightDomainError(f"weight {w} outside [0, 1]")
    if w == 1.0:
        return member
    if w == 0.0:
        return prev
    mixed = prev.values + w * (member.values - prev.values)
    return ScoreMatrix(prev.video_id, np.clip(mixed, 0.0, 1.0))


def _index_pool(pool: Sequence[CandidateModel]) -> Dict[str, CandidateModel]:
    return {c.id: c for c in pool}


def realize(spec: EnsembleSpec, pool: Sequence[CandidateModel], video_id: str) -> ScoreMatrix:
    """Left fold of `combine` over the steps of `spec` for one video."""
    if not spec.steps:
        raise EnsembleStateError("cannot realize an empty ensemble")
    by_id = _index_pool(pool)
    current = None
    for cid, w in spec.steps:
        if cid not in by_id:
            raise UnknownCandidateError(f"candidate {cid!r} not in pool")
        member = by_id[cid].scores_for(video_id)
        current = member if current is None else combine(current, member, w)
    return current


def effective_weights(spec: EnsembleSpec) -> List[Tuple[str, float]]:
    """Net coefficient of each member in the flattened ensemble, duplicates merged."""
    if not spec.steps:
        raise EnsembleStateError("effective weights of an empty ensemble are undefined")
    per_step = [0.0] * len(spec.steps)
    tail = 1.0
    for t in range(len(spec.steps) - 1, -1, -1):
        w = spec.steps[t].weight
        per_step[t] = w * tail
        tail *= 1.0 - w
    merged: Dict[str, float] = {}
    for (cid, _), eff in zip(spec.steps, per_step):
        merged[cid] = merged.get(cid, 0.0) + eff
    return list(merged.items())


def weighted_sum(
    weights: Sequence[Tuple[str, float]], pool: Sequence[CandidateModel], video_id: str
) -> ScoreMatrix:
    by_id = _index_pool(pool)
    total = None
    for cid, eff in weights:
        if cid not in by_id:
            raise UnknownCandidateError(f"candidate {cid!r} not in pool")
        part = eff * by_id[cid].scores_for(video_id).values
        total = part if total is None else total + part
    if total is None:
        raise EnsembleStateError("no weights given")
    return ScoreMatrix(video_id, np.clip(total, 0.0, 1.0))
