# app/core/metrics.py
"""
Spotting mAP at a temporal tolerance.

Per class, detections from every video are ranked by confidence and matched
greedily to the nearest still-unmatched ground-truth event of that class
within the tolerance. AP is the area under the precision envelope
(all-point interpolation); mAP averages classes that have ground truth.
"""
import bisect
import math
from dataclasses import dataclass
from typing import Dict, Iterable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field

from .ensemble import GroundTruth
from .errors import EvaluationError, UnknownVideoError


class Spot(NamedTuple):
    frame: int
    cls: int
    confidence: float


@dataclass(frozen=True)
class SpotPrediction:
    video_id: str
    spots: Tuple[Spot, ...] = ()

    def __post_init__(self):
        spots = tuple(Spot(int(f), int(c), float(p)) for f, c, p in self.spots)
        for s in spots:
            if s.frame < 0 or s.cls < 0:
                raise EvaluationError(f"{self.video_id}: negative frame or class in {s}")
            if not (math.isfinite(s.confidence) and 0.0 <= s.confidence <= 1.0):
                raise EvaluationError(f"{self.video_id}: confidence {s.confidence} outside [0, 1]")
        object.__setattr__(self, "spots", spots)


class ClassResult(BaseModel):
    class_index: int
    ap: float = Field(..., ge=0.0, le=1.0)
    num_gt: int
    tp: int = Field(..., description="Predictions matched to an event")
    fp: int = Field(..., description="Predictions left unmatched")
    missed: int = Field(..., description="Events no prediction matched")


class EvalReport(BaseModel):
    map: float = Field(..., ge=0.0, le=1.0)
    tolerance_sec: float
    per_class: List[ClassResult] = Field(default_factory=list)
    excluded_classes: List[int] = Field(default_factory=list, description="Classes without ground truth")

    def ap_of(self, cls: int) -> Optional[float]:
        for r in self.per_class:
            if r.class_index == cls:
                return r.ap
        return None


def tolerance_frames(fps: float, tolerance_sec: float) -> int:
    """Seconds to frames, rounding halves up."""
    return int(math.floor(fps * tolerance_sec + 0.5))


def average_precision(is_tp: Sequence[bool], num_gt: int) -> float:
    """All-point interpolated AP of a ranked detection list."""
    if num_gt <= 0:
        raise EvaluationError("AP is undefined without ground truth")
    hits = np.asarray(is_tp, dtype=bool)
    if hits.size == 0 or not hits.any():
        return 0.0
    precision = np.cumsum(hits) / np.arange(1, hits.size + 1)
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    return float(envelope[hits].sum() / num_gt)


def _match_class(
    detections: List[Tuple[float, str, int]],
    gt_frames: Dict[str, List[int]],
    tolerance: Dict[str, int],
) -> List[bool]:
    matched = {vid: [False] * len(frames) for vid, frames in gt_frames.items()}
    outcome = []
    for _, vid, frame in detections:
        frames = gt_frames.get(vid, [])
        tol = tolerance[vid]
        lo = bisect.bisect_left(frames, frame - tol)
        hi = bisect.bisect_right(frames, frame + tol)
        best = None
        for j in range(lo, hi):
            if matched[vid][j]:
                continue
            dist = abs(frames[j] - frame)
            # frames are ascending, so strict < keeps the earlier event on ties
            if best is None or dist < best[0]:
                best = (dist, j)
        if best is None:
            outcome.append(False)
        else:
            matched[vid][best[1]] = True
            outcome.append(True)
    return outcome


def map_at_tolerance(
    preds: Iterable[SpotPrediction],
    gt: Sequence[GroundTruth],
    tolerance_sec: float = 1.0,
    num_classes: Optional[int] = None,
) -> EvalReport:
    if not (math.isfinite(tolerance_sec) and tolerance_sec > 0):
        raise EvaluationError(f"tolerance must be positive, got {tolerance_sec}")
    by_video = {g.video_id: g for g in gt}
    tolerance = {vid: tolerance_frames(g.fps, tolerance_sec) for vid, g in by_video.items()}

    detections: Dict[int, List[Tuple[float, str, int]]] = {}
    for pred in preds:
        video = by_video.get(pred.video_id)
        if video is None:
            raise UnknownVideoError(f"prediction for unknown video {pred.video_id!r}")
        for frame, cls, conf in pred.spots:
            if frame >= video.num_frames:
                raise EvaluationError(f"{pred.video_id}: spot frame {frame} beyond {video.num_frames} frames")
            if num_classes is not None and cls >= num_classes:
                raise EvaluationError(f"{pred.video_id}: spot class {cls} outside [0, {num_classes})")
            detections.setdefault(cls, []).append((conf, pred.video_id, frame))

    gt_frames: Dict[int, Dict[str, List[int]]] = {}
    for video in by_video.values():
        if num_classes is not None:
            video.check_classes(num_classes)
        for frame, cls in video.events:
            gt_frames.setdefault(cls, {}).setdefault(video.video_id, []).append(frame)

    classes = range(num_classes) if num_classes is not None else sorted(set(detections) | set(gt_frames))
    results: List[ClassResult] = []
    excluded: List[int] = []
    for cls in classes:
        frames = gt_frames.get(cls, {})
        num_gt = sum(len(v) for v in frames.values())
        if num_gt == 0:
            excluded.append(cls)
            continue
        ranked = sorted(detections.get(cls, []), key=lambda d: (-d[0], d[1], d[2]))
        outcome = _match_class(ranked, frames, tolerance)
        tp = sum(outcome)
        results.append(
            ClassResult(
                class_index=cls,
                ap=min(1.0, average_precision(outcome, num_gt)),
                num_gt=num_gt,
                tp=tp,
                fp=len(outcome) - tp,
                missed=num_gt - tp,
            )
        )

    if not results:
        raise EvaluationError("no class has any ground-truth event")
    mean = float(np.mean([r.ap for r in results]))
    return EvalReport(map=min(1.0, mean), tolerance_sec=tolerance_sec, per_class=results, excluded_classes=excluded)


def objective_delta(candidate_map: float, previous_map: float) -> float:
    """Gain of a candidate ensemble over the current one; e(F_0) is taken as 0."""
    return candidate_map - previous_map
