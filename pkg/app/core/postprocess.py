# app/core/postprocess.py
"""Dense scores to discrete spots, and overlapped clip scores to dense scores."""
from dataclasses import dataclass
from enum import Enum
from typing import List, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .ensemble import CandidateModel, ScoreMatrix
from .errors import ClipSizeError, CoverageError, ShapeError
from .metrics import Spot, SpotPrediction


class NmsConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    window: int = Field(10, ge=1, description="Suppression half-width in frames")
    frame_rate: float = Field(25.0, gt=0, description="Frames per second the window was tuned at")
    threshold: float = Field(0.01, ge=0.0, le=1.0, description="Minimum confidence of an emitted spot")

    @property
    def window_sec(self) -> float:
        return self.window / self.frame_rate


class FusionOrder(str, Enum):
    ensemble_first = "ensemble-first"
    nms_first = "nms-first"


def temporal_nms(scores: ScoreMatrix, cfg: NmsConfig = NmsConfig()) -> SpotPrediction:
    """Greedy per-class suppression: keep the best frame, clear +-window, repeat."""
    spots: List[Spot] = []
    n = scores.num_frames
    w = cfg.window
    for cls in range(scores.num_classes):
        column = scores.values[:, cls]
        candidates = np.flatnonzero(column >= cfg.threshold)
        if candidates.size == 0:
            continue
        # highest score first, lower frame on ties
        order = candidates[np.lexsort((candidates, -column[candidates]))]
        suppressed = bytearray(n)
        kept = []
        for frame in order.tolist():
            if suppressed[frame]:
                continue
            kept.append(frame)
            lo, hi = max(0, frame - w), min(n, frame + w + 1)
            suppressed[lo:hi] = b"\x01" * (hi - lo)
        for frame in sorted(kept):
            spots.append(Spot(frame, cls, float(column[frame])))
    return SpotPrediction(scores.video_id, tuple(spots))


def spots_to_scores(pred: SpotPrediction, num_frames: int, num_classes: int) -> ScoreMatrix:
    """Rasterize spots into a dense matrix that is zero everywhere else."""
    values = np.zeros((num_frames, num_classes), dtype=np.float64)
    for frame, cls, conf in pred.spots:
        if not (0 <= frame < num_frames and 0 <= cls < num_classes):
            raise ShapeError(f"{pred.video_id}: spot ({frame}, {cls}) outside {num_frames}x{num_classes}")
        values[frame, cls] = max(values[frame, cls], conf)
    return ScoreMatrix(pred.video_id, values)


def suppress_pool(pool: Sequence[CandidateModel], cfg: NmsConfig) -> List[CandidateModel]:
    """Replace every member's dense scores by its rasterized NMS spots."""
    out = []
    for cand in pool:
        rasterized = {
            vid: spots_to_scores(temporal_nms(sm, cfg), sm.num_frames, sm.num_classes)
            for vid, sm in cand.scores.items()
        }
        out.append(
            CandidateModel(
                id=cand.id,
                scores=rasterized,
                arch_tag=cand.arch_tag,
                optimizer_tag=cand.optimizer_tag,
                stride_s=cand.stride_s,
                delta=cand.delta,
            )
        )
    return out


@dataclass(frozen=True, eq=False)
class ClipScores:
    """Model output for one clip: L rows covering start + k * stride_s."""

    video_id: str
    start_frame: int
    stride_s: int
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64, copy=True)
        if values.ndim != 2 or values.shape[0] < 1:
            raise ShapeError(f"{self.video_id}@{self.start_frame}: clip values must be L x classes")
        if self.stride_s < 1 or self.start_frame < 0:
            raise ShapeError(f"{self.video_id}@{self.start_frame}: invalid start/stride")
        if not np.all(np.isfinite(values)) or values.min() < 0.0 or values.max() > 1.0:
            raise ShapeError(f"{self.video_id}@{self.start_frame}: clip values must lie in [0, 1]")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def length(self) -> int:
        return self.values.shape[0]

    @property
    def frame_indices(self) -> np.ndarray:
        return self.start_frame + self.stride_s * np.arange(self.length)


def aggregate_clips(clips: Sequence[ClipScores], num_frames: int, num_classes: int) -> ScoreMatrix:
    """Average every clip prediction that covers a frame."""
    if not clips:
        raise CoverageError("no clips to aggregate")
    video_ids = {c.video_id for c in clips}
    if len(video_ids) != 1:
        raise ShapeError(f"clips span several videos: {sorted(video_ids)}")
    totals = np.zeros((num_frames, num_classes), dtype=np.float64)
    counts = np.zeros(num_frames, dtype=np.int64)
    # fixed accumulation order keeps the sums independent of input order
    ordered = sorted(clips, key=lambda c: (c.start_frame, c.stride_s, c.values.shape, c.values.tobytes()))
    for clip in ordered:
        if clip.values.shape[1] != num_classes:
            raise ShapeError(f"clip at {clip.start_frame} has {clip.values.shape[1]} classes, expected {num_classes}")
        idx = clip.frame_indices
        if idx[-1] >= num_frames:
            raise ShapeError(f"clip at {clip.start_frame} reaches frame {idx[-1]} of a {num_frames}-frame video")
        totals[idx] += clip.values
        counts[idx] += 1
    uncovered = np.flatnonzero(counts == 0)
    if uncovered.size:
        raise CoverageError(f"{uncovered.size} frame(s) covered by no clip, first is {int(uncovered[0])}")
    return ScoreMatrix(clips[0].video_id, np.clip(totals / counts[:, None], 0.0, 1.0))


def sliding_clip_starts(num_frames: int, length: int = 100, overlap: int = 99, stride_s: int = 1) -> List[int]:
    """
    Start frames of inference clips. Adjacent clips share `overlap` clip frames;
    with stride_s > 1 each base start fans out into stride_s phases so no frame
    is skipped. The last clip ends on the last frame.
    """
    if length < 1 or stride_s < 1 or not 0 <= overlap < length:
        raise ClipSizeError(f"invalid clip geometry length={length} overlap={overlap} stride={stride_s}")
    span = (length - 1) * stride_s + 1
    if num_frames < span + stride_s - 1:
        raise ClipSizeError(f"video of {num_frames} frames cannot hold {stride_s} phase(s) of a {span}-frame clip")
    last = num_frames - span
    starts = set()
    for base in range(0, last + 1, (length - overlap) * stride_s):
        starts.update(range(base, min(base + stride_s, last + 1)))
    starts.update(range(max(0, last - stride_s + 1), last + 1))
    return sorted(starts)
