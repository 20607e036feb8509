# app/core/dataprep.py
"""
Training-sample construction: dilate point events into frame labels with a
sharing scope delta, then draw fixed-length strided clips from the result.
"""
import hashlib
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .ensemble import GroundTruth
from .errors import ClipSizeError, ConfigError

BACKGROUND = -1

ARCHITECTURES = ("rny008_gsm", "enetb2_gsm")
OPTIMIZERS = ("AdamW", "AdamW+SWA")


@dataclass(frozen=True, eq=False)
class FrameLabels:
    """One class index per frame, BACKGROUND where no event claims the frame."""

    video_id: str
    labels: np.ndarray
    delta: int
    events: Tuple[Tuple[int, int], ...] = ()
    collisions: int = 0

    def __post_init__(self):
        labels = np.array(self.labels, dtype=np.int64, copy=True)
        if labels.ndim != 1 or labels.size < 1:
            raise ConfigError(f"{self.video_id}: labels must be a non-empty 1-D sequence")
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)

    @property
    def num_frames(self) -> int:
        return self.labels.size

    @property
    def num_labeled(self) -> int:
        return int(np.count_nonzero(self.labels != BACKGROUND))


class SamplingConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    num_clips: int = Field(1000, ge=1, description="N")
    length: int = Field(100, ge=1, description="L, frames per clip")
    stride_s: int = Field(1, ge=1, description="Gap between consecutive clip frames")
    delta: int = Field(0, ge=0, description="Label sharing scope in frames")
    seed: int = 0

    @property
    def span(self) -> int:
        return (self.length - 1) * self.stride_s + 1

    @property
    def name(self) -> str:
        return f"D_{self.stride_s},{self.delta}"


@dataclass(frozen=True, eq=False)
class ClipSample:
    video_id: str
    start_frame: int
    stride_s: int
    length: int
    labels: np.ndarray

    @property
    def frame_indices(self) -> np.ndarray:
        return self.start_frame + self.stride_s * np.arange(self.length)


class CandidateRecipe(BaseModel):
    """How a candidate would be trained: sample setting x architecture x optimizer."""

    model_config = ConfigDict(frozen=True)

    arch_tag: str
    optimizer_tag: str
    stride_s: int = Field(..., ge=1)
    delta: int = Field(..., ge=0)

    @property
    def id(self) -> str:
        return f"{self.arch_tag}-{self.optimizer_tag}-s{self.stride_s}d{self.delta}".replace("+", "_")


def dilate_labels(gt: GroundTruth, delta: int) -> FrameLabels:
    if delta < 0:
        raise ConfigError(f"delta must be >= 0, got {delta}")
    n = gt.num_frames
    labels = np.full(n, BACKGROUND, dtype=np.int64)
    best = np.full(n, np.iinfo(np.int64).max, dtype=np.int64)
    claims = np.zeros(n, dtype=np.int64)
    # events arrive sorted by (frame, class); on equal distance the earlier claim stands
    for frame, cls in gt.events:
        lo, hi = max(0, frame - delta), min(n, frame + delta + 1)
        dist = np.abs(np.arange(lo, hi) - frame)
        closer = dist < best[lo:hi]
        labels[lo:hi][closer] = cls
        best[lo:hi][closer] = dist[closer]
        claims[lo:hi] += 1
    return FrameLabels(
        video_id=gt.video_id,
        labels=labels,
        delta=delta,
        events=gt.events,
        collisions=int(np.count_nonzero(claims > 1)),
    )


def labeled_frames(labels: FrameLabels) -> List[Tuple[int, int]]:
    frames = np.flatnonzero(labels.labels != BACKGROUND)
    return [(int(f), int(labels.labels[f])) for f in frames]


def sample_clips(labels: FrameLabels, cfg: SamplingConfig) -> List[ClipSample]:
    span = cfg.span
    if labels.num_frames < span:
        raise ClipSizeError(f"{labels.video_id}: {labels.num_frames} frames is shorter than the clip span {span}")
    rng = np.random.default_rng(cfg.seed)
    starts = rng.integers(0, labels.num_frames - span + 1, size=cfg.num_clips)
    clips = []
    for start in starts.tolist():
        idx = start + cfg.stride_s * np.arange(cfg.length)
        clips.append(
            ClipSample(
                video_id=labels.video_id,
                start_frame=start,
                stride_s=cfg.stride_s,
                length=cfg.length,
                labels=labels.labels[idx],
            )
        )
    return clips


def dataset_settings(num_clips: int = 1000, seed: int = 0) -> List[SamplingConfig]:
    """The five (stride, delta) sample settings with 100-frame clips."""
    return [
        SamplingConfig(num_clips=num_clips, length=100, stride_s=s, delta=d, seed=seed)
        for s, d in ((1, 5), (1, 4), (2, 5), (2, 4), (2, 2))
    ]


def candidate_grid(
    settings: Sequence[SamplingConfig] = (),
    archs: Sequence[str] = ARCHITECTURES,
    optimizers: Sequence[str] = OPTIMIZERS,
) -> List[CandidateRecipe]:
    settings = list(settings) or dataset_settings()
    return [
        CandidateRecipe(arch_tag=a, optimizer_tag=o, stride_s=cfg.stride_s, delta=cfg.delta)
        for cfg in settings
        for a in archs
        for o in optimizers
    ]


def derive_seed(seed: int, video_id: str) -> int:
    digest = hashlib.sha256(f"{seed}:{video_id}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")
