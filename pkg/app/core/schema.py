# app/core/schema.py
"""Pydantic models of every document the pipeline reads or writes."""
from typing import Dict, List, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .postprocess import FusionOrder, NmsConfig
from .search import SearchTrace


class VideoEntry(BaseModel):
    video_id: str = Field(..., min_length=1)
    fps: float = Field(..., gt=0)
    num_frames: int = Field(..., ge=1)


class CandidateEntry(BaseModel):
    id: str = Field(..., min_length=1)
    arch_tag: str = ""
    optimizer_tag: str = ""
    stride_s: int = Field(1, ge=1)
    delta: int = Field(0, ge=0)
    scores: Dict[str, str] = Field(..., description="video_id -> score CSV path, relative to the manifest")


class Manifest(BaseModel):
    classes: List[str] = Field(..., min_length=1, description="Ordered class names; CSV columns follow this order")
    videos: List[VideoEntry]
    splits: Dict[str, List[str]] = Field(default_factory=dict)
    candidates: List[CandidateEntry] = Field(default_factory=list)

    @field_validator("classes")
    @classmethod
    def unique_classes(cls, v):
        if len(set(v)) != len(v):
            raise ValueError("class names must be unique")
        if any(not name or name == "frame" for name in v):
            raise ValueError("class names must be non-empty and not 'frame'")
        return v

    @model_validator(mode="after")
    def check_references(self):
        known = {v.video_id for v in self.videos}
        if len(known) != len(self.videos):
            raise ValueError("duplicate video ids")
        ids = [c.id for c in self.candidates]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate candidate ids")
        for name, vids in self.splits.items():
            missing = [v for v in vids if v not in known]
            if missing:
                raise ValueError(f"split {name!r} references unknown videos {missing}")
            for cand in self.candidates:
                uncovered = [v for v in vids if v not in cand.scores]
                if uncovered:
                    raise ValueError(f"candidate {cand.id!r} has no scores for {name!r} videos {uncovered}")
        return self

    def video(self, video_id: str) -> VideoEntry:
        for v in self.videos:
            if v.video_id == video_id:
                return v
        raise KeyError(video_id)


class StepEntry(BaseModel):
    candidate_id: str
    weight: float


class Fingerprint(BaseModel):
    """Everything that determined an ensemble, so it is only applied where it belongs."""

    model_config = ConfigDict(frozen=True)

    weight_grid: Tuple[float, ...]
    max_iters: int
    tolerance_sec: float
    nms: NmsConfig
    allow_reselection: bool
    min_improvement: float = Field(..., ge=0.0)
    order: FusionOrder = FusionOrder.ensemble_first
    split: str = "valid"
    pool_hash: str


class EnsembleFile(BaseModel):
    steps: List[StepEntry]
    effective_weights: List[StepEntry]
    trace: SearchTrace
    fingerprint: Fingerprint


class SpotEntry(BaseModel):
    frame: int = Field(..., ge=0)
    label: str
    confidence: float = Field(..., ge=0.0, le=1.0)


class VideoSpots(BaseModel):
    video_id: str
    spots: List[SpotEntry] = Field(default_factory=list)


class EventEntry(BaseModel):
    frame: int
    label: str


class VideoEvents(BaseModel):
    video_id: str
    fps: float
    num_frames: int
    events: List[EventEntry] = Field(default_factory=list)


class FrameLabelsEntry(BaseModel):
    video_id: str
    delta: int = Field(..., ge=0)
    collisions: int = 0
    labels: List[int] = Field(..., description="Class index per frame, -1 for background")


class ClipSampleEntry(BaseModel):
    video_id: str
    start_frame: int = Field(..., ge=0)
    stride_s: int = Field(..., ge=1)
    length: int = Field(..., ge=1)
    labels: List[int]


class ClipScoresEntry(BaseModel):
    video_id: str
    start_frame: int = Field(..., ge=0)
    stride_s: int = Field(1, ge=1)
    values: List[List[float]]

