# app/core/synth.py
"""
Synthetic spotting benchmark: random event timelines and a pool of candidate
score sources with controllable misses, jitter, false alarms and noise.
"""
import logging
import math
from enum import Enum
from typing import Dict, List, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .dataprep import candidate_grid
from .ensemble import CandidateModel, GroundTruth, ScoreMatrix
from .errors import ConfigError

logger = logging.getLogger("bme-spot.synth")


class NoiseProfile(BaseModel):
    model_config = ConfigDict(frozen=True)

    peak_width: int = Field(6, ge=1, description="Half-width of a triangular peak in frames")
    miss_rate: float = Field(0.0, ge=0.0, le=1.0)
    false_alarm_rate: float = Field(0.0, ge=0.0, description="Spurious peaks per class per 1000 frames")
    jitter_std: float = Field(0.0, ge=0.0, description="Peak offset std in frames")
    noise_floor: float = Field(0.0, ge=0.0, le=1.0, description="Background is uniform in [0, noise_floor]")
    min_peak: float = Field(0.5, ge=0.0, le=1.0, description="Lower bound of peak heights")


class MissMode(str, Enum):
    independent = "independent"
    staggered = "staggered"


class SynthConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    num_videos: int = Field(4, ge=1)
    num_frames: int = Field(2000, ge=1)
    num_classes: int = Field(3, ge=1)
    events_per_class: float = Field(8.0, ge=0.0, description="Mean events per class per video")
    fps: float = Field(25.0, gt=0)
    candidates: Tuple[NoiseProfile, ...] = Field(default_factory=lambda: (NoiseProfile(),))
    miss_mode: MissMode = MissMode.independent
    valid_fraction: float = Field(0.5, ge=0.0, le=1.0)
    seed: int = 0

    @model_validator(mode="after")
    def check_geometry(self):
        if not self.candidates:
            raise ValueError("at least one candidate profile is required")
        if self.num_frames <= 2 * self.max_peak_width:
            raise ValueError(f"num_frames must exceed 2 * peak_width = {2 * self.max_peak_width}")
        return self

    @property
    def max_peak_width(self) -> int:
        return max(p.peak_width for p in self.candidates)

    @property
    def separation(self) -> int:
        return 2 * self.max_peak_width

    @property
    def capacity(self) -> int:
        """Most events of one class a video can hold at the required separation."""
        return (self.num_frames - 1) // self.separation + 1

    @classmethod
    def default(cls, seed: int = 0) -> "SynthConfig":
        return cls(
            num_videos=6,
            num_frames=2000,
            num_classes=3,
            events_per_class=8.0,
            seed=seed,
            candidates=(
                NoiseProfile(),
                NoiseProfile(miss_rate=0.3, jitter_std=2.0, false_alarm_rate=2.0, noise_floor=0.05),
                NoiseProfile(miss_rate=0.2, jitter_std=4.0, false_alarm_rate=1.0, noise_floor=0.05),
                NoiseProfile(miss_rate=0.4, jitter_std=1.0, false_alarm_rate=3.0, noise_floor=0.1),
                NoiseProfile(miss_rate=0.1, jitter_std=6.0, false_alarm_rate=4.0, noise_floor=0.1),
            ),
        )


def _place_events(rng: np.random.Generator, count: int, num_frames: int, separation: int) -> np.ndarray:
    """Uniform positions with pairwise gaps >= separation."""
    if count == 0:
        return np.zeros(0, dtype=np.int64)
    room = num_frames - (count - 1) * (separation - 1)
    picks = np.sort(rng.choice(room, size=count, replace=False))
    return picks + np.arange(count) * (separation - 1)


def _triangle(values: np.ndarray, center: int, cls: int, height: float, width: int) -> None:
    n = values.shape[0]
    lo, hi = max(0, center - width + 1), min(n, center + width)
    idx = np.arange(lo, hi)
    peak = height * (1.0 - np.abs(idx - center) / width)
    np.maximum(values[lo:hi, cls], peak, out=values[lo:hi, cls])


def _peak_height(rng: np.random.Generator, profile: NoiseProfile) -> float:
    floor = max(profile.noise_floor, profile.min_peak)
    return floor + (1.0 - floor) * (1.0 - rng.random())


def _missed(
    cfg: SynthConfig, profile: NoiseProfile, k: int, shared_draw: float, rng: np.random.Generator
) -> bool:
    if cfg.miss_mode is MissMode.staggered:
        return (shared_draw - k / len(cfg.candidates)) % 1.0 < profile.miss_rate
    return rng.random() < profile.miss_rate


def generate(cfg: SynthConfig) -> Tuple[List[GroundTruth], List[CandidateModel]]:
    if cfg.events_per_class > cfg.capacity:
        raise ConfigError(
            f"{cfg.events_per_class} events per class cannot fit {cfg.num_frames} frames "
            f"at separation {cfg.separation} (capacity {cfg.capacity})"
        )
    video_ids = [f"video_{v:03d}" for v in range(cfg.num_videos)]
    recipes = candidate_grid()
    gts: List[GroundTruth] = []
    scores: List[Dict[str, ScoreMatrix]] = [{} for _ in cfg.candidates]

    for v, vid in enumerate(video_ids):
        rng = np.random.default_rng([cfg.seed, v])
        events = []
        for cls in range(cfg.num_classes):
            count = int(rng.poisson(cfg.events_per_class))
            if count > cfg.capacity:
                logger.debug(f"[SYNTH] {vid} class {cls}: {count} events capped at {cfg.capacity}")
                count = cfg.capacity
            for frame in _place_events(rng, count, cfg.num_frames, cfg.separation).tolist():
                events.append((frame, cls))
        events.sort()
        gt = GroundTruth(video_id=vid, fps=cfg.fps, num_frames=cfg.num_frames, events=tuple(events))
        gts.append(gt)
        shared = rng.random(len(events))

        for k, profile in enumerate(cfg.candidates):
            crng = np.random.default_rng([cfg.seed, v, k + 1])
            values = crng.uniform(0.0, profile.noise_floor, size=(cfg.num_frames, cfg.num_classes))
            for e, (frame, cls) in enumerate(events):
                if _missed(cfg, profile, k, float(shared[e]), crng):
                    continue
                offset = int(round(crng.normal(0.0, profile.jitter_std))) if profile.jitter_std > 0 else 0
                center = min(cfg.num_frames - 1, max(0, frame + offset))
                _triangle(values, center, cls, _peak_height(crng, profile), profile.peak_width)
            expected = profile.false_alarm_rate * cfg.num_frames / 1000.0
            for cls in range(cfg.num_classes):
                for center in crng.integers(0, cfg.num_frames, size=int(crng.poisson(expected))).tolist():
                    _triangle(values, center, cls, _peak_height(crng, profile), profile.peak_width)
            scores[k][vid] = ScoreMatrix(vid, values)

    pool = []
    for k, profile in enumerate(cfg.candidates):
        recipe = recipes[k % len(recipes)]
        pool.append(
            CandidateModel(
                id=f"cand{k:02d}-{recipe.id}",
                scores=scores[k],
                arch_tag=recipe.arch_tag,
                optimizer_tag=recipe.optimizer_tag,
                stride_s=recipe.stride_s,
                delta=recipe.delta,
            )
        )
    logger.info(f"[SYNTH] {len(gts)} videos, {sum(len(g.events) for g in gts)} events, {len(pool)} candidates")
    return gts, pool


def split_videos(cfg: SynthConfig, gts: List[GroundTruth]) -> Dict[str, List[str]]:
    ids = [g.video_id for g in gts]
    n_valid = min(len(ids), max(1, int(math.floor(len(ids) * cfg.valid_fraction + 0.5))))
    return {"valid": ids[:n_valid], "test": ids[n_valid:]}
