# app/core/search.py
"""
Greedy boosted ensembling.

Iteration 1 picks the best single candidate. Every later iteration tries
each (candidate, weight) pair, mixes it into the current ensemble and keeps
the pair with the largest validation gain, stopping when no pair gains more
than `min_improvement` or after `max_iters` iterations.
"""
import logging
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, field_validator

from app.utils.exec import run_parallel

from .ensemble import CandidateModel, EnsembleSpec, GroundTruth, ScoreMatrix, combine, effective_weights, realize
from .errors import ConfigError, UnknownCandidateError
from .metrics import EvalReport, SpotPrediction, map_at_tolerance, objective_delta
from .postprocess import NmsConfig, temporal_nms

logger = logging.getLogger("bme-spot.search")

DEFAULT_WEIGHT_GRID = tuple(round(0.1 * k, 1) for k in range(1, 11))


class SearchConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    weight_grid: Tuple[float, ...] = Field(DEFAULT_WEIGHT_GRID, description="Step weights tried for each candidate")
    max_iters: int = Field(20, ge=1, description="Iteration cap T")
    tolerance_sec: float = Field(1.0, gt=0)
    nms: NmsConfig = Field(default_factory=NmsConfig)
    allow_reselection: bool = True
    min_improvement: float = Field(0.0, ge=0.0, description="A step is accepted only if its gain is strictly larger")
    workers: int = Field(1, ge=1, description="Threads evaluating pairs; does not change the result")

    @field_validator("weight_grid")
    @classmethod
    def validate_grid(cls, v):
        if not v:
            raise ValueError("weight grid is empty")
        for w in v:
            if not 0.0 < w <= 1.0:
                raise ValueError(f"grid weight {w} outside (0, 1]")
        for a, b in zip(v, v[1:]):
            if not a < b:
                raise ValueError("weight grid must be strictly increasing")
        return tuple(float(w) for w in v)


class TerminalReason(str, Enum):
    no_improvement = "no-improvement"
    max_iters = "max-iters"


class SearchStep(BaseModel):
    iteration: int
    candidate_id: str
    weight: float
    map: float
    objective: float


class SearchTrace(BaseModel):
    steps: List[SearchStep] = Field(default_factory=list)
    terminal_reason: Optional[TerminalReason] = None

    @property
    def final_map(self) -> float:
        return self.steps[-1].map if self.steps else 0.0

    def as_table(self) -> pd.DataFrame:
        return pd.DataFrame(
            [
                {"iteration": s.iteration, "member": s.candidate_id, "w_t": s.weight, "mAP": s.map, "obj": s.objective}
                for s in self.steps
            ],
            columns=["iteration", "member", "w_t", "mAP", "obj"],
        )


def _score_videos(
    ensemble: Dict[str, ScoreMatrix], gt: Sequence[GroundTruth], cfg: SearchConfig, num_classes: int
) -> EvalReport:
    preds = [temporal_nms(ensemble[g.video_id], cfg.nms) for g in gt]
    return map_at_tolerance(preds, gt, cfg.tolerance_sec, num_classes=num_classes)


def _check_pool(pool: Sequence[CandidateModel], gt: Sequence[GroundTruth]) -> int:
    if not pool:
        raise ConfigError("candidate pool is empty")
    if not gt:
        raise ConfigError("validation split has no videos")
    ids = [c.id for c in pool]
    if len(set(ids)) != len(ids):
        raise ConfigError(f"duplicate candidate ids in pool: {ids}")
    num_classes = None
    for cand in pool:
        for video in gt:
            sm = cand.scores_for(video.video_id)
            if sm.num_frames != video.num_frames:
                raise ConfigError(
                    f"candidate {cand.id!r}: {video.video_id} has {sm.num_frames} score rows, expected {video.num_frames}"
                )
            if num_classes is None:
                num_classes = sm.num_classes
            elif sm.num_classes != num_classes:
                raise ConfigError(f"candidate {cand.id!r}: {sm.num_classes} classes, expected {num_classes}")
    return num_classes


def run_bme(
    pool: Sequence[CandidateModel], valid_gt: Sequence[GroundTruth], cfg: SearchConfig = SearchConfig()
) -> Tuple[EnsembleSpec, SearchTrace]:
    num_classes = _check_pool(pool, valid_gt)
    spec = EnsembleSpec()
    trace = SearchTrace()

    # t = 1: best single member, F_1 = f_{i_1}
    def single(cand: CandidateModel) -> float:
        ensemble = {g.video_id: cand.scores_for(g.video_id) for g in valid_gt}
        return _score_videos(ensemble, valid_gt, cfg, num_classes).map

    singles = run_parallel(single, list(pool), cfg.workers)
    best = max(range(len(pool)), key=lambda i: (singles[i], -i))
    chosen = pool[best]
    spec = spec.extend(chosen.id, 1.0)
    current = {g.video_id: chosen.scores_for(g.video_id) for g in valid_gt}
    current_map = singles[best]
    trace.steps.append(
        SearchStep(iteration=1, candidate_id=chosen.id, weight=1.0, map=current_map, objective=objective_delta(current_map, 0.0))
    )
    logger.info(f"[SEARCH] t=1 member={chosen.id} mAP={current_map:.4f}")

    for t in range(2, cfg.max_iters + 1):
        used = set(spec.candidate_ids)
        pairs = [
            (i, w)
            for i, cand in enumerate(pool)
            if cfg.allow_reselection or cand.id not in used
            for w in cfg.weight_grid
        ]
        if not pairs:
            trace.terminal_reason = TerminalReason.no_improvement
            logger.info(f"[SEARCH] t={t} no unused candidate left")
            return spec, trace

        def evaluate(pair: Tuple[int, float], base=current) -> float:
            i, w = pair
            mixed = {vid: combine(sm, pool[i].scores_for(vid), w) for vid, sm in base.items()}
            score = _score_videos(mixed, valid_gt, cfg, num_classes).map
            logger.debug(f"[SEARCH] t={t} try {pool[i].id} w={w} mAP={score:.4f}")
            return score

        scores = run_parallel(evaluate, pairs, cfg.workers)
        # higher gain, then lower pool index, then lower weight
        k = max(range(len(pairs)), key=lambda j: (scores[j], -pairs[j][0], -pairs[j][1]))
        gain = objective_delta(scores[k], current_map)
        if not gain > cfg.min_improvement:
            trace.terminal_reason = TerminalReason.no_improvement
            logger.info(f"[SEARCH] t={t} best gain {gain:.6f} not above {cfg.min_improvement}, stopping")
            return spec, trace

        i, w = pairs[k]
        member = pool[i]
        spec = spec.extend(member.id, w)
        current = {vid: combine(sm, member.scores_for(vid), w) for vid, sm in current.items()}
        current_map = scores[k]
        trace.steps.append(SearchStep(iteration=t, candidate_id=member.id, weight=w, map=current_map, objective=gain))
        logger.info(f"[SEARCH] t={t} member={member.id} w={w} mAP={current_map:.4f} obj={gain:+.4f}")

    trace.terminal_reason = TerminalReason.max_iters
    return spec, trace


def evaluate_ensemble(
    spec: EnsembleSpec,
    pool: Sequence[CandidateModel],
    gt: Sequence[GroundTruth],
    tolerance_sec: float = 1.0,
    nms: NmsConfig = NmsConfig(),
) -> EvalReport:
    num_classes = None
    preds = []
    for video in gt:
        scores = realize(spec, pool, video.video_id)
        num_classes = scores.num_classes
        preds.append(temporal_nms(scores, nms))
    return map_at_tolerance(preds, gt, tolerance_sec, num_classes=num_classes)


def predict_spots(
    spec: EnsembleSpec, pool: Sequence[CandidateModel], video_ids: Sequence[str], nms: NmsConfig = NmsConfig()
) -> List[SpotPrediction]:
    known = {c.id for c in pool}
    for cid in spec.candidate_ids:
        if cid not in known:
            raise UnknownCandidateError(f"ensemble member {cid!r} not in pool")
    return [temporal_nms(realize(spec, pool, vid), nms) for vid in video_ids]


def describe(spec: EnsembleSpec) -> pd.DataFrame:
    return pd.DataFrame(effective_weights(spec), columns=["member", "weight"])
