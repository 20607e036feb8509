# app/core/engine.py
import hashlib
import json
import logging
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

from app.utils.file import PathLike, ensure_dir, file_hash

from .ensemble import CandidateModel, EnsembleSpec, GroundTruth, effective_weights
from .errors import ConfigError, EnsembleMismatchError, FormatError, GroundTruthError, UnknownVideoError
from .formats import read_gt, read_manifest, read_scores, relative_to, resolve, write_gt, write_manifest, write_scores
from .metrics import EvalReport, SpotPrediction, map_at_tolerance
from .postprocess import FusionOrder, NmsConfig, suppress_pool
from .schema import CandidateEntry, EnsembleFile, Fingerprint, Manifest, StepEntry, VideoEntry
from .search import SearchConfig, SearchTrace, predict_spots, run_bme
from .synth import SynthConfig, split_videos

logger = logging.getLogger("bme-spot.engine")


class SpottingEngine:
    """
    A manifest-bound view of a candidate pool.
    Loads scores lazily per split and runs search, prediction and evaluation on them.
    """

    def __init__(self, manifest_path: PathLike):
        self.manifest_path = Path(manifest_path)
        self.base = self.manifest_path.parent
        self.manifest: Manifest = read_manifest(self.manifest_path)
        self.classes: List[str] = list(self.manifest.classes)
        logger.info(
            f"[ENGINE] manifest {self.manifest_path}: {len(self.manifest.videos)} videos, "
            f"{len(self.manifest.candidates)} candidates, {len(self.classes)} classes"
        )

    def has_video(self, video_id: str) -> bool:
        return any(v.video_id == video_id for v in self.manifest.videos)

    def video(self, video_id: str) -> VideoEntry:
        try:
            return self.manifest.video(video_id)
        except KeyError:
            raise UnknownVideoError(f"video {video_id!r} not in manifest") from None

    def split_videos(self, split: str) -> List[str]:
        if split not in self.manifest.splits:
            raise ConfigError(f"manifest has no split {split!r} (known: {sorted(self.manifest.splits)})")
        return list(self.manifest.splits[split])

    def load_pool(self, video_ids: Sequence[str]) -> List[CandidateModel]:
        pool = []
        for entry in self.manifest.candidates:
            scores = {}
            for vid in video_ids:
                if vid not in entry.scores:
                    raise UnknownVideoError(f"candidate {entry.id!r} lists no scores for {vid!r}")
                scores[vid] = read_scores(
                    resolve(self.base, entry.scores[vid]),
                    classes=self.classes,
                    video_id=vid,
                    num_frames=self.manifest.video(vid).num_frames,
                )
            pool.append(
                CandidateModel(
                    id=entry.id,
                    scores=scores,
                    arch_tag=entry.arch_tag,
                    optimizer_tag=entry.optimizer_tag,
                    stride_s=entry.stride_s,
                    delta=entry.delta,
                )
            )
        logger.debug(f"[ENGINE] loaded {len(pool)} candidates over {len(video_ids)} videos")
        return pool

    def pool_hash(self) -> str:
        h = hashlib.sha256()
        h.update(json.dumps(self.classes).encode("utf-8"))
        for entry in sorted(self.manifest.candidates, key=lambda c: c.id):
            meta = [entry.id, entry.arch_tag, entry.optimizer_tag, entry.stride_s, entry.delta]
            files = [[vid, self._hash_file(resolve(self.base, ref))] for vid, ref in sorted(entry.scores.items())]
            h.update(json.dumps([meta, files]).encode("utf-8"))
        return h.hexdigest()

    @staticmethod
    def _hash_file(path: Path) -> str:
        try:
            return file_hash(path)
        except OSError as e:
            raise FormatError(path, f"cannot read: {e.strerror or e}") from None

    def ground_truth(self, path: PathLike, split: Optional[str] = None) -> List[GroundTruth]:
        gts = read_gt(path, self.classes)
        for g in gts:
            try:
                video = self.manifest.video(g.video_id)
            except KeyError:
                raise UnknownVideoError(f"ground truth for video {g.video_id!r} not in manifest") from None
            if video.num_frames != g.num_frames:
                raise GroundTruthError(f"{g.video_id}: {g.num_frames} frames, manifest says {video.num_frames}")
        if split is None:
            return gts
        by_id = {g.video_id: g for g in gts}
        wanted = self.split_videos(split)
        missing = [v for v in wanted if v not in by_id]
        if missing:
            raise GroundTruthError(f"ground truth lacks {split!r} videos {missing}")
        return [by_id[v] for v in wanted]

    def _prepare(self, pool: List[CandidateModel], order: FusionOrder, nms: NmsConfig) -> List[CandidateModel]:
        if order is FusionOrder.nms_first:
            return suppress_pool(pool, nms)
        return pool

    def search(
        self,
        gt: Sequence[GroundTruth],
        cfg: SearchConfig,
        order: FusionOrder = FusionOrder.ensemble_first,
        split: str = "valid",
    ) -> Tuple[EnsembleFile, EnsembleSpec, SearchTrace]:
        pool = self._prepare(self.load_pool([g.video_id for g in gt]), order, cfg.nms)
        spec, trace = run_bme(pool, gt, cfg)
        doc = EnsembleFile(
            steps=[StepEntry(candidate_id=c, weight=w) for c, w in spec.steps],
            effective_weights=[StepEntry(candidate_id=c, weight=w) for c, w in effective_weights(spec)],
            trace=trace,
            fingerprint=Fingerprint(
                weight_grid=cfg.weight_grid,
                max_iters=cfg.max_iters,
                tolerance_sec=cfg.tolerance_sec,
                nms=cfg.nms,
                allow_reselection=cfg.allow_reselection,
                min_improvement=cfg.min_improvement,
                order=order,
                split=split,
                pool_hash=self.pool_hash(),
            ),
        )
        return doc, spec, trace

    def predict(self, doc: EnsembleFile, split: str) -> List[SpotPrediction]:
        current = self.pool_hash()
        if doc.fingerprint.pool_hash != current:
            raise EnsembleMismatchError(
                f"ensemble was built on pool {doc.fingerprint.pool_hash[:12]}, manifest pool is {current[:12]}"
            )
        spec = EnsembleSpec(tuple((s.candidate_id, s.weight) for s in doc.steps))
        videos = self.split_videos(split)
        pool = self._prepare(self.load_pool(videos), doc.fingerprint.order, doc.fingerprint.nms)
        return predict_spots(spec, pool, videos, doc.fingerprint.nms)

    def evaluate(self, preds: Sequence[SpotPrediction], gt: Sequence[GroundTruth], tolerance_sec: float) -> EvalReport:
        return map_at_tolerance(preds, gt, tolerance_sec, num_classes=len(self.classes))


def write_benchmark(
    out_dir: PathLike,
    cfg: SynthConfig,
    gts: Sequence[GroundTruth],
    pool: Sequence[CandidateModel],
    manifest_path: Optional[PathLike] = None,
) -> Path:
    """Write a synthetic benchmark as manifest + score CSVs + ground-truth files."""
    out_dir = ensure_dir(out_dir)
    manifest_path = Path(manifest_path) if manifest_path else out_dir / "manifest.json"
    base = ensure_dir(manifest_path.parent)
    classes = [f"class_{c}" for c in range(cfg.num_classes)]
    splits = split_videos(cfg, list(gts))

    candidates = []
    for cand in pool:
        refs = {}
        for vid in sorted(cand.scores):
            target = write_scores(cand.scores[vid], out_dir / "scores" / cand.id / f"{vid}.csv", classes)
            refs[vid] = relative_to(base.resolve(), target.resolve())
        candidates.append(
            CandidateEntry(
                id=cand.id,
                arch_tag=cand.arch_tag,
                optimizer_tag=cand.optimizer_tag,
                stride_s=cand.stride_s,
                delta=cand.delta,
                scores=refs,
            )
        )

    write_gt(gts, out_dir / "gt.json", classes)
    by_id = {g.video_id: g for g in gts}
    for name, vids in splits.items():
        write_gt([by_id[v] for v in vids], out_dir / f"gt_{name}.json", classes)

    manifest = Manifest(
        classes=classes,
        videos=[VideoEntry(video_id=g.video_id, fps=g.fps, num_frames=g.num_frames) for g in gts],
        splits=splits,
        candidates=candidates,
    )
    write_manifest(manifest, manifest_path)
    logger.info(f"[ENGINE] benchmark written to {out_dir} (manifest {manifest_path})")
    return manifest_path
