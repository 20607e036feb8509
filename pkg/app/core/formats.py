# app/core/formats.py
"""
Readers and writers for scores (CSV), ground truth, spots, labels, clips,
manifests and ensemble files (JSON).

Readers reject malformed input instead of repairing it; every writer emits
text its paired reader accepts.
"""
import csv
import io
import json
import logging
import math
import os
from pathlib import Path
from typing import Any, List, Optional, Sequence, Type, TypeVar

import numpy as np
from pydantic import BaseModel, TypeAdapter, ValidationError

from app.utils.file import PathLike, read_text, write_text

from .dataprep import ClipSample, FrameLabels
from .ensemble import GroundTruth, ScoreMatrix
from .errors import FormatError, GroundTruthError
from .metrics import Spot, SpotPrediction
from .postprocess import ClipScores
from .schema import (
    ClipSampleEntry,
    ClipScoresEntry,
    EnsembleFile,
    FrameLabelsEntry,
    Manifest,
    VideoEvents,
    VideoSpots,
)

logger = logging.getLogger("bme-spot.formats")

M = TypeVar("M", bound=BaseModel)


def _read(path: PathLike) -> str:
    try:
        return read_text(path)
    except UnicodeDecodeError:
        raise FormatError(path, "not UTF-8 text") from None
    except OSError as e:
        raise FormatError(path, f"cannot read: {e.strerror or e}") from None


def _load_json(path: PathLike) -> str:
    """Return the text after checking it parses, so syntax errors keep their line."""
    text = _read(path)
    try:
        json.loads(text)
    except json.JSONDecodeError as e:
        raise FormatError(path, f"invalid JSON: {e.msg}", line=e.lineno) from None
    return text


def read_document(path: PathLike, model: Type[M]) -> M:
    # strict: "25" is not a number and 13.0 is not a frame index
    try:
        return model.model_validate_json(_load_json(path), strict=True)
    except ValidationError as e:
        raise FormatError(path, _first_error(e)) from None


def _load_list(path: PathLike, model: Type[M]) -> List[M]:
    try:
        return TypeAdapter(List[model]).validate_json(_load_json(path), strict=True)
    except ValidationError as e:
        raise FormatError(path, _first_error(e)) from None


def _first_error(e: ValidationError) -> str:
    err = e.errors()[0]
    where = ".".join(str(p) for p in err["loc"]) or "document"
    return f"{where}: {err['msg']}"


def _dump_list(items: Sequence[BaseModel]) -> str:
    return json.dumps([i.model_dump(mode="json") for i in items], indent=2) + "\n"


# ---- scores -------------------------------------------------------------

def read_scores(
    path: PathLike,
    classes: Optional[Sequence[str]] = None,
    video_id: Optional[str] = None,
    num_frames: Optional[int] = None,
) -> ScoreMatrix:
    """Parse `frame,<class_0>,...` CSV with rows for frames 0..n-1, values in [0, 1]."""
    path = Path(path)
    text = _read(path)
    reader = csv.reader(io.StringIO(text, newline=""))
    header = next(reader, None)
    if header is None:
        raise FormatError(path, "empty file", line=1)
    if not header or header[0] != "frame" or len(header) < 2:
        raise FormatError(path, "header must be 'frame,<class_0>,...'", line=1)
    if classes is not None and header[1:] != list(classes):
        raise FormatError(path, f"header classes {header[1:]} do not match manifest classes {list(classes)}", line=1)

    width = len(header) - 1
    rows: List[List[float]] = []
    for row in reader:
        line = reader.line_num
        if len(row) != width + 1:
            raise FormatError(path, f"expected {width + 1} fields, got {len(row)}", line=line)
        try:
            frame = int(row[0])
        except ValueError:
            raise FormatError(path, f"frame index {row[0]!r} is not an integer", line=line) from None
        expected = len(rows)
        if frame != expected:
            kind = "missing frame" if frame > expected else "frame out of order"
            raise FormatError(path, f"{kind}: expected frame {expected}, got {frame}", line=line)
        values = []
        for name, field in zip(header[1:], row[1:]):
            try:
                v = float(field)
            except ValueError:
                raise FormatError(path, f"{name}: {field!r} is not a number", line=line) from None
            if not (math.isfinite(v) and 0.0 <= v <= 1.0):
                raise FormatError(path, f"{name}: value {field} outside [0, 1]", line=line)
            values.append(v)
        rows.append(values)
    if not rows:
        raise FormatError(path, "no frame rows")
    if num_frames is not None and len(rows) != num_frames:
        raise FormatError(path, f"{len(rows)} rows, manifest says {num_frames}")
    return ScoreMatrix(video_id or path.stem, np.asarray(rows, dtype=np.float64))


def write_scores(scores: ScoreMatrix, path: PathLike, classes: Sequence[str]) -> Path:
    if len(classes) != scores.num_classes:
        raise FormatError(path, f"{len(classes)} class names for {scores.num_classes} score columns")
    lines = [",".join(["frame", *classes])]
    for frame, row in enumerate(scores.values.tolist()):
        lines.append(",".join([str(frame), *(repr(float(v)) for v in row)]))
    return write_text(path, "\n".join(lines) + "\n")


# ---- ground truth -------------------------------------------------------

def read_gt(path: PathLike, classes: Sequence[str]) -> List[GroundTruth]:
    index = {name: i for i, name in enumerate(classes)}
    out = []
    seen_videos = set()
    for video in _load_list(path, VideoEvents):
        if video.video_id in seen_videos:
            raise GroundTruthError(f"{path}: video {video.video_id!r} listed twice")
        seen_videos.add(video.video_id)
        events = set()
        for ev in video.events:
            if ev.label not in index:
                raise GroundTruthError(f"{path}: {video.video_id}: unknown label {ev.label!r}")
            if not 0 <= ev.frame < video.num_frames:
                raise GroundTruthError(
                    f"{path}: {video.video_id}: frame {ev.frame} outside [0, {video.num_frames})"
                )
            events.add((ev.frame, index[ev.label]))
        dropped = len(video.events) - len(events)
        if dropped:
            logger.warning(f"[FORMATS] {video.video_id}: dropped {dropped} duplicate event(s)")
        out.append(
            GroundTruth(
                video_id=video.video_id,
                fps=video.fps,
                num_frames=video.num_frames,
                events=tuple(sorted(events)),
                duplicates_dropped=dropped,
            )
        )
    return out


def write_gt(gts: Sequence[GroundTruth], path: PathLike, classes: Sequence[str]) -> Path:
    docs = [
        VideoEvents(
            video_id=g.video_id,
            fps=g.fps,
            num_frames=g.num_frames,
            events=[{"frame": f, "label": classes[c]} for f, c in g.events],
        )
        for g in gts
    ]
    return write_text(path, _dump_list(docs))


# ---- spots --------------------------------------------------------------

def write_spots(preds: Sequence[SpotPrediction], path: PathLike, classes: Sequence[str]) -> Path:
    """JSON spots, ordered by (video_id, class, frame), confidences with 6 decimals."""
    if not preds:
        return write_text(path, "[]\n")
    blocks = []
    for pred in sorted(preds, key=lambda p: p.video_id):
        spots = sorted(pred.spots, key=lambda s: (s.cls, s.frame))
        rendered = [
            "      {"
            f'"frame": {s.frame}, "label": {json.dumps(classes[s.cls])}, "confidence": {s.confidence:.6f}'
            "}"
            for s in spots
        ]
        body = "[\n" + ",\n".join(rendered) + "\n    ]" if rendered else "[]"
        blocks.append(f'  {{\n    "video_id": {json.dumps(pred.video_id)},\n    "spots": {body}\n  }}')
    return write_text(path, "[\n" + ",\n".join(blocks) + "\n]\n")


def read_spots(path: PathLike, classes: Sequence[str]) -> List[SpotPrediction]:
    index = {name: i for i, name in enumerate(classes)}
    out = []
    for video in _load_list(path, VideoSpots):
        spots = []
        for s in video.spots:
            if s.label not in index:
                raise FormatError(path, f"{video.video_id}: unknown label {s.label!r}")
            spots.append(Spot(s.frame, index[s.label], s.confidence))
        out.append(SpotPrediction(video.video_id, tuple(spots)))
    return out


# ---- manifest & ensemble ------------------------------------------------

def read_manifest(path: PathLike) -> Manifest:
    return read_document(path, Manifest)


def write_manifest(manifest: Manifest, path: PathLike) -> Path:
    return write_text(path, manifest.model_dump_json(indent=2) + "\n")


def read_ensemble(path: PathLike) -> EnsembleFile:
    return read_document(path, EnsembleFile)


def write_ensemble(doc: EnsembleFile, path: PathLike) -> Path:
    return write_text(path, doc.model_dump_json(indent=2) + "\n")


# ---- labels & clips -----------------------------------------------------

def write_labels(labels: Sequence[FrameLabels], path: PathLike) -> Path:
    docs = [
        FrameLabelsEntry(video_id=l.video_id, delta=l.delta, collisions=l.collisions, labels=l.labels.tolist())
        for l in labels
    ]
    return write_text(path, _dump_list(docs))


def read_labels(path: PathLike) -> List[FrameLabels]:
    return [
        FrameLabels(video_id=e.video_id, labels=np.asarray(e.labels), delta=e.delta, collisions=e.collisions)
        for e in _load_list(path, FrameLabelsEntry)
    ]


def write_clip_samples(clips: Sequence[ClipSample], path: PathLike) -> Path:
    docs = [
        ClipSampleEntry(
            video_id=c.video_id,
            start_frame=c.start_frame,
            stride_s=c.stride_s,
            length=c.length,
            labels=c.labels.tolist(),
        )
        for c in clips
    ]
    return write_text(path, _dump_list(docs))


def read_clip_scores(path: PathLike) -> List[ClipScores]:
    out = []
    for i, e in enumerate(_load_list(path, ClipScoresEntry)):
        try:
            out.append(ClipScores(e.video_id, e.start_frame, e.stride_s, np.asarray(e.values, dtype=np.float64)))
        except (ValueError, TypeError) as err:
            raise FormatError(path, f"clip {i}: {err}") from None
    return out


def write_clip_scores(clips: Sequence[ClipScores], path: PathLike) -> Path:
    docs = [
        ClipScoresEntry(video_id=c.video_id, start_frame=c.start_frame, stride_s=c.stride_s, values=c.values.tolist())
        for c in clips
    ]
    return write_text(path, _dump_list(docs))


def relative_to(base: PathLike, target: PathLike) -> str:
    return Path(os.path.relpath(target, base)).as_posix()


def resolve(base: PathLike, ref: str) -> Path:
    p = Path(ref)
    return p if p.is_absolute() else Path(base) / p

