# app/cli/commands.py
"""Command-line surface: every subcommand reads a manifest and writes files or stdout."""
import functools
import json
import logging
import math
from pathlib import Path
from typing import Tuple

import click
from pydantic import ValidationError

from app.config import configure_logging, load_settings
from app.core.dataprep import SamplingConfig, derive_seed, dilate_labels, sample_clips
from app.core.engine import SpottingEngine, write_benchmark
from app.core.errors import ConfigError, SpottingError
from app.core.formats import (
    read_clip_scores,
    read_document,
    read_ensemble,
    read_labels,
    read_scores,
    read_spots,
    write_clip_samples,
    write_ensemble,
    write_labels,
    write_scores,
    write_spots,
)
from app.core.postprocess import FusionOrder, NmsConfig, aggregate_clips, temporal_nms
from app.core.search import SearchConfig, describe
from app.core.synth import SynthConfig, generate

logger = logging.getLogger("bme-spot.cli")

U64 = click.IntRange(0, 2**64 - 1)


def parse_weight_grid(text: str) -> Tuple[float, ...]:
    """`start:stop:step` (inclusive) or a comma list such as `0.25,0.5,1.0`."""
    try:
        if ":" in text:
            start, stop, step = (float(x) for x in text.split(":"))
            if step <= 0 or stop < start:
                raise ValueError
            count = int(math.floor((stop - start) / step + 1e-9)) + 1
            return tuple(round(start + k * step, 10) for k in range(count))
        return tuple(float(x) for x in text.split(","))
    except ValueError:
        raise click.BadParameter(f"cannot parse weight grid {text!r}") from None


def handle_errors(fn):
    """Turn domain and validation failures into a clean exit code 1."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except SpottingError as e:
            logger.debug("[CLI] failure", exc_info=True)
            raise click.ClickException(str(e)) from None
        except ValidationError as e:
            raise click.ClickException(str(ConfigError(str(e)))) from None

    return wrapper


def manifest_option(required: bool = True):
    return click.option(
        "--manifest",
        "manifest",
        required=required,
        type=click.Path(dir_okay=False, path_type=Path, exists=required),
        help="Benchmark manifest (JSON).",
    )


def nms_options(fn):
    fn = click.option("--threshold", type=float, default=0.01, show_default=True, help="NMS score threshold.")(fn)
    fn = click.option("--frame-rate", type=float, default=25.0, show_default=True, help="NMS frame rate.")(fn)
    fn = click.option("--window", type=int, default=10, show_default=True, help="NMS half-window in frames.")(fn)
    return fn


@click.group()
@click.option("--verbose", is_flag=True, help="Log at DEBUG level.")
@click.pass_context
def cli(ctx: click.Context, verbose: bool):
    """Boosted model ensembling for temporal event spotting."""
    try:
        settings = load_settings()
    except (ValidationError, ValueError) as e:
        raise click.ClickException(f"invalid environment settings: {e}") from None
    configure_logging("DEBUG" if verbose else settings.log_level)
    ctx.obj = settings


@cli.command()
@manifest_option(required=False)
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), help="SynthConfig JSON.")
@click.option("--out-dir", required=True, type=click.Path(file_okay=False, path_type=Path))
@click.option("--seed", type=U64, default=0, show_default=True)
@handle_errors
def synth(manifest, config_path, out_dir, seed):
    """Generate a synthetic benchmark (manifest, score CSVs, ground truth)."""
    base = read_document(config_path, SynthConfig) if config_path else SynthConfig.default()
    cfg = SynthConfig.model_validate({**base.model_dump(), "seed": seed})
    gts, pool = generate(cfg)
    path = write_benchmark(out_dir, cfg, gts, pool, manifest)
    click.echo(str(path))


@cli.command()
@manifest_option()
@click.option("--gt", "gt_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--delta", type=click.IntRange(min=0), required=True, help="Label sharing scope in frames.")
@click.option("--out", required=True, type=click.Path(dir_okay=False, path_type=Path))
@handle_errors
def labels(manifest, gt_path, delta, out):
    """Dilate event instants into per-frame labels."""
    engine = SpottingEngine(manifest)
    result = [dilate_labels(g, delta) for g in engine.ground_truth(gt_path)]
    write_labels(result, out)
    collisions = sum(l.collisions for l in result)
    logger.info(f"[CLI] labelled {len(result)} videos with delta={delta}, {collisions} contested frame(s)")


@cli.command()
@manifest_option()
@click.option("--labels", "labels_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--n", "num_clips", type=click.IntRange(min=1), required=True, help="Clips per video.")
@click.option("--length", type=click.IntRange(min=1), default=100, show_default=True)
@click.option("--stride", type=click.IntRange(min=1), required=True)
@click.option("--seed", type=U64, default=0, show_default=True)
@click.option("--out", required=True, type=click.Path(dir_okay=False, path_type=Path))
@handle_errors
def clips(manifest, labels_path, num_clips, length, stride, seed, out):
    """Sample fixed-length strided clips from frame labels."""
    engine = SpottingEngine(manifest)
    samples = []
    for frame_labels in read_labels(labels_path):
        video = engine.video(frame_labels.video_id)
        if video.num_frames != frame_labels.num_frames:
            raise ConfigError(f"labels for {frame_labels.video_id!r} do not match a manifest video")
        cfg = SamplingConfig(
            num_clips=num_clips,
            length=length,
            stride_s=stride,
            delta=frame_labels.delta,
            seed=derive_seed(seed, frame_labels.video_id),
        )
        samples.extend(sample_clips(frame_labels, cfg))
    write_clip_samples(samples, out)
    logger.info(f"[CLI] wrote {len(samples)} clips to {out}")


@cli.command()
@manifest_option()
@click.option("--clips", "clips_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(dir_okay=False, path_type=Path))
@handle_errors
def aggregate(manifest, clips_path, out):
    """Average overlapping clip scores into one per-frame score CSV."""
    engine = SpottingEngine(manifest)
    clip_scores = read_clip_scores(clips_path)
    if not clip_scores:
        raise ConfigError(f"{clips_path}: no clips")
    video = engine.video(clip_scores[0].video_id)
    merged = aggregate_clips(clip_scores, video.num_frames, len(engine.classes))
    write_scores(merged, out, engine.classes)


@cli.command(name="eval")
@manifest_option()
@click.option("--pred", "pred_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--gt", "gt_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--tolerance-sec", type=float, default=1.0, show_default=True)
@handle_errors
def evaluate(manifest, pred_path, gt_path, tolerance_sec):
    """Print mAP at the given tolerance as JSON."""
    engine = SpottingEngine(manifest)
    report = engine.evaluate(read_spots(pred_path, engine.classes), engine.ground_truth(gt_path), tolerance_sec)
    doc = report.model_dump(mode="json")
    for entry in doc["per_class"]:
        entry["label"] = engine.classes[entry["class_index"]]
    doc["excluded_classes"] = [engine.classes[c] for c in report.excluded_classes]
    click.echo(json.dumps(doc, indent=2))


@cli.command()
@manifest_option()
@click.option("--scores", "scores_path", required=True, type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--video-id", default=None, help="Defaults to the CSV file name without extension.")
@nms_options
@click.option("--out", required=True, type=click.Path(dir_okay=False, path_type=Path))
@handle_errors
def nms(manifest, scores_path, video_id, window, frame_rate, threshold, out):
    """Suppress a dense score CSV into discrete spots."""
    engine = SpottingEngine(manifest)
    video_id = video_id or scores_path.stem
    num_frames = engine.video(video_id).num_frames if engine.has_video(video_id) else None
    scores = read_scores(scores_path, classes=engine.classes, video_id=video_id, num_frames=num_frames)
    pred = temporal_nms(scores, NmsConfig(window=window, frame_rate=frame_rate, threshold=threshold))
    write_spots([pred], out, engine.classes)


@cli.command()
@manifest_option()
@click.option("--gt", "gt_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--split", default="valid", show_default=True)
@click.option("--weight-grid", default="0.1:1.0:0.1", show_default=True, help="start:stop:step or a comma list.")
@click.option("--max-iters", type=click.IntRange(min=1), default=20, show_default=True)
@click.option("--tolerance-sec", type=float, default=1.0, show_default=True)
@nms_options
@click.option("--no-reselect", is_flag=True, help="Forbid picking a candidate twice.")
@click.option("--min-improvement", type=click.FloatRange(min=0.0), default=0.0, show_default=True)
@click.option(
    "--order",
    type=click.Choice([o.value for o in FusionOrder]),
    default=FusionOrder.ensemble_first.value,
    show_default=True,
)
@click.option("--workers", type=click.IntRange(min=1), default=None, help="Evaluation threads [env BME_WORKERS].")
@click.option("--out", required=True, type=click.Path(dir_okay=False, path_type=Path))
@click.pass_obj
@handle_errors
def ensemble(settings, manifest, gt_path, split, weight_grid, max_iters, tolerance_sec, window, frame_rate,
             threshold, no_reselect, min_improvement, order, workers, out):
    """Search a weighted ensemble on the validation split."""
    if split == "test":
        raise ConfigError("the search must not see test labels; use a validation split")
    engine = SpottingEngine(manifest)
    cfg = SearchConfig(
        weight_grid=parse_weight_grid(weight_grid),
        max_iters=max_iters,
        tolerance_sec=tolerance_sec,
        nms=NmsConfig(window=window, frame_rate=frame_rate, threshold=threshold),
        allow_reselection=not no_reselect,
        min_improvement=min_improvement,
        workers=workers or settings.workers,
    )
    doc, spec, trace = engine.search(engine.ground_truth(gt_path, split), cfg, FusionOrder(order), split)
    write_ensemble(doc, out)
    click.echo(trace.as_table().to_string(index=False, float_format=lambda v: f"{v:.4f}"))
    click.echo(f"terminal: {trace.terminal_reason.value}")
    click.echo(describe(spec).to_string(index=False, float_format=lambda v: f"{v:.3f}"))


@cli.command()
@manifest_option()
@click.option("--ensemble", "ensemble_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--split", default="test", show_default=True)
@click.option("--out", required=True, type=click.Path(dir_okay=False, path_type=Path))
@handle_errors
def predict(manifest, ensemble_path, split, out):
    """Apply a saved ensemble to a held-out split and write spots."""
    engine = SpottingEngine(manifest)
    preds = engine.predict(read_ensemble(ensemble_path), split)
    write_spots(preds, out, engine.classes)
    logger.info(f"[CLI] {sum(len(p.spots) for p in preds)} spots over {len(preds)} videos")
