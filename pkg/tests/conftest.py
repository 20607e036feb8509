# tests/conftest.py
import json

import numpy as np
import pytest
from click.testing import CliRunner

from app.core.ensemble import CandidateModel, GroundTruth, ScoreMatrix
from app.core.engine import write_benchmark
from app.core.synth import NoiseProfile, SynthConfig, generate


@pytest.fixture
def rng():
    """Seeded generator for randomized checks."""
    return np.random.default_rng(20230618)


@pytest.fixture
def make_scores():
    """Build a ScoreMatrix from nested lists."""

    def _make(values, video_id="v0"):
        return ScoreMatrix(video_id, np.asarray(values, dtype=np.float64))

    return _make


@pytest.fixture
def make_candidate():
    """Single-video candidate from nested lists."""

    def _make(cid, values, video_id="v0", **meta):
        return CandidateModel(id=cid, scores={video_id: ScoreMatrix(video_id, np.asarray(values, dtype=float))}, **meta)

    return _make


@pytest.fixture
def small_synth_config():
    """Five candidates, the first noiseless, small enough for CLI runs."""
    return SynthConfig(
        num_videos=4,
        num_frames=600,
        num_classes=2,
        events_per_class=4.0,
        seed=7,
        candidates=(
            NoiseProfile(),
            NoiseProfile(miss_rate=0.3, jitter_std=2.0, false_alarm_rate=3.0, noise_floor=0.05),
            NoiseProfile(miss_rate=0.3, jitter_std=3.0, false_alarm_rate=2.0),
            NoiseProfile(miss_rate=0.5, jitter_std=1.0, false_alarm_rate=5.0, noise_floor=0.02),
            NoiseProfile(miss_rate=0.2, jitter_std=5.0, false_alarm_rate=1.0),
        ),
    )


@pytest.fixture
def benchmark(tmp_path, small_synth_config):
    """Synthetic benchmark on disk; returns the manifest path."""
    gts, pool = generate(small_synth_config)
    return write_benchmark(tmp_path / "bench", small_synth_config, gts, pool)


@pytest.fixture
def runner():
    """CLI runner keeping stdout (data) apart from stderr (logs)."""
    return CliRunner(mix_stderr=False)


@pytest.fixture
def write_json(tmp_path):
    def _write(name, payload):
        path = tmp_path / name
        path.write_text(json.dumps(payload), encoding="utf-8")
        return path

    return _write


@pytest.fixture
def one_event_gt():
    """One event at frame 100 of class 0, 25 fps."""
    return [GroundTruth(video_id="v0", fps=25.0, num_frames=300, events=((100, 0),))]
