# tests/test_formats.py
import json
import logging

import numpy as np
import pytest

from app.core.dataprep import dilate_labels
from app.core.ensemble import GroundTruth, ScoreMatrix
from app.core.errors import FormatError, GroundTruthError
from app.core.formats import (
    read_clip_scores,
    read_document,
    read_gt,
    read_labels,
    read_manifest,
    read_scores,
    read_spots,
    relative_to,
    write_clip_scores,
    write_gt,
    write_labels,
    write_scores,
    write_spots,
)
from app.core.metrics import SpotPrediction
from app.core.postprocess import ClipScores
from app.core.synth import SynthConfig

CLASSES = ["goal", "card"]


def _csv(tmp_path, text, name="v0.csv"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


class TestScoresCsv:
    """Dense score files."""

    def test_round_trip_is_exact(self, tmp_path, rng):
        sm = ScoreMatrix("v0", rng.random((25, 2)))
        path = write_scores(sm, tmp_path / "v0.csv", CLASSES)
        back = read_scores(path, CLASSES)
        assert back.video_id == "v0"
        assert np.array_equal(back.values, sm.values)

    def test_rewrite_is_byte_identical(self, tmp_path, rng):
        sm = ScoreMatrix("v0", rng.random((10, 2)))
        first = write_scores(sm, tmp_path / "a.csv", CLASSES).read_bytes()
        second = write_scores(read_scores(tmp_path / "a.csv", CLASSES), tmp_path / "b.csv", CLASSES).read_bytes()
        assert first == second

    def test_header_checked(self, tmp_path):
        path = _csv(tmp_path, "frame,goal,penalty\n0,0.1,0.2\n")
        with pytest.raises(FormatError) as e:
            read_scores(path, CLASSES)
        assert e.value.line == 1

    def test_missing_frame_reports_line(self, tmp_path):
        path = _csv(tmp_path, "frame,goal,card\n0,0.1,0.2\n2,0.1,0.2\n")
        with pytest.raises(FormatError) as e:
            read_scores(path, CLASSES)
        assert e.value.line == 3
        assert "missing frame" in str(e.value)

    def test_out_of_order(self, tmp_path):
        path = _csv(tmp_path, "frame,goal,card\n0,0.1,0.2\n1,0.1,0.2\n0,0.3,0.3\n")
        with pytest.raises(FormatError, match="out of order"):
            read_scores(path, CLASSES)

    def test_value_out_of_range(self, tmp_path):
        path = _csv(tmp_path, "frame,goal,card\n0,0.1,1.2\n")
        with pytest.raises(FormatError) as e:
            read_scores(path, CLASSES)
        assert e.value.line == 2
        assert "card" in str(e.value)

    def test_not_a_number(self, tmp_path):
        path = _csv(tmp_path, "frame,goal,card\n0,0.1,abc\n")
        with pytest.raises(FormatError):
            read_scores(path, CLASSES)

    def test_nan_rejected(self, tmp_path):
        path = _csv(tmp_path, "frame,goal,card\n0,0.1,nan\n")
        with pytest.raises(FormatError):
            read_scores(path, CLASSES)

    def test_wrong_field_count(self, tmp_path):
        path = _csv(tmp_path, "frame,goal,card\n0,0.1\n")
        with pytest.raises(FormatError) as e:
            read_scores(path, CLASSES)
        assert e.value.line == 2

    def test_frame_count_against_manifest(self, tmp_path):
        path = _csv(tmp_path, "frame,goal,card\n0,0.1,0.2\n")
        with pytest.raises(FormatError, match="1 rows, manifest says 2"):
            read_scores(path, CLASSES, num_frames=2)

    def test_extra_rows_against_manifest(self, tmp_path):
        path = _csv(tmp_path, "frame,goal,card\n0,0.1,0.2\n1,0.1,0.2\n2,0.1,0.2\n")
        with pytest.raises(FormatError, match="3 rows, manifest says 2"):
            read_scores(path, CLASSES, num_frames=2)

    def test_missing_file(self, tmp_path):
        with pytest.raises(FormatError, match="cannot read") as e:
            read_scores(tmp_path / "absent.csv", CLASSES)
        assert e.value.path == str(tmp_path / "absent.csv")

    def test_empty_file(self, tmp_path):
        with pytest.raises(FormatError):
            read_scores(_csv(tmp_path, ""), CLASSES)

    def test_header_only(self, tmp_path):
        with pytest.raises(FormatError, match="no frame rows"):
            read_scores(_csv(tmp_path, "frame,goal,card\n"), CLASSES)

    def test_crlf_accepted(self, tmp_path):
        path = tmp_path / "crlf.csv"
        path.write_bytes(b"frame,goal,card\r\n0,0.1,0.2\r\n1,0.3,0.4\r\n")
        assert read_scores(path, CLASSES).values.tolist() == [[0.1, 0.2], [0.3, 0.4]]

    def test_class_count_mismatch_on_write(self, tmp_path):
        with pytest.raises(FormatError):
            write_scores(ScoreMatrix("v", np.zeros((2, 3))), tmp_path / "x.csv", CLASSES)


class TestGroundTruthJson:
    """Event files."""

    def test_round_trip(self, tmp_path):
        gts = [GroundTruth("v0", 25.0, 100, ((10, 0), (20, 1))), GroundTruth("v1", 12.5, 50, ())]
        back = read_gt(write_gt(gts, tmp_path / "gt.json", CLASSES), CLASSES)
        assert back == gts

    def test_duplicates_dropped_with_warning(self, write_json, caplog):
        path = write_json(
            "gt.json",
            [{"video_id": "v0", "fps": 25, "num_frames": 100, "events": [
                {"frame": 10, "label": "goal"}, {"frame": 10, "label": "goal"}, {"frame": 3, "label": "card"}]}],
        )
        with caplog.at_level(logging.WARNING, logger="bme-spot"):
            (gt,) = read_gt(path, CLASSES)
        assert gt.events == ((3, 1), (10, 0))
        assert gt.duplicates_dropped == 1
        assert "duplicate" in caplog.text

    def test_unknown_label(self, write_json):
        path = write_json("gt.json", [{"video_id": "v0", "fps": 25, "num_frames": 100, "events": [{"frame": 1, "label": "foul"}]}])
        with pytest.raises(GroundTruthError):
            read_gt(path, CLASSES)

    def test_frame_outside_video(self, write_json):
        path = write_json("gt.json", [{"video_id": "v0", "fps": 25, "num_frames": 100, "events": [{"frame": 100, "label": "goal"}]}])
        with pytest.raises(GroundTruthError):
            read_gt(path, CLASSES)

    def test_invalid_json_has_line(self, tmp_path):
        path = tmp_path / "gt.json"
        path.write_text('[\n  {"video_id": }\n]', encoding="utf-8")
        with pytest.raises(FormatError) as e:
            read_gt(path, CLASSES)
        assert e.value.line == 2

    def test_schema_violation(self, write_json):
        with pytest.raises(FormatError):
            read_gt(write_json("gt.json", [{"video_id": "v0"}]), CLASSES)


class TestSpotsJson:
    """Prediction files."""

    def test_layout(self, tmp_path):
        preds = [SpotPrediction("v1", ((5, 1, 0.25),)), SpotPrediction("v0", ((9, 0, 0.5), (2, 0, 0.123456789)))]
        path = write_spots(preds, tmp_path / "spots.json", CLASSES)
        doc = json.loads(path.read_text())
        assert [d["video_id"] for d in doc] == ["v0", "v1"]
        assert doc[0]["spots"] == [
            {"frame": 2, "label": "goal", "confidence": 0.123457},
            {"frame": 9, "label": "goal", "confidence": 0.5},
        ]
        assert '"confidence": 0.500000' in path.read_text()

    def test_round_trip(self, tmp_path):
        preds = [SpotPrediction("v0", ((9, 0, 0.5), (3, 1, 0.75)))]
        back = read_spots(write_spots(preds, tmp_path / "spots.json", CLASSES), CLASSES)
        assert sorted(back[0].spots) == sorted(preds[0].spots)

    def test_empty(self, tmp_path):
        path = write_spots([], tmp_path / "spots.json", CLASSES)
        assert path.read_text() == "[]\n"
        assert read_spots(path, CLASSES) == []

    def test_video_without_spots(self, tmp_path):
        path = write_spots([SpotPrediction("v0", ())], tmp_path / "spots.json", CLASSES)
        assert json.loads(path.read_text()) == [{"video_id": "v0", "spots": []}]

    def test_unknown_label(self, write_json):
        path = write_json("spots.json", [{"video_id": "v0", "spots": [{"frame": 1, "label": "x", "confidence": 0.1}]}])
        with pytest.raises(FormatError):
            read_spots(path, CLASSES)

    def test_confidence_range(self, write_json):
        path = write_json("spots.json", [{"video_id": "v0", "spots": [{"frame": 1, "label": "goal", "confidence": 2}]}])
        with pytest.raises(FormatError):
            read_spots(path, CLASSES)


class TestManifest:
    """Manifest validation."""

    def _manifest(self, **over):
        doc = {
            "classes": CLASSES,
            "videos": [{"video_id": "v0", "fps": 25, "num_frames": 10}],
            "splits": {"valid": ["v0"]},
            "candidates": [{"id": "a", "scores": {"v0": "a/v0.csv"}}],
        }
        doc.update(over)
        return doc

    def test_valid(self, write_json):
        manifest = read_manifest(write_json("m.json", self._manifest()))
        assert manifest.video("v0").num_frames == 10

    def test_duplicate_class(self, write_json):
        with pytest.raises(FormatError):
            read_manifest(write_json("m.json", self._manifest(classes=["goal", "goal"])))

    def test_split_references_unknown_video(self, write_json):
        with pytest.raises(FormatError):
            read_manifest(write_json("m.json", self._manifest(splits={"valid": ["v9"]})))

    def test_candidate_must_cover_splits(self, write_json):
        with pytest.raises(FormatError):
            read_manifest(write_json("m.json", self._manifest(candidates=[{"id": "a", "scores": {}}])))


class TestLabelsAndClips:
    """Intermediate artifacts."""

    def test_labels_round_trip(self, tmp_path):
        labels = dilate_labels(GroundTruth("v0", 25.0, 30, ((5, 0), (8, 1))), 2)
        (back,) = read_labels(write_labels([labels], tmp_path / "labels.json"))
        assert np.array_equal(back.labels, labels.labels)
        assert (back.delta, back.collisions) == (2, labels.collisions)

    def test_clip_scores_round_trip(self, tmp_path, rng):
        clips = [ClipScores("v0", 0, 2, rng.random((4, 2))), ClipScores("v0", 1, 2, rng.random((4, 2)))]
        back = read_clip_scores(write_clip_scores(clips, tmp_path / "clips.json"))
        assert [(c.start_frame, c.stride_s) for c in back] == [(0, 2), (1, 2)]
        assert np.array_equal(back[1].values, clips[1].values)

    def test_clip_scores_out_of_range(self, write_json):
        path = write_json("clips.json", [{"video_id": "v0", "start_frame": 0, "values": [[1.5]]}])
        with pytest.raises(FormatError):
            read_clip_scores(path)


def test_read_document(write_json):
    cfg = read_document(write_json("cfg.json", {"num_videos": 2, "num_frames": 300}), SynthConfig)
    assert (cfg.num_videos, cfg.num_frames) == (2, 300)


def test_relative_to_outside_base(tmp_path):
    assert relative_to(tmp_path / "a", tmp_path / "b" / "x.csv") == "../b/x.csv"


class TestStrictReaders:
    """Wrongly typed JSON values are rejected, never converted."""

    def _gt(self, **over):
        video = {"video_id": "v0", "fps": 25, "num_frames": 100, "events": [{"frame": 12, "label": "goal"}]}
        video.update(over)
        return [video]

    def test_gt_accepts_integral_fps(self, write_json):
        (gt,) = read_gt(write_json("gt.json", self._gt()), CLASSES)
        assert (gt.fps, gt.num_frames, gt.events) == (25.0, 100, ((12, 0),))

    @pytest.mark.parametrize(
        "over",
        [
            {"fps": "25"},
            {"num_frames": "100"},
            {"num_frames": 100.0},
            {"events": [{"frame": "12", "label": "goal"}]},
            {"events": [{"frame": 13.0, "label": "goal"}]},
            {"video_id": 7},
        ],
    )
    def test_gt_rejects_coercible_values(self, write_json, over):
        with pytest.raises(FormatError):
            read_gt(write_json("gt.json", self._gt(**over)), CLASSES)

    @pytest.mark.parametrize("spot", [{"frame": 1, "label": "goal", "confidence": "0.5"},
                                      {"frame": "1", "label": "goal", "confidence": 0.5},
                                      {"frame": True, "label": "goal", "confidence": 0.5}])
    def test_spots_reject_coercible_values(self, write_json, spot):
        path = write_json("spots.json", [{"video_id": "v0", "spots": [spot]}])
        with pytest.raises(FormatError):
            read_spots(path, CLASSES)

    def test_manifest_rejects_string_frames(self, write_json):
        doc = {"classes": CLASSES, "videos": [{"video_id": "v0", "fps": 25, "num_frames": "10"}]}
        with pytest.raises(FormatError, match="num_frames"):
            read_manifest(write_json("m.json", doc))

    def test_labels_reject_string_classes(self, write_json):
        path = write_json("labels.json", [{"video_id": "v0", "delta": 1, "labels": ["0", -1]}])
        with pytest.raises(FormatError):
            read_labels(path)

    def test_clip_scores_reject_string_start(self, write_json):
        path = write_json("clips.json", [{"video_id": "v0", "start_frame": "0", "values": [[0.5]]}])
        with pytest.raises(FormatError):
            read_clip_scores(path)

    def test_missing_document(self, tmp_path):
        with pytest.raises(FormatError, match="cannot read"):
            read_gt(tmp_path / "absent.json", CLASSES)
