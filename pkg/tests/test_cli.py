import json
import math
import shutil
from pathlib import Path

import pytest

from panomeet.calibration import measure_between, serialize_measurements
from panomeet.cli import main
from panomeet.geometry import Pose, Vec3, rot_y
from panomeet.room import load_manifest
from support import assert_pose_close

FIXTURES = Path(__file__).parent / "fixtures"
DEG = math.pi / 180.0


def make_three_seat_manifest(tmp_path: Path, truth: dict) -> Path:
    doc = {
        "room_id": "tri",
        "viewpoints": [
            {
                "id": vid,
                "seat_label": vid,
                "image": f"{vid}.png",
                # deliberately wrong poses: calibrate must fix them
                "pose": {"pos": [9, 9, 9], "quat": [1, 0, 0, 0]},
            }
            for vid in sorted(truth)
        ],
        "elements": [],
    }
    path = tmp_path / "tri.room.json"
    path.write_text(json.dumps(doc))
    return path


@pytest.fixture()
def truth():
    return {
        "seat_a": Pose.identity(),
        "seat_b": Pose(Vec3(2, 0, 0), rot_y(120 * DEG)),
        "seat_c": Pose(Vec3(1, 0, -1.7), rot_y(-120 * DEG)),
    }


class TestCalibrateCommand:
    def test_updates_manifest_to_ground_truth(self, tmp_path, truth, capsys):
        manifest = make_three_seat_manifest(tmp_path, truth)
        ms = [
            measure_between(truth, "seat_a", "seat_b"),
            measure_between(truth, "seat_b", "seat_c"),
            measure_between(truth, "seat_a", "seat_c"),
        ]
        meas_path = tmp_path / "measures.json"
        meas_path.write_text(serialize_measurements(ms))
        assert main(["calibrate", str(meas_path), str(manifest)]) == 0
        out = capsys.readouterr().out
        assert "residual_rms" in out
        room = load_manifest(manifest)
        for vid, want in truth.items():
            assert_pose_close(room.viewpoint(vid).pose, want, 1e-6)

    def test_unknown_seat_is_id_mismatch(self, tmp_path, truth, capsys):
        manifest = make_three_seat_manifest(tmp_path, truth)
        ms = [measure_between({**truth, "ghost": Pose.identity()}, "seat_a", "ghost")]
        meas_path = tmp_path / "measures.json"
        meas_path.write_text(serialize_measurements(ms))
        assert main(["calibrate", str(meas_path), str(manifest)]) == 1
        assert "unknown seats" in capsys.readouterr().err

    def test_uncovered_seat_is_disconnected(self, tmp_path, truth, capsys):
        manifest = make_three_seat_manifest(tmp_path, truth)
        ms = [measure_between(truth, "seat_a", "seat_b")]
        meas_path = tmp_path / "measures.json"
        meas_path.write_text(serialize_measurements(ms))
        assert main(["calibrate", str(meas_path), str(manifest)]) == 1
        assert "disconnected" in capsys.readouterr().err

    def test_empty_measurements_error(self, tmp_path, truth, capsys):
        manifest = make_three_seat_manifest(tmp_path, truth)
        meas_path = tmp_path / "measures.json"
        meas_path.write_text("[]")
        assert main(["calibrate", str(meas_path), str(manifest)]) == 1

    def test_out_flag_leaves_original(self, tmp_path, truth):
        manifest = make_three_seat_manifest(tmp_path, truth)
        before = manifest.read_text()
        ms = [
            measure_between(truth, "seat_a", "seat_b"),
            measure_between(truth, "seat_b", "seat_c"),
        ]
        meas_path = tmp_path / "measures.json"
        meas_path.write_text(serialize_measurements(ms))
        out_path = tmp_path / "calibrated.room.json"
        assert main(["calibrate", str(meas_path), str(manifest), "--out", str(out_path)]) == 0
        assert manifest.read_text() == before
        assert out_path.exists()


class TestValidateCommand:
    def test_valid_manifest_exits_zero(self, capsys):
        assert main(["validate", str(FIXTURES / "meeting4.room.json")]) == 0
        assert "ok:" in capsys.readouterr().out

    def test_duplicate_element_id_fails(self, tmp_path, capsys):
        doc = json.loads((FIXTURES / "meeting4.room.json").read_text())
        doc["elements"].append(doc["elements"][0])
        bad = tmp_path / "bad.room.json"
        bad.write_text(json.dumps(doc))
        assert main(["validate", str(bad)]) == 1
        assert "duplicate" in capsys.readouterr().err

    def test_non_positive_extent_fails(self, tmp_path, capsys):
        doc = json.loads((FIXTURES / "meeting4.room.json").read_text())
        doc["elements"][0]["extent"] = [0, 1]
        bad = tmp_path / "bad.room.json"
        bad.write_text(json.dumps(doc))
        assert main(["validate", str(bad)]) == 1
        out = capsys.readouterr().out
        assert "non_positive_extent" in out

    def test_aspect_warning_does_not_fail(self, tmp_path, capsys):
        from PIL import Image

        doc = json.loads((FIXTURES / "meeting4.room.json").read_text())
        target = tmp_path / "warn.room.json"
        target.write_text(json.dumps(doc))
        Image.new("L", (1000, 700)).save(tmp_path / "pano_seat_a.png")
        assert main(["validate", str(target)]) == 0
        out = capsys.readouterr().out
        assert "aspect_ratio" in out and "WARNING" in out

    def test_unreadable_file(self, tmp_path, capsys):
        assert main(["validate", str(tmp_path / "missing.room.json")]) == 1

    def test_syntax_error_file(self, tmp_path, capsys):
        bad = tmp_path / "bad.room.json"
        bad.write_text("{nope")
        assert main(["validate", str(bad)]) == 1
        assert "syntax" in capsys.readouterr().err


class TestSimulateAndReplayCommands:
    def test_simulate_writes_report_and_replayable_log(self, tmp_path, capsys):
        scenario_dir = tmp_path / "scn"
        shutil.copytree(FIXTURES / "scenarios", scenario_dir)
        shutil.copy(FIXTURES / "meeting4.room.json", tmp_path / "meeting4.room.json")
        log_path = tmp_path / "sim.log"
        report_path = tmp_path / "report.json"
        rc = main(
            [
                "simulate",
                str(scenario_dir / "convergence.scenario.json"),
                "--log",
                str(log_path),
                "--report",
                str(report_path),
            ]
        )
        assert rc == 0
        report = json.loads(report_path.read_text())
        assert report["seat_denials"] == 0
        assert report["final_digest"]

        capsys.readouterr()
        rc = main(["replay", str(log_path)])
        assert rc == 0
        summary = json.loads(capsys.readouterr().out)
        assert summary["digest"] == report["final_digest"]

    def test_replay_empty_log_needs_manifest(self, tmp_path, capsys):
        empty = tmp_path / "empty.log"
        empty.write_text("")
        assert main(["replay", str(empty)]) == 1
        assert (
            main(["replay", str(empty), "--manifest", str(FIXTURES / "meeting4.room.json")]) == 0
        )

    def test_replay_tampered_log_fails_with_line(self, tmp_path, capsys):
        scenario_dir = tmp_path / "scn"
        shutil.copytree(FIXTURES / "scenarios", scenario_dir)
        shutil.copy(FIXTURES / "meeting4.room.json", tmp_path / "meeting4.room.json")
        log_path = tmp_path / "sim.log"
        main(["simulate", str(scenario_dir / "solo.scenario.json"), "--log", str(log_path)])
        capsys.readouterr()
        lines = log_path.read_bytes().split(b"\n")
        idx = next(i for i, l in enumerate(lines) if l.startswith(b"OUT"))
        lines[idx] = lines[idx].replace(b"seat_a", b"seat_b")
        log_path.write_bytes(b"\n".join(lines))
        assert main(["replay", str(log_path)]) == 1
        err = capsys.readouterr().err
        assert f"line {idx + 1}" in err

    def test_simulate_bad_scenario(self, tmp_path, capsys):
        bad = tmp_path / "bad.scenario.json"
        bad.write_text("{}")
        assert main(["simulate", str(bad)]) == 1
