import json
import math
import os

import pytest
from conftest import area_sketch, make_scene, path_sketch, straight_sketch

from sketchrun.cli import main
from sketchrun.control import ControlParams
from sketchrun.formats import save_params, save_scene, save_sketch

PARAMS = ControlParams()


@pytest.fixture
def workdir(tmp_path):
    scene = make_scene(start=(0.5, 0.5, 0.0))
    save_scene(tmp_path / "scene.json", scene)
    save_sketch(tmp_path / "straight.json", straight_sketch((0.5, 0.5), 0.4))
    a, b = (1.0, 2.0), (1.4, 2.0)
    ang = math.radians(-88.0)
    c = (b[0] + 0.4 * math.cos(ang), b[1] + 0.4 * math.sin(ang))
    save_sketch(tmp_path / "corner.json", path_sketch([a, b, c]))
    save_sketch(tmp_path / "area.json", area_sketch(1.0, 1.0, 2.0, 2.0))
    save_params(tmp_path / "params.json", PARAMS)
    return tmp_path


def run_cli(*argv):
    import io
    import sys
    out, err = io.StringIO(), io.StringIO()
    old = sys.stdout, sys.stderr
    sys.stdout, sys.stderr = out, err
    try:
        code = main(list(argv))
    except SystemExit as exc:
        code = exc.code
    finally:
        sys.stdout, sys.stderr = old
    return code, out.getvalue(), err.getvalue()


def test_plan_straight_fixture(workdir):
    code, out, _ = run_cli("plan", "--sketch", str(workdir / "straight.json"),
                           "--scene", str(workdir / "scene.json"))
    assert code == 0
    lines = [l for l in out.splitlines() if l.strip()]
    assert len(lines) == 2  # header + one segment
    assert "forward" in lines[1]


def test_plan_corner_fixture_turn_n90(workdir):
    code, out, _ = run_cli("plan", "--sketch", str(workdir / "corner.json"),
                           "--scene", str(workdir / "scene.json"), "--format", "structured")
    assert code == 0
    doc = json.loads(out)
    assert doc["segments"][1]["action"] == "turn_n90"


def test_plan_area_fixture_lane_count(workdir):
    code, out, _ = run_cli("plan", "--sketch", str(workdir / "area.json"),
                           "--scene", str(workdir / "scene.json"))
    assert code == 0
    assert "cover_area" in out
    row = out.splitlines()[1]
    assert row.split()[-1] == "4"  # serpentine lanes


def test_plan_validation_failure_exit_1(workdir, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"schema_version": 1, "kind": "sketch"}')
    code, _, err = run_cli("plan", "--sketch", str(bad), "--scene", str(workdir / "scene.json"))
    assert code == 1
    assert "validation" in err


def test_unknown_flag_is_error(workdir):
    code, _, _ = run_cli("plan", "--sketch", str(workdir / "straight.json"),
                         "--scene", str(workdir / "scene.json"), "--bogus")
    assert code == 1


def test_help_lists_defaults():
    code, out, _ = run_cli("--help")
    assert code == 0
    assert "0.5 m" in out and "30 deg" in out and "0.05 m" in out
    assert "0.30 m" in out and "1.00 m" in out


def test_run_writes_trial_and_summary(workdir, tmp_path):
    out_file = tmp_path / "trial.json"
    code, out, _ = run_cli("run", "--sketch", str(workdir / "straight.json"),
                           "--scene", str(workdir / "scene.json"),
                           "--out", str(out_file))
    assert code == 0
    assert "ftcr=True" in out
    doc = json.loads(out_file.read_text())
    assert doc["kind"] == "trial"
    assert len([e for e in doc["events"] if e["type"] == "step"]) == 8


def test_run_structured_deterministic(workdir):
    args = ("run", "--sketch", str(workdir / "straight.json"),
            "--scene", str(workdir / "scene.json"), "--seed", "5",
            "--noise", "0.004,0.004,0.8", "--format", "structured")
    code1, out1, _ = run_cli(*args)
    code2, out2, _ = run_cli(*args)
    assert code1 == code2 == 0
    assert out1 == out2


def test_batch_and_report_round_trip(tmp_path):
    out = tmp_path / "results.json"
    code, stdout, stderr = run_cli(
        "batch", "--scenes", "Bedroom", "--categories", "Short",
        "--trials", "3", "--seed", "7", "--noise", "0.002,0.002,0.5",
        "--jobs", "1", "--out", str(out))
    assert code == 0
    assert "trials=3" in stdout
    code, rep, _ = run_cli("report", str(out))
    assert code == 0
    assert "Bedroom" in rep
    code, csv_rep, _ = run_cli("report", str(out), "--csv")
    assert code == 0
    assert "scene," in csv_rep


def test_batch_reproducible_across_jobs(tmp_path):
    a = tmp_path / "a.json"
    b = tmp_path / "b.json"
    base = ("batch", "--scenes", "Kitchen", "--categories", "Short", "--trials", "4",
            "--seed", "11", "--noise", "0.002,0.002,0.5")
    assert run_cli(*base, "--jobs", "1", "--out", str(a))[0] == 0
    assert run_cli(*base, "--jobs", "2", "--out", str(b))[0] == 0
    assert a.read_bytes() == b.read_bytes()


def test_gen_outputs_named_files(tmp_path):
    out_dir = tmp_path / "data"
    code, out, _ = run_cli("gen", "--category", "Long", "--scene-type", "Corridor",
                           "--seed", "3", "--count", "2", "--out-dir", str(out_dir))
    assert code == 0
    files = sorted(os.listdir(out_dir))
    assert len([f for f in files if f.startswith("scene-")]) == 2
    assert len([f for f in files if f.startswith("sketch-")]) == 2


def test_gen_long_category_has_six_plus_corners(tmp_path):
    from sketchrun.formats import load_scene, load_sketch
    from sketchrun.geometry import stroke_corner_count

    out_dir = tmp_path / "data"
    assert run_cli("gen", "--category", "Long", "--scene-type", "Bedroom",
                   "--seed", "20", "--count", "3", "--out-dir", str(out_dir))[0] == 0
    for name in os.listdir(out_dir):
        if not name.startswith("sketch-"):
            continue
        sketch = load_sketch(out_dir / name)
        scene = load_scene(out_dir / name.replace("sketch-", "scene-"))
        world = scene.scale.to_world(sketch.strokes[0].points)
        assert stroke_corner_count(world, PARAMS) >= 6
