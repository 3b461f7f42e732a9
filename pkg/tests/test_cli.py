import json
import shutil

import pytest

from storyscale.cli import RunConfig, main

STORY = {
    "identity": "a dog",
    "expressions": [
        "springing toward a frisbee",
        "on a porch swing with pillows",
        "chasing autumn leaves",
        "splashing in a lake",
    ],
}


@pytest.fixture
def story_file(tmp_path):
    path = tmp_path / "story.json"
    path.write_text(json.dumps(STORY), encoding="utf-8")
    return path


def _manifest(run_dir):
    return json.loads((run_dir / "manifest.json").read_text(encoding="utf-8"))


def test_generate_writes_run(tmp_path, story_file):
    out = tmp_path / "run"
    code = main(["generate", "--story", str(story_file), "--out", str(out), "--seed", "1"])
    assert code == 0
    assert sorted(p.name for p in out.glob("story_*.ppm")) == [
        "story_1.ppm", "story_2.ppm", "story_3.ppm", "story_4.ppm",
    ]
    manifest = _manifest(out)
    assert len(manifest["images"]) == 4
    assert (out / "timings.json").exists()
    assert manifest["timings_path"] == "timings.json"


def test_generate_rerun_identical(tmp_path, story_file):
    out = tmp_path / "run"
    argv = ["generate", "--story", str(story_file), "--out", str(out), "--seed", "1"]
    assert main(argv) == 0
    snapshot = {
        name: (out / name).read_bytes()
        for name in ("story_1.ppm", "story_2.ppm", "story_3.ppm", "story_4.ppm", "manifest.json")
    }
    assert main(argv) == 0
    for name, data in snapshot.items():
        assert (out / name).read_bytes() == data


def test_generate_ablation_baseline(tmp_path, story_file):
    out = tmp_path / "baseline"
    code = main([
        "generate", "--story", str(story_file), "--out", str(out),
        "--no-ipr", "--no-asi", "--no-sga", "--seed", "1",
    ])
    assert code == 0
    manifest = _manifest(out)
    echo = manifest["config"]
    assert echo["ipr"] is False and echo["asi"] is False and echo["sga"] is False
    assert manifest["alpha_records"] == []


def test_generate_invalid_lambda(tmp_path, story_file, capsys):
    code = main([
        "generate", "--story", str(story_file), "--out", str(tmp_path / "x"),
        "--lambda", "1.5",
    ])
    assert code != 0
    assert "error:" in capsys.readouterr().err


def test_generate_missing_story(tmp_path, capsys):
    code = main(["generate", "--out", str(tmp_path / "x")])
    assert code != 0
    assert "error:" in capsys.readouterr().err


def test_config_file_with_flag_override(tmp_path, story_file):
    config_path = tmp_path / "config.json"
    config_path.write_text(json.dumps({
        "story": str(story_file),
        "seed": 3,
        "lambda": 0.6,
        "batch_size": 4,
    }), encoding="utf-8")
    out = tmp_path / "run"
    code = main(["generate", "--config", str(config_path), "--out", str(out),
                 "--lambda", "0.85"])
    assert code == 0
    echo = _manifest(out)["config"]
    assert echo["lambda"] == 0.85  # flag wins over file
    assert echo["seed"] == 3  # file value survives


def test_manifest_config_roundtrip(tmp_path, story_file):
    out = tmp_path / "run"
    assert main(["generate", "--story", str(story_file), "--out", str(out),
                 "--seed", "2", "--cfg-scale", "2.5", "--early-steps", "2,3"]) == 0
    echo = _manifest(out)["config"]
    rebuilt = RunConfig.from_dict(echo)
    assert rebuilt.to_dict() == echo


def test_sweep_two_points(tmp_path, story_file):
    out = tmp_path / "sweep"
    code = main(["sweep", "--story", str(story_file), "--out", str(out),
                 "--seed", "1", "--sweep", "0,0.85"])
    assert code == 0
    assert (out / "sweep_0" / "manifest.json").exists()
    assert (out / "sweep_0.85" / "manifest.json").exists()
    summary = json.loads((out / "sweep_summary.json").read_text(encoding="utf-8"))
    assert [row["lambda"] for row in summary["sweep"]] == [0.0, 0.85]
    # at lambda 0 every follower's conditional alpha is exactly 0
    manifest = _manifest(out / "sweep_0")
    follower_alphas = [
        row["alpha"] for row in manifest["alpha_records"]
        if row["branch"] == "cond" and row["sample"] > 0
    ]
    assert follower_alphas and all(a == 0.0 for a in follower_alphas)


def test_sweep_default_grid(tmp_path, story_file):
    out = tmp_path / "sweep"
    code = main(["sweep", "--story", str(story_file), "--out", str(out), "--seed", "1"])
    assert code == 0
    dirs = sorted(p.name for p in out.iterdir() if p.is_dir())
    assert dirs == ["sweep_0.6", "sweep_0.7", "sweep_0.8", "sweep_0.85", "sweep_0.9"]


def test_sweep_validation(tmp_path, story_file, capsys):
    assert main(["sweep", "--story", str(story_file), "--out", str(tmp_path / "s"),
                 "--sweep", ""]) != 0
    assert main(["sweep", "--story", str(story_file), "--out", str(tmp_path / "s"),
                 "--sweep", "0.5,1.2"]) != 0
    capsys.readouterr()


def test_evaluate_scores_bypass(capsys):
    code = main(["evaluate", "--scores", "0.8732,0.9267,0.1834,0.8089"])
    assert code == 0
    assert capsys.readouterr().out.strip() == "0.8538"


def test_evaluate_scores_other_rows(capsys):
    assert main(["evaluate", "--scores", "0.8942,0.9117,0.1993,0.7687"]) == 0
    assert capsys.readouterr().out.strip() == "0.8395"
    assert main(["evaluate", "--scores", "0.8836,0.8955,0.2780,0.6965"]) == 0
    assert capsys.readouterr().out.strip() == "0.7891"
    assert main(["evaluate", "--scores", "1,2,3"]) != 0


def test_evaluate_run_directory(tmp_path, story_file):
    out = tmp_path / "run"
    assert main(["generate", "--story", str(story_file), "--out", str(out), "--seed", "1"]) == 0
    code = main(["evaluate", str(out)])
    assert code == 0
    report = json.loads((out / "report.json").read_text(encoding="utf-8"))
    assert set(report["scores"]) == {"clip_t", "clip_i", "dreamsim", "dino", "s_h"}
    assert report["dreamsim_proxy"] is True


def test_evaluate_identical_copies(tmp_path, story_file):
    src = tmp_path / "run"
    assert main(["generate", "--story", str(story_file), "--out", str(src), "--seed", "1"]) == 0
    copies = tmp_path / "copies"
    copies.mkdir()
    for i in range(1, 5):
        shutil.copy(src / "story_1.ppm", copies / f"story_{i}.ppm")
    code = main(["evaluate", str(copies), "--story", str(story_file)])
    assert code == 0
    report = json.loads((copies / "report.json").read_text(encoding="utf-8"))
    assert report["scores"]["clip_i"] == pytest.approx(1.0, abs=1e-12)
    assert report["scores"]["dino"] == pytest.approx(1.0, abs=1e-12)


def test_evaluate_compare_two_runs(tmp_path, story_file):
    out_a = tmp_path / "a"
    out_b = tmp_path / "b"
    assert main(["generate", "--story", str(story_file), "--out", str(out_a), "--seed", "1"]) == 0
    assert main(["generate", "--story", str(story_file), "--out", str(out_b), "--seed", "2"]) == 0
    code = main(["evaluate", "--compare", str(out_a), str(out_b)])
    assert code == 0
    report = json.loads((out_a / "compare_report.json").read_text(encoding="utf-8"))
    assert "a" in report and "b" in report and "difference" in report


def test_evaluate_needs_input(capsys):
    assert main(["evaluate"]) != 0
    capsys.readouterr()


def test_golden_check(tmp_path, story_file, capsys):
    out = tmp_path / "run"
    assert main(["generate", "--story", str(story_file), "--out", str(out), "--seed", "1"]) == 0
    assert main(["golden-check", "--out", str(out)]) == 0
    # corrupt one image and re-check
    target = out / "story_2.ppm"
    data = bytearray(target.read_bytes())
    data[-1] ^= 0xFF
    target.write_bytes(bytes(data))
    assert main(["golden-check", "--out", str(out)]) == 1
    assert "digest mismatch" in capsys.readouterr().err


def test_golden_check_missing_manifest(tmp_path, capsys):
    assert main(["golden-check", "--out", str(tmp_path)]) != 0
    capsys.readouterr()


def test_temperature_flag(tmp_path, story_file):
    out = tmp_path / "run"
    code = main(["generate", "--story", str(story_file), "--out", str(out),
                 "--seed", "1", "--temperature", "0.5"])
    assert code == 0
    assert _manifest(out)["config"]["temperature"] == 0.5


def test_custom_schedule_flag(tmp_path, story_file):
    out = tmp_path / "run"
    code = main(["generate", "--story", str(story_file), "--out", str(out),
                 "--seed", "1", "--schedule", "1x1,2x2,4x4", "--early-steps", "2,3"])
    assert code == 0
    assert _manifest(out)["config"]["schedule"] == [[1, 1], [2, 2], [4, 4]]


def test_evaluate_with_mask_files(tmp_path, story_file):
    import numpy as np

    out = tmp_path / "run"
    assert main(["generate", "--story", str(story_file), "--out", str(out), "--seed", "1"]) == 0
    manifest = _manifest(out)
    size = 8 * 8  # latent 8x8 at upscale 8 -> 64x64 masks
    for row in manifest["images"]:
        idx = row["prompt_index"]
        gray = np.full((64, 64), 255, dtype=np.uint8)
        gray[:32] = 0  # top half is background
        (out / f"mask_{idx}.pgm").write_bytes(b"P5\n64 64\n255\n" + gray.tobytes())
    assert main(["evaluate", str(out)]) == 0
    report = json.loads((out / "report.json").read_text(encoding="utf-8"))
    assert report["masked_identity"] is True
