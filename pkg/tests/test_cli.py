import json

import numpy as np
import pytest

from echodiet.cli import DEFAULTS, main
from echodiet.formats import read_audio, read_dataset, read_profile, read_timeline
from echodiet.labels import CLASSES
from helpers import run_pipeline, write_inputs


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    return run_pipeline(tmp_path_factory.mktemp("pipe"))


def test_simulate_outputs(pipeline):
    audio = read_audio(pipeline / "sim" / "a" / "audio.mspc")
    assert audio.n_channels == 2 and audio.sample_rate == 50_000
    assert audio.duration_s == pytest.approx(48.0)
    truth = read_timeline(pipeline / "sim" / "a" / "truth.csv")
    assert len(truth) == 48 and truth[7] == "food_intake"
    manifest = json.loads((pipeline / "sim" / "a" / "manifest.json").read_text())
    assert manifest["command"] == "simulate" and manifest["config"]["seed"] == 0
    assert set(manifest["outputs"]) == {"audio.mspc", "truth.csv"}


def test_process_outputs(pipeline):
    diff = read_profile(pipeline / "proc" / "a" / "diff.msep")
    echo = read_profile(pipeline / "proc" / "a" / "echo.msep")
    assert diff.n_range_bins == echo.n_range_bins == 150
    assert echo.data.shape[-1] == 48 * 83 and diff.data.shape[-1] == 48 * 83 - 1


def test_dataset_and_train_outputs(pipeline):
    samples = read_dataset(pipeline / "ds" / "data.msds")
    assert {s.group for s in samples} == {"a", "b"}
    assert samples[0].tensor.shape == (4, 150, 166)
    out = pipeline / "train"
    for g in "ab":
        for name in (f"model_{g}.msmd", f"trainlog_{g}.jsonl", f"predictions_{g}.csv",
                     f"metrics_{g}.json", f"confusion_{g}.png", f"confusion_{g}.csv"):
            assert (out / name).stat().st_size > 0, name
        log = (out / f"trainlog_{g}.jsonl").read_text().splitlines()
        assert len(log) == 2
    header = (out / "predictions_a.csv").read_text().splitlines()[0].split(",")
    assert header == ["start_time_s"] + [f"p_{c}" for c in CLASSES] + ["label"]
    metrics = json.loads((out / "metrics.json").read_text())
    assert set(metrics["folds"]) == {"a", "b"}
    assert np.array(metrics["confusion"]).sum() == len(samples)


def test_report_output(pipeline):
    rep = json.loads((pipeline / "report" / "episodes.json").read_text())
    assert rep["segment_len_s"] == 20 and len(rep["segments"]) == 2


def test_evaluate_matches_train_predictions(pipeline, tmp_path):
    code = main(["evaluate", str(pipeline / "train" / "model_a.msmd"),
                 str(pipeline / "ds" / "data.msds"), str(tmp_path), "--holdout", "a"])
    assert code == 0
    assert ((tmp_path / "predictions.csv").read_text()
            == (pipeline / "train" / "predictions_a.csv").read_text())


def test_pipeline_is_byte_identical(pipeline, tmp_path):
    again = run_pipeline(tmp_path)
    files = sorted(p.relative_to(pipeline) for p in pipeline.rglob("*") if p.is_file())
    assert any(f.suffix == ".png" for f in files)
    for f in files:
        assert (pipeline / f).read_bytes() == (again / f).read_bytes(), f


def test_small_sweep(pipeline, tmp_path):
    sessions = []
    for g in "ab":
        sessions += ["--session", g, str(pipeline / "proc" / g / "diff.msep"),
                     str(pipeline / "sim" / g / "truth.csv")]
    code = main(["--json", "sweep", str(tmp_path), *sessions, "--sweep-windows", "1", "2",
                 "--sweep-ranges-cm", "30", "--epochs", "1", "--no-augment"])
    assert code == 0
    lines = (tmp_path / "sweep.csv").read_text().splitlines()
    assert lines[0] == "window_s,30cm" and len(lines) == 3
    assert (tmp_path / "sweep.png").stat().st_size > 0


def test_json_summary(pipeline, tmp_path, capsys):
    code = main(["--json", "process", str(pipeline / "sim" / "a" / "audio.mspc"), str(tmp_path),
                 "--range-bins", "60"])
    assert code == 0
    out = json.loads(capsys.readouterr().out)
    assert out["shape"][-2] == 60


def test_config_precedence(pipeline, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"range_bins": 40, "profile_mode": "magnitude"}))
    audio = str(pipeline / "sim" / "a" / "audio.mspc")
    assert main(["--config", str(cfg), "process", audio, str(tmp_path / "x")]) == 0
    assert main(["--config", str(cfg), "process", audio, str(tmp_path / "y"), "--range-bins", "70"]) == 0
    mx = json.loads((tmp_path / "x" / "manifest.json").read_text())["config"]
    my = json.loads((tmp_path / "y" / "manifest.json").read_text())["config"]
    assert mx == {"range_bins": 40, "profile_mode": "magnitude"}
    assert my == {"range_bins": 70, "profile_mode": "magnitude"}
    assert read_profile(tmp_path / "y" / "diff.msep").n_range_bins == 70
    assert DEFAULTS["range_bins"] == 150


@pytest.mark.parametrize("argv", [
    ["process", "does-not-exist.mspc", "out"],
    ["process", "AUDIO", "out", "--range-bins", "0"],
    ["process", "AUDIO", "out", "--range-bins", "601"],
    ["--config", "BADCFG", "process", "AUDIO", "out"],
    ["--config", "UNKNOWNCFG", "process", "AUDIO", "out"],
    ["process", "CORRUPT", "out"],
    ["train", "DATASET", "out", "--holdout", "zz"],
    ["bogus-command"],
])
def test_usage_errors_exit_2(pipeline, tmp_path, argv):
    (tmp_path / "bad.json").write_text("{not json")
    (tmp_path / "unknown.json").write_text('{"nope": 1}')
    (tmp_path / "corrupt.mspc").write_bytes(b"MSPC" + b"\0" * 5)
    subst = {"AUDIO": str(pipeline / "sim" / "a" / "audio.mspc"), "BADCFG": str(tmp_path / "bad.json"),
             "UNKNOWNCFG": str(tmp_path / "unknown.json"), "CORRUPT": str(tmp_path / "corrupt.mspc"),
             "DATASET": str(pipeline / "ds" / "data.msds"), "out": str(tmp_path / "out")}
    assert main([subst.get(a, a) for a in argv]) == 2


def test_data_error_exits_3(pipeline, tmp_path):
    # Truth shorter than the predictions' coverage is fine; longer truth is a data error.
    long_truth = tmp_path / "truth.csv"
    rows = ["second,label"] + [f"{i},null" for i in range(500)]
    long_truth.write_text("\n".join(rows) + "\n")
    code = main(["report", str(pipeline / "train" / "predictions_a.csv"), str(long_truth),
                 str(tmp_path / "r.json")])
    assert code == 3


def test_scene_out_of_bounds_exits_3(tmp_path):
    scene, script = write_inputs(tmp_path, 1)
    d = json.loads(scene.read_text())
    d["reflectors"][0]["trajectory"]["range_m"] = 5.0
    scene.write_text(json.dumps(d))
    assert main(["simulate", str(scene), str(script), str(tmp_path / "o")]) == 3


def test_version(capsys):
    with pytest.raises(SystemExit) as e:
        main(["--version"])
    assert e.value.code == 0
