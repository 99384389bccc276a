import csv
import json

import pytest

from steerbo.cli import EXIT_CONFIG, EXIT_DATA, EXIT_OK, main
from steerbo.bo import RunLog


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


@pytest.fixture(scope="module")
def synth(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "synth.bin"
    assert main(["synth-data", "--frames", "40", "--shape", "6x8", "--seed", "0",
                 "--out", str(path)]) == EXIT_OK
    return path


def test_bo_run_small(tmp_path):
    out = tmp_path / "bo"
    rc = main(["bo-run", "--n-init", "3", "--n-iter", "2", "--runs", "2", "--acq", "lcb,ei",
               "--seed", "7", "--out", str(out)])
    assert rc == EXIT_OK
    logs = sorted(p.name for p in (out / "runs").glob("*.jsonl"))
    assert logs == ["ei_seed7.jsonl", "ei_seed8.jsonl", "lcb_seed7.jsonl", "lcb_seed8.jsonl"]
    for p in (out / "runs").glob("*.jsonl"):
        assert len(RunLog.read_jsonl(p).trials) == 5
    curves = _rows(out / "best_seen.csv")
    assert curves[0] == ["acquisition", "iteration", "mean", "std"]
    assert len(curves) == 1 + 2 * 3
    finals = _rows(out / "final_best_seen.csv")
    assert finals[0] == ["acquisition", "seed", "final_best_seen"]
    assert len(finals) == 1 + 4
    summary = json.loads((out / "summary.json").read_text())
    assert summary["selected_acquisition"] in ("LCB", "EI")
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"] == "bo-run" and len(manifest["config_digest"]) == 16


def test_bo_run_single_log(tmp_path):
    out = tmp_path / "one"
    assert main(["bo-run", "--runs", "1", "--acq", "lcb", "--n-iter", "1",
                 "--out", str(out)]) == EXIT_OK
    assert len(list((out / "runs").glob("*.jsonl"))) == 1


def test_bo_run_rerun_is_byte_identical(tmp_path):
    args = ["bo-run", "--n-init", "3", "--n-iter", "2", "--runs", "2", "--acq", "lcb,mpi"]
    for name in ("a", "b"):
        assert main(args + ["--out", str(tmp_path / name)]) == EXIT_OK
    for f in ("best_seen.csv", "final_best_seen.csv", "summary.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_config_file_and_flag_override(tmp_path):
    conf = tmp_path / "conf.json"
    conf.write_text(json.dumps({"n_init": 2, "n_iter": 1, "runs": 3, "acq": "ei", "seed": 4}))
    out = tmp_path / "o"
    assert main(["bo-run", "--config", str(conf), "--runs", "1", "--out", str(out)]) == EXIT_OK
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"]["runs"] == 1
    assert manifest["config"]["n_init"] == 2
    assert [p.name for p in (out / "runs").glob("*.jsonl")] == ["ei_seed4.jsonl"]


def test_unknown_config_key_is_config_error(tmp_path):
    conf = tmp_path / "conf.json"
    conf.write_text(json.dumps({"n_int": 2}))
    assert main(["bo-run", "--config", str(conf), "--out", str(tmp_path)]) == EXIT_CONFIG


def test_seed_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("STEERBO_SEED", "11")
    out = tmp_path / "env"
    assert main(["bo-run", "--runs", "1", "--acq", "lcb", "--n-init", "2", "--n-iter", "0",
                 "--out", str(out)]) == EXIT_OK
    assert (out / "runs" / "lcb_seed11.jsonl").exists()


def test_bad_acquisition_is_config_error(tmp_path):
    assert main(["bo-run", "--acq", "ucb", "--out", str(tmp_path)]) == EXIT_CONFIG


def test_gradcheck_healthy_build(capsys):
    assert main(["gradcheck"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "FAIL" not in out and out.count("PASS") >= 8


def test_train_honours_caps(tmp_path, synth):
    out = tmp_path / "t"
    rc = main(["train", "--arch", "stlstm", "--data", str(synth), "--epochs", "3",
               "--batch", "50", "--patience", "5", "--seed", "0", "--out", str(out)])
    assert rc == EXIT_OK
    report = json.loads((out / "train_report.json").read_text())
    assert report["epochs_run"] <= 3
    assert len(report["val_mse"]) == report["epochs_run"] + 1
    assert (out / "weights.bin").exists()


def test_evaluate_and_arch_mismatch(tmp_path, synth, capsys):
    train_out = tmp_path / "t"
    assert main(["train", "--arch", "stlstm", "--data", str(synth), "--epochs", "1",
                 "--out", str(train_out)]) == EXIT_OK
    weights = str(train_out / "weights.bin")
    ev = tmp_path / "e"
    assert main(["evaluate", "--weights", f"st={weights}", "--data", str(synth),
                 "--out", str(ev)]) == EXIT_OK
    rows = _rows(ev / "metrics.csv")
    assert rows[1][0] == "st"
    capsys.readouterr()
    assert main(["evaluate", "--weights", weights, "--arch", "pilotnet", "--data", str(synth),
                 "--out", str(ev)]) == EXIT_CONFIG
    assert "stlstm" in capsys.readouterr().err


def test_missing_dataset_is_data_error(tmp_path):
    assert main(["train", "--data", str(tmp_path / "nope.bin"), "--out", str(tmp_path)]) == EXIT_DATA


def test_preprocess_bad_labels_is_data_error(tmp_path):
    (tmp_path / "labels.txt").write_text("a.ppm notanumber\n")
    rc = main(["preprocess", "--images", str(tmp_path), "--labels", str(tmp_path / "labels.txt"),
               "--out", str(tmp_path / "d.bin")])
    assert rc == EXIT_DATA


def test_train_from_bo_summary(tmp_path, synth):
    bo = tmp_path / "bo"
    assert main(["bo-run", "--n-init", "2", "--n-iter", "1", "--runs", "1", "--acq", "lcb",
                 "--out", str(bo)]) == EXIT_OK
    summary = json.loads((bo / "summary.json").read_text())
    best = summary["acquisitions"]["LCB"]["best_config"]
    out = tmp_path / "t"
    assert main(["train", "--data", str(synth), "--hparams", str(bo / "summary.json"),
                 "--epochs", "1", "--out", str(out)]) == EXIT_OK
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"]["hparams"].endswith("summary.json")
    from steerbo.models import read_weights
    meta, _ = read_weights(out / "weights.bin")
    assert meta["meta"]["config"]["learning_rate"] == best["learning_rate"]
