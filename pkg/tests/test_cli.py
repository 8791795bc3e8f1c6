import json
import subprocess
import sys

import pytest

from mvhe.cli import main
from mvhe.harness import METHODS


@pytest.fixture
def data_dir(tmp_path):
    out = tmp_path / "data"
    assert main(["synth", "--classes", "5", "--views", "3", "--per-class", "12", "--seed", "7",
                 "--ambient-dim", "10", "--out", str(out)]) == 0
    return out


def strip_timings(doc):
    if isinstance(doc, dict):
        return {k: strip_timings(v) for k, v in doc.items() if k != "timings"}
    if isinstance(doc, list):
        return [strip_timings(v) for v in doc]
    return doc


def test_synth_bit_identical(tmp_path, data_dir):
    again = tmp_path / "again"
    main(["synth", "--classes", "5", "--views", "3", "--per-class", "12", "--seed", "7",
          "--ambient-dim", "10", "--out", str(again)])
    files = sorted(p.name for p in data_dir.iterdir())
    assert "manifest.json" in files and len(files) == 6
    for name in files:
        assert (data_dir / name).read_bytes() == (again / name).read_bytes()


def test_eval_default_hyperparameters(tmp_path, data_dir):
    out = tmp_path / "report.json"
    code = main(["eval", "--data", str(data_dir / "manifest.json"), "--method", "mvhe", "--d", "5",
                 "--lambda1", "0.01", "--lambda2", "0.05", "--p1", "1", "--p2", "15", "--beta", "0.1",
                 "--seed", "1", "--repeats", "2", "--out", str(out)])
    assert code == 0
    doc = json.loads(out.read_text())
    assert len(doc["pairwise_accuracy"]) == 6
    assert doc["config"]["params"] == {"lambda1": 0.01, "lambda2": 0.05, "p1": 1, "p2": 15,
                                       "beta": 0.1, "d": 5}
    assert doc["config"]["repeats"] == 2 and doc["config"]["train_fraction"] == 0.5


def test_unknown_method_usage_error(tmp_path, data_dir, capsys):
    code = main(["eval", "--data", str(data_dir / "manifest.json"), "--method", "lda",
                 "--out", str(tmp_path / "r.json")])
    assert code == 2
    err = capsys.readouterr().err
    assert all(m in err for m in METHODS)
    assert not (tmp_path / "r.json").exists()


def test_missing_data_source_is_usage_error(tmp_path, capsys):
    assert main(["eval", "--out", str(tmp_path / "r.json")]) == 2
    assert "--data" in capsys.readouterr().err


def test_runtime_error_is_phase_stamped(tmp_path, data_dir, capsys):
    out = tmp_path / "r.json"
    code = main(["eval", "--data", str(data_dir / "manifest.json"), "--d", "500", "--repeats", "1",
                 "--out", str(out)])
    assert code == 1
    assert "[fit]" in capsys.readouterr().err
    assert not out.exists()


def test_config_file_flags_win(tmp_path, data_dir):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"method": "pls", "d": 2, "repeats": 1, "seed": 3}))
    out = tmp_path / "r.json"
    assert main(["--config", str(cfg), "eval", "--data", str(data_dir / "manifest.json"),
                 "--d", "3", "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["method"] == "pls" and doc["config"]["params"]["d"] == 3 and doc["seed"] == 3


@pytest.mark.parametrize("argv", [
    ["fit", "--method", "mvhe", "--d", "4", "--pca-dim", "8"],
    ["eval", "--method", "kmvhe", "--d", "4", "--repeats", "2"],
    ["eval", "--method", "cca", "--d", "3", "--pca-dim", "5", "--repeats", "1"],
])
def test_commands_deterministic(tmp_path, data_dir, argv):
    docs = []
    for i in range(2):
        out = tmp_path / f"r{i}.json"
        assert main(argv + ["--data", str(data_dir / "manifest.json"), "--out", str(out)]) == 0
        docs.append(strip_timings(json.loads(out.read_text())))
    assert docs[0] == docs[1]


def test_fit_writes_model(tmp_path, data_dir):
    out = tmp_path / "model.json"
    assert main(["fit", "--data", str(data_dir / "manifest.json"), "--d", "3", "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["model"]["type"] == "linear" and len(doc["model"]["per_view_W"]) == 3


def test_sweep(tmp_path, data_dir):
    out = tmp_path / "sweep.json"
    grid = json.dumps({"lambda1": [0.01, 0.1], "d": [3]})
    assert main(["sweep", "--data", str(data_dir / "manifest.json"), "--grid", grid, "--folds", "3",
                 "--p2", "5", "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert len(doc["scores"]) == 2 and doc["best_params"]["d"] == 3


def test_robustness_csv(tmp_path, data_dir):
    out, csv_path = tmp_path / "rob.json", tmp_path / "rob.csv"
    assert main(["robustness", "--data", str(data_dir / "manifest.json"), "--d", "3", "--repeats", "1",
                 "--fractions", "0,0.2", "--out", str(out), "--csv", str(csv_path)]) == 0
    doc = json.loads(out.read_text())
    assert [r["permute_fraction"] for r in doc["reports"]] == [0.0, 0.2]
    lines = csv_path.read_text().splitlines()
    assert lines[0].startswith("method,gallery,probe,fraction") and len(lines) == 1 + 12


def test_ablation_command(tmp_path, data_dir):
    out = tmp_path / "abl.json"
    assert main(["ablation", "--data", str(data_dir / "manifest.json"), "--d", "3", "--repeats", "1",
                 "--out", str(out)]) == 0
    assert len(json.loads(out.read_text())["variants"]) == 7


def test_thread_env_and_entry_point(tmp_path, data_dir):
    out = tmp_path / "r.json"
    env = {"MVHE_THREADS": "1", "PATH": "/usr/bin:/bin"}
    proc = subprocess.run([sys.executable, "-m", "mvhe.cli", "eval", "--data", str(data_dir / "manifest.json"),
                           "--d", "3", "--repeats", "1", "--out", str(out)],
                          capture_output=True, text=True, env=env)
    assert proc.returncode == 0, proc.stderr
    assert json.loads(out.read_text())["macc"] >= 0


def test_bad_flag_exit_2(capsys):
    assert main(["eval", "--bogus"]) == 2
    assert len(capsys.readouterr().err.strip().splitlines()) == 1
