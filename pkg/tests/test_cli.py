import json
import subprocess
import sys

import pytest

from qfe.cli import _floats, run_cli
from qfe.dataset import read_dataset
from qfe.noise import StochasticModel, product_fidelity


def _gen(tmp_path, name="d.jsonl", *extra):
    out = str(tmp_path / name)
    argv = ["generate", "--grid", "3x3", "--depth", "1", "--count", "40", "--palette", "clifford", "--seed", "5",
            "--noise", "stochastic", "--model", "2", "--out", out, *extra]
    assert run_cli(argv) == 0
    return out


def test_generate_is_byte_identical(tmp_path):
    a = _gen(tmp_path, "a.jsonl")
    b = _gen(tmp_path, "b.jsonl")
    assert open(a, "rb").read() == open(b, "rb").read()
    ds = read_dataset(a)
    assert len(ds.records) == 40 and ds.config.labeler is None


def test_generate_with_labels_and_config_precedence(tmp_path):
    cfg = tmp_path / "gen.json"
    cfg.write_text(json.dumps({"rows": 2, "cols": 2, "depth": 3, "count": 7, "palette": "full", "master_seed": 1}))
    out = str(tmp_path / "g.jsonl")
    assert run_cli(["generate", "--config", str(cfg), "--count", "4", "--noise", "sim",
                    "--labeler", "exact-density", "--out", out]) == 0
    ds = read_dataset(out)
    assert (ds.config.rows, ds.config.depth, ds.config.count, ds.config.master_seed) == (2, 3, 4, 1)
    assert all(r.label_kind == "exact-density" for r in ds.records)


def test_label_is_deterministic_and_defaults(tmp_path):
    src = _gen(tmp_path)
    outs = []
    for k in range(2):
        outs.append(str(tmp_path / f"l{k}.jsonl"))
        assert run_cli(["label", "--in", src, "--out", outs[-1], "--noise", "stochastic", "--model", "3"]) == 0
    assert open(outs[0], "rb").read() == open(outs[1], "rb").read()
    ds = read_dataset(outs[0])
    m = StochasticModel.numbered(3)
    assert all(r.label_kind == "product-model" and r.label == product_fidelity(r.circuit, m) for r in ds.records)


def test_train_predict_evaluate_pipeline(tmp_path):
    data = str(tmp_path / "lab.jsonl")
    assert run_cli(["label", "--in", _gen(tmp_path), "--out", data, "--noise", "stochastic", "--model", "2"]) == 0
    ckpt = str(tmp_path / "m.npz")
    assert run_cli(["train", "--data", data, "--model", "lc2d-3x3", "--epochs", "2", "--batch-size", "8",
                    "--lr", "0.001", "--val-count", "10", "--out", ckpt]) == 0
    log = json.load(open(ckpt + ".log.json"))
    assert log["param_count"] == 27857 and len(log["val_mse"]) == 2
    preds = str(tmp_path / "p.csv")
    assert run_cli(["predict", "--checkpoint", ckpt, "--data", data, "--out", preds]) == 0
    lines = open(preds).read().splitlines()
    assert lines[0].startswith("# config_digest: ") and lines[1] == "index,prediction,label" and len(lines) == 42
    assert run_cli(["evaluate", "--predictions", preds, "--thresholds", "0.5:1.0:0.05",
                    "--out-dir", str(tmp_path / "ev")]) == 0
    result = json.load(open(tmp_path / "ev" / "eval.json"))
    assert -1 <= result["kendall_tau"] <= 1
    assert (tmp_path / "ev" / "eval_scores.csv").exists() and (tmp_path / "ev" / "eval_heatmap.csv").exists()

    base = str(tmp_path / "b.json")
    assert run_cli(["train", "--data", data, "--model", "gate-count", "--out", base]) == 0
    assert run_cli(["predict", "--checkpoint", base, "--data", data, "--out", str(tmp_path / "pb.csv")]) == 0


def test_evaluate_perfect_predictions(tmp_path, capsys):
    path = tmp_path / "p.csv"
    path.write_text("index,prediction,label\n" + "".join(f"{i},{v},{v}\n" for i, v in enumerate([0.5, 0.7, 0.9, 0.6])))
    assert run_cli(["evaluate", "--predictions", str(path), "--out-dir", str(tmp_path / "e")]) == 0
    assert "kendall_tau 1.000000" in capsys.readouterr().out
    assert json.load(open(tmp_path / "e" / "eval.json"))["kendall_tau"] == 1.0


def test_error_exit_codes(tmp_path, capsys):
    assert run_cli(["generate", "--grid", "three", "--out", "x"]) == 2
    assert run_cli(["frobnicate"]) == 2
    assert run_cli(["label", "--in", str(tmp_path / "missing.jsonl"), "--out", str(tmp_path / "o")]) == 1
    assert "cannot read dataset" in capsys.readouterr().err
    assert run_cli(["generate", "--grid", "4x3", "--count", "1", "--noise", "sim", "--labeler", "exact-density",
                    "--out", str(tmp_path / "x.jsonl")]) == 1
    assert "limit of 10" in capsys.readouterr().err
    bad = tmp_path / "bad.csv"
    bad.write_text("index,prediction\n0,0.5\n")
    assert run_cli(["evaluate", "--predictions", str(bad), "--out-dir", str(tmp_path)]) == 1
    junk = tmp_path / "junk.npz"
    junk.write_bytes(b"not a zip")
    assert run_cli(["predict", "--checkpoint", str(junk), "--data", _gen(tmp_path), "--out", str(tmp_path / "p")]) == 1
    assert run_cli(["train", "--data", _gen(tmp_path, "deep.jsonl", "--depth", "2"), "--model", "lc2d-3x3",
                    "--out", str(tmp_path / "m.npz")]) == 1
    assert "single-moment" in capsys.readouterr().err


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "qfe.cli", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    for cmd in ("generate", "label", "train", "predict", "evaluate", "report"):
        assert cmd in proc.stdout


@pytest.mark.parametrize("text,expected", [("0.9:1.0:0.05", [0.9, 0.95, 1.0]), ("0.1,0.5", [0.1, 0.5])])
def test_threshold_parsing(text, expected):
    assert _floats(text) == expected
