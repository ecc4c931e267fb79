import csv
import json
from pathlib import Path

import numpy as np
import pytest
from scipy import stats

from elmkit.cli import EXIT_CONFIG, EXIT_DIVERGED, EXIT_GRADCHECK, EXIT_OK, load_config, main
from elmkit.tasks import read_dataset
from elmkit.training import load_checkpoint

TEACHER = {"kind": "teacher", "teacher": {"channels": 8}, "train_ms": 5000, "test_ms": 2000,
           "sample_ms": 500}
ADDING = {"kind": "adding", "channels": 4, "n_train": 60, "n_test": 40, "digit_ms": 100}


def write_config(tmp_path, name="cfg.json", **blocks):
    path = tmp_path / name
    path.write_text(json.dumps(blocks))
    return path


def test_gen_writes_format_and_is_reproducible(tmp_path, capsys):
    cfg = write_config(tmp_path, task=TEACHER, seed=3)
    assert main(["gen", "--config", str(cfg), "--out", str(tmp_path / "a")]) == EXIT_OK
    summary = json.loads(capsys.readouterr().out)
    assert summary["task"] == "teacher" and summary["channels"] == 8
    assert main(["gen", "--config", str(cfg), "--out", str(tmp_path / "b")]) == EXIT_OK
    for name in ("inputs.bin", "targets.bin", "meta.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert (tmp_path / "a" / "config.json").read_bytes() == cfg.read_bytes()


def test_gen_refuses_non_empty_out(tmp_path):
    cfg = write_config(tmp_path, task=TEACHER)
    out = tmp_path / "d"
    out.mkdir()
    (out / "junk").write_text("x")
    assert main(["gen", "--config", str(cfg), "--out", str(out)]) == EXIT_CONFIG
    assert main(["gen", "--config", str(cfg), "--out", str(out), "--force"]) == EXIT_OK
    assert not (out / "junk").exists()


def test_gen_adding_class_histogram(tmp_path, capsys):
    n = 1000
    cfg = write_config(tmp_path, task={**ADDING, "n_train": n, "n_test": 0, "digit_ms": 20, "bin_ms": 10})
    assert main(["gen", "--config", str(cfg), "--out", str(tmp_path / "d")]) == EXIT_OK
    counts = np.array(json.loads(capsys.readouterr().out)["class_counts"])
    p = np.convolve(np.full(10, 0.1), np.full(10, 0.1))
    assert counts.sum() == n
    # joint multinomial goodness of fit; per-class 3-sigma bands are checked at 1e4 draws
    assert stats.chisquare(counts, n * p).pvalue > 1e-3


@pytest.mark.parametrize("blocks", [
    {"task": {**TEACHER, "bogus": 1}},
    {"model": {"d_mm": 3}},
    {"train": {"lr": 0.1}},
    {"extra": {}},
    {"task": {"kind": "nope"}},
    {"model": {"lam": -1}},
    {"seed": -2},
])
def test_config_errors_exit_2(tmp_path, blocks):
    cfg = write_config(tmp_path, **blocks)
    assert main(["train", "--config", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_CONFIG


def test_invalid_json_exit_2(tmp_path):
    cfg = tmp_path / "bad.json"
    cfg.write_text("{not json")
    assert main(["gen", "--config", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_CONFIG


def test_train_shape_mismatch_refused(tmp_path):
    cfg = write_config(tmp_path, task=ADDING, model={"kind": "lif"})
    assert main(["train", "--config", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    assert not (tmp_path / "o").exists()


def test_train_epochs_zero_and_eval(tmp_path, capsys):
    cfg = write_config(tmp_path, task=TEACHER, model={"d_m": 2})
    out = tmp_path / "run"
    assert main(["train", "--config", str(cfg), "--out", str(out), "--epochs", "0", "--quiet"]) == EXIT_OK
    rows = list(csv.DictReader(open(out / "metrics.csv")))
    assert [r["epoch"] for r in rows] == ["0"]
    assert (out / "config.json").read_bytes() == cfg.read_bytes()
    capsys.readouterr()
    assert main(["eval", str(out), "--split", "val"]) == EXIT_OK
    printed = capsys.readouterr().out
    report = json.loads(printed[: printed.index("\n}") + 2])
    _, _, _, meta = load_checkpoint(out)
    assert abs(report["rmse"] - meta["metrics"]["val"]["rmse"]) <= 1e-12
    assert report["rmse"] is not None


def test_train_from_dataset_dir_and_eval_tpr_table(tmp_path, capsys):
    gen_cfg = write_config(tmp_path, "gen.json", task={**TEACHER, "teacher": {"channels": 8, "weight_scale": 20.0}})
    assert main(["gen", "--config", str(gen_cfg), "--out", str(tmp_path / "data")]) == EXIT_OK
    cfg = write_config(tmp_path, data="data", model={"d_m": 2}, train={"epochs": 1, "batch_size": 4})
    out = tmp_path / "run"
    assert main(["train", "--config", str(cfg), "--out", str(out), "--quiet"]) == EXIT_OK
    capsys.readouterr()
    assert main(["eval", str(out), "--data", str(tmp_path / "data"), "--out", str(tmp_path / "r.json")]) == EXIT_OK
    text = capsys.readouterr().out
    assert "fpr       tpr" in text
    report = json.loads((tmp_path / "r.json").read_text())
    assert report["auc"] is not None and report["rmse"] is not None


def test_eval_warns_on_dataset_mismatch(tmp_path):
    cfg = write_config(tmp_path, task=TEACHER, model={"d_m": 2})
    out = tmp_path / "run"
    assert main(["train", "--config", str(cfg), "--out", str(out), "--epochs", "0", "--quiet"]) == EXIT_OK
    other = write_config(tmp_path, "other.json", task=TEACHER, seed=9)
    assert main(["gen", "--config", str(other), "--out", str(tmp_path / "d9")]) == EXIT_OK
    with pytest.warns(UserWarning, match="digest"):
        assert main(["eval", str(out), "--data", str(tmp_path / "d9")]) == EXIT_OK


def test_eval_random_init_adding_near_chance(tmp_path, capsys):
    cfg = write_config(tmp_path, task={**ADDING, "n_train": 20, "n_test": 400}, model={"d_m": 4})
    out = tmp_path / "run"
    assert main(["train", "--config", str(cfg), "--out", str(out), "--epochs", "0", "--quiet"]) == EXIT_OK
    capsys.readouterr()
    assert main(["eval", str(out)]) == EXIT_OK
    acc = json.loads(capsys.readouterr().out)["accuracy"]
    assert abs(acc - 1 / 19) < 0.06


def test_divergent_config_exit_3(tmp_path):
    cfg = write_config(tmp_path, task=TEACHER, model={"lam": 1e6}, train={"epochs": 2, "batch_size": 4})
    out = tmp_path / "run"
    assert main(["train", "--config", str(cfg), "--out", str(out), "--quiet"]) == EXIT_DIVERGED
    assert json.loads((out / "ckpt.json").read_text())["divergent"] is True
    assert (out / "metrics.csv").read_text().startswith("epoch,split")


def test_train_bit_reproducible(tmp_path):
    cfg = write_config(tmp_path, task=TEACHER, model={"d_m": 2}, train={"epochs": 1, "batch_size": 4})
    for name in ("a", "b"):
        assert main(["train", "--config", str(cfg), "--out", str(tmp_path / name), "--quiet"]) == EXIT_OK
    for f in ("ckpt.json", "params.bin", "metrics.csv"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


@pytest.mark.parametrize("kind", ["elm", "lstm", "elm_linear"])
def test_gradcheck_passes(kind, capsys):
    assert main(["gradcheck", "--kind", kind, "--sizes", '{"T": 6}']) == EXIT_OK
    assert json.loads(capsys.readouterr().out)["passed"]


def test_gradcheck_corrupt_fails():
    assert main(["gradcheck", "--kind", "elm", "--sizes", '{"T": 5}', "--corrupt"]) == EXIT_GRADCHECK


def test_gradcheck_lif_flagged(capsys):
    assert main(["gradcheck", "--kind", "lif", "--sizes", '{"T": 5}']) == EXIT_OK
    assert "surrogate used" in json.loads(capsys.readouterr().out)["note"]


def test_gradcheck_bad_sizes():
    assert main(["gradcheck", "--sizes", '{"Q": 1}']) == EXIT_CONFIG


def test_sweep_table(tmp_path, capsys):
    cfg = write_config(tmp_path, task=TEACHER, model={"d_m": 1}, train={"epochs": 1, "batch_size": 4},
                       sweep={"axis": "d_m", "values": [1, 2], "repeats": 2})
    assert main(["sweep", "--config", str(cfg), "--out", str(tmp_path / "s"), "--quiet"]) == EXIT_OK
    rows = list(csv.DictReader(open(tmp_path / "s" / "sweep.csv")))
    assert [r["value"] for r in rows] == ["1", "2"]
    assert all(r["runs"] == "2" and r["divergent"] == "0" for r in rows)
    assert all(r["val_rmse_sd"] != "" for r in rows)


def test_sweep_single_value_and_divergence_count(tmp_path, capsys):
    cfg = write_config(tmp_path, task=TEACHER, train={"epochs": 1, "batch_size": 4},
                       sweep={"axis": "lam", "values": [1e6]})
    assert main(["sweep", "--config", str(cfg), "--out", str(tmp_path / "s"), "--quiet"]) == EXIT_OK
    rows = list(csv.DictReader(open(tmp_path / "s" / "sweep.csv")))
    assert len(rows) == 1 and rows[0]["divergent"] == "1" and rows[0]["val_rmse_mean"] == ""
    assert "1 divergent run(s)" in capsys.readouterr().err


def test_sweep_rejects_unknown_axis(tmp_path):
    cfg = write_config(tmp_path, task=TEACHER, sweep={"axis": "hidden", "values": [1]})
    assert main(["sweep", "--config", str(cfg), "--out", str(tmp_path / "s")]) == EXIT_CONFIG


def test_generated_dataset_readable(tmp_path):
    cfg = write_config(tmp_path, task={"kind": "recall", "length": 30, "delay": 10, "cue_steps": 3,
                                       "n_train": 10, "n_test": 5})
    assert main(["gen", "--config", str(cfg), "--out", str(tmp_path / "d")]) == EXIT_OK
    ds = read_dataset(tmp_path / "d")
    assert ds.inputs.shape == (15, 30, 8) and ds.n_classes == 4


@pytest.mark.parametrize("path", sorted((Path(__file__).parents[1] / "scripts" / "configs").glob("*.json")),
                         ids=lambda p: p.stem)
def test_shipped_configs_parse(path):
    cfg = load_config(path)
    assert cfg["raw"] == json.loads(path.read_text())
