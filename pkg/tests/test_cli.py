import json

from sghp import cli
from sghp.cli import main
from sghp.data import load_dataset
from sghp.evaluation import KernelGrid
from sghp.model import ModelParams

FAST = ["--epochs", "2", "--dim", "4", "--samples", "2", "--batch-size", "8"]


def simulate(out, *extra):
    return main(["simulate", "--spec", "appendix-a", "--n", "30", "--horizon", "20", "--seed", "3",
                 "--out", str(out), *extra])


def test_simulate_is_byte_identical(tmp_path):
    assert simulate(tmp_path / "a") == 0
    assert simulate(tmp_path / "b") == 0
    a, b = (tmp_path / d / "dataset.jsonl" for d in "ab")
    assert a.read_bytes() == b.read_bytes()
    assert len(load_dataset(a)) == 30
    cfg = json.loads((tmp_path / "a" / "simulate_config.json").read_text())
    assert cfg["seed"] == 3 and cfg["simulation"]["num_sequences"] == 30


def test_full_pipeline(tmp_path, capsys):
    assert simulate(tmp_path) == 0
    data = str(tmp_path / "dataset.jsonl")
    assert main(["train", "--data", data, "--seed", "3", "--out", str(tmp_path), *FAST]) == 0
    ckpt = tmp_path / "checkpoint.json"
    params = ModelParams.load(ckpt)
    assert params.config.dim == 4
    report = json.loads((tmp_path / "train_report.json").read_text())
    assert len(report["train_losses"]) == 2
    assert main(["evaluate", "--data", data, "--checkpoint", str(ckpt), "--truth", "appendix-a",
                 "--seed", "3", "--out", str(tmp_path)]) == 0
    metrics = json.loads((tmp_path / "metrics.json").read_text())
    assert {"rmse", "f1_micro", "baseline_rmse", "aps", "recovery"} <= set(metrics)
    assert len(metrics["recovery"]) == 4
    assert main(["export-kernels", "--checkpoint", str(ckpt), "--truth", "appendix-a",
                 "--pairs", "0,0;1,1", "--out", str(tmp_path)]) == 0
    for pair in [(0, 0), (1, 1)]:
        g = KernelGrid.from_csv((tmp_path / f"kernel_{pair[0]}_{pair[1]}.csv").read_text(), pair)
        assert len(g.grid) == 161 and g.truth is not None
    assert not (tmp_path / "kernel_0_1.csv").exists()


def test_train_is_byte_identical(tmp_path):
    assert simulate(tmp_path) == 0
    data = str(tmp_path / "dataset.jsonl")
    for d in "ab":
        assert main(["train", "--data", data, "--out", str(tmp_path / d), *FAST]) == 0
    assert (tmp_path / "a" / "checkpoint.json").read_bytes() == (tmp_path / "b" / "checkpoint.json").read_bytes()
    assert (tmp_path / "a" / "train_losses.csv").read_bytes() == (tmp_path / "b" / "train_losses.csv").read_bytes()


def test_train_on_single_short_sequence_fails(tmp_path, capsys):
    data = tmp_path / "one.jsonl"
    data.write_text('{"num_types": 2, "covariate_dim": 0}\n{"events":[{"k":0,"t":1.0}]}\n')
    rc = main(["train", "--data", str(data), "--out", str(tmp_path / "out"), *FAST])
    err = capsys.readouterr().err.strip()
    assert rc != 0
    assert "sequence too short" in err
    assert err.count("\n") == 0 and err.split(":")[0] == "training_error"
    assert not (tmp_path / "out" / "checkpoint.json").exists()


def test_validate(tmp_path, capsys):
    good = tmp_path / "good.jsonl"
    good.write_text('{"num_types": 2}\n{"events":[{"k":0,"t":1.0},{"k":1,"t":2.0}]}\n')
    assert main(["validate", "--data", str(good), "--out", str(tmp_path)]) == 0
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"num_types": 2}\n{"events":[{"k":0,"t":2.0},{"k":1,"t":1.0}]}\n')
    assert main(["validate", "--data", str(bad), "--out", str(tmp_path)]) == 1
    err = capsys.readouterr().err
    assert err.startswith("invalid_dataset:") and "non-monotone" in err


def test_invalid_dataset_for_train(tmp_path, capsys):
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"num_types": 2}\n{"events":[{"k":3,"t":1.0}]}\n')
    assert main(["train", "--data", str(bad), "--out", str(tmp_path)]) == 1
    assert capsys.readouterr().err.startswith("dataset_error:")


def test_unstable_spec_reported(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"simulation": {"truncation": 50.0}}))
    assert main(["simulate", "--config", str(cfg), "--n", "2", "--out", str(tmp_path / "o")]) == 1
    assert capsys.readouterr().err.startswith("unstable_spec:")
    assert not (tmp_path / "o" / "dataset.jsonl").exists()


def test_config_errors(tmp_path, capsys):
    assert main(["simulate", "--config", str(tmp_path / "missing.json")]) == 1
    assert capsys.readouterr().err.startswith("config_error:")
    cfg = tmp_path / "cfg.json"
    cfg.write_text('{"bogus": {}}')
    assert main(["simulate", "--config", str(cfg)]) == 1
    assert capsys.readouterr().err.startswith("config_error:")
    assert main(["train", "--out", str(tmp_path)]) == 1
    assert "io.dataset is required" in capsys.readouterr().err


def test_flags_override_config(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"seed": 1, "simulation": {"num_sequences": 5, "horizon": 10.0}}))
    assert main(["simulate", "--config", str(cfg), "--n", "4", "--out", str(tmp_path)]) == 0
    eff = json.loads((tmp_path / "simulate_config.json").read_text())
    assert eff["simulation"]["num_sequences"] == 4 and eff["simulation"]["horizon"] == 10.0
    assert eff["seed"] == 1


def test_partial_outputs_removed(tmp_path, capsys, monkeypatch):
    def broken(self):
        raise OSError("disk full")

    monkeypatch.setattr(cli.HawkesSpec, "dumps", broken)
    assert simulate(tmp_path) == 1  # dataset.jsonl is written before spec.json fails
    assert capsys.readouterr().err.strip() == "io_error: disk full"
    assert not (tmp_path / "dataset.jsonl").exists()


def test_bad_pair_rejected(tmp_path, capsys):
    assert simulate(tmp_path) == 0
    assert main(["train", "--data", str(tmp_path / "dataset.jsonl"), "--out", str(tmp_path), *FAST]) == 0
    rc = main(["export-kernels", "--checkpoint", str(tmp_path / "checkpoint.json"), "--pairs", "0,0;0,5",
               "--out", str(tmp_path / "k")])
    assert rc == 1
    assert capsys.readouterr().err.startswith("invalid_value:")
    assert not (tmp_path / "k" / "kernel_0_0.csv").exists()
