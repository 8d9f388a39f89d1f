"""Command-line entry point: simulate, train, evaluate, export-kernels, validate.

Every subcommand reads an optional JSON config document; flags override it.
The merged configuration is written next to the outputs as
``<subcommand>_config.json``. Failures print one ``error_code: message`` line
to stderr, remove any outputs written so far and exit nonzero.
"""

from __future__ import annotations

import argparse
import copy
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .data import DatasetError, load_dataset, read_records, split_dataset, validate, write_dataset
from .diffcore import DomainError
from .evaluation import (average_precision, constant_baseline_rmse, export_kernel_grids, f1_micro, kernel_recovery,
                         last_event_predictions, metrics_report, rmse)
from .hawkes import HawkesSpec, UnstableSpecError, appendix_a_spec, simulate_dataset
from .model import ModelParams
from .training import TrainConfig, TrainingError, train

DEFAULTS = {
    "seed": 0,
    "simulation": {"spec": "appendix-a", "truncation": 8.0, "num_sequences": 1000,
                   "horizon": 44.0, "min_length": 2},
    "split": {"ratios": [0.8, 0.1, 0.1]},
    "model": {"dim": 16, "num_samples": 10, "use_squared_distance": True,
              "include_self_term": True, "loss_per_sample": False},
    "training": {"batch_size": 32, "max_epochs": 200, "lr": 1e-3, "beta1": 0.9, "beta2": 0.999,
                 "eps": 1e-8, "patience": 10, "clip_norm": 5.0},
    "evaluation": {"grid": [0.0, 8.0, 0.05], "pairs": None, "split": "test", "normalize": False},
    "io": {"dataset": None, "checkpoint": None, "truth": None},
}


class CliError(Exception):
    def __init__(self, code: str, message: str):
        self.code = code
        super().__init__(message)


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def load_config(path: str | None) -> dict:
    if path is None:
        return copy.deepcopy(DEFAULTS)
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise CliError("config_error", f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise CliError("config_error", f"invalid JSON in {path}: {exc}") from None
    unknown = set(doc) - set(DEFAULTS)
    if unknown:
        raise CliError("config_error", f"unknown config sections: {sorted(unknown)}")
    return _merge(DEFAULTS, doc)


def _set(cfg: dict, section: str | None, key: str, value):
    if value is None:
        return
    if section is None:
        cfg[key] = value
    else:
        cfg[section][key] = value


def resolve_spec(name: str, truncation: float) -> HawkesSpec:
    if name == "appendix-a":
        return appendix_a_spec(truncation)
    try:
        return HawkesSpec.loads(Path(name).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise CliError("config_error", f"spec file not found: {name}") from None


def _grid(cfg: dict) -> np.ndarray:
    start, stop, step = cfg["evaluation"]["grid"]
    n = int(round((stop - start) / step)) + 1
    return np.round(start + step * np.arange(n), 12)


def _train_config(cfg: dict) -> TrainConfig:
    return TrainConfig.from_dict({**cfg["training"], **cfg["model"], "seed": cfg["seed"]})


class _Outputs:
    """Tracks written files so they can be removed if the command fails."""

    def __init__(self, out_dir: str):
        self.dir = Path(out_dir)
        self.written: list[Path] = []

    def write(self, name: str, data) -> Path:
        self.dir.mkdir(parents=True, exist_ok=True)
        path = self.dir / name
        self.written.append(path)
        if isinstance(data, bytes):
            path.write_bytes(data)
        else:
            path.write_text(data, encoding="utf-8")
        return path

    def rollback(self):
        for p in self.written:
            p.unlink(missing_ok=True)


def _need(cfg: dict, key: str) -> str:
    path = cfg["io"][key]
    if not path:
        raise CliError("config_error", f"io.{key} is required")
    if not Path(path).exists():
        raise CliError("io_error", f"{key} not found: {path}")
    return path


# -- subcommands ----------------------------------------------------------------------------------


def cmd_simulate(cfg: dict, out: _Outputs):
    sim = cfg["simulation"]
    spec = resolve_spec(sim["spec"], sim["truncation"])
    ds = simulate_dataset(spec, int(sim["num_sequences"]), float(sim["horizon"]), int(cfg["seed"]),
                          min_length=int(sim["min_length"]))
    out.write("dataset.jsonl", write_dataset(ds))
    out.write("spec.json", spec.dumps() + "\n")


def cmd_train(cfg: dict, out: _Outputs):
    ds = load_dataset(_need(cfg, "dataset"))
    tr, va, _ = split_dataset(ds, cfg["split"]["ratios"], cfg["seed"])
    params, report = train(tr, va if len(va) else None, _train_config(cfg))
    out.write("checkpoint.json", params.dumps())
    out.write("train_report.json", report.to_json())
    out.write("train_losses.csv", report.to_csv())


def cmd_evaluate(cfg: dict, out: _Outputs):
    ds = load_dataset(_need(cfg, "dataset"))
    params = ModelParams.load(_need(cfg, "checkpoint"))
    which = cfg["evaluation"]["split"]
    baseline = None
    if which == "test":
        tr, _, te = split_dataset(ds, cfg["split"]["ratios"], cfg["seed"])
        if len(te) == 0:
            raise CliError("config_error", "test split is empty")
        baseline = constant_baseline_rmse(tr, te)
    elif which == "all":
        te = ds
    else:
        raise CliError("config_error", f"evaluation.split must be 'test' or 'all', got {which!r}")
    pred = last_event_predictions(te, params, cfg["seed"])
    recovery = None
    if cfg["io"]["truth"]:
        truth = resolve_spec(cfg["io"]["truth"], cfg["simulation"]["truncation"])
        recovery = kernel_recovery(params, truth, _grid(cfg))
    # one-vs-rest over all (sequence, type) probability cells
    onehot = np.eye(ds.num_types, dtype=int)[pred.type_true]
    aps = average_precision(zip(pred.type_probs.ravel(), onehot.ravel()))
    out.write("metrics.json", metrics_report(rmse(pred.gap_pred, pred.gap_true),
                                             f1_micro(pred.type_pred, pred.type_true, ds.num_types),
                                             baseline, aps, recovery))


def cmd_export_kernels(cfg: dict, out: _Outputs):
    params = ModelParams.load(_need(cfg, "checkpoint"))
    truth = None
    if cfg["io"]["truth"]:
        truth = resolve_spec(cfg["io"]["truth"], cfg["simulation"]["truncation"])
    pairs = cfg["evaluation"]["pairs"]
    pairs = None if pairs is None else [tuple(p) for p in pairs]
    for g in export_kernel_grids(params, pairs, _grid(cfg), truth, cfg["evaluation"]["normalize"]):
        out.write(f"kernel_{g.pair[0]}_{g.pair[1]}.csv", g.to_csv())


def cmd_validate(cfg: dict, out: _Outputs):
    path = _need(cfg, "dataset")
    with open(path, "rb") as fh:
        ds, _ = read_records(fh.read())
    report = validate(ds)
    print(report.summary())
    if not report.ok:
        first = report.error or report.failures[0].reason
        raise CliError("invalid_dataset", f"{len(report.failures)} sequence(s) failed; first: {first}")


COMMANDS = {"simulate": cmd_simulate, "train": cmd_train, "evaluate": cmd_evaluate,
            "export-kernels": cmd_export_kernels, "validate": cmd_validate}


def _parse_pairs(text: str):
    return [[int(x) for x in item.split(",")] for item in text.split(";") if item]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sghp", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config document")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--data", dest="dataset", help="dataset file (io.dataset)")
        p.add_argument("-v", "--verbose", action="store_true")
        if name == "simulate":
            p.add_argument("--spec", help="'appendix-a' or a HawkesSpec JSON file")
            p.add_argument("--n", dest="num_sequences", type=int)
            p.add_argument("--horizon", type=float)
            p.add_argument("--min-length", type=int)
        if name == "train":
            p.add_argument("--epochs", dest="max_epochs", type=int)
            p.add_argument("--batch-size", type=int)
            p.add_argument("--lr", type=float)
            p.add_argument("--patience", type=int)
            p.add_argument("--dim", type=int)
            p.add_argument("--samples", dest="num_samples", type=int)
        if name in ("evaluate", "export-kernels"):
            p.add_argument("--checkpoint")
            p.add_argument("--truth", help="'appendix-a' or a HawkesSpec JSON file")
        if name == "evaluate":
            p.add_argument("--split", choices=["test", "all"])
        if name == "export-kernels":
            p.add_argument("--pairs", type=_parse_pairs, help="e.g. '0,0;1,1'")
            p.add_argument("--normalize", action="store_true", default=None)
    return parser


def effective_config(args: argparse.Namespace) -> dict:
    cfg = load_config(args.config)
    a = vars(args)
    _set(cfg, None, "seed", a.get("seed"))
    _set(cfg, "io", "dataset", a.get("dataset"))
    for key in ("spec", "num_sequences", "horizon", "min_length"):
        _set(cfg, "simulation", key, a.get(key))
    for key in ("max_epochs", "batch_size", "lr", "patience"):
        _set(cfg, "training", key, a.get(key))
    for key in ("dim", "num_samples"):
        _set(cfg, "model", key, a.get(key))
    for key in ("checkpoint", "truth"):
        _set(cfg, "io", key, a.get(key))
    _set(cfg, "evaluation", "split", a.get("split"))
    _set(cfg, "evaluation", "pairs", a.get("pairs"))
    _set(cfg, "evaluation", "normalize", a.get("normalize"))
    return cfg


_ERROR_CODES = [
    (CliError, None), (DatasetError, "dataset_error"), (UnstableSpecError, "unstable_spec"),
    (TrainingError, "training_error"), (DomainError, "domain_error"), (OSError, "io_error"),
    (ValueError, "invalid_value"), (KeyError, "config_error"), (IndexError, "invalid_value"),
]


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    out = _Outputs(args.out)
    try:
        cfg = effective_config(args)
        COMMANDS[args.command](cfg, out)
        if args.command != "validate":
            out.write(f"{args.command.replace('-', '_')}_config.json", json.dumps(cfg, indent=2) + "\n")
    except Exception as exc:
        for cls, code in _ERROR_CODES:
            if isinstance(exc, cls):
                code = code or exc.code
                break
        else:
            raise
        out.rollback()
        message = str(exc).replace("\n", " ")
        print(f"{code}: {message}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
