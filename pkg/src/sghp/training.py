"""Deterministic mini-batch training with Adam, gradient clipping and early stopping."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import time
import zlib
from dataclasses import asdict, dataclass, field, fields
from typing import Callable

import numpy as np

from .data import Dataset, EventSequence
from .diffcore import AdamState, adam_step, clip_global_norm, evaluate
from .model import ModelConfig, ModelParams, draw_noise, parameter_count, sequence_loss

log = logging.getLogger(__name__)

# independent random streams derived from the master seed
_INIT, _TRAIN_NOISE, _SHUFFLE, _EVAL_NOISE = 0, 1, 2, 3


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 32
    max_epochs: int = 200
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    patience: int = 10
    seed: int = 0
    clip_norm: float | None = 5.0
    dim: int = 16
    num_samples: int = 10
    use_squared_distance: bool = True
    include_self_term: bool = True
    loss_per_sample: bool = False

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.patience < 0:
            raise ValueError("patience must be >= 0")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown training options: {sorted(unknown)}")
        return cls(**d)

    def model_config(self, num_types: int, covariate_dim: int = 0) -> ModelConfig:
        return ModelConfig(num_types, self.dim, covariate_dim, self.num_samples,
                           self.use_squared_distance, self.include_self_term, self.loss_per_sample)


@dataclass
class TrainReport:
    train_losses: list[float] = field(default_factory=list)
    val_losses: list[float] = field(default_factory=list)
    epoch_seconds: list[float] = field(default_factory=list)
    best_epoch: int = -1
    parameter_count: int = 0

    @property
    def epochs_run(self) -> int:
        return len(self.train_losses)

    def to_json(self, include_timing: bool = True) -> str:
        d = asdict(self)
        if not include_timing:
            d.pop("epoch_seconds")
        return json.dumps(d, indent=2) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["epoch", "train_loss", "val_loss"])
        for e, (tr, va) in enumerate(zip(self.train_losses, self.val_losses)):
            w.writerow([e, repr(tr), repr(va)])
        return buf.getvalue()


def _content_key(seq: EventSequence) -> int:
    return zlib.crc32(seq.types.tobytes() + seq.times.tobytes())


def eval_noise(seq: EventSequence, cfg: ModelConfig, seed: int) -> np.ndarray:
    """Evaluation noise keyed by the sequence content, so it does not depend on dataset order."""
    rng = np.random.default_rng([seed, _EVAL_NOISE, _content_key(seq)])
    return draw_noise(rng, len(seq) - 1, cfg)


def evaluate_loss(ds: Dataset, params: ModelParams, seed: int = 0) -> float:
    """Mean per-sequence loss under fixed evaluation noise; parameters are untouched."""
    if len(ds) == 0:
        raise ValueError("empty dataset")
    cfg = params.config
    losses = []
    for seq in ds:
        _, root = sequence_loss(seq, params, cfg, eval_noise(seq, cfg, seed))
        losses.append(float(root.value))
    return math.fsum(losses) / len(losses)


def _check_compatible(ds: Dataset, K: int, C: int, what: str):
    if ds.num_types != K or ds.covariate_dim != C:
        raise ValueError(f"{what} dataset has K={ds.num_types}, C={ds.covariate_dim}; expected K={K}, C={C}")


def train(train_ds: Dataset, val_ds: Dataset | None, cfg: TrainConfig,
          params: ModelParams | None = None,
          on_epoch: Callable[[int, float, float], None] | None = None) -> tuple[ModelParams, TrainReport]:
    """Fit the model; returns the parameters of the best validation epoch.

    Sequences shorter than two events carry no prediction target and are
    skipped. Without a usable validation set, the epoch training loss is used
    for model selection.
    """
    K, C = train_ds.num_types, train_ds.covariate_dim
    if val_ds is not None:
        _check_compatible(val_ds, K, C, "validation")
    seqs = [s for s in train_ds if len(s) >= 2]
    if not seqs:
        raise TrainingError("sequence too short: no training sequence has two or more events")
    val = None
    if val_ds is not None:
        kept = [s for s in val_ds if len(s) >= 2]
        val = Dataset(tuple(kept), K, C) if kept else None

    mcfg = cfg.model_config(K, C)
    if params is None:
        params = ModelParams.init(mcfg, seed=(cfg.seed, _INIT))
    elif params.config != mcfg:
        raise ValueError("initial parameters do not match the training configuration")
    state = AdamState(lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.eps)
    report = TrainReport(parameter_count=parameter_count(mcfg))
    best_params, best_loss, since_best = params, math.inf, 0
    n = len(seqs)

    for epoch in range(cfg.max_epochs):
        t0 = time.perf_counter()
        order = np.random.default_rng([cfg.seed, _SHUFFLE, epoch]).permutation(n)
        epoch_losses = []
        for b, start in enumerate(range(0, n, cfg.batch_size)):
            rng = np.random.default_rng([cfg.seed, _TRAIN_NOISE, epoch, b])
            total = {k: np.zeros_like(a) for k, a in params.arrays.items()}
            batch_loss = []
            for i in order[start:start + cfg.batch_size]:
                seq = seqs[i]
                tape, root = sequence_loss(seq, params, mcfg, draw_noise(rng, len(seq) - 1, mcfg))
                value, grads = evaluate(tape, root)
                batch_loss.append(value)
                for k in total:
                    total[k] += grads[k]
            if not all(math.isfinite(v) for v in batch_loss) or not all(
                    np.all(np.isfinite(g)) for g in total.values()):
                raise TrainingError(f"non-finite loss in epoch {epoch}, batch {b}")
            total, _ = clip_global_norm(total, cfg.clip_norm)
            arrays, state = adam_step(params.arrays, total, state)
            params = ModelParams(mcfg, arrays)
            epoch_losses.extend(batch_loss)
        if not params.is_finite():
            raise TrainingError(f"non-finite parameters after epoch {epoch}")

        train_loss = math.fsum(epoch_losses) / n
        sel_loss = evaluate_loss(val, params, cfg.seed) if val is not None else train_loss
        report.train_losses.append(train_loss)
        report.val_losses.append(sel_loss)
        report.epoch_seconds.append(time.perf_counter() - t0)
        log.info("epoch %d train %.5f val %.5f", epoch, train_loss, sel_loss)
        if on_epoch is not None:
            on_epoch(epoch, train_loss, sel_loss)

        if sel_loss < best_loss:
            best_loss, best_params, since_best = sel_loss, params, 0
            report.best_epoch = epoch
        else:
            since_best += 1
            if since_best > cfg.patience:
                break

    return best_params, report
