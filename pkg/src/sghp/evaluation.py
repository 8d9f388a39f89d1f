"""Last-event prediction metrics and triggering-kernel recovery."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .data import Dataset
from .hawkes import HawkesSpec
from .model import ModelParams, learned_kernel, predict_sequence
from .training import eval_noise

DEFAULT_GRID = np.round(np.arange(0.0, 8.0 + 1e-9, 0.05), 10)


@dataclass
class LastEventPredictions:
    gap_true: np.ndarray
    gap_pred: np.ndarray
    type_true: np.ndarray
    type_pred: np.ndarray
    type_probs: np.ndarray
    prev_type: np.ndarray


def last_event_predictions(ds: Dataset, params: ModelParams, seed: int = 0) -> LastEventPredictions:
    """Predict each sequence's final event from the full preceding history."""
    rows = []
    for n, seq in enumerate(ds):
        if len(seq) < 2:
            raise ValueError(f"sequence too short: sequence {n} has {len(seq)} event(s)")
        pred = predict_sequence(seq, params, eval_noise(seq, params.config, seed))
        probs = pred.type_probs[-1]
        rows.append((seq.times[-1] - seq.times[-2], pred.gap_mean[-1], seq.types[-1],
                     int(np.argmax(probs)), probs, seq.types[-2]))
    cols = list(zip(*rows)) if rows else [[]] * 6
    return LastEventPredictions(np.array(cols[0], dtype=float), np.array(cols[1], dtype=float),
                                np.array(cols[2], dtype=int), np.array(cols[3], dtype=int),
                                np.array(cols[4]), np.array(cols[5], dtype=int))


def rmse(pred, truth) -> float:
    pred, truth = np.asarray(pred, dtype=float), np.asarray(truth, dtype=float)
    return float(np.sqrt(np.mean((pred - truth) ** 2)))


def f1_micro(pred, truth, num_types: int | None = None) -> float:
    """Micro-averaged F1 from pooled per-class counts."""
    pred, truth = np.asarray(pred), np.asarray(truth)
    if pred.size == 0:
        raise ValueError("no predictions")
    classes = np.arange(num_types) if num_types else np.union1d(pred, truth)
    tp = sum(int(np.sum((pred == c) & (truth == c))) for c in classes)
    fp = sum(int(np.sum((pred == c) & (truth != c))) for c in classes)
    fn = sum(int(np.sum((pred != c) & (truth == c))) for c in classes)
    return 2 * tp / (2 * tp + fp + fn) if tp else 0.0


def rmse_last_event(ds: Dataset, params: ModelParams, seed: int = 0) -> float:
    p = last_event_predictions(ds, params, seed)
    return rmse(p.gap_pred, p.gap_true)


def f1_micro_last_event(ds: Dataset, params: ModelParams, seed: int = 0) -> float:
    p = last_event_predictions(ds, params, seed)
    f1 = f1_micro(p.type_pred, p.type_true, ds.num_types)
    assert math.isclose(f1, float(np.mean(p.type_pred == p.type_true)), abs_tol=1e-12)
    return f1


def average_precision(scores: Iterable[tuple[float, int]]) -> float:
    """Area under the precision-recall step curve, thresholds at distinct scores."""
    pairs = list(scores)
    s = np.array([p[0] for p in pairs], dtype=float)
    y = np.array([p[1] for p in pairs], dtype=int)
    n_pos = int(y.sum())
    if n_pos == 0:
        raise ValueError("average precision needs at least one positive label")
    order = np.argsort(-s, kind="mergesort")
    s, y = s[order], y[order]
    tp = np.cumsum(y)
    fp = np.cumsum(1 - y)
    # keep the last index of every run of tied scores
    last = np.r_[np.nonzero(np.diff(s))[0], len(s) - 1]
    precision = tp[last] / (tp[last] + fp[last])
    recall = tp[last] / n_pos
    return float(np.sum(np.diff(np.r_[0.0, recall]) * precision))


# -- baselines -----------------------------------------------------------------------------


def per_type_mean_gap(ds: Dataset) -> np.ndarray:
    """Mean gap following an event of each type (overall mean for unseen types)."""
    prev, gaps = [], []
    for seq in ds:
        prev.append(seq.types[:-1])
        gaps.append(np.diff(seq.times))
    prev, gaps = np.concatenate(prev), np.concatenate(gaps)
    overall = float(gaps.mean())
    return np.array([gaps[prev == k].mean() if np.any(prev == k) else overall
                     for k in range(ds.num_types)])


def constant_baseline_rmse(train_ds: Dataset, test_ds: Dataset) -> float:
    means = per_type_mean_gap(train_ds)
    truth = np.array([s.times[-1] - s.times[-2] for s in test_ds])
    pred = np.array([means[s.types[-2]] for s in test_ds])
    return rmse(pred, truth)


# -- kernel recovery ----------------------------------------------------------------------


@dataclass
class KernelGrid:
    pair: tuple[int, int]
    grid: np.ndarray
    learned: np.ndarray
    truth: np.ndarray | None = None

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["time", "learned"] + (["truth"] if self.truth is not None else []))
        for i, t in enumerate(self.grid):
            row = [repr(float(t)), repr(float(self.learned[i]))]
            if self.truth is not None:
                row.append(repr(float(self.truth[i])))
            w.writerow(row)
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, pair: tuple[int, int]) -> "KernelGrid":
        rows = list(csv.reader(io.StringIO(text)))
        header, body = rows[0], rows[1:]
        cols = {name: np.array([float(r[i]) for r in body]) for i, name in enumerate(header)}
        return cls(pair, cols["time"], cols["learned"], cols.get("truth"))


@dataclass
class RecoveryRow:
    pair: tuple[int, int]
    linf: float
    learned_peak: float
    truth_peak: float
    learned_degenerate: bool = False


def peak_normalize(values: np.ndarray) -> np.ndarray | None:
    m = float(np.max(values))
    return None if m <= 0 else values / m


def compare_curves(grid, learned, truth, pair=(0, 0)) -> RecoveryRow:
    grid = np.asarray(grid, dtype=float)
    tn = peak_normalize(np.asarray(truth, dtype=float))
    if tn is None:
        raise ValueError(f"true kernel {pair} is zero on the whole grid")
    ln = peak_normalize(np.asarray(learned, dtype=float))
    truth_peak = float(grid[np.argmax(tn)])  # argmax returns the first (smallest-time) maximum
    if ln is None:
        return RecoveryRow(pair, math.inf, math.nan, truth_peak, learned_degenerate=True)
    return RecoveryRow(pair, float(np.max(np.abs(ln - tn))), float(grid[np.argmax(ln)]), truth_peak)


def kernel_recovery(params: ModelParams, truth: HawkesSpec, grid=DEFAULT_GRID) -> list[RecoveryRow]:
    """Peak-normalised L-infinity distance between learned and true kernels, per type pair."""
    K = params.config.num_types
    if truth.num_types != K:
        raise ValueError(f"truth has {truth.num_types} types, model has {K}")
    grid = np.asarray(grid, dtype=float)
    if np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be strictly ascending")
    return [compare_curves(grid, learned_kernel(u, v, grid, params), truth.kernels[u][v](grid), (u, v))
            for u in range(K) for v in range(K)]


def export_kernel_grids(params: ModelParams, pairs: Sequence[tuple[int, int]] | None = None,
                        grid=DEFAULT_GRID, truth: HawkesSpec | None = None,
                        normalize: bool = False) -> list[KernelGrid]:
    K = params.config.num_types
    if pairs is None:
        pairs = [(u, v) for u in range(K) for v in range(K)]
    grid = np.asarray(grid, dtype=float)
    out = []
    for u, v in pairs:
        if not (0 <= u < K and 0 <= v < K):
            raise IndexError(f"pair {(u, v)} out of range for K={K}")
        learned = learned_kernel(u, v, grid, params)
        true = truth.kernels[u][v](grid) if truth is not None else None
        if normalize:
            learned = peak_normalize(learned)
            true = None if true is None else peak_normalize(true)
        out.append(KernelGrid((u, v), grid.copy(), learned, true))
    return out


def metrics_report(rmse_value: float, f1_value: float, baseline_rmse: float | None = None,
                   aps: float | None = None, recovery: list[RecoveryRow] | None = None) -> str:
    doc = {"rmse": rmse_value, "f1_micro": f1_value}
    if baseline_rmse is not None:
        doc["baseline_rmse"] = baseline_rmse
    if aps is not None:
        doc["aps"] = aps
    if recovery is not None:
        doc["recovery"] = [{"pair": list(r.pair), "linf": r.linf, "learned_peak": r.learned_peak,
                            "truth_peak": r.truth_peak, "learned_degenerate": r.learned_degenerate}
                           for r in recovery]
    return json.dumps(doc, indent=2) + "\n"
