"""Event sequences, datasets, the line-delimited dataset file format, and splits."""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field
from typing import IO, Iterator, NamedTuple, Sequence

import numpy as np


class DatasetError(ValueError):
    """Raised for malformed or invalid dataset content."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class Event(NamedTuple):
    type_index: int
    timestamp: float
    covariates: tuple[float, ...] | None = None


@dataclass(frozen=True, eq=False)
class EventSequence:
    """A single ordered event sequence stored column-wise.

    ``types`` is an int array of shape (L,), ``times`` a float array of
    absolute timestamps, and ``covariates`` either None or an (L, C) array.
    """

    types: np.ndarray
    times: np.ndarray
    covariates: np.ndarray | None = None

    def __post_init__(self):
        types = np.asarray(self.types, dtype=np.int64).reshape(-1)
        times = np.asarray(self.times, dtype=np.float64).reshape(-1)
        if types.shape != times.shape:
            raise DatasetError("types and times differ in length")
        cov = self.covariates
        if cov is not None:
            cov = np.asarray(cov, dtype=np.float64)
            if cov.ndim != 2 or cov.shape[0] != len(times):
                raise DatasetError("covariates must have shape (L, C)")
            cov.setflags(write=False)
        types.setflags(write=False)
        times.setflags(write=False)
        object.__setattr__(self, "types", types)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "covariates", cov)

    @classmethod
    def from_events(cls, events: Sequence[Event | tuple]) -> "EventSequence":
        events = [Event(*e) for e in events]
        cov = None
        if events and events[0].covariates is not None:
            cov = np.array([e.covariates for e in events], dtype=np.float64)
        return cls(
            np.array([e.type_index for e in events], dtype=np.int64),
            np.array([e.timestamp for e in events], dtype=np.float64),
            cov,
        )

    def __len__(self) -> int:
        return len(self.times)

    def __iter__(self) -> Iterator[Event]:
        for i in range(len(self)):
            z = None if self.covariates is None else tuple(self.covariates[i].tolist())
            yield Event(int(self.types[i]), float(self.times[i]), z)

    @property
    def events(self) -> list[Event]:
        return list(self)

    @property
    def gaps(self) -> np.ndarray:
        """Inter-arrival times t_{j+1} - t_j, length L - 1."""
        return np.diff(self.times)

    def prefix(self, n: int) -> "EventSequence":
        cov = None if self.covariates is None else self.covariates[:n]
        return EventSequence(self.types[:n], self.times[:n], cov)

    def __eq__(self, other) -> bool:
        if not isinstance(other, EventSequence):
            return NotImplemented
        if (self.covariates is None) != (other.covariates is None):
            return False
        same = np.array_equal(self.types, other.types) and np.array_equal(
            self.times, other.times, equal_nan=True
        )
        if same and self.covariates is not None:
            same = np.array_equal(self.covariates, other.covariates, equal_nan=True)
        return bool(same)

    __hash__ = None


@dataclass(frozen=True)
class Dataset:
    """A collection of sequences sharing a type count and covariate width.

    Construction does not validate; use :func:`validate` or build through
    :func:`parse_dataset`.
    """

    sequences: tuple[EventSequence, ...]
    num_types: int
    covariate_dim: int = 0
    time_unit: str = ""

    def __post_init__(self):
        object.__setattr__(self, "sequences", tuple(self.sequences))

    def __len__(self) -> int:
        return len(self.sequences)

    def __iter__(self) -> Iterator[EventSequence]:
        return iter(self.sequences)

    def __getitem__(self, i: int) -> EventSequence:
        return self.sequences[i]

    def subset(self, indices: Sequence[int]) -> "Dataset":
        return Dataset(
            tuple(self.sequences[i] for i in indices),
            self.num_types,
            self.covariate_dim,
            self.time_unit,
        )

    @property
    def total_events(self) -> int:
        return sum(len(s) for s in self.sequences)


# -- validation -------------------------------------------------------------


class SequenceCheck(NamedTuple):
    index: int
    ok: bool
    reason: str | None = None


@dataclass
class ValidationReport:
    checks: list[SequenceCheck] = field(default_factory=list)
    error: str | None = None  # dataset-level problem (bad header, empty dataset)

    @property
    def ok(self) -> bool:
        return self.error is None and all(c.ok for c in self.checks)

    @property
    def failures(self) -> list[SequenceCheck]:
        return [c for c in self.checks if not c.ok]

    def summary(self) -> str:
        lines = []
        if self.error:
            lines.append(f"dataset: FAIL ({self.error})")
        for c in self.checks:
            lines.append(f"sequence {c.index}: " + ("pass" if c.ok else f"FAIL ({c.reason})"))
        return "\n".join(lines)


def check_sequence(seq: EventSequence, num_types: int, covariate_dim: int) -> str | None:
    """Return the first violated invariant of ``seq``, or None."""
    if len(seq) == 0:
        return "empty sequence"
    t = seq.times
    if not np.all(np.isfinite(t)):
        return "non-finite timestamp"
    if np.any(t < 0):
        return "negative timestamp"
    if np.any((seq.types < 0) | (seq.types >= num_types)):
        return "type index out of range"
    dt = np.diff(t)
    if np.any(dt < 0):
        return "non-monotone timestamps"
    if np.any(dt == 0):
        return "tied timestamps"
    if covariate_dim == 0:
        if seq.covariates is not None:
            return "inconsistent covariate length"
    else:
        if seq.covariates is None or seq.covariates.shape[1] != covariate_dim:
            return "inconsistent covariate length"
        if not np.all(np.isfinite(seq.covariates)):
            return "non-finite covariate"
    return None


def validate(ds: Dataset) -> ValidationReport:
    report = ValidationReport()
    if not isinstance(ds.num_types, int) or ds.num_types < 1:
        report.error = "num_types must be a positive integer"
    elif not isinstance(ds.covariate_dim, int) or ds.covariate_dim < 0:
        report.error = "covariate_dim must be a nonnegative integer"
    if report.error is None:
        for i, seq in enumerate(ds.sequences):
            reason = check_sequence(seq, ds.num_types, ds.covariate_dim)
            report.checks.append(SequenceCheck(i, reason is None, reason))
    return report


# -- file format --------------------------------------------------------------


def _as_text(source) -> IO[str]:
    if isinstance(source, (bytes, bytearray)):
        return io.StringIO(bytes(source).decode("utf-8"))
    if isinstance(source, str):
        return io.StringIO(source)
    if isinstance(source, io.TextIOBase):
        return source
    return io.TextIOWrapper(source, encoding="utf-8")


def _header(line: str) -> tuple[int, int, str]:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise DatasetError(f"malformed header: {exc.msg}", 1) from None
    if not isinstance(obj, dict):
        raise DatasetError("malformed header: expected an object", 1)
    k = obj.get("num_types")
    c = obj.get("covariate_dim", 0)
    if not isinstance(k, int) or isinstance(k, bool) or k < 1:
        raise DatasetError("malformed header: num_types must be a positive integer", 1)
    if not isinstance(c, int) or isinstance(c, bool) or c < 0:
        raise DatasetError("malformed header: covariate_dim must be a nonnegative integer", 1)
    return k, c, str(obj.get("time_unit", ""))


def _record(line: str, lineno: int, covariate_dim: int) -> EventSequence:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise DatasetError(f"malformed record: {exc.msg}", lineno) from None
    events = obj.get("events") if isinstance(obj, dict) else None
    if not isinstance(events, list):
        raise DatasetError("malformed record: missing 'events' list", lineno)
    types, times, covs = [], [], []
    for ev in events:
        if not isinstance(ev, dict) or "k" not in ev or "t" not in ev:
            raise DatasetError("malformed record: event needs 'k' and 't'", lineno)
        k, t = ev["k"], ev["t"]
        if not isinstance(k, int) or isinstance(k, bool):
            raise DatasetError("malformed record: 'k' must be an integer", lineno)
        if not isinstance(t, (int, float)) or isinstance(t, bool):
            raise DatasetError("malformed record: 't' must be a number", lineno)
        types.append(k)
        times.append(float(t))
        if covariate_dim:
            z = ev.get("z")
            if not isinstance(z, list) or len(z) != covariate_dim:
                raise DatasetError("inconsistent covariate length", lineno)
            covs.append([float(v) for v in z])
        elif "z" in ev:
            raise DatasetError("inconsistent covariate length", lineno)
    cov = np.array(covs, dtype=np.float64).reshape(len(events), covariate_dim) if covariate_dim else None
    return EventSequence(np.array(types, dtype=np.int64), np.array(times, dtype=np.float64), cov)


def read_records(source) -> tuple[Dataset, list[int]]:
    """Structural parse only; returns the dataset and each sequence's line number."""
    fh = _as_text(source)
    header = None
    sequences, lines = [], []
    for lineno, line in enumerate(fh, start=1):
        if not line.strip():
            continue
        if header is None:
            header = _header(line)
            continue
        sequences.append(_record(line, lineno, header[1]))
        lines.append(lineno)
    if header is None:
        raise DatasetError("missing header line", 1)
    k, c, unit = header
    return Dataset(tuple(sequences), k, c, unit), lines


def parse_dataset(source) -> Dataset:
    """Parse and validate a dataset from bytes, text, or a binary/text stream."""
    ds, lines = read_records(source)
    report = validate(ds)
    if report.error:
        raise DatasetError(report.error)
    for check in report.failures:
        raise DatasetError(check.reason, lines[check.index])
    return ds


def _fmt(x: float) -> str:
    # repr gives the shortest string that round-trips exactly
    return repr(float(x))


def write_dataset(ds: Dataset) -> bytes:
    out = [json.dumps({"num_types": ds.num_types, "covariate_dim": ds.covariate_dim,
                       "time_unit": ds.time_unit})]
    for seq in ds.sequences:
        parts = []
        for i in range(len(seq)):
            item = f'{{"k":{int(seq.types[i])},"t":{_fmt(seq.times[i])}'
            if ds.covariate_dim:
                item += ',"z":[' + ",".join(_fmt(v) for v in seq.covariates[i]) + "]"
            parts.append(item + "}")
        out.append('{"events":[' + ",".join(parts) + "]}")
    return ("\n".join(out) + "\n").encode("utf-8")


def load_dataset(path) -> Dataset:
    with open(path, "rb") as fh:
        return parse_dataset(fh.read())


def save_dataset(ds: Dataset, path) -> None:
    with open(path, "wb") as fh:
        fh.write(write_dataset(ds))


# -- splitting ----------------------------------------------------------------


def split_dataset(ds: Dataset, ratios=(0.8, 0.1, 0.1), seed: int = 0) -> tuple[Dataset, Dataset, Dataset]:
    """Partition whole sequences into train/val/test.

    Validation and test sizes are floor(n * ratio); the remainder goes to train.
    """
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or any(r < 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"split ratios must be three nonnegative numbers summing to 1, got {ratios}")
    n = len(ds)
    if n == 0:
        raise ValueError("cannot split an empty dataset")
    n_val = math.floor(n * ratios[1] + 1e-9)
    n_test = math.floor(n * ratios[2] + 1e-9)
    order = np.random.default_rng(seed).permutation(n)
    n_train = n - n_val - n_test
    return (
        ds.subset(sorted(order[:n_train].tolist())),
        ds.subset(sorted(order[n_train:n_train + n_val].tolist())),
        ds.subset(sorted(order[n_train + n_val:].tolist())),
    )
