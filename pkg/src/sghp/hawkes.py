"""Ground-truth multivariate Hawkes processes: kernels, Ogata thinning, compensators.

Kernel matrices are indexed ``kernels[i][k]``: the influence of a past type-i
event on the intensity of type k.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import integrate

from .data import Dataset, EventSequence


class UnstableSpecError(ValueError):
    """Branching matrix has spectral radius >= 1 (or an infinite entry)."""


class QuadratureError(ArithmeticError):
    pass


# -- kernels ---------------------------------------------------------------------


class Kernel:
    """Nonnegative triggering kernel on t >= 0 (zero for t < 0)."""

    kind = ""

    def __call__(self, t):
        raise NotImplementedError

    def integral(self, x):
        """Closed-form ``int_0^x phi(s) ds`` (zero for x <= 0)."""
        raise NotImplementedError

    def total(self) -> float:
        raise NotImplementedError

    def sup(self, a, b):
        """Supremum of the kernel over [a, b], elementwise."""
        raise NotImplementedError

    def breakpoints(self) -> list[float]:
        return []

    def integral_quad(self, x: float, rtol: float = 1e-8) -> float:
        """Adaptive quadrature route for ``integral``; raises if it fails to converge."""
        if x <= 0:
            return 0.0
        pts = [p for p in self.breakpoints() if 0 < p < x] or None
        with warnings.catch_warnings():
            warnings.simplefilter("error", integrate.IntegrationWarning)
            try:
                val, err = integrate.quad(self, 0.0, x, epsabs=0.0, epsrel=rtol, points=pts, limit=200)
            except integrate.IntegrationWarning as exc:
                raise QuadratureError(f"{self.kind}: {exc}") from None
        if err > max(rtol * abs(val), 1e-300) * 10:
            raise QuadratureError(f"{self.kind}: error estimate {err:g} above tolerance")
        return val

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class Zero(Kernel):
    kind = "zero"

    def __call__(self, t):
        return np.zeros_like(np.asarray(t, dtype=np.float64))

    def integral(self, x):
        return np.zeros_like(np.asarray(x, dtype=np.float64))

    def total(self):
        return 0.0

    def sup(self, a, b):
        return np.zeros(np.broadcast(np.asarray(a), np.asarray(b)).shape)

    def to_dict(self):
        return {"kind": self.kind}


@dataclass(frozen=True)
class Exponential(Kernel):
    """a * exp(-b t)"""

    a: float
    b: float
    kind = "exponential"

    def __post_init__(self):
        if self.a < 0 or self.b <= 0:
            raise ValueError("exponential kernel needs a >= 0, b > 0")

    def __call__(self, t):
        t = np.asarray(t, dtype=np.float64)
        return np.where(t >= 0, self.a * np.exp(-self.b * np.maximum(t, 0.0)), 0.0)

    def integral(self, x):
        x = np.maximum(np.asarray(x, dtype=np.float64), 0.0)
        return self.a / self.b * -np.expm1(-self.b * x)

    def total(self):
        return self.a / self.b

    def sup(self, a, b):
        a = np.asarray(a, dtype=np.float64)
        b = np.asarray(b, dtype=np.float64)
        return np.where(b >= 0, self(np.maximum(a, 0.0)), 0.0)

    def to_dict(self):
        return {"kind": self.kind, "a": self.a, "b": self.b}


@dataclass(frozen=True)
class ExpMixture(Kernel):
    """sum_m a_m * exp(-b_m t)"""

    terms: tuple[tuple[float, float], ...]
    kind = "exp_mixture"

    def __post_init__(self):
        terms = tuple((float(a), float(b)) for a, b in self.terms)
        object.__setattr__(self, "terms", terms)
        object.__setattr__(self, "_parts", tuple(Exponential(a, b) for a, b in terms))

    def __call__(self, t):
        return sum(p(t) for p in self._parts)

    def integral(self, x):
        return sum(p.integral(x) for p in self._parts)

    def total(self):
        return sum(p.total() for p in self._parts)

    def sup(self, a, b):
        # every term is non-increasing, so the sum is too
        return sum(p.sup(a, b) for p in self._parts)

    def to_dict(self):
        return {"kind": self.kind, "terms": [list(t) for t in self.terms]}


def _powlaw_antiderivative(t, shift, exponent):
    # G(t) with G' = t (shift + t)^exponent
    u = shift + t
    if exponent == -1.0:
        return t - shift * np.log(u)
    if exponent == -2.0:
        return np.log(u) + shift / u
    return u ** (exponent + 2) / (exponent + 2) - shift * u ** (exponent + 1) / (exponent + 1)


@dataclass(frozen=True)
class PowerLawProduct(Kernel):
    """c * t * (shift + t)^exponent on [0, cutoff] (cutoff None means unbounded)."""

    c: float
    shift: float
    exponent: float
    cutoff: float | None = None
    kind = "power_law_product"

    def __post_init__(self):
        if self.c < 0 or self.shift <= 0:
            raise ValueError("power-law kernel needs c >= 0, shift > 0")
        if self.cutoff is not None and self.cutoff <= 0:
            raise ValueError("cutoff must be positive")

    @property
    def _end(self) -> float:
        return math.inf if self.cutoff is None else float(self.cutoff)

    def __call__(self, t):
        t = np.asarray(t, dtype=np.float64)
        inside = (t >= 0) & (t <= self._end)
        tc = np.clip(t, 0.0, None)
        return np.where(inside, self.c * tc * (self.shift + tc) ** self.exponent, 0.0)

    def integral(self, x):
        x = np.clip(np.asarray(x, dtype=np.float64), 0.0, self._end)
        g0 = _powlaw_antiderivative(0.0, self.shift, self.exponent)
        return self.c * (_powlaw_antiderivative(x, self.shift, self.exponent) - g0)

    def total(self):
        if self.cutoff is not None:
            return float(self.integral(self.cutoff))
        if self.exponent < -2.0:
            return float(-self.c * _powlaw_antiderivative(0.0, self.shift, self.exponent))
        return math.inf

    @property
    def peak(self) -> float:
        """Location of the global maximum on [0, inf)."""
        if self.exponent < -1.0:
            return self.shift / (-self.exponent - 1.0)
        return math.inf

    def sup(self, a, b):
        lo = np.maximum(np.asarray(a, dtype=np.float64), 0.0)
        hi = np.minimum(np.asarray(b, dtype=np.float64), self._end)
        best = np.maximum(self(lo), self(hi))
        pk = self.peak
        if math.isfinite(pk):
            best = np.where((lo <= pk) & (pk <= hi), np.maximum(best, self(pk)), best)
        return np.where(lo <= hi, best, 0.0)

    def breakpoints(self):
        return [] if self.cutoff is None else [float(self.cutoff)]

    def to_dict(self):
        return {"kind": self.kind, "c": self.c, "shift": self.shift,
                "exponent": self.exponent, "cutoff": self.cutoff}


@dataclass(frozen=True)
class ClippedSine(Kernel):
    """max(0, sin(t) / scale) on [0, horizon], zero afterwards."""

    scale: float
    horizon: float
    kind = "clipped_sine"

    def __post_init__(self):
        if self.scale <= 0 or self.horizon <= 0:
            raise ValueError("clipped sine needs positive scale and horizon")

    def __call__(self, t):
        t = np.asarray(t, dtype=np.float64)
        inside = (t >= 0) & (t <= self.horizon)
        return np.where(inside, np.maximum(0.0, np.sin(t) / self.scale), 0.0)

    def integral(self, x):
        x = np.clip(np.asarray(x, dtype=np.float64), 0.0, self.horizon)
        periods, rem = np.divmod(x, 2 * np.pi)
        part = np.where(rem <= np.pi, 1.0 - np.cos(rem), 2.0)
        return (2.0 * periods + part) / self.scale

    def total(self):
        return float(self.integral(self.horizon))

    def sup(self, a, b):
        lo = np.maximum(np.asarray(a, dtype=np.float64), 0.0)
        hi = np.minimum(np.asarray(b, dtype=np.float64), self.horizon)
        best = np.maximum(self(lo), self(hi))
        n = np.ceil((lo - np.pi / 2) / (2 * np.pi))
        crest = np.pi / 2 + 2 * np.pi * n
        best = np.where(crest <= hi, 1.0 / self.scale, best)
        return np.where(lo <= hi, best, 0.0)

    def breakpoints(self):
        pts = [np.pi * m for m in range(1, int(self.horizon / np.pi) + 1)]
        return pts + [float(self.horizon)]

    def to_dict(self):
        return {"kind": self.kind, "scale": self.scale, "horizon": self.horizon}


_KINDS = {cls.kind: cls for cls in (Zero, Exponential, ExpMixture, PowerLawProduct, ClippedSine)}


def kernel_from_dict(d: dict) -> Kernel:
    d = dict(d)
    kind = d.pop("kind", None)
    if kind not in _KINDS:
        raise ValueError(f"unknown kernel kind {kind!r}")
    if kind == "exp_mixture":
        return ExpMixture(tuple(tuple(t) for t in d["terms"]))
    return _KINDS[kind](**d)


# -- process specification ---------------------------------------------------------


@dataclass(frozen=True)
class HawkesSpec:
    background: tuple[float, ...]
    kernels: tuple[tuple[Kernel, ...], ...]
    branching: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        mu = tuple(float(m) for m in self.background)
        kernels = tuple(tuple(row) for row in self.kernels)
        K = len(mu)
        if K == 0 or any(m <= 0 for m in mu):
            raise ValueError("background intensities must be positive")
        if len(kernels) != K or any(len(row) != K for row in kernels):
            raise ValueError(f"kernel matrix must be {K}x{K}")
        object.__setattr__(self, "background", mu)
        object.__setattr__(self, "kernels", kernels)
        B = np.array([[k.total() for k in row] for row in kernels], dtype=np.float64)
        object.__setattr__(self, "branching", B)
        rho = self.spectral_radius
        if not rho < 1.0:
            raise UnstableSpecError(f"branching matrix spectral radius {rho:.4g} >= 1")

    @property
    def num_types(self) -> int:
        return len(self.background)

    @property
    def spectral_radius(self) -> float:
        if not np.all(np.isfinite(self.branching)):
            return math.inf
        return float(np.max(np.abs(np.linalg.eigvals(self.branching))))

    def stationary_rates(self) -> np.ndarray:
        """Long-run per-type event rates: solves r = mu + B^T r."""
        K = self.num_types
        return np.linalg.solve(np.eye(K) - self.branching.T, np.array(self.background))

    def to_dict(self) -> dict:
        return {"background": list(self.background),
                "kernels": [[k.to_dict() for k in row] for row in self.kernels]}

    @classmethod
    def from_dict(cls, d: dict) -> "HawkesSpec":
        return cls(tuple(d["background"]),
                   tuple(tuple(kernel_from_dict(k) for k in row) for row in d["kernels"]))

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def loads(cls, text: str) -> "HawkesSpec":
        return cls.from_dict(json.loads(text))


def appendix_a_spec(truncation: float = 8.0) -> HawkesSpec:
    """The two-type synthetic process with one local-in-time (sinusoidal) kernel.

    The power-law product kernel decays like t^-0.3 and is not integrable, so
    it is cut off at ``truncation``.
    """
    return HawkesSpec(
        (0.1, 0.2),
        (
            (PowerLawProduct(0.2, 0.5, -1.3, cutoff=truncation), Exponential(0.03, 0.3)),
            (ExpMixture(((0.05, 0.2), (0.16, 0.8))), ClippedSine(8.0, 4.0)),
        ),
    )


def poisson_spec(rates: Sequence[float]) -> HawkesSpec:
    K = len(rates)
    return HawkesSpec(tuple(rates), tuple(tuple(Zero() for _ in range(K)) for _ in range(K)))


# -- intensity ------------------------------------------------------------------------


def _history_arrays(history) -> tuple[np.ndarray, np.ndarray]:
    if history is None:
        return np.empty(0, dtype=np.int64), np.empty(0)
    if isinstance(history, EventSequence):
        return history.types, history.times
    types, times = history
    return np.asarray(types, dtype=np.int64), np.asarray(times, dtype=np.float64)


def intensities(spec: HawkesSpec, history, t: float) -> np.ndarray:
    """Per-type intensity vector at time t given events strictly before t."""
    types, times = _history_arrays(history)
    if len(times) and t < times[-1]:
        raise ValueError(f"query time {t} precedes the end of history {times[-1]}")
    lam = np.array(spec.background, dtype=np.float64)
    before = times < t
    types, lags = types[before], t - times[before]
    for i in range(spec.num_types):
        lag_i = lags[types == i]
        if lag_i.size == 0:
            continue
        for k in range(spec.num_types):
            lam[k] += float(np.sum(spec.kernels[i][k](lag_i)))
    return lam


def intensity(spec: HawkesSpec, history, t: float, k: int) -> float:
    return float(intensities(spec, history, t)[k])


# -- simulation -----------------------------------------------------------------------


def simulate_sequence(spec: HawkesSpec, horizon: float, seed, window: float = 1.0) -> EventSequence:
    """Ogata thinning on [0, horizon].

    Each candidate is drawn against a bound valid on [t, t + window]: the
    background plus, for every past event and target type, the kernel's
    supremum over the lags covered by the window. Candidates beyond the window
    advance time to the window's end without an event.
    """
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    if not window > 0:
        raise ValueError("window must be positive")
    rng = np.random.default_rng(seed)
    K = spec.num_types
    mu = np.array(spec.background)
    mu_total = float(mu.sum())
    by_type: list[list[float]] = [[] for _ in range(K)]
    arrays = [np.empty(0) for _ in range(K)]
    out_types: list[int] = []
    out_times: list[float] = []
    t = 0.0
    while t < horizon:
        end = min(t + window, horizon)
        bound = mu_total
        for i in range(K):
            if arrays[i].size:
                lo, hi = t - arrays[i], end - arrays[i]
                for k in range(K):
                    bound += float(np.sum(spec.kernels[i][k].sup(lo, hi)))
        cand = t + rng.exponential(1.0 / bound)
        if cand > end:
            t = end
            continue
        t = cand
        lam = mu.copy()
        for i in range(K):
            if arrays[i].size:
                lag = t - arrays[i]
                for k in range(K):
                    lam[k] += float(np.sum(spec.kernels[i][k](lag)))
        total = float(lam.sum())
        if total > bound * (1 + 1e-9):
            raise AssertionError(f"thinning bound violated at t={t}: {total} > {bound}")
        if rng.uniform() * bound <= total:
            k = int(rng.choice(K, p=lam / total)) if K > 1 else 0
            out_types.append(k)
            out_times.append(t)
            by_type[k].append(t)
            arrays[k] = np.array(by_type[k])
    return EventSequence(np.array(out_types, dtype=np.int64), np.array(out_times, dtype=np.float64))


def simulate_dataset(spec: HawkesSpec, num_sequences: int, horizon: float, seed: int,
                     min_length: int = 1, time_unit: str = "") -> Dataset:
    """Independent sequences from per-sequence streams seeded by (seed, index).

    Sequences shorter than ``min_length`` are redrawn from the stream
    (seed, index, attempt), so the result conditions on that minimum length.
    """
    seqs = []
    for n in range(num_sequences):
        attempt = 0
        seq = simulate_sequence(spec, horizon, (seed, n))
        while len(seq) < min_length:
            attempt += 1
            if attempt > 1000:
                raise RuntimeError(f"could not draw a sequence of length >= {min_length}")
            seq = simulate_sequence(spec, horizon, (seed, n, attempt))
        seqs.append(seq)
    return Dataset(tuple(seqs), spec.num_types, 0, time_unit)


# -- compensator / time rescaling ----------------------------------------------------------


def compensator(spec: HawkesSpec, seq: EventSequence, at, method: str = "closed") -> np.ndarray:
    """Summed-over-types integrated intensity Lambda(t) at the given times."""
    at = np.atleast_1d(np.asarray(at, dtype=np.float64))
    K = spec.num_types
    out = float(sum(spec.background)) * at
    for i in range(K):
        src = seq.times[seq.types == i]
        if src.size == 0:
            continue
        lags = at[:, None] - src[None, :]
        for k in range(K):
            kern = spec.kernels[i][k]
            if method == "closed":
                out = out + kern.integral(lags).sum(axis=1)
            elif method == "quad":
                vals = np.array([[kern.integral_quad(x) if x > 0 else 0.0 for x in row] for row in lags])
                out = out + vals.sum(axis=1)
            else:
                raise ValueError(f"unknown method {method!r}")
    return out


def compensator_rescale(spec: HawkesSpec, seq: EventSequence, method: str = "closed") -> np.ndarray:
    """Lambda(t_j) - Lambda(t_{j-1}) with t_0 = 0; i.i.d. Exp(1) under the true model."""
    if len(seq) and np.any(seq.types >= spec.num_types):
        raise ValueError("sequence has types outside the spec")
    lam = compensator(spec, seq, seq.times, method=method)
    return np.diff(np.concatenate([[0.0], lam]))
