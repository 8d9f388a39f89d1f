"""The sigmoid-gated Hawkes encoder-decoder.

Each event is embedded as ``[type embedding | temporal encoding (| covariate
map)]``. The history vector for event j is the kernel-weighted, unnormalised
sum of the embeddings of events i <= j, where the weight for the ordered type
pair (past u, current v) comes from a gated rational-quadratic kernel whose
five parameters are produced by softplus heads on ``[e_v | e_u]``. Decoders
predict the next inter-arrival gap (noise-perturbed, M samples) and the next
event type.

The per-event functions below (``temporal_encoding``, ``kernel_params``,
``gated_kernel`` ...) are plain numpy. :func:`sequence_forward` evaluates the
whole sequence at once on a :class:`~sghp.diffcore.Tape` so the loss can be
differentiated.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import asdict, dataclass, field
from typing import NamedTuple

import numpy as np

from .data import Event, EventSequence
from .diffcore import Tape, Var, evaluate, softmax, softplus

KERNEL_PARAMS = ("sigma", "alpha", "ell", "p", "s")


@dataclass(frozen=True)
class ModelConfig:
    num_types: int
    dim: int = 16
    covariate_dim: int = 0
    num_samples: int = 10
    use_squared_distance: bool = True
    include_self_term: bool = True
    loss_per_sample: bool = False  # average |error| over the M samples instead of using their mean

    def __post_init__(self):
        if self.num_types < 1:
            raise ValueError("num_types must be >= 1")
        if self.dim < 2 or self.dim % 2:
            raise ValueError("dim must be a positive even number")
        if self.num_samples < 1:
            raise ValueError("num_samples must be >= 1")
        if self.covariate_dim < 0:
            raise ValueError("covariate_dim must be >= 0")

    @property
    def history_dim(self) -> int:
        return 3 * self.dim if self.covariate_dim else 2 * self.dim


class GateKernelParams(NamedTuple):
    sigma: float
    alpha: float
    ell: float
    p: float
    s: float


def parameter_shapes(cfg: ModelConfig) -> dict[str, tuple[int, ...]]:
    K, D, C, H = cfg.num_types, cfg.dim, cfg.covariate_dim, cfg.history_dim
    shapes: dict[str, tuple[int, ...]] = {"type_embeddings": (K, D), "temporal_scales": (D,)}
    for r in KERNEL_PARAMS:
        shapes[f"kernel_{r}_w"] = (2 * D,)
        shapes[f"kernel_{r}_b"] = ()
    if C:
        shapes["covariate_w"] = (D, C)
        shapes["covariate_b"] = (D,)
    shapes.update({
        "noise_mix_h": (H, H), "noise_mix_n": (H, H),
        "time_w": (H,), "time_b": (),
        "type_w": (K, H), "type_b": (K,),
    })
    return shapes


def parameter_count(cfg: ModelConfig) -> int:
    """Closed-form count of trainable scalars."""
    K, D, C, H = cfg.num_types, cfg.dim, cfg.covariate_dim, cfg.history_dim
    cov = C * D + D if C else 0
    return K * D + D + 5 * (2 * D + 1) + cov + 2 * H * H + (H + 1) + K * H + K


@dataclass
class ModelParams:
    config: ModelConfig
    arrays: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        shapes = parameter_shapes(self.config)
        if set(shapes) != set(self.arrays):
            missing = set(shapes) ^ set(self.arrays)
            raise ValueError(f"parameter set mismatch: {sorted(missing)}")
        arrays = {}
        for name, shape in shapes.items():
            a = np.array(self.arrays[name], dtype=np.float64)
            if a.shape != shape:
                raise ValueError(f"{name}: expected shape {shape}, got {a.shape}")
            arrays[name] = a
        self.arrays = arrays

    def __getitem__(self, name: str) -> np.ndarray:
        return self.arrays[name]

    @classmethod
    def init(cls, cfg: ModelConfig, seed: int = 0) -> "ModelParams":
        """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases; time scales start at 1."""
        rng = np.random.default_rng(seed)
        K, D, C, H = cfg.num_types, cfg.dim, cfg.covariate_dim, cfg.history_dim
        fan_in = {"type_embeddings": K, "covariate_w": C, "covariate_b": C,
                  "noise_mix_h": H, "noise_mix_n": H, "time_w": H, "time_b": H,
                  "type_w": H, "type_b": H}
        for r in KERNEL_PARAMS:
            fan_in[f"kernel_{r}_w"] = fan_in[f"kernel_{r}_b"] = 2 * D
        arrays = {}
        for name, shape in parameter_shapes(cfg).items():
            if name == "temporal_scales":
                arrays[name] = np.ones(shape)
            else:
                bound = 1.0 / np.sqrt(fan_in[name])
                arrays[name] = rng.uniform(-bound, bound, size=shape)
        return cls(cfg, arrays)

    def copy(self) -> "ModelParams":
        return ModelParams(self.config, {k: v.copy() for k, v in self.arrays.items()})

    def replace(self, **arrays) -> "ModelParams":
        new = self.copy()
        new.arrays.update({k: np.array(v, dtype=np.float64) for k, v in arrays.items()})
        return ModelParams(new.config, new.arrays)

    def count(self) -> int:
        return int(sum(a.size for a in self.arrays.values()))

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.arrays.values())

    def __eq__(self, other) -> bool:
        if not isinstance(other, ModelParams):
            return NotImplemented
        return self.config == other.config and self.arrays.keys() == other.arrays.keys() and all(
            np.array_equal(self.arrays[k], other.arrays[k]) for k in self.arrays)

    # checkpoint format
    def dumps(self) -> str:
        doc = {
            "format": "sghp-checkpoint",
            "version": 1,
            "config": asdict(self.config),
            "arrays": {name: {"shape": list(a.shape), "data": [float(x) for x in a.reshape(-1)]}
                       for name, a in self.arrays.items()},
        }
        return json.dumps(doc, indent=1) + "\n"

    @classmethod
    def loads(cls, text: str) -> "ModelParams":
        doc = json.loads(text)
        if doc.get("format") != "sghp-checkpoint":
            raise ValueError("not an sghp checkpoint")
        cfg = ModelConfig(**doc["config"])
        arrays = {name: np.array(entry["data"], dtype=np.float64).reshape(entry["shape"])
                  for name, entry in doc["arrays"].items()}
        return cls(cfg, arrays)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.dumps())

    @classmethod
    def load(cls, path) -> "ModelParams":
        with open(path, encoding="utf-8") as fh:
            return cls.loads(fh.read())


# -- per-event reference functions (numpy) -----------------------------------------------


def angular_frequencies(dim: int) -> np.ndarray:
    d = np.arange(dim)
    return 1.0 / 10000.0 ** (2.0 * d / dim)


def temporal_encoding(i: int, t: float, params: ModelParams, cfg: ModelConfig | None = None) -> np.ndarray:
    """sin/cos of (w_d * i + omega_d * t) on even/odd dimensions."""
    cfg = cfg or params.config
    arg = angular_frequencies(cfg.dim) * i + params["temporal_scales"] * t
    even = np.arange(cfg.dim) % 2 == 0
    return np.where(even, np.sin(arg), np.cos(arg))


def type_embedding(k: int, params: ModelParams) -> np.ndarray:
    K = params.config.num_types
    if not 0 <= k < K:
        raise IndexError(f"type index {k} out of range for K={K}")
    return params["type_embeddings"][k].copy()


def event_embedding(event: Event, position: int, params: ModelParams, cfg: ModelConfig | None = None) -> np.ndarray:
    cfg = cfg or params.config
    event = Event(*event)
    blocks = [type_embedding(event.type_index, params),
              temporal_encoding(position, event.timestamp, params, cfg)]
    if cfg.covariate_dim:
        if event.covariates is None or len(event.covariates) != cfg.covariate_dim:
            raise ValueError(f"expected {cfg.covariate_dim} covariates")
        blocks.append(params["covariate_w"] @ np.asarray(event.covariates, dtype=np.float64)
                      + params["covariate_b"])
    elif event.covariates is not None:
        raise ValueError("model has no covariate map")
    return np.concatenate(blocks)


def kernel_params(u: int, v: int, params: ModelParams) -> GateKernelParams:
    """Kernel parameters for a past type-u event acting on a type-v event."""
    pair = np.concatenate([type_embedding(v, params), type_embedding(u, params)])
    return GateKernelParams(*(float(softplus(params[f"kernel_{r}_w"] @ pair + params[f"kernel_{r}_b"]))
                              for r in KERNEL_PARAMS))


def rq_kernel(d, sigma: float, alpha: float, ell: float):
    d = np.asarray(d, dtype=np.float64)
    return sigma ** 2 * (1.0 + d * d / (2.0 * alpha * ell ** 2)) ** (-alpha)


def gated_kernel(d, theta: GateKernelParams, cfg: ModelConfig | None = None):
    """Rational-quadratic decay times a generalised-logistic gate, in log space."""
    sigma, alpha, ell, p, s = theta
    d = np.asarray(d, dtype=np.float64)
    squared = True if cfg is None else cfg.use_squared_distance
    dist = d * d if squared else d
    log_q = (2.0 * np.log(sigma) - alpha * np.log1p(dist / (2.0 * alpha * ell ** 2))
             - s * softplus(p - d))
    return np.exp(log_q)


def predict_arrival(h: np.ndarray, noise: np.ndarray, params: ModelParams) -> tuple[np.ndarray, float]:
    """M positive gap samples softplus(w_t . (W_h h + W_n n_m) + b_t) and their mean."""
    noise = np.atleast_2d(np.asarray(noise, dtype=np.float64))
    mixed = params["noise_mix_h"] @ h + noise @ params["noise_mix_n"].T
    samples = softplus(mixed @ params["time_w"] + params["time_b"])
    return samples, float(samples.mean())


def predict_type(h: np.ndarray, params: ModelParams) -> np.ndarray:
    return softmax(params["type_w"] @ h + params["type_b"])


# -- whole-sequence forward pass on a tape ---------------------------------------------------


def bind(tape: Tape, params: ModelParams) -> dict[str, Var]:
    return {name: tape.param(name, a) for name, a in params.arrays.items()}


def draw_noise(rng: np.random.Generator, num_targets: int, cfg: ModelConfig) -> np.ndarray:
    return rng.uniform(0.0, 1.0, size=(num_targets, cfg.num_samples, cfg.history_dim))


@dataclass
class SequenceOutputs:
    history: Var            # (L, H) history vectors h_1..h_L
    samples: Var | None     # (L-1, M) gap samples for events 2..L
    gap_mean: Var | None    # (L-1,)
    type_logits: Var | None  # (L-1, K)
    loss: Var | None


def _history(tape: Tape, P: dict[str, Var], seq: EventSequence, cfg: ModelConfig) -> Var:
    L, K, D = len(seq), cfg.num_types, cfg.dim
    types, times = seq.types, seq.times
    if L == 0:
        raise ValueError("empty prefix")
    if np.any((types < 0) | (types >= K)):
        raise IndexError("type index out of range")

    emb = tape.take(P["type_embeddings"], types)
    phase = np.arange(1, L + 1)[:, None] * angular_frequencies(D)[None, :]
    arg = tape.const(phase) + tape.const(times[:, None]) * P["temporal_scales"]
    even = (np.arange(D) % 2 == 0).astype(np.float64)
    enc = tape.sin(arg) * even + tape.cos(arg) * (1.0 - even)
    blocks = [emb, enc]
    if cfg.covariate_dim:
        if seq.covariates is None or seq.covariates.shape[1] != cfg.covariate_dim:
            raise ValueError(f"expected {cfg.covariate_dim} covariates per event")
        blocks.append(tape.const(seq.covariates) @ P["covariate_w"].T + P["covariate_b"])
    elif seq.covariates is not None:
        raise ValueError("model has no covariate map")
    x = tape.concat(blocks, axis=1)

    # kernel parameters for every ordered pair (u past, v current), pair index u*K + v
    u_idx = np.repeat(np.arange(K), K)
    v_idx = np.tile(np.arange(K), K)
    pair_in = tape.concat([tape.take(P["type_embeddings"], v_idx),
                           tape.take(P["type_embeddings"], u_idx)], axis=1)
    lookup = types[None, :] * K + types[:, None]  # row j (current), column i (past)
    theta = {r: tape.take(tape.softplus(pair_in @ P[f"kernel_{r}_w"] + P[f"kernel_{r}_b"]), lookup)
             for r in KERNEL_PARAMS}

    d = np.abs(times[None, :] - times[:, None])
    dist = d * d if cfg.use_squared_distance else d
    alpha, ell = theta["alpha"], theta["ell"]
    rq = tape.exp(-(alpha * tape.log1p(tape.const(dist) / (2.0 * alpha * ell * ell))))
    gate = tape.exp(-(theta["s"] * tape.softplus(theta["p"] - d)))
    mask = np.tril(np.ones((L, L)), k=0 if cfg.include_self_term else -1)
    q = theta["sigma"] * theta["sigma"] * rq * gate * mask
    return q @ x


def sequence_forward(tape: Tape, P: dict[str, Var], seq: EventSequence, cfg: ModelConfig,
                     noise: np.ndarray | None = None) -> SequenceOutputs:
    """History vectors for every event and, if L >= 2, predictions and loss for events 2..L."""
    h_all = _history(tape, P, seq, cfg)
    L = len(seq)
    if L < 2:
        return SequenceOutputs(h_all, None, None, None, None)
    n, M, H = L - 1, cfg.num_samples, cfg.history_dim
    if noise is None:
        raise ValueError("noise is required when predictions are made")
    noise = np.asarray(noise, dtype=np.float64)
    if noise.shape != (n, M, H):
        raise ValueError(f"noise must have shape {(n, M, H)}, got {noise.shape}")
    h = h_all[:n]

    mixed_h = h @ P["noise_mix_h"].T
    mixed_n = tape.const(noise.reshape(n * M, H)) @ P["noise_mix_n"].T
    pre = (mixed_n @ P["time_w"]).reshape(n, M) + (mixed_h @ P["time_w"]).reshape(n, 1) + P["time_b"]
    samples = tape.softplus(pre)
    gap_mean = samples.mean(axis=1)
    gaps = np.diff(seq.times)
    if cfg.loss_per_sample:
        time_loss = abs(samples - gaps[:, None]).mean(axis=1).sum()
    else:
        time_loss = abs(gap_mean - gaps).sum()
    logits = h @ P["type_w"].T + P["type_b"]
    type_loss = tape.cross_entropy(logits, seq.types[1:])
    return SequenceOutputs(h_all, samples, gap_mean, logits, time_loss + type_loss)


def encode_history(prefix: EventSequence, params: ModelParams, cfg: ModelConfig | None = None) -> np.ndarray:
    """History vector h_j of the last event in ``prefix``."""
    cfg = cfg or params.config
    if len(prefix) == 0:
        raise ValueError("empty prefix")
    if len(prefix) == 1 and not cfg.include_self_term:
        warnings.warn("single-event history without the self term is the zero vector", stacklevel=2)
    tape = Tape()
    return _history(tape, bind(tape, params), prefix, cfg).value[-1].copy()


def sequence_loss(seq: EventSequence, params: ModelParams, cfg: ModelConfig | None = None,
                  noise=None) -> tuple[Tape, Var]:
    """Build the loss tape for one sequence; returns (tape, scalar root).

    ``noise`` is either an array of shape (L-1, M, H) or a numpy Generator.
    """
    cfg = cfg or params.config
    if len(seq) < 2:
        raise ValueError("sequence too short: need at least two events")
    if noise is None or isinstance(noise, np.random.Generator):
        noise = draw_noise(noise if noise is not None else np.random.default_rng(0), len(seq) - 1, cfg)
    tape = Tape()
    out = sequence_forward(tape, bind(tape, params), seq, cfg, noise)
    return tape, out.loss


def loss_and_grads(seq: EventSequence, params: ModelParams, noise) -> tuple[float, dict[str, np.ndarray]]:
    tape, root = sequence_loss(seq, params, params.config, noise)
    return evaluate(tape, root)


class Predictions(NamedTuple):
    history: np.ndarray       # (L, H)
    gap_samples: np.ndarray   # (L-1, M)
    gap_mean: np.ndarray      # (L-1,)
    type_probs: np.ndarray    # (L-1, K)


def predict_sequence(seq: EventSequence, params: ModelParams, noise) -> Predictions:
    """Next-event predictions after each of events 1..L-1 (no gradients)."""
    cfg = params.config
    if isinstance(noise, np.random.Generator):
        noise = draw_noise(noise, len(seq) - 1, cfg)
    tape = Tape()
    out = sequence_forward(tape, bind(tape, params), seq, cfg, noise)
    return Predictions(out.history.value.copy(), out.samples.value.copy(), out.gap_mean.value.copy(),
                       softmax(out.type_logits.value, axis=-1))


def learned_kernel(u: int, v: int, grid, params: ModelParams) -> np.ndarray:
    """q_{uv} evaluated on a grid of lags."""
    return gated_kernel(grid, kernel_params(u, v, params), params.config)
