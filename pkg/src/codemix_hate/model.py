"""Recurrent message classifier in NumPy with hand-written backpropagation.

Architecture: embedding lookup -> recurrent encoder -> ReLU dense layers ->
softmax over the three classes.

Encoders
--------
``simple_rnn``  h' = tanh(x W + (h*m) U + b)
``lstm``        gates ordered (input, forget, cell, output); forget bias starts at 1
``gru``         gates ordered (update, reset, candidate); the reset gate is applied
                before the recurrent product of the candidate and
                h' = z*h + (1-z)*candidate
``bilstm``      two LSTMs, the second reading each sequence reversed within its
                true length; final states are concatenated

``m`` is the recurrent dropout mask: one Bernoulli(1-p)/(1-p) mask per
sequence and direction, reused at every timestep, applied to the hidden state
only where it enters the recurrent product. Timesteps at or past a sequence's
true length leave the state untouched, so the encoder output is the state
after the last real token and padding has no influence.
"""

from __future__ import annotations

import enum
import math
from collections.abc import Mapping, Sequence
from dataclasses import asdict, dataclass, field

import numpy as np

from codemix_hate.corpus import NUM_CLASSES, ClassLabel
from codemix_hate.embeddings import EncodedSequence, stack_sequences
from codemix_hate.errors import ConfigError

LOSS_EPSILON = 1e-12


class CellKind(str, enum.Enum):
    SIMPLE_RNN = "simple_rnn"
    LSTM = "lstm"
    GRU = "gru"
    BILSTM = "bilstm"

    @property
    def gates(self) -> int:
        return {"simple_rnn": 1, "lstm": 4, "gru": 3, "bilstm": 4}[self.value]

    @property
    def directions(self) -> tuple[str, ...]:
        return ("fwd", "bwd") if self is CellKind.BILSTM else ("fwd",)

    @property
    def step_kind(self) -> str:
        return "lstm" if self is CellKind.BILSTM else self.value


@dataclass(frozen=True)
class ModelConfig:
    cell_kind: CellKind = CellKind.BILSTM
    hidden_units: int = 32
    embedding_dimension: int = 100
    max_length: int = 200
    dense_layers: tuple[int, ...] = (64, NUM_CLASSES)
    recurrent_dropout: float = 0.2
    embeddings_trainable: bool = True
    seed: int = 0
    dtype: str = "float32"

    def __post_init__(self):
        object.__setattr__(self, "cell_kind", CellKind(self.cell_kind))
        object.__setattr__(self, "dense_layers", tuple(int(w) for w in self.dense_layers))
        if self.hidden_units < 1:
            raise ConfigError("model.hidden_units must be >= 1")
        if self.embedding_dimension < 1:
            raise ConfigError("model.embedding_dimension must be >= 1")
        if self.max_length < 1:
            raise ConfigError("model.max_length must be >= 1")
        if not self.dense_layers or self.dense_layers[-1] != NUM_CLASSES:
            raise ConfigError(f"model.dense_layers must end in {NUM_CLASSES}")
        if any(w < 1 for w in self.dense_layers):
            raise ConfigError("model.dense_layers widths must be >= 1")
        if not 0.0 <= self.recurrent_dropout < 1.0:
            raise ConfigError("model.recurrent_dropout must lie in [0, 1)")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError("model.dtype must be float32 or float64")

    @property
    def encoder_width(self) -> int:
        return self.hidden_units * len(self.cell_kind.directions)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["cell_kind"] = self.cell_kind.value
        d["dense_layers"] = list(self.dense_layers)
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> ModelConfig:
        return cls(**d)


@dataclass
class Model:
    config: ModelConfig
    params: dict[str, np.ndarray]
    vocab_digest: str | None = None
    # bumped on every parameter update; caches remember the version they saw
    version: int = 0

    def parameter_count(self, prefix: str = "") -> int:
        return sum(v.size for k, v in self.params.items() if k.startswith(prefix))

    def trainable_names(self) -> list[str]:
        return [k for k in self.params if k != "embedding" or self.config.embeddings_trainable]

    def copy(self) -> Model:
        return Model(self.config, {k: v.copy() for k, v in self.params.items()},
                     self.vocab_digest, self.version)


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def orthogonal(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    flat = rng.normal(size=(max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(flat)
    q *= np.sign(np.diag(r))
    return q if rows >= cols else q.T


def init_model(config: ModelConfig, embedding_matrix: np.ndarray,
               rng: np.random.Generator | None = None) -> Model:
    if embedding_matrix.ndim != 2 or embedding_matrix.shape[1] != config.embedding_dimension:
        raise ConfigError(
            f"embedding matrix shape {embedding_matrix.shape} does not match "
            f"embedding_dimension {config.embedding_dimension}"
        )
    rng = np.random.default_rng(config.seed) if rng is None else rng
    dtype = np.dtype(config.dtype)
    H, D, G = config.hidden_units, config.embedding_dimension, config.cell_kind.gates
    params: dict[str, np.ndarray] = {"embedding": np.array(embedding_matrix, dtype=dtype)}
    for d in config.cell_kind.directions:
        params[f"{d}.W"] = glorot_uniform(rng, D, G * H)
        params[f"{d}.U"] = orthogonal(rng, H, G * H)
        bias = np.zeros(G * H)
        if config.cell_kind.step_kind == "lstm":
            bias[H:2 * H] = 1.0
        params[f"{d}.b"] = bias
    width = config.encoder_width
    for k, out in enumerate(config.dense_layers):
        params[f"dense{k}.W"] = glorot_uniform(rng, width, out)
        params[f"dense{k}.b"] = np.zeros(out)
        width = out
    params = {k: np.ascontiguousarray(v, dtype=dtype) for k, v in params.items()}
    return Model(config, params)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # split by sign to stay overflow-free
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    ex = np.exp(shifted)
    return ex / ex.sum(axis=1, keepdims=True)


def reverse_within_length(indices: np.ndarray, lengths: np.ndarray) -> np.ndarray:
    """Reverse each row's first ``length`` entries; the tail stays padding."""
    B, T = indices.shape
    t = np.arange(T)[None, :]
    src = lengths[:, None] - 1 - t
    valid = src >= 0
    out = np.zeros_like(indices)
    rows = np.broadcast_to(np.arange(B)[:, None], (B, T))
    out[valid] = indices[rows[valid], src[valid]]
    return out


@dataclass
class DirectionCache:
    indices: np.ndarray
    mask: np.ndarray | None
    steps: list[dict] = field(default_factory=list)
    final_h: np.ndarray | None = None


@dataclass
class ForwardCache:
    indices: np.ndarray
    lengths: np.ndarray
    mode: str
    version: int
    directions: dict[str, DirectionCache]
    dense_inputs: list[np.ndarray]
    dense_preacts: list[np.ndarray]
    probabilities: np.ndarray


def _run_direction(kind: str, params: Mapping[str, np.ndarray], prefix: str,
                   indices: np.ndarray, lengths: np.ndarray,
                   mask: np.ndarray | None, keep_steps: bool) -> DirectionCache:
    E, W, U, b = params["embedding"], params[f"{prefix}.W"], params[f"{prefix}.U"], params[f"{prefix}.b"]
    B = indices.shape[0]
    H = U.shape[0]
    h = np.zeros((B, H), dtype=W.dtype)
    c = np.zeros((B, H), dtype=W.dtype) if kind == "lstm" else None
    cache = DirectionCache(indices, mask)
    T = int(lengths.max()) if B else 0
    for t in range(T):
        x = E[indices[:, t]]
        s = (t < lengths)[:, None].astype(W.dtype)
        hd = h * mask if mask is not None else h
        step = {"x": x, "s": s, "h": h, "hd": hd}
        if kind == "simple_rnn":
            h_new = np.tanh(x @ W + hd @ U + b)
            step["h_new"] = h_new
        elif kind == "lstm":
            z = x @ W + hd @ U + b
            i = _sigmoid(z[:, :H])
            f = _sigmoid(z[:, H:2 * H])
            g = np.tanh(z[:, 2 * H:3 * H])
            o = _sigmoid(z[:, 3 * H:])
            c_new = f * c + i * g
            tc = np.tanh(c_new)
            h_new = o * tc
            step.update(c=c, i=i, f=f, g=g, o=o, tc=tc)
            c = s * c_new + (1 - s) * c
        else:
            a = x @ W[:, :2 * H] + hd @ U[:, :2 * H] + b[:2 * H]
            zg = _sigmoid(a[:, :H])
            r = _sigmoid(a[:, H:])
            rh = r * hd
            hh = np.tanh(x @ W[:, 2 * H:] + rh @ U[:, 2 * H:] + b[2 * H:])
            h_new = zg * h + (1 - zg) * hh
            step.update(z=zg, r=r, rh=rh, hh=hh)
        h = s * h_new + (1 - s) * h
        if keep_steps:
            cache.steps.append(step)
    cache.final_h = h
    return cache


def _backprop_direction(kind: str, params: Mapping[str, np.ndarray], prefix: str,
                        cache: DirectionCache, dh: np.ndarray,
                        grads: dict[str, np.ndarray]) -> None:
    W, U = params[f"{prefix}.W"], params[f"{prefix}.U"]
    H = U.shape[0]
    dW = np.zeros_like(W)
    dU = np.zeros_like(U)
    db = np.zeros_like(params[f"{prefix}.b"])
    dE = grads.get("embedding")
    mask = cache.mask
    dc = np.zeros_like(dh) if kind == "lstm" else None
    for t in range(len(cache.steps) - 1, -1, -1):
        st = cache.steps[t]
        s = st["s"]
        dh_new, dh_carry = s * dh, (1 - s) * dh
        if kind == "simple_rnn":
            h_new = st["h_new"]
            dz = dh_new * (1 - h_new * h_new)
            dhd = dz @ U.T
            dh_prev = dh_carry
        elif kind == "lstm":
            i, f, g, o, tc = st["i"], st["f"], st["g"], st["o"], st["tc"]
            dc_new, dc_carry = s * dc, (1 - s) * dc
            do = dh_new * tc
            dct = dc_new + dh_new * o * (1 - tc * tc)
            dz = np.concatenate(
                [dct * g * i * (1 - i), dct * st["c"] * f * (1 - f),
                 dct * i * (1 - g * g), do * o * (1 - o)], axis=1)
            dc = dct * f + dc_carry
            dhd = dz @ U.T
            dh_prev = dh_carry
        else:
            zg, r, rh, hh, hd = st["z"], st["r"], st["rh"], st["hh"], st["hd"]
            da_h = dh_new * (1 - zg) * (1 - hh * hh)
            drh = da_h @ U[:, 2 * H:].T
            da_z = dh_new * (st["h"] - hh) * zg * (1 - zg)
            da_r = drh * hd * r * (1 - r)
            dz = np.concatenate([da_z, da_r, da_h], axis=1)
            dU[:, 2 * H:] += rh.T @ da_h
            dU[:, :2 * H] += hd.T @ dz[:, :2 * H]
            dhd = dz[:, :2 * H] @ U[:, :2 * H].T + drh * r
            dh_prev = dh_carry + dh_new * zg
        if kind != "gru":
            dU += st["hd"].T @ dz
        dW += st["x"].T @ dz
        db += dz.sum(axis=0)
        if dE is not None:
            np.add.at(dE, cache.indices[:, t], dz @ W.T)
        dh = dh_prev + (dhd * mask if mask is not None else dhd)
    grads[f"{prefix}.W"] = dW
    grads[f"{prefix}.U"] = dU
    grads[f"{prefix}.b"] = db


def as_batch(batch) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(batch, tuple) and len(batch) == 2 and isinstance(batch[0], np.ndarray):
        return batch
    if isinstance(batch, EncodedSequence):
        batch = [batch]
    return stack_sequences(batch)


def draw_dropout_masks(config: ModelConfig, batch_size: int,
                       rng: np.random.Generator) -> dict[str, np.ndarray]:
    p = config.recurrent_dropout
    shape = (batch_size, config.hidden_units)
    return {d: ((rng.random(shape) >= p) / (1.0 - p)).astype(config.dtype)
            for d in config.cell_kind.directions}


def forward(model: Model, batch, mode: str = "eval",
            rng: np.random.Generator | None = None,
            masks: Mapping[str, np.ndarray] | None = None) -> tuple[np.ndarray, ForwardCache]:
    """Class probabilities for a batch plus the cache ``backward`` needs.

    ``batch`` is a list of EncodedSequence or an ``(indices, lengths)`` pair.
    In train mode recurrent-dropout masks come from ``masks`` if given, else
    are drawn from ``rng``; eval mode never applies dropout.
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    indices, lengths = as_batch(batch)
    cfg, params = model.config, model.params
    vocab_size = params["embedding"].shape[0]
    if indices.size and (indices.min() < 0 or indices.max() >= vocab_size):
        raise IndexError(f"token index out of range for vocabulary of size {vocab_size}")
    if mode == "train" and cfg.recurrent_dropout > 0:
        if masks is None:
            if rng is None:
                raise ValueError("train mode with dropout needs an rng or explicit masks")
            masks = draw_dropout_masks(cfg, len(lengths), rng)
    else:
        masks = None
    keep = mode == "train"
    kind = cfg.cell_kind.step_kind
    dirs: dict[str, DirectionCache] = {}
    for d in cfg.cell_kind.directions:
        idx = indices if d == "fwd" else reverse_within_length(indices, lengths)
        dirs[d] = _run_direction(kind, params, d, idx, lengths,
                                 None if masks is None else masks[d], keep)
    a = np.concatenate([dirs[d].final_h for d in cfg.cell_kind.directions], axis=1)
    inputs, preacts = [], []
    n_layers = len(cfg.dense_layers)
    for k in range(n_layers):
        inputs.append(a)
        z = a @ params[f"dense{k}.W"] + params[f"dense{k}.b"]
        preacts.append(z)
        a = np.maximum(z, 0) if k < n_layers - 1 else z
    probs = softmax(a)
    cache = ForwardCache(indices, lengths, mode, model.version, dirs, inputs, preacts, probs)
    return probs, cache


@dataclass(frozen=True)
class LossValue:
    value: float
    per_example: np.ndarray


def loss(probabilities: np.ndarray, labels: Sequence[int]) -> LossValue:
    """Mean negative log-probability of the true class (categorical cross-entropy)."""
    labels = np.asarray(labels, dtype=np.int64)
    if probabilities.shape[0] != labels.shape[0]:
        raise ValueError(f"{probabilities.shape[0]} probability rows but {labels.shape[0]} labels")
    p = np.clip(probabilities[np.arange(len(labels)), labels], LOSS_EPSILON, 1 - LOSS_EPSILON)
    per_example = -np.log(p.astype(np.float64))
    return LossValue(float(per_example.mean()) if len(labels) else 0.0, per_example)


class StaleCacheError(RuntimeError):
    pass


def backward(model: Model, cache: ForwardCache, labels: Sequence[int]) -> dict[str, np.ndarray]:
    """Gradients of the mean cross-entropy with respect to every parameter."""
    labels = np.asarray(labels, dtype=np.int64)
    if cache.version != model.version:
        raise StaleCacheError("forward cache predates the latest parameter update")
    if len(labels) != len(cache.lengths):
        raise StaleCacheError(f"cache holds {len(cache.lengths)} examples, got {len(labels)} labels")
    if cache.mode != "train":
        raise StaleCacheError("backward needs a cache from a train-mode forward pass")
    cfg, params = model.config, model.params
    N = len(labels)
    grads: dict[str, np.ndarray] = {}
    delta = cache.probabilities.copy()
    delta[np.arange(N), labels] -= 1.0
    delta /= N
    for k in range(len(cfg.dense_layers) - 1, -1, -1):
        grads[f"dense{k}.W"] = cache.dense_inputs[k].T @ delta
        grads[f"dense{k}.b"] = delta.sum(axis=0)
        delta = delta @ params[f"dense{k}.W"].T
        if k > 0:
            delta = delta * (cache.dense_preacts[k - 1] > 0)
    if cfg.embeddings_trainable:
        grads["embedding"] = np.zeros_like(params["embedding"])
    H = cfg.hidden_units
    for j, d in enumerate(cfg.cell_kind.directions):
        _backprop_direction(cfg.cell_kind.step_kind, params, d, cache.directions[d],
                            delta[:, j * H:(j + 1) * H], grads)
    grads.setdefault("embedding", np.zeros_like(params["embedding"]))
    return {k: grads[k] for k in params}


def predict_proba(model: Model, batch, chunk: int = 256) -> np.ndarray:
    indices, lengths = as_batch(batch)
    out = [forward(model, (indices[i:i + chunk], lengths[i:i + chunk]), "eval")[0]
           for i in range(0, len(lengths), chunk)]
    if not out:
        return np.zeros((0, NUM_CLASSES))
    return np.concatenate(out)


def predict(model: Model, sequence: EncodedSequence) -> tuple[ClassLabel, np.ndarray]:
    probs = forward(model, [sequence], "eval")[0][0]
    return ClassLabel(int(np.argmax(probs))), probs
