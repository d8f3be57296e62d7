"""Training loop, optimizers and the checkpoint file format.

Checkpoint layout (format version 1), all integers little-endian::

    8 bytes   magic b"CMHCKPT\\n"
    4 bytes   uint32 length L of the header
    L bytes   UTF-8 JSON header (sorted keys, no whitespace)
    ...       raw tensor bytes, C order, concatenated in header order

The header holds ``format_version``, ``model_config``, ``vocab_digest``,
``vocabulary`` (token list or null), ``state`` (training state or null) and
``tensors``: a list of ``{name, dtype, shape, offset, nbytes}`` where offset
counts from the first byte after the header. Model tensors are named as in
``Model.params``; optimizer moments are stored as ``optimizer/<slot>/<name>``.
"""

from __future__ import annotations

import json
import logging
import math
import os
import struct
from collections.abc import Callable, Mapping, Sequence
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from codemix_hate.embeddings import Vocabulary
from codemix_hate.errors import CheckpointError, ConfigError, DatasetError, NumericError
from codemix_hate.model import Model, ModelConfig, backward, forward, loss, predict_proba

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
MAGIC = b"CMHCKPT\n"


class SGD:
    name = "sgd"

    def update(self, params: dict[str, np.ndarray], grads: Mapping[str, np.ndarray],
               lr: float, names: Sequence[str]) -> None:
        for k in names:
            params[k] -= (lr * grads[k]).astype(params[k].dtype)

    def state(self) -> tuple[dict, dict[str, np.ndarray]]:
        return {"name": self.name}, {}

    def load_state(self, meta: Mapping, tensors: Mapping[str, np.ndarray]) -> None:
        pass


class Adam:
    name = "adam"

    def __init__(self, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def update(self, params: dict[str, np.ndarray], grads: Mapping[str, np.ndarray],
               lr: float, names: Sequence[str]) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        scale = lr * math.sqrt(1 - b2 ** self.t) / (1 - b1 ** self.t)
        for k in names:
            g = grads[k]
            m = self.m.setdefault(k, np.zeros_like(params[k]))
            v = self.v.setdefault(k, np.zeros_like(params[k]))
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            params[k] -= (scale * m / (np.sqrt(v) + self.eps)).astype(params[k].dtype)

    def state(self) -> tuple[dict, dict[str, np.ndarray]]:
        meta = {"name": self.name, "beta1": self.beta1, "beta2": self.beta2,
                "eps": self.eps, "t": self.t}
        tensors = {f"m/{k}": v for k, v in self.m.items()}
        tensors.update({f"v/{k}": v for k, v in self.v.items()})
        return meta, tensors

    def load_state(self, meta: Mapping, tensors: Mapping[str, np.ndarray]) -> None:
        self.beta1, self.beta2, self.eps, self.t = meta["beta1"], meta["beta2"], meta["eps"], meta["t"]
        self.m = {k[2:]: v.copy() for k, v in tensors.items() if k.startswith("m/")}
        self.v = {k[2:]: v.copy() for k, v in tensors.items() if k.startswith("v/")}


def make_optimizer(name: str):
    if name == "adam":
        return Adam()
    if name == "sgd":
        return SGD()
    raise ConfigError(f"unknown optimizer {name!r}")


def gradient_step(model: Model, gradients: Mapping[str, np.ndarray], learning_rate: float,
                  optimizer=None) -> None:
    """Apply one update in place; frozen tensors are left alone."""
    optimizer = SGD() if optimizer is None else optimizer
    names = model.trainable_names()
    for k in names:
        if gradients[k].shape != model.params[k].shape:
            raise ValueError(f"gradient for {k} has shape {gradients[k].shape}, "
                             f"parameter has {model.params[k].shape}")
        if not np.all(np.isfinite(gradients[k])):
            raise NumericError(f"non-finite gradient for {k}")
    optimizer.update(model.params, gradients, learning_rate, names)
    model.version += 1


@dataclass(frozen=True)
class TrainingSchedule:
    initial_learning_rate: float = 0.01
    epochs: int = 50
    batch_size: int = 32
    lr_decay: float = 1.0
    plateau_patience: int = 3
    plateau_factor: float = 0.5
    early_stop_patience: int = 10
    min_delta: float = 1e-4
    checkpoint_path: str | None = None
    seed: int = 0
    optimizer: str = "adam"

    def __post_init__(self):
        if not self.initial_learning_rate > 0:
            raise ConfigError("schedule.initial_learning_rate must be > 0")
        if self.epochs < 1:
            raise ConfigError("schedule.epochs must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("schedule.batch_size must be >= 1")
        if not 0 < self.lr_decay <= 1:
            raise ConfigError("schedule.lr_decay must lie in (0, 1]")
        if self.plateau_patience < 1:
            raise ConfigError("schedule.plateau_patience must be >= 1")
        if not 0 < self.plateau_factor < 1:
            raise ConfigError("schedule.plateau_factor must lie in (0, 1)")
        if self.early_stop_patience < 1:
            raise ConfigError("schedule.early_stop_patience must be >= 1")
        if self.min_delta < 0:
            raise ConfigError("schedule.min_delta must be >= 0")
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigError("schedule.optimizer must be 'adam' or 'sgd'")


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    learning_rate: float
    lr_reduced: bool = False
    lr_decayed: bool = False
    checkpointed: bool = False
    stopped_early: bool = False


@dataclass
class TrainingHistory:
    records: list[EpochRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def val_losses(self) -> list[float]:
        return [r.val_loss for r in self.records]

    @property
    def best_epoch(self) -> int | None:
        best = [r.epoch for r in self.records if r.checkpointed]
        return best[-1] if best else None

    def to_jsonl(self) -> str:
        return "".join(json.dumps(asdict(r), sort_keys=True) + "\n" for r in self.records)

    def summary(self) -> dict:
        best = self.best_epoch
        return {
            "epochs_run": len(self.records),
            "best_epoch": best,
            "best_val_loss": min(self.val_losses) if self.records else None,
            "final_learning_rate": self.records[-1].learning_rate if self.records else None,
            "stopped_early": bool(self.records and self.records[-1].stopped_early),
        }

    @classmethod
    def from_dicts(cls, rows: Sequence[Mapping]) -> TrainingHistory:
        return cls([EpochRecord(**r) for r in rows])


@dataclass
class EncodedSet:
    indices: np.ndarray
    lengths: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if not (len(self.indices) == len(self.lengths) == len(self.labels)):
            raise ValueError("indices, lengths and labels disagree in length")

    def __len__(self) -> int:
        return len(self.labels)

    def subset(self, rows: np.ndarray) -> EncodedSet:
        return EncodedSet(self.indices[rows], self.lengths[rows], self.labels[rows])


def dataset_loss(model: Model, data: EncodedSet) -> float:
    return loss(predict_proba(model, (data.indices, data.lengths)), data.labels).value


@dataclass
class TrainingState:
    """Everything needed to continue a run exactly where it stopped."""

    epoch: int = 0
    learning_rate: float = 0.0
    best_val: float = math.inf
    best_epoch: int = 0
    wait: int = 0
    plateau_wait: int = 0
    rng_state: dict | None = None
    history: list[dict] = field(default_factory=list)
    optimizer: dict | None = None
    finished: bool = False

    def to_dict(self) -> dict:
        d = asdict(self)
        d["best_val"] = None if math.isinf(self.best_val) else self.best_val
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> TrainingState:
        d = dict(d)
        d["best_val"] = math.inf if d.get("best_val") is None else d["best_val"]
        return cls(**d)


@dataclass
class Checkpoint:
    model: Model
    vocabulary: Vocabulary | None = None
    state: TrainingState | None = None
    optimizer_tensors: dict[str, np.ndarray] = field(default_factory=dict)


def checkpoint_save(model: Model, path: str | os.PathLike, vocabulary: Vocabulary | None = None,
                    state: TrainingState | None = None, optimizer=None) -> None:
    tensors: dict[str, np.ndarray] = dict(model.params)
    state_dict = None
    if state is not None:
        state_dict = state.to_dict()
    if optimizer is not None:
        meta, opt_tensors = optimizer.state()
        tensors.update({f"optimizer/{k}": v for k, v in opt_tensors.items()})
        if state_dict is not None:
            state_dict["optimizer"] = meta
    entries, blobs, offset = [], [], 0
    for name, arr in tensors.items():
        data = np.ascontiguousarray(arr, dtype=arr.dtype.newbyteorder("<")).tobytes()
        entries.append({"name": name, "dtype": arr.dtype.newbyteorder("<").str,
                        "shape": list(arr.shape), "offset": offset, "nbytes": len(data)})
        blobs.append(data)
        offset += len(data)
    vocab_digest = vocabulary.digest() if vocabulary is not None else model.vocab_digest
    header = {
        "format_version": FORMAT_VERSION,
        "model_config": model.config.to_dict(),
        "vocab_digest": vocab_digest,
        "vocabulary": list(vocabulary.index_to_token) if vocabulary is not None else None,
        "state": state_dict,
        "tensors": entries,
    }
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(head)))
        fh.write(head)
        for blob in blobs:
            fh.write(blob)
    os.replace(tmp, path)


def checkpoint_load(path: str | os.PathLike, expected_vocab_digest: str | None = None) -> Checkpoint:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if raw[:8] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    (hlen,) = struct.unpack("<I", raw[8:12])
    header = json.loads(raw[12:12 + hlen].decode("utf-8"))
    if header.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(
            f"{path}: checkpoint format version {header.get('format_version')} "
            f"is not supported (expected {FORMAT_VERSION})"
        )
    digest = header.get("vocab_digest")
    if expected_vocab_digest is not None and digest != expected_vocab_digest:
        raise CheckpointError(f"{path}: vocabulary digest {digest} does not match {expected_vocab_digest}")
    base = 12 + hlen
    params, opt = {}, {}
    for e in header["tensors"]:
        buf = raw[base + e["offset"]: base + e["offset"] + e["nbytes"]]
        arr = np.frombuffer(buf, dtype=np.dtype(e["dtype"])).reshape(e["shape"])
        arr = arr.astype(arr.dtype.newbyteorder("="))
        if e["name"].startswith("optimizer/"):
            opt[e["name"][len("optimizer/"):]] = arr
        else:
            params[e["name"]] = arr
    config = ModelConfig.from_dict(header["model_config"])
    model = Model(config, params, digest)
    vocab = Vocabulary(tuple(header["vocabulary"])) if header.get("vocabulary") else None
    if vocab is not None and vocab.digest() != digest:
        raise CheckpointError(f"{path}: stored vocabulary does not match its digest")
    state = TrainingState.from_dict(header["state"]) if header.get("state") else None
    return Checkpoint(model, vocab, state, opt)


def last_path(checkpoint_path: str | os.PathLike) -> Path:
    """Where the resumable end-of-epoch state lives next to the best checkpoint."""
    p = Path(checkpoint_path)
    return p.with_name(p.name + ".last")


def train(model: Model, train_set: EncodedSet, validation_set: EncodedSet,
          schedule: TrainingSchedule, vocabulary: Vocabulary | None = None,
          resume: Checkpoint | None = None,
          val_loss_fn: Callable[[Model], float] | None = None,
          on_epoch: Callable[[EpochRecord], None] | None = None) -> tuple[Model, TrainingHistory]:
    """Minimise validation loss; returns the best-epoch model and the history.

    ``val_loss_fn`` replaces the validation-set loss (used to script loss
    curves in tests). ``resume`` continues from a checkpoint carrying a
    training state, in which case ``model`` is ignored.
    """
    if len(train_set) == 0 or len(validation_set) == 0:
        raise DatasetError("training and validation sets must be non-empty")
    optimizer = make_optimizer(schedule.optimizer)
    if resume is not None:
        if resume.state is None:
            raise CheckpointError("checkpoint carries no training state to resume from")
        model = resume.model.copy()
        state = resume.state
        if state.optimizer:
            optimizer.load_state(state.optimizer, resume.optimizer_tensors)
        rng = np.random.default_rng()
        rng.bit_generator.state = state.rng_state
    else:
        model = model.copy()
        rng = np.random.default_rng(schedule.seed)
        state = TrainingState(learning_rate=schedule.initial_learning_rate)
    history = TrainingHistory.from_dicts(state.history)
    if val_loss_fn is None:
        val_loss_fn = lambda m: dataset_loss(m, validation_set)  # noqa: E731
    best_params = {k: v.copy() for k, v in model.params.items()}
    ckpt = schedule.checkpoint_path
    if vocabulary is not None:
        model.vocab_digest = vocabulary.digest()

    def snapshot() -> TrainingState:
        state.rng_state = rng.bit_generator.state
        state.history = [asdict(r) for r in history.records]
        return state

    N = len(train_set)
    while state.epoch < schedule.epochs and not state.finished:
        epoch = state.epoch + 1
        lr = state.learning_rate
        order = rng.permutation(N)
        total = 0.0
        for start in range(0, N, schedule.batch_size):
            rows = order[start:start + schedule.batch_size]
            batch = train_set.subset(rows)
            probs, cache = forward(model, (batch.indices, batch.lengths), "train", rng=rng)
            batch_loss = loss(probs, batch.labels).value
            if not math.isfinite(batch_loss):
                raise NumericError(f"epoch {epoch}: non-finite training loss")
            total += batch_loss * len(rows)
            gradient_step(model, backward(model, cache, batch.labels), lr, optimizer)
        val = float(val_loss_fn(model))
        if not math.isfinite(val):
            raise NumericError(f"epoch {epoch}: non-finite validation loss")
        rec = EpochRecord(epoch, total / N, val, lr)
        if val < state.best_val - schedule.min_delta:
            state.best_val, state.best_epoch = val, epoch
            state.wait = state.plateau_wait = 0
            rec.checkpointed = True
            best_params = {k: v.copy() for k, v in model.params.items()}
        else:
            state.wait += 1
            state.plateau_wait += 1
            if state.plateau_wait >= schedule.plateau_patience:
                state.learning_rate *= schedule.plateau_factor
                state.plateau_wait = 0
                rec.lr_reduced = True
        if schedule.lr_decay != 1.0:
            state.learning_rate *= schedule.lr_decay
            rec.lr_decayed = True
        if state.wait >= schedule.early_stop_patience:
            rec.stopped_early = True
            state.finished = True
        state.epoch = epoch
        history.records.append(rec)
        logger.info("epoch %d train_loss=%.5f val_loss=%.5f lr=%.3g%s", epoch, rec.train_loss,
                    val, lr, " *" if rec.checkpointed else "")
        if ckpt:
            if rec.checkpointed:
                checkpoint_save(model, ckpt, vocabulary, snapshot(), optimizer)
            checkpoint_save(model, last_path(ckpt), vocabulary, snapshot(), optimizer)
        if on_epoch is not None:
            on_epoch(rec)

    if ckpt and Path(ckpt).exists():
        best = checkpoint_load(ckpt).model
        best.vocab_digest = model.vocab_digest
    else:
        best = Model(model.config, best_params, model.vocab_digest)
    return best, history
