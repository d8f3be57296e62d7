import json
import struct

import numpy as np
import pytest

from codemix_hate.embeddings import Vocabulary
from codemix_hate.errors import CheckpointError, ConfigError, DatasetError, NumericError
from codemix_hate.model import Model, ModelConfig, init_model, predict_proba
from codemix_hate.training import (
    MAGIC,
    SGD,
    Adam,
    EncodedSet,
    TrainingHistory,
    TrainingSchedule,
    checkpoint_load,
    checkpoint_save,
    gradient_step,
    last_path,
    train,
)

VOCAB = Vocabulary(("<pad>", "<unk>", "a", "b", "c", "d", "e", "f"))


def small_model(kind="lstm", seed=0, dtype="float32"):
    cfg = ModelConfig(cell_kind=kind, hidden_units=5, embedding_dimension=4, max_length=6,
                      dense_layers=(6, 3), recurrent_dropout=0.2, seed=seed, dtype=dtype)
    rng = np.random.default_rng(seed)
    model = init_model(cfg, rng.uniform(-0.25, 0.25, size=(len(VOCAB), 4)), rng)
    model.vocab_digest = VOCAB.digest()
    return model


def toy_set(n=24, seed=0):
    rng = np.random.default_rng(seed)
    labels = np.arange(n) % 3
    lengths = rng.integers(2, 7, size=n)
    idx = np.zeros((n, 6), dtype=np.int64)
    for i in range(n):
        idx[i, : lengths[i]] = 2 + 2 * labels[i] + rng.integers(0, 2, size=lengths[i])
    return EncodedSet(idx, lengths, labels)


def scalar_model(value):
    return Model(ModelConfig(embedding_dimension=1), {"w": np.array([value], dtype=np.float64)})


# ---- gradient_step

def test_sgd_scalar_rule():
    model = scalar_model(2.0)
    gradient_step(model, {"w": np.array([0.5])}, 0.1)
    assert model.params["w"][0] == pytest.approx(2.0 - 0.1 * 0.5, abs=1e-15)
    assert model.version == 1


@pytest.mark.parametrize("optimizer", [None, SGD(), Adam()])
def test_zero_gradient_leaves_parameters(optimizer):
    model = small_model()
    before = {k: v.copy() for k, v in model.params.items()}
    gradient_step(model, {k: np.zeros_like(v) for k, v in model.params.items()}, 0.1, optimizer)
    for k in before:
        np.testing.assert_array_equal(model.params[k], before[k])


def test_frozen_embedding_untouched():
    model = small_model()
    model.config = ModelConfig(**{**model.config.to_dict(), "embeddings_trainable": False})
    before = model.params["embedding"].copy()
    gradient_step(model, {k: np.ones_like(v) for k, v in model.params.items()}, 0.1)
    np.testing.assert_array_equal(model.params["embedding"], before)
    assert not np.array_equal(model.params["fwd.W"], small_model().params["fwd.W"])


def test_non_finite_gradient_aborts():
    model = scalar_model(1.0)
    with pytest.raises(NumericError):
        gradient_step(model, {"w": np.array([np.nan])}, 0.1)
    assert model.params["w"][0] == 1.0


def test_gradient_shape_mismatch():
    with pytest.raises(ValueError):
        gradient_step(scalar_model(1.0), {"w": np.zeros(2)}, 0.1)


def bowl(optimizer, steps):
    # f(w) = 0.5 (w - c)^T A (w - c) with A positive definite
    A = np.diag([1.0, 3.0, 0.5])
    c = np.array([1.0, -2.0, 0.5])
    model = Model(ModelConfig(embedding_dimension=1), {"w": np.zeros(3)})
    dist = [np.linalg.norm(model.params["w"] - c)]
    for _ in range(steps):
        gradient_step(model, {"w": A @ (model.params["w"] - c)}, 0.05, optimizer)
        dist.append(np.linalg.norm(model.params["w"] - c))
    return dist


def test_quadratic_bowl_distance_strictly_decreases():
    dist = bowl(SGD(), 100)
    assert all(b < a for a, b in zip(dist, dist[1:]))


def test_adam_converges_on_quadratic_bowl():
    # momentum may overshoot, so only the end point is checked
    dist = bowl(Adam(), 300)
    assert dist[-1] < 1e-4 * dist[0]


def test_adam_first_step_moves_by_learning_rate():
    model = scalar_model(0.0)
    gradient_step(model, {"w": np.array([3.0])}, 0.01, Adam())
    # bias-corrected m/sqrt(v) is sign(g) on the first step
    assert model.params["w"][0] == pytest.approx(-0.01, rel=1e-6)


# ---- schedule

@pytest.mark.parametrize("kwargs", [
    {"initial_learning_rate": 0}, {"initial_learning_rate": -1e-3}, {"epochs": 0},
    {"batch_size": 0}, {"plateau_factor": 1.0}, {"optimizer": "rmsprop"}, {"lr_decay": 0},
])
def test_schedule_validation(kwargs):
    with pytest.raises(ConfigError):
        TrainingSchedule(**kwargs)


def scripted(values):
    it = iter(values)
    return lambda model: next(it)


def test_early_stopping_with_scripted_losses():
    schedule = TrainingSchedule(epochs=50, early_stop_patience=3, min_delta=0.0)
    _, history = train(small_model(), toy_set(), toy_set(6, 1), schedule,
                       val_loss_fn=scripted([1.0, 0.9] + [0.9] * 48))
    assert len(history) == 5
    assert history.best_epoch == 2
    assert history.records[-1].stopped_early
    assert history.summary()["stopped_early"]


def test_early_stopping_never_fires_before_patience():
    schedule = TrainingSchedule(epochs=6, early_stop_patience=10)
    _, history = train(small_model(), toy_set(), toy_set(6, 1), schedule,
                       val_loss_fn=scripted([1.0] * 6))
    assert len(history) == 6 and not history.records[-1].stopped_early


def test_plateau_halves_learning_rate():
    schedule = TrainingSchedule(initial_learning_rate=0.01, epochs=4, plateau_patience=2,
                                plateau_factor=0.5)
    _, history = train(small_model(), toy_set(), toy_set(6, 1), schedule,
                       val_loss_fn=scripted([1.0, 1.0, 1.0, 1.0]))
    assert [r.learning_rate for r in history.records] == [0.01, 0.01, 0.01, 0.005]
    assert [r.lr_reduced for r in history.records] == [False, False, True, False]


def test_learning_rate_never_increases():
    schedule = TrainingSchedule(epochs=12, plateau_patience=1, lr_decay=0.9)
    _, history = train(small_model(), toy_set(), toy_set(6, 1), schedule,
                       val_loss_fn=scripted([1.0, 0.5, 0.6, 0.4, 0.7, 0.7, 0.3, 0.8, 0.9, 1, 1, 1]))
    lrs = [r.learning_rate for r in history.records]
    assert all(b <= a for a, b in zip(lrs, lrs[1:]))
    assert lrs[1] == pytest.approx(0.009)


def test_non_finite_validation_loss_aborts():
    with pytest.raises(NumericError, match="epoch 1"):
        train(small_model(), toy_set(), toy_set(6, 1), TrainingSchedule(epochs=2),
              val_loss_fn=scripted([float("nan")]))


def test_empty_sets_rejected():
    empty = EncodedSet(np.zeros((0, 6), dtype=np.int64), np.zeros(0, dtype=np.int64), [])
    with pytest.raises(DatasetError):
        train(small_model(), empty, toy_set(), TrainingSchedule(epochs=1))


def test_best_model_is_the_lowest_validation_epoch(tmp_path):
    val = toy_set(9, 1)
    schedule = TrainingSchedule(epochs=8, initial_learning_rate=0.05,
                                checkpoint_path=str(tmp_path / "m.ckpt"))
    best, history = train(small_model(), toy_set(), val, schedule, VOCAB)
    from codemix_hate.training import dataset_loss
    assert dataset_loss(best, val) == pytest.approx(min(history.val_losses), abs=1e-6)
    assert history.val_losses[history.best_epoch - 1] == min(history.val_losses)
    assert history.records[0].val_loss > min(history.val_losses)


def test_training_is_deterministic(tmp_path):
    runs = []
    for name in ("a", "b"):
        schedule = TrainingSchedule(epochs=4, checkpoint_path=str(tmp_path / f"{name}.ckpt"), seed=5)
        _, history = train(small_model(), toy_set(), toy_set(6, 1), schedule, VOCAB)
        runs.append((history.to_jsonl(), (tmp_path / f"{name}.ckpt").read_bytes()))
    assert runs[0] == runs[1]


def test_history_jsonl_round_trip():
    schedule = TrainingSchedule(epochs=3)
    _, history = train(small_model(), toy_set(), toy_set(6, 1), schedule)
    rows = [json.loads(line) for line in history.to_jsonl().splitlines()]
    assert TrainingHistory.from_dicts(rows) == history


# ---- checkpoints

def test_checkpoint_round_trip_bitwise(tmp_path):
    model = small_model(kind="bilstm")
    checkpoint_save(model, tmp_path / "m.ckpt", VOCAB)
    ck = checkpoint_load(tmp_path / "m.ckpt", VOCAB.digest())
    assert ck.vocabulary == VOCAB
    assert ck.model.config == model.config
    rng = np.random.default_rng(0)
    lengths = rng.integers(1, 7, size=100)
    idx = np.zeros((100, 6), dtype=np.int64)
    for i, n in enumerate(lengths):
        idx[i, :n] = rng.integers(0, len(VOCAB), size=n)
    a = predict_proba(model, (idx, lengths))
    b = predict_proba(ck.model, (idx, lengths))
    assert a.tobytes() == b.tobytes()


def test_checkpoint_layout(tmp_path):
    checkpoint_save(small_model(), tmp_path / "m.ckpt", VOCAB)
    raw = (tmp_path / "m.ckpt").read_bytes()
    assert raw.startswith(MAGIC)
    (n,) = struct.unpack("<I", raw[8:12])
    header = json.loads(raw[12:12 + n])
    assert header["format_version"] == 1
    assert header["vocab_digest"] == VOCAB.digest()
    assert len(raw) == 12 + n + sum(t["nbytes"] for t in header["tensors"])


def rewrite_header(path, **changes):
    raw = path.read_bytes()
    (n,) = struct.unpack("<I", raw[8:12])
    header = json.loads(raw[12:12 + n])
    header.update(changes)
    text = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    path.write_bytes(MAGIC + struct.pack("<I", len(text)) + text + raw[12 + n:])


def test_checkpoint_wrong_version(tmp_path):
    path = tmp_path / "m.ckpt"
    checkpoint_save(small_model(), path, VOCAB)
    rewrite_header(path, format_version=2)
    with pytest.raises(CheckpointError, match="version 2"):
        checkpoint_load(path)


def test_checkpoint_vocabulary_mismatch(tmp_path):
    path = tmp_path / "m.ckpt"
    checkpoint_save(small_model(), path, VOCAB)
    other = Vocabulary(("<pad>", "<unk>", "zzz"))
    with pytest.raises(CheckpointError, match="vocabulary digest"):
        checkpoint_load(path, other.digest())


def test_checkpoint_not_a_checkpoint(tmp_path):
    (tmp_path / "x").write_bytes(b"hello world, not a checkpoint")
    with pytest.raises(CheckpointError):
        checkpoint_load(tmp_path / "x")
    with pytest.raises(CheckpointError):
        checkpoint_load(tmp_path / "missing")


@pytest.mark.parametrize("optimizer", ["adam", "sgd"])
def test_resume_matches_uninterrupted_run(tmp_path, optimizer):
    def schedule(epochs, name):
        return TrainingSchedule(epochs=epochs, seed=3, optimizer=optimizer,
                                checkpoint_path=str(tmp_path / f"{name}.ckpt"))

    full_best, full = train(small_model(), toy_set(), toy_set(6, 1), schedule(6, "full"), VOCAB)
    train(small_model(), toy_set(), toy_set(6, 1), schedule(3, "part"), VOCAB)
    resume = checkpoint_load(last_path(tmp_path / "part.ckpt"))
    assert resume.state.epoch == 3
    best, history = train(None, toy_set(), toy_set(6, 1), schedule(6, "part"), VOCAB, resume=resume)
    assert history.to_jsonl() == full.to_jsonl()
    for k in full_best.params:
        np.testing.assert_array_equal(best.params[k], full_best.params[k])


def test_resume_needs_state(tmp_path):
    checkpoint_save(small_model(), tmp_path / "m.ckpt", VOCAB)
    with pytest.raises(CheckpointError, match="no training state"):
        train(None, toy_set(), toy_set(6, 1), TrainingSchedule(epochs=2),
              resume=checkpoint_load(tmp_path / "m.ckpt"))
