from __future__ import annotations

import numpy as np
import pytest

from logrepair.dataset import (
    ContextConfig,
    EncodedSample,
    Vocabulary,
    build_training_set,
    build_vocabulary,
)
from logrepair.errors import CheckpointError, EncodingError, TrainingError
from logrepair.repairnet import (
    ArchitectureConfig,
    Checkpoint,
    RepairModel,
    TrainConfig,
    forward,
    model_from_checkpoint,
    pack_samples,
    repair,
    train,
    write_history_csv,
)


def rng(seed=0):
    return np.random.Generator(np.random.Philox(seed))


def toy_vocab(n_labels=6):
    return Vocabulary([f"L{i}" for i in range(n_labels)], {"resource": ["r0", "r1", "r2"]})


def toy_samples(n, vocab, seed=0, k=3):
    """Deterministic task: the label is the nearest suffix token."""
    gen = rng(seed)
    n_ids = vocab.activity_count
    samples = []
    for index in range(n):
        prefix = tuple(int(v) for v in gen.integers(0, n_ids, size=k))
        suffix = tuple(int(v) for v in gen.integers(2, n_ids, size=k))
        samples.append(
            EncodedSample(
                prefix_ids=prefix,
                suffix_ids=suffix,
                attribute_ids=(int(gen.integers(0, 5)),),
                label_id=suffix[-1],
                origin=(f"t{index}", 0),
            )
        )
    return samples


small_arch = ArchitectureConfig(
    k=3,
    activity_embedding_dim=8,
    attribute_embedding_dims={"resource": 4},
    lstm_layer_sizes=(8, 4),
    dropout_rate=0.1,
)


def test_architecture_validation():
    with pytest.raises(ValueError):
        ArchitectureConfig(use_prefix=False, use_suffix=False)
    with pytest.raises(ValueError):
        ArchitectureConfig(dropout_rate=1.0)
    with pytest.raises(ValueError):
        ArchitectureConfig(lstm_layer_sizes=())


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(batch_size=1)
    with pytest.raises(ValueError):
        TrainConfig(validation_fraction=0.0)


def test_forward_is_a_distribution():
    vocab = toy_vocab()
    model = RepairModel(small_arch, vocab, rng=rng(1))
    sample = toy_samples(1, vocab)[0]
    probs = forward(model, sample)
    assert probs.shape == (vocab.activity_count,)
    assert abs(float(probs.sum()) - 1.0) < 1e-5
    assert np.all(probs >= 0)


def test_forward_batch_rows_match_single_samples():
    vocab = toy_vocab()
    model = RepairModel(small_arch, vocab, rng=rng(2))
    samples = toy_samples(5, vocab, seed=3)
    prefix, suffix, attributes, _ = pack_samples(samples)
    probs, _ = model.forward_batch(prefix, suffix, attributes, training=False)
    for index, sample in enumerate(samples):
        assert np.allclose(probs[index], forward(model, sample), atol=1e-7)


def test_identical_samples_get_identical_rows():
    vocab = toy_vocab()
    model = RepairModel(small_arch, vocab, rng=rng(4))
    sample = toy_samples(1, vocab, seed=5)[0]
    prefix, suffix, attributes, _ = pack_samples([sample, sample, sample])
    probs, _ = model.forward_batch(prefix, suffix, attributes, training=False)
    assert np.array_equal(probs[0], probs[1])
    assert np.array_equal(probs[1], probs[2])


def test_disabled_prefix_branch_ignores_prefix_ids():
    vocab = toy_vocab()
    arch = ArchitectureConfig(
        k=3,
        activity_embedding_dim=8,
        attribute_embedding_dims={"resource": 4},
        lstm_layer_sizes=(6,),
        use_prefix=False,
    )
    model = RepairModel(arch, vocab, rng=rng(6))
    sample = toy_samples(1, vocab, seed=7)[0]
    other = EncodedSample(
        prefix_ids=(2, 3, 4),
        suffix_ids=sample.suffix_ids,
        attribute_ids=sample.attribute_ids,
        label_id=sample.label_id,
        origin=sample.origin,
    )
    assert np.array_equal(forward(model, sample), forward(model, other))


def test_out_of_range_ids_are_encoding_errors():
    vocab = toy_vocab()
    model = RepairModel(small_arch, vocab, rng=rng(8))
    bad = EncodedSample(
        prefix_ids=(0, 0, vocab.activity_count),
        suffix_ids=(0, 0, 0),
        attribute_ids=(0,),
        label_id=None,
        origin=("t", 0),
    )
    with pytest.raises(EncodingError):
        forward(model, bad)


def test_train_rejects_tiny_or_single_class_sets():
    vocab = toy_vocab()
    samples = toy_samples(5, vocab)
    with pytest.raises(TrainingError):
        train(samples, vocab, small_arch)
    constant = [
        EncodedSample(s.prefix_ids, s.suffix_ids, s.attribute_ids, 2, s.origin)
        for s in toy_samples(20, vocab)
    ]
    with pytest.raises(TrainingError):
        train(constant, vocab, small_arch)


def test_training_learns_the_suffix_task():
    vocab = toy_vocab()
    samples = toy_samples(2000, vocab, seed=9)
    config = TrainConfig(max_epochs=30, early_stop_patience=30, seed=1)
    checkpoint = train(samples, vocab, small_arch, config)
    assert any(s.val_accuracy > 0.99 for s in checkpoint.history)
    assert checkpoint.history[0].epoch == 1
    # the returned parameters belong to the epoch with the lowest val loss
    best = checkpoint.best_epoch()
    assert best.val_loss == min(s.val_loss for s in checkpoint.history)


def test_patience_zero_trains_exactly_one_epoch():
    vocab = toy_vocab()
    samples = toy_samples(50, vocab)
    config = TrainConfig(max_epochs=20, early_stop_patience=0, seed=2)
    checkpoint = train(samples, vocab, small_arch, config)
    assert len(checkpoint.history) == 1


def test_training_is_deterministic():
    vocab = toy_vocab()
    samples = toy_samples(200, vocab, seed=10)
    config = TrainConfig(max_epochs=3, early_stop_patience=3, seed=11)
    first = train(samples, vocab, small_arch, config)
    second = train(samples, vocab, small_arch, config)
    assert first.history == second.history
    for name in first.params:
        assert np.array_equal(first.params[name], second.params[name])


def test_history_csv_is_deterministic(tmp_path):
    vocab = toy_vocab()
    samples = toy_samples(100, vocab, seed=12)
    config = TrainConfig(max_epochs=2, early_stop_patience=2, seed=13)
    out = []
    for _ in range(2):
        checkpoint = train(samples, vocab, small_arch, config)
        path = tmp_path / "history.csv"
        with open(path, "wb") as sink:
            write_history_csv(checkpoint.history, sink)
        out.append(path.read_bytes())
    assert out[0] == out[1]
    header = out[0].decode("utf-8").splitlines()[0]
    assert header == "epoch,train_loss,val_loss,val_accuracy"


def test_checkpoint_roundtrip(tmp_path):
    vocab = toy_vocab()
    samples = toy_samples(80, vocab, seed=14)
    config = TrainConfig(max_epochs=2, early_stop_patience=2, seed=15)
    checkpoint = train(samples, vocab, small_arch, config)
    path = tmp_path / "model.npz"
    checkpoint.save(path)
    loaded = Checkpoint.load(path)
    assert loaded.architecture == checkpoint.architecture
    assert loaded.vocab == checkpoint.vocab
    assert loaded.history == checkpoint.history
    for name in checkpoint.params:
        assert np.array_equal(loaded.params[name], checkpoint.params[name])
    # the rebuilt model reproduces the original probabilities exactly
    sample = toy_samples(1, vocab, seed=16)[0]
    assert np.array_equal(forward(checkpoint, sample), forward(loaded, sample))


def test_checkpoint_shape_mismatch_is_rejected(tmp_path):
    vocab = toy_vocab()
    samples = toy_samples(80, vocab, seed=17)
    checkpoint = train(
        samples, vocab, small_arch, TrainConfig(max_epochs=1, early_stop_patience=1, seed=18)
    )
    broken = dict(checkpoint.params)
    broken["classifier.bias"] = np.zeros(99, dtype=np.float32)
    path = tmp_path / "broken.npz"
    Checkpoint(
        checkpoint.architecture, vocab, broken, checkpoint.history
    ).save(path)
    with pytest.raises(CheckpointError, match="classifier.bias"):
        Checkpoint.load(path)


def airport_checkpoint(airport_log, seed=3):
    vocab = build_vocabulary(airport_log)
    k3 = ContextConfig(k=3)
    samples = build_training_set(airport_log, vocab, k3)
    arch = ArchitectureConfig(
        k=3,
        activity_embedding_dim=8,
        attribute_embedding_dims={"resource": 4},
        lstm_layer_sizes=(8, 4),
        dropout_rate=0.0,
    )
    config = TrainConfig(
        max_epochs=60, early_stop_patience=60, batch_size=4, seed=seed
    )
    return vocab, train(samples, vocab, arch, config)


def test_repair_fills_every_missing_label(airport_log):
    vocab, checkpoint = airport_checkpoint(airport_log)
    repaired = repair(airport_log, checkpoint, ContextConfig(k=3))
    assert repaired.missing_count == 0
    assert repaired.event_count == airport_log.event_count
    for position in (1, 3):
        label = repaired.traces[2].events[position].activity
        assert label in vocab.activities()
    # untouched events keep their labels and attributes
    assert repaired.traces[0] == airport_log.traces[0]


def test_repair_without_missing_is_identity(airport_log):
    vocab, checkpoint = airport_checkpoint(airport_log, seed=4)
    repaired = repair(airport_log, checkpoint, ContextConfig(k=3))
    assert repair(repaired, checkpoint, ContextConfig(k=3)) == repaired


def test_repair_is_deterministic(airport_log):
    _, checkpoint = airport_checkpoint(airport_log, seed=5)
    first = repair(airport_log, checkpoint, ContextConfig(k=3))
    second = repair(airport_log, checkpoint, ContextConfig(k=3))
    assert first == second


def test_model_from_checkpoint_rebuilds_running_stats():
    vocab = toy_vocab()
    samples = toy_samples(60, vocab, seed=19)
    checkpoint = train(
        samples, vocab, small_arch, TrainConfig(max_epochs=2, early_stop_patience=2, seed=20)
    )
    model = model_from_checkpoint(checkpoint)
    assert np.array_equal(
        model.batch_norm.running_mean, checkpoint.params["batch_norm.running_mean"]
    )
    assert not np.array_equal(
        model.batch_norm.running_mean, np.zeros_like(model.batch_norm.running_mean)
    )
