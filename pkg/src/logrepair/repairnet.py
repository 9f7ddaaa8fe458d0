"""Dual-context classifier: assembly, training loop, checkpoints, repair.

The network embeds the prefix and suffix windows with separate tables, runs
each through its own recurrent stack, concatenates the two final hidden
states with the attribute embeddings, batch-normalizes, and classifies with a
dense softmax over all activity ids.  Branches can be switched off for the
ablation variants; at least one context branch must stay on.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .dataset import (
    ContextConfig,
    EncodedSample,
    MISSING_ID,
    PAD_ID,
    Vocabulary,
    build_repair_set,
)
from .errors import CheckpointError, EncodingError, TrainingError
from .eventlog import EventLog, Trace, replace_activity
from .neural.layers import (
    BatchNorm,
    Dense,
    Embedding,
    LstmStack,
    batch_cross_entropy,
    dropout_backward,
    dropout_forward,
    softmax,
    softmax_cross_entropy_grad,
)
from .neural.optim import Nadam


@dataclass(frozen=True)
class ArchitectureConfig:
    k: int = 5
    activity_embedding_dim: int = 100
    attribute_embedding_dims: dict[str, int] = field(
        default_factory=lambda: {"resource": 16}
    )
    lstm_layer_sizes: tuple[int, ...] = (32, 16)
    dropout_rate: float = 0.2
    use_prefix: bool = True
    use_suffix: bool = True
    use_attributes: bool = True

    def __post_init__(self):
        object.__setattr__(self, "lstm_layer_sizes", tuple(self.lstm_layer_sizes))
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if not self.use_prefix and not self.use_suffix:
            raise ValueError("at least one context branch must be enabled")
        if not self.lstm_layer_sizes:
            raise ValueError("lstm_layer_sizes must not be empty")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must be in [0, 1)")


@dataclass(frozen=True)
class TrainConfig:
    max_epochs: int = 100
    early_stop_patience: int = 10
    batch_size: int = 32
    learning_rate: float = 0.002
    validation_fraction: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")
        if self.early_stop_patience < 0:
            raise ValueError("early_stop_patience must be >= 0")
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2 (batch statistics)")
        if not 0.0 < self.validation_fraction < 1.0:
            raise ValueError("validation_fraction must be in (0, 1)")


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    train_loss: float
    val_loss: float
    val_accuracy: float


class RepairModel:
    def __init__(
        self,
        architecture: ArchitectureConfig,
        vocab: Vocabulary,
        rng: np.random.Generator | None = None,
        dtype=np.float32,
    ):
        self.architecture = architecture
        self.vocab = vocab
        self.dtype = dtype
        ac = architecture
        self.attribute_names = tuple(ac.attribute_embedding_dims) if ac.use_attributes else ()
        for name in self.attribute_names:
            if name not in vocab.attribute_names:
                raise EncodingError(f"vocabulary has no attribute {name!r}")
        concat = 0
        # construction order fixes the rng consumption order
        if ac.use_prefix:
            self.prefix_embedding = Embedding(
                vocab.activity_count, ac.activity_embedding_dim, rng, dtype
            )
            self.prefix_stack = LstmStack(
                ac.activity_embedding_dim, ac.lstm_layer_sizes, rng, dtype
            )
            concat += ac.lstm_layer_sizes[-1]
        if ac.use_suffix:
            self.suffix_embedding = Embedding(
                vocab.activity_count, ac.activity_embedding_dim, rng, dtype
            )
            self.suffix_stack = LstmStack(
                ac.activity_embedding_dim, ac.lstm_layer_sizes, rng, dtype
            )
            concat += ac.lstm_layer_sizes[-1]
        self.attribute_embeddings = {}
        for name in self.attribute_names:
            dim = ac.attribute_embedding_dims[name]
            self.attribute_embeddings[name] = Embedding(
                vocab.attribute_count(name), dim, rng, dtype
            )
            concat += dim
        self.batch_norm = BatchNorm(concat, dtype=dtype)
        self.classifier = Dense(concat, vocab.activity_count, rng, dtype)

    # ---------- parameter access ----------

    def parameters(self) -> dict[str, np.ndarray]:
        """Trainable arrays, keyed by a stable dotted name."""
        out: dict[str, np.ndarray] = {}
        ac = self.architecture
        if ac.use_prefix:
            out["prefix_embedding.table"] = self.prefix_embedding.table
            for name, arr in self.prefix_stack.named_arrays().items():
                out[f"prefix_stack.{name}"] = arr
        if ac.use_suffix:
            out["suffix_embedding.table"] = self.suffix_embedding.table
            for name, arr in self.suffix_stack.named_arrays().items():
                out[f"suffix_stack.{name}"] = arr
        for name, emb in self.attribute_embeddings.items():
            out[f"attribute_embedding.{name}.table"] = emb.table
        out["batch_norm.gamma"] = self.batch_norm.gamma
        out["batch_norm.beta"] = self.batch_norm.beta
        out["classifier.weight"] = self.classifier.weight
        out["classifier.bias"] = self.classifier.bias
        return out

    def state(self) -> dict[str, np.ndarray]:
        """Parameters plus the batch-norm running statistics."""
        out = self.parameters()
        out["batch_norm.running_mean"] = self.batch_norm.running_mean
        out["batch_norm.running_var"] = self.batch_norm.running_var
        return out

    def load_state(self, state: Mapping[str, np.ndarray]) -> None:
        mine = self.state()
        missing = set(mine) - set(state)
        extra = set(state) - set(mine)
        if missing or extra:
            raise CheckpointError(
                f"state names do not match (missing {sorted(missing)}, "
                f"unexpected {sorted(extra)})"
            )
        for name, arr in mine.items():
            stored = np.asarray(state[name])
            if stored.shape != arr.shape:
                raise CheckpointError(
                    f"{name}: stored shape {stored.shape} does not match "
                    f"architecture shape {arr.shape}"
                )
            arr[...] = stored.astype(arr.dtype)

    # ---------- forward / backward ----------

    def _check_ids(self, ids, limit, what):
        ids = np.asarray(ids)
        if ids.size and (ids.min() < 0 or ids.max() >= limit):
            raise EncodingError(f"{what} id outside the vocabulary (< {limit})")
        return ids

    def forward_batch(self, prefix_ids, suffix_ids, attribute_ids, training=False, rng=None):
        """Class probabilities for a batch; returns (probs, cache)."""
        ac = self.architecture
        parts = []
        cache: dict = {"parts": []}
        if ac.use_prefix:
            ids = self._check_ids(prefix_ids, self.vocab.activity_count, "prefix")
            vecs = self.prefix_embedding.forward(ids)
            dropped, mask = dropout_forward(vecs, ac.dropout_rate, training, rng)
            final, stack_cache = self.prefix_stack.forward(dropped)
            parts.append(final)
            cache["parts"].append(("prefix", ids, mask, stack_cache, final.shape[1]))
        if ac.use_suffix:
            ids = self._check_ids(suffix_ids, self.vocab.activity_count, "suffix")
            vecs = self.suffix_embedding.forward(ids)
            dropped, mask = dropout_forward(vecs, ac.dropout_rate, training, rng)
            final, stack_cache = self.suffix_stack.forward(dropped)
            parts.append(final)
            cache["parts"].append(("suffix", ids, mask, stack_cache, final.shape[1]))
        if self.attribute_names:
            attribute_ids = np.asarray(attribute_ids)
            if attribute_ids.shape[1] != len(self.vocab.attribute_names):
                raise EncodingError(
                    f"expected {len(self.vocab.attribute_names)} attribute columns "
                    f"(one per vocabulary attribute), got {attribute_ids.shape[1]}"
                )
        for name in self.attribute_names:
            # sample columns follow the vocabulary's attribute order
            column = self.vocab.attribute_names.index(name)
            emb = self.attribute_embeddings[name]
            ids = self._check_ids(
                attribute_ids[:, column], emb.table.shape[0], f"attribute {name}"
            )
            vecs = emb.forward(ids)
            dropped, mask = dropout_forward(vecs, ac.dropout_rate, training, rng)
            parts.append(dropped)
            cache["parts"].append((f"attribute.{name}", ids, mask, None, dropped.shape[1]))
        concat = np.concatenate(parts, axis=1).astype(self.dtype)
        normed, bn_cache = self.batch_norm.forward(concat, training)
        logits = self.classifier.forward(normed)
        probs = softmax(logits)
        cache["bn"] = bn_cache
        cache["normed"] = normed
        return probs, cache

    def loss_and_gradients(self, prefix_ids, suffix_ids, attribute_ids, labels, rng):
        """Mean cross-entropy on a training batch and gradients for every parameter."""
        probs, cache = self.forward_batch(
            prefix_ids, suffix_ids, attribute_ids, training=True, rng=rng
        )
        loss = batch_cross_entropy(probs, labels)
        grads = self._backward(probs, labels, cache)
        return loss, grads

    def loss_batch(self, prefix_ids, suffix_ids, attribute_ids, labels, training=False, rng=None):
        probs, _ = self.forward_batch(
            prefix_ids, suffix_ids, attribute_ids, training=training, rng=rng
        )
        return batch_cross_entropy(probs, labels)

    def _backward(self, probs, labels, cache):
        grads: dict[str, np.ndarray] = {}
        dlogits = softmax_cross_entropy_grad(probs, labels).astype(self.dtype)
        dnormed, dweight, dbias = self.classifier.backward(cache["normed"], dlogits)
        grads["classifier.weight"] = dweight
        grads["classifier.bias"] = dbias
        dconcat, dgamma, dbeta = self.batch_norm.backward(cache["bn"], dnormed)
        grads["batch_norm.gamma"] = dgamma
        grads["batch_norm.beta"] = dbeta
        offset = 0
        for kind, ids, mask, stack_cache, width in cache["parts"]:
            dpart = dconcat[:, offset : offset + width]
            offset += width
            if kind == "prefix":
                dxs, stack_grads = self.prefix_stack.backward(stack_cache, dpart)
                dvecs = dropout_backward(dxs, mask)
                grads["prefix_embedding.table"] = self.prefix_embedding.backward(ids, dvecs)
                for name, value in stack_grads.items():
                    grads[f"prefix_stack.{name}"] = value
            elif kind == "suffix":
                dxs, stack_grads = self.suffix_stack.backward(stack_cache, dpart)
                dvecs = dropout_backward(dxs, mask)
                grads["suffix_embedding.table"] = self.suffix_embedding.backward(ids, dvecs)
                for name, value in stack_grads.items():
                    grads[f"suffix_stack.{name}"] = value
            else:
                name = kind.split(".", 1)[1]
                dvecs = dropout_backward(dpart, mask)
                grads[f"attribute_embedding.{name}.table"] = self.attribute_embeddings[
                    name
                ].backward(ids, dvecs)
        return grads


@dataclass(frozen=True)
class Checkpoint:
    """Everything needed to rebuild the trained model and decode its output."""

    architecture: ArchitectureConfig
    vocab: Vocabulary
    params: dict[str, np.ndarray]
    history: tuple[EpochStats, ...]

    def best_epoch(self) -> EpochStats:
        return min(self.history, key=lambda s: s.val_loss)

    def save(self, path) -> None:
        meta = {
            "format_version": 1,
            "architecture": {
                "k": self.architecture.k,
                "activity_embedding_dim": self.architecture.activity_embedding_dim,
                "attribute_embedding_dims": dict(self.architecture.attribute_embedding_dims),
                "lstm_layer_sizes": list(self.architecture.lstm_layer_sizes),
                "dropout_rate": self.architecture.dropout_rate,
                "use_prefix": self.architecture.use_prefix,
                "use_suffix": self.architecture.use_suffix,
                "use_attributes": self.architecture.use_attributes,
            },
            "activities": self.vocab.activities(),
            "attribute_values": {
                name: self.vocab.attribute_values(name)
                for name in self.vocab.attribute_names
            },
            "history": [
                [s.epoch, s.train_loss, s.val_loss, s.val_accuracy] for s in self.history
            ],
        }
        arrays = {f"param:{name}": value for name, value in self.params.items()}
        # hand savez a file object so it cannot append its own .npz suffix
        with open(path, "wb") as sink:
            np.savez(sink, meta=json.dumps(meta, sort_keys=True), **arrays)

    @classmethod
    def load(cls, path) -> "Checkpoint":
        with np.load(path, allow_pickle=False) as data:
            try:
                meta = json.loads(str(data["meta"]))
            except (KeyError, json.JSONDecodeError) as exc:
                raise CheckpointError(f"unreadable checkpoint metadata: {exc}") from None
            if meta.get("format_version") != 1:
                raise CheckpointError(
                    f"unsupported checkpoint format {meta.get('format_version')!r}"
                )
            params = {
                name[len("param:") :]: data[name]
                for name in data.files
                if name.startswith("param:")
            }
        spec = dict(meta["architecture"])
        spec["lstm_layer_sizes"] = tuple(spec["lstm_layer_sizes"])
        architecture = ArchitectureConfig(**spec)
        vocab = Vocabulary(meta["activities"], meta["attribute_values"])
        history = tuple(
            EpochStats(int(e), float(t), float(v), float(a))
            for e, t, v, a in meta["history"]
        )
        checkpoint = cls(architecture, vocab, params, history)
        model_from_checkpoint(checkpoint)  # validates names and shapes
        return checkpoint


def model_from_checkpoint(checkpoint: Checkpoint, dtype=np.float32) -> RepairModel:
    model = RepairModel(checkpoint.architecture, checkpoint.vocab, rng=None, dtype=dtype)
    model.load_state(checkpoint.params)
    return model


def pack_samples(samples: Sequence[EncodedSample]):
    """Stack encoded samples into int arrays (prefix, suffix, attributes, labels)."""
    prefix = np.array([s.prefix_ids for s in samples], dtype=np.int64)
    suffix = np.array([s.suffix_ids for s in samples], dtype=np.int64)
    attributes = np.array([s.attribute_ids for s in samples], dtype=np.int64)
    if attributes.ndim == 1:  # no attributes configured
        attributes = attributes.reshape(len(samples), 0)
    if any(s.label_id is None for s in samples):
        labels = None
    else:
        labels = np.array([s.label_id for s in samples], dtype=np.int64)
    return prefix, suffix, attributes, labels


def _evaluate(model, prefix, suffix, attributes, labels, batch_size=4096):
    total_loss = 0.0
    correct = 0
    for start in range(0, len(labels), batch_size):
        stop = start + batch_size
        probs, _ = model.forward_batch(
            prefix[start:stop], suffix[start:stop], attributes[start:stop], training=False
        )
        batch_labels = labels[start:stop]
        picked = probs[np.arange(len(batch_labels)), batch_labels]
        total_loss += float(-np.log(np.maximum(picked, 1e-12)).sum())
        correct += int((probs.argmax(axis=1) == batch_labels).sum())
    return total_loss / len(labels), correct / len(labels)


def train(
    samples: Sequence[EncodedSample],
    vocab: Vocabulary,
    architecture: ArchitectureConfig = ArchitectureConfig(),
    config: TrainConfig = TrainConfig(),
    progress: Callable[[EpochStats], None] | None = None,
) -> Checkpoint:
    """Fit the classifier on labeled samples; returns the best-epoch checkpoint.

    Samples are shuffled once (seeded) and the last validation_fraction of
    the shuffle is held out.  Training reshuffles each epoch and stops early
    once validation loss has not improved for early_stop_patience epochs; the
    parameters of the best epoch are what the checkpoint keeps.  ``progress``
    is called with each epoch's statistics as they land.
    """
    if len(samples) < 10:
        raise TrainingError(f"need at least 10 labeled samples, got {len(samples)}")
    if len({s.label_id for s in samples}) < 2:
        raise TrainingError("need at least 2 distinct labels")
    rng = np.random.Generator(np.random.Philox(config.seed))
    model = RepairModel(architecture, vocab, rng=rng, dtype=np.float32)
    prefix, suffix, attributes, labels = pack_samples(samples)
    if labels is None:
        raise TrainingError("every training sample needs a label")

    order = rng.permutation(len(samples))
    n_val = max(1, int(len(samples) * config.validation_fraction))
    val_idx = order[len(samples) - n_val :]
    train_idx = order[: len(samples) - n_val]
    optimizer = Nadam(learning_rate=config.learning_rate)
    params = model.parameters()

    history: list[EpochStats] = []
    best_state: dict[str, np.ndarray] | None = None
    best_val = np.inf
    stale = 0
    for epoch in range(1, config.max_epochs + 1):
        perm = rng.permutation(len(train_idx))
        epoch_loss = 0.0
        seen = 0
        for start in range(0, len(perm), config.batch_size):
            batch = train_idx[perm[start : start + config.batch_size]]
            if batch.size < 2:
                continue  # batch statistics need two rows; drop the remainder
            loss, grads = model.loss_and_gradients(
                prefix[batch], suffix[batch], attributes[batch], labels[batch], rng
            )
            optimizer.step(params, grads)
            epoch_loss += loss * batch.size
            seen += batch.size
        val_loss, val_accuracy = _evaluate(
            model, prefix[val_idx], suffix[val_idx], attributes[val_idx], labels[val_idx]
        )
        history.append(EpochStats(epoch, epoch_loss / max(seen, 1), val_loss, val_accuracy))
        if progress is not None:
            progress(history[-1])
        if val_loss < best_val:
            best_val = val_loss
            best_state = {name: arr.copy() for name, arr in model.state().items()}
            stale = 0
        else:
            stale += 1
        if stale >= config.early_stop_patience:
            break
    assert best_state is not None
    return Checkpoint(
        architecture=architecture,
        vocab=vocab,
        params=best_state,
        history=tuple(history),
    )


def forward(
    checkpoint_or_model,
    sample: EncodedSample,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Probability vector over activity ids for a single sample."""
    model = (
        model_from_checkpoint(checkpoint_or_model)
        if isinstance(checkpoint_or_model, Checkpoint)
        else checkpoint_or_model
    )
    prefix, suffix, attributes, _ = pack_samples([sample])
    probs, _ = model.forward_batch(prefix, suffix, attributes, training=training, rng=rng)
    return probs[0]


def write_history_csv(history: Sequence[EpochStats], sink) -> None:
    """epoch,train_loss,val_loss,val_accuracy rows; repr floats round-trip."""
    lines = ["epoch,train_loss,val_loss,val_accuracy"]
    for s in history:
        lines.append(f"{s.epoch},{s.train_loss!r},{s.val_loss!r},{s.val_accuracy!r}")
    sink.write(("\n".join(lines) + "\n").encode("utf-8"))


def repair(
    log: EventLog,
    checkpoint: Checkpoint,
    config: ContextConfig | None = None,
) -> EventLog:
    """Fill every missing label with the model's most probable activity.

    Contexts are extracted from the corrupted log once, so repairs are
    independent of each other (a single pass, no chaining).  Ties pick the
    lowest activity id; reserved ids are never produced.
    """
    config = config or ContextConfig(k=checkpoint.architecture.k)
    model = model_from_checkpoint(checkpoint)
    samples = build_repair_set(log, checkpoint.vocab, config, checkpoint.vocab.attribute_names)
    if not samples:
        return log
    prefix, suffix, attributes, _ = pack_samples(samples)
    filled: dict[tuple[str, int], str] = {}
    batch_size = 4096
    for start in range(0, len(samples), batch_size):
        stop = start + batch_size
        probs, _ = model.forward_batch(
            prefix[start:stop], suffix[start:stop], attributes[start:stop], training=False
        )
        probs = probs.copy()
        probs[:, PAD_ID] = -1.0
        probs[:, MISSING_ID] = -1.0
        choices = probs.argmax(axis=1)
        for sample, choice in zip(samples[start:stop], choices):
            filled[sample.origin] = checkpoint.vocab.activity_label(int(choice))
    traces = []
    for trace in log.traces:
        events = list(trace.events)
        changed = False
        for position, event in enumerate(events):
            label = filled.get((trace.trace_id, position))
            if label is not None:
                events[position] = replace_activity(event, label)
                changed = True
        traces.append(Trace(trace.trace_id, tuple(events)) if changed else trace)
    return EventLog(tuple(traces), log.attribute_names)
