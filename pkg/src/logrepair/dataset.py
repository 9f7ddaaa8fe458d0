"""Fixed-width context encoding of event logs for the classifier.

Every event becomes a sample made of its k nearest predecessors (the prefix,
chronological, nearest last), its k nearest successors (the suffix, stored
farthest-first so the nearest successor is also last), and its attribute
values.  Slots that fall outside the trace are padding; neighbors whose label
was lost contribute a dedicated missing token, so corrupted events still give
their neighbors a usable signal.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import BinaryIO, Iterable, Mapping, Sequence

from .errors import ConfigurationError, EncodingError
from .eventlog import Event, EventLog, Trace

PAD_TOKEN = "__PAD__"  # context slot outside the trace
MISSING_TOKEN = "__MISSING__"  # neighbor exists but lost its label
UNK_TOKEN = "__UNK__"  # attribute value never seen while building the vocabulary

PAD_ID = 0
MISSING_ID = 1
UNK_ID = 1

DEFAULT_ATTRIBUTES = ("resource",)


@dataclass(frozen=True)
class ContextConfig:
    """Window size: how many neighbors each side of the target contributes."""

    k: int = 5

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")


class Vocabulary:
    """Bijective label/value <-> id maps with reserved low ids.

    Activity ids: 0 padding, 1 the missing token, then observed labels in
    first-appearance order.  Attribute ids: 0 padding, 1 unknown, then values.
    """

    def __init__(
        self,
        activities: Sequence[str],
        attribute_values: Mapping[str, Sequence[str]] | None = None,
    ):
        self._activities = [PAD_TOKEN, MISSING_TOKEN]
        self._activity_ids: dict[str, int] = {}
        for label in activities:
            if label in (PAD_TOKEN, MISSING_TOKEN) or not label:
                raise ConfigurationError(
                    f"activity label {label!r} collides with a reserved token"
                )
            if label in self._activity_ids:
                raise ConfigurationError(f"duplicate activity label {label!r}")
            self._activity_ids[label] = len(self._activities)
            self._activities.append(label)
        self._attribute_values: dict[str, list[str]] = {}
        self._attribute_ids: dict[str, dict[str, int]] = {}
        for name, values in (attribute_values or {}).items():
            stored = [PAD_TOKEN, UNK_TOKEN]
            ids: dict[str, int] = {}
            for value in values:
                if value in (PAD_TOKEN, UNK_TOKEN) or not value:
                    raise ConfigurationError(
                        f"attribute value {value!r} collides with a reserved token"
                    )
                if value in ids:
                    raise ConfigurationError(f"duplicate attribute value {value!r}")
                ids[value] = len(stored)
                stored.append(value)
            self._attribute_values[name] = stored
            self._attribute_ids[name] = ids

    # ---------- activities ----------

    @property
    def activity_count(self) -> int:
        """Total number of activity ids, reserved ones included."""
        return len(self._activities)

    def activities(self) -> list[str]:
        """Observed labels in id order (reserved tokens excluded)."""
        return self._activities[2:]

    def activity_id(self, label: str) -> int:
        try:
            return self._activity_ids[label]
        except KeyError:
            raise EncodingError(f"activity {label!r} is not in the vocabulary") from None

    def context_id(self, token: str) -> int:
        if token == PAD_TOKEN:
            return PAD_ID
        if token == MISSING_TOKEN:
            return MISSING_ID
        return self.activity_id(token)

    def activity_label(self, index: int) -> str:
        if not 0 <= index < len(self._activities):
            raise EncodingError(f"activity id {index} is out of range")
        return self._activities[index]

    # ---------- attributes ----------

    @property
    def attribute_names(self) -> tuple[str, ...]:
        return tuple(self._attribute_values)

    def attribute_count(self, name: str) -> int:
        try:
            return len(self._attribute_values[name])
        except KeyError:
            raise EncodingError(f"unknown attribute {name!r}") from None

    def attribute_values(self, name: str) -> list[str]:
        return self._attribute_values[name][2:]

    def attribute_id(self, name: str, value: str) -> int:
        if name not in self._attribute_ids:
            raise EncodingError(f"unknown attribute {name!r}")
        return self._attribute_ids[name].get(value, UNK_ID)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Vocabulary)
            and self._activities == other._activities
            and self._attribute_values == other._attribute_values
        )


def split_events(
    log: EventLog,
) -> tuple[list[tuple[Trace, Event]], list[tuple[Trace, Event]]]:
    """Partition events into (complete, missing) reference lists, log order."""
    complete, missing = [], []
    for trace, event in log.events():
        (complete if event.has_activity else missing).append((trace, event))
    return complete, missing


def build_vocabulary(
    log: EventLog, attributes: Sequence[str] = DEFAULT_ATTRIBUTES
) -> Vocabulary:
    """Collect activity labels from complete events and values for each attribute."""
    labels, seen = [], set()
    for _, event in log.events():
        if event.has_activity and event.activity not in seen:
            seen.add(event.activity)
            labels.append(event.activity)
    values: dict[str, list[str]] = {}
    for name in attributes:
        found, known = [], set()
        for _, event in log.events():
            value = event.attributes.get(name, "")
            if value and value not in known:
                known.add(value)
                found.append(value)
        values[name] = found
    return Vocabulary(labels, values)


def extract_context(
    trace: Trace, position: int, config: ContextConfig = ContextConfig()
) -> tuple[list[str], list[str]]:
    """Token windows around one event (the event itself is excluded).

    Prefix: positions p-k..p-1 in chronological order, nearest predecessor
    last.  Suffix: positions p+k..p+1, so the nearest successor is last too.
    """
    if not 0 <= position < len(trace.events):
        raise IndexError(f"position {position} outside trace {trace.trace_id!r}")

    def token(index: int) -> str:
        if index < 0 or index >= len(trace.events):
            return PAD_TOKEN
        activity = trace.events[index].activity
        return MISSING_TOKEN if activity is None else activity

    k = config.k
    prefix = [token(i) for i in range(position - k, position)]
    suffix = [token(i) for i in range(position + k, position, -1)]
    return prefix, suffix


@dataclass(frozen=True)
class EncodedSample:
    """One event encoded for the network; origin says where to write back."""

    prefix_ids: tuple[int, ...]
    suffix_ids: tuple[int, ...]
    attribute_ids: tuple[int, ...]
    label_id: int | None
    origin: tuple[str, int]


def _encode(trace, event, vocab, config, attributes, with_label) -> EncodedSample:
    prefix, suffix = extract_context(trace, event.position, config)
    return EncodedSample(
        prefix_ids=tuple(vocab.context_id(t) for t in prefix),
        suffix_ids=tuple(vocab.context_id(t) for t in suffix),
        attribute_ids=tuple(
            vocab.attribute_id(name, event.attributes.get(name, ""))
            for name in attributes
        ),
        label_id=vocab.activity_id(event.activity) if with_label else None,
        origin=(trace.trace_id, event.position),
    )


def build_training_set(
    log: EventLog,
    vocab: Vocabulary,
    config: ContextConfig = ContextConfig(),
    attributes: Sequence[str] = DEFAULT_ATTRIBUTES,
) -> list[EncodedSample]:
    """Encode every complete event, labeled with its own activity."""
    complete, _ = split_events(log)
    return [_encode(t, e, vocab, config, attributes, True) for t, e in complete]


def build_repair_set(
    log: EventLog,
    vocab: Vocabulary,
    config: ContextConfig = ContextConfig(),
    attributes: Sequence[str] = DEFAULT_ATTRIBUTES,
) -> list[EncodedSample]:
    """Encode every missing event; labels stay None."""
    _, missing = split_events(log)
    return [_encode(t, e, vocab, config, attributes, False) for t, e in missing]


def _display(vocab: Vocabulary, index: int) -> str:
    label = vocab.activity_label(index)
    if label == PAD_TOKEN:
        return ""
    if label == MISSING_TOKEN:
        return "Missing"
    return label


def dump_samples_csv(
    samples: Iterable[EncodedSample],
    vocab: Vocabulary,
    attributes: Sequence[str],
    sink: BinaryIO,
    k: int,
) -> None:
    """Debug view of encoded samples with decoded context windows."""
    text = io.TextIOWrapper(sink, encoding="utf-8", newline="")
    try:
        writer = csv.writer(text)
        writer.writerow(
            [
                "event",
                *[name.capitalize() for name in attributes],
                *[f"Prefix_{i}" for i in range(1, k + 1)],
                *[f"Suffix_{i}" for i in range(1, k + 1)],
                "Label",
            ]
        )
        for sample in samples:
            trace_id, position = sample.origin
            row = [f"{trace_id}:{position}"]
            for name, value_id in zip(attributes, sample.attribute_ids):
                values = [PAD_TOKEN, UNK_TOKEN, *vocab.attribute_values(name)]
                value = values[value_id]
                row.append("" if value in (PAD_TOKEN, UNK_TOKEN) else value)
            row.extend(_display(vocab, i) for i in sample.prefix_ids)
            row.extend(_display(vocab, i) for i in sample.suffix_ids)
            row.append("" if sample.label_id is None else _display(vocab, sample.label_id))
            writer.writerow(row)
        text.flush()
    finally:
        text.detach()
