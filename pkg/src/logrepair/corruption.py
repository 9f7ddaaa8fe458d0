"""Seeded removal of activity labels, recorded in a ground-truth ledger.

Two protocols: a fixed number of removals spread one-per-trace, and a
proportion of all labeled events with no per-trace limit.  Sampling runs on a
counter-based generator (Philox), so a seed reproduces the same ledger on any
platform.  ``restore`` inverts a corruption exactly and doubles as the test
oracle for the repair pipeline.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from enum import Enum
from typing import BinaryIO

import numpy as np

from .errors import CapacityError, ConsistencyError, ParseError
from .eventlog import EventLog, Trace, replace_activity


class Protocol(Enum):
    FIXED_COUNT_ONE_PER_TRACE = "fixed_count"
    PROPORTION = "proportion"


@dataclass(frozen=True)
class LedgerEntry:
    trace_id: str
    position: int
    original_activity: str


@dataclass(frozen=True)
class CorruptionLedger:
    entries: tuple[LedgerEntry, ...]
    seed: int
    protocol: Protocol

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        targets = [(e.trace_id, e.position) for e in self.entries]
        if len(set(targets)) != len(targets):
            raise ValueError("ledger addresses the same event twice")

    def __len__(self) -> int:
        return len(self.entries)


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed))


def _partial_fisher_yates(rng, pool_size: int, sample_size: int) -> list[int]:
    """First ``sample_size`` slots of a Fisher-Yates shuffle of range(pool_size)."""
    indices = list(range(pool_size))
    for i in range(sample_size):
        j = int(rng.integers(i, pool_size))
        indices[i], indices[j] = indices[j], indices[i]
    return indices[:sample_size]


def corrupt_fixed_count(
    log: EventLog, count: int, seed: int
) -> tuple[EventLog, CorruptionLedger]:
    """Blank one labeled event in each of ``count`` distinct traces."""
    if count < 0:
        raise ValueError("count must be >= 0")
    rng = _rng(seed)
    eligible = [
        index
        for index, trace in enumerate(log.traces)
        if any(event.has_activity for event in trace.events)
    ]
    if count > len(eligible):
        raise CapacityError(
            f"cannot blank {count} traces: only {len(eligible)} traces "
            "have a labeled event"
        )
    picked = sorted(
        eligible[i] for i in _partial_fisher_yates(rng, len(eligible), count)
    )
    targets = []
    for index in picked:
        positions = [e.position for e in log.traces[index].events if e.has_activity]
        targets.append((index, positions[int(rng.integers(0, len(positions)))]))
    return _blank(log, targets, seed, Protocol.FIXED_COUNT_ONE_PER_TRACE)


def corrupt_proportion(
    log: EventLog, fraction: float, seed: int
) -> tuple[EventLog, CorruptionLedger]:
    """Blank floor(fraction * labeled-event-count) events, anywhere in the log."""
    if not 0.0 < fraction <= 1.0:
        raise ValueError("fraction must be in (0, 1]")
    labeled = [
        (index, event.position)
        for index, trace in enumerate(log.traces)
        for event in trace.events
        if event.has_activity
    ]
    rng = _rng(seed)
    # the epsilon guards against float noise like 0.29 * 100 = 28.999...
    count = math.floor(fraction * len(labeled) + 1e-9)
    picked = _partial_fisher_yates(rng, len(labeled), count)
    targets = sorted(labeled[i] for i in picked)
    return _blank(log, targets, seed, Protocol.PROPORTION)


def _blank(log, targets, seed, protocol):
    by_trace: dict[int, list[int]] = {}
    for index, position in targets:
        by_trace.setdefault(index, []).append(position)
    entries = []
    traces = []
    for index, trace in enumerate(log.traces):
        hits = by_trace.get(index)
        if not hits:
            traces.append(trace)
            continue
        events = list(trace.events)
        for position in sorted(hits):
            entries.append(
                LedgerEntry(trace.trace_id, position, events[position].activity)
            )
            events[position] = replace_activity(events[position], None)
        traces.append(Trace(trace.trace_id, tuple(events)))
    ledger = CorruptionLedger(tuple(entries), seed=seed, protocol=protocol)
    return EventLog(tuple(traces), log.attribute_names), ledger


def restore(log: EventLog, ledger: CorruptionLedger) -> EventLog:
    """Put every ledgered label back; exact inverse of the corruption."""
    index_of = {trace.trace_id: i for i, trace in enumerate(log.traces)}
    fixes: dict[int, dict[int, str]] = {}
    for entry in ledger.entries:
        index = index_of.get(entry.trace_id)
        if index is None:
            raise ConsistencyError(f"ledger references unknown trace {entry.trace_id!r}")
        fixes.setdefault(index, {})[entry.position] = entry.original_activity
    traces = []
    for index, trace in enumerate(log.traces):
        wanted = fixes.get(index)
        if not wanted:
            traces.append(trace)
            continue
        events = list(trace.events)
        for position, label in sorted(wanted.items()):
            if position >= len(events):
                raise ConsistencyError(
                    f"trace {trace.trace_id!r} has no position {position}"
                )
            if events[position].activity is not None:
                raise ConsistencyError(
                    f"trace {trace.trace_id!r} position {position} already "
                    "has a label"
                )
            events[position] = replace_activity(events[position], label)
        traces.append(Trace(trace.trace_id, tuple(events)))
    return EventLog(tuple(traces), log.attribute_names)


def save_ledger(
    ledger: CorruptionLedger, csv_sink: BinaryIO, json_sink: BinaryIO
) -> None:
    """Write the entries as CSV and the run parameters as a JSON sidecar."""
    text = io.TextIOWrapper(csv_sink, encoding="utf-8", newline="")
    try:
        writer = csv.writer(text)
        writer.writerow(["trace_id", "position", "original_activity"])
        for entry in ledger.entries:
            writer.writerow([entry.trace_id, entry.position, entry.original_activity])
        text.flush()
    finally:
        text.detach()
    meta = {
        "seed": ledger.seed,
        "protocol": ledger.protocol.value,
        "count": len(ledger.entries),
    }
    json_sink.write(json.dumps(meta, sort_keys=True).encode("utf-8") + b"\n")


def load_ledger(csv_source: BinaryIO, json_source: BinaryIO) -> CorruptionLedger:
    meta = json.loads(json_source.read().decode("utf-8"))
    text = io.TextIOWrapper(csv_source, encoding="utf-8", newline="")
    try:
        reader = csv.reader(text)
        header = next(reader, None)
        if header != ["trace_id", "position", "original_activity"]:
            raise ParseError(f"unexpected ledger header: {header}")
        entries = tuple(
            LedgerEntry(trace_id, int(position), activity)
            for trace_id, position, activity in reader
        )
    finally:
        text.detach()
    ledger = CorruptionLedger(entries, seed=meta["seed"], protocol=Protocol(meta["protocol"]))
    if meta["count"] != len(entries):
        raise ParseError(
            f"ledger sidecar says {meta['count']} entries, file has {len(entries)}"
        )
    return ledger
