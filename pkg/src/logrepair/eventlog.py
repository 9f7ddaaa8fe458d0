"""Event-log data model plus CSV and minimal XES ingestion.

A log is a collection of traces; a trace is a timestamp-ordered sequence of
events.  Events may lack their activity label (``activity is None``), which is
the condition the rest of the package exists to repair.  Logs are immutable
after construction and safe to share read-only.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import xml.etree.ElementTree as ET
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import BinaryIO, Iterator

from .errors import ConfigurationError, ParseError

DEFAULT_TIMESTAMP_FORMAT = "%d/%m/%Y %H:%M:%S"

#: CSV cell values that mean "this activity label is absent".
MISSING_ACTIVITY_CELLS = ("", "-")


@dataclass(frozen=True)
class Event:
    """One execution record: an activity (possibly missing) plus attributes."""

    trace_id: str
    position: int
    activity: str | None
    attributes: dict[str, str]
    timestamp: datetime | None = None

    def __post_init__(self):
        if self.activity is not None and not self.activity:
            raise ValueError("activity must be a non-empty string or None")
        if self.position < 0:
            raise ValueError("position must be >= 0")

    @property
    def has_activity(self) -> bool:
        return self.activity is not None


@dataclass(frozen=True)
class Trace:
    trace_id: str
    events: tuple[Event, ...]

    def __post_init__(self):
        object.__setattr__(self, "events", tuple(self.events))
        for position, event in enumerate(self.events):
            if event.trace_id != self.trace_id:
                raise ValueError(
                    f"event at position {position} belongs to trace "
                    f"{event.trace_id!r}, not {self.trace_id!r}"
                )
            if event.position != position:
                raise ValueError(
                    f"event position {event.position} does not match its "
                    f"index {position} in trace {self.trace_id!r}"
                )
        # ordering is only checkable when every event carries a timestamp
        stamps = [e.timestamp for e in self.events if e.timestamp is not None]
        if len(stamps) == len(self.events):
            for earlier, later in zip(stamps, stamps[1:]):
                if later < earlier:
                    raise ValueError(
                        f"events of trace {self.trace_id!r} are not in "
                        "non-decreasing timestamp order"
                    )

    def __len__(self) -> int:
        return len(self.events)

    def __iter__(self) -> Iterator[Event]:
        return iter(self.events)


@dataclass(frozen=True)
class EventLog:
    traces: tuple[Trace, ...]
    attribute_names: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "traces", tuple(self.traces))
        object.__setattr__(self, "attribute_names", tuple(self.attribute_names))
        seen = set()
        for trace in self.traces:
            if trace.trace_id in seen:
                raise ValueError(f"duplicate trace id {trace.trace_id!r}")
            seen.add(trace.trace_id)
        declared = set(self.attribute_names)
        for trace in self.traces:
            for event in trace.events:
                if set(event.attributes) != declared:
                    raise ValueError(
                        f"event {trace.trace_id!r}:{event.position} carries "
                        f"attributes {sorted(event.attributes)}, expected "
                        f"{sorted(declared)}"
                    )

    def events(self) -> Iterator[tuple[Trace, Event]]:
        for trace in self.traces:
            for event in trace.events:
                yield trace, event

    @property
    def event_count(self) -> int:
        return sum(len(trace) for trace in self.traces)

    @property
    def missing_count(self) -> int:
        return sum(1 for _, event in self.events() if not event.has_activity)


@dataclass(frozen=True)
class ColumnMapping:
    """Names of the CSV columns holding each event field.

    ``timestamp`` may be None for logs whose row order is already the event
    order; such logs get ``timestamp=None`` events.
    """

    case: str = "case"
    activity: str = "activity"
    timestamp: str | None = "timestamp"
    attributes: tuple[str, ...] = ("resource",)


def parse_csv(
    source: BinaryIO,
    mapping: ColumnMapping | None = None,
    timestamp_format: str = DEFAULT_TIMESTAMP_FORMAT,
) -> EventLog:
    """Read a delimited event log (UTF-8, header row required).

    Rows are grouped into traces by the case column (first-appearance order)
    and each trace is sorted by timestamp; the sort is stable, so ties keep
    their input order.  An activity cell that is empty or "-" is a missing
    label.  Raises ParseError for malformed rows and ConfigurationError when a
    mapped column is absent.
    """
    mapping = mapping or ColumnMapping()
    text = io.TextIOWrapper(source, encoding="utf-8", newline="")
    try:
        reader = csv.reader(text)
        header = next(reader, None)
        if header is None:
            raise ParseError("empty input: a header row is required")
        needed = [mapping.case, mapping.activity, *mapping.attributes]
        if mapping.timestamp is not None:
            needed.insert(2, mapping.timestamp)
        index = {}
        for name in needed:
            if name not in header:
                raise ConfigurationError(
                    f"mapped column {name!r} not found in header {header}"
                )
            index[name] = header.index(name)
        grouped: dict[str, list] = {}
        for row in reader:
            line = reader.line_num
            if len(row) != len(header):
                raise ParseError(
                    f"line {line}: expected {len(header)} fields, found {len(row)}"
                )
            case = row[index[mapping.case]]
            cell = row[index[mapping.activity]]
            activity = None if cell in MISSING_ACTIVITY_CELLS else cell
            timestamp = None
            if mapping.timestamp is not None:
                stamp_cell = row[index[mapping.timestamp]]
                if stamp_cell:
                    try:
                        timestamp = datetime.strptime(stamp_cell, timestamp_format)
                    except ValueError:
                        raise ParseError(
                            f"line {line}: cannot parse timestamp {stamp_cell!r} "
                            f"in column {mapping.timestamp!r} with format "
                            f"{timestamp_format!r}"
                        ) from None
            attributes = {name: row[index[name]] for name in mapping.attributes}
            grouped.setdefault(case, []).append((timestamp, activity, attributes))
        traces = tuple(_build_trace(case, rows) for case, rows in grouped.items())
        return EventLog(traces=traces, attribute_names=tuple(mapping.attributes))
    finally:
        text.detach()


def _build_trace(trace_id: str, rows: list) -> Trace:
    if all(stamp is not None for stamp, _, _ in rows):
        rows = sorted(rows, key=lambda row: row[0])  # stable: ties keep input order
    events = tuple(
        Event(trace_id, position, activity, attributes, stamp)
        for position, (stamp, activity, attributes) in enumerate(rows)
    )
    return Trace(trace_id, events)


def serialize_csv(
    log: EventLog,
    sink: BinaryIO,
    timestamp_format: str = DEFAULT_TIMESTAMP_FORMAT,
) -> None:
    """Write the log with columns: case, activity, timestamp, attributes.

    Missing activities and absent timestamps become empty cells.  Output is
    deterministic for a given log, so repeated runs are byte-identical.
    """
    text = io.TextIOWrapper(sink, encoding="utf-8", newline="")
    try:
        writer = csv.writer(text)
        writer.writerow(["case", "activity", "timestamp", *log.attribute_names])
        for trace in log.traces:
            for event in trace.events:
                stamp = (
                    event.timestamp.strftime(timestamp_format)
                    if event.timestamp is not None
                    else ""
                )
                writer.writerow(
                    [
                        trace.trace_id,
                        event.activity or "",
                        stamp,
                        *[event.attributes[name] for name in log.attribute_names],
                    ]
                )
        text.flush()
    finally:
        text.detach()


def log_mapping(log: EventLog) -> ColumnMapping:
    """The mapping that reads back what serialize_csv wrote for this log."""
    return ColumnMapping(attributes=log.attribute_names)


def _local(tag: str) -> str:
    return tag.rsplit("}", 1)[-1]


def _child_value(element: ET.Element, wanted_key: str) -> str | None:
    # only direct children; nested XES containers are out of scope
    for child in element:
        if child.get("key") == wanted_key:
            return child.get("value")
    return None


def _parse_xes_timestamp(value: str, trace_id: str) -> datetime:
    try:
        stamp = datetime.fromisoformat(value.replace("Z", "+00:00"))
    except ValueError:
        raise ParseError(
            f"trace {trace_id!r}: cannot parse timestamp {value!r}"
        ) from None
    if stamp.tzinfo is not None:
        stamp = stamp.astimezone(timezone.utc).replace(tzinfo=None)
    # second resolution keeps CSV round-trips exact
    return stamp.replace(microsecond=0)


def parse_xes(source: BinaryIO) -> EventLog:
    """Read an XES document (concept:name, org:resource, time:timestamp).

    Unknown keys and extensions are ignored.  Every trace must carry a
    concept:name; events without one contribute a missing label.  Events
    without org:resource get an empty resource value.
    """
    try:
        root = ET.parse(source).getroot()
    except ET.ParseError as exc:
        raise ParseError(f"malformed XES document: {exc}") from None
    traces = []
    for number, trace_el in enumerate(
        (el for el in root if _local(el.tag) == "trace"), start=1
    ):
        trace_id = _child_value(trace_el, "concept:name")
        if trace_id is None:
            raise ParseError(f"trace #{number} has no case identifier (concept:name)")
        rows = []
        for event_el in (el for el in trace_el if _local(el.tag) == "event"):
            activity = _child_value(event_el, "concept:name") or None
            resource = _child_value(event_el, "org:resource") or ""
            stamp_text = _child_value(event_el, "time:timestamp")
            stamp = (
                _parse_xes_timestamp(stamp_text, trace_id) if stamp_text else None
            )
            rows.append((stamp, activity, {"resource": resource}))
        traces.append(_build_trace(trace_id, rows))
    return EventLog(traces=tuple(traces), attribute_names=("resource",))


def replace_activity(event: Event, activity: str | None) -> Event:
    return dataclasses.replace(event, activity=activity)
