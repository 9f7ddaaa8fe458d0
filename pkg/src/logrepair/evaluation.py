"""Success-rate scoring and the repeat-experiment harness.

A repair run is scored as the fraction of ledger entries whose repaired label
equals the removed original.  Experiments corrupt, retrain, and repair from
scratch per repeat so the spread across seeds is honest; report rows carry
the per-repeat rates for plotting.
"""

from __future__ import annotations

import csv
import io
import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import BinaryIO, Sequence

from .corruption import (
    CorruptionLedger,
    Protocol,
    corrupt_fixed_count,
    corrupt_proportion,
)
from .dataset import ContextConfig, build_training_set, build_vocabulary
from .errors import CapacityError, ConsistencyError, ConfigurationError
from .eventlog import ColumnMapping, DEFAULT_TIMESTAMP_FORMAT, EventLog, parse_csv, parse_xes
from .repairnet import ArchitectureConfig, TrainConfig, repair, train

VARIANTS = ("full", "prefix_only", "suffix_only", "no_attributes")


@dataclass(frozen=True)
class SuccessReport:
    n: int
    m: int
    success_rate: float
    per_repeat_rates: tuple[float, ...]
    mean: float
    std_dev: float


def _aggregate(ns, ms, rates) -> SuccessReport:
    n, m = sum(ns), sum(ms)
    return SuccessReport(
        n=n,
        m=m,
        success_rate=m / n if n else 1.0,
        per_repeat_rates=tuple(rates),
        mean=statistics.fmean(rates) if rates else 1.0,
        # sample standard deviation; a single repeat has no spread
        std_dev=statistics.stdev(rates) if len(rates) > 1 else 0.0,
    )


def score(
    original: EventLog, repaired: EventLog, ledger: CorruptionLedger
) -> SuccessReport:
    """Exact fraction of ledgered events whose label was repaired correctly."""
    original_labels = {
        (trace.trace_id, event.position): event.activity
        for trace, event in original.events()
    }
    repaired_labels = {
        (trace.trace_id, event.position): event.activity
        for trace, event in repaired.events()
    }
    correct = 0
    for entry in ledger.entries:
        key = (entry.trace_id, entry.position)
        if key not in original_labels:
            raise ConsistencyError(f"ledger entry {key} not present in the original log")
        if original_labels[key] != entry.original_activity:
            raise ConsistencyError(
                f"original log disagrees with the ledger at {key}: "
                f"{original_labels[key]!r} vs {entry.original_activity!r}"
            )
        got = repaired_labels.get(key)
        if got is None:
            raise ConsistencyError(f"repaired log still misses the label at {key}")
        correct += got == entry.original_activity
    n = len(ledger.entries)
    rate = correct / n if n else 1.0
    return _aggregate([n], [correct], [rate])


def aggregate_reports(reports: Sequence[SuccessReport]) -> SuccessReport:
    return _aggregate(
        [r.n for r in reports],
        [r.m for r in reports],
        [rate for r in reports for rate in r.per_repeat_rates],
    )


def variant_architecture(base: ArchitectureConfig, variant: str) -> ArchitectureConfig:
    """Ablations: drop a context branch and/or the attribute embeddings."""
    if variant == "full":
        return base
    if variant == "prefix_only":
        return replace(base, use_prefix=True, use_suffix=False, use_attributes=False)
    if variant == "suffix_only":
        return replace(base, use_prefix=False, use_suffix=True, use_attributes=False)
    if variant == "no_attributes":
        return replace(base, use_attributes=False)
    raise ConfigurationError(f"unknown variant {variant!r} (choose from {VARIANTS})")


@dataclass(frozen=True)
class ExperimentPlan:
    dataset: str
    protocol: Protocol
    levels: tuple[float, ...]
    repeats: int = 10
    variants: tuple[str, ...] = ("full",)
    base_seed: int = 0
    context: ContextConfig = ContextConfig()
    architecture: ArchitectureConfig = field(default_factory=ArchitectureConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    mapping: ColumnMapping = ColumnMapping()
    timestamp_format: str = DEFAULT_TIMESTAMP_FORMAT

    def __post_init__(self):
        object.__setattr__(self, "levels", tuple(self.levels))
        object.__setattr__(self, "variants", tuple(self.variants))
        if not self.levels:
            raise ConfigurationError("an experiment needs at least one missing level")
        if self.repeats < 1:
            raise ConfigurationError("repeats must be >= 1")
        for variant in self.variants:
            if variant not in VARIANTS:
                raise ConfigurationError(
                    f"unknown variant {variant!r} (choose from {VARIANTS})"
                )


@dataclass(frozen=True)
class ReportRow:
    dataset: str
    protocol: str
    missing_level: str
    variant: str
    mean: float
    std_dev: float
    n: int
    repeats: int
    per_repeat_rates: tuple[float, ...]
    wall_time_s: float
    error: str = ""


def load_log(path, mapping: ColumnMapping | None = None, timestamp_format=DEFAULT_TIMESTAMP_FORMAT) -> EventLog:
    """Read a log by file extension: .xes is XES, anything else is CSV."""
    path = Path(path)
    with open(path, "rb") as source:
        if path.suffix.lower() == ".xes":
            return parse_xes(source)
        return parse_csv(source, mapping, timestamp_format)


def format_level(protocol: Protocol, level: float) -> str:
    if protocol is Protocol.FIXED_COUNT_ONE_PER_TRACE:
        return str(int(level))
    return f"{level:g}"


def _run_cell_repeat(log, plan, level, variant, repeat):
    seed = plan.base_seed + repeat
    if plan.protocol is Protocol.FIXED_COUNT_ONE_PER_TRACE:
        corrupted, ledger = corrupt_fixed_count(log, int(level), seed)
    else:
        corrupted, ledger = corrupt_proportion(log, float(level), seed)
    attributes = tuple(plan.architecture.attribute_embedding_dims)
    vocab = build_vocabulary(corrupted, attributes)
    samples = build_training_set(corrupted, vocab, plan.context, attributes)
    architecture = variant_architecture(plan.architecture, variant)
    checkpoint = train(samples, vocab, architecture, replace(plan.train, seed=seed))
    repaired = repair(corrupted, checkpoint, plan.context)
    return score(log, repaired, ledger)


def run_experiment(plan: ExperimentPlan, threads: int = 1) -> list[ReportRow]:
    """Corrupt/train/repair/score every (level, variant, repeat) cell.

    Repeat r uses seed base_seed + r for both the corruption and the training,
    so all variants see the same corrupted logs and the comparison is paired.
    Infeasible cells (say, a fixed count beyond the trace count) become error
    rows instead of aborting the sweep.
    """
    log = load_log(plan.dataset, plan.mapping, plan.timestamp_format)
    dataset_name = Path(plan.dataset).stem
    jobs = [
        (level, variant, repeat)
        for level in plan.levels
        for variant in plan.variants
        for repeat in range(plan.repeats)
    ]

    def run(job):
        level, variant, repeat = job
        started = time.perf_counter()
        try:
            report = _run_cell_repeat(log, plan, level, variant, repeat)
            return report, time.perf_counter() - started, ""
        except CapacityError as exc:
            return None, time.perf_counter() - started, str(exc)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(run, jobs))
    else:
        outcomes = [run(job) for job in jobs]

    rows = []
    for level in plan.levels:
        for variant in plan.variants:
            picked = [
                (job, outcome)
                for job, outcome in zip(jobs, outcomes)
                if job[0] == level and job[1] == variant
            ]
            reports = [outcome[0] for _, outcome in picked if outcome[0] is not None]
            errors = [outcome[2] for _, outcome in picked if outcome[2]]
            wall = sum(outcome[1] for _, outcome in picked)
            if errors:
                rows.append(
                    ReportRow(
                        dataset=dataset_name,
                        protocol=plan.protocol.value,
                        missing_level=format_level(plan.protocol, level),
                        variant=variant,
                        mean=float("nan"),
                        std_dev=float("nan"),
                        n=0,
                        repeats=plan.repeats,
                        per_repeat_rates=(),
                        wall_time_s=wall,
                        error=errors[0],
                    )
                )
                continue
            combined = aggregate_reports(reports)
            rows.append(
                ReportRow(
                    dataset=dataset_name,
                    protocol=plan.protocol.value,
                    missing_level=format_level(plan.protocol, level),
                    variant=variant,
                    mean=combined.mean,
                    std_dev=combined.std_dev,
                    # every repeat corrupts the same log at the same level
                    n=reports[0].n,
                    repeats=plan.repeats,
                    per_repeat_rates=combined.per_repeat_rates,
                    wall_time_s=wall,
                )
            )
    return rows


def write_report_csv(rows: Sequence[ReportRow], sink: BinaryIO) -> None:
    """Deterministic result columns only; wall time lives in the text report."""
    text = io.TextIOWrapper(sink, encoding="utf-8", newline="")
    try:
        writer = csv.writer(text)
        writer.writerow(
            ["dataset", "protocol", "missing_level", "variant", "mean", "std_dev", "n", "repeats", "error"]
        )
        for row in rows:
            writer.writerow(
                [
                    row.dataset,
                    row.protocol,
                    row.missing_level,
                    row.variant,
                    "" if row.error else repr(row.mean),
                    "" if row.error else repr(row.std_dev),
                    row.n,
                    row.repeats,
                    row.error,
                ]
            )
        text.flush()
    finally:
        text.detach()


def format_report_text(rows: Sequence[ReportRow]) -> str:
    """Human-readable table, wall time included."""
    header = ("dataset", "level", "variant", "success", "n", "repeats", "wall")
    body = []
    for row in rows:
        if row.error:
            success = f"error: {row.error}"
        else:
            success = f"{row.mean:.3f} +/- {row.std_dev:.3f}"
        body.append(
            (
                row.dataset,
                row.missing_level,
                row.variant,
                success,
                str(row.n),
                str(row.repeats),
                f"{row.wall_time_s:.1f}s",
            )
        )
    widths = [max(len(header[i]), *(len(line[i]) for line in body)) if body else len(header[i]) for i in range(len(header))]
    lines = [
        "  ".join(header[i].ljust(widths[i]) for i in range(len(header))),
        "  ".join("-" * widths[i] for i in range(len(header))),
    ]
    for line in body:
        lines.append("  ".join(line[i].ljust(widths[i]) for i in range(len(header))))
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class CellCheck:
    missing_level: str
    variant: str
    expected_mean: float
    tolerance: float
    actual_mean: float
    ok: bool


def compare_table(
    rows: Sequence[ReportRow],
    reference: Sequence[tuple[str, str, float, float]],
) -> list[CellCheck]:
    """Check report cells against (level, variant, expected_mean, tolerance)."""
    by_cell = {(row.missing_level, row.variant): row for row in rows}
    checks = []
    for level, variant, expected, tolerance in reference:
        row = by_cell.get((str(level), variant))
        if row is None or row.error:
            actual = float("nan")
            ok = False
        else:
            actual = row.mean
            ok = abs(actual - expected) <= tolerance
        checks.append(
            CellCheck(
                missing_level=str(level),
                variant=variant,
                expected_mean=expected,
                tolerance=tolerance,
                actual_mean=actual,
                ok=ok,
            )
        )
    return checks
