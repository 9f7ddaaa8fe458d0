"""Command-line pipeline: corrupt, train, repair, evaluate, experiment.

Each subcommand accepts an optional plain-text configuration file of
``key = value`` lines (``#`` starts a comment).  Flags carry the same names
as the file keys and win over them.  The fully resolved configuration is
echoed to stderr as a reproducibility header, diagnostics stay on stderr,
and results go to files or stdout.
"""

from __future__ import annotations

import argparse
import csv
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

from . import __version__
from .corruption import (
    Protocol,
    corrupt_fixed_count,
    corrupt_proportion,
    load_ledger,
    save_ledger,
)
from .dataset import ContextConfig, build_training_set, build_vocabulary
from .errors import ConfigurationError, LogRepairError
from .eventlog import ColumnMapping, DEFAULT_TIMESTAMP_FORMAT, serialize_csv
from .evaluation import (
    ExperimentPlan,
    compare_table,
    format_report_text,
    load_log,
    run_experiment,
    score,
    variant_architecture,
    write_report_csv,
)
from .repairnet import (
    ArchitectureConfig,
    Checkpoint,
    TrainConfig,
    repair,
    train,
    write_history_csv,
)


def _names(raw: str) -> tuple[str, ...]:
    return tuple(part.strip() for part in raw.split(",") if part.strip())


def _ints(raw: str) -> tuple[int, ...]:
    return tuple(int(part) for part in _names(raw))


def _floats(raw: str) -> tuple[float, ...]:
    return tuple(float(part) for part in _names(raw))


@dataclass(frozen=True)
class Setting:
    """One configuration key; defaults are strings so file and flag values
    go through the same cast."""

    name: str
    cast: Callable[[str], object]
    default: str | None = None
    help: str = ""
    required: bool = False


IO_SETTINGS = (
    Setting("case-column", str, "case", "trace id column in CSV logs"),
    Setting("activity-column", str, "activity", "activity label column"),
    Setting("timestamp-column", str, "timestamp", "timestamp column; empty disables it"),
    Setting("attribute-columns", _names, "resource", "comma separated event attribute columns"),
    Setting("timestamp-format", str, DEFAULT_TIMESTAMP_FORMAT, "strftime pattern for CSV timestamps"),
)

MODEL_SETTINGS = (
    Setting("k", int, "5", "context window size on each side"),
    Setting("activity-embedding-dim", int, "100", "embedding width for activity tokens"),
    Setting("attribute-embedding-dim", int, "16", "embedding width for each attribute"),
    Setting("lstm-sizes", _ints, "32,16", "comma separated stacked LSTM widths"),
    Setting("dropout", float, "0.2", "dropout rate on the embedding outputs"),
    Setting("variant", str, "full", "full, prefix_only, suffix_only or no_attributes"),
)

TRAIN_SETTINGS = (
    Setting("max-epochs", int, "100", "epoch budget"),
    Setting("patience", int, "10", "early stopping patience in epochs"),
    Setting("batch-size", int, "32", "minibatch size"),
    Setting("learning-rate", float, "0.002", "optimizer step size"),
    Setting("validation-fraction", float, "0.2", "held-out share of the training samples"),
)


def read_config(path) -> dict[str, str]:
    values: dict[str, str] = {}
    for number, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"{path}:{number}: expected 'key = value', got {line!r}")
        key, _, value = line.partition("=")
        values[key.strip()] = value.strip()
    return values


def _resolve(settings, args, file_values) -> dict[str, object]:
    known = {setting.name for setting in settings}
    unknown = sorted(set(file_values) - known)
    if unknown:
        raise ConfigurationError(f"unknown configuration keys: {', '.join(unknown)}")
    resolved: dict[str, object] = {}
    for setting in settings:
        raw = getattr(args, setting.name.replace("-", "_"))
        if raw is None:
            raw = file_values.get(setting.name, setting.default)
        if raw is None:
            if setting.required:
                raise ConfigurationError(f"{setting.name} is required")
            resolved[setting.name] = None
            continue
        try:
            resolved[setting.name] = setting.cast(raw)
        except ValueError as exc:
            raise ConfigurationError(f"bad value for {setting.name}: {raw!r}") from exc
    return resolved


def _echo(command: str, resolved: dict[str, object]) -> None:
    for name in sorted(resolved):
        value = resolved[name]
        if isinstance(value, tuple):
            value = ",".join(str(item) for item in value)
        elif value is None:
            value = ""
        print(f"# {command} {name} = {value}", file=sys.stderr)


def _mapping(resolved) -> ColumnMapping:
    return ColumnMapping(
        case=resolved["case-column"],
        activity=resolved["activity-column"],
        timestamp=resolved["timestamp-column"] or None,
        attributes=resolved["attribute-columns"],
    )


def _read_log(resolved, key="input"):
    return load_log(resolved[key], _mapping(resolved), resolved["timestamp-format"])


def _architecture(resolved, attributes) -> ArchitectureConfig:
    base = ArchitectureConfig(
        k=resolved["k"],
        activity_embedding_dim=resolved["activity-embedding-dim"],
        attribute_embedding_dims={
            name: resolved["attribute-embedding-dim"] for name in attributes
        },
        lstm_layer_sizes=resolved["lstm-sizes"],
        dropout_rate=resolved["dropout"],
    )
    return variant_architecture(base, resolved["variant"])


def _train_config(resolved, seed: int) -> TrainConfig:
    return TrainConfig(
        max_epochs=resolved["max-epochs"],
        early_stop_patience=resolved["patience"],
        batch_size=resolved["batch-size"],
        learning_rate=resolved["learning-rate"],
        validation_fraction=resolved["validation-fraction"],
        seed=seed,
    )


def cmd_corrupt(resolved) -> int:
    log = _read_log(resolved)
    count, proportion = resolved["count"], resolved["proportion"]
    if (count is None) == (proportion is None):
        raise ConfigurationError("set exactly one of count or proportion")
    if count is not None:
        corrupted, ledger = corrupt_fixed_count(log, count, resolved["seed"])
    else:
        corrupted, ledger = corrupt_proportion(log, proportion, resolved["seed"])
    with open(resolved["output"], "wb") as sink:
        serialize_csv(corrupted, sink, resolved["timestamp-format"])
    ledger_path = Path(resolved["ledger"])
    with open(ledger_path, "wb") as csv_sink, open(ledger_path.with_suffix(".json"), "wb") as json_sink:
        save_ledger(ledger, csv_sink, json_sink)
    print(f"removed {len(ledger)}")
    return 0


def _epoch_line(stats) -> None:
    print(
        f"epoch {stats.epoch} train_loss {stats.train_loss:.6f} "
        f"val_loss {stats.val_loss:.6f} val_accuracy {stats.val_accuracy:.4f}",
        file=sys.stderr,
    )


def cmd_train(resolved) -> int:
    log = _read_log(resolved)
    attributes = log.attribute_names
    vocab = build_vocabulary(log, attributes)
    context = ContextConfig(k=resolved["k"])
    samples = build_training_set(log, vocab, context, attributes)
    checkpoint = train(
        samples,
        vocab,
        _architecture(resolved, attributes),
        _train_config(resolved, resolved["seed"]),
        progress=_epoch_line,
    )
    checkpoint.save(resolved["checkpoint"])
    if resolved["history"] is not None:
        with open(resolved["history"], "wb") as sink:
            write_history_csv(checkpoint.history, sink)
    best = checkpoint.best_epoch()
    print(f"epochs {len(checkpoint.history)}")
    print(f"best_epoch {best.epoch}")
    print(f"best_val_loss {best.val_loss!r}")
    print(f"best_val_accuracy {best.val_accuracy!r}")
    return 0


def cmd_repair(resolved) -> int:
    log = _read_log(resolved)
    checkpoint = Checkpoint.load(resolved["checkpoint"])
    repaired = repair(log, checkpoint)
    with open(resolved["output"], "wb") as sink:
        serialize_csv(repaired, sink, resolved["timestamp-format"])
    print(f"filled {log.missing_count - repaired.missing_count}")
    return 0


def cmd_evaluate(resolved) -> int:
    original = _read_log(resolved, "original")
    repaired = _read_log(resolved, "repaired")
    ledger_path = Path(resolved["ledger"])
    with open(ledger_path, "rb") as csv_source, open(ledger_path.with_suffix(".json"), "rb") as json_source:
        ledger = load_ledger(csv_source, json_source)
    report = score(original, repaired, ledger)
    print(f"n {report.n}")
    print(f"m {report.m}")
    print(f"success_rate {report.success_rate!r}")
    return 0


def _read_reference(path) -> list[tuple[str, str, float, float]]:
    with open(path, "r", encoding="utf-8", newline="") as source:
        reader = csv.DictReader(source)
        try:
            return [
                (
                    row["missing_level"],
                    row["variant"],
                    float(row["expected_mean"]),
                    float(row["tolerance"]),
                )
                for row in reader
            ]
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigurationError(
                f"{path}: reference rows need missing_level, variant, expected_mean, tolerance"
            ) from exc


def cmd_experiment(resolved) -> int:
    protocol = Protocol(resolved["protocol"])
    attributes = resolved["attribute-columns"]
    plan = ExperimentPlan(
        dataset=resolved["input"],
        protocol=protocol,
        levels=resolved["levels"],
        repeats=resolved["repeats"],
        variants=resolved["variants"],
        base_seed=resolved["seed"],
        context=ContextConfig(k=resolved["k"]),
        architecture=_architecture(resolved, attributes),
        train=_train_config(resolved, resolved["seed"]),
        mapping=_mapping(resolved),
        timestamp_format=resolved["timestamp-format"],
    )
    rows = run_experiment(plan, threads=resolved["threads"])
    out_dir = Path(resolved["output-dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "report.csv", "wb") as sink:
        write_report_csv(rows, sink)
    text = format_report_text(rows)
    (out_dir / "report.txt").write_text(text, encoding="utf-8")
    from .figures import render_report_figure

    render_report_figure(rows, out_dir / "report.png")
    print(text, end="")
    failed = any(row.error for row in rows)
    if resolved["reference"] is not None:
        for check in compare_table(rows, _read_reference(resolved["reference"])):
            state = "pass" if check.ok else "FAIL"
            print(
                f"{state} level={check.missing_level} variant={check.variant} "
                f"expected={check.expected_mean} tolerance={check.tolerance} "
                f"actual={check.actual_mean:.4f}"
            )
            failed = failed or not check.ok
    return 1 if failed else 0


@dataclass(frozen=True)
class Command:
    name: str
    help: str
    settings: tuple[Setting, ...]
    run: Callable[[dict], int]


COMMANDS = (
    Command(
        "corrupt",
        "remove activity labels and write the ledger of what was removed",
        IO_SETTINGS
        + (
            Setting("input", str, help="event log to corrupt (.csv or .xes)", required=True),
            Setting("output", str, help="corrupted log CSV to write", required=True),
            Setting("ledger", str, help="ledger CSV to write (JSON sidecar lands next to it)", required=True),
            Setting("count", int, help="blank one event in each of this many traces"),
            Setting("proportion", float, help="blank this fraction of labeled events"),
            Setting("seed", int, "0", "random seed"),
        ),
        cmd_corrupt,
    ),
    Command(
        "train",
        "fit the label classifier on the log's complete events",
        IO_SETTINGS
        + MODEL_SETTINGS
        + TRAIN_SETTINGS
        + (
            Setting("input", str, help="event log to learn from (.csv or .xes)", required=True),
            Setting("checkpoint", str, help="model checkpoint to write", required=True),
            Setting("history", str, help="optional per-epoch statistics CSV"),
            Setting("seed", int, "0", "random seed"),
        ),
        cmd_train,
    ),
    Command(
        "repair",
        "fill missing labels using a trained checkpoint",
        IO_SETTINGS
        + (
            Setting("input", str, help="event log with missing labels", required=True),
            Setting("checkpoint", str, help="checkpoint written by train", required=True),
            Setting("output", str, help="repaired log CSV to write", required=True),
        ),
        cmd_repair,
    ),
    Command(
        "evaluate",
        "score a repaired log against the corruption ledger",
        IO_SETTINGS
        + (
            Setting("original", str, help="log before corruption", required=True),
            Setting("repaired", str, help="log after repair", required=True),
            Setting("ledger", str, help="ledger CSV written by corrupt", required=True),
        ),
        cmd_evaluate,
    ),
    Command(
        "experiment",
        "sweep missing levels and variants with repeats; write report files",
        IO_SETTINGS
        + MODEL_SETTINGS
        + TRAIN_SETTINGS
        + (
            Setting("input", str, help="event log to experiment on", required=True),
            Setting("output-dir", str, help="directory for report.csv/.txt/.png", required=True),
            Setting("protocol", str, help="fixed_count or proportion", required=True),
            Setting("levels", _floats, help="comma separated missing levels", required=True),
            Setting("repeats", int, "10", "independent corrupt/train/repair repeats per cell"),
            Setting("variants", _names, "full", "comma separated model variants"),
            Setting("threads", int, "1", "parallel cells; 1 keeps runs bit-stable"),
            Setting("reference", str, help="optional expected-means CSV to compare against"),
            Setting("seed", int, "0", "base seed; repeat r uses seed + r"),
        ),
        cmd_experiment,
    ),
)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="logrepair",
        description="repair missing activity labels in business process event logs",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subparsers = parser.add_subparsers(dest="command", required=True)
    for command in COMMANDS:
        sub = subparsers.add_parser(command.name, help=command.help)
        sub.add_argument("--config", help="key = value configuration file")
        for setting in command.settings:
            sub.add_argument(f"--{setting.name}", default=None, help=setting.help, metavar="V")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    command = next(c for c in COMMANDS if c.name == args.command)
    try:
        file_values = read_config(args.config) if args.config else {}
        resolved = _resolve(command.settings, args, file_values)
        _echo(command.name, resolved)
        return command.run(resolved)
    except (LogRepairError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
