"""Repair missing activity labels in business process event logs.

The pipeline: parse a log, blank labels under a corruption protocol (keeping
a ledger of the ground truth), train a dual context sequence classifier on
the log's complete events, fill the gaps, and score the repair against the
ledger.  Everything is seeded and byte-stable.
"""

from .corruption import (
    CorruptionLedger,
    LedgerEntry,
    Protocol,
    corrupt_fixed_count,
    corrupt_proportion,
    load_ledger,
    restore,
    save_ledger,
)
from .dataset import (
    ContextConfig,
    EncodedSample,
    MISSING_TOKEN,
    PAD_TOKEN,
    Vocabulary,
    build_repair_set,
    build_training_set,
    build_vocabulary,
    extract_context,
    split_events,
)
from .errors import (
    CapacityError,
    CheckpointError,
    ConfigurationError,
    ConsistencyError,
    EncodingError,
    LogRepairError,
    ParseError,
    ShapeError,
    StatisticsError,
    TrainingError,
)
from .eventlog import (
    ColumnMapping,
    Event,
    EventLog,
    Trace,
    log_mapping,
    parse_csv,
    parse_xes,
    serialize_csv,
)
from .evaluation import (
    ExperimentPlan,
    ReportRow,
    SuccessReport,
    aggregate_reports,
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
    EpochStats,
    RepairModel,
    TrainConfig,
    forward,
    repair,
    train,
    write_history_csv,
)

__version__ = "0.1.0"
