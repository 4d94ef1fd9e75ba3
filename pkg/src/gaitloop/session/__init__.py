"""Session orchestration, logs, metrics and plots."""

from .config import SessionConfig, config_from_dict, dump_config, load_config
from .logs import ConditionRecord, CueLogRecord, StepLogRecord, WalkerTraceRecord, read_records, write_records
from .metrics import ConditionMetrics, SessionMetrics, compute_metrics, read_metrics_csv, write_metrics_csv
from .runner import Controller, SessionResult, Timeline, build_timeline, run_session

__all__ = [
    "ConditionMetrics",
    "ConditionRecord",
    "Controller",
    "CueLogRecord",
    "SessionConfig",
    "SessionMetrics",
    "SessionResult",
    "StepLogRecord",
    "Timeline",
    "WalkerTraceRecord",
    "build_timeline",
    "compute_metrics",
    "config_from_dict",
    "dump_config",
    "load_config",
    "read_metrics_csv",
    "read_records",
    "run_session",
    "write_metrics_csv",
    "write_records",
]
