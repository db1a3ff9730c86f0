"""Metrics, statistical tests and table writers over persisted run traces."""
from .metrics import IncompleteTraceError, budget_ratio, e_bbc, env_errors, loss_curve
from .stats import a12, a12_class, scott_knott, wilcoxon_signed_rank
from .tables import SCHEMA, CellKey, MetricTable, analyze, build_metric_table, cell_filename, load_ratios, load_traces

__all__ = [
    "IncompleteTraceError",
    "budget_ratio",
    "e_bbc",
    "env_errors",
    "loss_curve",
    "a12",
    "a12_class",
    "scott_knott",
    "wilcoxon_signed_rank",
    "SCHEMA",
    "CellKey",
    "MetricTable",
    "analyze",
    "build_metric_table",
    "cell_filename",
    "load_ratios",
    "load_traces",
]
