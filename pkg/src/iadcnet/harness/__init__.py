"""Configuration, training, random search, persistence and export."""

from .artifacts import load_result, load_table, save_result
from .config import RunConfig, load_config, save_config
from .export import RESULT_COLUMNS, export_results
from .search import TABLE_GRID, plan_runs, random_search
from .training import RunResult, Snapshot, generate_dataset, reevaluate, train_run

__all__ = [
    "RESULT_COLUMNS", "RunConfig", "RunResult", "Snapshot", "TABLE_GRID", "export_results", "generate_dataset",
    "load_config", "load_result", "load_table", "plan_runs", "random_search", "reevaluate", "save_config",
    "save_result", "train_run",
]
