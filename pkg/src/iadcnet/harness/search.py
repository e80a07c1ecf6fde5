"""Seeded uniform random search over a configuration grid."""

from __future__ import annotations

import itertools
import logging
import os
from concurrent.futures import ProcessPoolExecutor, as_completed

import numpy as np

from ..errors import DomainError
from .artifacts import append_index, load_result, run_path, save_result
from .config import RunConfig
from .training import RunResult, train_run

log = logging.getLogger(__name__)

WORKERS_ENV = "IADCNET_WORKERS"
TABLE_GRID = {"K": [2, 3, 4], "Q": [4, 8, 32], "tpt": [4.0, 8.0, 16.0, 32.0]}


def grid_cells(grid: dict) -> list[dict]:
    """Cross-product of the grid's value sets, in a fixed order."""
    keys = sorted(grid)
    for k in keys:
        if len(grid[k]) == 0:
            raise DomainError(f"grid entry {k!r} has no values")
    return [dict(zip(keys, values)) for values in itertools.product(*(grid[k] for k in keys))]


def plan_runs(template: RunConfig, grid: dict, n_runs: int, master_seed: int) -> list[tuple[str, RunConfig]]:
    """Assign each run a grid cell (uniformly) and an independent seed."""
    if n_runs < 1:
        raise DomainError("n_runs must be >= 1")
    cells = grid_cells(grid)
    ss = np.random.SeedSequence(master_seed)
    picker = np.random.default_rng(ss.spawn(1)[0])
    choice = picker.integers(0, len(cells), size=n_runs)
    seeds = [int(child.generate_state(1)[0]) for child in ss.spawn(n_runs)]
    plan = []
    for i in range(n_runs):
        config = template.with_(**cells[choice[i]], seed=seeds[i])
        plan.append((f"r{master_seed}-{i:05d}", config))
    return plan


def resolve_workers(workers: int | None = None) -> int:
    """CLI value first, then the environment variable, then 1."""
    if workers is None:
        workers = int(os.environ.get(WORKERS_ENV, "1"))
    if workers < 1:
        raise DomainError("workers must be >= 1")
    return workers


def _execute(run_id: str, config: RunConfig, out_dir: str) -> RunResult:
    result = train_run(config, run_id)
    save_result(result, run_path(out_dir, run_id))
    return result


def _cached(out_dir, run_id: str, config: RunConfig) -> RunResult | None:
    path = run_path(out_dir, run_id)
    if not path.exists():
        return None
    try:
        result = load_result(path)
    except (ValueError, KeyError):
        return None
    return result if result.config_hash == config.config_hash() else None


def random_search(template: RunConfig, grid: dict, n_runs: int, master_seed: int, out_dir,
                  workers: int | None = None, progress=None) -> list[RunResult]:
    """Run (or resume) a sweep and return its results ordered by run id.

    Each finished run is written to its own file and announced in the
    index as soon as it completes; rerunning the same sweep skips runs whose
    artifact already exists with a matching configuration.
    """
    os.makedirs(out_dir, exist_ok=True)
    plan = plan_runs(template, grid, n_runs, master_seed)
    results: dict[str, RunResult] = {}
    todo = []
    for run_id, config in plan:
        cached = _cached(out_dir, run_id, config)
        if cached is not None:
            results[run_id] = cached
        else:
            todo.append((run_id, config))
    workers = resolve_workers(workers)

    def finish(result):
        append_index(out_dir, result)
        results[result.run_id] = result
        if progress is not None:
            progress(result)

    if workers == 1 or len(todo) <= 1:
        for run_id, config in todo:
            finish(_execute(run_id, config, str(out_dir)))
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_execute, run_id, config, str(out_dir)) for run_id, config in todo]
            for fut in as_completed(futures):
                finish(fut.result())
    return [results[run_id] for run_id, _ in plan]
