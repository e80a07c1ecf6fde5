"""Run artifacts: one JSON document per run plus an append-only index."""

from __future__ import annotations

import json
import os
from pathlib import Path

from ..metrics import MetricBundle
from .config import RunConfig
from .training import RunResult, Snapshot

FORMAT_VERSION = 1
INDEX_NAME = "index.jsonl"
RUNS_DIR = "runs"


def result_to_dict(result: RunResult) -> dict:
    topo = result.config.topology()
    return {
        "format": FORMAT_VERSION,
        "run_id": result.run_id,
        "status": result.status,
        "seed": result.seed,
        "config_hash": result.config_hash,
        "config": result.config.to_dict(),
        "topology": {"K": topo.K, "N": topo.N, "Q": topo.Q, "delta": list(map(float, topo.delta_array)),
                     "decoder_depth": topo.decoder_depth},
        "snapshot": None if result.snapshot is None else result.snapshot.to_dict(),
        "metrics": None if result.metrics is None else result.metrics.to_dict(),
        "history": result.history,
        "duration_s": result.duration_s,
        "diagnostics": result.diagnostics,
    }


def result_from_dict(d: dict) -> RunResult:
    if d.get("format") != FORMAT_VERSION:
        raise ValueError(f"unsupported artifact format {d.get('format')!r}")
    return RunResult(
        config=RunConfig.from_dict(d["config"]),
        status=d["status"],
        snapshot=None if d["snapshot"] is None else Snapshot.from_dict(d["snapshot"]),
        metrics=None if d["metrics"] is None else MetricBundle.from_dict(d["metrics"]),
        history=d.get("history", []),
        duration_s=d.get("duration_s", 0.0),
        diagnostics=d.get("diagnostics", ""),
        run_id=d.get("run_id", ""),
    )


def save_result(result: RunResult, path) -> Path:
    """Write atomically so an interrupted sweep never leaves a torn file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(result_to_dict(result), indent=1))
    os.replace(tmp, path)
    return path


def load_result(path) -> RunResult:
    return result_from_dict(json.loads(Path(path).read_text()))


def run_path(out_dir, run_id: str) -> Path:
    return Path(out_dir) / RUNS_DIR / f"{run_id}.json"


def append_index(out_dir, result: RunResult) -> None:
    line = json.dumps({"run_id": result.run_id, "status": result.status, "config_hash": result.config_hash})
    with open(Path(out_dir) / INDEX_NAME, "a") as fh:
        fh.write(line + "\n")


def load_table(out_dir) -> list[RunResult]:
    """Every completed run found under ``out_dir``, ordered by run id.

    Reads the per-run files directly, so runs whose index line was lost
    are still included.
    """
    runs = sorted((Path(out_dir) / RUNS_DIR).glob("*.json"))
    return [load_result(p) for p in runs]
