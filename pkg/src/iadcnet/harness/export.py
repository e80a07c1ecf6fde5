"""Results table and per-figure plot data as delimited text."""

from __future__ import annotations

import csv
import json
from pathlib import Path

from ..errors import DomainError
from .training import RunResult

RESULT_COLUMNS = ("run_id", "seed", "K", "Q", "TPT", "sqnr_enob", "snr_enob", "enis", "ap", "c_tot_pf",
                  "enob_per_cycle", "status")
FORMATS = ("csv", "tsv")

FIGURES = {
    "fig5_enob_vs_ctot": ("K", "Q", "run_id", "c_tot_pf", "sqnr_enob", "snr_enob"),
    "fig6_ctot_vs_ap": ("K", "Q", "run_id", "ap", "c_tot_pf"),
    "fig6_enob_per_cycle_vs_snr": ("K", "Q", "run_id", "snr_enob", "enob_per_cycle", "enis"),
    "fig7_snr_vs_ap": ("K", "Q", "run_id", "ap", "snr_enob"),
}


def fmt(value) -> str:
    """Nine significant digits for floats, plain text for everything else."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        return format(value, ".9g")
    return str(value)


def result_row(result: RunResult) -> dict:
    m = result.metrics
    c = result.config
    row = {"run_id": result.run_id, "seed": c.seed, "K": c.K, "Q": c.Q, "TPT": float(c.tpt), "status": result.status}
    if m is None:
        row.update(dict.fromkeys(("sqnr_enob", "snr_enob", "enis", "ap", "c_tot_pf", "enob_per_cycle")))
    else:
        row.update(sqnr_enob=float(m.sqnr_enob), snr_enob=float(m.snr_enob), enis=int(m.enis), ap=int(m.ap),
                   c_tot_pf=float(m.c_tot), enob_per_cycle=float(m.enob_per_cycle))
    return row


def _write(path: Path, columns, rows, delimiter: str) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([fmt(row[c]) for c in columns])


def export_results(table: list[RunResult], out_dir, fmt_name: str = "csv") -> list[Path]:
    """Write ``results.<ext>`` plus one plot-data file per figure.

    Rows are sorted by run id, so the same table always yields the same
    bytes. Figure files list successful runs only, sorted by ``(K, Q, run_id)``.
    """
    if not table:
        raise DomainError("cannot export an empty results table")
    if fmt_name not in FORMATS:
        raise DomainError(f"format must be one of {FORMATS}")
    delimiter = "," if fmt_name == "csv" else "\t"
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = sorted((result_row(r) for r in table), key=lambda r: r["run_id"])
    written = [out / f"results.{fmt_name}"]
    _write(written[0], RESULT_COLUMNS, rows, delimiter)
    ok = sorted((r for r in rows if r["status"] == "ok"), key=lambda r: (r["K"], r["Q"], r["run_id"]))
    for name, columns in FIGURES.items():
        path = out / f"{name}.{fmt_name}"
        _write(path, columns, ok, delimiter)
        written.append(path)
    manifest = out / "figures.json"
    manifest.write_text(json.dumps({name: list(cols) for name, cols in FIGURES.items()}, indent=1, sort_keys=True)
                        + "\n")
    written.append(manifest)
    return written
