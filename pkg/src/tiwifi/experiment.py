"""Batch execution of STA-count x discipline x seed sweeps and CSV emission."""

from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .bss import simulate
from .config import ExperimentConfig, SimParams, validate
from .playback import METRIC_FIELDS

log = logging.getLogger(__name__)

KEY_FIELDS = ["discipline", "sta_count", "seed"]
VALUE_FIELDS = [f for f in METRIC_FIELDS if f not in KEY_FIELDS]
RUN_COLUMNS = KEY_FIELDS + VALUE_FIELDS + ["error"]
AGGREGATE_COLUMNS = ["discipline", "sta_count", "stat", "runs", "failed"] + VALUE_FIELDS

# aggregated by max over seeds in plot data; everything else by mean
WORST_FIELDS = ("worst_dl_ms", "worst_ul_ms", "worst_rtt_ms")

PLOT_COLUMNS = {
    "latency_ampdu": ["sta_count", "discipline", "worst_dl_ms", "worst_ul_ms", "worst_rtt_ms",
                      "mean_ampdu_dl", "mean_ampdu_ul"],
    "rmse_fraction": ["sta_count", "discipline", "delivered_fraction", "rmse_cm"],
}

_INT_FIELDS = {"sta_count", "seed", "generated", "delivered", "retry_drops", "proactive_drops",
               "residual", "collisions", "attempts", "runs", "failed"}


@dataclass
class SweepResult:
    """Per-run rows keyed by ``(discipline, sta_count, seed)``.

    A failed run keeps its key with empty metrics and a non-empty ``error``.
    """

    rows: dict = field(default_factory=dict)
    discipline_order: tuple = ("vanilla", "nobus")

    def __len__(self) -> int:
        return len(self.rows)

    def _sort_key(self, key):
        disc, n, seed = key
        order = self.discipline_order
        return (order.index(disc) if disc in order else len(order), disc, n, seed)

    def keys(self) -> list:
        return sorted(self.rows, key=self._sort_key)

    def ok_rows(self) -> list:
        return [self.rows[k] for k in self.keys() if not self.rows[k]["error"]]

    def failed(self) -> list:
        return [self.rows[k] for k in self.keys() if self.rows[k]["error"]]

    def select(self, discipline: str, sta_count: int) -> list:
        return [r for r in self.ok_rows() if r["discipline"] == discipline and r["sta_count"] == sta_count]

    def aggregates(self) -> list:
        """Mean and max of every metric over seeds, per (discipline, sta_count)."""
        groups: dict = {}
        for key in self.keys():
            disc, n, _ = key
            groups.setdefault((disc, n), []).append(self.rows[key])
        out = []
        for (disc, n), rows in groups.items():
            ok = [r for r in rows if not r["error"]]
            for stat, fn in (("mean", np.mean), ("max", np.max)):
                agg = {"discipline": disc, "sta_count": n, "stat": stat,
                       "runs": len(rows), "failed": len(rows) - len(ok)}
                for name in VALUE_FIELDS:
                    agg[name] = float(fn([float(r[name]) for r in ok])) if ok else math.nan
                out.append(agg)
        return out

    def write_csv(self, path) -> None:
        _write_rows(path, RUN_COLUMNS, [self.rows[k] for k in self.keys()])

    def write_aggregates(self, path) -> None:
        _write_rows(path, AGGREGATE_COLUMNS, self.aggregates())

    @classmethod
    def read_csv(cls, path) -> "SweepResult":
        path = Path(path)
        with path.open(newline="") as fh:
            reader = csv.DictReader(fh)
            missing = set(RUN_COLUMNS) - set(reader.fieldnames or ())
            if missing:
                raise ValueError(f"{path}: missing columns {sorted(missing)}")
            result = cls()
            order = []
            for raw in reader:
                row = {"error": raw["error"]}
                for name in KEY_FIELDS + VALUE_FIELDS:
                    row[name] = _parse_cell(name, raw[name])
                key = (row["discipline"], row["sta_count"], row["seed"])
                result.rows[key] = row
                if row["discipline"] not in order:
                    order.append(row["discipline"])
        result.discipline_order = tuple(order)
        return result


def _parse_cell(name: str, text: str):
    if name == "discipline":
        return text
    if text == "":
        return math.nan
    if name in _INT_FIELDS:
        return int(text)
    return float(text)


def _format_cell(value) -> str:
    if isinstance(value, float):
        return "" if math.isnan(value) else repr(value)
    return str(value)


def _write_rows(path, columns, rows) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_format_cell(row.get(c, "")) for c in columns])


def failed_row(discipline: str, sta_count: int, seed: int, exc: BaseException) -> dict:
    row = {name: math.nan for name in VALUE_FIELDS}
    row.update(discipline=discipline, sta_count=sta_count, seed=seed,
               error=f"{type(exc).__name__}: {exc}")
    return row


def run_one(params: SimParams, discipline: str, sta_count: int, seed: int) -> dict:
    """One run as a sweep row; exceptions become an error marker."""
    try:
        metrics = simulate(params, sta_count, discipline, seed).metrics
    except Exception as exc:  # noqa: BLE001 - recorded, never dropped
        return failed_row(discipline, sta_count, seed, exc)
    row = metrics.as_row()
    row["error"] = ""
    return row


def _run_packed(job):
    return run_one(*job)


def sweep_jobs(config: ExperimentConfig) -> list:
    params = config.sim_params()
    exp = config.experiment
    return [(params, d, n, s) for d in exp.disciplines for n in exp.sta_counts for s in exp.seeds]


def run_sweep(config: ExperimentConfig, progress: bool = False) -> SweepResult:
    validate(config)
    jobs = sweep_jobs(config)
    result = SweepResult(discipline_order=tuple(config.experiment.disciplines))
    workers = config.experiment.workers
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = pool.map(_run_packed, jobs)
            _collect(result, rows, len(jobs), progress)
    else:
        _collect(result, map(_run_packed, jobs), len(jobs), progress)
    return result


def _collect(result: SweepResult, rows: Iterable, total: int, progress: bool) -> None:
    for i, row in enumerate(rows, 1):
        key = (row["discipline"], row["sta_count"], row["seed"])
        result.rows[key] = row
        if row["error"]:
            log.error("run %s failed: %s", key, row["error"])
        elif progress:
            log.info("[%d/%d] %s n=%d seed=%d rtt=%.2f ms", i, total, *key, row["worst_rtt_ms"])


def plot_rows(sweep: SweepResult, kind: str, disciplines: Optional[Iterable[str]] = None) -> list:
    if kind not in PLOT_COLUMNS:
        raise ValueError(f"unknown plot kind {kind!r}; expected one of {sorted(PLOT_COLUMNS)}")
    wanted = None if disciplines is None else set(disciplines)
    by_stat = {(a["discipline"], a["sta_count"], a["stat"]): a for a in sweep.aggregates()}
    rows = []
    for (disc, n, stat), agg in by_stat.items():
        if stat != "mean" or (wanted is not None and disc not in wanted):
            continue
        if agg["runs"] == agg["failed"]:
            continue
        peak = by_stat[(disc, n, "max")]
        row = {"sta_count": n, "discipline": disc}
        for name in PLOT_COLUMNS[kind][2:]:
            row[name] = peak[name] if name in WORST_FIELDS else agg[name]
        rows.append(row)
    order = sweep.discipline_order
    rows.sort(key=lambda r: (r["sta_count"], order.index(r["discipline"]) if r["discipline"] in order
                             else len(order), r["discipline"]))
    return rows


def emit_plotdata(sweep: SweepResult, kind: str, out_dir,
                  disciplines: Optional[Iterable[str]] = None) -> Optional[Path]:
    """Write ``<kind>.csv`` into ``out_dir``; returns ``None`` if nothing matched."""
    if not len(sweep):
        raise ValueError("sweep is empty")
    rows = plot_rows(sweep, kind, disciplines)
    if not rows:
        log.warning("no runs match the discipline filter; %s.csv not written", kind)
        return None
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{kind}.csv"
    _write_rows(path, PLOT_COLUMNS[kind], rows)
    return path
