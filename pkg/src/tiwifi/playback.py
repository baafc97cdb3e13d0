"""Receiver display models and run metrics."""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field, asdict
from typing import Optional, Sequence

import numpy as np

from .kernel import MS

ZERO = (0.0, 0.0, 0.0)


class JitterBuffer:
    """Serial 1 kHz playback: one pending sample is shown per display tick.

    Missing sequence numbers are skipped rather than waited for.
    """

    def __init__(self, initial=ZERO):
        self._pending: list = []
        self.last_displayed_value = tuple(initial)
        self.last_displayed_seq = -1

    def __len__(self) -> int:
        return len(self._pending)

    @property
    def pending(self) -> list:
        return [seq for seq, _ in sorted(self._pending)]

    def on_reception(self, seq: int, value, now: Optional[int] = None) -> bool:
        if seq <= self.last_displayed_seq:
            return False
        heapq.heappush(self._pending, (seq, tuple(value)))
        return True

    def display_tick(self, tick: Optional[int] = None):
        """Show the lowest pending sample, or hold the last one. Returns ``(seq, value)``."""
        if self._pending:
            seq, value = heapq.heappop(self._pending)
            self.last_displayed_seq = seq
            self.last_displayed_value = value
            return seq, value
        return None, self.last_displayed_value


class ZohDisplay:
    """Zero-order hold of the freshest sample; older arrivals are discarded."""

    def __init__(self, initial=ZERO):
        self.latest_seq = -1
        self.value = tuple(initial)

    def on_reception(self, seq: int, value, now: Optional[int] = None) -> bool:
        if seq <= self.latest_seq:
            return False
        self.latest_seq = seq
        self.value = tuple(value)
        return True

    def display_tick(self, tick: Optional[int] = None):
        return self.latest_seq, self.value


def reconstruct(discipline: str, positions: np.ndarray, received_at: np.ndarray,
                tick_times: np.ndarray):
    """Replay receptions through the receiver's display model.

    ``received_at[seq]`` is the reception time of sample ``seq`` or -1.
    A sample received at or before a tick is visible at that tick.
    Returns ``(displayed, displayed_at)``: the per-tick shown position and,
    per sample, the time it first appeared on screen (-1 if never).
    """
    n = len(tick_times)
    displayed = np.empty((n, 3))
    displayed_at = np.full(len(received_at), -1, dtype=np.int64)
    seqs = np.flatnonzero(received_at >= 0)
    order = seqs[np.argsort(received_at[seqs], kind="stable")]
    arrivals = received_at[order]
    pos = positions.tolist()
    nobus = discipline == "nobus"
    display = ZohDisplay() if nobus else JitterBuffer()
    j = 0
    m = len(order)
    for k in range(n):
        t = tick_times[k]
        while j < m and arrivals[j] <= t:
            seq = int(order[j])
            if display.on_reception(seq, pos[seq]) and nobus:
                displayed_at[seq] = arrivals[j]
            j += 1
        seq, value = display.display_tick(k)
        if not nobus and seq is not None:
            displayed_at[seq] = t
        displayed[k] = value
    return displayed, displayed_at


def rmse(source: np.ndarray, displayed: np.ndarray, warmup_ticks: int = 0) -> np.ndarray:
    """Per-axis RMSE over ticks from ``warmup_ticks`` onwards."""
    source = np.asarray(source, dtype=float)
    displayed = np.asarray(displayed, dtype=float)
    if source.shape != displayed.shape:
        raise ValueError("source and displayed must have the same shape")
    if len(source) <= warmup_ticks:
        raise ValueError(f"run of {len(source)} ticks is not longer than warmup {warmup_ticks}")
    err = displayed[warmup_ticks:] - source[warmup_ticks:]
    return np.sqrt(np.mean(err ** 2, axis=0))


@dataclass
class FlowRecord:
    """Per-sample outcome arrays for one flow."""

    name: str
    direction: str  # "dl" or "ul"
    src: int
    dst: int
    offset: int
    period: int
    generated: int = 0
    received_at: np.ndarray = None
    outcome: np.ndarray = None
    enqueued_at: np.ndarray = None
    delivered_seq_max: int = -1

    @classmethod
    def allocate(cls, name, direction, src, dst, offset, period, ticks):
        return cls(name, direction, src, dst, offset, period,
                   received_at=np.full(ticks, -1, dtype=np.int64),
                   outcome=np.zeros(ticks, dtype=np.int8),
                   enqueued_at=np.full(ticks, -1, dtype=np.int64))

    def generated_at(self) -> np.ndarray:
        return self.offset + np.arange(len(self.outcome), dtype=np.int64) * self.period


@dataclass
class RunMetrics:
    discipline: str
    sta_count: int
    seed: int
    worst_dl_ms: float
    worst_ul_ms: float
    worst_rtt_ms: float
    p99_dl_ms: float
    p99_ul_ms: float
    mean_dl_ms: float
    mean_ul_ms: float
    mean_ampdu_dl: float
    mean_ampdu_ul: float
    delivered_fraction: float
    delivered_fraction_dl: float
    delivered_fraction_ul: float
    rmse_cm: float
    rmse_dl_cm: float
    rmse_ul_cm: float
    rmse_x_cm: float
    rmse_y_cm: float
    rmse_z_cm: float
    display_latency_dl_ms: float
    generated: int
    delivered: int
    retry_drops: int
    proactive_drops: int
    residual: int
    max_queueing_ms: float
    collisions: int
    attempts: int

    def as_row(self) -> dict:
        return asdict(self)


METRIC_FIELDS = list(RunMetrics.__dataclass_fields__)


def _ms(ns) -> float:
    return float(ns) / MS


@dataclass
class RawRun:
    """Everything a finished run hands to :func:`summarize`."""

    discipline: str
    sta_count: int
    seed: int
    flows: list
    traces: dict
    ampdu_sizes: dict
    warmup: int
    rmse_axis: int = 0
    max_queueing: int = 0
    collisions: int = 0
    attempts: int = 0
    displays: dict = field(default_factory=dict)


def display_flow(raw: RawRun, rec: FlowRecord):
    if rec.name not in raw.displays:
        positions = raw.traces[rec.name].positions[:len(rec.outcome)]
        raw.displays[rec.name] = reconstruct(raw.discipline, positions, rec.received_at,
                                             rec.generated_at())
    return raw.displays[rec.name]


def summarize(raw: RawRun) -> RunMetrics:
    warm_ticks = {}
    lat = {"dl": [], "ul": []}
    disp_lat = []
    counts = {"dl": [0, 0], "ul": [0, 0]}
    totals = np.zeros(4, dtype=np.int64)
    rmse_by_dir = {"dl": [], "ul": []}
    rmse_axes = []
    for rec in raw.flows:
        gen = rec.generated_at()
        n = rec.generated
        totals += np.bincount(rec.outcome[:n], minlength=4)
        ok = rec.received_at[:n] >= 0
        steady = gen[:n] >= raw.warmup
        sel = ok & steady
        lat[rec.direction].append(rec.received_at[:n][sel] - gen[:n][sel])
        counts[rec.direction][0] += int(ok[steady].sum())
        counts[rec.direction][1] += int(steady.sum())
        warm = int(np.searchsorted(gen, raw.warmup))
        warm_ticks[rec.name] = warm
        displayed, displayed_at = display_flow(raw, rec)
        src = raw.traces[rec.name].positions[:len(rec.outcome)]
        per_axis = rmse(src, displayed, warm)
        rmse_axes.append(per_axis)
        rmse_by_dir[rec.direction].append(per_axis[raw.rmse_axis])
        if rec.direction == "dl":
            shown = (displayed_at[:n] >= 0) & steady
            disp_lat.append(displayed_at[:n][shown] - gen[:n][shown])

    def worst(arrs):
        arrs = [a for a in arrs if len(a)]
        return _ms(max(a.max() for a in arrs)) if arrs else 0.0

    def pct(arrs, q):
        arrs = [a for a in arrs if len(a)]
        return _ms(np.percentile(np.concatenate(arrs), q)) if arrs else 0.0

    def mean_of(arrs):
        arrs = [a for a in arrs if len(a)]
        return _ms(np.concatenate(arrs).mean()) if arrs else 0.0

    def frac(c):
        return c[0] / c[1] if c[1] else 0.0

    def mean_list(xs):
        return float(np.mean(xs)) if len(xs) else 0.0

    worst_dl, worst_ul = worst(lat["dl"]), worst(lat["ul"])
    axes = np.mean(rmse_axes, axis=0) if rmse_axes else np.zeros(3)
    return RunMetrics(
        discipline=raw.discipline,
        sta_count=raw.sta_count,
        seed=raw.seed,
        worst_dl_ms=worst_dl,
        worst_ul_ms=worst_ul,
        worst_rtt_ms=worst_dl + worst_ul,
        p99_dl_ms=pct(lat["dl"], 99),
        p99_ul_ms=pct(lat["ul"], 99),
        mean_dl_ms=mean_of(lat["dl"]),
        mean_ul_ms=mean_of(lat["ul"]),
        mean_ampdu_dl=mean_list(raw.ampdu_sizes["dl"]),
        mean_ampdu_ul=mean_list(raw.ampdu_sizes["ul"]),
        delivered_fraction=frac([counts["dl"][0] + counts["ul"][0], counts["dl"][1] + counts["ul"][1]]),
        delivered_fraction_dl=frac(counts["dl"]),
        delivered_fraction_ul=frac(counts["ul"]),
        rmse_cm=float(axes[raw.rmse_axis]),
        rmse_dl_cm=mean_list(rmse_by_dir["dl"]),
        rmse_ul_cm=mean_list(rmse_by_dir["ul"]),
        rmse_x_cm=float(axes[0]),
        rmse_y_cm=float(axes[1]),
        rmse_z_cm=float(axes[2]),
        display_latency_dl_ms=mean_of(disp_lat),
        generated=int(sum(r.generated for r in raw.flows)),
        delivered=int(totals[1]),
        retry_drops=int(totals[2]),
        proactive_drops=int(totals[3]),
        residual=int(totals[0]),
        max_queueing_ms=_ms(raw.max_queueing),
        collisions=raw.collisions,
        attempts=raw.attempts,
    )
