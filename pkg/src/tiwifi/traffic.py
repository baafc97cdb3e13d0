"""1 kHz haptic position traces and the per-tick application messages built from them."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Optional

import numpy as np

from .kernel import MS
from .mac import Mpdu


class TraceFormatError(ValueError):
    pass


class TraceSample(NamedTuple):
    tick: int
    position: tuple  # (x, y, z) in cm


@dataclass(frozen=True)
class MotionParams:
    components: int = 5
    f_min: float = 0.1
    f_max: float = 4.0
    p99_cm: float = 10.0
    # soft limit keeps excursions below p99_cm + limit_headroom_cm
    limit_knee_cm: float = 9.0
    limit_headroom_cm: float = 3.0


@dataclass
class SensorTrace:
    positions: np.ndarray  # shape (ticks, 3)
    source: str = "synthetic"

    def __post_init__(self) -> None:
        self.positions = np.asarray(self.positions, dtype=float)
        if self.positions.ndim != 2 or self.positions.shape[1] != 3:
            raise ValueError("positions must have shape (ticks, 3)")

    @property
    def duration_ticks(self) -> int:
        return len(self.positions)

    def __len__(self) -> int:
        return len(self.positions)

    def sample(self, tick: int) -> TraceSample:
        rows = self.__dict__.get("_rows")
        if rows is None:
            rows = self.__dict__["_rows"] = [tuple(r) for r in self.positions.tolist()]
        return TraceSample(tick, rows[tick])

    @property
    def samples(self) -> list:
        return [self.sample(t) for t in range(len(self))]


def _soft_limit(x: np.ndarray, knee: float, headroom: float) -> np.ndarray:
    # identity below the knee, tanh roll-off above; C1 at the knee
    mag = np.abs(x)
    over = mag > knee
    out = x.copy()
    out[over] = np.sign(x[over]) * (knee + headroom * np.tanh((mag[over] - knee) / headroom))
    return out


def generate_trace(seed: int, duration_ticks: int, params: MotionParams = MotionParams(),
                   sampling_rate: int = 1000) -> SensorTrace:
    """Band-limited synthetic hand motion, one sum of sinusoids per axis."""
    if duration_ticks <= 0:
        raise ValueError("duration_ticks must be positive")
    rng = np.random.default_rng(seed)
    t = np.arange(duration_ticks) / sampling_rate
    positions = np.zeros((duration_ticks, 3))
    if params.components == 0:
        return SensorTrace(positions, source=f"synthetic({seed})")
    for axis in range(3):
        freqs = rng.uniform(params.f_min, params.f_max, params.components)
        phases = rng.uniform(0.0, 2 * np.pi, params.components)
        amps = rng.uniform(0.2, 1.0, params.components)
        x = (amps[:, None] * np.sin(2 * np.pi * freqs[:, None] * t + phases[:, None])).sum(axis=0)
        p99 = np.percentile(np.abs(x), 99)
        if p99 > 0:
            x *= params.p99_cm / p99
        positions[:, axis] = _soft_limit(x, params.limit_knee_cm, params.limit_headroom_cm)
    return SensorTrace(positions, source=f"synthetic({seed})")


def load_trace_csv(path) -> SensorTrace:
    """Read a ``tick,x,y,z`` trace. Ticks must run contiguously from 0."""
    path = Path(path)
    rows = []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise TraceFormatError(f"{path}: no samples")
        if [h.strip() for h in header] != ["tick", "x", "y", "z"]:
            raise TraceFormatError(f"{path}: line 1: expected header tick,x,y,z, got {','.join(header)}")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 4:
                raise TraceFormatError(f"{path}: line {lineno}: expected 4 fields, got {len(row)}")
            try:
                tick = int(row[0])
                xyz = tuple(float(v) for v in row[1:])
            except ValueError as exc:
                raise TraceFormatError(f"{path}: line {lineno}: non-numeric field ({exc})") from None
            expected = len(rows)
            if tick < expected:
                raise TraceFormatError(f"{path}: line {lineno}: duplicate tick {tick}")
            if tick > expected:
                raise TraceFormatError(f"{path}: line {lineno}: gap at tick {expected}")
            rows.append(xyz)
    if not rows:
        raise TraceFormatError(f"{path}: no samples")
    return SensorTrace(np.array(rows), source=f"file({path})")


def write_trace_csv(trace: SensorTrace, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["tick", "x", "y", "z"])
        for tick, (x, y, z) in enumerate(trace.positions.tolist()):
            w.writerow([tick, repr(x), repr(y), repr(z)])


@dataclass(frozen=True)
class TrafficConfig:
    per_sta_rate: int = 20_000_000
    sampling_rate: int = 1000

    def __post_init__(self) -> None:
        if self.per_sta_rate % (8 * self.sampling_rate):
            raise ValueError("per_sta_rate must be a whole number of bytes per sample")
        if MS * 1000 % self.sampling_rate:
            raise ValueError("sampling period must be a whole number of nanoseconds")

    @property
    def payload_bytes(self) -> int:
        return self.per_sta_rate // (8 * self.sampling_rate)

    @property
    def period(self) -> int:
        return MS * 1000 // self.sampling_rate


@dataclass
class Flow:
    """One direction of one operator/teleoperator pair."""

    name: str
    src: int
    dst: int
    trace: SensorTrace
    offset: int = 0  # ns phase of the first sample
    traffic: TrafficConfig = field(default_factory=TrafficConfig)

    def generation_time(self, tick: int) -> int:
        return self.offset + tick * self.traffic.period


def message_at_tick(flow: Flow, tick: int, now: Optional[int] = None) -> Mpdu:
    if not 0 <= tick < flow.trace.duration_ticks:
        raise IndexError(f"tick {tick} outside trace of {flow.trace.duration_ticks} ticks")
    generated_at = flow.offset + tick * flow.traffic.period
    return Mpdu(tick, flow.src, flow.dst, generated_at, generated_at if now is None else now,
                flow.traffic.payload_bytes, flow.trace.sample(tick), flow.name)
