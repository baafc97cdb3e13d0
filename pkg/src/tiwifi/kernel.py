"""Discrete-event engine: integer-nanosecond clock, ordered event queue, seeded streams."""

from __future__ import annotations

import enum
import heapq
import random
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

# Time constants, all in integer nanoseconds.
NS = 1
US = 1_000
MS = 1_000_000
SECOND = 1_000_000_000


class SchedulingError(RuntimeError):
    """Raised when an event is scheduled before the current clock."""


class EventKind(enum.Enum):
    SAMPLE = "sample-generation"
    BACKOFF = "backoff-slot"
    TX_END = "tx-end"
    SIFS = "sifs-expiry"
    DISPLAY = "display-tick"
    RUN_END = "run-end"


@dataclass(eq=False, slots=True)
class Event:
    fire_at: int
    kind: EventKind
    subject: Any = None
    action: Optional[Callable[..., Any]] = None
    args: tuple = ()
    sequence: int = -1
    cancelled: bool = False


@dataclass(frozen=True)
class RunSummary:
    events_fired: int
    final_clock: int


class Simulator:
    """Single-threaded event loop.

    Events with equal ``fire_at`` are dispatched in the order they were
    scheduled, so a run is fully determined by its configuration and seed.
    """

    def __init__(self) -> None:
        self.now = 0
        self._heap: list[tuple[int, int, Event]] = []
        self._sequence = 0
        self.events_fired = 0

    def schedule(self, event: Event) -> Event:
        if event.fire_at < self.now:
            raise SchedulingError(
                f"event {event.kind.value} at {event.fire_at} ns scheduled from {self.now} ns"
            )
        event.sequence = self._sequence
        self._sequence += 1
        heapq.heappush(self._heap, (event.fire_at, event.sequence, event))
        return event

    def at(self, fire_at: int, kind: EventKind, action: Callable[..., Any], *args, subject=None) -> Event:
        return self.schedule(Event(fire_at, kind, subject, action, args))

    def after(self, delay: int, kind: EventKind, action: Callable[..., Any], *args, subject=None) -> Event:
        return self.schedule(Event(self.now + delay, kind, subject, action, args))

    @staticmethod
    def cancel(handle: Event) -> None:
        handle.cancelled = True

    def pending(self) -> int:
        return sum(1 for _, _, e in self._heap if not e.cancelled)

    def run_until(self, end: int) -> RunSummary:
        if end <= 0:
            raise ValueError("run end must be positive")
        heap = self._heap
        fired = 0
        pop = heapq.heappop
        while heap and heap[0][0] <= end:
            event = pop(heap)[2]
            if event.cancelled:
                continue
            self.now = event.fire_at
            fired += 1
            if event.action is not None:
                event.action(*event.args)
        if any(not e.cancelled for _, _, e in heap):
            self.now = end
        self.events_fired += fired
        return RunSummary(events_fired=fired, final_clock=self.now)


@dataclass
class RngStream:
    """Independent pseudo-random stream for one device.

    String seeding hashes ``"seed/stream_id"`` with SHA-512 inside
    :class:`random.Random`, which is stable across platforms and versions.
    """

    seed: int
    stream_id: int
    _rng: random.Random = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self._rng = random.Random(f"{self.seed}/{self.stream_id}")

    def uniform_int(self, lo: int, hi: int) -> int:
        if lo > hi:
            raise ValueError(f"empty range [{lo}, {hi}]")
        if lo == hi:
            return lo
        return lo + self._rng.randrange(hi - lo + 1)

    def random(self) -> float:
        return self._rng.random()


def uniform_int(stream: RngStream, lo: int, hi: int) -> int:
    return stream.uniform_int(lo, hi)
