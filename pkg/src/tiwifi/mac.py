"""AC_VO EDCA MAC: transmit queues, backoff, and the shared slot-synchronized medium."""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional

from .kernel import US, EventKind, RngStream, Simulator
from .phy import (DEFAULT_BUDGET, MCS9, MPDU_OVERHEAD_BYTES, AirtimeBudget, McsParams,
                  max_ampdu_mpdus)


class InvariantViolation(AssertionError):
    """A run broke one of the simulator's structural guarantees."""


class Discipline(str, enum.Enum):
    VANILLA = "vanilla"
    NOBUS = "nobus"


class Outcome(enum.IntEnum):
    RESIDUAL = 0
    DELIVERED = 1
    RETRY_DROP = 2
    PROACTIVE_DROP = 3


@dataclass(frozen=True)
class MacParams:
    slot: int = 9 * US
    aifs: int = 34 * US
    sifs: int = 16 * US
    cw_min: int = 3
    cw_max: int = 7
    retry_limit: int = 7


@dataclass(slots=True, eq=False)
class Mpdu:
    seq: int
    src: int
    dst: int
    generated_at: int
    enqueued_at: int
    payload_bytes: int
    sample: object = None
    flow: str = ""
    retry_count: int = 0
    first_attempt_at: Optional[int] = None

    @property
    def on_air_bytes(self) -> int:
        return self.payload_bytes + MPDU_OVERHEAD_BYTES


@dataclass
class Ampdu:
    dst: int
    mpdus: list

    def __len__(self) -> int:
        return len(self.mpdus)

    @property
    def on_air_bytes(self) -> int:
        return sum(m.payload_bytes for m in self.mpdus) + MPDU_OVERHEAD_BYTES * len(self.mpdus)


@dataclass(frozen=True)
class EnqueueReport:
    replaced: Optional[Mpdu] = None


_NOTHING_REPLACED = EnqueueReport()


class TxQueue:
    """Per-destination MAC transmit queue.

    ``vanilla`` keeps an unbounded FIFO per destination. ``nobus`` keeps at
    most one MPDU per destination: a newer MPDU evicts the resident one.
    MPDUs handed to the PHY are removed from the queue and returned through
    :meth:`restore` if the attempt fails.
    """

    def __init__(self, discipline: Discipline | str = Discipline.VANILLA):
        self.discipline = Discipline(discipline)
        self._nobus = self.discipline is Discipline.NOBUS
        self._q: dict[int, deque] = {}
        self._size = 0
        self.proactive_drop_count = 0

    def _check_depth(self, dst: int) -> None:
        if self.discipline is Discipline.NOBUS and len(self._q.get(dst, ())) > 1:
            raise InvariantViolation(f"nobus queue for {dst} holds {len(self._q[dst])} MPDUs")

    def enqueue(self, mpdu: Mpdu) -> EnqueueReport:
        q = self._q.get(mpdu.dst)
        if q is None:
            q = self._q[mpdu.dst] = deque()
        if self._nobus and q:
            replaced = q.popleft()
            self.proactive_drop_count += 1
            q.append(mpdu)
            return EnqueueReport(replaced)
        q.append(mpdu)
        self._size += 1
        if self._nobus:
            self._check_depth(mpdu.dst)
        return _NOTHING_REPLACED

    def occupancy(self, dst: Optional[int] = None) -> int:
        if dst is None:
            return self._size
        return len(self._q.get(dst, ()))

    def __len__(self) -> int:
        return self.occupancy()

    def destinations(self) -> list:
        """Destinations with queued MPDUs, ascending."""
        return sorted(d for d, q in self._q.items() if q)

    def peek(self, dst: int) -> list:
        return list(self._q.get(dst, ()))

    def peek_head(self, dst: int) -> Optional[Mpdu]:
        q = self._q.get(dst)
        return q[0] if q else None

    def take(self, dst: int, limit: int, enqueued_by: Optional[int] = None) -> list:
        """Remove up to ``limit`` head MPDUs for ``dst``.

        With ``enqueued_by`` set, only MPDUs enqueued at or before that time
        qualify (snapshot semantics). The nobus resident is always eligible.
        """
        q = self._q.get(dst)
        if not q:
            return []
        if self._nobus:
            self._size -= 1
            return [q.popleft()]
        out = []
        while q and len(out) < limit:
            if enqueued_by is not None and q[0].enqueued_at > enqueued_by:
                break
            out.append(q.popleft())
        self._size -= len(out)
        return out

    def restore(self, dst: int, mpdus: list) -> list:
        """Put failed MPDUs back at the head; returns MPDUs discarded as stale."""
        if not mpdus:
            return []
        q = self._q.get(dst)
        if q is None:
            q = self._q[dst] = deque()
        if self.discipline is Discipline.NOBUS:
            if q:
                # a newer sample arrived during the attempt
                self.proactive_drop_count += len(mpdus)
                return list(mpdus)
            q.append(mpdus[-1])
            self._size += 1
            stale = list(mpdus[:-1])
            self.proactive_drop_count += len(stale)
            self._check_depth(dst)
            return stale
        q.extendleft(reversed(mpdus))
        self._size += len(mpdus)
        return []

    def __iter__(self):
        for dst in sorted(self._q):
            yield from self._q[dst]


def enqueue(queue: TxQueue, mpdu: Mpdu) -> EnqueueReport:
    return queue.enqueue(mpdu)


def build_ampdu(queue: TxQueue, dst: int, tones: int, budget: AirtimeBudget = DEFAULT_BUDGET,
                mcs: McsParams = MCS9, enqueued_by: Optional[int] = None) -> Ampdu:
    """Pull the next A-MPDU for ``dst`` out of ``queue``.

    Vanilla takes every eligible MPDU in sequence order up to the PPDU cap;
    the remainder stays queued. Nobus takes the single resident MPDU.
    """
    head = queue.peek(dst)
    if not head:
        raise ValueError(f"no MPDU queued for {dst}")
    cap = max_ampdu_mpdus(head[0].on_air_bytes, tones, budget, mcs)
    if cap < 1:
        raise ValueError("a single MPDU does not fit in one PPDU")
    return Ampdu(dst, queue.take(dst, cap, enqueued_by))


@dataclass
class BackoffState:
    cw_min: int = 3
    cw_max: int = 7
    cw: int = 3
    counter: Optional[int] = None
    # time the device became ready inside the current idle period; None means
    # it was ready when the medium went idle
    ready_at: Optional[int] = None

    def reset(self) -> None:
        self.cw = self.cw_min

    def grow(self) -> None:
        self.cw = min(2 * (self.cw + 1) - 1, self.cw_max)


def draw_backoff(state: BackoffState, rng: RngStream) -> int:
    state.counter = rng.uniform_int(0, state.cw)
    return state.counter


@dataclass
class MediumState:
    busy_until: int = 0
    active_transmissions: set = field(default_factory=set)


class TxOutcome(str, enum.Enum):
    SUCCESS = "success"
    COLLISION = "collision"


def medium_arbitrate(starts: dict, sifs: int = 16 * US, back: int = 32 * US):
    """Resolve PPDUs that start on the same slot boundary.

    ``starts`` maps device id to PPDU duration. Returns the per-device outcome
    and how long the medium stays busy for this exchange.
    """
    if not starts:
        return {}, 0
    longest = max(starts.values())
    if len(starts) == 1:
        (dev,) = starts
        return {dev: TxOutcome.SUCCESS}, longest + sifs + back
    return {dev: TxOutcome.COLLISION for dev in starts}, longest


class Device:
    """MAC state of one EDCA contender (the AP or a STA)."""

    is_ap = False

    def __init__(self, dev_id: int, discipline: Discipline, rng: RngStream,
                 params: MacParams = MacParams()):
        self.id = dev_id
        self.queue = TxQueue(discipline)
        self.rng = rng
        self.params = params
        self.backoff = BackoffState(params.cw_min, params.cw_max, params.cw_min)
        self.in_flight: dict[int, list] = {}

    def has_demand(self) -> bool:
        return self.queue._size > 0

    def in_flight_mpdus(self) -> Iterable[Mpdu]:
        for mpdus in self.in_flight.values():
            yield from mpdus

    def settle_collision(self) -> tuple[list, list]:
        """Apply a failed attempt to every in-flight MPDU.

        Returns ``(retry_dropped, proactively_dropped)``.
        """
        limit = self.params.retry_limit
        retry_dropped, stale, survived = [], [], 0
        for dst, mpdus in self.in_flight.items():
            survivors = []
            for m in mpdus:
                m.retry_count += 1
                if m.retry_count > limit:
                    retry_dropped.append(m)
                else:
                    survivors.append(m)
            survived += len(survivors)
            stale.extend(self.queue.restore(dst, survivors))
        self.in_flight = {}
        if retry_dropped and not survived:
            # the whole attempt was abandoned at the retry limit
            self.backoff.reset()
        else:
            self.backoff.grow()
        return retry_dropped, stale

    def settle_success(self) -> list:
        delivered = [m for m in self.in_flight_mpdus()]
        self.in_flight = {}
        self.backoff.reset()
        return delivered


class Channel:
    """Shared ideal medium with slot-synchronized EDCA contention.

    After the medium goes idle at ``s``, slot boundaries sit at
    ``s + AIFS + k * slot``. A contender that became ready at ``a`` inside the
    idle period starts counting at the first boundary not earlier than
    ``a + AIFS``. Contenders whose countdown ends on the same boundary
    collide. A slot is consumed only once it has elapsed idle, so a
    contender still counting when another transmits at boundary ``g`` froze
    after ``g - start`` decrements.
    """

    def __init__(self, sim: Simulator, params: MacParams, on_access: Callable[[list], None]):
        self.sim = sim
        self.params = params
        self.on_access = on_access
        self.medium = MediumState()
        self.busy = False
        self.idle_since = 0
        self.contenders: dict[int, Device] = {}
        # boundary index at which each contender's countdown ends
        self._due: dict[int, int] = {}
        self._event = None

    def _start_slot(self, dev: Device) -> int:
        ready = dev.backoff.ready_at
        if ready is None or ready <= self.idle_since:
            return 0
        return -(-(ready - self.idle_since) // self.params.slot)

    def join(self, dev: Device) -> None:
        """Add a device that has just drawn a backoff counter."""
        if dev.backoff.counter is None:
            raise ValueError("device joined contention without a backoff counter")
        dev.backoff.ready_at = None if self.busy else self.sim.now
        self.contenders[dev.id] = dev
        self._due[dev.id] = self._start_slot(dev) + dev.backoff.counter
        self._reschedule()

    def leave(self, dev: Device) -> None:
        if self.contenders.pop(dev.id, None) is not None:
            del self._due[dev.id]
            dev.backoff.counter = None
            dev.backoff.ready_at = None
            self._reschedule()

    def _reschedule(self) -> None:
        if self.busy or not self._due:
            if self._event is not None:
                self._event.cancelled = True
                self._event = None
            return
        fire_at = self.idle_since + self.params.aifs + min(self._due.values()) * self.params.slot
        if self._event is not None:
            if self._event.fire_at == fire_at and not self._event.cancelled:
                return
            self._event.cancelled = True
        self._event = self.sim.at(fire_at, EventKind.BACKOFF, self._fire)

    def _fire(self) -> None:
        self._event = None
        g = (self.sim.now - self.idle_since - self.params.aifs) // self.params.slot
        winners = []
        for dev_id, due in self._due.items():
            dev = self.contenders[dev_id]
            if due == g:
                winners.append(dev)
            else:
                start = due - dev.backoff.counter
                if g > start:
                    dev.backoff.counter -= g - start
        for dev in winners:
            del self.contenders[dev.id]
            del self._due[dev.id]
            dev.backoff.counter = None
        winners.sort(key=lambda d: d.id)
        self.busy = True
        self.medium.active_transmissions = {d.id for d in winners}
        self.on_access(winners)

    def occupy_until(self, t: int) -> None:
        self.medium.busy_until = max(self.medium.busy_until, t)

    def release(self) -> None:
        """Medium goes idle now; frozen contenders resume after AIFS."""
        self.busy = False
        self.idle_since = self.sim.now
        self.medium.active_transmissions = set()
        for dev_id, dev in self.contenders.items():
            dev.backoff.ready_at = None
            self._due[dev_id] = dev.backoff.counter
        self._reschedule()
