"""One WiFi-7 BSS: an AP plus N teleoperator STAs exchanging 1 kHz TI flows."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .config import SimParams
from .kernel import EventKind, RngStream, Simulator
from .mac import (MPDU_OVERHEAD_BYTES, Channel, Device, Discipline, InvariantViolation, MacParams, Mpdu,
                  Outcome, draw_backoff, medium_arbitrate)
from .phy import max_ampdu_mpdus, ppdu_airtime
from .playback import FlowRecord, RawRun, RunMetrics, display_flow, summarize
from .scheduler import BsrTable, plan_txop, run_ap_txop
from .traffic import Flow, SensorTrace, generate_trace, load_trace_csv

AP_ID = 0


class Station(Device):
    pass


class AccessPoint(Device):
    is_ap = True

    def __init__(self, dev_id, discipline, rng, params: MacParams, bsr: BsrTable):
        super().__init__(dev_id, discipline, rng, params)
        self.bsr = bsr

    def has_demand(self) -> bool:
        return self.queue.occupancy() > 0 or self.bsr.any_demand()


@dataclass
class _Txop:
    plan: object
    start: int
    steps: list
    index: int = 0
    durations: dict = field(default_factory=dict)
    members: list = field(default_factory=list)


def flow_trace_seed(seed: int, direction: str, sta: int) -> list:
    return [seed, 0 if direction == "dl" else 1, sta]


class Bss:
    """Event-driven simulation of one BSS for one (discipline, STA count, seed)."""

    def __init__(self, params: SimParams, n_stas: int, discipline, seed: int,
                 traces: Optional[dict] = None):
        if n_stas < 1:
            raise ValueError("need at least one STA")
        self.params = params
        self.n_stas = n_stas
        self.discipline = Discipline(discipline)
        self.seed = seed
        self.check = params.check_invariants
        self.sim = Simulator()
        self.mac = params.mac_params
        self.budget = params.budget
        self.mcs = params.mcs
        self.tones = params.tone_plan
        self.sched = params.scheduler_params
        self.traffic = params.traffic_config
        self.period = self.traffic.period
        self.ticks = params.run_duration_ns // self.period

        bsr = BsrTable(range(1, n_stas + 1), self.sched.default_bsr)
        self.ap = AccessPoint(AP_ID, self.discipline, RngStream(seed, AP_ID), self.mac, bsr)
        self.stas = [Station(i, self.discipline, RngStream(seed, i), self.mac)
                     for i in range(1, n_stas + 1)]
        self.devices = {AP_ID: self.ap, **{s.id: s for s in self.stas}}
        for dev in self.devices.values():
            dev.active = False
            dev.pending_bsr = 0
        self.channel = Channel(self.sim, self.mac, self._on_access)

        self.traces = traces if traces is not None else self._make_traces()
        self.flows: dict = {}
        self.records: dict = {}
        stagger = params.traffic.stagger_ns
        for i in range(1, n_stas + 1):
            for direction, src, dst in (("dl", AP_ID, i), ("ul", i, AP_ID)):
                name = f"{direction}{i}"
                trace = self.traces[name]
                if trace.duration_ticks < self.ticks:
                    raise ValueError(f"trace for {name} has {trace.duration_ticks} ticks, run needs {self.ticks}")
                flow = Flow(name, src, dst, trace, offset=i * stagger, traffic=self.traffic)
                self.flows[name] = flow
                self.records[name] = FlowRecord.allocate(name, direction, src, dst, flow.offset,
                                                         self.period, self.ticks)
        self.latest_seq = {name: -1 for name in self.flows}
        self._payload = self.traffic.payload_bytes
        self._sources = {i: [(name, self.devices[self.flows[name].src], self.flows[name], self.records[name])
                             for name in (f"dl{i}", f"ul{i}")] for i in range(1, n_stas + 1)}
        self._flow_names = {(f.src, f.dst): name for name, f in self.flows.items()}
        self._strict_nobus = self.check and self.discipline is Discipline.NOBUS
        self.ampdu_sizes = {"dl": [], "ul": []}
        self.collisions = 0
        self.attempts = 0
        self.max_queueing = 0
        self.max_airtime = 0
        self.cw_seen = set()
        self._airtimes: dict = {}
        self._caps: dict = {}
        self.txop: Optional[_Txop] = None
        self.finished = False

    # ------------------------------------------------------------------ setup

    def _make_traces(self) -> dict:
        tf = self.params.traffic.trace_file
        shared = load_trace_csv(tf) if tf else None
        traces = {}
        for i in range(1, self.n_stas + 1):
            for direction in ("dl", "ul"):
                name = f"{direction}{i}"
                if shared is not None:
                    traces[name] = shared
                else:
                    traces[name] = generate_trace(flow_trace_seed(self.seed, direction, i), self.ticks,
                                                  self.params.motion, self.traffic.sampling_rate)
        return traces

    def flow_for(self, src: int, dst: int) -> str:
        return f"dl{dst}" if src == AP_ID else f"ul{src}"

    # ---------------------------------------------------------------- traffic

    def _tick(self, sta: int, tick: int) -> None:
        now = self.sim.now
        for name, dev, flow, rec in self._sources[sta]:
            # same MPDU as message_at_tick(flow, tick, now), built inline on the hot path
            mpdu = Mpdu(tick, flow.src, flow.dst, flow.offset + tick * self.period, now,
                        self._payload, flow.trace.sample(tick), name)
            rec.generated = tick + 1
            rec.enqueued_at[tick] = now
            self.latest_seq[name] = tick
            replaced = dev.queue.enqueue(mpdu).replaced
            if replaced is not None:
                rec.outcome[replaced.seq] = Outcome.PROACTIVE_DROP
            if not (dev.active or dev.backoff.counter is not None):
                self._contend(dev)
        if tick + 1 < self.ticks:
            self.sim.after(self.period, EventKind.SAMPLE, self._tick, sta, tick + 1, subject=sta)

    # ------------------------------------------------------------- contention

    def _contend(self, dev: Device) -> None:
        if dev.active or dev.backoff.counter is not None or not dev.has_demand():
            return
        draw_backoff(dev.backoff, dev.rng)
        self.channel.join(dev)

    def _note_cw(self, dev: Device) -> None:
        if self.check and dev.backoff.cw not in (self.mac.cw_min, self.mac.cw_max):
            raise InvariantViolation(f"device {dev.id} has cw={dev.backoff.cw}")
        self.cw_seen.add(dev.backoff.cw)

    def _airtime(self, payload_bytes: int, tones: int) -> int:
        key = (payload_bytes, tones)
        d = self._airtimes.get(key, -1)
        if d == -1:
            d = self._airtimes[key] = ppdu_airtime(payload_bytes, tones, self.budget, self.mcs)
        if d is None:
            raise InvariantViolation(f"PPDU of {payload_bytes} B on {tones} tones exceeds the cap")
        if d > self.max_airtime:
            self.max_airtime = d
        return d

    def _launch(self, dev: Device, dst: int, tones: int, enqueued_by: Optional[int]) -> tuple:
        """Move the next A-MPDU for ``dst`` in flight; returns ``(mpdus, airtime)``."""
        now = self.sim.now
        occupancy = dev.queue.occupancy(dst)
        mpdus = []
        payload = 0
        if occupancy:
            key = (dev.queue.peek_head(dst).on_air_bytes, tones)
            cap = self._caps.get(key)
            if cap is None:
                cap = self._caps[key] = max_ampdu_mpdus(key[0], tones, self.budget, self.mcs)
                if cap < 1:
                    raise InvariantViolation("a single MPDU does not fit in one PPDU")
            mpdus = dev.queue.take(dst, cap, enqueued_by)
        if mpdus:
            dev.in_flight[dst] = mpdus
            name = self._flow_names[dev.id, dst]
            latest = self.latest_seq[name]
            strict = self._strict_nobus
            for m in mpdus:
                payload += m.payload_bytes + MPDU_OVERHEAD_BYTES
                if m.first_attempt_at is None:
                    m.first_attempt_at = now
                    q = now - m.enqueued_at
                    if q > self.max_queueing:
                        self.max_queueing = q
                    if strict and q > self.period:
                        raise InvariantViolation(f"{name} seq {m.seq} queued {q} ns before first attempt")
            if strict and mpdus[-1].seq != latest:
                raise InvariantViolation(f"{name} sent seq {mpdus[-1].seq} while {latest} exists")
        if not dev.is_ap:
            dev.pending_bsr = occupancy
        return mpdus, self._airtime(payload, tones)

    def _on_access(self, winners: list) -> None:
        now = self.sim.now
        self.attempts += len(winners)
        starts = {}
        for dev in winners:
            dev.active = True
            self._note_cw(dev)
            if dev.is_ap:
                starts[dev.id] = self._begin_txop()
            else:
                _, starts[dev.id] = self._launch(dev, AP_ID, self.tones.data_tones_full, None)
        outcomes, _busy = medium_arbitrate(starts, self.mac.sifs, self.budget.back_duration)
        longest = max(starts.values())
        self.channel.occupy_until(now + longest)
        if len(winners) > 1:
            self.collisions += len(winners)
            self.sim.at(now + longest, EventKind.TX_END, self._collided, winners)
            return
        dev = winners[0]
        if dev.is_ap:
            self._txop_first_ok()
        else:
            self.sim.at(now + longest, EventKind.TX_END, self._sta_done, dev)

    def _collided(self, winners: list) -> None:
        for dev in winners:
            retry_dropped, stale = dev.settle_collision()
            for m in retry_dropped:
                self.records[m.flow].outcome[m.seq] = Outcome.RETRY_DROP
            for m in stale:
                self.records[m.flow].outcome[m.seq] = Outcome.PROACTIVE_DROP
            if dev.is_ap:
                self.txop = None
            dev.active = False
            self._note_cw(dev)
        self.channel.release()
        for dev in winners:
            self._contend(dev)

    def _deliver(self, dev: Device, direction: str) -> int:
        now = self.sim.now
        mpdus = dev.in_flight
        count = 0
        for dst, batch in mpdus.items():
            if not batch:
                continue
            self.ampdu_sizes[direction].append(len(batch))
            count += len(batch)
            for m in batch:
                rec = self.records[m.flow]
                if self.check and self.discipline is Discipline.VANILLA and m.seq <= rec.delivered_seq_max:
                    raise InvariantViolation(f"{m.flow} delivered seq {m.seq} after {rec.delivered_seq_max}")
                rec.delivered_seq_max = max(rec.delivered_seq_max, m.seq)
                rec.received_at[m.seq] = now
                rec.outcome[m.seq] = Outcome.DELIVERED
        dev.in_flight = {}
        return count

    def _sta_done(self, sta: Station) -> None:
        now = self.sim.now
        self._deliver(sta, "ul")
        sta.backoff.reset()
        self.ap.bsr.update_bsr(sta.id, sta.pending_bsr, now)
        end = now + self.mac.sifs + self.budget.back_duration
        self.channel.occupy_until(end)
        self.sim.at(end, EventKind.SIFS, self._sta_release, sta)

    def _sta_release(self, sta: Station) -> None:
        sta.active = False
        self.channel.release()
        self._contend(sta)
        self._contend(self.ap)

    # ------------------------------------------------------------------- TXOP

    def _begin_txop(self) -> int:
        ap = self.ap
        now = self.sim.now
        dl = {dst: ap.queue.occupancy(dst) for dst in ap.queue.destinations()}
        ul = ap.bsr.snapshot()
        plan = plan_txop(dl, ul, now, self.tones, self.sched)
        if plan.empty:
            raise InvariantViolation("AP won contention with nothing to send")
        steps = [("dl", g) for g in plan.dl_groups] + [("ul", g) for g in plan.ul_groups]
        self.txop = _Txop(plan, now, steps)
        kind, group = steps[0]
        if kind == "dl":
            return self._dl_ppdu(group)
        return self.budget.trigger_duration

    def _snapshot_cut(self) -> Optional[int]:
        return self.txop.plan.snapshot_at if self.discipline is Discipline.VANILLA else None

    def _dl_ppdu(self, group) -> int:
        cut = self._snapshot_cut()
        longest = 0
        for dst in group.members:
            _, d = self._launch(self.ap, dst, group.ru.tones_per_ru, cut)
            longest = max(longest, d)
        self.txop.durations[self.txop.index] = longest
        return longest

    def _txop_first_ok(self) -> None:
        self.ap.backoff.reset()
        self._run_step(first=True)

    def _run_step(self, first: bool = False) -> None:
        tx = self.txop
        kind, group = tx.steps[tx.index]
        now = self.sim.now
        if kind == "dl":
            duration = tx.durations[tx.index] if first else self._dl_ppdu(group)
            self.channel.occupy_until(now + duration)
            self.sim.at(now + duration, EventKind.TX_END, self._dl_end)
        else:
            ppdu_start = now + self.budget.trigger_duration + self.mac.sifs
            self.sim.at(ppdu_start, EventKind.SIFS, self._ul_ppdu, group)

    def _dl_end(self) -> None:
        self._deliver(self.ap, "dl")
        self._step_done()

    def _ul_ppdu(self, group) -> None:
        cut = self._snapshot_cut()
        tx = self.txop
        longest = 0
        members = []
        for sta_id in group.members:
            sta = self.devices[sta_id]
            _, d = self._launch(sta, AP_ID, group.ru.tones_per_ru, cut)
            longest = max(longest, d)
            members.append(sta)
        tx.durations[tx.index] = longest
        tx.members = members
        now = self.sim.now
        self.channel.occupy_until(now + longest)
        self.sim.at(now + longest, EventKind.TX_END, self._ul_end)

    def _ul_end(self) -> None:
        now = self.sim.now
        for sta in self.txop.members:
            if self._deliver(sta, "ul"):
                sta.backoff.reset()
            self.ap.bsr.update_bsr(sta.id, sta.pending_bsr, now)
            if not sta.has_demand() and sta.backoff.counter is not None:
                self.channel.leave(sta)
        self.txop.members = []
        self._step_done()

    def _step_done(self) -> None:
        tx = self.txop
        end = self.sim.now + self.mac.sifs + self.budget.back_duration
        tx.index += 1
        if tx.index < len(tx.steps):
            self.sim.at(end + self.mac.sifs, EventKind.SIFS, self._run_step)
        else:
            self.channel.occupy_until(end)
            self.sim.at(end, EventKind.SIFS, self._txop_release)

    def _txop_release(self) -> None:
        tx = self.txop
        if self.check:
            timeline = run_ap_txop(tx.plan, tx.start,
                                   _DurationLookup(tx), self.mac.sifs,
                                   self.budget.back_duration, self.budget.trigger_duration)
            if timeline.end != self.sim.now:
                raise InvariantViolation(f"TXOP accounting: layout ends {timeline.end}, medium freed {self.sim.now}")
        self.txop = None
        self.ap.active = False
        self.channel.release()
        self._contend(self.ap)

    # -------------------------------------------------------------------- run

    def run(self) -> "RunResult":
        if self.finished:
            raise RuntimeError("a Bss instance runs once")
        for i in range(1, self.n_stas + 1):
            self.sim.at(self.flows[f"dl{i}"].offset, EventKind.SAMPLE, self._tick, i, 0, subject=i)
        self.sim.run_until(self.params.run_duration_ns)
        self.finished = True
        if self.check:
            self._check_conservation()
        raw = RawRun(self.discipline.value, self.n_stas, self.seed, list(self.records.values()),
                     {name: f.trace for name, f in self.flows.items()}, self.ampdu_sizes,
                     self.params.metrics.warmup_ns, self.params.metrics.rmse_axis,
                     self.max_queueing, self.collisions, self.attempts)
        return RunResult(raw, summarize(raw), self.max_airtime, set(self.cw_seen))

    def _check_conservation(self) -> None:
        residual = {name: 0 for name in self.records}
        for dev in self.devices.values():
            for m in dev.queue:
                residual[m.flow] += 1
            for m in dev.in_flight_mpdus():
                residual[m.flow] += 1
        for name, rec in self.records.items():
            counts = np.bincount(rec.outcome[:rec.generated], minlength=4)
            if counts.sum() != rec.generated or counts[Outcome.RESIDUAL] != residual[name]:
                raise InvariantViolation(
                    f"{name}: generated {rec.generated}, outcomes {counts.tolist()}, resident {residual[name]}")


class _DurationLookup:
    def __init__(self, tx: _Txop):
        self._order = {id(group): i for i, (_, group) in enumerate(tx.steps)}
        self._durations = tx.durations

    def __call__(self, kind, group):
        return self._durations[self._order[id(group)]]


EVENT_LOG_COLUMNS = ["flow", "seq", "generated_at", "enqueued_at", "received_at", "displayed_at", "outcome"]


@dataclass
class RunResult:
    raw: RawRun
    metrics: RunMetrics
    max_airtime: int
    cw_seen: set

    def write_event_log(self, path) -> None:
        names = {int(o): o.name.lower().replace("_", "-") for o in Outcome}
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(EVENT_LOG_COLUMNS)
            for rec in self.raw.flows:
                _, displayed_at = display_flow(self.raw, rec)
                gen = rec.generated_at()
                for seq in range(rec.generated):
                    recv = int(rec.received_at[seq])
                    shown = int(displayed_at[seq])
                    w.writerow([rec.name, seq, int(gen[seq]), int(rec.enqueued_at[seq]),
                                recv if recv >= 0 else "", shown if shown >= 0 else "",
                                names[int(rec.outcome[seq])]])


def simulate(params: SimParams, n_stas: int, discipline, seed: int,
             traces: Optional[dict] = None) -> RunResult:
    return Bss(params, n_stas, discipline, seed, traces).run()
