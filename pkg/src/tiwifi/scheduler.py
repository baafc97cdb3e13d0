"""AP-side highest-first OFDMA scheduling for DL and SA-mode UL."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

from .phy import RuAllocation, TonePlan


@dataclass(frozen=True)
class SchedulerParams:
    small_group: int = 2
    large_group: int = 4
    # groups of ``large_group`` once this many STAs have data
    large_threshold: int = 4
    default_bsr: int = 1


@dataclass
class BufferStatusReport:
    sta: int
    reported_occupancy: int
    reported_at: int


@dataclass(frozen=True)
class ScheduleGroup:
    members: tuple
    ru: RuAllocation
    occupancy: tuple = ()

    @property
    def total_occupancy(self) -> int:
        return sum(self.occupancy)


@dataclass
class TxopPlan:
    dl_groups: list
    ul_groups: list
    snapshot_at: int

    @property
    def empty(self) -> bool:
        return not self.dl_groups and not self.ul_groups


def group_stas(occupancies: Mapping[int, int], tone_plan: TonePlan = TonePlan(),
               params: SchedulerParams = SchedulerParams()) -> list:
    """Sort STAs by queue occupancy and cut them into RU groups.

    Ties go to the lower device id. Groups are pairs while fewer than
    ``large_threshold`` STAs have data and quads otherwise; a trailing
    partial group keeps its natural size, so a lone STA gets the full band.
    """
    active = sorted(((sta, occ) for sta, occ in occupancies.items() if occ > 0),
                    key=lambda item: (-item[1], item[0]))
    if not active:
        return []
    size = params.small_group if len(active) < params.large_threshold else params.large_group
    groups = []
    for i in range(0, len(active), size):
        chunk = active[i:i + size]
        members = tuple(sta for sta, _ in chunk)
        groups.append(ScheduleGroup(members, RuAllocation.for_group(members, tone_plan),
                                    tuple(occ for _, occ in chunk)))
    return groups


class BsrTable:
    """Latest unsolicited buffer status report per STA, as seen by the AP."""

    def __init__(self, stas, default: int = 1):
        self.default = default
        self.reports: dict[int, BufferStatusReport] = {}
        self.stas = list(stas)

    def update_bsr(self, sta: int, occupancy: int, at: int) -> None:
        if occupancy < 0:
            raise ValueError("occupancy must be non-negative")
        self.reports[sta] = BufferStatusReport(sta, occupancy, at)

    def occupancy(self, sta: int) -> int:
        report = self.reports.get(sta)
        return self.default if report is None else report.reported_occupancy

    def snapshot(self) -> dict:
        return {sta: self.occupancy(sta) for sta in self.stas}

    def any_demand(self) -> bool:
        return any(self.occupancy(sta) > 0 for sta in self.stas)


def update_bsr(table: BsrTable, sta: int, occupancy: int, at: int) -> None:
    table.update_bsr(sta, occupancy, at)


def plan_txop(dl_occupancy: Mapping[int, int], ul_occupancy: Mapping[int, int], now: int,
              tone_plan: TonePlan = TonePlan(), params: SchedulerParams = SchedulerParams()) -> TxopPlan:
    return TxopPlan(group_stas(dl_occupancy, tone_plan, params),
                    group_stas(ul_occupancy, tone_plan, params), now)


@dataclass(frozen=True)
class Exchange:
    kind: str  # "dl" or "ul"
    group: ScheduleGroup
    start: int
    ppdu_start: int
    ppdu_end: int
    end: int  # end of the Block Ack


@dataclass
class ExchangeTimeline:
    """PPDU exchanges of one AP TXOP, in execution order."""

    start: int
    exchanges: list = field(default_factory=list)

    @property
    def end(self) -> int:
        return self.exchanges[-1].end if self.exchanges else self.start


def run_ap_txop(plan: TxopPlan, start: int, ppdu_duration, sifs: int, back: int,
                trigger: int) -> ExchangeTimeline:
    """Lay out the DL pass followed by one UL round.

    ``ppdu_duration(kind, group)`` returns the data PPDU length of a group.
    Each DL exchange is PPDU, SIFS, multi-STA Block Ack; each UL exchange is
    Trigger, SIFS, TB PPDU, SIFS, multi-STA Block Ack. Consecutive exchanges
    are SIFS-separated.
    """
    if plan.empty:
        raise ValueError("an empty plan is never executed")
    timeline = ExchangeTimeline(start)
    t = start
    for kind, groups in (("dl", plan.dl_groups), ("ul", plan.ul_groups)):
        for group in groups:
            if timeline.exchanges:
                t += sifs
            ppdu_start = t if kind == "dl" else t + trigger + sifs
            ppdu_end = ppdu_start + ppdu_duration(kind, group)
            end = ppdu_end + sifs + back
            timeline.exchanges.append(Exchange(kind, group, t, ppdu_start, ppdu_end, end))
            t = end
    return timeline
