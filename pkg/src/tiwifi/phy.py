"""Idealized 802.11be PHY: per-RU rates, PPDU airtime and the aggregation cap.

There is no channel model. A PPDU is lost only when it overlaps another
transmission, which the MAC decides.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Optional

from .kernel import SECOND, US

SERVICE_BITS = 16
TAIL_BITS = 6
# MAC header (40 B) plus the A-MPDU subframe delimiter (4 B).
MPDU_OVERHEAD_BYTES = 44


@dataclass(frozen=True)
class McsParams:
    bits_per_subcarrier: int = 8
    coding_rate: Fraction = Fraction(5, 6)
    symbol_duration: int = 12_800  # ns, 1 / 78.125 kHz
    guard_interval: int = 800  # ns

    @property
    def bits_per_tone(self) -> Fraction:
        return self.bits_per_subcarrier * Fraction(self.coding_rate)

    @property
    def symbol_time(self) -> int:
        return self.symbol_duration + self.guard_interval


MCS9 = McsParams()


@dataclass(frozen=True)
class TonePlan:
    channel_width_mhz: int = 320
    data_tones_full: int = 3920
    data_tones_half: int = 1960
    data_tones_quarter: int = 980

    def __post_init__(self) -> None:
        if not 0 < self.data_tones_quarter <= self.data_tones_half <= self.data_tones_full:
            raise ValueError("tone plan must satisfy 0 < quarter <= half <= full")

    def tones_for(self, ru_count: int) -> int:
        """Data tones of each RU when the band is split into ``ru_count`` RUs."""
        if ru_count == 1:
            return self.data_tones_full
        if ru_count == 2:
            return self.data_tones_half
        if 3 <= ru_count <= 4:
            return self.data_tones_quarter
        raise ValueError(f"unsupported RU count {ru_count}")


@dataclass(frozen=True)
class RuAllocation:
    stations: tuple
    tones_per_ru: int

    @property
    def ru_count(self) -> int:
        return len(self.stations)

    @classmethod
    def for_group(cls, stations, plan: TonePlan) -> "RuAllocation":
        stations = tuple(stations)
        return cls(stations, plan.tones_for(len(stations)))


@dataclass(frozen=True)
class AirtimeBudget:
    max_ppdu_duration: int = 5_400 * US
    preamble: int = 48 * US
    sifs: int = 16 * US
    back_duration: int = 32 * US
    trigger_duration: int = 48 * US

    def __post_init__(self) -> None:
        if min(self.max_ppdu_duration, self.preamble, self.sifs,
               self.back_duration, self.trigger_duration) <= 0:
            raise ValueError("airtime budget entries must be positive")
        if self.preamble >= self.max_ppdu_duration:
            raise ValueError("preamble must be shorter than the PPDU cap")


DEFAULT_BUDGET = AirtimeBudget()


def data_rate(tones: int, mcs: McsParams = MCS9) -> int:
    """PHY rate in bit/s of an RU with ``tones`` data tones, truncated to an integer."""
    if tones <= 0:
        raise ValueError("tones must be positive")
    rate = tones * mcs.bits_per_tone * SECOND / mcs.symbol_time
    return math.floor(rate)


def n_symbols(payload_bytes: int, tones: int, mcs: McsParams = MCS9) -> int:
    bits = SERVICE_BITS + 8 * payload_bytes + TAIL_BITS
    return math.ceil(bits / (tones * mcs.bits_per_tone))


@lru_cache(maxsize=65536)
def _airtime(payload_bytes: int, tones: int, budget: AirtimeBudget, mcs: McsParams) -> Optional[int]:
    duration = budget.preamble + n_symbols(payload_bytes, tones, mcs) * mcs.symbol_time
    if duration > budget.max_ppdu_duration:
        return None
    return duration


def ppdu_airtime(payload_bytes: int, tones: int, budget: AirtimeBudget = DEFAULT_BUDGET,
                 mcs: McsParams = MCS9) -> Optional[int]:
    """Duration in ns of a PPDU carrying ``payload_bytes``, or ``None`` if it exceeds the cap."""
    if payload_bytes < 0:
        raise ValueError("payload_bytes must be non-negative")
    if tones <= 0:
        raise ValueError("tones must be positive")
    return _airtime(payload_bytes, tones, budget, mcs)


@lru_cache(maxsize=4096)
def max_ampdu_mpdus(mpdu_on_air_bytes: int, tones: int, budget: AirtimeBudget = DEFAULT_BUDGET,
                    mcs: McsParams = MCS9) -> int:
    """Largest number of equal-size MPDUs that fit one PPDU under the duration cap.

    ceil(x) <= n holds exactly when x <= n for integer n, so the symbol
    budget converts directly into a bit budget.
    """
    if mpdu_on_air_bytes <= 0:
        raise ValueError("mpdu_on_air_bytes must be positive")
    max_symbols = (budget.max_ppdu_duration - budget.preamble) // mcs.symbol_time
    bit_budget = max_symbols * tones * mcs.bits_per_tone - SERVICE_BITS - TAIL_BITS
    if bit_budget < 0:
        return 0
    return max(0, math.floor(bit_budget / (8 * mpdu_on_air_bytes)))
