"""Experiment configuration: INI file with one section per subsystem.

All durations are integer nanoseconds except ``run_duration`` (decimal
seconds). Unknown sections or keys are rejected.
"""

from __future__ import annotations

import configparser
import dataclasses
import io
from dataclasses import dataclass, field, fields, replace
from decimal import Decimal, InvalidOperation
from fractions import Fraction
from pathlib import Path
from typing import Optional

from .kernel import MS, SECOND
from .mac import Discipline, MacParams
from .phy import AirtimeBudget, McsParams, TonePlan
from .scheduler import SchedulerParams
from .traffic import MotionParams, TrafficConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class PhySection:
    channel_width_mhz: int = 320
    data_tones_full: int = 3920
    data_tones_half: int = 1960
    data_tones_quarter: int = 980
    bits_per_subcarrier: int = 8
    coding_rate: Fraction = Fraction(5, 6)
    symbol_duration_ns: int = 12_800
    guard_interval_ns: int = 800
    max_ppdu_duration_ns: int = 5_400_000
    preamble_ns: int = 48_000
    back_duration_ns: int = 32_000
    trigger_duration_ns: int = 48_000


@dataclass(frozen=True)
class MacSection:
    slot_ns: int = 9_000
    aifs_ns: int = 34_000
    sifs_ns: int = 16_000
    cw_min: int = 3
    cw_max: int = 7
    retry_limit: int = 7


@dataclass(frozen=True)
class TrafficSection:
    per_sta_rate: int = 20_000_000
    sampling_rate: int = 1000
    stagger_ns: int = 1_000
    trace_file: str = ""
    motion_components: int = 5
    motion_f_min: float = 0.1
    motion_f_max: float = 4.0
    motion_p99_cm: float = 10.0


@dataclass(frozen=True)
class SchedulerSection:
    small_group: int = 2
    large_group: int = 4
    large_threshold: int = 4
    default_bsr: int = 1


@dataclass(frozen=True)
class MetricsSection:
    warmup_ns: int = 100 * MS
    rmse_axis: int = 0


@dataclass(frozen=True)
class ExperimentSection:
    sta_counts: tuple = tuple(range(1, 13))
    disciplines: tuple = ("vanilla", "nobus")
    seeds: tuple = tuple(range(1, 11))
    run_duration: Decimal = Decimal("10")
    workers: int = 1
    check_invariants: bool = True


@dataclass(frozen=True)
class SimParams:
    """Everything one simulation run needs besides topology size, discipline and seed."""

    phy: PhySection = PhySection()
    mac: MacSection = MacSection()
    traffic: TrafficSection = TrafficSection()
    scheduler: SchedulerSection = SchedulerSection()
    metrics: MetricsSection = MetricsSection()
    run_duration_ns: int = 10 * SECOND
    check_invariants: bool = True

    @property
    def mcs(self) -> McsParams:
        p = self.phy
        return McsParams(p.bits_per_subcarrier, p.coding_rate, p.symbol_duration_ns, p.guard_interval_ns)

    @property
    def tone_plan(self) -> TonePlan:
        p = self.phy
        return TonePlan(p.channel_width_mhz, p.data_tones_full, p.data_tones_half, p.data_tones_quarter)

    @property
    def budget(self) -> AirtimeBudget:
        p = self.phy
        return AirtimeBudget(p.max_ppdu_duration_ns, p.preamble_ns, self.mac.sifs_ns,
                             p.back_duration_ns, p.trigger_duration_ns)

    @property
    def mac_params(self) -> MacParams:
        m = self.mac
        return MacParams(m.slot_ns, m.aifs_ns, m.sifs_ns, m.cw_min, m.cw_max, m.retry_limit)

    @property
    def traffic_config(self) -> TrafficConfig:
        return TrafficConfig(self.traffic.per_sta_rate, self.traffic.sampling_rate)

    @property
    def motion(self) -> MotionParams:
        t = self.traffic
        return MotionParams(t.motion_components, t.motion_f_min, t.motion_f_max, t.motion_p99_cm)

    @property
    def scheduler_params(self) -> SchedulerParams:
        s = self.scheduler
        return SchedulerParams(s.small_group, s.large_group, s.large_threshold, s.default_bsr)

    def with_duration(self, seconds) -> "SimParams":
        return replace(self, run_duration_ns=seconds_to_ns(seconds))


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: ExperimentSection = ExperimentSection()
    phy: PhySection = PhySection()
    mac: MacSection = MacSection()
    traffic: TrafficSection = TrafficSection()
    scheduler: SchedulerSection = SchedulerSection()
    metrics: MetricsSection = MetricsSection()

    def sim_params(self) -> SimParams:
        return SimParams(self.phy, self.mac, self.traffic, self.scheduler, self.metrics,
                         seconds_to_ns(self.experiment.run_duration), self.experiment.check_invariants)

    def override(self, **kw) -> "ExperimentConfig":
        """Apply command-line style overrides to the experiment section."""
        exp = self.experiment
        changes = {}
        if kw.get("stas") is not None:
            changes["sta_counts"] = _int_list(str(kw["stas"]))
        if kw.get("discipline") is not None:
            changes["disciplines"] = _disciplines(str(kw["discipline"]))
        if kw.get("seed") is not None:
            changes["seeds"] = _int_list(str(kw["seed"]))
        if kw.get("duration") is not None:
            changes["run_duration"] = _decimal(str(kw["duration"]))
        if kw.get("workers") is not None:
            changes["workers"] = int(kw["workers"])
        cfg = replace(self, experiment=replace(exp, **changes))
        validate(cfg)
        return cfg


SECTIONS = ("experiment", "phy", "mac", "traffic", "scheduler", "metrics")


def seconds_to_ns(seconds) -> int:
    ns = Decimal(str(seconds)) * SECOND
    if ns != ns.to_integral_value():
        raise ConfigError(f"duration {seconds} s is not a whole number of nanoseconds")
    return int(ns)


def _decimal(text: str) -> Decimal:
    try:
        return Decimal(text)
    except InvalidOperation:
        raise ConfigError(f"not a number: {text!r}") from None


def _int_list(text: str) -> tuple:
    out = []
    for part in text.replace(" ", "").split(","):
        if not part:
            continue
        if "-" in part[1:]:
            lo, hi = part.split("-", 1) if not part.startswith("-") else (None, None)
            if lo is None:
                raise ConfigError(f"bad range {part!r}")
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(part))
    return tuple(out)


def _disciplines(text: str) -> tuple:
    out = []
    for part in text.replace(" ", "").split(","):
        if not part:
            continue
        try:
            out.append(Discipline(part).value)
        except ValueError:
            raise ConfigError(f"unknown discipline {part!r}") from None
    return tuple(out)


def _parse_value(ftype, text: str):
    text = text.strip()
    try:
        if ftype in (int, "int"):
            return int(text)
        if ftype in (float, "float"):
            return float(text)
        if ftype in (bool, "bool"):
            low = text.lower()
            if low in ("true", "yes", "1", "on"):
                return True
            if low in ("false", "no", "0", "off"):
                return False
            raise ValueError(text)
        if ftype in (str, "str"):
            return text
        if ftype in (Fraction, "Fraction"):
            return Fraction(text)
        if ftype in (Decimal, "Decimal"):
            return _decimal(text)
    except (ValueError, ZeroDivisionError):
        raise ConfigError(f"cannot parse {text!r} as {ftype}") from None
    raise ConfigError(f"unsupported field type {ftype}")


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ", ".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


_LIST_PARSERS = {"sta_counts": _int_list, "seeds": _int_list, "disciplines": _disciplines}


def validate(cfg: ExperimentConfig) -> None:
    exp = cfg.experiment
    if not exp.sta_counts or min(exp.sta_counts) < 1:
        raise ConfigError("sta_counts must be non-empty and >= 1")
    if exp.run_duration <= 0:
        raise ConfigError("run_duration must be positive")
    if exp.workers < 1:
        raise ConfigError("workers must be >= 1")
    if cfg.mac.cw_min < 0 or cfg.mac.cw_max < cfg.mac.cw_min:
        raise ConfigError("need 0 <= cw_min <= cw_max")
    if cfg.mac.retry_limit < 0:
        raise ConfigError("retry_limit must be non-negative")
    if cfg.metrics.rmse_axis not in (0, 1, 2):
        raise ConfigError("rmse_axis must be 0, 1 or 2")
    params = cfg.sim_params()
    try:
        params.tone_plan
        params.budget
        params.traffic_config
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    period = params.traffic_config.period
    if params.run_duration_ns % period:
        raise ConfigError("run_duration must be a whole number of sampling periods")
    ticks = params.run_duration_ns // period
    if ticks * params.traffic_config.sampling_rate > 2 ** 62:
        raise ConfigError("run_duration too long")
    if cfg.metrics.warmup_ns >= params.run_duration_ns:
        raise ConfigError("warmup must be shorter than run_duration")


def loads(text: str) -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    unknown = set(parser.sections()) - set(SECTIONS)
    if unknown:
        raise ConfigError(f"unknown section(s): {', '.join(sorted(unknown))}")
    sections = {}
    defaults = ExperimentConfig()
    for name in SECTIONS:
        base = getattr(defaults, name)
        if not parser.has_section(name):
            sections[name] = base
            continue
        known = {f.name: f for f in fields(base)}
        changes = {}
        for key, raw in parser.items(name):
            if key not in known:
                raise ConfigError(f"unknown key [{name}] {key}")
            if key in _LIST_PARSERS:
                try:
                    changes[key] = _LIST_PARSERS[key](raw)
                except ValueError as exc:
                    raise ConfigError(f"[{name}] {key}: {exc}") from None
            else:
                changes[key] = _parse_value(known[key].type, raw)
        sections[name] = replace(base, **changes)
    cfg = ExperimentConfig(**sections)
    validate(cfg)
    return cfg


def load(path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    return loads(path.read_text())


def dumps(cfg: ExperimentConfig) -> str:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    for name in SECTIONS:
        section = getattr(cfg, name)
        parser[name] = {f.name: _format_value(getattr(section, f.name)) for f in fields(section)}
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()


def dump(cfg: ExperimentConfig, path) -> None:
    Path(path).write_text(dumps(cfg))
