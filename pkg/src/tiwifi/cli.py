"""Command-line entry point: ``tiwifi simulate | sweep | emit``."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from .bss import simulate
from .config import ConfigError, ExperimentConfig, dump, load
from .experiment import PLOT_COLUMNS, SweepResult, emit_plotdata, failed_row, run_one, run_sweep
from .mac import InvariantViolation
from .traffic import TraceFormatError

OUT_DIR_ENV = "TIWIFI_OUT_DIR"
DEFAULT_OUT_DIR = "results"

EXIT_OK = 0
EXIT_RUN_FAILED = 1
EXIT_CONFIG = 2

log = logging.getLogger("tiwifi")


def out_dir(args) -> Path:
    path = Path(args.out_dir or os.environ.get(OUT_DIR_ENV) or DEFAULT_OUT_DIR)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _config(args) -> ExperimentConfig:
    cfg = load(args.config) if args.config else ExperimentConfig()
    return cfg.override(stas=args.stas, discipline=args.discipline, seed=args.seed,
                        duration=args.duration, workers=getattr(args, "workers", None))


def cmd_simulate(args) -> int:
    cfg = _config(args)
    dest = out_dir(args)
    dump(cfg, dest / "config.ini")
    params = cfg.sim_params()
    exp = cfg.experiment
    sweep = SweepResult(discipline_order=tuple(exp.disciplines))
    for disc in exp.disciplines:
        for n in exp.sta_counts:
            for seed in exp.seeds:
                key = (disc, n, seed)
                if args.no_event_log:
                    row = run_one(params, disc, n, seed)
                else:
                    try:
                        result = simulate(params, n, disc, seed)
                    except Exception as exc:  # noqa: BLE001 - reported below
                        row = failed_row(disc, n, seed, exc)
                    else:
                        result.write_event_log(dest / f"events_{disc}_n{n}_s{seed}.csv")
                        row = result.metrics.as_row()
                        row["error"] = ""
                sweep.rows[key] = row
                if row["error"]:
                    log.error("run %s failed: %s", key, row["error"])
                else:
                    log.info("%s n=%d seed=%d worst rtt %.3f ms", disc, n, seed, row["worst_rtt_ms"])
    sweep.write_csv(dest / "summary.csv")
    return EXIT_RUN_FAILED if sweep.failed() else EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _config(args)
    dest = out_dir(args)
    dump(cfg, dest / "config.ini")
    sweep = run_sweep(cfg, progress=True)
    sweep.write_csv(dest / "summary.csv")
    sweep.write_aggregates(dest / "aggregate.csv")
    for kind in PLOT_COLUMNS:
        emit_plotdata(sweep, kind, dest)
    failed = sweep.failed()
    if failed:
        log.error("%d of %d runs failed", len(failed), len(sweep))
        return EXIT_RUN_FAILED
    return EXIT_OK


def cmd_emit(args) -> int:
    dest = out_dir(args)
    source = Path(args.sweep) if args.sweep else dest / "summary.csv"
    if not source.exists():
        raise ConfigError(f"sweep results not found: {source} (run 'sweep' first or pass --sweep)")
    sweep = SweepResult.read_csv(source)
    if not len(sweep):
        raise ConfigError(f"{source} holds no runs")
    disciplines = None
    if args.discipline is not None:
        disciplines = [d for d in args.discipline.replace(" ", "").split(",") if d]
    path = emit_plotdata(sweep, args.kind, dest, disciplines)
    if path is None:
        print(f"notice: no runs for discipline filter {args.discipline!r}; nothing written", file=sys.stderr)
    else:
        print(path)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tiwifi", description="WiFi-7 BSS simulator for 1 kHz haptic traffic")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, workers=False):
        p.add_argument("--config", help="INI experiment config (defaults if omitted)")
        p.add_argument("--stas", help="STA count(s), e.g. 12 or 1-12 or 1,4,8")
        p.add_argument("--discipline", help="vanilla, nobus, or a comma list")
        p.add_argument("--seed", help="seed(s), same syntax as --stas")
        p.add_argument("--duration", help="run length in seconds")
        p.add_argument("--out-dir", help=f"output directory (else ${OUT_DIR_ENV}, else ./{DEFAULT_OUT_DIR})")
        if workers:
            p.add_argument("--workers", type=int, help="parallel worker processes")

    p = sub.add_parser("simulate", help="run selected configurations and write per-sample event logs")
    common(p)
    p.add_argument("--no-event-log", action="store_true", help="write the summary only")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="run the full sweep and write summary, aggregates and plot data")
    common(p, workers=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("emit", help="write plot-ready CSV from a sweep summary")
    p.add_argument("--kind", required=True, choices=sorted(PLOT_COLUMNS))
    p.add_argument("--sweep", help="summary.csv from a sweep (default: <out-dir>/summary.csv)")
    p.add_argument("--discipline", help="restrict to these disciplines (comma list)")
    p.add_argument("--out-dir", help=f"output directory (else ${OUT_DIR_ENV}, else ./{DEFAULT_OUT_DIR})")
    p.set_defaults(func=cmd_emit)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except (ConfigError, TraceFormatError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (InvariantViolation, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUN_FAILED


if __name__ == "__main__":
    sys.exit(main())
