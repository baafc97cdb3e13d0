import csv
import math
from pathlib import Path

import pytest

from tiwifi import cli
from tiwifi.config import ExperimentConfig, load
from tiwifi.experiment import (AGGREGATE_COLUMNS, PLOT_COLUMNS, RUN_COLUMNS, SweepResult,
                               emit_plotdata, run_sweep)

GOLDEN = Path(__file__).parent / "golden"
PINNED = ["sweep", "--stas", "1,3", "--seed", "1", "--duration", "0.3"]


def header(path):
    with open(path, newline="") as fh:
        return next(csv.reader(fh))


def test_sweep_matches_golden_files(tmp_path):
    assert cli.main(PINNED + ["--out-dir", str(tmp_path)]) == 0
    for name, golden in (("summary.csv", "sweep_summary.csv"), ("latency_ampdu.csv", "latency_ampdu.csv"),
                         ("rmse_fraction.csv", "rmse_fraction.csv")):
        assert (tmp_path / name).read_bytes() == (GOLDEN / golden).read_bytes(), name


def test_output_schemas(tmp_path):
    assert cli.main(PINNED + ["--out-dir", str(tmp_path)]) == 0
    assert header(tmp_path / "summary.csv") == RUN_COLUMNS
    assert header(tmp_path / "aggregate.csv") == AGGREGATE_COLUMNS
    for kind, cols in PLOT_COLUMNS.items():
        assert header(tmp_path / f"{kind}.csv") == cols
    assert PLOT_COLUMNS["latency_ampdu"] == ["sta_count", "discipline", "worst_dl_ms", "worst_ul_ms",
                                             "worst_rtt_ms", "mean_ampdu_dl", "mean_ampdu_ul"]
    assert PLOT_COLUMNS["rmse_fraction"] == ["sta_count", "discipline", "delivered_fraction", "rmse_cm"]
    # the effective configuration is stored next to the results
    cfg = load(tmp_path / "config.ini")
    assert cfg.experiment.sta_counts == (1, 3)


def test_rerun_is_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    args = ["simulate", "--stas", "4", "--seed", "2", "--duration", "0.3"]
    assert cli.main(args + ["--out-dir", str(a)]) == 0
    assert cli.main(args + ["--out-dir", str(b)]) == 0
    names = sorted(p.name for p in a.iterdir())
    assert names == sorted(p.name for p in b.iterdir())
    assert "events_nobus_n4_s2.csv" in names
    for name in names:
        assert (a / name).read_bytes() == (b / name).read_bytes(), name


def test_event_log_schema(tmp_path):
    assert cli.main(["simulate", "--stas", "2", "--seed", "1", "--discipline", "vanilla",
                     "--duration", "0.2", "--out-dir", str(tmp_path)]) == 0
    path = tmp_path / "events_vanilla_n2_s1.csv"
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert list(rows[0]) == ["flow", "seq", "generated_at", "enqueued_at", "received_at",
                             "displayed_at", "outcome"]
    assert len(rows) == 4 * 200
    assert {r["outcome"] for r in rows} <= {"delivered", "residual", "retry-drop", "proactive-drop"}


def test_out_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUT_DIR_ENV, str(tmp_path / "env"))
    assert cli.main(["simulate", "--stas", "1", "--seed", "1", "--discipline", "nobus",
                     "--duration", "0.2", "--no-event-log"]) == 0
    assert (tmp_path / "env" / "summary.csv").exists()


def test_emit_from_saved_sweep(tmp_path, capsys):
    assert cli.main(PINNED + ["--out-dir", str(tmp_path)]) == 0
    (tmp_path / "latency_ampdu.csv").unlink()
    assert cli.main(["emit", "--kind", "latency_ampdu", "--out-dir", str(tmp_path)]) == 0
    assert (tmp_path / "latency_ampdu.csv").read_bytes() == (GOLDEN / "latency_ampdu.csv").read_bytes()


def test_emit_empty_filter_gives_notice_and_no_file(tmp_path, capsys):
    sweep_dir = tmp_path / "s"
    assert cli.main(PINNED + ["--discipline", "vanilla", "--out-dir", str(sweep_dir)]) == 0
    out = tmp_path / "o"
    assert cli.main(["emit", "--kind", "rmse_fraction", "--sweep", str(sweep_dir / "summary.csv"),
                     "--discipline", "nobus", "--out-dir", str(out)]) == 0
    assert "notice" in capsys.readouterr().err
    assert not (out / "rmse_fraction.csv").exists()


@pytest.mark.parametrize("argv", [
    ["simulate", "--config", "/nonexistent.ini"],
    ["sweep", "--stas", "0"],
    ["simulate", "--discipline", "turbo"],
    ["emit", "--kind", "latency_ampdu", "--sweep", "/nonexistent.csv"],
])
def test_errors_exit_nonzero_with_diagnostic(argv, capsys, tmp_path):
    assert cli.main(argv + ["--out-dir", str(tmp_path)]) != 0
    assert "error" in capsys.readouterr().err


def test_bad_kind_is_rejected_by_parser():
    with pytest.raises(SystemExit) as exc:
        cli.main(["emit", "--kind", "pie"])
    assert exc.value.code != 0


def test_failed_run_recorded_not_dropped(tmp_path):
    bad_trace = tmp_path / "short.csv"
    bad_trace.write_text("tick,x,y,z\n0,0,0,0\n")
    cfg_path = tmp_path / "c.ini"
    cfg_path.write_text(f"[traffic]\ntrace_file = {bad_trace}\n")
    out = tmp_path / "out"
    rc = cli.main(["sweep", "--config", str(cfg_path), "--stas", "1", "--seed", "1,2",
                   "--discipline", "nobus", "--duration", "0.2", "--out-dir", str(out)])
    assert rc == cli.EXIT_RUN_FAILED
    sweep = SweepResult.read_csv(out / "summary.csv")
    assert len(sweep) == 2
    assert all("ticks" in r["error"] for r in sweep.failed())


def test_run_sweep_row_counts():
    cfg = ExperimentConfig().override(stas="1", discipline="vanilla", seed="1", duration="0.2")
    sweep = run_sweep(cfg)
    assert len(sweep) == 1
    n_groups = 1
    assert len(sweep.aggregates()) == 2 * n_groups
    cfg = ExperimentConfig().override(stas="1-2", seed="1-2", duration="0.2")
    assert len(run_sweep(cfg)) == 2 * 2 * 2


def test_parallel_workers_merge_deterministically(tmp_path):
    cfg = ExperimentConfig().override(stas="1-3", seed="1", duration="0.2")
    serial = run_sweep(cfg)
    parallel = run_sweep(cfg.override(workers=2))
    serial.write_csv(tmp_path / "s.csv")
    parallel.write_csv(tmp_path / "p.csv")
    assert (tmp_path / "s.csv").read_bytes() == (tmp_path / "p.csv").read_bytes()


def test_plot_aggregation_uses_max_for_worst_case(tmp_path):
    cfg = ExperimentConfig().override(stas="4", discipline="vanilla", seed="1-3", duration="0.3")
    sweep = run_sweep(cfg)
    rows = sweep.select("vanilla", 4)
    path = emit_plotdata(sweep, "latency_ampdu", tmp_path)
    with open(path, newline="") as fh:
        (row,) = list(csv.DictReader(fh))
    assert float(row["worst_rtt_ms"]) == max(r["worst_rtt_ms"] for r in rows)
    mean_ampdu = sum(r["mean_ampdu_dl"] for r in rows) / 3
    assert math.isclose(float(row["mean_ampdu_dl"]), mean_ampdu, rel_tol=1e-12)
    with pytest.raises(ValueError):
        emit_plotdata(SweepResult(), "latency_ampdu", tmp_path)
