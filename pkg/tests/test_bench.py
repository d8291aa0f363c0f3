import csv
import io

import pytest

from odin import bench
from odin.bench import ConfigError, RunConfig, parse_axis_value, parse_config_text, run, sweep, write_csv
from odin.cli import main
from odin.oracle import OracleResult

SMALL = ["--graph", "synthetic:500", "--objects", "50", "--k", "10", "--queries", "8", "--z", "60"]


def csv_text(result) -> str:
    buf = io.StringIO()
    write_csv(result, buf)
    return buf.getvalue()


def test_dry_run_echoes_table_defaults(capsys):
    assert main(["run", "--dry-run"]) == 0
    out = capsys.readouterr().out
    for item in ("k=10", "m=4", "z=300", "mu=5", "P_o=0.25", "objects=30000", "runs=1"):
        assert item in out
    assert main(["sweep", "--axis", "k", "--values", "10", "--dry-run"]) == 0
    assert "runs=3" in capsys.readouterr().out


def test_verified_run_rows_and_exit(tmp_path, capsys):
    out = tmp_path / "r.csv"
    assert main(["run", *SMALL, "--rounds", "10", "--verify", "--serial", "--output", str(out)]) == 0
    rows = list(csv.DictReader(out.open()))
    assert len(rows) == 10 * 8
    assert {r["verify"] for r in rows} == {"pass"}
    assert {r["phase"] for r in rows} == {"init", "inc"}
    timing = list(csv.DictReader(bench.timing_path(out).open()))
    assert len(timing) == 80 and "elapsed_us" in timing[0]
    assert "mean_inc_us" in capsys.readouterr().err


def test_single_round_is_init_only(capsys):
    assert main(["run", *SMALL, "--rounds", "1", "--serial"]) == 0
    cap = capsys.readouterr()
    assert "mean_init_us" in cap.err and "mean_inc_us" not in cap.err
    assert "verify" not in cap.out.splitlines()[1]


def test_config_errors_exit_2(tmp_path, capsys):
    assert main(["run", "--k", "0"]) == 2
    assert main(["run", "--movers", "2"]) == 2
    assert main(["run", "--graph", "missing.gr"]) == 2
    assert main(["run", "--config", str(tmp_path / "none.cfg")]) == 2
    bad = tmp_path / "bad.cfg"
    bad.write_text("colour = red\n")
    assert main(["run", "--config", str(bad)]) == 2
    with pytest.raises(SystemExit) as exc:
        main(["run", "--k", "ten"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2
    capsys.readouterr()


def test_verify_failure_exits_1(monkeypatch, capsys):
    monkeypatch.setattr(bench, "ine_knn", lambda *a: OracleResult([(-1, 0)]))
    assert main(["run", *SMALL, "--rounds", "2", "--verify", "--serial"]) == 1
    err = capsys.readouterr().err
    assert "diverges" in err and "oracle: -1:0" in err


def test_config_file_overridden_by_flags(tmp_path, capsys):
    cfg = tmp_path / "a.cfg"
    cfg.write_text("# workload\nk = 3\nmu = 7\nverify = on\n")
    assert main(["run", "--config", str(cfg), "--k", "4", "--dry-run"]) == 0
    out = capsys.readouterr().out
    assert "k=4" in out and "mu=7" in out and "verify=on" in out
    assert parse_config_text("runs=2\nsticky=yes") == {"runs": 2, "sticky": True}
    with pytest.raises(ConfigError):
        parse_config_text("k = many")


def test_serial_runs_are_byte_identical():
    cfg = RunConfig(graph="synthetic:400", objects=60, queries=10, rounds=5, z=50, serial=True, seed=3)
    assert csv_text(run(cfg)) == csv_text(run(cfg))


def test_threaded_run_matches_serial_rows():
    cfg = RunConfig(graph="synthetic:400", objects=60, queries=10, rounds=4, z=50, serial=True, seed=4)
    threaded = RunConfig(**{**cfg.__dict__, "serial": False, "workers": 4})
    assert csv_text(run(cfg)) == csv_text(run(threaded))


def test_larger_mu_folds_at_least_as_often():
    base = RunConfig(graph="synthetic:1000:2", objects=100, queries=5, rounds=10, z=40, serial=True, runs=2)
    points = sweep(base, "mu", ["5", "25"])
    folds = [p.result.summary()["folds"] for p in points]
    assert folds[1] >= folds[0]


def test_single_value_sweep_equals_run():
    cfg = RunConfig(graph="synthetic:300", objects=30, queries=5, rounds=3, z=50, serial=True)
    (point,) = sweep(cfg, "k", ["10"])
    assert csv_text(point.result) == csv_text(run(cfg))


def test_sweep_cli_writes_summary(tmp_path, capsys):
    out = tmp_path / "s.csv"
    args = ["sweep", *SMALL, "--rounds", "2", "--runs", "1", "--serial", "--axis", "density",
            "--values", "1:10,1:20", "--output", str(out)]
    assert main(args) == 0
    summary = list(csv.DictReader(out.open()))
    assert [r["value"] for r in summary] == ["1:10", "1:20"]
    assert (tmp_path / "s.density=1-10.csv").is_file()
    capsys.readouterr()


def test_axis_values():
    assert parse_axis_value("density", "1:10", 2000) == 200
    assert parse_axis_value("density", "0.05", 2000) == 100
    assert parse_axis_value("movers", "0.5") == 0.5
    for axis, raw in (("speed", "1"), ("density", "1:0"), ("k", "x")):
        with pytest.raises(ConfigError):
            parse_axis_value(axis, raw, 100)
    with pytest.raises(ConfigError):
        sweep(RunConfig(), "k", [])
