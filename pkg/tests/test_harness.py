import csv
import io

import numpy as np
import pytest

from d2dcache.harness import (
    BOUNDS_COLUMNS,
    CHECK_COLUMNS,
    EXIT_CONFIG,
    EXIT_OK,
    EXIT_ORACLE,
    ORACLE_COLUMNS,
    RATE_COLUMNS,
    SINGLE_COLUMNS,
    ConfigError,
    ExperimentConfig,
    bounds_rows,
    fmt,
    main,
    rate_samples,
    read_config_file,
    run_oracle_check,
    run_rate_vs_radius,
    run_single,
    trial_rates,
)


def parse(text):
    return list(csv.DictReader(io.StringIO(text)))


def header(text):
    return text.splitlines()[0].split(",")


class TestFormatting:
    def test_floats(self):
        assert fmt(0.1 + 0.2) == "0.3"
        assert fmt(1 / 3) == "0.333333333"
        assert fmt(1e-12) == "1e-12"
        assert fmt(5) == "5"
        assert fmt(np.float64(2.5)) == "2.5"


class TestBoundsSweep:
    def test_rows(self):
        rows = bounds_rows(1, 9)
        assert [r["i"] for r in rows] == list(range(46))
        assert rows[5]["mac_min_norm"] == pytest.approx(0.499, abs=5e-4)
        assert rows[13]["q_max_norm"] == pytest.approx(0.511, abs=5e-4)
        assert all(rows[0][f"{k}_norm"] == 1.0 for k in ("mac_min", "mac_max", "q_min", "q_max"))

    def test_cli(self, capsys):
        assert main(["bounds-sweep", "--t", "1", "--L", "9"]) == EXIT_OK
        out = capsys.readouterr().out
        assert header(out) == BOUNDS_COLUMNS
        rows = parse(out)
        assert rows[5]["mac_min"] == "2550" and rows[5]["mac_min_norm"] == "0.499021526"

    def test_oracle_columns(self, capsys):
        assert main(["bounds-sweep", "--t", "1", "--L", "2", "--oracle"]) == EXIT_OK
        assert header(capsys.readouterr().out) == BOUNDS_COLUMNS + ORACLE_COLUMNS


class TestOracleCheck:
    def test_passing_pair(self, capsys):
        assert main(["oracle-check", "--t", "1", "--L", "2"]) == EXIT_OK
        rows = parse(capsys.readouterr().out)
        assert header_ok(rows)
        row = rows[1]
        assert (row["oracle_mac_min"], row["oracle_mac_max"]) == ("5", "5")

    def test_symmetric_four_user_value(self):
        text, failures = run_oracle_check(ExperimentConfig(mode="oracle-check"), [(2, 2)])
        rows = parse(text)
        assert rows[1]["oracle_mac_min"] == rows[1]["oracle_mac_max"] == "16"
        # the closed-form quadratic lower bound overshoots at i=3
        assert [f["i"] for f in failures] == [3]

    def test_failure_exit_code(self, capsys):
        assert main(["oracle-check", "--t", "1", "--L", "4"]) == EXIT_ORACLE
        err = capsys.readouterr().err
        assert "t=1 L=4 i=4" in err and "q_min" in err


def header_ok(rows):
    return rows and list(rows[0].keys()) == CHECK_COLUMNS


class TestRateVsRadius:
    def config(self, **kw):
        base = dict(mode="rate-vs-radius", radii=[1.0, 20.0], trials=4, seed=3, workers=1)
        base.update(kw)
        return ExperimentConfig(**base)

    def test_schema(self):
        text = run_rate_vs_radius(self.config())
        assert header(text) == RATE_COLUMNS
        rows = parse(text)
        assert [(r["r"], r["strategy"]) for r in rows[:4]] == [
            ("1", "dl-only"), ("1", "d2d-only"), ("1", "heuristic"), ("1", "exhaustive")]
        assert all(r["trials"] == "4" and r["failures"] == "0" for r in rows)

    def test_deterministic_and_pool_independent(self):
        a = run_rate_vs_radius(self.config())
        b = run_rate_vs_radius(self.config())
        c = run_rate_vs_radius(self.config(workers=2))
        assert a == b == c

    def test_exhaustive_dominates_per_trial(self):
        samples = rate_samples(self.config(trials=6))
        for by in samples.values():
            for name in ("dl-only", "d2d-only", "heuristic"):
                assert np.all(by["exhaustive"] >= by[name])

    def test_zero_device_power(self):
        cfg = self.config(device_power=0.0, strategies=["dl-only", "heuristic", "d2d-only"])
        samples = rate_samples(cfg)
        for by in samples.values():
            assert np.array_equal(by["heuristic"], by["dl-only"])
            assert np.all(by["d2d-only"] == 0.0)

    def test_trial_rates(self):
        params = self.config().params(5.0)
        out = trial_rates(params, 0, 0, ("dl-only", "exhaustive"))
        assert set(out) == {"dl-only", "exhaustive"}
        assert out["exhaustive"] >= out["dl-only"]


class TestSingleRun:
    def test_example1(self):
        report, table = run_single(ExperimentConfig(mode="single-run", fixture="example1", seed=0))
        assert "X_{1,3} = A_{3} + C_{1}" in report
        assert "X_{2,3} = B_{3} + C_{2}" in report
        assert "MAC constraints: 5 total" in report
        assert "SINR couplings: 4" in report
        assert header(table) == SINGLE_COLUMNS
        assert parse(table)[0]["n_mac"] == "5"

    def test_example2(self):
        report, _ = run_single(ExperimentConfig(mode="single-run", fixture="example2", seed=0))
        assert report.count("  X_{") == 3
        assert "user 4: 7" in report
        assert "user 1 sends B^1_{1,3} + C^1_{1,2}" in report

    def test_full_d2d(self):
        report, table = run_single(ExperimentConfig(mode="single-run", fixture="example1", seed=0, d2d="1,2;1,3;2,3"))
        assert "T_DL = 0\n" in report
        assert parse(table)[0]["t_dl"] == "0"

    def test_random_drop_with_heuristic(self):
        report, _ = run_single(ExperimentConfig(mode="single-run", seed=2, r=3.0))
        assert "heuristic iterations:" in report
        assert "R_U = " in report

    def test_cli(self, capsys):
        assert main(["single-run", "--seed", "1", "--r", "5"]) == EXIT_OK
        assert "R_U = " in capsys.readouterr().out


class TestConfig:
    def test_validation(self):
        with pytest.raises(ConfigError):
            ExperimentConfig(mode="rate-vs-radius", trials=0)
        with pytest.raises(ConfigError):
            ExperimentConfig(mode="rate-vs-radius", radii=[0.0])
        with pytest.raises(ConfigError):
            ExperimentConfig(mode="rate-vs-radius", radii=[150.0])
        with pytest.raises(ConfigError):
            ExperimentConfig(mode="rate-vs-radius", strategies=["greedy"])

    def test_file_and_override(self, tmp_path, capsys):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("# sweep\nt = 1\nL = 9\n")
        assert main(["--config", str(cfg), "bounds-sweep"]) == EXIT_OK
        assert len(parse(capsys.readouterr().out)) == 46
        assert main(["--config", str(cfg), "bounds-sweep", "--L", "2"]) == EXIT_OK
        assert len(parse(capsys.readouterr().out)) == 4

    def test_bad_file(self, tmp_path):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("trials\n")
        with pytest.raises(ConfigError):
            read_config_file(str(cfg))

    def test_config_exit_codes(self, tmp_path, capsys):
        assert main(["rate-vs-radius", "--trials", "0"]) == EXIT_CONFIG
        cfg = tmp_path / "x.cfg"
        cfg.write_text("colour = blue\n")
        assert main(["--config", str(cfg), "bounds-sweep"]) == EXIT_CONFIG
        assert main(["bounds-sweep", "--t", "0", "--L", "2"]) == EXIT_CONFIG

    def test_output_dir_env(self, tmp_path, monkeypatch):
        monkeypatch.setenv("D2DCACHE_OUTPUT_DIR", str(tmp_path / "out"))
        assert main(["--out", "sweep.csv", "bounds-sweep", "--t", "1", "--L", "2"]) == EXIT_OK
        text = (tmp_path / "out" / "sweep.csv").read_text()
        assert header(text) == BOUNDS_COLUMNS
