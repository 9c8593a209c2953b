"""Command-line interface: dispatch, exit codes, output determinism."""

import json
import math

import numpy as np
import pytest

from plumefront.cli import dispatch


def run_cli(argv, capsys):
    code = dispatch(argv)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestExitCodes:
    def test_boundary_success(self, capsys):
        code, out, err = run_cli(
            ["boundary", "--profile", "gaussian", "--nu", "1", "--epsilon", "0.1", "--t", "4"],
            capsys,
        )
        assert code == 0
        assert float(out.strip()) == pytest.approx(1.2984, abs=0.005)
        assert "resolved config" in err

    def test_unknown_command_is_usage_error(self, capsys):
        code, _, _ = run_cli(["mystery"], capsys)
        assert code == 1

    def test_unknown_flag_is_usage_error(self, capsys):
        code, _, _ = run_cli(["boundary", "--frobnicate", "1"], capsys)
        assert code == 1

    def test_missing_input_is_data_error(self, capsys):
        code, _, err = run_cli(["estimate", "--input", "no-such-file.csv"], capsys)
        assert code == 2
        assert "error" in err

    def test_conflicting_thresholds_are_usage_error(self, capsys):
        code, _, _ = run_cli(
            ["boundary", "--epsilon", "0.1", "--tau-min", "0.5", "--t", "1"], capsys
        )
        assert code == 1

    def test_domain_error_is_exit_two(self, capsys):
        code, _, _ = run_cli(
            ["boundary", "--nu", "-1", "--epsilon", "0.1", "--t", "1"], capsys
        )
        assert code == 2

    def test_bad_horizon_is_usage_error(self, capsys):
        code, _, _ = run_cli(["exposure", "--r", "1", "--horizon", "soon"], capsys)
        assert code == 1

    def test_non_numeric_cell_is_data_error(self, tmp_path, capsys):
        path = tmp_path / "bad.csv"
        path.write_text("distance_km,outcome\n1.0,2.0\n2.0,oops\n3.0,1.0\n")
        code, _, err = run_cli(["estimate", "--input", str(path)], capsys)
        assert code == 2
        assert "row 3" in err


class TestFieldCommand:
    def test_gaussian_values(self, capsys):
        code, out, _ = run_cli(
            ["field", "--profile", "gaussian", "--nu", "1", "--q", "1",
             "--r", "0,2", "--t", "1"],
            capsys,
        )
        assert code == 0
        lines = out.strip().splitlines()
        assert lines[0] == "r_km,t,value,d_dr,d_dt"
        first = lines[1].split(",")
        assert float(first[2]) == pytest.approx((4 * math.pi) ** -1.5, rel=1e-9)

    def test_json_format(self, capsys):
        code, out, _ = run_cli(
            ["field", "--profile", "gaussian", "--r", "1", "--t", "1", "--format", "json"],
            capsys,
        )
        assert code == 0
        rows = json.loads(out)
        assert rows[0]["r_km"] == 1.0


class TestMomentsExposure:
    def test_moment_values(self, capsys):
        code, out, _ = run_cli(["moments", "--nu", "1", "--q", "1", "--t", "2", "--k", "0,2"], capsys)
        assert code == 0
        rows = {tuple(line.split(",")[:2]): float(line.split(",")[2])
                for line in out.strip().splitlines()[1:]}
        assert rows[("0", "2")] == pytest.approx(1.0, rel=1e-6)
        assert rows[("2", "2")] == pytest.approx(12.0, rel=1e-6)

    def test_exposure_closed_form(self, capsys):
        code, out, _ = run_cli(["exposure", "--nu", "1", "--q", "1", "--r", "1"], capsys)
        assert code == 0
        val = float(out.strip().splitlines()[1].split(",")[-1])
        assert val == pytest.approx(1.0 / (4 * math.pi), rel=1e-6)


class TestEstimateCommand:
    @pytest.fixture()
    def decay_csv(self, tmp_path):
        rng = np.random.default_rng(0)
        d = 100.0 * (1.0 - rng.random(500))
        y = np.exp(1.0 - 0.05 * d + 0.2 * rng.standard_normal(500))
        path = tmp_path / "data.csv"
        lines = ["distance_km,outcome"] + [f"{a},{b}" for a, b in zip(d, y)]
        path.write_text("\n".join(lines) + "\n")
        return path

    def test_loglinear_estimate(self, decay_csv, capsys):
        code, out, _ = run_cli(
            ["estimate", "--input", str(decay_csv), "--robust-cutoff", "50"], capsys
        )
        assert code == 0
        header, row = out.strip().splitlines()
        record = dict(zip(header.split(","), row.split(",")))
        assert float(record["kappa_per_km"]) == pytest.approx(0.05, abs=0.005)
        assert record["se_spatial"] != "none"
        assert float(record["d_star_km"]) == pytest.approx(46.05, rel=0.1)

    def test_nonparametric_estimate(self, decay_csv, capsys):
        code, out, _ = run_cli(
            ["estimate", "--input", str(decay_csv), "--method", "nonparametric",
             "--n-boot", "50", "--seed", "3"],
            capsys,
        )
        assert code == 0
        header, row = out.strip().splitlines()
        record = dict(zip(header.split(","), row.split(",")))
        assert record["method"] == "nonparametric"
        assert float(record["bandwidth_km"]) > 0


class TestOtherProfilesAndReports:
    def test_decaying_profile_field_and_boundary(self, capsys):
        code, out, _ = run_cli(
            ["field", "--profile", "decaying", "--nu", "1", "--q", "1", "--lam", "0.5",
             "--r", "1,2", "--t", "2"],
            capsys,
        )
        assert code == 0
        vals = [float(line.split(",")[2]) for line in out.strip().splitlines()[1:]]
        assert vals[0] > vals[1] > 0
        code, out, _ = run_cli(
            ["boundary", "--profile", "decaying", "--nu", "1", "--q", "1", "--lam", "1",
             "--tau-min", "1e-6", "--t", "30"],
            capsys,
        )
        assert code == 0
        assert float(out.strip()) == pytest.approx(9.08, abs=0.3)

    def test_kummer_profile(self, capsys):
        code, out, _ = run_cli(
            ["field", "--profile", "kummer", "--nu", "1", "--coeffs", "1",
             "--r", "0", "--t", "1"],
            capsys,
        )
        assert code == 0
        assert float(out.strip().splitlines()[1].split(",")[2]) == pytest.approx(1.0)

    def test_finite_horizon_exposure(self, capsys):
        from scipy.special import erfc

        code, out, _ = run_cli(
            ["exposure", "--nu", "1", "--q", "1", "--r", "1.5", "--horizon", "3"], capsys
        )
        assert code == 0
        val = float(out.strip().splitlines()[1].split(",")[-1])
        expected = erfc(1.5 / (2.0 * math.sqrt(3.0))) / (4.0 * math.pi * 1.5)
        assert val == pytest.approx(expected, rel=1e-6)

    def test_estimate_both_with_curve(self, tmp_path, capsys):
        rng = np.random.default_rng(1)
        d = 100.0 * (1.0 - rng.random(400))
        y = np.exp(1.0 - 0.05 * d + 0.2 * rng.standard_normal(400))
        data = tmp_path / "d.csv"
        data.write_text("distance_km,outcome\n" + "".join(f"{a},{b}\n" for a, b in zip(d, y)))
        curve = tmp_path / "curve.csv"
        code, out, _ = run_cli(
            ["estimate", "--input", str(data), "--method", "both", "--n-boot", "30",
             "--curve-out", str(curve)],
            capsys,
        )
        assert code == 0
        assert len(out.strip().splitlines()) == 3  # header + two method rows
        assert curve.read_text().startswith("distance_km,m_hat")

    def test_diagnose_with_split(self, tmp_path, capsys):
        rng = np.random.default_rng(2)
        d = 200.0 * (1.0 - rng.random(2000))
        log_mean = np.where(d < 100.0, -0.00112 * d, -0.112 + 0.00123 * (d - 100.0))
        y = np.exp(1.0 + log_mean + 0.35 * rng.standard_normal(2000))
        data = tmp_path / "d.csv"
        data.write_text("distance_km,outcome\n" + "".join(f"{a},{b}\n" for a, b in zip(d, y)))
        code, out, err = run_cli(
            ["diagnose", "--input", str(data), "--bins", "6", "--split", "100"], capsys
        )
        assert code == 0
        assert "sign_reversal=true" in err
        assert len(out.strip().splitlines()) == 7  # header + 6 bins


class TestMontecarloCommand:
    def test_deterministic_output(self, tmp_path, capsys):
        args = ["montecarlo", "--dgp", "flat", "--reps", "10", "--n", "300",
                "--seed", "7", "--methods", "parametric"]
        out_a = tmp_path / "a.csv"
        out_b = tmp_path / "b.csv"
        assert dispatch(args + ["--out", str(out_a)]) == 0
        assert dispatch(args + ["--out", str(out_b)]) == 0
        capsys.readouterr()
        assert out_a.read_bytes() == out_b.read_bytes()

    def test_unknown_dgp_is_usage_error(self, capsys):
        code, _, _ = run_cli(["montecarlo", "--dgp", "cosmic", "--reps", "10"], capsys)
        assert code == 1

    def test_input_files_not_mutated(self, tmp_path, capsys):
        src = tmp_path / "sources.csv"
        obs = tmp_path / "obs.csv"
        src.write_text("id,lat,lon,capacity_mw\np,30,-95,500\n")
        obs.write_text(
            "lat,lon,period,outcome\n"
            + "".join(f"30.1,-95,2019-{m:02d},1.0\n" for m in range(1, 13))
        )
        before = (src.read_bytes(), obs.read_bytes())
        code, _, _ = run_cli(
            ["ingest", "--sources", str(src), "--observations", str(obs),
             "--out", str(tmp_path / "sample.csv")],
            capsys,
        )
        assert code == 0
        assert (src.read_bytes(), obs.read_bytes()) == before


class TestConfigFile:
    def test_config_fills_defaults_flags_override(self, tmp_path, capsys):
        config = tmp_path / "run.json"
        config.write_text(json.dumps({"epsilon": 0.1, "t": "4", "nu": 4.0}))
        # flag --nu 1 overrides the config's nu = 4
        code, out, _ = run_cli(
            ["boundary", "--config", str(config), "--nu", "1"], capsys
        )
        assert code == 0
        assert float(out.strip()) == pytest.approx(1.2984, abs=0.005)

    def test_config_value_used_when_flag_absent(self, tmp_path, capsys):
        config = tmp_path / "run.json"
        config.write_text(json.dumps({"epsilon": 0.1, "t": "1"}))
        code, out, _ = run_cli(["boundary", "--config", str(config)], capsys)
        assert code == 0
        assert float(out.strip()) == pytest.approx(0.6492, abs=0.003)

    def test_config_accepts_json_numbers_and_lists(self, tmp_path, capsys):
        config = tmp_path / "run.json"
        config.write_text(json.dumps({"epsilon": 0.1, "t": [1, 4]}))
        code, out, _ = run_cli(["boundary", "--config", str(config)], capsys)
        assert code == 0
        values = [float(line.split(",")[1]) for line in out.strip().splitlines()[1:]]
        assert values[1] == pytest.approx(2.0 * values[0], rel=1e-9)

    def test_unknown_config_key_is_usage_error(self, tmp_path, capsys):
        config = tmp_path / "run.json"
        config.write_text(json.dumps({"nonsense": 1}))
        code, _, _ = run_cli(["boundary", "--config", str(config), "--epsilon", "0.1", "--t", "1"], capsys)
        assert code == 1

    def test_bad_json_is_data_error(self, tmp_path, capsys):
        config = tmp_path / "run.json"
        config.write_text("{not json")
        code, _, _ = run_cli(["boundary", "--config", str(config), "--epsilon", "0.1", "--t", "1"], capsys)
        assert code == 2


class TestIngestCommand:
    def test_end_to_end(self, tmp_path, capsys):
        src = tmp_path / "sources.csv"
        obs = tmp_path / "obs.csv"
        src.write_text(
            "id,lat,lon,capacity_mw\nbig,30,-95,500\nsmall,30.5,-95.5,90\n"
        )
        rows = ["lat,lon,period,outcome"]
        rows += [f"30.1,-95.0,2019-{m:02d},2.5" for m in range(1, 13)]
        rows += ["45.0,-95.0,2019-01,9.9"]  # far away: dropped by distance
        obs.write_text("\n".join(rows) + "\n")
        code, out, err = run_cli(
            ["ingest", "--sources", str(src), "--observations", str(obs)], capsys
        )
        assert code == 0
        lines = out.strip().splitlines()
        assert len(lines) == 13  # header + 12 kept months
        assert all(line.split(",")[4] == "big" for line in lines[1:])
