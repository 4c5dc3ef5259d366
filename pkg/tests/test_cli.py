"""CLI commands, config validation, report determinism, CSV round-trips."""

import json
import math

import numpy as np
import pytest

from nsnv import cli
from nsnv.instances import load_timeseries


def _write(path, text):
    path.write_text(text, encoding="utf-8")
    return str(path)


GRID_CFG = """
schema = 1
[experiment]
type = "grid"
name = "tiny-grid"
[instances]
generator = "lower_bound_cycles"
v = [0.0]
a = 1.0
[run]
horizons = [128, 256, 512]
seeds = 3
master_seed = 5
[[policies]]
name = "fixed_window"
v = "meta"
"""


class TestRunGrid:
    def test_report_written_and_deterministic(self, tmp_path):
        cfg = _write(tmp_path / "cfg.toml", GRID_CFG)
        out1, out2 = tmp_path / "o1", tmp_path / "o2"
        assert cli.main(["run", "--config", cfg, "--out", str(out1)]) == 0
        assert cli.main(["run", "--config", cfg, "--out", str(out2)]) == 0
        b1 = (out1 / "report.json").read_bytes()
        b2 = (out2 / "report.json").read_bytes()
        assert b1 == b2
        report = json.loads(b1)
        assert report["provenance"]["config_format"] == "toml-v1"
        assert report["provenance"]["master_seed"] == 5
        assert len(report["results"]["cells"]) == 3
        assert len(report["results"]["slope_fits"]) == 1

    def test_emitted_cells_csv_roundtrips(self, tmp_path):
        cfg = _write(tmp_path / "cfg.toml", GRID_CFG)
        out = tmp_path / "o"
        cli.main(["run", "--config", cfg, "--out", str(out)])
        report = json.loads((out / "report.json").read_bytes())
        rows = cli.load_table(out / "regret_cells.csv")
        assert len(rows) == 3
        for row, cell in zip(rows, report["results"]["cells"]):
            assert row["mean_regret"] == cell["mean_regret"]  # exact float round-trip

    def test_seed_override_changes_results(self, tmp_path):
        cfg = _write(tmp_path / "cfg.toml", GRID_CFG)
        r1 = cli.run_config(*_load(cfg))
        import tomli

        with open(cfg, "rb") as fh:
            parsed = tomli.load(fh)
        parsed["run"]["master_seed"] = 6
        r2 = cli.run_config(parsed, b"x")
        assert (
            r1["results"]["cells"][0]["mean_regret"] != r2["results"]["cells"][0]["mean_regret"]
        )


def _load(path):
    import tomli

    with open(path, "rb") as fh:
        return tomli.load(fh), open(path, "rb").read()


class TestValidation:
    def test_missing_policies(self, tmp_path):
        bad = GRID_CFG.replace('[[policies]]\nname = "fixed_window"\nv = "meta"\n', "")
        cfg = _write(tmp_path / "bad.toml", bad)
        assert cli.main(["run", "--config", cfg]) == 2

    def test_zero_seeds(self, tmp_path):
        cfg = _write(tmp_path / "bad.toml", GRID_CFG.replace("seeds = 3", "seeds = 0"))
        assert cli.main(["run", "--config", cfg]) == 2

    def test_unknown_experiment_type(self, tmp_path):
        cfg = _write(tmp_path / "bad.toml", GRID_CFG.replace('type = "grid"', 'type = "nope"'))
        rc = cli.main(["run", "--config", cfg])
        assert rc == 2

    def test_error_message_names_field(self, tmp_path, capsys):
        cfg = _write(tmp_path / "bad.toml", GRID_CFG.replace("seeds = 3", "x = 3"))
        cli.main(["run", "--config", cfg])
        assert "run.seeds" in capsys.readouterr().err

    def test_small_horizon_rejected(self, tmp_path):
        cfg = _write(tmp_path / "bad.toml", GRID_CFG.replace("[128, 256, 512]", "[1]"))
        assert cli.main(["run", "--config", cfg]) == 2


class TestSyntheticRunner:
    @pytest.mark.parametrize("mode", ["fixed-v", "fixed-a"])
    def test_tiny_run_structure(self, tmp_path, mode):
        cfg_text = f"""
schema = 1
[experiment]
type = "synthetic"
name = "tiny-{mode}"
[instances]
mode = "{mode}"
instances = 4
horizon = 90
min_follow = 20
[run]
seeds = 1
master_seed = 3
"""
        cfg = _write(tmp_path / "cfg.toml", cfg_text)
        out = tmp_path / "o"
        assert cli.main(["run", "--config", cfg, "--out", str(out)]) == 0
        report = json.loads((out / "report.json").read_bytes())
        rows = report["results"]["rows"]
        assert len(rows) == 4
        for r in rows:
            assert r["cost_prediction"] > 0 and r["cost_shrinking"] > 0 and r["cost_perp"] > 0
        summary = report["results"]["summary"]
        assert summary["mode"] == mode
        assert "spearman_a_vs_prediction_cost" in summary
        # scatter + histogram CSVs round-trip
        scatter = cli.load_table(out / "scatter_data.csv")
        assert len(scatter) == 4
        assert scatter[0]["cost_perp"] == rows[0]["cost_perp"]

    def test_fixed_v_shares_demand_path(self, tmp_path):
        cfg_text = """
schema = 1
[experiment]
type = "synthetic"
[instances]
mode = "fixed-v"
instances = 3
horizon = 60
[run]
seeds = 1
master_seed = 3
"""
        cfg = _write(tmp_path / "cfg.toml", cfg_text)
        report = cli.run_config(*_load(cfg))
        rows = report["results"]["rows"]
        costs = {r["cost_shrinking"] for r in rows}
        assert len(costs) == 1  # one demand process, one baseline cost


class TestPairRunner:
    def test_small_pair(self, tmp_path):
        cfg_text = """
schema = 1
[experiment]
type = "pair"
[instances]
horizon = 128
[run]
seeds = 4
master_seed = 1
[[policies]]
name = "fixed_window"
v = "meta"
[[policies]]
name = "prediction"
"""
        cfg = _write(tmp_path / "cfg.toml", cfg_text)
        report = cli.run_config(*_load(cfg))
        rows = report["results"]["pair"]
        assert {r["policy"] for r in rows} == {"fixed_window", "prediction"}
        for r in rows:
            assert r["mean_regret_sum"] == pytest.approx(
                r["mean_regret_noisy_constant"] + r["mean_regret_revealed_drift"]
            )


class TestPerpRobustnessRunner:
    def test_small_run(self, tmp_path):
        cfg_text = """
schema = 1
[experiment]
type = "perp-robustness"
[instances]
v = 0.0
horizon = 1024
offset = 20.0
[run]
seeds = 3
master_seed = 2
"""
        cfg = _write(tmp_path / "cfg.toml", cfg_text)
        report = cli.run_config(*_load(cfg))
        body = report["results"]["perp_robustness"]
        assert body["perfect_identical_to_prediction"] == 3
        assert body["mean_regret"]["perfect"]["perp"] == pytest.approx(0.0, abs=1e-12)
        assert body["offset_regret_ratio_perp_vs_fixed"] > 0


class TestRealDataRunner:
    def _make_data(self, tmp_path):
        rng = np.random.default_rng(0)
        n, test_len = 140, 40
        demand = 50 + 10 * np.sin(np.arange(n) / 7.0) + rng.normal(0, 3, n)
        preds = demand + rng.normal(0, 2, n)  # decent external forecasts
        _write(
            tmp_path / "demand.csv",
            "t,value\n" + "".join(f"{i},{float(demand[i])!r}\n" for i in range(n)),
        )
        _write(
            tmp_path / "pred_test.csv",
            "t,prediction\n" + "".join(f"{i},{float(preds[i])!r}\n" for i in range(n - test_len, n)),
        )
        _write(
            tmp_path / "pred_train.csv",
            "t,prediction\n" + "".join(f"{i},{float(preds[i])!r}\n" for i in range(n - test_len)),
        )
        return test_len

    def test_pipeline(self, tmp_path):
        test_len = self._make_data(tmp_path)
        cfg_text = f"""
schema = 1
[experiment]
type = "realdata"
[instances]
demand_csv = "{tmp_path}/demand.csv"
prediction_csv = "{tmp_path}/pred_test.csv"
train_prediction_csv = "{tmp_path}/pred_train.csv"
test_len = {test_len}
critical_quantile = 0.6
[run]
seeds = 1
master_seed = 0
"""
        cfg = _write(tmp_path / "cfg.toml", cfg_text)
        report = cli.run_config(*_load(cfg))
        body = report["results"]["realdata"]
        assert body["cost_prediction"] > 0
        assert body["cost_shrinking"] > 0
        assert not body["gap_undefined"]
        assert body["expected_cost_columns_are_proxy"] is True

    def test_prediction_row_count_checked(self, tmp_path):
        test_len = self._make_data(tmp_path)
        cfg_text = f"""
schema = 1
[experiment]
type = "realdata"
[instances]
demand_csv = "{tmp_path}/demand.csv"
prediction_csv = "{tmp_path}/pred_test.csv"
train_prediction_csv = "{tmp_path}/pred_train.csv"
test_len = {test_len + 1}
[run]
seeds = 1
"""
        cfg = _write(tmp_path / "cfg.toml", cfg_text)
        assert cli.main(["run", "--config", cfg]) == 2


class TestUtilityCommands:
    def test_variation_trend(self, tmp_path, capsys):
        path = _write(tmp_path / "v.csv", "t,value\n1,1\n2,2\n3,3\n4,4\n5,5\n")
        assert cli.main(["variation", path, "--theta", "2"]) == 0
        out = capsys.readouterr().out
        assert "16.0" in out

    def test_variation_single_row(self, tmp_path, capsys):
        path = _write(tmp_path / "v.csv", "t,value\n1,42\n")
        assert cli.main(["variation", path]) == 0
        out = capsys.readouterr().out
        assert "0.0" in out and "n/a" in out

    def test_variation_theta_one(self, tmp_path, capsys):
        path = _write(tmp_path / "v.csv", "t,value\n1,1\n2,0\n3,1\n4,0\n5,1\n")
        assert cli.main(["variation", path, "--theta", "1"]) == 0
        assert "4.0" in capsys.readouterr().out

    def test_gap_values(self, capsys):
        assert cli.main(["gap", "23899", "35600", "23460"]) == 0
        assert "0.0361" in capsys.readouterr().out
        assert cli.main(["gap", "10", "7", "7"]) == 0
        assert "undefined" in capsys.readouterr().out
        assert cli.main(["gap", "5", "20", "30"]) == 0
        assert "-1.5" in capsys.readouterr().out  # below both baselines, printed as-is

    def test_lowerbound_command(self, capsys):
        assert cli.main(["lowerbound", "--v", "0.5", "--a", "0.5", "--T", "4096"]) == 0
        out = capsys.readouterr().out
        assert "case: 2" in out

    def test_hw_forecast_roundtrip(self, tmp_path, capsys):
        rows = "".join(f"{i},{80 + (i % 5)}\n" for i in range(15))
        path = _write(tmp_path / "h.csv", "t,value\n" + rows)
        out_csv = tmp_path / "fc.csv"
        rc = cli.main(
            [
                "hw-forecast",
                path,
                "--alpha",
                "0.5",
                "--beta",
                "0.4",
                "--gamma-s",
                "0.3",
                "--season-length",
                "5",
                "--horizon",
                "7",
                "--out",
                str(out_csv),
            ]
        )
        assert rc == 0
        series = load_timeseries(out_csv)
        assert len(series) == 7
        assert all(math.isfinite(v) for _, v in series)


class TestPresets:
    def test_all_presets_parse_and_name_known_types(self):
        try:
            import tomllib
        except ModuleNotFoundError:
            import tomli as tomllib
        for name in cli.PRESETS:
            raw = cli.preset_path(name).read_bytes()
            cfg = tomllib.loads(raw.decode())
            assert cfg["experiment"]["type"] in cli._RUNNERS
            assert "run" in cfg

    def test_unknown_preset_rejected(self):
        with pytest.raises(cli.ConfigError):
            cli.preset_path("missing")
