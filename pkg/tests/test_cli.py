import csv

import numpy as np
import pytest

from modelgate.cli import (
    ConfigError,
    bound_curves,
    ingest,
    load_config,
    main,
    run,
    save_manifest,
)
from modelgate.sim import GRID4, GRID12, ScenarioKind

SMALL_CONFIG = """\
[run]
scenario = small_frequent_shifts
horizon = 8
batch_size = 40
eval_size = 1500
replicates = 2
seed = 99
out = {out}

[strategies]
rows = 0,0,0 / 0.5,10000,0 / 0.3,0,1.5

[meta]
rate_mode = fixed
rate = 1.5
"""


def write_config(tmp_path, text=None, name="run.ini"):
    path = tmp_path / name
    path.write_text(text if text is not None else SMALL_CONFIG.format(out=tmp_path / "out"))
    return path


class TestLoadConfig:
    def test_minimal_config_applies_documented_defaults(self, tmp_path):
        path = write_config(tmp_path, "[run]\nscenario = iid_good_models\n")
        cfg = load_config(path)
        assert cfg.scenario is ScenarioKind.IID_GOOD_MODELS
        assert cfg.horizon == 50
        assert cfg.batch_size == 75
        assert cfg.bound_alpha == 0.1
        assert cfg.bound_window == 3
        assert cfg.replicates == 15
        assert cfg.margin_mult == 0.6 and cfg.step_margin_mult == 0.2
        assert cfg.rows == GRID12

    def test_preset_grid12_is_the_published_table(self, tmp_path):
        path = write_config(tmp_path, "[run]\nscenario = iid_good_models\n[strategies]\npreset = grid12\n")
        cfg = load_config(path)
        assert cfg.rows == GRID12
        assert len(GRID12) == 12
        assert GRID12[0] == (0.0, 0.0, 0.0)
        assert GRID12[2] == (0.5, 10000.0, 0.0)
        assert GRID12[3] == (0.3, 0.0, 10.0)
        assert GRID12[-1] == (0.8, 100.0, 10.0)
        assert len(GRID4) == 4 and GRID4[-1] == (0.3, 0.0, 1.5)

    def test_explicit_rows_override_preset(self, tmp_path):
        path = write_config(
            tmp_path,
            "[run]\nscenario = iid_good_models\n[strategies]\nrows = 0,0,0 / 0.4,2,1\n",
        )
        cfg = load_config(path)
        assert cfg.rows == ((0.0, 0.0, 0.0), (0.4, 2.0, 1.0))
        assert cfg.preset == "custom"

    def test_row_zero_must_be_fail_safe(self, tmp_path):
        path = write_config(
            tmp_path, "[run]\nscenario = iid_good_models\n[strategies]\nrows = 0.4,2,1\n"
        )
        with pytest.raises(ConfigError):
            load_config(path)

    def test_unknown_key_rejected(self, tmp_path):
        path = write_config(tmp_path, "[run]\nscenario = iid_good_models\nbananas = 3\n")
        with pytest.raises(ConfigError, match="bananas"):
            load_config(path)

    def test_unknown_section_rejected(self, tmp_path):
        path = write_config(tmp_path, "[run]\nscenario = iid_good_models\n[extra]\nx = 1\n")
        with pytest.raises(ConfigError, match="extra"):
            load_config(path)

    def test_negative_batch_size_rejected(self, tmp_path):
        path = write_config(tmp_path, "[run]\nscenario = iid_good_models\nbatch_size = -5\n")
        with pytest.raises(ConfigError, match="batch_size"):
            load_config(path)

    def test_missing_scenario_rejected(self, tmp_path):
        path = write_config(tmp_path, "[run]\nhorizon = 5\n")
        with pytest.raises(ConfigError, match="scenario"):
            load_config(path)

    def test_ingested_requires_data_path(self, tmp_path):
        path = write_config(tmp_path, "[run]\nscenario = ingested\n")
        with pytest.raises(ConfigError, match="data.path"):
            load_config(path)

    def test_manifest_round_trip(self, tmp_path):
        cfg = load_config(write_config(tmp_path))
        manifest = tmp_path / "manifest.ini"
        save_manifest(cfg, manifest, ["note: test"])
        again = load_config(manifest)
        assert again == cfg


class TestRun:
    def test_outputs_and_determinism(self, tmp_path):
        cfg = load_config(write_config(tmp_path))
        result = run(cfg)
        steps = result["steps"].read_bytes()
        summary = result["summary"].read_bytes()
        manifest = result["manifest"]

        # re-running from the manifest reproduces byte-identical CSVs
        rerun_cfg = load_config(manifest)
        import dataclasses
        rerun_cfg = dataclasses.replace(rerun_cfg, out=str(tmp_path / "out2"))
        result2 = run(rerun_cfg)
        assert result2["steps"].read_bytes() == steps
        assert result2["summary"].read_bytes() == summary

    def test_csv_row_count_and_summary_consistency(self, tmp_path):
        cfg = load_config(write_config(tmp_path))
        result = run(cfg)
        with open(result["steps"]) as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == cfg.replicates * cfg.horizon

        # summary means equal the recomputed means from the per-step file
        by_t = {}
        for row in rows:
            by_t.setdefault(int(row["t"]), []).append(float(row["cum_avg_risk"]))
        with open(result["summary"]) as fh:
            for srow in csv.DictReader(fh):
                t = int(srow["t"])
                assert float(srow["mean_cum_risk"]) == pytest.approx(
                    np.mean(by_t[t]), abs=1e-12
                )

    def test_weight_columns_form_simplex(self, tmp_path):
        cfg = load_config(write_config(tmp_path))
        result = run(cfg)
        with open(result["steps"]) as fh:
            for row in csv.DictReader(fh):
                w = [float(row[f"w{j}"]) for j in range(3)]
                assert sum(w) == pytest.approx(1.0, abs=1e-9)


class TestBoundCurves:
    def test_classical_anchor_row(self):
        rows = bound_curves([0.15], rate_min=0.70, rate_max=0.70, points=1)
        _, rate, classical, ours = rows[0]
        assert rate == 0.70
        assert classical == pytest.approx(0.300, abs=0.005)
        assert ours <= classical

    def test_drift_aware_below_classical_everywhere(self):
        rows = bound_curves([0.15], rate_min=0.1, rate_max=3.0, points=30)
        for _, _, classical, ours in rows:
            assert ours <= classical + 1e-12

    def test_curves_rise_past_their_minima(self):
        rows = bound_curves([0.15], rate_min=0.1, rate_max=8.0, points=60)
        classical = [r[2] for r in rows]
        ours = [r[3] for r in rows]
        for series in (classical, ours):
            k = int(np.argmin(series))
            assert series[-1] > series[k]
            assert all(series[i] <= series[i + 1] + 1e-12 for i in range(k, len(series) - 1))


def toy_csv(tmp_path, rows, header="timestamp,x1,x2,label"):
    path = tmp_path / "data.csv"
    path.write_text("\n".join([header] + rows) + "\n")
    return path


class TestIngest:
    def test_three_rows_batch_size_one(self, tmp_path):
        path = toy_csv(tmp_path, ["1,0.5,1.0,1", "2,0.25,-1.0,0", "3,0.1,0.2,1"])
        stream = ingest(path, "count", 1)
        assert len(stream.batches) == 3
        assert stream.sizes == (1, 1, 1)
        assert stream.feature_names == ("x1", "x2")
        # {0,1} labels mapped to signed form
        assert sorted({float(b.labels[0]) for b in stream.batches}) == [-1.0, 1.0]

    def test_monthly_batching_twelve_months(self, tmp_path):
        rows = [f"2021-{m:02d}-15,1.0,2.0,1" for m in range(1, 13) for _ in range(3)]
        stream = ingest(toy_csv(tmp_path, rows), "month")
        assert len(stream.batches) == 12
        assert stream.sizes == (3,) * 12

    def test_duplicate_timestamps_allowed(self, tmp_path):
        rows = ["2021-01-01,1,2,1", "2021-01-01,3,4,0", "2021-02-01,5,6,1"]
        stream = ingest(toy_csv(tmp_path, rows), "month")
        assert stream.sizes == (2, 1)

    def test_unsorted_rows_sorted_unless_strict(self, tmp_path):
        rows = ["3,1,2,1", "1,3,4,0", "2,5,6,1"]
        stream = ingest(toy_csv(tmp_path, rows), "count", 3)
        assert stream.batches[0].features[0, 0] == 3.0  # row with timestamp 1
        with pytest.raises(ConfigError, match="sorted"):
            ingest(toy_csv(tmp_path, rows), "count", 3, strict_sorted=True)

    def test_non_numeric_feature_rejected(self, tmp_path):
        path = toy_csv(tmp_path, ["1,oops,2,1"])
        with pytest.raises(ConfigError, match="non-numeric"):
            ingest(path)

    def test_missing_column_rejected(self, tmp_path):
        path = toy_csv(tmp_path, ["1,2,3"], header="timestamp,x1,x2")
        with pytest.raises(ConfigError, match="label"):
            ingest(path)

    def test_monthly_needs_dates(self, tmp_path):
        path = toy_csv(tmp_path, ["1,2,3,1"])
        with pytest.raises(ConfigError, match="date"):
            ingest(path, "month")


class TestMainExitCodes:
    def test_run_success(self, tmp_path, capsys):
        config = write_config(tmp_path)
        assert main(["run", str(config)]) == 0
        out = capsys.readouterr().out
        assert "steps.csv" in out

    def test_config_error_is_exit_2(self, tmp_path, capsys):
        bad = write_config(tmp_path, "[run]\nscenario = nope\n")
        assert main(["run", str(bad)]) == 2

    def test_missing_file_is_exit_2(self, capsys):
        assert main(["run", "/nonexistent/config.ini"]) == 2

    def test_cli_overrides(self, tmp_path, capsys):
        config = write_config(tmp_path)
        out2 = tmp_path / "alt"
        assert main(["run", str(config), "--replicates", "1", "--out", str(out2)]) == 0
        with open(out2 / "steps.csv") as fh:
            assert len(list(csv.DictReader(fh))) == 8  # 1 replicate x 8 steps

    def test_bounds_subcommand(self, tmp_path, capsys):
        out = tmp_path / "curves.csv"
        assert main(["bounds", "--deltas", "0.15", "--points", "5", "--out", str(out)]) == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "abstain_cost,rate,classical_bound,drift_aware_bound"
        assert len(lines) == 6

    def test_ingest_check_subcommand(self, tmp_path, capsys):
        path = toy_csv(tmp_path, ["1,0.5,1.0,1", "2,0.25,-1.0,0"])
        assert main(["ingest-check", str(path), "--batch-size", "1"]) == 0
        assert "2 batches" in capsys.readouterr().out

    def test_ingest_check_bad_file_is_exit_2(self, tmp_path, capsys):
        path = toy_csv(tmp_path, ["1,oops,1,1"])
        assert main(["ingest-check", str(path)]) == 2


class TestIngestedRun:
    def test_ingested_scenario_end_to_end(self, tmp_path):
        rng = np.random.default_rng(0)
        rows = []
        ts = 0
        for _ in range(6 * 30):
            ts += 1
            x = rng.standard_normal(3)
            y = 1 if rng.random() < 0.5 + 0.4 * np.tanh(x[0]) else 0
            rows.append(f"{ts},{x[0]:.5f},{x[1]:.5f},{x[2]:.5f},{y}")
        data = toy_csv(tmp_path, rows, header="timestamp,a,b,c,label")
        config = write_config(
            tmp_path,
            f"""\
[run]
scenario = ingested
replicates = 1
seed = 3
out = {tmp_path / 'iout'}

[strategies]
rows = 0,0,0 / 0.5,10000,0 / 0.3,0,1.5

[meta]
rate_mode = fixed
rate = 1.5

[data]
path = {data}
batch_by = count
batch_size = 30
""",
            name="ingested.ini",
        )
        cfg = load_config(config)
        result = run(cfg)
        trace = result["traces"][0]
        assert trace.horizon == 5  # 6 batches: one initial + 5 monitoring
        assert np.all(trace.true_risk == trace.emp_risk)
        assert 0.0 < trace.abstain_cost < 1.0


class TestProcessIsolation:
    def test_two_processes_produce_identical_outputs(self, tmp_path):
        import subprocess
        import sys

        config = write_config(tmp_path)
        outs = []
        for sub in ("p1", "p2"):
            out_dir = tmp_path / sub
            code = subprocess.run(
                [sys.executable, "-m", "modelgate.cli", "run", str(config), "--out", str(out_dir)],
                capture_output=True,
            ).returncode
            assert code == 0
            outs.append((out_dir / "steps.csv").read_bytes())
        assert outs[0] == outs[1]

    def test_worker_pool_matches_serial(self, tmp_path):
        config = write_config(tmp_path)
        cfg = load_config(config)
        import dataclasses
        serial = run(dataclasses.replace(cfg, out=str(tmp_path / "serial"), threads=1))
        pooled = run(dataclasses.replace(cfg, out=str(tmp_path / "pooled"), threads=2))
        assert serial["steps"].read_bytes() == pooled["steps"].read_bytes()
