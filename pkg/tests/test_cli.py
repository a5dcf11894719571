import json
import subprocess
import sys

import numpy as np
import pytest

from rqamon.cli import run
from rqamon.pca import load_model
from rqamon.rqa import read_features_csv
from rqamon.timeseries import load_csv, save_csv
from rqamon.usage_map import load_map

RQA_FLAGS = ["--window", "60", "--step", "30"]


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """Run the full command chain once at reduced size; tests inspect it."""
    root = tmp_path_factory.mktemp("cli")
    lib = root / "lib"
    model = root / "model.json"
    usage = root / "map.json"
    policy = root / "policy.json"

    assert run(["synth", "--out", str(lib), "--days", "8", "--seed", "3"]) == 0
    assert run(["fit", "--library", str(lib), "--out", str(model), *RQA_FLAGS]) == 0
    assert (
        run(
            [
                "map",
                "--library",
                str(lib),
                "--model",
                str(model),
                "--out",
                str(usage),
                "--cells",
                "30",
            ]
        )
        == 0
    )
    assert (
        run(
            [
                "calibrate",
                "--library",
                str(lib),
                "--model",
                str(model),
                "--map",
                str(usage),
                "--devices",
                "cleaner,dryer,iron,table_press",
                "--quantile",
                "0.9",
                "--runs",
                "12",
                "--seed",
                "4",
                "--out",
                str(policy),
            ]
        )
        == 0
    )
    return root


class TestSynth:
    def test_library_layout(self, workspace):
        lib = workspace / "lib"
        labels = sorted(p.name for p in lib.iterdir() if p.is_dir())
        assert labels == ["aggregate", "cleaner", "dryer", "iron", "table_press"]
        for label in labels:
            files = sorted((lib / label).glob("*.csv"))
            assert len(files) == 8

    def test_sundays_are_skipped(self, workspace):
        lib = workspace / "lib"
        from datetime import date

        for f in (lib / "cleaner").glob("*.csv"):
            assert date.fromisoformat(f.stem).weekday() != 6

    def test_aggregate_is_sum_of_devices(self, workspace):
        lib = workspace / "lib"
        name = sorted((lib / "aggregate").glob("*.csv"))[0].name
        total = load_csv(lib / "aggregate" / name)
        parts = [
            load_csv(lib / label / name)
            for label in ("cleaner", "dryer", "iron", "table_press")
        ]
        assert np.allclose(total.values, sum(p.values for p in parts), atol=1e-12)

    def test_manifest_written(self, workspace):
        manifest = json.loads((workspace / "lib" / "manifest.json").read_text())
        assert manifest["command"] == "synth"
        assert manifest["seed"] == 3
        assert manifest["params"]["days"] == 8

    def test_synth_is_reproducible(self, tmp_path):
        a = tmp_path / "a"
        b = tmp_path / "b"
        for out in (a, b):
            assert run(["synth", "--out", str(out), "--days", "2", "--seed", "9"]) == 0
        for f in sorted(a.rglob("*.csv")):
            twin = b / f.relative_to(a)
            assert twin.read_text() == f.read_text()


class TestFitAndMap:
    def test_model_file(self, workspace):
        model = load_model(workspace / "model.json")
        assert model.device_labels == (
            "aggregate",
            "cleaner",
            "dryer",
            "iron",
            "table_press",
        )
        assert model.params.window == 60
        assert (workspace / "model.json.manifest.json").exists()

    def test_map_file(self, workspace):
        usage = load_map(workspace / "map.json")
        model = load_model(workspace / "model.json")
        assert usage.model_id == model.model_id
        assert usage.grid.cells_per_axis == 30
        assert sorted(usage.per_device_masks) == [
            "aggregate",
            "cleaner",
            "dryer",
            "iron",
            "table_press",
        ]

    def test_map_optional_exports(self, workspace, tmp_path):
        proj = tmp_path / "proj.csv"
        cells = tmp_path / "cells.csv"
        code = run(
            [
                "map",
                "--library",
                str(workspace / "lib"),
                "--model",
                str(workspace / "model.json"),
                "--out",
                str(tmp_path / "map.json"),
                "--cells",
                "30",
                "--projections-csv",
                str(proj),
                "--cells-csv",
                str(cells),
            ]
        )
        assert code == 0
        assert proj.read_text().splitlines()[0] == "c1,c2,label"
        assert cells.read_text().splitlines()[0] == "cell_c1,cell_c2,label"


class TestFeatures:
    def test_export(self, workspace, tmp_path):
        out = tmp_path / "features.csv"
        code = run(
            [
                "features",
                "--library",
                str(workspace / "lib"),
                "--out",
                str(out),
                *RQA_FLAGS,
            ]
        )
        assert code == 0
        cols = read_features_csv(out)
        assert sorted(cols) == [
            "aggregate",
            "cleaner",
            "dryer",
            "iron",
            "table_press",
        ]
        rows_per_day = (1440 - 60) // 30 + 1
        assert len(cols["cleaner"]["window_end"]) == 8 * rows_per_day


class TestCalibrate:
    def test_policy_file(self, workspace):
        policy = json.loads((workspace / "policy.json").read_text())
        assert policy["version"] == "policy-v1"
        assert policy["period"] == "daily"
        assert policy["runs"] == 12
        model = load_model(workspace / "model.json")
        assert policy["calibrated_on"]["model_id"] == model.model_id
        assert (workspace / "policy.json.manifest.json").exists()

    def test_counts_csv(self, workspace, tmp_path):
        counts = tmp_path / "counts.csv"
        code = run(
            [
                "calibrate",
                "--library",
                str(workspace / "lib"),
                "--model",
                str(workspace / "model.json"),
                "--map",
                str(workspace / "map.json"),
                "--devices",
                "cleaner,dryer,iron,table_press",
                "--runs",
                "6",
                "--seed",
                "1",
                "--out",
                str(tmp_path / "p.json"),
                "--counts-csv",
                str(counts),
            ]
        )
        assert code == 0
        lines = counts.read_text().splitlines()
        assert lines[0] == "run,crossings"
        assert len(lines) == 7


class TestSimulate:
    def test_counts_and_rate(self, workspace, tmp_path, capsys):
        out = tmp_path / "counts.csv"
        code = run(
            [
                "simulate",
                "--library",
                str(workspace / "lib"),
                "--model",
                str(workspace / "model.json"),
                "--map",
                str(workspace / "map.json"),
                "--devices",
                "cleaner,dryer,iron,table_press,iron",
                "--runs",
                "6",
                "--seed",
                "8",
                "--out",
                str(out),
                "--policy",
                str(workspace / "policy.json"),
            ]
        )
        assert code == 0
        summary = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
        assert 0.0 <= summary["alarm_rate"] <= 1.0
        assert summary["runs"] == 6
        assert len(out.read_text().splitlines()) == 7


class TestEvaluate:
    def test_normal_day(self, workspace, tmp_path, capsys):
        lib = workspace / "lib"
        day = sorted((lib / "aggregate").glob("*.csv"))[0]
        report_path = tmp_path / "report.json"
        code = run(
            [
                "evaluate",
                "--aggregate",
                str(day),
                "--model",
                str(workspace / "model.json"),
                "--map",
                str(workspace / "map.json"),
                "--policy",
                str(workspace / "policy.json"),
                "--report",
                str(report_path),
            ]
        )
        printed = json.loads(capsys.readouterr().out.strip())
        assert code in (0, 3)
        assert code == (3 if printed["triggered"] else 0)
        stored = json.loads(report_path.read_text())
        assert stored == printed
        assert (tmp_path / "report.json.manifest.json").exists()

    def test_anomalous_day_exits_3(self, workspace, tmp_path, capsys):
        from datetime import datetime

        from rqamon.timeseries import TimeSeries

        flicker = TimeSeries(
            datetime(2018, 1, 1), 1, np.tile([0.0, 50.0], 720), "aggregate"
        )
        day = tmp_path / "weird.csv"
        save_csv(flicker, day)
        code = run(
            [
                "evaluate",
                "--aggregate",
                str(day),
                "--model",
                str(workspace / "model.json"),
                "--map",
                str(workspace / "map.json"),
                "--policy",
                str(workspace / "policy.json"),
            ]
        )
        capsys.readouterr()
        assert code == 3


class TestIngest:
    def test_five_minute_csv(self, tmp_path, capsys):
        # Two days of 5-minute readings: the first interpolates to a full
        # day, the second ends at 23:55 and is dropped as incomplete.
        from datetime import datetime

        from rqamon.timeseries import TimeSeries

        rng = np.random.default_rng(6)
        coarse = TimeSeries(
            datetime(2018, 1, 1), 5, rng.uniform(0, 8, size=2 * 288), "cleaner"
        )
        raw = tmp_path / "raw.csv"
        save_csv(coarse, raw)

        out = tmp_path / "ingested"
        code = run(
            [
                "ingest",
                "--input",
                str(raw),
                "--label",
                "cleaner",
                "--out",
                str(out),
            ]
        )
        assert code == 0
        files = sorted((out / "cleaner").glob("*.csv"))
        assert len(files) == 1
        back = load_csv(files[0], "cleaner")
        assert len(back) == 1440
        assert back.step == 1
        assert np.array_equal(back.values[::5], coarse.values[:288])

    def test_closed_weekday_filter(self, tmp_path):
        from datetime import datetime

        from rqamon.timeseries import TimeSeries

        week = TimeSeries(
            datetime(2018, 1, 1), 1, np.ones(7 * 1440), "press"
        )
        raw = tmp_path / "raw.csv"
        save_csv(week, raw)
        out = tmp_path / "lib"
        code = run(
            [
                "ingest",
                "--input",
                str(raw),
                "--label",
                "press",
                "--out",
                str(out),
                "--closed-weekdays",
                "5,6",
            ]
        )
        assert code == 0
        assert len(list((out / "press").glob("*.csv"))) == 5


class TestExitCodes:
    def test_unknown_command(self, capsys):
        assert run(["frobnicate"]) == 1
        capsys.readouterr()

    def test_missing_required_flag(self, capsys):
        assert run(["fit"]) == 1
        capsys.readouterr()

    def test_missing_library_dir(self, tmp_path, capsys):
        code = run(
            [
                "fit",
                "--library",
                str(tmp_path / "nope"),
                "--out",
                str(tmp_path / "m.json"),
            ]
        )
        assert code == 2
        capsys.readouterr()

    def test_malformed_csv(self, tmp_path, capsys):
        bad = tmp_path / "bad.csv"
        bad.write_text("timestamp,amps\ngarbage,1.0\n")
        code = run(
            [
                "ingest",
                "--input",
                str(bad),
                "--label",
                "x",
                "--out",
                str(tmp_path / "lib"),
            ]
        )
        assert code == 2
        capsys.readouterr()

    def test_help_exits_zero(self, capsys):
        assert run(["--help"]) == 0
        capsys.readouterr()

    def test_version_exits_zero(self, capsys):
        assert run(["--version"]) == 0
        capsys.readouterr()


def test_console_script_runs():
    proc = subprocess.run(
        [sys.executable, "-m", "rqamon.cli", "--version"],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0
    assert "rqamon" in proc.stdout
