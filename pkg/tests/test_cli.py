"""End-to-end CLI tests: each subcommand runs against the in-process app
and writes its JSON and CSV artifacts."""

import csv
import json

import numpy as np
import pytest

from dpgp.cli import main


def write_config(tmp_path, payload, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(payload))
    return str(path)


def write_data_csv(tmp_path, n=60, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.uniform(0.0, 4.0, size=n)
    y = np.clip(0.4 * np.sin(1.5 * X) + 5.0 + rng.normal(0.0, 0.05, n), 4.5, 5.5)
    path = tmp_path / "data.csv"
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["x", "height"])
        for a, b in zip(X, y):
            writer.writerow([repr(float(a)), repr(float(b))])
    return str(path)


def base_config(tmp_path, **extra):
    config = {
        "data": {
            "csv": write_data_csv(tmp_path),
            "input_columns": ["x"],
            "output_column": "height",
            "clip": {"low": 4.5, "high": 5.5},
        },
        "label": "cli-test",
    }
    config.update(extra)
    return config


KERNEL = {"variance": 0.1, "lengthscales": [1.0], "noise_variance": 0.01}


def read_csv(path):
    with open(path, newline="") as handle:
        return list(csv.reader(handle))


class TestIngestCommand:
    def test_writes_report(self, tmp_path, capsys):
        config = write_config(tmp_path, base_config(tmp_path))
        out = tmp_path / "out"
        main(["ingest", "--config", config, "--out", str(out)])
        report = json.loads((out / "ingest.json").read_text())
        assert report["n_used"] == 60
        assert report["d"] == 1.0
        assert "ingested 60 rows" in capsys.readouterr().out

    def test_inline_data_block(self, tmp_path):
        config = write_config(
            tmp_path,
            {
                "data": {
                    "inline": {"x": [0.0, 1.0, 2.0], "y": [4.8, 5.0, 5.2]},
                    "clip": {"low": 4.5, "high": 5.5},
                }
            },
        )
        out = tmp_path / "out"
        main(["ingest", "--config", config, "--out", str(out)])
        report = json.loads((out / "ingest.json").read_text())
        assert report["n_used"] == 3

    def test_missing_data_block_exits(self, tmp_path):
        config = write_config(tmp_path, {"label": "nothing"})
        with pytest.raises(SystemExit, match="data"):
            main(["ingest", "--config", config, "--out", str(tmp_path)])


class TestFitCommand:
    def test_writes_summary(self, tmp_path):
        config = write_config(tmp_path, base_config(tmp_path, kernel=KERNEL))
        out = tmp_path / "out"
        main(["fit", "--config", config, "--out", str(out)])
        report = json.loads((out / "fit.json").read_text())
        assert report["n"] == 60
        assert report["train_rmse"] < 0.2


class TestReleaseCommand:
    def test_writes_report_and_predictions(self, tmp_path):
        config = write_config(
            tmp_path,
            base_config(
                tmp_path,
                mechanism="cloaking",
                epsilon=1.0,
                delta=0.01,
                kernel=KERNEL,
                test_grid={"low": [0.0], "high": [4.0], "num": [9]},
                seed=3,
            ),
        )
        out = tmp_path / "out"
        main(["release", "--config", config, "--out", str(out)])
        report = json.loads((out / "release.json").read_text())
        assert len(report["values"]) == 9
        rows = read_csv(out / "predictions.csv")
        assert rows[0] == [
            "x0",
            "released",
            "reference_mean",
            "posterior_std",
            "dp_noise_std",
        ]
        assert len(rows) == 10
        np.testing.assert_allclose(float(rows[1][0]), 0.0)
        np.testing.assert_allclose(float(rows[-1][0]), 4.0)

    def test_explicit_test_inputs(self, tmp_path):
        config = write_config(
            tmp_path,
            base_config(
                tmp_path,
                mechanism="cloaking",
                epsilon=1.0,
                delta=0.01,
                kernel=KERNEL,
                test_inputs=[[0.5], [2.5]],
            ),
        )
        out = tmp_path / "out"
        main(["release", "--config", config, "--out", str(out)])
        assert len(read_csv(out / "predictions.csv")) == 3

    def test_seed_override_changes_noise(self, tmp_path):
        config = write_config(
            tmp_path,
            base_config(
                tmp_path,
                mechanism="cloaking",
                epsilon=1.0,
                delta=0.01,
                kernel=KERNEL,
                test_inputs=[[1.0]],
                seed=1,
            ),
        )
        values = []
        for seed, sub in ((1, "a"), (2, "b")):
            out = tmp_path / sub
            main(["release", "--config", config, "--out", str(out), "--seed", str(seed)])
            values.append(json.loads((out / "release.json").read_text())["values"][0])
        assert values[0] != values[1]

    def test_not_private_warning_on_stderr(self, tmp_path, capsys):
        config = write_config(
            tmp_path,
            base_config(
                tmp_path,
                mechanism="cloaking",
                epsilon=1.0,
                delta=0.01,
                kernel=KERNEL,
                test_inputs=[[1.0]],
                noise_multiplier=0.0,
            ),
        )
        main(["release", "--config", config, "--out", str(tmp_path / "out")])
        assert "NOT PRIVATE" in capsys.readouterr().err

    def test_service_error_becomes_exit(self, tmp_path):
        config = write_config(
            tmp_path,
            base_config(
                tmp_path,
                mechanism="cloaking",
                epsilon=1.0,
                delta=0.01,
                test_inputs=[[1.0]],
            ),
        )
        with pytest.raises(SystemExit, match="kernel or a grid"):
            main(["release", "--config", config, "--out", str(tmp_path / "out")])


class TestHpselectCommand:
    def test_writes_candidate_table_and_probe(self, tmp_path):
        grid = {
            "candidates": [
                {"variance": 0.1, "lengthscales": [0.7], "noise_variance": 0.01},
                {"variance": 0.1, "lengthscales": [1.4], "noise_variance": 0.01},
            ],
            "folds": 3,
            "select_epsilon": 1.0,
        }
        config = write_config(
            tmp_path,
            base_config(tmp_path, grid=grid, probe_epsilons=[0.1, 1.0], seed=5),
        )
        out = tmp_path / "out"
        main(["hpselect", "--config", config, "--out", str(out)])
        report = json.loads((out / "hpselect.json").read_text())
        assert report["chosen_index"] in (0, 1)
        table = read_csv(out / "candidates.csv")
        assert len(table) == 3
        assert table[0][-1] == "chosen"
        probe = read_csv(out / "selection_probabilities.csv")
        assert probe[0] == ["epsilon", "candidate_index", "probability"]
        assert len(probe) == 5


class TestBenchCommand:
    def test_writes_report_and_fold_table(self, tmp_path, capsys):
        config = write_config(
            tmp_path,
            base_config(
                tmp_path,
                mechanism="cloaking",
                epsilon=1.0,
                delta=0.01,
                kernel=KERNEL,
                n_folds=3,
                seed=7,
            ),
        )
        out = tmp_path / "out"
        main(["bench", "--config", config, "--out", str(out)])
        report = json.loads((out / "bench.json").read_text())
        assert report["n_folds"] == 3
        assert report["rmse_mean"] > 0
        table = read_csv(out / "fold_rmse.csv")
        assert table[0] == ["fold", "rmse", "error"]
        assert len(table) == 4
        assert "bench cloaking" in capsys.readouterr().out

    def test_binning_bench(self, tmp_path):
        config = write_config(
            tmp_path,
            base_config(
                tmp_path,
                mechanism="simple_binning",
                epsilon=1.0,
                delta=0.01,
                bins={"counts": [6]},
                n_folds=2,
            ),
        )
        out = tmp_path / "out"
        main(["bench", "--config", config, "--out", str(out)])
        report = json.loads((out / "bench.json").read_text())
        assert report["mechanism"] == "simple_binning"


class TestParser:
    def test_unknown_command_rejected(self):
        with pytest.raises(SystemExit):
            main(["frobnicate"])

    def test_config_flag_required(self):
        with pytest.raises(SystemExit):
            main(["release"])
