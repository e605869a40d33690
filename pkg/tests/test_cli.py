"""CLI: ingestion, command pipelines, exit codes, reproducibility."""

import csv
import json
from pathlib import Path

import numpy as np
import pytest

from odcfmsv import cli
from odcfmsv.errors import DataError
from odcfmsv.gibbs import ChainDraws


def write(path: Path, text: str) -> str:
    path.write_text(text)
    return str(path)


@pytest.fixture(scope="module")
def sim_dir(tmp_path_factory):
    """One small simulated dataset shared by the pipeline tests."""
    out = tmp_path_factory.mktemp("sim")
    rc = cli.main([
        "simulate", "--preset", "paper-3.1", "--seed", "7",
        "--n-obs", "48", "--out", str(out),
    ])
    assert rc == 0
    return out


class TestIngestCsv:
    def test_plain_numeric(self, tmp_path):
        p = write(tmp_path / "a.csv", "x,y\n1,2\n3,4\n5,6\n")
        got = cli.ingest_csv(p)
        np.testing.assert_allclose(got.values, [[1, 2], [3, 4], [5, 6]])
        assert got.names == ["x", "y"]

    def test_percent_rescale(self, tmp_path):
        p = write(tmp_path / "a.csv", "x\n1.25\n")
        got = cli.ingest_csv(p, rescale=True)
        assert got.values[0, 0] == pytest.approx(0.0125, abs=1e-15)

    def test_ragged_row_cites_line(self, tmp_path):
        p = write(tmp_path / "a.csv", "x,y\n1,2\n3\n")
        with pytest.raises(DataError, match="line 3"):
            cli.ingest_csv(p)

    def test_non_numeric_cites_coordinates(self, tmp_path):
        p = write(tmp_path / "a.csv", "x,y\n1,2\n3,oops\n")
        with pytest.raises(DataError, match=r"line 3, column 2 \(y\)"):
            cli.ingest_csv(p)

    def test_empty_file(self, tmp_path):
        p = write(tmp_path / "a.csv", "")
        with pytest.raises(DataError, match="empty file"):
            cli.ingest_csv(p)

    def test_header_only(self, tmp_path):
        p = write(tmp_path / "a.csv", "x,y\n")
        with pytest.raises(DataError, match="no data rows"):
            cli.ingest_csv(p)

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError, match="does not exist"):
            cli.ingest_csv(tmp_path / "nope.csv")


class TestSimulate(object):
    def test_outputs_and_truth(self, sim_dir):
        Y = cli.ingest_csv(sim_dir / "Y.csv")
        F = cli.ingest_csv(sim_dir / "F.csv")
        assert Y.values.shape == (48, 10)
        assert F.values.shape == (48, 2)
        truth = json.loads((sim_dir / "truth.json").read_text())
        assert truth["d"] == 0.8 and truth["k"] == 25.0
        B = np.asarray(truth["B"])
        assert B.shape == (10, 2)
        assert B[0, 0] == 1.0 and B[3, 0] == 0.99
        paths = np.load(sim_dir / truth["paths_file"])
        assert paths["sigma_eps"].shape == (48, 2, 2)
        assert paths["var_true"].shape == (48,)

    def test_unknown_preset_is_usage_error(self, tmp_path, capsys):
        rc = cli.main(["simulate", "--preset", "nope", "--out", str(tmp_path)])
        assert rc == 1


@pytest.fixture(scope="module")
def fit_dir(sim_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("fit")
    rc = cli.main([
        "fit", "--returns", str(sim_dir / "Y.csv"),
        "--factors", str(sim_dir / "F.csv"),
        "--truth", str(sim_dir / "truth.json"),
        "--burn-in", "12", "--kept", "16", "--seed", "3",
        "--out", str(out),
    ])
    assert rc == 0
    return out


class TestFitPredictPipeline:
    def test_summary_schema(self, fit_dir):
        with open(fit_dir / "summary.csv") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["parameter", "name", "true", "mean", "lower", "upper"]
        # 20 loadings + 10 variances + 2+2+2 SV + 3 A entries + d + k
        assert len(rows) - 1 == 41
        by_name = {r[1]: r for r in rows[1:]}
        assert by_name["B[1,1]"][2] == "1"
        assert by_name["d"][0] == "d"
        for r in rows[1:]:
            assert float(r[4]) <= float(r[3]) <= float(r[5])

    def test_performance_and_paths_written(self, fit_dir):
        text = (fit_dir / "performance.txt").read_text()
        assert "mae_rho" in text and "mae_var_smooth" in text
        with open(fit_dir / "rho_path.csv") as fh:
            header = fh.readline().strip().split(",")
        assert header == ["t", "rho_true", "rho_est"]

    def test_predict_reuses_checkpoint(self, sim_dir, fit_dir, tmp_path):
        ckpt = fit_dir / "draws_odcfmsv.npz"
        draws = ChainDraws.load(ckpt)
        assert draws.n_draws == 16
        out = tmp_path / "pred"
        rc = cli.main([
            "predict", "--returns", str(sim_dir / "Y.csv"),
            "--factors", str(sim_dir / "F.csv"),
            "--checkpoint", str(ckpt), "--seed", "9", "--out", str(out),
        ])
        assert rc == 0
        text = (out / "forecast.txt").read_text()
        assert "record index=48" in text
        assert np.load(out / "sigma_pred.npy").shape == (1, 10, 10)

    def test_fit_without_returns_is_usage_error(self, tmp_path):
        rc = cli.main(["fit", "--out", str(tmp_path)])
        assert rc == 1


class TestBacktest:
    def test_two_model_table(self, sim_dir, tmp_path):
        out = tmp_path / "bt"
        rc = cli.main([
            "backtest", "--returns", str(sim_dir / "Y.csv"),
            "--factors", str(sim_dir / "F.csv"),
            "--models", "odcfmsv,pg", "--start", "45", "--periods", "2",
            "--burn-in", "8", "--kept", "10", "--seed", "4",
            "--out", str(out),
        ])
        assert rc == 0
        with open(out / "backtest.csv") as fh:
            rows = list(csv.reader(fh))
        assert rows[0][0] == "index"
        assert rows[-1][0] == "cumulative"
        diffs = [float(r[7]) for r in rows[1:-1]]
        assert float(rows[-1][7]) == pytest.approx(sum(diffs), abs=1e-4)
        report = (out / "backtest_odcfmsv.txt").read_text()
        assert "cum_log_bf=" in report and "baseline=pg" in report

    def test_too_many_models(self, sim_dir, tmp_path):
        rc = cli.main([
            "backtest", "--returns", str(sim_dir / "Y.csv"),
            "--factors", str(sim_dir / "F.csv"),
            "--models", "odcfmsv,pg,sverr", "--periods", "1",
            "--out", str(tmp_path / "x"),
        ])
        assert rc == 1

    def test_window_past_end_is_data_error(self, sim_dir, tmp_path):
        rc = cli.main([
            "backtest", "--returns", str(sim_dir / "Y.csv"),
            "--factors", str(sim_dir / "F.csv"),
            "--start", "47", "--periods", "5", "--burn-in", "4",
            "--kept", "4", "--out", str(tmp_path / "x"),
        ])
        assert rc == 2


class TestEvalcorr:
    def test_csv_with_named_pairs(self, sim_dir, tmp_path):
        out = tmp_path / "ec"
        rc = cli.main([
            "evalcorr", "--factors", str(sim_dir / "F.csv"),
            "--radius", "5", "--out", str(out),
        ])
        assert rc == 0
        with open(out / "evalcorr.csv") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["t", "corr(f1,f2)"]
        assert len(rows) - 1 == 48
        vals = np.array([float(r[1]) for r in rows[1:]])
        assert np.all(np.abs(vals) <= 1.0)

    def test_radius_too_small(self, sim_dir, tmp_path):
        rc = cli.main([
            "evalcorr", "--factors", str(sim_dir / "F.csv"),
            "--radius", "0", "--out", str(tmp_path / "x"),
        ])
        assert rc == 1


class TestConfigFile:
    def test_nested_config_with_flag_override(self, sim_dir, tmp_path):
        cfgfile = write(tmp_path / "run.yaml", "\n".join([
            f"returns: {sim_dir / 'Y.csv'}",
            f"factors: {sim_dir / 'F.csv'}",
            "seed: 3",
            "mcmc:",
            "  burn_in: 6",
            "  kept: 30",
            "priors:",
            "  k_rate: 0.05",
        ]))
        out = tmp_path / "fitcfg"
        rc = cli.main([
            "fit", "--config", cfgfile, "--kept", "9", "--out", str(out),
        ])
        assert rc == 0
        draws = ChainDraws.load(out / "draws_odcfmsv.npz")
        assert draws.n_draws == 9  # flag overrides the file value

    def test_unknown_config_key(self, tmp_path):
        cfgfile = write(tmp_path / "run.yaml", "bogus_key: 1\n")
        rc = cli.main(["fit", "--config", cfgfile, "--out", str(tmp_path / "x")])
        assert rc == 1

    def test_unknown_prior_key(self, tmp_path, sim_dir):
        cfgfile = write(tmp_path / "run.yaml", "\n".join([
            f"returns: {sim_dir / 'Y.csv'}",
            f"factors: {sim_dir / 'F.csv'}",
            "priors:",
            "  nonsense: 2",
        ]))
        rc = cli.main(["fit", "--config", cfgfile, "--out", str(tmp_path / "x")])
        assert rc == 1


class TestWeights:
    def test_weights_file(self, sim_dir, tmp_path):
        w = np.zeros(10)
        w[0] = 1.0
        wfile = write(
            tmp_path / "w.csv", "w\n" + "\n".join(str(x) for x in w) + "\n"
        )
        out = tmp_path / "fitw"
        rc = cli.main([
            "fit", "--returns", str(sim_dir / "Y.csv"),
            "--factors", str(sim_dir / "F.csv"),
            "--weights", wfile, "--burn-in", "4", "--kept", "5",
            "--seed", "1", "--out", str(out),
        ])
        assert rc == 0
        draws = ChainDraws.load(out / "draws_odcfmsv.npz")
        np.testing.assert_allclose(draws.weights, w)

    def test_wrong_length_weights(self, sim_dir, tmp_path):
        wfile = write(tmp_path / "w.csv", "w\n0.5\n0.5\n")
        rc = cli.main([
            "fit", "--returns", str(sim_dir / "Y.csv"),
            "--factors", str(sim_dir / "F.csv"),
            "--weights", wfile, "--out", str(tmp_path / "x"),
        ])
        assert rc == 2


class TestExitCodes:
    def test_unknown_command(self):
        assert cli.main(["frobnicate"]) == 1

    def test_unknown_flag(self):
        assert cli.main(["simulate", "--bogus"]) == 1

    def test_help_is_success(self):
        assert cli.main(["--help"]) == 0

    def test_bad_variant(self):
        assert cli.main(["fit", "--variant", "bogus"]) == 1


class TestDeterminism:
    def _files(self, d: Path):
        return sorted(
            f.name for f in d.iterdir() if f.name != "run_meta.json"
        )

    def _assert_identical(self, a: Path, b: Path):
        assert self._files(a) == self._files(b)
        for name in self._files(a):
            assert (a / name).read_bytes() == (b / name).read_bytes(), name

    def test_simulate_byte_identical(self, tmp_path):
        dirs = []
        for tag in ("a", "b"):
            out = tmp_path / tag
            rc = cli.main([
                "simulate", "--preset", "paper-3.1", "--seed", "11",
                "--n-obs", "30", "--out", str(out),
            ])
            assert rc == 0
            dirs.append(out)
        self._assert_identical(*dirs)

    def test_fit_byte_identical(self, sim_dir, tmp_path):
        dirs = []
        for tag in ("a", "b"):
            out = tmp_path / tag
            rc = cli.main([
                "fit", "--returns", str(sim_dir / "Y.csv"),
                "--factors", str(sim_dir / "F.csv"),
                "--burn-in", "5", "--kept", "6", "--seed", "2",
                "--out", str(out),
            ])
            assert rc == 0
            dirs.append(out)
        self._assert_identical(*dirs)
