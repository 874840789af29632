import json

import numpy as np
import pytest

import rfconverge as rf
from rfconverge.cli import main


@pytest.fixture(scope="module")
def csv_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("csv")
    train = rf.generate_synthetic(rf.SyntheticSpec("friedman1", 80, 6, 1.0, 31))
    hold = rf.generate_synthetic(rf.SyntheticSpec("friedman1", 30, 6, 1.0, 32))
    const = rf.generate_synthetic(rf.SyntheticSpec("constant", 40, 3, 0.0, 33))
    rf.save_csv(root / "train.csv", train)
    rf.save_csv(root / "holdout.csv", hold)
    rf.save_csv(root / "const.csv", const)
    return root


def run(*argv) -> int:
    return main([str(a) for a in argv])


def read_json(path):
    return json.loads(path.read_text())


class TestSplit:
    def test_writes_partition_and_csvs(self, csv_dir, tmp_path):
        rc = run(
            "split", "--input", csv_dir / "train.csv", "--label", "y",
            "--train-frac", "0.5", "--holdout-ratio", "0.1667",
            "--seed", "7", "--output-dir", tmp_path,
        )
        assert rc == 0
        part = read_json(tmp_path / "partition.json")
        assert sorted(part) == ["holdout", "seed", "test", "train"]
        assert len(part["train"]) == 40
        for name in ("train.csv", "holdout.csv", "test.csv", "split_manifest.json"):
            assert (tmp_path / name).exists()

    def test_missing_label_is_error(self, csv_dir, tmp_path, capsys):
        rc = run("split", "--input", csv_dir / "train.csv", "--output-dir", tmp_path)
        assert rc == 1
        assert "label" in capsys.readouterr().err

    def test_rerun_byte_identical(self, csv_dir, tmp_path):
        args = (
            "split", "--input", csv_dir / "train.csv", "--label", "y",
            "--seed", "3",
        )
        run(*args, "--output-dir", tmp_path / "a")
        run(*args, "--output-dir", tmp_path / "b")
        for name in ("partition.json", "train.csv", "test.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


class TestTrain:
    def test_outputs(self, csv_dir, tmp_path):
        rc = run(
            "train", "--input", csv_dir / "train.csv", "--label", "y",
            "--t", "12", "--seed", "5", "--output-dir", tmp_path,
            "--eval", csv_dir / "holdout.csv", "--vi-rule", "impurity",
            "--save-ensemble", "--pred-train",
        )
        assert rc == 0
        summary = read_json(tmp_path / "train_summary.json")
        assert summary["t"] == 12 and summary["p"] == 6
        assert summary["params"]["mtry"] == 2  # ceil(6/3)
        pm = rf.load_prediction_matrix(tmp_path / "pred_eval.bin")
        assert pm.values.shape == (12, 30)
        vi = rf.load_vi_matrix(tmp_path / "vi_matrix.bin")
        assert vi.values.shape == (12, 6) and vi.rule == "impurity"
        ens = read_json(tmp_path / "ensemble.json")
        assert len(ens["trees"]) == 12


class TestConvergence:
    def test_oob_with_curve_and_recommendation(self, csv_dir, tmp_path):
        rc = run(
            "convergence", "--input", csv_dir / "train.csv", "--label", "y",
            "--mode", "oob", "--t0", "40", "--t-final", "160", "--epsilon", "0.5",
            "--B", "30", "--seed", "2", "--output-dir", tmp_path,
        )
        assert rc == 0
        est = read_json(tmp_path / "convergence_estimate.json")
        n = 80
        assert est["mode"] == "oob" and est["t0"] == 40
        assert est["effective_t0"] == pytest.approx((1 - 1 / n) ** n * 40)
        assert est["B"] == 30 and len(est["replicates"]) == 30
        curve = (tmp_path / "convergence_estimate_curve.csv").read_text().strip().split("\n")
        assert curve[0] == "t,value"
        assert len(curve) - 1 == 160 - 40 + 1
        rec = read_json(tmp_path / "convergence_estimate_recommendation.json")
        assert rec["recommended_t"] >= 40

    def test_holdout_mode(self, csv_dir, tmp_path):
        rc = run(
            "convergence", "--input", csv_dir / "train.csv", "--label", "y",
            "--mode", "holdout", "--holdout", csv_dir / "holdout.csv",
            "--t0", "20", "--seed", "4", "--output-dir", tmp_path,
        )
        assert rc == 0
        est = read_json(tmp_path / "convergence_estimate.json")
        assert est["mode"] == "holdout" and est["effective_t0"] == 20.0

    def test_holdout_without_file_is_error(self, csv_dir, tmp_path, capsys):
        rc = run(
            "convergence", "--input", csv_dir / "train.csv", "--label", "y",
            "--mode", "holdout", "--t0", "10", "--output-dir", tmp_path,
        )
        assert rc == 1
        assert "holdout" in capsys.readouterr().err

    def test_oob_from_pred_matrix_is_error(self, csv_dir, tmp_path, capsys):
        pm_path = tmp_path / "pm.bin"
        ds = rf.load_csv(csv_dir / "train.csv", "y")
        ens = rf.train_ensemble(ds, 10, rf.TreeParams(), 1)
        rf.save_prediction_matrix(pm_path, rf.predict_matrix(ens, ds.features, ds.labels))
        rc = run(
            "convergence", "--mode", "oob", "--pred-matrix", pm_path,
            "--output-dir", tmp_path,
        )
        assert rc == 1
        assert "oob" in capsys.readouterr().err

    def test_holdout_from_pred_matrix(self, csv_dir, tmp_path):
        ds = rf.load_csv(csv_dir / "train.csv", "y")
        hold = rf.load_csv(csv_dir / "holdout.csv", "y")
        ens = rf.train_ensemble(ds, 10, rf.TreeParams(), 1)
        pm = rf.predict_matrix(ens, hold.features, hold.labels)
        rf.save_prediction_matrix(tmp_path / "pm.bin", pm)
        rc = run(
            "convergence", "--mode", "holdout", "--pred-matrix", tmp_path / "pm.bin",
            "--seed", "9", "--output-dir", tmp_path,
        )
        assert rc == 0
        assert read_json(tmp_path / "convergence_estimate.json")["t0"] == 10

    def test_constant_labels_give_zero_estimate(self, csv_dir, tmp_path):
        rc = run(
            "convergence", "--input", csv_dir / "const.csv", "--label", "y",
            "--mode", "oob", "--t0", "8", "--epsilon", "0.01", "--min-leaf", "1",
            "--output-dir", tmp_path,
        )
        assert rc == 0
        est = read_json(tmp_path / "convergence_estimate.json")
        assert est["q_hat"] == 0.0
        rec = read_json(tmp_path / "convergence_estimate_recommendation.json")
        assert rec["recommended_t"] == 8  # already converged -> domain floor


class TestViConvergence:
    def test_impurity_rule(self, csv_dir, tmp_path):
        rc = run(
            "vi-convergence", "--input", csv_dir / "train.csv", "--label", "y",
            "--vi-rule", "impurity", "--t0", "15", "--t-final", "60",
            "--seed", "6", "--output-dir", tmp_path,
        )
        assert rc == 0
        est = read_json(tmp_path / "vi_estimate.json")
        assert est["mode"] == "vi"
        assert all(z >= 0 for z in est["replicates"])

    def test_constant_dataset_zero(self, csv_dir, tmp_path):
        rc = run(
            "vi-convergence", "--input", csv_dir / "const.csv", "--label", "y",
            "--vi-rule", "impurity", "--t0", "6", "--min-leaf", "1",
            "--output-dir", tmp_path,
        )
        assert rc == 0
        assert read_json(tmp_path / "vi_estimate.json")["q_hat"] == 0.0

    def test_bogus_rule_usage_error(self, csv_dir, tmp_path):
        with pytest.raises(SystemExit) as err:
            run(
                "vi-convergence", "--input", csv_dir / "train.csv", "--label", "y",
                "--vi-rule", "bogus", "--output-dir", tmp_path,
            )
        assert err.value.code == 2


class TestExtrapolateAndRecommend:
    @pytest.fixture()
    def estimate_path(self, csv_dir, tmp_path):
        run(
            "convergence", "--input", csv_dir / "train.csv", "--label", "y",
            "--mode", "oob", "--t0", "25", "--seed", "8", "--output-dir", tmp_path,
        )
        return tmp_path / "convergence_estimate.json"

    def test_extrapolate_curve(self, estimate_path, tmp_path):
        rc = run(
            "extrapolate", "--estimate", estimate_path, "--t-final", "100",
            "--output-dir", tmp_path,
        )
        assert rc == 0
        rows = (tmp_path / "extrapolation_curve.csv").read_text().strip().split("\n")[1:]
        assert len(rows) == 100 - 25 + 1
        est = rf.ConvergenceEstimate.from_dict(read_json(estimate_path))
        t, v = rows[-1].split(",")
        assert float(v) == rf.extrapolate(est, int(t))

    def test_recommend(self, estimate_path, tmp_path):
        rc = run(
            "recommend-size", "--estimate", estimate_path, "--epsilon", "0.05",
            "--output-dir", tmp_path,
        )
        assert rc == 0
        rec = read_json(tmp_path / "recommendation.json")
        est = rf.ConvergenceEstimate.from_dict(read_json(estimate_path))
        assert rec["recommended_t"] == rf.recommend_size(est, 0.05)


class TestOracleAndCoverage:
    def test_oracle_synthetic_and_coverage(self, tmp_path):
        rc = run(
            "oracle", "--generator", "friedman1", "--n", "40", "--p", "5",
            "--eval-n", "30", "--runs", "4", "--t-max", "20", "--t-grid", "5,10,20",
            "--min-leaf", "2", "--seed", "11", "--output-dir", tmp_path,
        )
        assert rc == 0
        rep = read_json(tmp_path / "oracle_report.json")
        assert rep["curve"]["ts"] == [5, 10, 20]
        assert isinstance(rep["mse_inf_hat"], float)
        curve_rows = (tmp_path / "true_curve.csv").read_text().strip().split("\n")
        assert len(curve_rows) == 4

        rc = run(
            "coverage", "--oracle-report", tmp_path / "oracle_report.json",
            "--runs", "20", "--t-check", "10", "--B", "20", "--min-leaf", "2",
            "--seed", "13", "--output-dir", tmp_path,
        )
        assert rc == 0
        cov = read_json(tmp_path / "coverage.json")
        assert 0.0 <= cov["coverage"] <= 1.0 and cov["runs"] == 20

    def test_oracle_runs_floor(self, tmp_path, capsys):
        rc = run(
            "oracle", "--generator", "constant", "--n", "10", "--p", "2",
            "--runs", "1", "--t-max", "4", "--output-dir", tmp_path,
        )
        assert rc == 1
        assert "runs" in capsys.readouterr().err

    def test_coverage_requires_report(self, tmp_path):
        with pytest.raises(SystemExit) as err:
            run("coverage", "--runs", "20", "--output-dir", tmp_path)
        assert err.value.code == 2

    def test_oracle_csv_mode(self, csv_dir, tmp_path):
        rc = run(
            "oracle", "--input", csv_dir / "train.csv", "--label", "y",
            "--train-frac", "0.5", "--holdout-ratio", "0.0", "--split-seed", "3",
            "--runs", "3", "--t-max", "10", "--t-grid", "5,10", "--min-leaf", "2",
            "--seed", "17", "--output-dir", tmp_path,
        )
        assert rc == 0
        rep = read_json(tmp_path / "oracle_report.json")
        assert rep["data"]["source"] == "csv"

    def test_vi_oracle(self, tmp_path):
        rc = run(
            "oracle", "--kind", "vi", "--generator", "friedman1", "--n", "30",
            "--p", "5", "--runs", "3", "--t-max", "8", "--t-grid", "4,8",
            "--min-leaf", "2", "--seed", "19", "--output-dir", tmp_path,
        )
        assert rc == 0
        rep = read_json(tmp_path / "oracle_report.json")
        assert rep["curve"]["kind"] == "vi_gap"
        assert len(rep["vi_inf_hat"]) == 5


class TestThreadIndependence:
    def test_convergence_threads(self, csv_dir, tmp_path):
        base = (
            "convergence", "--input", csv_dir / "train.csv", "--label", "y",
            "--mode", "oob", "--t0", "30", "--t-final", "60", "--seed", "21",
        )
        run(*base, "--threads", "1", "--output-dir", tmp_path / "t1")
        run(*base, "--threads", "8", "--output-dir", tmp_path / "t8")
        for name in ("convergence_estimate.json", "convergence_estimate_curve.csv"):
            assert (tmp_path / "t1" / name).read_bytes() == (tmp_path / "t8" / name).read_bytes()
