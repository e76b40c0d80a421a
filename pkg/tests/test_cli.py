"""Command-line interface: round trips, exit codes, and deterministic output."""

import csv
import json

import numpy as np
import pytest
from scipy.special import expit

import sslogit.cli as cli_mod
from sslogit.cli import main
from sslogit.data import make_rng
from sslogit.errors import NumericalError
from sslogit.experiments import BENCHMARK_SPECS

# Lists that begin with a minus sign must use the = form, otherwise the
# argument parser reads them as option names.
TINY_GRID = [
    "--grid-gamma1=0.0,0.5",
    "--grid-gamma2=0.0",
    "--grid-log10-lambda=-1.0,0.0",
]


def write_labeled(path, n, p, seed):
    rng = make_rng(seed)
    x = rng.normal(size=(n, p))
    y = (rng.random(n) < expit(x[:, 0])).astype(int)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"x{j}" for j in range(p)] + ["label"])
        for row, lab in zip(x, y):
            writer.writerow([f"{v:.8f}" for v in row] + [str(lab)])
    return x, y


def write_features(path, n, p, seed):
    rng = make_rng(seed)
    x = rng.normal(size=(n, p))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"x{j}" for j in range(p)])
        for row in x:
            writer.writerow([repr(float(v)) for v in row])
    return x


def read_predictions(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["probability", "label"]
    probs = np.array([float(r[0]) for r in rows[1:]])
    labels = np.array([int(r[1]) for r in rows[1:]])
    return probs, labels


@pytest.fixture
def workdir(tmp_path):
    write_labeled(tmp_path / "labeled.csv", 30, 2, seed=0)
    write_features(tmp_path / "unlabeled.csv", 20, 2, seed=1)
    write_labeled(tmp_path / "test.csv", 25, 2, seed=2)
    return tmp_path


class TestFitPredictRoundTrip:
    def test_fit_writes_valid_model(self, workdir, capsys):
        model_path = workdir / "model.json"
        code = main([
            "fit", "--labeled", str(workdir / "labeled.csv"),
            "--unlabeled", str(workdir / "unlabeled.csv"),
            "--method", "lsslr", "--log10-lambda", "-1.0",
            "--model-out", str(model_path),
        ])
        assert code == 0
        assert "fit lsslr" in capsys.readouterr().out
        doc = json.loads(model_path.read_text())
        assert doc["format"] == "sslogit-model"
        assert doc["version"] == 1
        assert doc["n_features"] == 2
        assert len(doc["coefficients"]) == 3
        assert doc["converged"] is True

    def test_predict_matches_saved_coefficients(self, workdir):
        model_path = workdir / "model.json"
        main([
            "fit", "--labeled", str(workdir / "labeled.csv"),
            "--unlabeled", str(workdir / "unlabeled.csv"),
            "--method", "lsslr", "--model-out", str(model_path),
        ])
        x = write_features(workdir / "new.csv", 12, 2, seed=3)
        out_path = workdir / "preds.csv"
        code = main([
            "predict", "--model", str(model_path),
            "--data", str(workdir / "new.csv"), "--output", str(out_path),
        ])
        assert code == 0
        probs, labels = read_predictions(out_path)
        w = np.asarray(json.loads(model_path.read_text())["coefficients"])
        expected = expit(w[0] + x @ w[1:])
        np.testing.assert_allclose(probs, expected, rtol=1e-12)
        np.testing.assert_array_equal(labels, (expected > 0.5).astype(int))

    def test_hand_built_model_gives_hand_logits(self, tmp_path, capsys):
        model_path = tmp_path / "model.json"
        model_path.write_text(json.dumps({
            "format": "sslogit-model",
            "version": 1,
            "n_features": 1,
            "coefficients": [0.5, 1.0],
        }))
        with open(tmp_path / "x.csv", "w") as fh:
            fh.write("x0\n0.1\n-1.0\n")
        code = main(["predict", "--model", str(model_path), "--data", str(tmp_path / "x.csv")])
        assert code == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert lines[0] == "probability,label"
        p0, l0 = lines[1].split(",")
        p1, l1 = lines[2].split(",")
        assert float(p0) == pytest.approx(expit(0.6), rel=1e-12)
        assert float(p1) == pytest.approx(expit(-0.5), rel=1e-12)
        assert (l0, l1) == ("1", "0")

    def test_standardization_is_stored_and_applied(self, tmp_path):
        # Features on a huge scale: the saved model must carry the pool
        # statistics and predict must undo them before the dot product.
        rng = make_rng(4)
        x = rng.normal(loc=500.0, scale=50.0, size=(40, 1))
        y = (rng.random(40) < expit((x[:, 0] - 500.0) / 50.0)).astype(int)
        with open(tmp_path / "labeled.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["x0", "label"])
            for xi, yi in zip(x, y):
                writer.writerow([f"{xi[0]:.8f}", str(yi)])
        model_path = tmp_path / "model.json"
        code = main([
            "fit", "--labeled", str(tmp_path / "labeled.csv"),
            "--method", "slr", "--standardize", "--model-out", str(model_path),
        ])
        assert code == 0
        doc = json.loads(model_path.read_text())
        std = doc["standardization"]
        assert std["mean"][0] == pytest.approx(x.mean(), rel=1e-9)

        x_new = write_features(tmp_path / "new.csv", 8, 1, seed=5) * 50.0 + 500.0
        np.savetxt(tmp_path / "new.csv", x_new, delimiter=",", header="x0", comments="")
        out_path = tmp_path / "preds.csv"
        main(["predict", "--model", str(model_path), "--data", str(tmp_path / "new.csv"),
              "--output", str(out_path)])
        probs, _ = read_predictions(out_path)
        w = np.asarray(doc["coefficients"])
        z = (x_new[:, 0] - std["mean"][0]) / std["scale"][0]
        np.testing.assert_allclose(probs, expit(w[0] + w[1] * z), rtol=1e-9)


class TestModelValidation:
    def make_inputs(self, tmp_path):
        with open(tmp_path / "x.csv", "w") as fh:
            fh.write("x0\n0.0\n")
        return tmp_path / "x.csv"

    def test_wrong_format_marker(self, tmp_path, capsys):
        data = self.make_inputs(tmp_path)
        path = tmp_path / "m.json"
        path.write_text(json.dumps({"format": "other", "version": 1}))
        assert main(["predict", "--model", str(path), "--data", str(data)]) == 2
        assert "not a sslogit-model" in capsys.readouterr().err

    def test_unsupported_version(self, tmp_path, capsys):
        data = self.make_inputs(tmp_path)
        path = tmp_path / "m.json"
        path.write_text(json.dumps({
            "format": "sslogit-model", "version": 99,
            "n_features": 1, "coefficients": [0.0, 0.0],
        }))
        assert main(["predict", "--model", str(path), "--data", str(data)]) == 2
        assert "version" in capsys.readouterr().err

    def test_coefficient_length_mismatch(self, tmp_path, capsys):
        data = self.make_inputs(tmp_path)
        path = tmp_path / "m.json"
        path.write_text(json.dumps({
            "format": "sslogit-model", "version": 1,
            "n_features": 3, "coefficients": [0.0, 0.0],
        }))
        assert main(["predict", "--model", str(path), "--data", str(data)]) == 2
        assert "coefficient length" in capsys.readouterr().err

    def test_invalid_json(self, tmp_path, capsys):
        data = self.make_inputs(tmp_path)
        path = tmp_path / "m.json"
        path.write_text("{nope")
        assert main(["predict", "--model", str(path), "--data", str(data)]) == 2
        assert "invalid JSON" in capsys.readouterr().err

    def test_feature_count_mismatch(self, tmp_path, capsys):
        path = tmp_path / "m.json"
        path.write_text(json.dumps({
            "format": "sslogit-model", "version": 1,
            "n_features": 2, "coefficients": [0.0, 0.0, 0.0],
        }))
        data = self.make_inputs(tmp_path)
        assert main(["predict", "--model", str(path), "--data", str(data)]) == 2
        assert "model expects 2" in capsys.readouterr().err


class TestSelect:
    def test_table_and_json_for_all_methods(self, workdir, capsys):
        out_path = workdir / "select.json"
        code = main([
            "select", "--labeled", str(workdir / "labeled.csv"),
            "--unlabeled", str(workdir / "unlabeled.csv"),
            "--test", str(workdir / "test.csv"),
            "--methods", "sslrcs,lsslr,slr",
            "--output", str(out_path), *TINY_GRID,
        ])
        assert code == 0
        out = capsys.readouterr().out
        for token in ("selected", "sslrcs", "lsslr", "slr", "GIC",
                      "weighted NLL", "trace term", "test PE (%)"):
            assert token in out

        doc = json.loads(out_path.read_text())
        assert doc["command"] == "select"
        assert doc["config"]["grid"]["gamma1"] == [0.0, 0.5]
        methods = doc["methods"]
        assert set(methods) == {"sslrcs", "lsslr", "slr"}
        assert len(methods["sslrcs"]["candidates"]) == 2 * 1 * 2
        assert len(methods["lsslr"]["candidates"]) == 2
        assert len(methods["slr"]["candidates"]) == 2
        for m in methods.values():
            assert len(m["coefficients"]) == 3
            assert m["test_pe_percent"] is not None
            assert m["gic"] == pytest.approx(
                m["weighted_nll"] + 2.0 * m["trace_term"], rel=1e-12
            )

    def test_semisupervised_methods_require_unlabeled(self, workdir, capsys):
        code = main([
            "select", "--labeled", str(workdir / "labeled.csv"),
            "--methods", "sslrcs", *TINY_GRID,
        ])
        assert code == 1
        assert "--unlabeled is required" in capsys.readouterr().err

    def test_labeled_only_method_runs_without_unlabeled(self, workdir, capsys):
        code = main([
            "select", "--labeled", str(workdir / "labeled.csv"),
            "--methods", "slr", *TINY_GRID,
        ])
        assert code == 0
        assert "slr" in capsys.readouterr().out

    def test_numerical_failure_exit_code(self, workdir, monkeypatch, capsys):
        def boom(*args, **kwargs):
            raise NumericalError("all 4 grid candidates failed")

        monkeypatch.setattr(cli_mod, "grid_search", boom)
        code = main([
            "select", "--labeled", str(workdir / "labeled.csv"),
            "--methods", "slr", *TINY_GRID,
        ])
        assert code == 3
        assert "grid candidates failed" in capsys.readouterr().err


class TestExitCodes:
    def test_missing_input_file(self, tmp_path, capsys):
        code = main([
            "select", "--labeled", str(tmp_path / "nope.csv"), "--methods", "slr",
        ])
        assert code == 2
        assert "cannot read" in capsys.readouterr().err

    def test_unknown_flag(self, workdir, capsys):
        code = main([
            "select", "--labeled", str(workdir / "labeled.csv"), "--bogus",
        ])
        assert code == 1
        assert "error" in capsys.readouterr().err

    def test_unknown_method_name(self, workdir, capsys):
        code = main([
            "select", "--labeled", str(workdir / "labeled.csv"), "--methods", "svm",
        ])
        assert code == 1
        assert "unknown method" in capsys.readouterr().err

    def test_replicate_bench_needs_dataset(self, capsys):
        code = main(["replicate", "bench", "--trials", "1"])
        assert code == 1
        assert "requires --dataset" in capsys.readouterr().err

    def test_bad_fraction_rejected(self, capsys):
        code = main([
            "replicate", "bench", "--dataset", "synthetic",
            "--fractions", "150", "--trials", "1",
        ])
        assert code == 1
        assert "out of (0, 1)" in capsys.readouterr().err

    def test_bad_grid_list_rejected(self, workdir, capsys):
        code = main([
            "select", "--labeled", str(workdir / "labeled.csv"),
            "--methods", "slr", "--grid-gamma1", "a,b",
        ])
        assert code == 1
        assert "cannot parse" in capsys.readouterr().err


class TestReplicate:
    def test_sim1_single_setting_table(self, tmp_path, capsys):
        code = main([
            "replicate", "sim1", "--n", "25", "--trials", "1",
            "--methods", "slr", *TINY_GRID,
        ])
        assert code == 0
        out = capsys.readouterr().out
        assert "labeled n" in out
        assert "n=25" in out
        assert "PE slr" in out

    def test_synthetic_bench_runs_identically_twice(self, tmp_path, capsys):
        args = [
            "replicate", "bench", "--dataset", "synthetic",
            "--fractions", "20", "--trials", "2", "--methods", "slr,lsslr",
            *TINY_GRID,
        ]
        first = tmp_path / "a.json"
        second = tmp_path / "b.json"
        assert main(args + ["--output", str(first)]) == 0
        assert main(args + ["--output", str(second)]) == 0
        assert first.read_bytes() == second.read_bytes()

        doc = json.loads(first.read_text())
        assert doc["study"] == "bench"
        run = doc["results"]["20%"]
        assert run["n_trials"] == 2
        assert len(run["records"]) == 4
        for summary in run["summaries"]:
            assert summary["n_failed"] == 0
            assert np.isfinite(summary["mean_pe_percent"])

    def test_benchmark_csvs_via_env_dir(self, tmp_path, monkeypatch, capsys):
        spec = BENCHMARK_SPECS["pima"]
        rng = make_rng(6)
        for stem, n in (("pima_train", spec.n_train), ("pima_test", spec.n_test)):
            with open(tmp_path / f"{stem}.csv", "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow([f"x{j}" for j in range(spec.n_features)] + ["label"])
                for i in range(n):
                    row = [f"{v:.6f}" for v in rng.normal(size=spec.n_features)]
                    writer.writerow(row + [str(i % 2)])
        monkeypatch.setenv("SSLOGIT_DATA_DIR", str(tmp_path))
        code = main([
            "replicate", "bench", "--dataset", "pima",
            "--fractions", "20", "--trials", "1", "--methods", "slr",
            *TINY_GRID,
        ])
        assert code == 0
        assert "20%" in capsys.readouterr().out
