import json
import os
import subprocess
import sys

import numpy as np
import pytest

from gsproj.cli import dispatch
from gsproj.data_io import load_matrix, read_report, save_matrix
from gsproj.training import two_blobs

from conftest import EXAMPLE, EXAMPLE_S08


@pytest.fixture
def example_csv(tmp_path):
    path = tmp_path / "example.csv"
    save_matrix(EXAMPLE, path)
    return path


@pytest.fixture
def blobs_csv(tmp_path):
    X, y = two_blobs(30, 0)
    path = tmp_path / "blobs.csv"
    save_matrix(np.column_stack([X, y]), path)
    return path


@pytest.fixture
def synth_csv(tmp_path):
    path = tmp_path / "y.csv"
    assert dispatch(["synth", "--m", "20", "--n", "15", "--rank", "3", "--seed", "2",
                     "--output", str(path)]) == 0
    return path


def run(argv):
    return dispatch([str(a) for a in argv])


class TestProject:
    def test_worked_example(self, tmp_path, example_csv, capsys):
        out, rep = tmp_path / "p.csv", tmp_path / "r.json"
        assert run(["project", "--input", example_csv, "--s", 0.8, "--output", out, "--report", rep]) == 0
        np.testing.assert_allclose(load_matrix(out), EXAMPLE_S08, atol=0.01)
        data = read_report(rep)
        assert data["variant"] == "gsp"
        assert data["details"]["achieved_sparsity"] == pytest.approx(0.8, abs=1e-4)
        assert len(data["error_trace"]) == data["details"]["iterations"] + 1
        assert data["error_trace"][-1] <= 1e-4
        assert data["wall_ms"] is None
        assert "achieved sparsity" in capsys.readouterr().out

    def test_columns(self, tmp_path, example_csv):
        out = tmp_path / "p.csv"
        assert run(["project", "--input", example_csv, "--s", 0.6, "--axis", "cols", "--output", out]) == 0
        assert load_matrix(out).shape == EXAMPLE.shape

    def test_discontinuity_message(self, example_csv, capsys):
        assert run(["project", "--input", example_csv, "--s", 0.9]) == 0
        assert "not attainable" in capsys.readouterr().out

    def test_already_feasible(self, example_csv, capsys):
        assert run(["project", "--input", example_csv, "--s", 0.1]) == 0
        assert "input already satisfies target" in capsys.readouterr().out

    def test_relative(self, tmp_path, example_csv):
        rep = tmp_path / "r.json"
        assert run(["project", "--input", example_csv, "--s", 0.8, "--relative", "--report", rep]) == 0
        assert read_report(rep)["variant"] == "gsp-relative"

    def test_timing(self, tmp_path, example_csv):
        rep = tmp_path / "r.json"
        assert run(["project", "--input", example_csv, "--s", 0.8, "--timing", "--report", rep]) == 0
        assert read_report(rep)["wall_ms"] >= 0


class TestWeighted:
    def test_shared_weights(self, tmp_path, example_csv):
        wpath, out = tmp_path / "w.csv", tmp_path / "p.csv"
        save_matrix(np.arange(1.0, 11.0), wpath)
        assert run(["wproject", "--input", example_csv, "--s", 0.7, "--weights", wpath,
                    "--output", out]) == 0
        assert load_matrix(out).shape == EXAMPLE.shape

    def test_radial(self, tmp_path, example_csv):
        rep = tmp_path / "r.json"
        assert run(["wproject", "--input", example_csv, "--s", 0.7, "--radial", "2x5:1.5",
                    "--report", rep]) == 0
        assert read_report(rep)["details"]["achieved_sparsity"] == pytest.approx(0.7, abs=1e-4)

    def test_radial_size_mismatch(self, example_csv):
        assert run(["wproject", "--input", example_csv, "--s", 0.7, "--radial", "3x3:1"]) == 2

    def test_missing_weights(self, example_csv):
        assert run(["wproject", "--input", example_csv, "--s", 0.7]) == 2


class TestNmfAndSynth:
    def test_nmf(self, tmp_path, synth_csv, capsys):
        rep, xo = tmp_path / "r.json", tmp_path / "x.csv"
        assert run(["nmf", "--input", synth_csv, "--rank", 3, "--variant", "psnmf", "--s", 0.5,
                    "--iters", 20, "--report", rep, "--output-x", xo]) == 0
        data = read_report(rep)
        assert len(data["error_trace"]) == len(data["sparsity_trace"]) == 20
        assert data["seed"] == 0
        assert load_matrix(xo).shape == (20, 3)
        assert "best relative error" in capsys.readouterr().out

    def test_seed_env_overrides(self, tmp_path, synth_csv, monkeypatch):
        rep = tmp_path / "r.json"
        monkeypatch.setenv("SPARSEPROJ_SEED", "9")
        assert run(["nmf", "--input", synth_csv, "--rank", 3, "--variant", "nenmf", "--iters", 3,
                    "--seed", 1, "--report", rep]) == 0
        assert read_report(rep)["seed"] == 9

    def test_bad_seed_env(self, synth_csv, monkeypatch):
        monkeypatch.setenv("SPARSEPROJ_SEED", "abc")
        assert run(["nmf", "--input", synth_csv, "--rank", 3, "--variant", "nenmf", "--iters", 3]) == 2

    def test_sparse_variant_needs_s(self, synth_csv):
        assert run(["nmf", "--input", synth_csv, "--rank", 3, "--variant", "psnmf"]) == 2

    def test_synth_outputs(self, tmp_path):
        paths = [tmp_path / f for f in ("y.csv", "x.csv", "h.csv")]
        rep = tmp_path / "r.json"
        assert run(["synth", "--m", 8, "--n", 6, "--rank", 2, "--output", paths[0],
                    "--output-x", paths[1], "--output-h", paths[2], "--report", rep]) == 0
        Y, X, H = (load_matrix(p) for p in paths)
        np.testing.assert_allclose(Y, X @ H, rtol=1e-15)
        assert read_report(rep)["details"]["rank"] == 2

    def test_synth_rank_too_large(self):
        assert run(["synth", "--m", 3, "--n", 3, "--rank", 5]) == 2


class TestTrain:
    def test_classify(self, tmp_path, blobs_csv, capsys):
        rep = tmp_path / "r.json"
        assert run(["train", "--data", blobs_csv, "--arch", "2,8,2", "--s", 0.5, "--epochs", 3,
                    "--lr", 0.01, "--period", 2, "--report", rep]) == 0
        data = read_report(rep)
        assert data["details"]["projections"] > 0
        assert len(data["error_trace"]) == 4
        assert "final accuracy" in capsys.readouterr().out

    def test_autoencode(self, tmp_path, blobs_csv):
        rep = tmp_path / "r.json"
        assert run(["train", "--data", blobs_csv, "--arch", "3,2", "--task", "autoencode",
                    "--epochs", 2, "--report", rep]) == 0
        assert read_report(rep)["details"]["arch"] == [3, 2, 3]

    @pytest.mark.parametrize("arch", ["2,x", "5"])
    def test_bad_arch(self, blobs_csv, arch):
        assert run(["train", "--data", blobs_csv, "--arch", arch]) == 2

    def test_feature_mismatch(self, blobs_csv):
        assert run(["train", "--data", blobs_csv, "--arch", "4,2"]) == 2

    def test_bad_layer(self, blobs_csv):
        assert run(["train", "--data", blobs_csv, "--arch", "2,2", "--s", 0.5, "--layer", 3]) == 2


class TestErrors:
    def test_usage_errors(self, example_csv):
        assert run(["project", "--input", example_csv]) == 2
        assert run(["project", "--input", example_csv, "--s", 1.5]) == 2
        assert run(["project", "--input", example_csv, "--s", 0.5, "--r-l", 0.2]) == 2
        assert run(["bogus"]) == 2

    def test_missing_file(self, tmp_path):
        assert run(["project", "--input", tmp_path / "nope.csv", "--s", 0.5]) == 1

    def test_parse_error_report(self, tmp_path, capsys):
        bad, rep = tmp_path / "bad.csv", tmp_path / "r.json"
        bad.write_text("1,2\n3\n")
        assert run(["project", "--input", bad, "--s", 0.5, "--report", rep]) == 1
        data = read_report(rep)
        assert data["error"].startswith("ParseError: line 2")
        assert "line 2" in capsys.readouterr().err

    def test_zero_row(self, tmp_path):
        path = tmp_path / "z.csv"
        path.write_text("0,0,0\n1,2,3\n")
        assert run(["project", "--input", path, "--s", 0.5]) == 1

    def test_convergence_failure(self, example_csv):
        assert run(["project", "--input", example_csv, "--s", 0.8, "--max-iters", 1]) == 1


class TestDeterminism:
    def test_reports_identical(self, tmp_path, example_csv, synth_csv, blobs_csv):
        commands = [
            ["project", "--input", example_csv, "--s", 0.8],
            ["wproject", "--input", example_csv, "--s", 0.7, "--radial", "2x5:2"],
            ["nmf", "--input", synth_csv, "--rank", 3, "--variant", "cpsnmf", "--s", 0.6, "--iters", 10],
            ["synth", "--m", 10, "--n", 10, "--rank", 2, "--seed", 5],
            ["train", "--data", blobs_csv, "--arch", "2,4,2", "--s", 0.5, "--epochs", 2],
        ]
        for i, cmd in enumerate(commands):
            a, b = tmp_path / f"a{i}.json", tmp_path / f"b{i}.json"
            assert run(cmd + ["--report", a]) == 0
            assert run(cmd + ["--report", b]) == 0
            assert a.read_bytes() == b.read_bytes()

    def test_module_entry_point(self, tmp_path, example_csv):
        rep = tmp_path / "r.json"
        env = {k: v for k, v in os.environ.items() if k != "SPARSEPROJ_SEED"}
        proc = subprocess.run(
            [sys.executable, "-m", "gsproj", "project", "--input", str(example_csv), "--s", "0.8",
             "--report", str(rep)],
            capture_output=True, text=True, env=env,
        )
        assert proc.returncode == 0, proc.stderr
        assert json.loads(rep.read_text())["schema"] == "1"
        proc = subprocess.run([sys.executable, "-m", "gsproj", "project"], capture_output=True,
                              text=True, env=env)
        assert proc.returncode == 2
