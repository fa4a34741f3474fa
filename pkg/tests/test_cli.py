"""Command-line interface: manifests, artifacts, exit codes, determinism."""

import json

import numpy as np
import pytest

from otkit import cli, io
from otkit.core import InputError


@pytest.fixture
def instance_dir(tmp_path):
    io.save_matrix(tmp_path / "C.csv", np.array([[0.0, 1.0], [1.0, 0.0]]))
    io.save_vector(tmp_path / "p.csv", np.array([0.3, 0.7]))
    io.save_vector(tmp_path / "q.csv", np.array([0.6, 0.4]))
    return tmp_path


def read_report(path):
    return json.loads((path / "report.json").read_text())


class TestIo:
    def test_measure_roundtrip(self, tmp_path):
        io.save_vector(tmp_path / "m.csv", np.array([0.25, 0.75]))
        m = io.load_measure(tmp_path / "m.csv")
        assert np.allclose(m.weights, [0.25, 0.75])

    def test_measure_renormalization_warns(self, tmp_path):
        (tmp_path / "m.csv").write_text("1\n3\n")
        with pytest.warns(UserWarning, match="renormalizing"):
            m = io.load_measure(tmp_path / "m.csv")
        assert np.allclose(m.weights, [0.25, 0.75])

    def test_malformed_line_number_reported(self, tmp_path):
        (tmp_path / "m.csv").write_text("0.5\nnot-a-number\n")
        with pytest.raises(InputError, match="m.csv:2"):
            io.load_measure(tmp_path / "m.csv")

    def test_ragged_matrix_rejected(self, tmp_path):
        (tmp_path / "C.csv").write_text("0,1\n1\n")
        with pytest.raises(InputError, match=":2"):
            io.load_matrix(tmp_path / "C.csv")

    def test_asymmetric_cost_rejected(self, tmp_path):
        (tmp_path / "C.csv").write_text("0,1\n2,0\n")
        with pytest.raises(InputError, match="symmetric"):
            io.load_cost(tmp_path / "C.csv")
        C = io.load_cost(tmp_path / "C.csv", allow_asymmetric=True)
        assert C.inf_norm == 2.0

    def test_edge_list_parsing(self, tmp_path):
        (tmp_path / "g.txt").write_text("0 1\n# comment\n1 2\n")
        assert io.load_edges(tmp_path / "g.txt") == [(0, 1), (1, 2)]

    def test_report_json_17_digits(self, tmp_path):
        io.write_report_json(tmp_path / "r.json", {"objective": 1.0 / 3.0})
        text = (tmp_path / "r.json").read_text()
        assert "0.33333333333333331" in text
        assert json.loads(text)["objective"] == pytest.approx(1 / 3)


class TestCommands:
    def test_approx_on_derived_instance(self, instance_dir, capsys):
        out = instance_dir / "out"
        code = cli.main([
            "approx", "--cost", str(instance_dir / "C.csv"),
            "--source", str(instance_dir / "p.csv"),
            "--target", str(instance_dir / "q.csv"),
            "--eps", "0.05", "--output-dir", str(out),
        ])
        assert code == 0
        report = read_report(out)
        assert 0.3 <= report["objective"] <= 0.35
        assert report["params"]["gamma"] is not None
        plan = io.load_plan(out / "plan.csv")
        assert np.abs(plan.sum(axis=1) - [0.3, 0.7]).max() <= 1e-9

    def test_missing_file_exit_3(self, instance_dir, capsys):
        code = cli.main([
            "approx", "--cost", str(instance_dir / "missing.csv"),
            "--source", str(instance_dir / "p.csv"),
            "--target", str(instance_dir / "q.csv"),
            "--eps", "0.05",
        ])
        assert code == 3
        assert "missing.csv" in capsys.readouterr().err

    def test_sinkhorn_with_trace(self, instance_dir):
        out = instance_dir / "out"
        trace = instance_dir / "trace.csv"
        code = cli.main([
            "sinkhorn", "--cost", str(instance_dir / "C.csv"),
            "--source", str(instance_dir / "p.csv"),
            "--target", str(instance_dir / "q.csv"),
            "--gamma", "0.1", "--tol", "1e-6",
            "--output-dir", str(out), "--trace", str(trace), "--quiet",
        ])
        assert code == 0
        header = trace.read_text().splitlines()[0]
        assert header == "iteration,violation,dual_objective,certificate"

    def test_sinkhorn_convergence_failure_exit_2(self, instance_dir, capsys):
        code = cli.main([
            "sinkhorn", "--cost", str(instance_dir / "C.csv"),
            "--source", str(instance_dir / "p.csv"),
            "--target", str(instance_dir / "q.csv"),
            "--gamma", "0.01", "--tol", "1e-9", "--max-iter", "4",
            "--output-dir", str(instance_dir / "out"),
        ])
        assert code == 2

    def test_round_command(self, instance_dir):
        io.save_matrix(instance_dir / "pi.csv", np.array([[0.5, 0.1], [0.1, 0.3]]))
        io.save_vector(instance_dir / "u.csv", np.array([0.5, 0.5]))
        out = instance_dir / "out"
        code = cli.main([
            "round", "--plan", str(instance_dir / "pi.csv"),
            "--source", str(instance_dir / "u.csv"),
            "--target", str(instance_dir / "u.csv"),
            "--output-dir", str(out), "--quiet",
        ])
        assert code == 0
        plan = io.load_plan(out / "plan.csv")
        assert np.allclose(plan, [[0.403226, 0.096774], [0.096774, 0.403226]], atol=1e-6)

    def test_aam_pipeline_and_override(self, instance_dir):
        out1 = instance_dir / "out1"
        code = cli.main([
            "aam", "--cost", str(instance_dir / "C.csv"),
            "--source", str(instance_dir / "p.csv"),
            "--target", str(instance_dir / "q.csv"),
            "--eps", "0.05", "--output-dir", str(out1), "--quiet",
        ])
        assert code == 0
        rep = read_report(out1)
        assert rep["params"]["gamma_override"] is False
        assert 0.3 <= rep["objective"] <= 0.35

        out2 = instance_dir / "out2"
        code = cli.main([
            "aam", "--cost", str(instance_dir / "C.csv"),
            "--source", str(instance_dir / "p.csv"),
            "--target", str(instance_dir / "q.csv"),
            "--eps", "0.05", "--gamma", "0.05",
            "--output-dir", str(out2), "--quiet",
        ])
        assert code == 0
        rep = read_report(out2)
        assert rep["params"]["gamma_override"] is True
        assert rep["params"]["gamma"] == 0.05

    def test_oracle_ot(self, instance_dir):
        out = instance_dir / "out"
        code = cli.main([
            "oracle", "ot", "--cost", str(instance_dir / "C.csv"),
            "--source", str(instance_dir / "p.csv"),
            "--target", str(instance_dir / "q.csv"),
            "--output-dir", str(out), "--quiet",
        ])
        assert code == 0
        assert read_report(out)["objective"] == pytest.approx(0.3, abs=1e-10)

    def test_oracle_requires_problem_inputs(self, instance_dir, capsys):
        code = cli.main([
            "oracle", "ot", "--cost", str(instance_dir / "C.csv"),
        ])
        assert code == 3

    def test_barycenter_command(self, tmp_path):
        rng = np.random.default_rng(0)
        mdir = tmp_path / "measures"
        mdir.mkdir()
        for idx in range(1, 3):
            w = rng.uniform(0.5, 1.5, 3)
            io.save_vector(mdir / f"p_{idx}.csv", w / w.sum())
        U = rng.uniform(0.2, 1.0, (3, 3))
        C = 0.5 * (U + U.T)
        np.fill_diagonal(C, 0.0)
        io.save_matrix(tmp_path / "C.csv", C)
        out = tmp_path / "out"
        code = cli.main([
            "barycenter", "--method", "ibp", "--measures", str(mdir),
            "--cost", str(tmp_path / "C.csv"), "--eps", str(0.25 * C.max()),
            "--output-dir", str(out), "--quiet",
        ])
        assert code == 0
        q_bar = io.load_measure(out / "q_bar.csv")
        assert q_bar.n == 3
        assert (out / "plan_1.csv").exists() and (out / "plan_2.csv").exists()

    def test_decentralized_command(self, tmp_path):
        rng = np.random.default_rng(1)
        mdir = tmp_path / "measures"
        mdir.mkdir()
        for idx in range(1, 4):
            w = rng.uniform(0.5, 1.5, 4)
            io.save_vector(mdir / f"p_{idx}.csv", w / w.sum())
        U = rng.uniform(0.2, 1.0, (4, 4))
        C = 0.5 * (U + U.T)
        np.fill_diagonal(C, 0.0)
        io.save_matrix(tmp_path / "C.csv", C)
        (tmp_path / "g.txt").write_text("0 1\n1 2\n")
        out = tmp_path / "out"
        trace = tmp_path / "trace.csv"
        code = cli.main([
            "decentralized", "--graph", str(tmp_path / "g.txt"),
            "--measures", str(mdir), "--cost", str(tmp_path / "C.csv"),
            "--gamma", "0.1", "--rounds", "40", "--seed", "3",
            "--output-dir", str(out), "--trace", str(trace), "--quiet",
        ])
        assert code == 0
        q_locals = io.load_matrix(out / "q_locals.csv")
        assert q_locals.shape == (3, 4)
        assert trace.read_text().splitlines()[0] == "round,consensus_error,dual_value,messages"
        report = read_report(out)
        assert report["seed"] == 3

    def test_determinism_excluding_wall_time(self, instance_dir):
        outs = []
        for name in ("a", "b"):
            out = instance_dir / name
            code = cli.main([
                "approx", "--cost", str(instance_dir / "C.csv"),
                "--source", str(instance_dir / "p.csv"),
                "--target", str(instance_dir / "q.csv"),
                "--eps", "0.05", "--output-dir", str(out), "--quiet",
            ])
            assert code == 0
            lines = (out / "report.json").read_text().splitlines()
            outs.append([ln for ln in lines if '"wall_time"' not in ln])
        assert outs[0] == outs[1]

    def test_report_key_order(self, instance_dir):
        out = instance_dir / "out"
        cli.main([
            "approx", "--cost", str(instance_dir / "C.csv"),
            "--source", str(instance_dir / "p.csv"),
            "--target", str(instance_dir / "q.csv"),
            "--eps", "0.05", "--output-dir", str(out), "--quiet",
        ])
        keys = list(read_report(out))
        assert keys == ["objective", "iterations", "certificate", "wall_time", "seed", "params"]

    def test_verify_single_fast_criterion(self, tmp_path, capsys):
        code = cli.main(["verify", "--only", "3", "--output-dir", str(tmp_path)])
        assert code == 0
        assert "criterion 3" in capsys.readouterr().out


def test_manifest_validation():
    manifest = cli.RunManifest(
        command="approx", inputs={"cost": "/nonexistent/C.csv"}, params={"eps": 0.1}
    )
    with pytest.raises(InputError, match="missing input"):
        manifest.validate()
    with pytest.raises(InputError, match="unknown command"):
        cli.RunManifest(command="noop", inputs={}, params={}).validate()
