import json
import os
import subprocess
import sys

import numpy as np
import pytest

from kubolab.cli import emit_csv, main, read_csv
from kubolab.core import ConductivityResult


def run_cli(*args, env=None):
    full_env = dict(os.environ, **(env or {}))
    return subprocess.run([sys.executable, "-m", "kubolab", *args], capture_output=True, text=True,
                          env=full_env, timeout=600)


def test_graphene_conductivity_csv(tmp_path):
    out = tmp_path / "out.csv"
    code = main(["conductivity", "--model", "graphene", "--method", "auto", "--beta", "4", "--mu", "0",
                 "--gamma", "0.2", "--omega", "0:4:81", "--L", "32", "-o", str(out)])
    assert code == 0
    lines = out.read_bytes().split(b"\n")
    header = lines[0].decode().split(",")
    assert header == ["omega", "re_sigma_xx", "im_sigma_xx", "re_sigma_xy", "im_sigma_xy",
                      "re_sigma_yx", "im_sigma_yx", "re_sigma_yy", "im_sigma_yy"]
    assert b"\r" not in out.read_bytes()
    omegas, sigma = read_csv(out)
    assert omegas.size == 81 and omegas[-1] == 4.0
    meta = json.loads((tmp_path / "out.csv.meta.json").read_text())
    assert meta["method_resolved"] == "closed-form"
    assert meta["config"]["beta"] == 4.0
    assert meta["result"]["L"] == 32
    assert "version" in meta and "wall_time_s" in meta


def test_empty_grid_header_only(tmp_path):
    out = tmp_path / "empty.csv"
    emit_csv(ConductivityResult(np.zeros(0), np.zeros((0, 1, 1)), "trace"), out)
    assert out.read_text() == "omega,re_sigma_xx,im_sigma_xx\n"


def test_csv_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    sigma = rng.normal(size=(4, 2, 2)) + 1j * rng.normal(size=(4, 2, 2))
    sigma *= 10.0 ** rng.integers(-20, 20, size=sigma.shape)
    r = ConductivityResult(np.array([0.0, 0.1, 1 / 3, 7.0]), sigma, "bloch")
    emit_csv(r, tmp_path / "r.csv")
    omegas, back = read_csv(tmp_path / "r.csv")
    assert np.array_equal(omegas, r.omegas)
    assert np.array_equal(back, sigma)
    assert len((tmp_path / "r.csv").read_text().splitlines()[0].split(",")) == 9


def test_validate_suite_passes(capsys):
    assert main(["validate", "--suite", "oracle"]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out and out.count("PASS") == 7


def test_validate_suite_fails_when_tolerance_impossible():
    assert main(["validate", "--suite", "oracle", "--tol", "0"]) == 1


@pytest.mark.parametrize("argv", [
    ["conductivity", "--beta", "-1"],
    ["conductivity", "--mu", "0", "--density", "0.5"],
    ["conductivity", "--no-such-flag"],
    ["conductivity", "--model", "/nonexistent/model.json", "--method", "trace"],
    ["conductivity", "--model", "free", "--method", "bloch"],
    ["conductivity", "--omega", "1,0"],
    ["conductivity", "--gamma", "0"],
    [],
])
def test_invalid_configs_exit_1(argv):
    assert main(argv) == 1


def test_non_convergence_exit_2():
    assert main(["conductivity", "--model", "graphene", "--method", "bloch", "--gamma", "0.01",
                 "--omega", "1", "--rtol", "1e-14", "--max-refinements", "1"]) == 2


def test_model_file_trace(tmp_path, capsys):
    from kubolab.graphene import graphene_tight_binding
    path = tmp_path / "g.json"
    path.write_text(json.dumps(graphene_tight_binding().to_json_dict()))
    assert main(["conductivity", "--model", str(path), "--L", "8", "--omega", "1", "--beta", "4"]) == 0
    rows = capsys.readouterr().out.strip().splitlines()
    assert len(rows) == 2 and rows[0].startswith("omega,re_sigma_xx")


def test_config_rerun_byte_identical(tmp_path):
    a = tmp_path / "a.csv"
    b = tmp_path / "b.csv"
    assert main(["conductivity", "--model", "dimerized", "--omega", "0:3:7", "--L", "16",
                 "--beta", "3", "-o", str(a)]) == 0
    assert main(["conductivity", "--config", str(a) + ".meta.json", "-o", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_effective_mass_command(capsys):
    assert main(["effective-mass", "--model", "ring", "--L", "256", "--beta", "2"]) == 0
    out = capsys.readouterr().out
    assert out.count("inv_m") == 3


def test_simulate_classical_command(capsys):
    assert main(["simulate-classical", "--gamma", "1", "--omega", "2", "--n-events", "100000",
                 "--seed", "7"]) == 0
    out = capsys.readouterr().out
    assert "estimate" in out and "stderr" in out and "analytic Drude" in out


def test_simulate_quantum_command(tmp_path):
    out = tmp_path / "q.json"
    assert main(["simulate-quantum", "--model", "ring", "--L", "8", "--beta", "2", "--gamma", "0.5",
                 "--n-events", "500", "--seed", "1", "-o", str(out)]) == 0
    data = json.loads(out.read_text())
    assert set(data) >= {"estimate", "stderr", "kubo", "metadata"}


def test_thread_count_independent_output(tmp_path):
    args = ["conductivity", "--model", "ring", "--L", "300", "--method", "trace", "--omega", "0:2:5"]
    outs = []
    for threads in ("1", "3"):
        path = tmp_path / f"t{threads}.csv"
        proc = run_cli(*args, "-o", str(path), env={"KUBO_THREADS": threads})
        assert proc.returncode == 0, proc.stderr
        outs.append(path.read_bytes())
    assert outs[0] == outs[1]


def test_console_entry_point_version():
    proc = run_cli("--version")
    assert proc.returncode == 0 and proc.stdout.strip()
