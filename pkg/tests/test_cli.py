import csv
import io
import json

import pytest

from sosexit.cli import main
from sosexit.cli.main import EXIT_CERTIFICATE, EXIT_INPUT, EXIT_OK, EXIT_SOLVER
from sosexit.sdp import read_sdpa, solve

SCALAR = {
    "dimension": 1,
    "drift": ["1 + 2*x1"],
    "diffusion": [["1.4142135623730951*x1"]],
    "domain": {"interior": ["x1*(1 - x1) >= 0", "1 - x1^2 >= 0"],
               "boundary": [{"eq": ["x1*(1 - x1)"], "label": "ends"}]},
    "g": "x1^2",
    "initial": {"type": "dirac", "point": [0.5]},
}


def write(tmp_path, data, name="p.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data) if not isinstance(data, str) else data)
    return str(path)


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_solve_table(capsys):
    code, out, _ = run(capsys, "solve", "scalar", "--degrees", "2,4")
    assert code == EXIT_OK
    lines = out.splitlines()
    assert lines[2].split()[:3] == ["2", "0.65000", "1.00000"]
    assert lines[3].split()[:3] == ["4", "0.92157", "1.00000"]


def test_solve_json_csv_deterministic(capsys, tmp_path):
    a, b, c = tmp_path / "a.json", tmp_path / "b.json", tmp_path / "t.csv"
    assert run(capsys, "solve", "scalar", "--degrees", "2:6", "--out", str(a), "--csv", str(c))[0] == 0
    assert run(capsys, "solve", "scalar", "--degrees", "2:6", "--out", str(b))[0] == 0
    da, db = json.loads(a.read_text()), json.loads(b.read_text())
    assert da.pop("timings") and db.pop("timings")
    assert json.dumps(da, sort_keys=True) == json.dumps(db, sort_keys=True)
    assert [row["degree"] for row in da["rows"]] == [2, 4, 6]
    assert all(row["consistent"] for row in da["rows"])
    assert da["source"] == "scalar" and len(da["sha256"]) == 64
    rows = list(csv.DictReader(io.StringIO(c.read_text())))
    assert abs(float(rows[0]["lower"]) - 0.65) < 1e-6


def test_solve_single_sense(capsys):
    code, out, _ = run(capsys, "solve", "unit_ball", "--degrees", "2", "--sense", "max")
    assert code == 0
    assert out.splitlines()[2].split()[1] == "-"


def test_solve_with_certificates(capsys, tmp_path):
    out_path = tmp_path / "r.json"
    code, _, _ = run(capsys, "solve", "scalar", "--degrees", "6", "--certify", "--samples", "500",
                     "--out", str(out_path))
    assert code == 0
    row = json.loads(out_path.read_text())["rows"][0]
    assert row["lower"]["certificate"]["verdict"] == "pass"
    assert row["upper"]["certificate"]["verdict"] == "pass"


def test_solve_threads_env(capsys, monkeypatch):
    monkeypatch.setenv("SOSEXIT_THREADS", "3")
    code, out, _ = run(capsys, "solve", "scalar", "--degrees", "2,4,6")
    assert code == 0 and "0.98118" in out
    monkeypatch.setenv("SOSEXIT_THREADS", "many")
    assert run(capsys, "solve", "scalar", "--degrees", "2,4")[0] == EXIT_INPUT


def test_infeasible_relaxation(capsys, tmp_path):
    data = dict(SCALAR, domain={"interior": SCALAR["domain"]["interior"],
                                "boundary": [{"eq": ["x1^2 + 1"], "label": "nowhere"}]})
    code, _, err = run(capsys, "solve", write(tmp_path, data), "--degrees", "2", "--sense", "min")
    assert code == EXIT_SOLVER
    assert "infeasible" in err and "inconsistent" in err


def test_parse_error_exit_code(capsys, tmp_path):
    data = dict(SCALAR, drift=["1 + 2*x1 +"])
    code, _, err = run(capsys, "solve", write(tmp_path, data))
    assert code == EXIT_INPUT
    assert "drift[0]" in err and "column" in err


def test_dimension_mismatch_exit_code(capsys, tmp_path):
    data = dict(SCALAR, diffusion=[["x1"], ["x1"]])
    code, _, err = run(capsys, "info", write(tmp_path, data), "-r", "2")
    assert code == EXIT_INPUT and "dimension mismatch" in err


def test_missing_ball_and_add_ball(capsys, tmp_path):
    data = dict(SCALAR, domain={"interior": ["x1*(1 - x1) >= 0"], "boundary": SCALAR["domain"]["boundary"]})
    path = write(tmp_path, data)
    code, _, err = run(capsys, "solve", path, "--degrees", "2")
    assert code == EXIT_INPUT and "--add-ball" in err
    code, out, _ = run(capsys, "solve", path, "--degrees", "2", "--add-ball", "1")
    assert code == 0 and "0.65000" in out


def test_missing_file(capsys):
    code, _, err = run(capsys, "info", "nowhere.json", "-r", "2")
    assert code == EXIT_INPUT and "bundled" in err


def test_low_degree_rejected(capsys, tmp_path):
    data = dict(SCALAR, g="x1^4")
    code, _, err = run(capsys, "solve", write(tmp_path, data), "--degrees", "2")
    assert code == EXIT_INPUT and "deg g" in err


def test_rescale_keeps_bounds(capsys):
    code, out, _ = run(capsys, "solve", "quartic_ball", "--degrees", "6", "--rescale")
    assert code == 0
    assert out.splitlines()[2].split()[1:3] == ["1.13807", "1.15470"]


def test_certify_command(capsys, tmp_path):
    out_path = tmp_path / "c.json"
    code, out, _ = run(capsys, "certify", "scalar", "-r", "10", "--sense", "min", "--out", str(out_path))
    assert code == 0
    assert "verdict             pass" in out
    bound = float(out.split("certified bound")[1].split()[0])
    assert abs(bound - 0.998) < 2e-3
    data = json.loads(out_path.read_text())
    assert data["certificate"]["kind"] == "subsolution"


def test_certify_failure_exit_code(capsys):
    code, out, _ = run(capsys, "certify", "scalar", "-r", "10", "--tol", "1e-5", "--max-iters", "14",
                       "--check-tol", "1e-7")
    assert code == EXIT_CERTIFICATE
    assert "fail" in out


def test_mc_command(capsys, tmp_path):
    out_path = tmp_path / "mc.json"
    code, out, _ = run(capsys, "mc", "scalar", "--paths", "2000", "--step", "1e-3", "--seed", "1",
                       "--out", str(out_path))
    assert code == 0
    data = json.loads(out_path.read_text())
    assert abs(data["mean"] - 1.0) < 0.01
    lo, hi = data["interval"]["bounds"]
    assert hi - lo < 0.02


def test_mc_horizon_error(capsys):
    code, _, err = run(capsys, "mc", "unit_ball", "--paths", "20", "--step", "1e-3", "--t-max", "1e-3")
    assert code == EXIT_SOLVER and "horizon" in err


def test_info(capsys):
    code, out, _ = run(capsys, "info", "quartic_ball", "-r", "8")
    assert code == 0
    assert "Dynkin rows          45" in out
    assert "mu     moments  45" in out and "nu1    moments  45" in out
    assert "referenced by Dynkin rows  73" in out
    code, out, _ = run(capsys, "info", "scalar", "-r", "10", "--json")
    st = json.loads(out)
    assert st["dynkin_rows"] == 11
    code, out, _ = run(capsys, "info", "unit_ball", "-r", "2", "--json")
    assert {size for _, size in json.loads(out)["blocks"]} <= {1, 3}


def test_export(capsys, tmp_path):
    target = tmp_path / "s.dat-s"
    code, _, _ = run(capsys, "export", "scalar", "-r", "4", "--sense", "min", str(target))
    assert code == 0
    sol = solve(read_sdpa(str(target)))
    assert abs(sol.primal_objective - 0.92157) < 1e-5


def test_module_entry_point():
    import subprocess
    import sys
    res = subprocess.run([sys.executable, "-m", "sosexit", "info", "scalar", "-r", "2"],
                         capture_output=True, text=True)
    assert res.returncode == 0 and "Dynkin rows" in res.stdout


def test_usage_error(capsys):
    with pytest.raises(SystemExit) as info:
        main(["solve"])
    assert info.value.code == 2
