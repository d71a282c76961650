import json
import subprocess
import sys

import numpy as np
import pytest

from spinqutrit import YB171
from spinqutrit.cli import main

TWO_PI = 2 * np.pi

PROGRAM = """\
U 01 0 0.25pi 0
X 12 1
MM 0 1 0.3
"""


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def prog_file(tmp_path):
    p = tmp_path / "prog.qp"
    p.write_text(PROGRAM)
    return p


def test_chain_three_ions(capsys):
    code, out, _ = run(capsys, "chain", "--ions", "3", "--nu1-hz", "200e3")
    assert code == 0
    rep = json.loads(out)
    np.testing.assert_allclose(rep["u"], [-1.0772, 0, 1.0772], atol=1e-4)
    assert {"z0_m", "mode_freqs_rad_s", "mode_matrix", "j_matrix_rad_s", "gradient_window"} <= set(rep)
    assert rep["nu1_rad_s"] == pytest.approx(TWO_PI * 200e3)


@pytest.mark.parametrize("argv", [
    ["chain", "--ions", "0"],
    ["chain", "--ions", "3", "--nu1-hz", "-1"],
    ["jmatrix", "--ions", "3", "--b", "-5"],
    ["bounds", "--ions", "3", "--epsilon-m", "1.5"],
    ["chain", "--ions", "3", "--species", "ca40"],
])
def test_invalid_config_exit_2(capsys, argv):
    code, out, err = run(capsys, *argv)
    assert code == 2
    assert out == ""
    assert err.startswith("error:")


def test_argparse_usage_error_exit_2(capsys):
    with pytest.raises(SystemExit) as info:
        main(["chain", "--ions", "three"])
    assert info.value.code == 2


def test_jmatrix_reference(capsys):
    code, out, _ = run(capsys, "jmatrix", "--ions", "10", "--species", "yb171", "--nu1-hz", "200e3", "--b", "120")
    assert code == 0
    rep = json.loads(out)
    nn = np.array(rep["nearest_neighbour_hz"])
    assert np.all(np.abs(nn / 1.2e3 - 1) <= 0.2)
    np.testing.assert_allclose(np.array(rep["nearest_neighbour_rad_s"]) / TWO_PI, nn)


def test_jmatrix_csv(capsys):
    code, out, _ = run(capsys, "--out", "csv", "jmatrix", "--ions", "4", "--b", "50")
    assert code == 0
    lines = out.strip().splitlines()
    assert lines[0] == "j0_rad_s,j1_rad_s,j2_rad_s,j3_rad_s"
    assert len(lines) == 5


def test_breitrabi_reference(capsys):
    code, out, _ = run(capsys, "breitrabi", "--ions", "3", "--B0", "0.45", "--b", "0")
    assert code == 0
    rep = json.loads(out)
    got = sorted([rep["centre"]["omega01_hz"], rep["centre"]["omega12_hz"]])
    assert got[0] == pytest.approx(3.7e9, rel=0.05)
    assert got[1] == pytest.approx(8.9e9, rel=0.05)
    freqs = {r["omega01_rad_s"] for r in rep["ions"]}
    assert len(freqs) == 1


def test_breitrabi_unsupported_species(capsys, tmp_path):
    rec = YB171.to_record() | {"name": "odd", "nuclear_spin": 1.5}
    path = tmp_path / "species.json"
    path.write_text(json.dumps([rec]))
    code, _, err = run(capsys, "breitrabi", "--ions", "2", "--species-file", str(path), "--species", "odd")
    assert code == 2
    assert "nuclear spin" in err


def test_species_file_used(capsys, tmp_path):
    rec = YB171.to_record() | {"name": "heavy", "mass_amu": 2 * YB171.to_record()["mass_amu"]}
    path = tmp_path / "species.json"
    path.write_text(json.dumps(rec))
    _, light, _ = run(capsys, "chain", "--ions", "2")
    code, heavy, _ = run(capsys, "chain", "--ions", "2", "--species-file", str(path), "--species", "heavy")
    assert code == 0
    ratio = json.loads(heavy)["length_scale_m"] / json.loads(light)["length_scale_m"]
    assert ratio == pytest.approx(2 ** (-1 / 3), rel=1e-9)


def test_bounds_reference(capsys):
    code, out, _ = run(capsys, "bounds", "--ions", "10", "--epsilon-m", "0.01", "--b", "120")
    assert code == 0
    rep = json.loads(out)
    fp = rep["first_principles"]
    assert 15 <= fp["b_min_T_per_m"] <= 60
    assert 100 <= fp["b_max_T_per_m"] <= 400
    assert set(rep["fit_formula"]) == {"nu1_rad_s", "nu1_hz"}
    assert abs(rep["max_ions_estimate"] - 30) <= 5


def test_bounds_zero_gradient(capsys):
    code, out, _ = run(capsys, "bounds", "--ions", "10")
    assert code == 0
    assert json.loads(out)["first_principles"]["feasible"]


def test_simulate_unitary(capsys, prog_file):
    code, out, _ = run(capsys, "simulate", str(prog_file))
    assert code == 0
    rep = json.loads(out)
    assert rep["n_qutrits"] == 2
    m = np.array(rep["matrix"])
    u = m[..., 0] + 1j * m[..., 1]
    np.testing.assert_allclose(u.conj().T @ u, np.eye(9), atol=1e-12)


def test_simulate_with_measure_gives_counts(capsys, tmp_path):
    p = tmp_path / "m.qp"
    p.write_text("U 01 0 0.25pi 0\nMEASURE\n")
    code, out, _ = run(capsys, "--seed", "4", "simulate", str(p), "--shots", "2000")
    assert code == 0
    rep = json.loads(out)
    assert sum(rep["counts"].values()) == 2000
    assert set(rep["counts"]) <= {"0", "1"}


def test_simulate_mmall_uses_chain_coupling(capsys, tmp_path):
    p = tmp_path / "c.qp"
    p.write_text("MMALL 1e-4\n")
    code, out, _ = run(capsys, "simulate", str(p), "--ions", "3", "--b", "120")
    assert code == 0
    assert json.loads(out)["representation"] == "diagonal"


def test_simulate_parse_error(capsys, tmp_path):
    p = tmp_path / "bad.qp"
    p.write_text("X 01 0\nU 01 0 oops 0\n")
    code, out, err = run(capsys, "simulate", str(p))
    assert code == 2
    assert out == ""
    assert f"{p}:2:8:" in err


def test_simulate_missing_file(capsys, tmp_path):
    code, _, err = run(capsys, "simulate", str(tmp_path / "none.qp"))
    assert code == 2


def test_measure_initial_state(capsys, prog_file):
    code, out, _ = run(capsys, "measure", str(prog_file), "--shots", "500", "--initial", "22")
    assert code == 0
    assert sum(json.loads(out)["counts"].values()) == 500
    code, _, _ = run(capsys, "measure", str(prog_file), "--initial", "3")
    assert code == 2


def test_verify_xor(capsys):
    code, out, _ = run(capsys, "verify", "xor")
    assert code == 0
    rep = json.loads(out)
    assert rep["checks"][0]["measured"] <= 1e-12


def test_verify_refocus(capsys):
    code, out, _ = run(capsys, "verify", "refocus", "--theta", "1.0")
    assert code == 0
    assert all(c["passed"] for c in json.loads(out)["checks"])


def test_verify_phasegate_failure_exit_1(capsys, tmp_path):
    sol = tmp_path / "table.json"
    sol.write_text(json.dumps({"alphas_pi": [-0.5628, -0.2604, -1.9045, -2.4299, -16.5854,
                                             19.1630, -0.2738, 5.3918, 0.3045]}))
    code, out, err = run(capsys, "verify", "phasegate", "--solution", str(sol))
    assert code == 1
    assert "verification failed" in err
    assert json.loads(out)["checks"][0]["measured"] > 0.5


def test_optimize_then_verify(capsys, tmp_path):
    out_file = tmp_path / "solution.json"
    code, out, _ = run(capsys, "optimize-phase", "--seed", "7", "--restarts", "64", "-o", str(out_file))
    assert code == 0
    assert out == ""
    sol = json.loads(out_file.read_text())
    assert sol["fidelity"] >= 1 - 1e-6
    assert len(sol["published_angles"]["variants"]) == 4
    code, _, _ = run(capsys, "verify", "phasegate", "--solution", str(out_file))
    assert code == 0
    assert not list(tmp_path.glob(".solution.json.*"))


def test_global_flags_before_or_after_subcommand(capsys):
    _, a, _ = run(capsys, "--out", "csv", "chain", "--ions", "3")
    _, b, _ = run(capsys, "chain", "--ions", "3", "--out", "csv")
    assert a == b
    assert a.startswith("index,u,z0_m,mode_freq_rad_s")


def test_repeat_runs_identical(capsys, prog_file):
    for argv in (["chain", "--ions", "4", "--b", "80"], ["measure", str(prog_file), "--seed", "3"]):
        _, first, _ = run(capsys, *argv)
        _, second, _ = run(capsys, *argv)
        assert first == second


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "spinqutrit", "verify", "xor"],
                         capture_output=True, text=True, check=False)
    assert res.returncode == 0
    assert json.loads(res.stdout)["passed"]
