import json
from pathlib import Path

import numpy as np
import pytest
from scipy.linalg import expm

from spinqutrit import gates
from spinqutrit.program import MMPair, PulseProgram, SingleQutrit, run_program
from spinqutrit.register import (
    RegisterUnitary,
    digits,
    equal_up_to_local_phases,
    fidelity_up_to_global_phase,
    mm_pair,
)
from spinqutrit.synthesis import (
    CONVENTIONS,
    PUBLISHED_ALPHAS_PI,
    _CompiledTemplate,
    _fourier_conjugate,
    evaluate_alphas,
    evaluate_published_angles,
    mm_segment_count,
    optimize_phase_angles,
    phase_gate_target,
    phase_objective,
    phase_sequence_template,
    qubit_refocus_demo,
    refocus_plan,
    skeleton_unitary,
    template_unitary,
    xor_from_fourier,
    xor_target,
)

GOLDEN = Path(__file__).parent / "golden" / "published_angles.json"
OMEGA = np.exp(2j * np.pi / 3)


def idx(j, k):
    return 3 * j + k


# --- targets --------------------------------------------------------------

def test_phase_gate_entries():
    p = phase_gate_target()
    assert p.is_diagonal
    np.testing.assert_allclose(p.diag[[idx(0, 0), idx(0, 1), idx(0, 2)]], 1)
    assert p.diag[idx(1, 1)] == pytest.approx(OMEGA)
    assert p.diag[idx(2, 2)] == pytest.approx(np.exp(8j * np.pi / 3))
    assert p.diag[idx(2, 2)] == pytest.approx(OMEGA)
    assert p.diag[idx(1, 2)] == pytest.approx(OMEGA**2)


def test_xor_target_permutation():
    x = xor_target().matrix()
    assert np.all((x == 0) | (x == 1))
    np.testing.assert_array_equal(x.sum(axis=0), 1)
    np.testing.assert_array_equal(x.sum(axis=1), 1)
    for k in range(3):
        assert x[idx(0, k), idx(0, k)] == 1
    assert x[idx(2, 1), idx(2, 2)] == 1


def test_xor_from_fourier():
    xc = xor_from_fourier()
    assert xc.deviation <= 1e-12
    assert np.max(np.abs(xc.unitary.matrix() - xor_target().matrix())) <= 1e-12
    assert xc.fourier_qutrit == 1
    assert len(xc.tried) == 4
    assert min(xc.tried.values()) == xc.deviation


def test_xor_twice_adds_twice():
    u = xor_from_fourier().unitary.matrix()
    uu = u @ u
    for j in range(3):
        for k in range(3):
            out = np.zeros(9)
            out[idx(j, (2 * j + k) % 3)] = 1
            np.testing.assert_allclose(uu[:, idx(j, k)], out, atol=1e-12)


def test_fourier_on_control_swaps_roles():
    # P is symmetric in j and k, so F on qutrit 0 also yields a modular adder,
    # but one controlled by qutrit 1: it is not the XOR target
    for order, sign in (("F^-1 P F", +1), ("F P F^-1", -1)):
        m = _fourier_conjugate(phase_gate_target(), 0, order).matrix()
        assert np.max(np.abs(m - xor_target().matrix())) > 0.5
        for j in range(3):
            for k in range(3):
                assert abs(m[idx((j + sign * k) % 3, k), idx(j, k)]) == pytest.approx(1, abs=1e-12)


# --- template -------------------------------------------------------------

def test_template_has_five_mm_periods():
    prog = phase_sequence_template()
    assert mm_segment_count(prog) == 5
    assert len(prog.ops) == 17


def test_zero_angles_give_skeleton():
    prog = phase_sequence_template(np.zeros(9))
    bare = PulseProgram(2, [op for op in prog.ops if isinstance(op, SingleQutrit)])
    np.testing.assert_allclose(run_program(prog).matrix(), run_program(bare).matrix(), atol=1e-15)
    np.testing.assert_allclose(skeleton_unitary(), run_program(bare).matrix(), atol=1e-15)


def test_objective_at_zero_is_skeleton_distance():
    d = 1 - fidelity_up_to_global_phase(RegisterUnitary(2, dense=skeleton_unitary()), phase_gate_target())
    assert phase_objective(np.zeros(9)) == d
    assert phase_objective(np.zeros(9)) == phase_objective(np.zeros(9))


def test_template_rejects_wrong_length():
    with pytest.raises(ValueError):
        phase_sequence_template(np.zeros(8))


def test_compiled_template_matches_program():
    rng = np.random.default_rng(0)
    for conv in CONVENTIONS:
        ev = _CompiledTemplate(conv["mm_sign"], conv["order"])
        for _ in range(5):
            a = rng.uniform(-10, 10, 9)
            np.testing.assert_allclose(ev(a), template_unitary(a, **conv).matrix(), atol=1e-12)


def dense_template(alphas_pi, mm_sign):
    """Independent construction: printed order read chronologically, dense matrices only."""
    a = np.asarray(alphas_pi) * np.pi
    m = gates.m_ideal()
    mm = np.kron(m, m)
    i3 = np.eye(3)

    def on(g, ion):
        return np.kron(g, i3) if ion == 0 else np.kron(i3, g)

    def x(ij, ion):
        return on(gates.rotation(ij, np.pi / 2, 0), ion)

    def ev(t):
        return expm(1j * mm_sign * t * mm)

    seq = [on(gates.z_rot("01", a[0]), 0), on(gates.z_rot("12", a[1]), 0),
           on(gates.z_rot("01", a[2]), 1), on(gates.z_rot("12", a[3]), 1),
           ev(a[4]), x("01", 0), ev(a[5]), x("01", 0), x("12", 0), ev(a[6]), x("12", 0),
           x("12", 1), ev(a[7]), x("12", 0), ev(a[8]), x("12", 0), x("12", 1)]
    u = np.eye(9, dtype=complex)
    for g in seq:
        u = g @ u
    return u


def test_published_angles_golden():
    golden = json.loads(GOLDEN.read_text())
    report = evaluate_published_angles()
    assert report["alphas_pi"] == golden["alphas_pi"] == list(PUBLISHED_ALPHAS_PI)
    for got, want in zip(report["variants"], golden["variants"]):
        assert (got["mm_sign"], got["order"]) == (want["mm_sign"], want["order"])
        assert got["fidelity"] == pytest.approx(want["fidelity"], abs=1e-12)
        assert got["local_phase_fidelity"] == pytest.approx(want["local_phase_fidelity"], abs=1e-6)
    assert report["best"]["fidelity"] == pytest.approx(golden["best"]["fidelity"], abs=1e-12)


def test_published_angles_fidelity_independent_construction():
    golden = json.loads(GOLDEN.read_text())
    target = np.diag(phase_gate_target().diag)
    for want in golden["variants"]:
        if want["order"] != "forward":
            continue
        u = dense_template(PUBLISHED_ALPHAS_PI, want["mm_sign"])
        fid = abs(np.trace(target.conj().T @ u)) / 9
        assert fid == pytest.approx(want["fidelity"], abs=1e-12)


# --- optimiser ------------------------------------------------------------

@pytest.mark.parametrize("seed", [0, 7])
def test_optimizer_reaches_target(seed):
    sol = optimize_phase_angles(seed=seed, restarts=64)
    assert sol.converged
    assert sol.fidelity >= 1 - 1e-6
    # the returned angles really implement P, checked on an independent path
    u = template_unitary(sol.alphas, **sol.convention)
    assert fidelity_up_to_global_phase(u, phase_gate_target()) >= 1 - 1e-6
    assert np.all(np.abs(sol.alphas) <= 20 * np.pi)


def test_optimizer_from_random_starts_only():
    sol = optimize_phase_angles(seed=3, restarts=64, published_start=False)
    assert sol.fidelity >= 1 - 1e-6
    u = dense_template(sol.alphas_pi, -1)
    assert abs(np.trace(np.diag(phase_gate_target().diag).conj().T @ u)) / 9 >= 1 - 1e-6


def test_optimizer_deterministic():
    a = optimize_phase_angles(seed=5, restarts=4, published_start=False).to_json()
    b = optimize_phase_angles(seed=5, restarts=4, published_start=False).to_json()
    assert a == b


def test_optimizer_argument_checks():
    with pytest.raises(ValueError):
        optimize_phase_angles(restarts=0)
    with pytest.raises(ValueError):
        optimize_phase_angles(tol=0)


def test_evaluate_alphas_reports_local_phases():
    sol = optimize_phase_angles(seed=0, restarts=8)
    rep = evaluate_alphas(sol.alphas)
    assert rep["equal_up_to_local_phases"]
    assert rep["local_phase_fidelity"] >= rep["fidelity"] - 1e-12


# --- refocusing -----------------------------------------------------------

def test_refocus_zero_theta():
    plan = refocus_plan(0.0)
    np.testing.assert_allclose(plan.spectator_correction, np.eye(3), atol=0)
    assert plan.global_phase == 0
    assert plan.deviation() <= 1e-15


@pytest.mark.parametrize("theta", [0.1, 1.0, 2.7])
def test_refocus_identity(theta):
    plan = refocus_plan(theta)
    a0 = gates.gellmann_coeffs(gates.m_ideal()).a0
    assert plan.deviation() <= 1e-10
    assert plan.global_phase == pytest.approx(3 * a0**2 * theta, abs=1e-10)
    assert plan.spectator_coefficient == pytest.approx(3 * a0, abs=1e-12)
    # spectator correction is diagonal and acts on qutrit 1 only
    assert np.count_nonzero(plan.spectator_correction - np.diag(np.diag(plan.spectator_correction))) == 0


def test_refocus_generator_is_separable():
    plan = refocus_plan(0.8)
    g = plan.generator
    resid = g - g.mean(axis=1, keepdims=True) - g.mean(axis=0, keepdims=True) + g.mean()
    assert np.max(np.abs(resid)) < 1e-12


def test_refocus_spectator_matches_gell_mann_form():
    theta = 1.3
    c = gates.gellmann_coeffs(gates.m_ideal())
    plan = refocus_plan(theta)
    expect = expm(1j * 3 * c.a0 * theta * (c.a3 * gates.lambda3() + c.a8 * gates.lambda8()))
    np.testing.assert_allclose(plan.spectator_correction, expect, atol=1e-12)


def test_refocus_pulse_phase_fix_is_theta_independent():
    ref = refocus_plan(0.0).pulse_phase_fix
    np.testing.assert_allclose(np.diag(ref), [-1, 1, -1], atol=1e-15)
    for theta in (0.4, -2.0, 7.0):
        np.testing.assert_allclose(refocus_plan(theta).pulse_phase_fix, ref, atol=1e-12)
    # the generator depends on the spectator level only
    g = refocus_plan(1.0).generator
    np.testing.assert_allclose(g - g[0], 0, atol=1e-12)


def test_bare_mm_is_not_refocused():
    # negative control: 3 theta of plain evolution is not a product of local phases
    u = mm_pair(3.0, 0, 1, 2)
    ok, _ = equal_up_to_local_phases(u, RegisterUnitary.identity(2))
    assert not ok


def three_qutrit_segment(pre, th01, th02):
    ops = list(pre) + [MMPair(0, 1, th01), MMPair(0, 2, th02)] + list(reversed(pre))
    return PulseProgram(3, ops)


def x0(ij):
    return SingleQutrit(0, ij, np.pi / 2, 0.0)


def test_refocus_three_qutrits_with_two_spectators():
    # pulses on qutrit 0 refocus its couplings to qutrits 1 and 2 at once
    th01, th02 = 0.9, -0.35
    segs = [three_qutrit_segment([], th01, th02),
            three_qutrit_segment([x0("01"), x0("12")], th01, th02),
            three_qutrit_segment([x0("12"), x0("01")], th01, th02)]
    u = RegisterUnitary.identity(3)
    for s in segs:
        u = u.then(run_program(s))
    ok, _ = equal_up_to_local_phases(u, RegisterUnitary.identity(3), tol=1e-10)
    assert ok
    # negative control: drop the pulses from one segment
    bad = RegisterUnitary.identity(3)
    for s in (segs[0], segs[0], segs[2]):
        bad = bad.then(run_program(s))
    ok, _ = equal_up_to_local_phases(bad, RegisterUnitary.identity(3), tol=1e-6)
    assert not ok


def test_refocus_random_thetas():
    rng = np.random.default_rng(2024)
    a0 = gates.gellmann_coeffs(gates.m_ideal()).a0
    for theta in rng.uniform(-3 * np.pi, 3 * np.pi, 50):
        plan = refocus_plan(theta)
        assert plan.deviation() <= 1e-10
        assert abs(plan.global_phase - 3 * a0**2 * theta) <= 1e-10


# --- qubit echo -----------------------------------------------------------

def test_qubit_conjugation():
    r = qubit_refocus_demo(np.pi / 7)
    assert r["conjugation_deviation"] <= 1e-14
    assert r["echo_deviation"] <= 1e-14
    assert r["rotation_pulse_deviation_up_to_sign"] <= 1e-14
    assert r["rotation_pulse_sign"] == pytest.approx(-1, abs=1e-14)


def test_qubit_zero_theta():
    r = qubit_refocus_demo(0.0)
    assert r["conjugation_deviation"] == 0 and r["echo_deviation"] == 0


def test_qubit_echo_random():
    for theta in np.random.default_rng(1).uniform(-10, 10, 20):
        assert qubit_refocus_demo(theta)["echo_deviation"] <= 1e-14


def test_digits_layout_used_by_targets():
    d = digits(2)
    np.testing.assert_allclose(phase_gate_target().diag, OMEGA ** (d[0] * d[1]))
