"""Two-qutrit constructions: phase gate, generalised XOR, refocusing.

The phase gate P|j,k> = e^{2 pi i jk/3}|j,k> is built from a fixed skeleton
of pi pulses, four Z rotations and five MM evolution periods whose nine
angles are found numerically. XOR follows by Fourier conjugation.
"""

from __future__ import annotations

import itertools
from functools import lru_cache
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from . import gates
from .program import MMPair, PulseProgram, SingleQutrit, ZPhase, run_program
from .register import (
    RegisterUnitary,
    digits,
    embed,
    equal_up_to_local_phases,
    fidelity_up_to_global_phase,
)

# Published angles of the 17-pulse sequence, in units of pi.
PUBLISHED_ALPHAS_PI = (-0.5628, -0.2604, -1.9045, -2.4299, -16.5854, 19.1630, -0.2738, 5.3918, 0.3045)

ALPHA_RANGE = 20 * np.pi


def phase_gate_target() -> RegisterUnitary:
    """diag over |j,k> of e^{2 pi i jk/3}."""
    d = digits(2)
    return RegisterUnitary(2, diag=np.exp(2j * np.pi * d[0] * d[1] / 3))


def xor_target() -> RegisterUnitary:
    """Permutation |j,k> -> |j, j+k mod 3>."""
    m = np.zeros((9, 9), dtype=complex)
    for j, k in itertools.product(range(3), repeat=2):
        m[3 * j + (j + k) % 3, 3 * j + k] = 1.0
    return RegisterUnitary(2, dense=m)


@dataclass(frozen=True)
class XorConstruction:
    unitary: RegisterUnitary
    fourier_qutrit: int
    order: str  # "F P F^-1" or "F^-1 P F" as a matrix product
    deviation: float
    tried: dict = field(default_factory=dict)


def _fourier_conjugate(p: RegisterUnitary, qutrit: int, order: str) -> RegisterUnitary:
    f = gates.fourier()
    first, last = (f.conj().T, f) if order == "F P F^-1" else (f, f.conj().T)
    return RegisterUnitary(2, dense=embed(first, qutrit, 2).matrix()).then(p).then(
        RegisterUnitary(2, dense=embed(last, qutrit, 2).matrix()))


def xor_from_fourier(tol: float = 1e-12) -> XorConstruction:
    """Generalised XOR as Fourier-conjugated P.

    All four placements (F on either qutrit, either ordering) are tried and
    the closest to the |j, j+k> permutation is returned.
    """
    target = xor_target().matrix()
    p = phase_gate_target()
    tried = {}
    hit = None
    for qutrit in (0, 1):
        for order in ("F P F^-1", "F^-1 P F"):
            u = _fourier_conjugate(p, qutrit, order)
            dev = float(np.max(np.abs(u.matrix() - target)))
            tried[f"qutrit{qutrit}:{order}"] = dev
            if hit is None or dev < hit[3]:
                hit = (u, qutrit, order, dev)
    u, qutrit, order, dev = hit
    if dev > tol:
        raise ArithmeticError(f"no Fourier placement reproduces XOR: {tried}")
    return XorConstruction(u, qutrit, order, dev, tried)


# ---------------------------------------------------------------------------
# phase-gate pulse template

def phase_sequence_template(alphas=None) -> PulseProgram:
    """The 17-pulse phase-gate sequence, listed in printed order.

    Qutrits 0 and 1 stand for ions (1) and (2). ``alphas`` are in radians;
    ``None`` gives the zero-angle skeleton.
    """
    a = np.zeros(9) if alphas is None else np.asarray(alphas, dtype=float)
    if a.shape != (9,):
        raise ValueError("the template takes nine angles")

    def x(ij, ion):
        return SingleQutrit(ion, ij, np.pi / 2, 0.0)

    ops = [
        ZPhase(0, "01", a[0]), ZPhase(0, "12", a[1]), ZPhase(1, "01", a[2]), ZPhase(1, "12", a[3]),
        MMPair(0, 1, a[4]), x("01", 0), MMPair(0, 1, a[5]), x("01", 0),
        x("12", 0), MMPair(0, 1, a[6]), x("12", 0), x("12", 1),
        MMPair(0, 1, a[7]), x("12", 0), MMPair(0, 1, a[8]), x("12", 0), x("12", 1),
    ]
    return PulseProgram(2, ops)


def mm_segment_count(program: PulseProgram) -> int:
    return sum(isinstance(op, MMPair) for op in program.ops)


CONVENTIONS = tuple(
    {"mm_sign": s, "order": o} for s in (-1, +1) for o in ("forward", "reverse")
)


def template_unitary(alphas, mm_sign: int = -1, order: str = "forward") -> RegisterUnitary:
    prog = phase_sequence_template(alphas)
    if order == "reverse":
        prog = prog.reversed()
    elif order != "forward":
        raise ValueError(f"order must be 'forward' or 'reverse', got {order!r}")
    return run_program(prog, mm_sign=mm_sign)


class _CompiledTemplate:
    """Fast evaluator of the template unitary for a fixed convention.

    Agrees with :func:`template_unitary`; used inside the optimiser loop.
    """

    def __init__(self, mm_sign: int = -1, order: str = "forward"):
        prog = phase_sequence_template(np.zeros(9))
        ops = list(prog.ops)
        if order == "reverse":
            ops = ops[::-1]
        d = digits(2)
        m = np.real(np.diag(gates.m_ideal()))
        mm_gen = mm_sign * m[d[0]] * m[d[1]]
        z_gen = {ij: np.angle(np.diag(gates.z_rot(ij, 0.1))) / 0.1 for ij in ("01", "12")}
        self.steps = []
        # slot index in alphas for each parametric op of the printed order
        slot_of = {}
        k = 0
        for op in prog.ops:
            if isinstance(op, (ZPhase, MMPair)):
                slot_of[id(op)] = k
                k += 1
        for op in ops:
            if isinstance(op, ZPhase):
                self.steps.append(("diag", slot_of[id(op)], z_gen[op.ij][d[op.ion]]))
            elif isinstance(op, MMPair):
                self.steps.append(("diag", slot_of[id(op)], mm_gen))
            else:
                self.steps.append(("dense", None, embed(op.gate(), op.ion, 2).matrix()))

    def __call__(self, alphas) -> np.ndarray:
        u = np.eye(9, dtype=complex)
        for kind, slot, data in self.steps:
            if kind == "diag":
                u = np.exp(1j * alphas[slot] * data)[:, None] * u
            else:
                u = data @ u
        return u


@lru_cache(maxsize=None)
def _compiled(mm_sign: int, order: str) -> _CompiledTemplate:
    return _CompiledTemplate(mm_sign, order)


@lru_cache(maxsize=None)
def skeleton_unitary(mm_sign: int = -1, order: str = "forward") -> np.ndarray:
    """Template unitary with all angles zero (the bare X-pulse skeleton)."""
    u = _compiled(mm_sign, order)(np.zeros(9))
    u.flags.writeable = False
    return u


def phase_objective(alphas, mm_sign: int = -1, order: str = "forward") -> float:
    """1 - |tr(P^dagger U(alphas))| / 9; P is diagonal so only diag(U) enters."""
    u = _compiled(mm_sign, order)(np.asarray(alphas, dtype=float))
    return 1.0 - abs(np.vdot(phase_gate_target().diag, np.diag(u))) / 9.0


@dataclass(frozen=True)
class PhaseGateSolution:
    alphas: np.ndarray
    fidelity: float
    convention: dict
    converged: bool
    restart: int
    corrections: list = field(default_factory=list)

    @property
    def alphas_pi(self) -> list:
        return [float(a / np.pi) for a in self.alphas]

    def to_json(self) -> dict:
        return {
            "alphas_pi": self.alphas_pi,
            "fidelity": self.fidelity,
            "infidelity": max(1.0 - self.fidelity, 0.0),
            "converged": self.converged,
            "restart": self.restart,
            "convention": dict(self.convention),
            "corrections": [list(map(float, c)) for c in self.corrections],
        }


def evaluate_alphas(alphas, mm_sign: int = -1, order: str = "forward") -> dict:
    """Fidelity of one angle vector against P, plain and modulo local phases."""
    u = template_unitary(alphas, mm_sign, order)
    target = phase_gate_target()
    fid = fidelity_up_to_global_phase(u, target)
    ok, phases = equal_up_to_local_phases(u, target, tol=1e-6)
    corrected = fidelity_up_to_global_phase(
        RegisterUnitary(2, dense=u.matrix()).then_diagonal(_local_diag(phases)), target)
    return {
        "mm_sign": mm_sign,
        "order": order,
        "fidelity": fid,
        "local_phase_fidelity": corrected,
        "equal_up_to_local_phases": ok,
        "local_phases": phases.tolist(),
    }


def _local_diag(phases) -> np.ndarray:
    from .register import local_phase_diagonal

    return local_phase_diagonal(phases)


def evaluate_published_angles() -> dict:
    """Fidelity of the published angles under every sign/order convention."""
    alphas = np.array(PUBLISHED_ALPHAS_PI) * np.pi
    variants = [evaluate_alphas(alphas, c["mm_sign"], c["order"]) for c in CONVENTIONS]
    best = max(variants, key=lambda v: v["fidelity"])
    return {"alphas_pi": list(PUBLISHED_ALPHAS_PI), "variants": variants, "best": best}


def optimize_phase_angles(seed: int = 0, restarts: int = 64, tol: float = 1e-6,
                          mm_sign: int = -1, order: str = "forward",
                          stop_at_first: bool = True,
                          published_start: bool = True) -> PhaseGateSolution:
    """Multi-start Nelder-Mead search for the nine template angles.

    Restart 0 starts from the published angles (unless ``published_start`` is
    false), the rest from seeded uniform draws in [-20 pi, 20 pi]^9. Each
    restart re-seeds the simplex around its best point until the objective stops improving. The objective
    is 1 - |tr(U^dagger P)|/9. With ``stop_at_first`` the search ends at the
    first restart reaching ``1 - tol``; otherwise the best restart wins, ties
    going to the lowest index.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    if restarts < 1:
        raise ValueError("restarts must be at least 1")

    def objective(x):
        return phase_objective(x, mm_sign, order)

    rng = np.random.default_rng(seed)
    starts = [np.array(PUBLISHED_ALPHAS_PI) * np.pi] if published_start else []
    starts += [rng.uniform(-ALPHA_RANGE, ALPHA_RANGE, 9) for _ in range(restarts - len(starts))]

    best = None
    for k, x0 in enumerate(starts[:restarts]):
        x, f = _polish(objective, x0)
        if best is None or f < best[1]:
            best = (x, f, k)
        if stop_at_first and f <= tol:
            break
    x, f, k = best
    fid = 1.0 - f
    _, phases = equal_up_to_local_phases(template_unitary(x, mm_sign, order), phase_gate_target())
    return PhaseGateSolution(
        alphas=x,
        fidelity=float(fid),
        convention={"mm_sign": mm_sign, "order": order},
        converged=bool(f <= tol),
        restart=k,
        corrections=[] if f <= tol else phases.tolist(),
    )


def _polish(objective, x0, rounds: int = 30):
    x = np.asarray(x0, dtype=float)
    f = objective(x)
    for _ in range(rounds):
        res = minimize(objective, x, method="Nelder-Mead", bounds=[(-ALPHA_RANGE, ALPHA_RANGE)] * len(x),
                       options={"xatol": 1e-12, "fatol": 1e-16, "maxfev": 6000, "adaptive": True})
        improved = f - res.fun
        if res.fun < f:
            x, f = res.x, res.fun
        if improved < 1e-15 or f < 1e-14:
            break
    return x, float(f)


# ---------------------------------------------------------------------------
# refocusing

@dataclass(frozen=True)
class RefocusPlan:
    """Refocusing of MM evolution over total phase 3*theta.

    ``segments`` are the three sub-programs U1, U2, U3 (applied in that
    order). ``spectator_correction`` is the diagonal gate on qutrit 1 and
    ``pulse_phase_fix`` the theta-independent gate on qutrit 0 that undoes
    the sign picked up from pairs of pi pulses. With them,
    e^{i global_phase} * corrections * U3 U2 U1 = identity.
    """

    theta: float
    segments: tuple
    spectator_correction: np.ndarray
    pulse_phase_fix: np.ndarray
    global_phase: float
    spectator_coefficient: float
    generator: np.ndarray

    def composite(self) -> RegisterUnitary:
        u = RegisterUnitary.identity(2)
        for seg in self.segments:
            u = u.then(run_program(seg))
        return u

    def corrected(self) -> RegisterUnitary:
        return (self.composite()
                .then_local(self.pulse_phase_fix, 0)
                .then_local(self.spectator_correction, 1))

    def deviation(self) -> float:
        """max |e^{i phi} * corrected - 1| over the diagonal and off-diagonal."""
        m = np.exp(1j * self.global_phase) * self.corrected().matrix()
        return float(np.max(np.abs(m - np.eye(9))))


def _x(ij, ion):
    return SingleQutrit(ion, ij, np.pi / 2, 0.0)


def refocus_segments(theta: float) -> tuple:
    """U1 = (MM), U2 = X01 X12 (MM) X12 X01, U3 = X12 X01 (MM) X01 X12 on qutrit 0.

    U2 and U3 are palindromes, so reading them as matrix products or as
    chronological lists gives the same program.
    """
    u1 = PulseProgram(2, [MMPair(0, 1, theta)])
    u2 = PulseProgram(2, [_x("01", 0), _x("12", 0), MMPair(0, 1, theta), _x("12", 0), _x("01", 0)])
    u3 = PulseProgram(2, [_x("12", 0), _x("01", 0), MMPair(0, 1, theta), _x("01", 0), _x("12", 0)])
    return u1, u2, u3


def _separable_fit(values: np.ndarray):
    """Least-squares split of a 3x3 real array into c + a_j + b_k.

    Returns (c, a, b, residual) with a and b traceless.
    """
    v = np.asarray(values, dtype=float).reshape(3, 3)
    c = v.mean()
    a = v.mean(axis=1) - c
    b = v.mean(axis=0) - c
    resid = v - c - a[:, None] - b[None, :]
    return float(c), a, b, float(np.max(np.abs(resid)))


def refocus_plan(theta: float, tol: float = 1e-10) -> RefocusPlan:
    """Build the three-segment refocusing and solve for its corrections.

    The composite of the segments is exp(-i theta G) L with G diagonal and L
    the theta-independent result of the bare pulses. G is obtained from the
    pulse-conjugated M M generators and split into a global part, a part on
    each qutrit and a two-qutrit remainder; the remainder must vanish for
    the coupling to be refocused.
    """
    segs = refocus_segments(theta)
    m = np.real(np.diag(gates.m_ideal()))
    d = digits(2)
    mm = np.diag(m[d[0]] * m[d[1]]).astype(complex)

    # generator: sum over segments of the pulse-conjugated M(x)M
    gen = np.zeros(9)
    bare = RegisterUnitary.identity(2)
    for seg in segs:
        before = [op for op in seg.ops[: _mm_index(seg)]]
        p = run_program(PulseProgram(2, before)).matrix()
        conj = p.conj().T @ mm @ p
        if np.max(np.abs(conj - np.diag(np.diag(conj)))) > 1e-12:
            raise ArithmeticError("pulses do not map M(x)M to a diagonal operator")
        gen += np.real(np.diag(conj))
        bare = bare.then(run_program(PulseProgram(2, [op for op in seg.ops if not isinstance(op, MMPair)])))

    c, a, b, resid = _separable_fit(gen)
    if resid > 1e-12:
        raise ArithmeticError(f"segments leave a two-qutrit term of size {resid:.3e}")
    bare_m = bare.matrix()
    if np.max(np.abs(bare_m - np.diag(np.diag(bare_m)))) > 1e-12:
        raise ArithmeticError("bare pulses do not compose to a phase gate")
    bare_d = np.diag(bare_m)
    # bare pulses act on qutrit 0 only: read their phase gate off |j, 0>
    fix_diag = np.conj(bare_d[[0, 3, 6]])
    if np.max(np.abs(bare_d * fix_diag[d[0]] - 1)) > 1e-12:
        raise ArithmeticError("bare pulses are not a phase gate on qutrit 0")

    spectator = np.diag(np.exp(1j * theta * b))
    qutrit0 = np.diag(np.exp(1j * theta * a)) @ np.diag(fix_diag)
    lam = gates.gellmann_coeffs(gates.m_ideal())
    family = np.real(np.diag(lam.a3 * gates.lambda3() + lam.a8 * gates.lambda8()))
    coeff = float(np.dot(b, family) / np.dot(family, family))

    plan = RefocusPlan(
        theta=float(theta),
        segments=segs,
        spectator_correction=spectator,
        pulse_phase_fix=qutrit0,
        global_phase=float(theta * c),
        spectator_coefficient=coeff,
        generator=gen.reshape(3, 3),
    )
    dev = plan.deviation()
    if dev > max(tol, 1e-10):
        raise ArithmeticError(f"refocusing identity fails by {dev:.3e}")
    return plan


def _mm_index(prog: PulseProgram) -> int:
    for k, op in enumerate(prog.ops):
        if isinstance(op, MMPair):
            return k
    raise ValueError("segment has no MM period")


def qubit_refocus_demo(theta: float) -> dict:
    """Two-qubit echo check: sigma_x on qubit 1 reverses exp(i theta Z Z)."""
    sx = np.array([[0, 1], [1, 0]], dtype=complex)
    zz = np.diag([1.0, -1.0, -1.0, 1.0])
    fwd = np.diag(np.exp(1j * theta * np.diag(zz)))
    bwd = np.diag(np.exp(-1j * theta * np.diag(zz)))
    x1 = np.kron(sx, np.eye(2))
    flipped = x1 @ fwd @ x1
    echo = x1 @ fwd @ x1 @ fwd
    # the same with the pulses written as exp(-i pi/2 sigma_x) = -i sigma_x
    rx = np.kron(-1j * sx, np.eye(2))
    rotation_form = rx @ bwd @ rx
    return {
        "theta": float(theta),
        "conjugation_deviation": float(np.max(np.abs(flipped - bwd))),
        "echo_deviation": float(np.max(np.abs(echo - np.eye(4)))),
        "rotation_pulse_deviation_up_to_sign": float(
            min(np.max(np.abs(rotation_form - fwd)), np.max(np.abs(rotation_form + fwd)))),
        "rotation_pulse_sign": float(np.real(rotation_form[0, 0] / fwd[0, 0])),
    }
