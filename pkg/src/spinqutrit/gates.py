"""Single-qutrit gates in the ascending basis (|0>, |1>, |2>).

Two-level rotations use the full-angle convention

    U_ij(theta, phi) = cos(theta) on the (i, j) block diagonal,
    <j|U|i> = i e^{i phi} sin(theta),  <i|U|j> = i e^{-i phi} sin(theta),

so U_ij(pi/2, 0) is a population-swapping pi pulse and U_ij(pi/4, pi/2) a
Hadamard on the block. Matrices printed in the |2>, |1>, |0> order convert
with :func:`flip_basis`.
"""

from __future__ import annotations

import cmath
from dataclasses import dataclass, field

import numpy as np

SQRT2 = np.sqrt(2.0)
SQRT3 = np.sqrt(3.0)

# lambda_3 and lambda_8 as printed (basis |2>, |1>, |0>)
LAMBDA3_PRINTED = np.diag([1.0, -1.0, 0.0])
LAMBDA8_PRINTED = np.diag([1.0, 1.0, -2.0]) / SQRT3

_PAIRS = {"01": (0, 1), "12": (1, 2), "02": (0, 2)}

CONVENTION = "cos-theta"


def _pair(ij) -> tuple[int, int]:
    key = str(ij)
    if key not in _PAIRS:
        raise ValueError(f"transition must be one of {sorted(_PAIRS)}, got {ij!r}")
    return _PAIRS[key]


def flip_basis(m: np.ndarray) -> np.ndarray:
    """Reorder a 3x3 matrix between ascending and printed (descending) bases."""
    return np.asarray(m)[::-1, ::-1].copy()


def is_unitary(u: np.ndarray, tol: float = 1e-12) -> bool:
    u = np.asarray(u)
    return bool(np.max(np.abs(u.conj().T @ u - np.eye(u.shape[0]))) <= tol)


def _two_level(lo: int, hi: int, theta: float, phi: float) -> np.ndarray:
    u = np.eye(3, dtype=complex)
    c, s = np.cos(theta), np.sin(theta)
    u[lo, lo] = u[hi, hi] = c
    u[hi, lo] = 1j * cmath.exp(1j * phi) * s
    u[lo, hi] = 1j * cmath.exp(-1j * phi) * s
    return u


def u01(theta: float, phi: float = 0.0) -> np.ndarray:
    return _two_level(0, 1, theta, phi)


def u12(theta: float, phi: float = 0.0) -> np.ndarray:
    return _two_level(1, 2, theta, phi)


def pi_pulse(ij) -> np.ndarray:
    """X_ij = U_ij(pi/2, 0)."""
    return rotation(ij, np.pi / 2, 0.0)


def hadamard(ij) -> np.ndarray:
    return rotation(ij, np.pi / 4, np.pi / 2)


def u02(theta: float, phi: float = 0.0) -> np.ndarray:
    """|0>-|2> rotation sandwiched between two |0>-|1> pi pulses.

    The direct transition is forbidden, so the pulses are X_01, then
    U_12(theta, phi), then the opposite-phase pi pulse U_01(pi/2, pi) = X_01^dagger.
    Closing with X_01 itself would leave X_01^2 = diag(-1, -1, 1) behind and
    spoil the diagonal phase gates built from this route.
    """
    return u01(np.pi / 2, np.pi) @ u12(theta, phi) @ u01(np.pi / 2, 0.0)


def rotation(ij, theta: float, phi: float = 0.0) -> np.ndarray:
    """Dispatch to :func:`u01`, :func:`u12` or :func:`u02`."""
    key = str(ij)
    if key == "01":
        return u01(theta, phi)
    if key == "12":
        return u12(theta, phi)
    if key == "02":
        return u02(theta, phi)
    raise ValueError(f"transition must be one of {sorted(_PAIRS)}, got {ij!r}")


def z_rot(ij, rho: float) -> np.ndarray:
    """Phase gate H_ij U_ij(rho, 0) H_ij^dagger on the named pair.

    Equals e^{+i rho} on the lower and e^{-i rho} on the upper level of the
    pair, identity on the third level.
    """
    h = hadamard(ij)
    z = h @ rotation(ij, rho, 0.0) @ h.conj().T
    if np.max(np.abs(z - np.diag(np.diag(z)))) > 1e-12:
        raise ArithmeticError(f"z_rot({ij}) is not diagonal")
    return np.diag(np.diag(z))


def z_rot_phases(ij, rho: float) -> np.ndarray:
    """Diagonal phases (radians) applied by ``z_rot(ij, rho)``."""
    return np.angle(np.diag(z_rot(ij, rho)))


@dataclass(frozen=True)
class DiffPhaseCalibration:
    """Linear map from (rho, sigma) to the achieved phases of U_D.

    U_D = diag(e^{-i(rho'+sigma')}, e^{i sigma'}, e^{i rho'}) in the
    ascending basis (the |2> entry carries rho', the |1> entry sigma') with
    (rho', sigma') = matrix @ (rho, sigma).
    """

    matrix: np.ndarray

    def achieved(self, rho: float, sigma: float) -> tuple[float, float]:
        r, s = self.matrix @ np.array([rho, sigma])
        return float(r), float(s)

    def request(self, rho_target: float, sigma_target: float) -> tuple[float, float]:
        """Inputs (rho, sigma) that realise the requested diagonal phases."""
        r, s = np.linalg.solve(self.matrix, np.array([rho_target, sigma_target]))
        return float(r), float(s)


def _u_d_raw(rho: float, sigma: float) -> np.ndarray:
    return z_rot("02", rho) @ z_rot("01", sigma)


def _calibrate() -> DiffPhaseCalibration:
    probe = 0.1
    cols = []
    for rho, sigma in ((probe, 0.0), (0.0, probe)):
        d = np.angle(np.diag(_u_d_raw(rho, sigma)))
        cols.append(np.array([d[2], d[1]]) / probe)
    m = np.array(cols).T
    return DiffPhaseCalibration(np.round(m, 9))


U_D_CALIBRATION = _calibrate()


def u_d(rho: float, sigma: float) -> np.ndarray:
    """Differential phase gate (Z_02)_rho (Z_01)_sigma.

    Use ``U_D_CALIBRATION.request`` to obtain inputs for exact target phases.
    """
    return _u_d_raw(rho, sigma)


def u_d_target(rho_target: float, sigma_target: float) -> np.ndarray:
    """U_D with |2> phase ``rho_target`` and |1> phase ``sigma_target``."""
    return u_d(*U_D_CALIBRATION.request(rho_target, sigma_target))


def fourier() -> np.ndarray:
    """F|j> = 3^-1/2 sum_l e^{2 pi i l j / 3} |l>."""
    l, j = np.meshgrid(np.arange(3), np.arange(3), indexing="ij")
    return np.exp(2j * np.pi * l * j / 3) / SQRT3


def m_ideal() -> np.ndarray:
    """Idealised M operator in the ascending basis: diag(-1, 1/sqrt2, 1)."""
    return flip_basis(np.diag([1.0, 1.0 / SQRT2, -1.0]))


def lambda3() -> np.ndarray:
    return flip_basis(LAMBDA3_PRINTED)


def lambda8() -> np.ndarray:
    return flip_basis(LAMBDA8_PRINTED)


@dataclass(frozen=True)
class GellMannCoeffs:
    a0: float
    a3: float
    a8: float

    def matrix(self) -> np.ndarray:
        """a0 I + a3 lambda3 + a8 lambda8 in the ascending basis."""
        return self.a0 * np.eye(3) + self.a3 * lambda3() + self.a8 * lambda8()


def gellmann_coeffs(m: np.ndarray) -> GellMannCoeffs:
    """Project a real diagonal matrix (ascending basis) onto 1, lambda3, lambda8."""
    m = np.asarray(m)
    if m.shape != (3, 3):
        raise ValueError("expected a 3x3 matrix")
    if np.max(np.abs(m - np.diag(np.diag(m)))) > 1e-12:
        raise ValueError("Gell-Mann projection needs a diagonal matrix")
    if np.max(np.abs(np.imag(np.diag(m)))) > 1e-12:
        raise ValueError("Gell-Mann projection needs real entries")
    p = np.real(np.diag(flip_basis(m)))
    a0 = p.sum() / 3
    a3 = 0.5 * np.trace(LAMBDA3_PRINTED @ np.diag(p))
    a8 = 0.5 * np.trace(LAMBDA8_PRINTED @ np.diag(p))
    return GellMannCoeffs(float(a0), float(a3), float(a8))


def gate_to_json(u: np.ndarray) -> dict:
    u = np.asarray(u, dtype=complex)
    return {
        "matrix": [[[float(v.real), float(v.imag)] for v in row] for row in u],
        "basis": "ascending",
        "convention": CONVENTION,
    }


def gate_from_json(data: dict) -> np.ndarray:
    if data.get("basis", "ascending") != "ascending":
        raise ValueError("only the ascending basis is supported")
    if data.get("convention", CONVENTION) != CONVENTION:
        raise ValueError(f"unsupported angle convention {data.get('convention')!r}")
    arr = np.asarray(data["matrix"], dtype=float)
    return arr[..., 0] + 1j * arr[..., 1]


# ---------------------------------------------------------------------------
# SU(3) decomposition

@dataclass(frozen=True)
class Factor:
    """One gate in a decomposition: ``kind`` is "u01", "u12" or "z_rot"."""

    kind: str
    params: tuple

    def matrix(self) -> np.ndarray:
        if self.kind == "u01":
            return u01(*self.params)
        if self.kind == "u12":
            return u12(*self.params)
        if self.kind == "z_rot":
            return z_rot(*self.params)
        raise ValueError(f"unknown factor kind {self.kind!r}")


@dataclass(frozen=True)
class SU3Decomposition:
    """U = e^{i global_phase} * (product of factors).

    ``factors`` are listed in application order: the first factor acts
    first, so the matrix product is factors[-1] @ ... @ factors[0].
    """

    factors: list = field(default_factory=list)
    global_phase: float = 0.0

    @property
    def rotations(self) -> list:
        return [f for f in self.factors if f.kind != "z_rot"]

    def matrix(self) -> np.ndarray:
        u = np.eye(3, dtype=complex)
        for f in self.factors:
            u = f.matrix() @ u
        return cmath.exp(1j * self.global_phase) * u


def _givens(a: complex, b: complex) -> tuple[float, float]:
    """(theta, phi) of the rotation sending (a, b) on (lo, hi) to (r, 0)."""
    if abs(b) < 1e-15:
        return 0.0, 0.0
    if abs(a) < 1e-15:
        return np.pi / 2, float(np.angle(1j * b)) if abs(b) else 0.0
    theta = float(np.arctan2(abs(b), abs(a)))
    phi = float(np.angle(1j * b / a))
    return theta, phi


def su3_decompose(u: np.ndarray, tol: float = 1e-10) -> SU3Decomposition:
    """Givens elimination of a 3x3 unitary into u01/u12 rotations and a phase.

    At most three two-level rotations are produced, followed (in matrix
    order, preceded in time) by a diagonal built from z_rot(01) and z_rot(12).
    Rotations with zero angle are dropped.
    """
    u = np.asarray(u, dtype=complex)
    if u.shape != (3, 3) or not is_unitary(u, 1e-9):
        raise ValueError("su3_decompose needs a 3x3 unitary")

    steps = []  # (kind, theta, phi), applied on the left in this order
    w = u.copy()
    for kind, lo, hi, col in (("u12", 1, 2, 0), ("u01", 0, 1, 0), ("u12", 1, 2, 1)):
        theta, phi = _givens(w[lo, col], w[hi, col])
        g = _two_level(lo, hi, theta, phi)
        w = g @ w
        steps.append((kind, theta, phi))
    d = np.diag(w)
    # w = G3 G2 G1 u is diagonal, so u = G1^dag G2^dag G3^dag diag(d)
    gphase = float(np.angle(d[0] * d[1] * d[2]) / 3)
    p = np.angle(d * np.exp(-1j * gphase))
    # z_rot(01, r) = diag(e^{ir}, e^{-ir}, 1), z_rot(12, s) = diag(1, e^{is}, e^{-is})
    r01 = p[0]
    r12 = -p[2]

    factors = []
    if abs(r01) > 1e-15 or abs(r12) > 1e-15:
        factors.append(Factor("z_rot", ("01", float(r01))))
        factors.append(Factor("z_rot", ("12", float(r12))))
    for kind, theta, phi in reversed(steps):
        if abs(theta) > 1e-15:
            # G(theta, phi)^dagger = G(-theta, phi)
            factors.append(Factor(kind, (-theta, phi)))
    dec = SU3Decomposition(factors, gphase)
    err = np.max(np.abs(dec.matrix() - u))
    if err > tol:
        raise ArithmeticError(f"SU(3) decomposition residual {err:.3e}")
    return dec
