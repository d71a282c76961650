"""Axial Coulomb chain in a harmonic trap: equilibrium, normal modes, J couplings.

Positions are solved in the dimensionless units z = gamma * u, where
gamma = (q^2 / (4 pi eps0 m nu1^2))^(1/3). In these units the force balance
on ion n reads

    u_n - sum_{m<n} (u_n - u_m)^-2 + sum_{m>n} (u_n - u_m)^-2 = 0

and the potential Hessian (in units of m nu1^2) has diagonal
1 + 2 sum_{m!=n} |u_n - u_m|^-3 and off-diagonal -2 |u_n - u_m|^-3.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .species import EPS0, HBAR, MU_B, IonSpecies, TrapConfig

# conservative spacing relative to the minimum-spacing fit
SPACING_SAFETY = 1.5
MIN_SPACING_COEFF = 2.018
MIN_SPACING_EXP = -0.559


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (last residual {residual:.3e})")
        self.residual = residual


def force_residual(u: np.ndarray) -> np.ndarray:
    """Net dimensionless force on each ion."""
    u = np.asarray(u, dtype=float)
    d = u[:, None] - u[None, :]
    np.fill_diagonal(d, 1.0)
    pair = np.sign(d) / d**2
    np.fill_diagonal(pair, 0.0)
    return u - pair.sum(axis=1)


def hessian(u) -> np.ndarray:
    """Dimensionless Hessian of the chain potential at positions ``u``."""
    u = np.asarray(u, dtype=float)
    n = len(u)
    d = np.abs(u[:, None] - u[None, :])
    off = ~np.eye(n, dtype=bool)
    if np.any(d[off] == 0):
        raise ValueError("coincident ion positions make the Coulomb Hessian singular")
    h = np.zeros((n, n))
    h[off] = -2.0 / d[off] ** 3
    h[np.diag_indices(n)] = 1.0 - h.sum(axis=1)
    return h


def solve_equilibrium(n_ions: int, tol: float = 1e-13, max_iter: int = 200) -> np.ndarray:
    """Equilibrium positions of ``n_ions`` ions, sorted ascending.

    Damped Newton iteration on the force balance, started from an even
    spread over [-N/4, N/4]. The result is symmetrised so that
    u[k] = -u[N-1-k] holds exactly.
    """
    if int(n_ions) != n_ions or n_ions < 1:
        raise ValueError(f"n_ions must be a positive integer, got {n_ions}")
    n_ions = int(n_ions)
    if n_ions == 1:
        return np.zeros(1)

    u = np.linspace(-0.25 * n_ions, 0.25 * n_ions, n_ions)
    f = force_residual(u)
    res = np.max(np.abs(f))
    for _ in range(max_iter):
        if res <= tol:
            break
        step = np.linalg.solve(hessian(u), -f)
        lam = 1.0
        while lam > 1e-8:
            trial = u + lam * step
            if np.all(np.diff(trial) > 0):
                f_trial = force_residual(trial)
                res_trial = np.max(np.abs(f_trial))
                if res_trial < res or lam < 1e-4:
                    break
            lam *= 0.5
        else:
            raise ConvergenceError("line search failed in equilibrium solve", res)
        u, f, res = trial, f_trial, res_trial
    u = 0.5 * (u - u[::-1])
    res = float(np.max(np.abs(force_residual(u))))
    if res > 10 * tol:
        raise ConvergenceError(f"equilibrium for N={n_ions} did not converge", res)
    return u


def length_scale(species: IonSpecies, nu1: float) -> float:
    """Coulomb length scale gamma in metres."""
    if not nu1 > 0:
        raise ValueError("nu1 must be positive")
    return (species.charge**2 / (4 * np.pi * EPS0 * species.mass * nu1**2)) ** (1.0 / 3.0)


def _canonical_sign(vec: np.ndarray) -> np.ndarray:
    mag = np.abs(vec)
    # first entry within rounding of the maximum magnitude decides the sign
    k = int(np.argmax(mag >= mag.max() - 1e-9))
    return -vec if vec[k] < 0 else vec


def normal_modes(h: np.ndarray):
    """Mode frequencies (units of nu1, ascending) and mode matrix D.

    Row l of D is the eigenvector of mode l, so h = D^T diag(nu_l^2) D.
    Each row is signed so that its largest-magnitude entry is positive.
    """
    h = np.asarray(h, dtype=float)
    if not np.allclose(h, h.T, atol=1e-12, rtol=0):
        raise ValueError("Hessian is not symmetric")
    evals, evecs = np.linalg.eigh(0.5 * (h + h.T))
    if np.any(evals <= 0):
        raise ValueError(f"non-positive Hessian eigenvalue {evals.min():.3e}: not a stable equilibrium")
    D = np.array([_canonical_sign(evecs[:, l]) for l in range(len(evals))])
    return np.sqrt(evals), D


@dataclass(frozen=True)
class ChainSolution:
    u: np.ndarray
    length_scale_gamma: float
    z0: np.ndarray
    hessian: np.ndarray
    mode_freqs: np.ndarray
    mode_matrix: np.ndarray
    nu1: float = field(default=1.0)

    @property
    def n_ions(self) -> int:
        return len(self.u)

    def min_gap(self) -> float:
        """Smallest neighbour distance in metres (inf for a single ion)."""
        return float(np.min(np.diff(self.z0))) if self.n_ions > 1 else float("inf")


def solve_chain(trap: TrapConfig, species: IonSpecies) -> ChainSolution:
    u = solve_equilibrium(trap.n_ions)
    gamma = length_scale(species, trap.nu1)
    h = hessian(u)
    ratios, D = normal_modes(h)
    return ChainSolution(
        u=u,
        length_scale_gamma=gamma,
        z0=gamma * u,
        hessian=h,
        mode_freqs=trap.nu1 * ratios,
        mode_matrix=D,
        nu1=trap.nu1,
    )


@dataclass(frozen=True)
class CouplingMatrix:
    """Pairwise J couplings in rad/s; zero diagonal."""

    j: np.ndarray

    @property
    def n(self) -> int:
        return self.j.shape[0]

    def nearest_neighbour(self) -> np.ndarray:
        return np.diag(self.j, k=1).copy()


def _coupling_prefactor(species: IonSpecies, b: float) -> float:
    return (species.g_J * MU_B * b) ** 2 / (2 * HBAR)


def coupling_from_modes(chain: ChainSolution, species: IonSpecies, b: float) -> np.ndarray:
    """J_nm = (g_J mu_B b)^2 / (2 m hbar) * sum_l D_ln D_lm / nu_l^2."""
    D = chain.mode_matrix
    w = 1.0 / np.asarray(chain.mode_freqs) ** 2
    j = _coupling_prefactor(species, b) / species.mass * (D.T * w) @ D
    np.fill_diagonal(j, 0.0)
    return j


def coupling_from_inverse(chain: ChainSolution, species: IonSpecies, b: float) -> np.ndarray:
    """J_nm = (g_J mu_B b)^2 / (2 hbar) * (A^-1)_nm with A = m nu1^2 * hessian."""
    a = species.mass * chain.nu1**2 * chain.hessian
    j = _coupling_prefactor(species, b) * np.linalg.inv(a)
    np.fill_diagonal(j, 0.0)
    return j


def coupling_matrix(chain: ChainSolution, species: IonSpecies, trap: TrapConfig) -> CouplingMatrix:
    """Gradient-induced spin-spin couplings of the chain.

    Evaluated as a mode sum and checked against the inverse-Hessian form.
    """
    if chain.n_ions != trap.n_ions:
        raise ValueError("chain was solved for a different number of ions")
    j = coupling_from_modes(chain, species, trap.b)
    if trap.b > 0 and chain.n_ions > 1:
        ref = coupling_from_inverse(chain, species, trap.b)
        scale = np.max(np.abs(ref))
        if np.max(np.abs(j - ref)) > 1e-10 * scale:
            raise ArithmeticError("mode-sum and inverse-Hessian couplings disagree")
    j = 0.5 * (j + j.T)
    return CouplingMatrix(j)


def min_spacing(n_ions: int, gamma: float) -> tuple[float, float]:
    """Fitted minimum ion spacing and the conservative spacing 1.5x that.

    Returns ``(dz_min, dz_conservative)`` in metres. The fit decreases as
    N^-0.559.
    """
    if n_ions < 2:
        raise ValueError("minimum spacing needs at least two ions")
    dz = MIN_SPACING_COEFF * gamma * n_ions**MIN_SPACING_EXP
    return dz, SPACING_SAFETY * dz


def perturbation_ratio(chain: ChainSolution, species: IonSpecies, trap: TrapConfig) -> float:
    """Size of the gradient coupling relative to the vibrational zero-point energy.

    For every mode l: (hbar/2) |sum_n M_max D_ln| q_zpf,l / (hbar nu_l / 2) with
    M_max the largest |dZ/dz| entry (rad/s per metre) and
    q_zpf,l = sqrt(hbar / (2 m nu_l)). Returns the maximum over modes.
    """
    from .zeeman import m_operator
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        m_max = np.max(np.abs(np.diag(m_operator(species, abs(trap.B0)))))
    grad = species.g_J * MU_B * trap.b / HBAR * m_max
    nu = np.asarray(chain.mode_freqs)
    q_zpf = np.sqrt(HBAR / (2 * species.mass * nu))
    coupling = np.abs(grad * chain.mode_matrix.sum(axis=1)) * q_zpf
    return float(np.max(coupling / nu))


@dataclass(frozen=True)
class GradientWindow:
    """Allowed gradient range. ``b_min``/``b_max`` are first-principles values (T/m).

    ``fit_formula`` holds the closed-form fits evaluated with nu1 taken in
    rad/s and in Hz, for comparison only.
    """

    b_min: float
    b_max: float
    feasible: bool
    max_ions_estimate: int
    epsilon_M: float
    probe_b: float
    fit_formula: dict

    def to_dict(self) -> dict:
        return {
            "first_principles": {
                "b_min_T_per_m": self.b_min,
                "b_max_T_per_m": self.b_max if np.isfinite(self.b_max) else None,
                "feasible": self.feasible,
            },
            "fit_formula": self.fit_formula,
            "epsilon_M": self.epsilon_M,
            "probe_b_T_per_m": self.probe_b,
            "max_ions_estimate": self.max_ions_estimate,
        }


def fit_formula_bounds(n_ions: int, nu1: float) -> dict:
    """Closed-form gradient bounds, evaluated with nu1 in rad/s and in Hz."""
    out = {}
    for label, nu in (("nu1_rad_s", nu1), ("nu1_hz", nu1 / (2 * np.pi))):
        b_max = 0.03 * n_ions**-0.441 * nu ** (2.0 / 3.0)
        b_min = 1.5e-9 * nu ** (5.0 / 3.0) * (3.2 * n_ions**0.559 + 0.5 * n_ions**1.559)
        out[label] = {"b_min_T_per_m": b_min, "b_max_T_per_m": b_max}
    return out


# upper end of the gradient search for b_max
B_SEARCH_CAP = 1e9


def max_gradient(chain: ChainSolution, species: IonSpecies, trap: TrapConfig,
                 epsilon_M: float) -> float:
    """Largest b keeping the middle M entry constant to ``epsilon_M`` over the chain.

    Uses the max - min spread of the exact entry. Returns inf when the
    constraint never binds below ``B_SEARCH_CAP``.
    """
    from .zeeman import m_uniformity

    if chain.n_ions < 2:
        return float("inf")

    def excess(b):
        return m_uniformity(chain, species, trap.with_gradient(b), reference="spread") - epsilon_M

    grid = np.geomspace(1e-3, B_SEARCH_CAP, 481)
    prev = 0.0
    for b in grid:
        if excess(b) > 0:
            return float(brentq(excess, prev, b, xtol=1e-12, rtol=1e-12))
        prev = b
    return float("inf")


def min_gradient(chain: ChainSolution, species: IonSpecies, trap: TrapConfig) -> float:
    """Smallest b at which neighbouring |0>-|1> lines are split by at least 2 nu_N + nu1.

    The split is taken from the exact site frequencies, minimised over
    neighbour pairs.
    """
    from .zeeman import site_frequencies

    if chain.n_ions < 2:
        return 0.0
    band = 2 * float(chain.mode_freqs[-1]) + trap.nu1

    def shortfall(b):
        t = trap.with_gradient(b)
        return site_frequencies(chain, species, t).min_neighbour_d_omega01 - band

    hi = 1.0
    # keep the field positive over the chain while bracketing
    b_sign_limit = abs(trap.B0) / max(np.max(np.abs(chain.z0)), 1e-300)
    while shortfall(hi) < 0:
        hi *= 2
        if hi > b_sign_limit:
            return float("inf")
    return float(brentq(shortfall, 0.0, hi, xtol=1e-12, rtol=1e-12))


def gradient_window(species: IonSpecies, trap: TrapConfig, epsilon_M: float,
                    max_ions_search: int = 60) -> GradientWindow:
    """Feasible magnetic-gradient window for the trap.

    ``max_ions_estimate`` is the largest N whose window contains the probe
    gradient: ``trap.b`` when positive, otherwise the geometric centre of the
    N = trap.n_ions window.
    """
    if not 0 < epsilon_M < 1:
        raise ValueError("epsilon_M must lie in (0, 1)")
    chain = solve_chain(trap, species)
    b_max = max_gradient(chain, species, trap, epsilon_M)
    b_min = min_gradient(chain, species, trap)
    feasible = bool(b_min <= b_max)

    if trap.b > 0:
        probe = trap.b
    elif feasible and np.isfinite(b_max):
        probe = float(np.sqrt(b_min * b_max))
    else:
        probe = b_min
    n_best = 0
    for n in range(2, max_ions_search + 1):
        t = trap.with_ions(n)
        c = chain if n == trap.n_ions else solve_chain(t, species)
        lo = b_min if n == trap.n_ions else min_gradient(c, species, t)
        if lo > probe:
            break
        hi = b_max if n == trap.n_ions else max_gradient(c, species, t, epsilon_M)
        if lo <= probe <= hi:
            n_best = n
    return GradientWindow(
        b_min=b_min,
        b_max=b_max,
        feasible=feasible,
        max_ions_estimate=n_best,
        epsilon_M=epsilon_M,
        probe_b=probe,
        fit_formula=fit_formula_bounds(trap.n_ions, trap.nu1),
    )
