"""Breit-Rabi levels of the F=1 qutrit and the site-dependent M operator.

Only nuclear spin I = 1/2 with J = 1/2 is handled. The Zeeman term is taken
as ``mu_B B (g_J J_z - g_I I_z)``; the logical levels are
|0> = |F=1, m=-1>, |1> = |F=1, m=0>, |2> = |F=1, m=+1>.

All matrices use the ascending logical basis (|0>, |1>, |2>).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

from .species import HBAR, MU_B, IonSpecies, TrapConfig

if TYPE_CHECKING:
    from .chain import ChainSolution

# field-parameter range where the diag(-1, 1/sqrt2, 1) idealisation is reasonable
OPERATING_X = (0.5, 2.0)


class OperatingRangeWarning(UserWarning):
    pass


class UnsupportedSpeciesError(ValueError):
    pass


@dataclass(frozen=True)
class BreitRabiPoint:
    """Level structure at one field value. Energies in J, rates in rad/s."""

    B: float
    x: float
    level_energies: dict
    energy_F0: float
    omega01: float
    omega12: float
    Delta: float
    delta: float
    d_omega01_dB: float
    d_omega12_dB: float
    m_diag: tuple = field(default=())


def _check_species(species: IonSpecies) -> None:
    if species.nuclear_spin != 0.5:
        raise UnsupportedSpeciesError(
            f"{species.name}: Breit-Rabi only implemented for I = 1/2 "
            f"(got I = {species.nuclear_spin})"
        )


def field_parameter(species: IonSpecies, B):
    """Dimensionless field x = (g_J + g_I) mu_B B / (hbar A)."""
    return (species.g_J + species.g_I) * MU_B * np.asarray(B, dtype=float) / (HBAR * species.hyperfine_A)


def field_for_x(species: IonSpecies, x: float) -> float:
    """Field (T) at which the mixing parameter equals ``x``."""
    return x * HBAR * species.hyperfine_A / ((species.g_J + species.g_I) * MU_B)


def _middle_entry(species: IonSpecies, B):
    x = field_parameter(species, B)
    return (species.g_J + species.g_I) / species.g_J * x / np.sqrt(1.0 + x * x)


def _m_diag(species: IonSpecies, B) -> np.ndarray:
    stretched = (species.g_J - species.g_I) / species.g_J
    return np.array([-stretched, float(_middle_entry(species, B)), stretched])


def breit_rabi_energies(species: IonSpecies, B: float) -> BreitRabiPoint:
    """Hyperfine Zeeman energies of the ground doublet at field ``B`` (tesla)."""
    _check_species(species)
    if B < 0:
        raise ValueError(f"field must be non-negative, got {B}")
    dW = HBAR * species.hyperfine_A
    x = float(field_parameter(species, B))
    root = np.sqrt(1.0 + x * x)
    lin = 0.5 * (species.g_J - species.g_I) * MU_B * B
    e_minus = dW / 4 - lin
    e_plus = dW / 4 + lin
    e_zero = -dW / 4 + 0.5 * dW * root
    e_f0 = -dW / 4 - 0.5 * dW * root

    omega01 = (e_zero - e_minus) / HBAR
    omega12 = (e_plus - e_zero) / HBAR
    d_Delta, d_delta, d01, d12 = transition_gradients(species, B)
    return BreitRabiPoint(
        B=float(B),
        x=x,
        level_energies={-1: e_minus, 0: e_zero, 1: e_plus},
        energy_F0=e_f0,
        omega01=omega01,
        omega12=omega12,
        Delta=omega01 + omega12,
        delta=omega01 - omega12,
        d_omega01_dB=d01,
        d_omega12_dB=d12,
        m_diag=tuple(_m_diag(species, B)),
    )


def transition_gradients(species: IonSpecies, B: float):
    """Analytic field derivatives ``(dDelta/dB, ddelta/dB, domega01/dB, domega12/dB)``.

    Units rad/(s T).
    """
    _check_species(species)
    x = float(field_parameter(species, B))
    d_Delta = (species.g_J - species.g_I) * MU_B / HBAR
    d_delta = (species.g_J + species.g_I) * MU_B / HBAR * x / np.sqrt(1.0 + x * x)
    return d_Delta, d_delta, 0.5 * (d_Delta + d_delta), 0.5 * (d_Delta - d_delta)


def m_operator(species: IonSpecies, B: float) -> np.ndarray:
    """Exact M operator dZ/dB / (g_J mu_B / hbar) at field ``B``.

    Returned as a real diagonal 3x3 matrix in the ascending basis; in the
    Breit-Rabi region (x = 1, g_I = 0) it is diag(-1, 1/sqrt(2), 1).
    """
    _check_species(species)
    x = float(field_parameter(species, B))
    if not OPERATING_X[0] <= x <= OPERATING_X[1]:
        warnings.warn(
            f"x = {x:.3g} lies outside {OPERATING_X}; the middle entry of M "
            "departs from 1/sqrt(2)",
            OperatingRangeWarning,
            stacklevel=2,
        )
    return np.diag(_m_diag(species, B))


def ion_fields(chain: "ChainSolution", trap: TrapConfig) -> np.ndarray:
    return trap.B0 + trap.b * chain.z0


@dataclass(frozen=True)
class SiteTable:
    """Per-ion transition frequencies along the chain (rad/s)."""

    z: np.ndarray
    B: np.ndarray
    omega01: np.ndarray
    omega12: np.ndarray
    m_diag: np.ndarray
    d_omega01: np.ndarray
    d_omega12: np.ndarray

    @property
    def min_neighbour_d_omega01(self) -> float:
        return float(np.min(np.abs(self.d_omega01))) if self.d_omega01.size else 0.0

    @property
    def min_neighbour_d_omega12(self) -> float:
        return float(np.min(np.abs(self.d_omega12))) if self.d_omega12.size else 0.0

    def to_records(self) -> list[dict]:
        return [
            {
                "z_m": float(self.z[n]),
                "B_T": float(self.B[n]),
                "omega01_rad_s": float(self.omega01[n]),
                "omega12_rad_s": float(self.omega12[n]),
                "m_diag": [float(v) for v in self.m_diag[n]],
            }
            for n in range(len(self.z))
        ]


def site_frequencies(chain: "ChainSolution", species: IonSpecies, trap: TrapConfig) -> SiteTable:
    """Evaluate the level structure at B(z0_n) for every ion.

    Neighbour differences are ``omega(n+1) - omega(n)``.
    """
    fields = ion_fields(chain, trap)
    if np.any(fields < 0):
        raise ValueError("field changes sign along the chain; increase B0 or lower b")
    points = [breit_rabi_energies(species, float(B)) for B in fields]
    w01 = np.array([p.omega01 for p in points])
    w12 = np.array([p.omega12 for p in points])
    return SiteTable(
        z=np.array(chain.z0, dtype=float),
        B=fields,
        omega01=w01,
        omega12=w12,
        m_diag=np.array([p.m_diag for p in points]),
        d_omega01=np.diff(w01),
        d_omega12=np.diff(w12),
    )


def m_uniformity(chain: "ChainSolution", species: IonSpecies, trap: TrapConfig,
                 reference: str = "center") -> float:
    """Chain-wide deviation of the middle M entry.

    ``reference="center"`` measures the largest departure from the value at
    the chain centre (field B0); ``reference="spread"`` measures max - min over
    the ions. The field magnitude is used, so ions past a field zero are
    still well defined.
    """
    mids = _middle_entry(species, np.abs(ion_fields(chain, trap)))
    if reference == "center":
        return float(np.max(np.abs(mids - _middle_entry(species, abs(trap.B0)))))
    if reference == "spread":
        return float(np.max(mids) - np.min(mids))
    raise ValueError(f"unknown reference {reference!r}")
