"""Ion species constants and trap configuration."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import constants

AMU = constants.atomic_mass
E_CHARGE = constants.elementary_charge
HBAR = constants.hbar
MU_B = constants.physical_constants["Bohr magneton"][0]
EPS0 = constants.epsilon_0


@dataclass(frozen=True)
class IonSpecies:
    """Physical constants of one ion type.

    ``hyperfine_A`` is the ground-state hyperfine splitting as an angular
    frequency (rad/s). ``g_I`` multiplies ``-mu_B I_z`` in the Zeeman
    Hamiltonian and is 0 unless the nuclear term is wanted.
    """

    name: str
    mass: float
    charge: float
    g_J: float
    hyperfine_A: float
    g_I: float = 0.0
    nuclear_spin: float = 0.5

    def __post_init__(self):
        if not self.mass > 0:
            raise ValueError(f"mass must be positive, got {self.mass}")
        if not self.charge > 0:
            raise ValueError(f"charge must be positive, got {self.charge}")
        if not self.hyperfine_A > 0:
            raise ValueError(f"hyperfine_A must be positive, got {self.hyperfine_A}")

    @classmethod
    def from_record(cls, rec: dict) -> "IonSpecies":
        """Build from a species-registry JSON record (amu, e, Hz units)."""
        try:
            return cls(
                name=str(rec["name"]),
                mass=float(rec["mass_amu"]) * AMU,
                charge=float(rec["charge_e"]) * E_CHARGE,
                g_J=float(rec["g_J"]),
                g_I=float(rec.get("g_I", 0.0) or 0.0),
                hyperfine_A=2 * np.pi * float(rec["hyperfine_A_hz"]),
                nuclear_spin=float(rec.get("nuclear_spin", 0.5)),
            )
        except KeyError as exc:
            raise ValueError(f"species record missing key {exc}") from None

    def to_record(self) -> dict:
        return {
            "name": self.name,
            "mass_amu": self.mass / AMU,
            "charge_e": self.charge / E_CHARGE,
            "g_J": self.g_J,
            "g_I": self.g_I,
            "hyperfine_A_hz": self.hyperfine_A / (2 * np.pi),
            "nuclear_spin": self.nuclear_spin,
        }


@dataclass(frozen=True)
class TrapConfig:
    """Linear trap holding ``n_ions`` ions in the field B(z) = B0 + b*z.

    ``nu1`` is the axial (centre-of-mass) angular frequency in rad/s.
    """

    n_ions: int
    nu1: float
    B0: float = 0.0
    b: float = 0.0

    def __post_init__(self):
        if int(self.n_ions) != self.n_ions or self.n_ions < 1:
            raise ValueError(f"n_ions must be a positive integer, got {self.n_ions}")
        if not self.nu1 > 0:
            raise ValueError(f"nu1 must be positive, got {self.nu1}")
        if self.b < 0:
            raise ValueError(f"gradient b must be non-negative, got {self.b}")

    def with_gradient(self, b: float) -> "TrapConfig":
        return TrapConfig(self.n_ions, self.nu1, self.B0, b)

    def with_ions(self, n_ions: int) -> "TrapConfig":
        return TrapConfig(n_ions, self.nu1, self.B0, self.b)


YB171 = IonSpecies.from_record(
    {
        "name": "yb171",
        "mass_amu": 170.936,
        "charge_e": 1,
        "g_J": 2.0,
        "g_I": 0.0,
        "hyperfine_A_hz": 1.26e10,
    }
)

_REGISTRY = {"yb171": YB171}


def get_species(name: str) -> IonSpecies:
    try:
        return _REGISTRY[name.lower()]
    except KeyError:
        raise KeyError(f"unknown species {name!r}; known: {sorted(_REGISTRY)}") from None


def load_species_file(path: str | Path) -> dict[str, IonSpecies]:
    """Read a species registry file.

    The file holds either one record or a list of records, each shaped like
    ``{"name": "yb171", "mass_amu": 170.936, "charge_e": 1, "g_J": 2.0,
    "g_I": 0, "hyperfine_A_hz": 1.26e10}``.
    """
    data = json.loads(Path(path).read_text())
    records = data if isinstance(data, list) else [data]
    out = {}
    for rec in records:
        sp = IonSpecies.from_record(rec)
        if sp.nuclear_spin != 0.5:
            raise ValueError(f"species {sp.name}: only nuclear spin 1/2 is supported")
        out[sp.name.lower()] = sp
    return out
