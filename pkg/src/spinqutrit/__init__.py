"""Trapped-ion qutrit register toolkit.

Coulomb-chain mechanics and gradient-induced J couplings, Breit-Rabi level
structure of the F=1 qutrit, exact qutrit gate algebra, an N-qutrit pulse
program simulator and the two-qutrit gate constructions built on top of it.
"""

from .species import IonSpecies, TrapConfig, get_species, load_species_file, YB171

__version__ = "0.1.0"

__all__ = [
    "IonSpecies",
    "TrapConfig",
    "get_species",
    "load_species_file",
    "YB171",
    "__version__",
]
