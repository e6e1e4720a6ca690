"""Kubo linear-response conductivity for non-interacting electron models."""

from .core import (REDUCED, ConductivityResult, FrequencyGrid, KuboError, Lattice,
                   NoConvergence, NonPositiveGamma, PhysicalConstants, k_grid, parse_sweep,
                   reciprocal_of)
from .fermi import OccupationSpec, fermi_derivative, fermi_dirac, maxwellian, solve_mu
from .models import (BlochModel, FiniteModel, TightBinding, build_chain, build_free_gas,
                     build_planewave_bloch, dimerized_chain, equilibrium_current,
                     load_tight_binding, ring)

__version__ = "0.1.0"

__all__ = [
    "REDUCED", "ConductivityResult", "FrequencyGrid", "KuboError", "Lattice", "NoConvergence",
    "NonPositiveGamma", "PhysicalConstants", "k_grid", "parse_sweep", "reciprocal_of",
    "OccupationSpec", "fermi_derivative", "fermi_dirac", "maxwellian", "solve_mu",
    "BlochModel", "FiniteModel", "TightBinding", "build_chain", "build_free_gas",
    "build_planewave_bloch", "dimerized_chain", "equilibrium_current", "load_tight_binding",
    "ring", "__version__",
]
