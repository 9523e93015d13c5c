"""Radial solver and verification tools for steady states of the attractive
Schrödinger-Poisson-Slater system

    -Delta Q + lambda Q = (I_2 * Q^2) Q - C_S Q^2,    Q = Q(|x|) in R^3.

Modules
-------
radial_core   grids, 3D radial quadrature, Laplacian, CSV persistence
hartree       Newton potential by cumulative sums
energy        energy functional, gradient, scalings, rearrangement
groundstate   constrained minimiser and scaling checks
shooting      bisection shooting and self-consistent iteration
asymptotics   far-field laws (decay exponent, 1/r expansion, envelope)
verification  acceptance checks used by ``sps-radial verify-all``
"""

__version__ = "0.1.0"

from .energy import EnergyBreakdown, ModelParams, energy, l2_gradient  # noqa: E402
from .groundstate import GroundState, SolverConfig, minimize, unit_ground_state  # noqa: E402
from .hartree import hartree_potential  # noqa: E402
from .radial_core import RadialField, RadialGrid, make_grid  # noqa: E402

__all__ = [
    "EnergyBreakdown",
    "GroundState",
    "ModelParams",
    "RadialField",
    "RadialGrid",
    "SolverConfig",
    "energy",
    "hartree_potential",
    "l2_gradient",
    "make_grid",
    "minimize",
    "unit_ground_state",
]
