"""Numerical laboratory for the interacting dimer model on even tori.

Exact free-fermion solutions (Pfaffians, propagators), brute-force
enumeration, plaquette-interaction Monte Carlo, height-field statistics,
and a scale decomposition of the Majorana propagator.
"""

__version__ = "0.1.0"

from .lattice import TorusLattice, build_torus, build_paths, winding_loops
from .pfaffian import SingularMatrixError, pfaffian, log_pfaffian

__all__ = [
    "TorusLattice",
    "build_torus",
    "build_paths",
    "winding_loops",
    "SingularMatrixError",
    "pfaffian",
    "log_pfaffian",
    "__version__",
]
