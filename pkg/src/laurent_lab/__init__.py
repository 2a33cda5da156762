"""Finite-volume experiments for random operators built from Laurent matrices.

A symbol on the torus defines a Laurent matrix; adding an i.i.d. diagonal
potential gives a random operator whose integrated density of states is
estimated here from finite sections with bracketing boundary conditions.
"""

from .disorder import Bernoulli, PointMass, PowerLaw, Uniform, sample_potential
from .errors import LaurentLabError
from .ids import Model, mc_ids, sandwich_curves
from .operator import DIRICHLET, NEUMANN, SIMPLE, IntegerSymbolSpec, assemble_modified, assemble_simple
from .symbol import THREE_MINIMA_EXAMPLE, Symbol, fourier_coefficients

__all__ = [
    "Bernoulli", "PointMass", "PowerLaw", "Uniform", "sample_potential", "LaurentLabError",
    "Model", "mc_ids", "sandwich_curves", "DIRICHLET", "NEUMANN", "SIMPLE", "IntegerSymbolSpec",
    "assemble_modified", "assemble_simple", "THREE_MINIMA_EXAMPLE", "Symbol", "fourier_coefficients",
]
