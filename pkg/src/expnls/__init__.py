"""Numerical laboratory for ground states of the 2D NLS with exponential
nonlinearity: profiles, linearized spectra, growing modes and blow-up."""

from .model import ModelParams
from .grid import RadialField, RadialGrid, make_grid

__all__ = ["ModelParams", "RadialField", "RadialGrid", "make_grid"]
__version__ = "0.1.0"
