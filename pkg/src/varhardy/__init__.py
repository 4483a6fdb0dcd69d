"""Numerical toolkit for Hardy spaces with variable exponents on uniform lattices."""
from .grid import Grid, GridFunction, Profile, ScaleLadder, convolve_at_scale, integrate
from .vlebesgue import ExponentFunction, MP0Context, luxemburg_norm, modular, parse_exponent

__all__ = [
    "Grid", "GridFunction", "Profile", "ScaleLadder", "convolve_at_scale", "integrate",
    "ExponentFunction", "MP0Context", "luxemburg_norm", "modular", "parse_exponent",
]
__version__ = "0.1.0"
