"""Exact low-precision arithmetic emulation, mixed-precision kernels and analog-memory simulation."""

from .codec import DOUBLE, HALF, QUADRUPLE, SINGLE, TOY8, FloatFormat, RoundingMode
from .fixed import FixedFormat, make_rng

__all__ = ["DOUBLE", "HALF", "QUADRUPLE", "SINGLE", "TOY8", "FloatFormat", "RoundingMode",
           "FixedFormat", "make_rng"]
__version__ = "0.1.0"
