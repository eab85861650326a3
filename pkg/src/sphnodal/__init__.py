"""Numerical laboratory for nodal-set statistics of random spherical harmonics."""

from .specfun import SphereModel

__all__ = ["SphereModel"]
__version__ = "0.1.0"
