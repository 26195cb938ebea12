"""Asymptotic eigenvalue expansions for degenerating planar Dirichlet
domains, validated against a direct 2D finite-difference eigensolver."""

__version__ = "0.1.0"

from . import (errors, series, numerics, regular, adiabatic,  # noqa: F401
               thinshape, ends, oracle2d)
