"""Simulation laboratory for the two-dimensional discrete Gaussian free field.

Exact spectral sampling of the field on the box {1..N}^2 with Dirichlet
boundary, its two-scale generalization, Gibbs-measure observables (free
energy, replica overlaps, high points) and the closed-form limits they are
compared against.
"""

__version__ = "0.1.0"


class ParameterError(ValueError):
    """Raised when an argument lies outside the supported domain."""
