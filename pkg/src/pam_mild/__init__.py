"""Mild solutions of the 1-D parabolic Anderson model with a Brownian-derivative potential on (0, pi).

Modules:
    spectral    sine/cosine bases, heat semigroup, Sobolev norms, exponential quadrature
    noise       Brownian and fractional paths, mollifiers, Hoelder norms
    mild        the mild fixed-point solver (Picard on time blocks)
    reference   mollified-potential oracles (direct splitting, exponential transform)
    chaos       Wiener chaos expansions, Wick and usual products, the propagator system
    regularity  exponent estimators and smoothing-rate studies
    studies     study registry behind the ``pam-mild`` command
"""

from .errors import (
    ConfigurationError,
    DomainError,
    NonConvergenceError,
    NumericalError,
    PAMError,
    StabilityError,
    TruncationError,
)
from .mild import MildSolution, SolverConfig, partitioned_solve, picard_solve_block, residual_check
from .noise import BrownianPath, MollifierKind, MollifierSpec, mollify, sample_brownian_kl
from .report import RunReport
from .spectral import Basis, GridFunction, SpectralField, TimeSeriesField

__version__ = "0.1.0"

__all__ = [
    "Basis",
    "BrownianPath",
    "ConfigurationError",
    "DomainError",
    "GridFunction",
    "MildSolution",
    "MollifierKind",
    "MollifierSpec",
    "NonConvergenceError",
    "NumericalError",
    "PAMError",
    "RunReport",
    "SolverConfig",
    "SpectralField",
    "StabilityError",
    "TimeSeriesField",
    "TruncationError",
    "mollify",
    "partitioned_solve",
    "picard_solve_block",
    "residual_check",
    "sample_brownian_kl",
]
