"""Exception types shared by the solvers and studies."""


class PAMError(Exception):
    """Base class for every error raised by this package."""


class ConfigurationError(PAMError, ValueError):
    """Invalid parameters: truncation orders, grid sizes, config files."""


class DomainError(PAMError, ValueError):
    """An operation was asked to act outside its mathematical domain."""


class NumericalError(PAMError, ArithmeticError):
    """A factorisation or other numerical kernel failed."""


class StabilityError(PAMError, RuntimeError):
    """Explicit time step too large for the potential."""


class TruncationError(PAMError, RuntimeError):
    """Chaos truncation dropped more mass than allowed."""

    def __init__(self, message, dropped_mass):
        super().__init__(message)
        self.dropped_mass = dropped_mass


class NonConvergenceError(PAMError, RuntimeError):
    """Picard iteration hit its iteration cap.

    Carries the contraction-ratio history so callers can tell whether the
    block was simply too long for the potential.
    """

    def __init__(self, message, ratios=(), block_index=None):
        super().__init__(message)
        self.ratios = list(ratios)
        self.block_index = block_index
