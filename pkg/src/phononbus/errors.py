"""Exception and warning types shared across the package."""


class TransducerError(Exception):
    """Base class for every error this package raises deliberately."""


class ConfigError(TransducerError):
    """Invalid, incomplete, or unknown run-configuration content."""


class NumericalIntegrityError(TransducerError):
    """A quantity violated a numerical consistency check (Hermiticity, residuals)."""


class IntegrationError(TransducerError):
    """Time evolution failed tolerances or produced non-finite values."""


class GridMismatchError(TransducerError):
    """Two field profiles do not share the same spatial grid."""

    def __init__(self, message: str, cell_index: int | None = None):
        super().__init__(message)
        self.cell_index = cell_index


class DegenerateConfigurationError(TransducerError):
    """Spin configuration is degenerate; closed-form eigenvectors are undefined."""


class UnachievableSplittingError(TransducerError):
    """No field on the requested sphere reaches the target spin splitting."""


class TransducerWarning(UserWarning):
    """Non-fatal validity warning (dispersive regime, transmon regime, ...)."""
