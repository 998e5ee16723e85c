"""Exception types shared across the package."""


class PegctrlError(Exception):
    """Base class for all package-specific errors."""


class SimulationError(PegctrlError):
    """Event simulation failed (non-finite inputs or intensity explosion)."""


class ForecastError(PegctrlError):
    """Moment propagation or flow forecasting produced an invalid path."""


class SupplyExhaustedError(PegctrlError):
    """Outstanding supply reached zero; the replica terminates."""


class DynamicsError(PegctrlError):
    """Reserve state update produced non-finite values."""


class SolverDivergenceError(PegctrlError):
    """The forward-backward sweep diverged instead of contracting."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class ConfigurationError(PegctrlError):
    """Invalid configuration value or file."""
