"""Exception hierarchy shared by all modules."""


class VehicleEnergyError(Exception):
    """Base class for every error raised by this package."""


class ConfigurationError(VehicleEnergyError, ValueError):
    """A parameter set, vehicle definition or map violates its invariants."""


class InputError(VehicleEnergyError, ValueError):
    """An operating point or time series is not usable (non-finite, misaligned)."""


class ParseError(InputError):
    """A data file could not be parsed.

    ``row`` is the 1-based index of the offending data row; 0 denotes the
    header (or preamble) of the file.
    """

    def __init__(self, message, row=None):
        super().__init__(message if row is None else f"row {row}: {message}")
        self.row = row


class UnsupportedOperationError(VehicleEnergyError):
    """The operation does not apply to this duty class or transmission."""


class SingularityError(VehicleEnergyError, ArithmeticError):
    """A quantity is undefined at the requested point (e.g. division by zero)."""


class MapDomainError(VehicleEnergyError, ValueError):
    """A map lookup is undefined at the requested abscissa."""


class FitError(VehicleEnergyError, RuntimeError):
    """A fitting step failed; ``step`` names the failing step when known."""

    def __init__(self, message, step=None):
        super().__init__(message if step is None else f"{step}: {message}")
        self.step = step


class ConvergenceError(FitError):
    """An iterative solver hit its iteration cap."""
