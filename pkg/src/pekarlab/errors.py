class PekarError(Exception):
    """Base class for library errors."""


class ConfigurationError(PekarError, ValueError):
    """A grid, gauge or solver configuration that cannot be used."""


class UsageError(PekarError, ValueError):
    """Arguments violate an operation's preconditions."""


class NumericalError(PekarError, ArithmeticError):
    """A computation produced a non-finite or otherwise invalid number."""


class BoundaryMassWarning(UserWarning):
    """A field carries non-negligible weight next to the Dirichlet boundary."""
