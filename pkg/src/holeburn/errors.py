"""Exception types shared across the package."""


class HoleburnError(Exception):
    """Base class for package-specific errors."""


class ConfigError(HoleburnError):
    """Invalid configuration document or file with an unexpected schema."""


class NoResonance(HoleburnError):
    """The automatic initializer found no dip exceeding the noise floor."""


class ConvergenceFailure(HoleburnError):
    """The optimizer hit its iteration limit without meeting tolerances.

    ``result`` carries the best fit found so far (or None) so callers can
    still report partial output.
    """

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class NumericalBreakdown(HoleburnError):
    """Non-finite residuals or a normal matrix singular at every damping."""


class InsufficientSpan(HoleburnError):
    """The phonon-number range of the data cannot constrain the knee n_c."""

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result
