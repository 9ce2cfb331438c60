"""Exception hierarchy shared by all mfchaos modules."""


class MfChaosError(Exception):
    """Base class for every error raised by mfchaos."""


class BracketFailure(MfChaosError):
    """No sign change was found while expanding the root bracket."""


class NonConvergence(MfChaosError):
    """Root iteration budget exhausted before reaching the tolerance."""


class DegenerateDriver(MfChaosError):
    """Inferred structural constants are not strictly positive."""


class UnderResolvedKernel(MfChaosError):
    """Mollifier width is smaller than two grid spacings."""


class CflViolation(MfChaosError):
    """Requested time step exceeds the explicit stability limit."""


class BlowUp(MfChaosError):
    """Density sup-norm exceeded the blow-up threshold."""

    def __init__(self, message, t=None):
        super().__init__(message)
        self.t = t


class EmptyInput(MfChaosError):
    """A distribution argument carries no mass or no samples."""


class NonPositiveEnergy(MfChaosError):
    """An energy series contains a zero or negative entry."""


class WindowEmpty(MfChaosError):
    """No snapshot falls inside the requested time window."""


class ParseError(MfChaosError):
    """Malformed configuration text."""

    def __init__(self, message, line, column=1):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


class ValidationError(MfChaosError):
    """A configuration value violates a constraint."""

    def __init__(self, key, constraint):
        super().__init__(f"{key}: {constraint}")
        self.key = key
        self.constraint = constraint


class StabilityWarning(UserWarning):
    """The coercivity margin is not positive for the given initial data."""
