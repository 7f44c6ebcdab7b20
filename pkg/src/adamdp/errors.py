"""Exception types shared across the package."""


class AdaMDPError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(AdaMDPError, ValueError):
    """Array shapes of an instance, policy or adherence spec do not line up."""


class InvalidInstanceError(AdaMDPError, ValueError):
    """An instance fails validation; ``violations`` lists every problem found."""

    def __init__(self, violations):
        self.violations = list(violations)
        lines = "\n".join(f"  - {v}" for v in self.violations)
        super().__init__(f"instance is invalid:\n{lines}")


class InvalidSpecError(AdaMDPError, ValueError):
    """An adherence spec or policy argument is malformed for the requested operation."""


class GuardExceededError(AdaMDPError, RuntimeError):
    """An exhaustive enumeration would exceed its configured size guard."""


class BundleFormatError(AdaMDPError, ValueError):
    """An instance file cannot be parsed; the message names the offending field."""


class DegenerateReturnError(AdaMDPError, ZeroDivisionError):
    """A relative quantity was requested where the reference return is zero."""
