"""Exception types raised across the package."""


class LdPathsError(Exception):
    """Base class for all package errors."""


class SpecParseError(LdPathsError, ValueError):
    """A model or rate grammar string could not be parsed."""


class DomainError(LdPathsError, ValueError):
    """Evaluation point outside the state space or rate domain."""


class UndefinedCurvatureError(LdPathsError, ValueError):
    pass


class DegenerateRateError(LdPathsError, ValueError):
    """A birth or death rate vanishes where the Legendre transform is needed."""


class UnsupportedModelError(LdPathsError, TypeError):
    pass


class NoSolutionError(LdPathsError, RuntimeError):
    """Shooting found no bracket for the terminal condition."""


class TooFewMinimaError(LdPathsError, ValueError):
    pass


class EnvelopeError(LdPathsError, RuntimeError):
    """Rejection sampler acceptance fell below the usable threshold."""


class UnderpoweredError(LdPathsError, RuntimeError):
    """Too few Monte Carlo paths landed in the terminal window."""
