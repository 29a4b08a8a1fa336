"""Exception hierarchy shared by all modules.

The CLI maps these onto exit codes: configuration problems exit with 2,
numerical breakdowns with 3.
"""


class TripleSymError(Exception):
    """Base class."""


class InputError(TripleSymError, ValueError):
    """Arguments outside the documented preconditions."""


class ConfigurationError(TripleSymError, ValueError):
    """Malformed family spec or missing capability (e.g. no analytic derivative)."""


class ConstructionError(TripleSymError, ValueError):
    """A requested coefficient family cannot be realized."""


class AnalysisError(TripleSymError):
    """Root-profile or partition analysis is not applicable to the field."""


class QualityError(AnalysisError):
    """A fitted approximation misses its residual bound."""


class NumericalError(TripleSymError, ArithmeticError):
    """Overflow, blow-up or step-size underflow during integration."""
