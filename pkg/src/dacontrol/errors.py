"""Exception types shared across the package.

The CLI maps these onto exit codes: InvalidParameterError (and any
ValueError raised during config validation) exits 2, NumericError exits 3.
"""


class InvalidParameterError(ValueError):
    """A parameter violates its documented domain (e.g. sigma <= 0)."""


class NumericError(ArithmeticError):
    """A numeric quantity left its valid domain (NaN/inf where finite required)."""


class UnreachableTargetError(RuntimeError):
    """A requested operating point cannot be reached; message names the achievable range."""
