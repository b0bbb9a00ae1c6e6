"""Exception types.  The CLI maps each family to an exit code."""


class RiskEnvError(Exception):
    exit_code = 1


class InputError(RiskEnvError, ValueError):
    """Malformed model, payoff, spec or parameter (exit code 2)."""

    exit_code = 2


class TreeSizeError(InputError):
    pass


class NumericError(RiskEnvError, ArithmeticError):
    """Overflow, failed bracketing, loss of positivity (exit code 3)."""

    exit_code = 3


class DegenerateAnchorError(InputError):
    """Cone member whose anchor is negative on a whole subtree: no finite cash floor."""


class ComparisonWarning(UserWarning):
    """One-step monotonicity of the BSDE scheme is not guaranteed at this dt."""
