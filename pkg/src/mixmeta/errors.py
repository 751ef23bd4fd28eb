"""Exception types shared across the package.

The CLI maps these onto exit codes: ``InputError`` -> 2, ``NumericalError`` -> 3.
"""


class MixmetaError(Exception):
    code = "ERROR"
    exit_code = 1


class InputError(MixmetaError, ValueError):
    """Invalid user input: malformed tables, bad priors, violated preconditions."""

    code = "INPUT_ERROR"
    exit_code = 2


class NumericalError(MixmetaError, ArithmeticError):
    """A numerical routine failed to converge or bracket its target."""

    code = "NUMERICAL_ERROR"
    exit_code = 3
