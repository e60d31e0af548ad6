"""Exception types shared across the package.

The CLI maps these onto stable exit codes: usage/configuration problems
exit with 2, numerical failures with 3.
"""


class UsageError(ValueError):
    """Caller passed arguments that violate an operation's contract."""


class ConfigError(UsageError):
    """A scenario or concept configuration is incomplete or inconsistent."""


class NumericalError(RuntimeError):
    """The solve produced non-finite values.

    Attributes:
        step: index of the time step at which the blowup was detected.
    """

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class CflError(RuntimeError):
    """A time step violated the CFL bound.

    This is an internal error: the solve driver is responsible for
    choosing a stable step size, so seeing this means a driver bug,
    not bad user input.
    """
