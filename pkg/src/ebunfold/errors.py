"""Exception hierarchy; the CLI maps each class to an exit code."""


class UnfoldError(Exception):
    exit_code = 1


class ConfigError(UnfoldError, ValueError):
    exit_code = 2


class NumericalError(UnfoldError, ArithmeticError):
    exit_code = 3


class ConvergenceError(UnfoldError, RuntimeError):
    exit_code = 4

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best
