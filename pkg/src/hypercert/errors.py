"""Exception types shared by every module.

`DataError` covers malformed or invariant-violating inputs, `NumericError`
covers overflow, divergence and non-convergence. The CLI maps the first to
the ``DATA:`` prefix and the second to ``NUMERIC:``; both exit with code 2.
"""


class HypercertError(Exception):
    """Base class for toolkit errors."""


class DataError(HypercertError, ValueError):
    """Input data is malformed or violates a documented invariant."""


class NumericError(HypercertError, ArithmeticError):
    """A computation overflowed, diverged or failed to converge."""


class ConvergenceError(NumericError):
    """An iterative routine hit its iteration cap.

    The best available iterate is kept on ``last`` so a caller can decide
    whether to accept it.
    """

    def __init__(self, message, last=None, iterations=0):
        super().__init__(message)
        self.last = last
        self.iterations = iterations


class CoverageError(DataError):
    """A hypergraph lift could not cover every node under its caps."""

    def __init__(self, message, uncovered=()):
        super().__init__(message)
        self.uncovered = tuple(uncovered)


class SamplesExhaustedError(NumericError):
    """A sequential estimator ran out of samples before stopping."""

    def __init__(self, message, partial=0.0, draws=0, total=0):
        super().__init__(message)
        self.partial = partial
        self.draws = draws
        self.total = total


class DivergenceError(NumericError):
    """Training produced a non-finite loss."""

    def __init__(self, message, epoch):
        super().__init__(message)
        self.epoch = epoch
