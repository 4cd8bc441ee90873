"""Exceptions raised by the barycenter package."""


class BarycenterError(Exception):
    """Base class for all errors raised by this package."""


class InvalidValue(BarycenterError, ValueError):
    """A goal-function value or coordinate was not finite."""


class EmptyBatch(BarycenterError, ValueError):
    """A batch barycenter was requested for zero records."""


class DegenerateMass(BarycenterError, ArithmeticError):
    """Total weight vanished through underflow or complex cancellation."""


class InvalidForgetting(BarycenterError, ValueError):
    """A forgetting factor outside (0, 1]."""


class ExponentMismatch(BarycenterError, ValueError):
    """Two accumulators built with different exponents were combined."""


class EmptyAccumulator(BarycenterError, ValueError):
    """Read-out of an accumulator that has absorbed nothing."""


class NotFound(BarycenterError, KeyError):
    """Unknown name in the goal-function corpus."""


class ZeroDenominator(BarycenterError, ZeroDivisionError):
    """The quotient denominator vanishes at the mean of its argument."""


class OracleError(BarycenterError, RuntimeError):
    """The goal function failed or returned an unusable value during a run."""


class ConfigError(BarycenterError, ValueError):
    """An experiment configuration could not be parsed or validated."""
