"""Exponential weights and the batch barycenter.

Weights ``exp(-nu * f)`` are kept in log-offset form so that ``nu * f`` may
exceed the floating-point exponent range without overflowing. The batch
barycenter is available for real exponents, complex exponents (read out
as the coordinate-wise modulus) and constant forgetting factors.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .errors import DegenerateMass, EmptyBatch, InvalidForgetting, InvalidValue

__all__ = [
    "Exponent",
    "ScaledComplexWeight",
    "EvalRecord",
    "as_point",
    "weight_of",
    "make_record",
    "batch_barycenter",
    "forgetting_batch_barycenter",
    "weighted_mean",
    "MASS_FLOOR",
    "CANCELLATION_TOL",
]

#: Absolute floor on the normalized total mass.
MASS_FLOOR = 1e-300
#: A total mass smaller than this fraction of the summed weight magnitudes
#: is indistinguishable from rounding noise and reported as degenerate.
CANCELLATION_TOL = 64 * np.finfo(float).eps

NuLike = Union["Exponent", complex, float, int]


@dataclass(frozen=True)
class Exponent:
    """Weighting exponent ``nu``; complex values give the stationary-phase variant.

    The real part must be nonnegative and ``nu`` nonzero. A zero real part is
    accepted only alongside a nonzero imaginary part (pure phase weights).
    """

    nu: complex

    def __post_init__(self):
        nu = complex(self.nu)
        if not (math.isfinite(nu.real) and math.isfinite(nu.imag)):
            raise InvalidValue(f"exponent must be finite, got {nu!r}")
        if nu.real < 0 or nu == 0:
            raise InvalidValue(f"exponent needs re(nu) >= 0 and nu != 0, got {nu!r}")
        if nu.imag == 0 and nu.real <= 0:
            raise InvalidValue(f"real exponent must be positive, got {nu!r}")
        object.__setattr__(self, "nu", nu)

    @classmethod
    def coerce(cls, nu: NuLike) -> "Exponent":
        return nu if isinstance(nu, Exponent) else cls(complex(nu))

    @property
    def is_real(self) -> bool:
        return self.nu.imag == 0.0

    @property
    def real(self) -> float:
        return self.nu.real

    @property
    def imag(self) -> float:
        return self.nu.imag


@dataclass(frozen=True)
class ScaledComplexWeight:
    """A complex number stored as ``factor * exp(log_scale)``.

    ``|factor|`` stays in [0, 1]; ``factor == 0`` only for an exact zero,
    in which case ``log_scale`` is ``-inf``.
    """

    log_scale: float
    factor: complex

    @classmethod
    def zero(cls) -> "ScaledComplexWeight":
        return cls(-math.inf, 0j)

    @classmethod
    def from_log(cls, log_value: complex) -> "ScaledComplexWeight":
        """Represent ``exp(log_value)`` exactly: real part as scale, imaginary part as phase."""
        log_value = complex(log_value)
        if log_value.imag == 0.0:
            return cls(log_value.real, 1 + 0j)
        return cls(log_value.real, cmath.exp(1j * log_value.imag))

    @classmethod
    def from_value(cls, value: complex) -> "ScaledComplexWeight":
        return cls(0.0, complex(value)).normalized()

    @property
    def is_zero(self) -> bool:
        return self.factor == 0

    @property
    def value(self) -> complex:
        if self.is_zero:
            return 0j
        return self.factor * math.exp(self.log_scale)

    def __abs__(self) -> float:
        return abs(self.value)

    @property
    def log_magnitude(self) -> float:
        if self.is_zero:
            return -math.inf
        return self.log_scale + math.log(abs(self.factor))

    def normalized(self) -> "ScaledComplexWeight":
        """Rescale so that ``|factor| == 1`` (or return the exact zero)."""
        if self.factor == 0 or not math.isfinite(self.log_scale):
            return ScaledComplexWeight.zero()
        mag = abs(self.factor)
        if mag == 1.0:
            return self
        return ScaledComplexWeight(self.log_scale + math.log(mag), self.factor / mag)

    def scaled(self, log_factor: complex) -> "ScaledComplexWeight":
        """Multiply by ``exp(log_factor)``."""
        if self.is_zero:
            return self
        log_factor = complex(log_factor)
        factor = self.factor
        if log_factor.imag != 0.0:
            factor = factor * cmath.exp(1j * log_factor.imag)
        return ScaledComplexWeight(self.log_scale + log_factor.real, factor)

    def __add__(self, other: "ScaledComplexWeight") -> "ScaledComplexWeight":
        ref, a, b = align(self, other)
        if ref == -math.inf:
            return ScaledComplexWeight.zero()
        return ScaledComplexWeight(ref, a + b).normalized()


def align(a: ScaledComplexWeight, b: ScaledComplexWeight) -> tuple[float, complex, complex]:
    """Bring two weights to the larger of their offsets.

    Returns ``(ref, fa, fb)`` with ``a = fa * exp(ref)`` and ``b = fb * exp(ref)``.
    The smaller contribution may round to zero.
    """
    if a.is_zero and b.is_zero:
        return -math.inf, 0j, 0j
    if a.is_zero:
        return b.log_scale, 0j, b.factor
    if b.is_zero:
        return a.log_scale, a.factor, 0j
    ref = max(a.log_scale, b.log_scale)
    return (
        ref,
        a.factor * math.exp(a.log_scale - ref),
        b.factor * math.exp(b.log_scale - ref),
    )


def check_mass(total: complex, magnitude_sum: float) -> None:
    """Raise DegenerateMass if a normalized total is lost in underflow or cancellation."""
    mag = abs(total)
    if not mag >= MASS_FLOOR or mag <= CANCELLATION_TOL * magnitude_sum:
        raise DegenerateMass(
            f"total mass {mag:.3e} vanishes against summed magnitude {magnitude_sum:.3e}"
        )


def as_point(coords, dimension: int | None = None) -> np.ndarray:
    """Validate coordinates and return them as a read-only float vector."""
    x = np.array(coords, dtype=float).reshape(-1)
    if x.size < 1:
        raise InvalidValue("a point needs at least one coordinate")
    if dimension is not None and x.size != dimension:
        raise InvalidValue(f"expected {dimension} coordinates, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise InvalidValue(f"point has non-finite coordinates: {x}")
    x.flags.writeable = False
    return x


def weight_of(value: float, nu: NuLike) -> ScaledComplexWeight:
    """Weight ``exp(-nu * value)`` in log-offset form."""
    value = float(value)
    if not math.isfinite(value):
        raise InvalidValue(f"goal value must be finite, got {value!r}")
    nu = Exponent.coerce(nu)
    return ScaledComplexWeight.from_log(complex(-nu.real * value, -nu.imag * value))


@dataclass(frozen=True, eq=False)
class EvalRecord:
    """One oracle answer: the query point, its value and its weight."""

    point: np.ndarray
    value: float
    weight: ScaledComplexWeight


def make_record(point, value: float, nu: NuLike) -> EvalRecord:
    return EvalRecord(as_point(point), float(value), weight_of(value, nu))


def _stack(records: Sequence[EvalRecord]) -> tuple[np.ndarray, np.ndarray]:
    if len(records) == 0:
        raise EmptyBatch("barycenter of an empty batch")
    points = np.stack([np.asarray(r.point, dtype=float) for r in records])
    values = np.array([r.value for r in records], dtype=float)
    return points, values


def weighted_mean(
    points: np.ndarray,
    log_weights: np.ndarray,
    complex_readout: bool,
) -> np.ndarray:
    """Barycenter of ``points`` under weights ``exp(log_weights)``.

    With ``complex_readout`` the weights may be complex and the result is
    the coordinate-wise modulus of the complex barycenter.
    """
    points = np.asarray(points, dtype=float)
    if points.ndim != 2 or points.shape[0] == 0:
        raise EmptyBatch("barycenter of an empty batch")
    log_weights = np.asarray(log_weights)
    ref = np.max(log_weights.real)
    if not np.isfinite(ref):
        raise DegenerateMass("all weights underflow")
    if complex_readout:
        w = np.exp(log_weights.astype(complex) - ref)
        total = w.sum()
        check_mass(total, float(np.abs(w).sum()))
        return np.abs((w @ points) / total)
    w = np.exp(log_weights.real - ref)
    total = w.sum()
    check_mass(total, total)
    return (w @ points) / total


def _log_weights(values: np.ndarray, nu: Exponent) -> np.ndarray:
    if not np.all(np.isfinite(values)):
        raise InvalidValue("goal values must be finite")
    if nu.is_real:
        return -nu.real * values
    return -nu.nu * values


def _check_orthant(points: np.ndarray) -> None:
    if np.any(points < 0):
        raise InvalidValue("complex exponents require all coordinates >= 0")


def batch_barycenter(records: Sequence[EvalRecord], nu: NuLike) -> np.ndarray:
    """Exponentially weighted barycenter of a batch of oracle answers.

    For a complex exponent the estimate is ``|eta|`` coordinate-wise, where
    ``eta`` is the barycenter computed with complex weights; every point
    must then lie in the positive orthant.
    """
    nu = Exponent.coerce(nu)
    points, values = _stack(records)
    if not nu.is_real:
        _check_orthant(points)
    return weighted_mean(points, _log_weights(values, nu), not nu.is_real)


def forgetting_batch_barycenter(
    records: Sequence[EvalRecord], nu: NuLike, lam: float
) -> np.ndarray:
    """Batch barycenter with record ``i`` of ``n`` discounted by ``lam**(n - i)``."""
    lam = float(lam)
    if not 0.0 < lam <= 1.0:
        raise InvalidForgetting(f"forgetting factor must lie in (0, 1], got {lam!r}")
    nu = Exponent.coerce(nu)
    points, values = _stack(records)
    if not nu.is_real:
        _check_orthant(points)
    ages = np.arange(len(records) - 1, -1, -1, dtype=float)
    log_w = _log_weights(values, nu) + ages * math.log(lam)
    return weighted_mean(points, log_w, not nu.is_real)
