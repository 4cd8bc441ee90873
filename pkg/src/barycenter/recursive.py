"""Streaming barycenter: recursive mass and barycenter updates.

An :class:`Accumulator` is a value: every update returns a new one. Workers
can build private accumulators and hand them to a single reducer that
calls :func:`merge`; the merged result does not depend on how the records
were split.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import (
    Exponent,
    NuLike,
    ScaledComplexWeight,
    align,
    as_point,
    check_mass,
    weight_of,
)
from .errors import (
    DegenerateMass,
    EmptyAccumulator,
    ExponentMismatch,
    InvalidForgetting,
    InvalidValue,
)

__all__ = [
    "Accumulator",
    "absorb",
    "absorb_forgetting",
    "reschedule_nu",
    "merge",
    "merge_all",
    "readout",
]


def _frozen(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class Accumulator:
    """Running state of the barycenter method.

    Attributes:
        nu: weighting exponent used for every absorbed value.
        mass: total weight, ``sum exp(-nu f(x_i))`` (discounted when forgetting).
        eta: weighted mean of the absorbed points, complex; ``None`` when empty.
        count: number of absorbed points.
        last_step: difference of the last two read-outs, ``None`` until the
            second absorb.
    """

    nu: Exponent
    mass: ScaledComplexWeight = ScaledComplexWeight.zero()
    eta: Optional[np.ndarray] = None
    count: int = 0
    last_step: Optional[np.ndarray] = None

    @classmethod
    def empty(cls, nu: NuLike) -> "Accumulator":
        return cls(Exponent.coerce(nu))

    @property
    def dimension(self) -> Optional[int]:
        return None if self.eta is None else self.eta.shape[0]

    def to_dict(self) -> dict:
        """Plain-data form for checkpointing; floats survive a JSON round trip exactly."""
        return {
            "nu": [self.nu.real, self.nu.imag],
            "log_scale": self.mass.log_scale,
            "factor": [self.mass.factor.real, self.mass.factor.imag],
            "eta": None if self.eta is None else [[z.real, z.imag] for z in self.eta.tolist()],
            "count": self.count,
            "last_step": None if self.last_step is None else self.last_step.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Accumulator":
        eta = data["eta"]
        last = data.get("last_step")
        return cls(
            nu=Exponent(complex(*data["nu"])),
            mass=ScaledComplexWeight(float(data["log_scale"]), complex(*data["factor"])),
            eta=None if eta is None else _frozen(np.array([complex(re, im) for re, im in eta])),
            count=int(data["count"]),
            last_step=None if last is None else _frozen(np.array(last, dtype=float)),
        )

    def dumps(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def loads(cls, text: str) -> "Accumulator":
        return cls.from_dict(json.loads(text))


def readout(acc: Accumulator) -> np.ndarray:
    """Current estimate: ``Re(eta)`` for real exponents, ``|eta|`` coordinate-wise otherwise."""
    if acc.count == 0:
        raise EmptyAccumulator("read-out of an empty accumulator")
    if acc.nu.is_real:
        return acc.eta.real.copy()
    return np.abs(acc.eta)


def _check_query(acc: Accumulator, point, value: float) -> np.ndarray:
    x = as_point(point, acc.dimension)
    if not math.isfinite(value):
        raise InvalidValue(f"goal value must be finite, got {value!r}")
    if not acc.nu.is_real and np.any(x < 0):
        raise InvalidValue("complex exponents require all coordinates >= 0")
    return x


def _combine(
    nu: Exponent,
    mass_a: ScaledComplexWeight,
    eta_a: np.ndarray,
    mass_b: ScaledComplexWeight,
    eta_b: np.ndarray,
) -> tuple[ScaledComplexWeight, np.ndarray]:
    ref, fa, fb = align(mass_a, mass_b)
    if ref == -math.inf:
        raise DegenerateMass("both masses are zero")
    total = fa + fb
    check_mass(total, abs(fa) + abs(fb))
    eta = (fa * eta_a + fb * eta_b) / total
    if nu.is_real:
        eta = eta.real.astype(complex)
    return ScaledComplexWeight(ref, total).normalized(), _frozen(eta)


def _absorb_scaled(
    acc: Accumulator, x: np.ndarray, value: float, log_lambda: float
) -> Accumulator:
    w = weight_of(value, acc.nu)
    if acc.count == 0:
        return Accumulator(acc.nu, w, _frozen(x.astype(complex)), 1, None)
    prior = acc.mass.scaled(log_lambda) if log_lambda else acc.mass
    mass, eta = _combine(acc.nu, prior, acc.eta, w, x.astype(complex))
    new = Accumulator(acc.nu, mass, eta, acc.count + 1, None)
    step = _frozen(readout(new) - readout(acc))
    return Accumulator(acc.nu, mass, eta, acc.count + 1, step)


def absorb(acc: Accumulator, point, value: float) -> Accumulator:
    """Add one oracle answer ``(point, value)`` to the running barycenter."""
    value = float(value)
    return _absorb_scaled(acc, _check_query(acc, point, value), value, 0.0)


def absorb_forgetting(acc: Accumulator, point, value: float, lambda_n: float) -> Accumulator:
    """Discount the accumulated mass by ``lambda_n`` and then absorb ``(point, value)``."""
    lambda_n = float(lambda_n)
    if not 0.0 < lambda_n <= 1.0:
        raise InvalidForgetting(f"forgetting factor must lie in (0, 1], got {lambda_n!r}")
    value = float(value)
    x = _check_query(acc, point, value)
    return _absorb_scaled(acc, x, value, math.log(lambda_n))


def reschedule_nu(acc: Accumulator, nu_new: NuLike, f_at_barycenter: float) -> Accumulator:
    """Switch to a new exponent, correcting the mass by ``exp((nu_new - nu_old) * f)``.

    ``f_at_barycenter`` is the goal value at the current read-out; obtaining
    it is the caller's business so that oracle queries stay explicit.
    """
    if acc.count == 0:
        raise EmptyAccumulator("cannot reschedule an empty accumulator")
    f_at_barycenter = float(f_at_barycenter)
    if not math.isfinite(f_at_barycenter):
        raise InvalidValue(f"goal value must be finite, got {f_at_barycenter!r}")
    nu_new = Exponent.coerce(nu_new)
    delta = nu_new.nu - acc.nu.nu
    mass = acc.mass.scaled(delta * f_at_barycenter) if delta != 0 else acc.mass
    if not math.isfinite(mass.log_scale) or mass.is_zero:
        raise DegenerateMass("rescheduled mass is not representable")
    return Accumulator(nu_new, mass, acc.eta, acc.count, acc.last_step)


def merge(a: Accumulator, b: Accumulator) -> Accumulator:
    """Combine two accumulators built from disjoint sets of queries."""
    if a.nu != b.nu:
        raise ExponentMismatch(f"cannot merge nu={a.nu.nu!r} with nu={b.nu.nu!r}")
    if a.count == 0:
        return b
    if b.count == 0:
        return a
    if a.dimension != b.dimension:
        raise InvalidValue(f"dimension mismatch: {a.dimension} vs {b.dimension}")
    mass, eta = _combine(a.nu, a.mass, a.eta, b.mass, b.eta)
    return Accumulator(a.nu, mass, eta, a.count + b.count, None)


def merge_all(accumulators) -> Accumulator:
    """Left fold of :func:`merge` over a non-empty sequence."""
    accumulators = list(accumulators)
    if not accumulators:
        raise ValueError("nothing to merge")
    out = accumulators[0]
    for acc in accumulators[1:]:
        out = merge(out, acc)
    return out
