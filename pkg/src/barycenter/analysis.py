"""Closed-form predictions for the barycenter method and their Monte Carlo parts.

Covered here:

* the step gains ``F = w / (m + w)`` and ``Fbar = m w / (m + w)^2``;
* the expected barycenter step under Gaussian curiosity,
  ``E[dx] = E[F] zbar - nu Sigma E[Fbar grad f]``;
* the step covariance near a critical point,
  ``Var(dx) ~ Sigma E[F^2] - 2 nu Sigma E[F Fbar Hess f] Sigma``;
* the interference discount of complex exponents on uniform boxes;
* the bias and covariance of the barycenter under additive Gaussian noise;
* the second-order mean and covariance of a ratio of linear forms.

Expectations over the curiosity are plain Monte Carlo, drawn in fixed
blocks from counter-based streams so the result does not depend on how
the blocks are spread over workers. Derivatives come from central
differences.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.special import expit

from .core import EvalRecord, Exponent, NuLike, ScaledComplexWeight, check_mass
from .errors import InvalidValue, ZeroDenominator
from .rng import stream

__all__ = [
    "StepMoments",
    "NoisePrediction",
    "finite_difference_gradient",
    "finite_difference_hessian",
    "f_and_fbar",
    "predicted_mean_step",
    "predicted_step_variance",
    "interference_factor_sq",
    "predicted_weight_discount",
    "noise_prediction",
    "noise_prediction_from_arrays",
    "quotient_moments",
]

MC_BLOCK = 8192
# Worker slot reserved for prediction sampling streams.
_PREDICTION_WORKER = 0xA11A


@dataclass(frozen=True, eq=False)
class StepMoments:
    """Mean and/or covariance of a barycenter step, with Monte Carlo standard errors."""

    mean: Optional[np.ndarray] = None
    covariance: Optional[np.ndarray] = None
    mean_se: Optional[np.ndarray] = None
    covariance_se: Optional[np.ndarray] = None
    samples: int = 0


@dataclass(frozen=True, eq=False)
class NoisePrediction:
    """Predicted effect of additive N(0, sigma^2) noise on the barycenter.

    ``mean_shift`` is ``E[eta] - eta_bar`` and ``covariance`` is ``Var[eta]``.
    The remaining fields are the noise-free sums they are built from;
    ``gain`` is ``nu^2 sigma^2`` (or ``exp(nu^2 sigma^2) - 1`` when requested).
    """

    mean_shift: np.ndarray
    covariance: np.ndarray
    m_bar: float
    m_bar2: float
    eta_bar: np.ndarray
    eta_bar2: np.ndarray
    eta_breve: np.ndarray
    w_bar: float
    gain: float


# ---------------------------------------------------------------------------
# derivatives
# ---------------------------------------------------------------------------


def _steps(x: np.ndarray, h, rel: float) -> np.ndarray:
    if h is None:
        return rel * (1.0 + np.abs(x))
    h = np.broadcast_to(np.asarray(h, dtype=float), x.shape)
    if np.any(h <= 0):
        raise InvalidValue("difference step must be positive")
    return h


def finite_difference_gradient(f: Callable, x, h=None) -> np.ndarray:
    """Central-difference gradient of ``f`` at ``x``.

    ``x`` may carry leading batch axes when ``f`` is vectorized. The default
    step is ``1e-5 * (1 + |x_a|)`` per axis.
    """
    x = np.asarray(x, dtype=float)
    steps = _steps(x, h, 1e-5)
    grad = np.empty_like(x)
    for a in range(x.shape[-1]):
        xp = x.copy()
        xm = x.copy()
        xp[..., a] += steps[..., a]
        xm[..., a] -= steps[..., a]
        grad[..., a] = (np.asarray(f(xp)) - np.asarray(f(xm))) / (xp[..., a] - xm[..., a])
    return grad


def finite_difference_hessian(f: Callable, x, h=None) -> np.ndarray:
    """Symmetrized Hessian by nested central differences (default step ``1e-3 * (1 + |x_a|)``)."""
    x = np.asarray(x, dtype=float)
    steps = _steps(x, h, 1e-3)
    n = x.shape[-1]
    hess = np.empty(x.shape + (n,))
    for a in range(n):
        for b in range(a, n):
            total = 0.0
            for sa, sb in ((1, 1), (1, -1), (-1, 1), (-1, -1)):
                y = x.copy()
                y[..., a] += sa * steps[..., a]
                y[..., b] += sb * steps[..., b]
                total = total + sa * sb * np.asarray(f(y))
            hess[..., a, b] = total / (4.0 * steps[..., a] * steps[..., b])
            hess[..., b, a] = hess[..., a, b]
    return hess


# ---------------------------------------------------------------------------
# step gains and the expected step
# ---------------------------------------------------------------------------


def _log_mass(m_prev) -> float:
    if isinstance(m_prev, ScaledComplexWeight):
        if m_prev.is_zero:
            return -math.inf
        if m_prev.factor.imag != 0 or m_prev.factor.real < 0:
            raise InvalidValue("step gains need a real nonnegative mass")
        return m_prev.log_magnitude
    m_prev = float(m_prev)
    if m_prev < 0:
        raise InvalidValue(f"mass must be >= 0, got {m_prev}")
    return -math.inf if m_prev == 0 else math.log(m_prev)


def _real_nu(nu: NuLike) -> float:
    nu = Exponent.coerce(nu)
    if not nu.is_real:
        raise InvalidValue("this prediction needs a real exponent")
    return nu.real


def f_and_fbar(m_prev, value, nu: NuLike):
    """Step gains ``(F, Fbar)`` for a new weight ``exp(-nu * value)`` against mass ``m_prev``.

    ``F = w / (m + w)``, ``Fbar = m w / (m + w)^2 = F * m / (m + w)``. Works on
    arrays of values; ``m_prev`` may be a float or a real ScaledComplexWeight.
    """
    nu = _real_nu(nu)
    log_m = _log_mass(m_prev)
    value = np.asarray(value, dtype=float)
    if log_m == -math.inf:
        F = np.ones_like(value)
        return F, np.zeros_like(value)
    t = log_m + nu * value  # log(m / w)
    F = expit(-t)
    return F, F * expit(t)


def _curiosity_blocks(dist, samples: int, seed: int):
    n_blocks = -(-samples // MC_BLOCK)
    for k in range(n_blocks):
        size = min(MC_BLOCK, samples - k * MC_BLOCK)
        g = stream(seed, _PREDICTION_WORKER, k).standard_normal((size, dist.dimension))
        yield dist.mean + g @ dist.factor.T


def _blocked_moments(per_block: Callable, dist, samples: int, seed: int, workers: int):
    """Mean and standard error of a per-sample quantity, reduced block by block in order."""
    blocks = list(_curiosity_blocks(dist, samples, seed))

    def partial(z):
        q = per_block(z)
        return q.shape[0], q.sum(axis=0), (q * q).sum(axis=0)

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(partial, blocks))
    else:
        parts = [partial(z) for z in blocks]
    count, total, total_sq = parts[0]
    for c, s, s2 in parts[1:]:
        count, total, total_sq = count + c, total + s, total_sq + s2
    mean = total / count
    var = np.maximum(total_sq / count - mean * mean, 0.0) * count / max(count - 1, 1)
    return mean, np.sqrt(var / count)


def predicted_mean_step(
    mass,
    center,
    f: Callable,
    dist,
    nu: NuLike,
    samples: int = 100_000,
    seed: int = 0,
    workers: int = 1,
) -> StepMoments:
    """Expected barycenter step ``E[F] zbar - nu Sigma E[Fbar grad f(center + z)]``.

    Both expectations are Monte Carlo averages over ``z ~ dist``; gradients
    use :func:`finite_difference_gradient`. ``f`` must be vectorized.
    """
    nu_r = _real_nu(nu)
    center = np.asarray(center, dtype=float)
    zbar, sigma = dist.mean, dist.covariance

    def per_block(z):
        x = center + z
        F, Fbar = f_and_fbar(mass, f(x), nu_r)
        grad = finite_difference_gradient(f, x)
        return F[:, None] * zbar - nu_r * (Fbar[:, None] * grad) @ sigma.T

    mean, se = _blocked_moments(per_block, dist, samples, seed, workers)
    return StepMoments(mean=mean, mean_se=se, samples=samples)


def predicted_step_variance(
    mass,
    center,
    f: Callable,
    dist,
    nu: NuLike,
    samples: int = 100_000,
    seed: int = 0,
    workers: int = 1,
) -> StepMoments:
    """Step covariance near a critical point, ``Sigma E[F^2] - 2 nu Sigma E[F Fbar Hess f] Sigma``.

    Valid for zero-mean curiosity with small spread; the Hessian comes
    from nested central differences and is symmetrized.
    """
    nu_r = _real_nu(nu)
    if np.any(dist.mean != 0):
        raise InvalidValue("the variance prediction assumes zero-mean curiosity")
    center = np.asarray(center, dtype=float)
    sigma = dist.covariance
    n = center.size

    def per_block(z):
        x = center + z
        F, Fbar = f_and_fbar(mass, f(x), nu_r)
        hess = finite_difference_hessian(f, x)
        q = (F * F)[:, None, None] * sigma - 2.0 * nu_r * sigma @ ((F * Fbar)[:, None, None] * hess) @ sigma
        return q.reshape(len(z), n * n)

    mean, se = _blocked_moments(per_block, dist, samples, seed, workers)
    cov = mean.reshape(n, n)
    return StepMoments(
        covariance=0.5 * (cov + cov.T),
        covariance_se=se.reshape(n, n),
        samples=samples,
    )


# ---------------------------------------------------------------------------
# interference of complex weights
# ---------------------------------------------------------------------------


def interference_factor_sq(r, q):
    """``|sinh(c) / c|^2`` for ``c = r + iq``, i.e. ``(sinh^2 r + sin^2 q) / (r^2 + q^2)``.

    Equals 1 in the limit ``r, q -> 0``.
    """
    r = np.asarray(r, dtype=float)
    q = np.asarray(q, dtype=float)
    denom = r * r + q * q
    zero = denom == 0
    safe = np.where(zero, 1.0, denom)
    out = np.where(zero, 1.0, (np.sinh(r) ** 2 + np.sin(q) ** 2) / safe)
    return out[()] if out.ndim == 0 else out


def _sinhc(r: np.ndarray) -> np.ndarray:
    safe = np.where(r == 0, 1.0, r)
    return np.where(r == 0, 1.0, np.sinh(safe) / safe)


def predicted_weight_discount(nu: NuLike, grad, delta) -> float:
    """Ratio of expected total weight under complex ``nu`` to that under ``Re(nu)``.

    Queries are uniform on a box of half-widths ``delta`` where the goal is
    linear with slope ``grad``. Per axis the ratio is
    ``|sinh(c)/c| / (sinh(r)/r)`` with ``c = nu grad_a delta_a`` and
    ``r = Re(c)``; when ``Im(c)`` is a multiple of pi this is
    ``(1 + q^2/r^2)^(-1/2)``.
    """
    nu = Exponent.coerce(nu).nu
    c = nu * np.asarray(grad, dtype=float) * np.asarray(delta, dtype=float)
    r, q = c.real, c.imag
    per_axis = np.sqrt(interference_factor_sq(r, q)) / _sinhc(r)
    return float(np.prod(per_axis))


# ---------------------------------------------------------------------------
# noise and quotients
# ---------------------------------------------------------------------------


def noise_prediction_from_arrays(
    points, values, nu: NuLike, sigma: float, exact_gain: bool = False
) -> NoisePrediction:
    """Bias and covariance of the barycenter when each value carries N(0, sigma^2) noise.

    ``mean_shift = (m2 / m^2) (eta_bar - eta_bar2) g`` and
    ``covariance = (m2 / m^2) (eta_bar eta_bar^T - eta_bar eta_bar2^T - eta_bar2 eta_bar^T + eta_breve) g``,
    with ``g = nu^2 sigma^2``. ``exact_gain`` uses ``g = exp(nu^2 sigma^2) - 1``,
    the factor before its first-order expansion.
    """
    nu_r = _real_nu(nu)
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points[:, None]
    values = np.asarray(values, dtype=float)
    log_a = -nu_r * values
    ref = log_a.max()
    a = np.exp(log_a - ref)
    a2 = a * a
    m_s, m2_s = a.sum(), a2.sum()
    check_mass(m_s, m_s)
    eta_bar = a @ points / m_s
    eta_bar2 = a2 @ points / m2_s
    eta_breve = (points * a2[:, None]).T @ points / m2_s
    ratio = m2_s / (m_s * m_s)
    nu2s2 = (nu_r * sigma) ** 2
    gain = math.expm1(nu2s2) if exact_gain else nu2s2
    shift = ratio * (eta_bar - eta_bar2) * gain
    cov = ratio * (
        np.outer(eta_bar, eta_bar) - np.outer(eta_bar, eta_bar2) - np.outer(eta_bar2, eta_bar) + eta_breve
    ) * gain
    return NoisePrediction(
        mean_shift=shift,
        covariance=0.5 * (cov + cov.T),
        m_bar=m_s * math.exp(ref),
        m_bar2=m2_s * math.exp(2 * ref),
        eta_bar=eta_bar,
        eta_bar2=eta_bar2,
        eta_breve=eta_breve,
        w_bar=math.exp(nu2s2 / 2),
        gain=gain,
    )


def noise_prediction(
    records: Sequence[EvalRecord], nu: NuLike, sigma: float, exact_gain: bool = False
) -> NoisePrediction:
    """:func:`noise_prediction_from_arrays` for a list of noise-free records."""
    points = np.stack([r.point for r in records])
    values = np.array([r.value for r in records])
    return noise_prediction_from_arrays(points, values, nu, sigma, exact_gain)


def quotient_moments(a, b_rows, v_mean, v_cov) -> tuple[np.ndarray, np.ndarray]:
    """Second-order mean and first-order covariance of ``b_k . v / a . v``.

    For each row ``b_k`` of ``b_rows``, with ``s = a . vbar`` and
    ``u_k = a (b_k . vbar) - b_k s``::

        E  ~ b_k . vbar / s + a^T V u_k / s^3
        Cov[k, l] ~ u_k^T V u_l / s^4

    where ``V`` is the covariance of ``v``.
    """
    a = np.asarray(a, dtype=float)
    B = np.atleast_2d(np.asarray(b_rows, dtype=float))
    v_mean = np.asarray(v_mean, dtype=float)
    V = np.asarray(v_cov, dtype=float)
    s = float(a @ v_mean)
    if s == 0.0 or not math.isfinite(s):
        raise ZeroDenominator("a . vbar vanishes")
    bv = B @ v_mean
    U = np.outer(a, bv) - B.T * s
    mean = bv / s + (a @ V @ U) / s**3
    cov = U.T @ V @ U / s**4
    return mean, 0.5 * (cov + cov.T)
