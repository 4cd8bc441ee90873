"""Random instances shared by the unit and acceptance tests."""
import numpy as np

from barycenter import Accumulator, absorb, make_record


def random_batch(rng, n=None, dim=None, nu=None, value_scale=None):
    """Points, values and a real exponent for a random batch."""
    n = int(rng.integers(1, 201)) if n is None else n
    dim = int(rng.integers(1, 9)) if dim is None else dim
    nu = float(rng.uniform(0.1, 10.0)) if nu is None else nu
    scale = float(rng.choice([1.0, 10.0, 100.0])) if value_scale is None else value_scale
    points = rng.normal(scale=rng.uniform(0.1, 10.0), size=(n, dim)) + rng.normal(size=dim)
    values = rng.uniform(0.0, scale, size=n)
    return points, values, nu


def records_of(points, values, nu):
    return [make_record(p, v, nu) for p, v in zip(points, values)]


def accumulate(points, values, nu, acc=None):
    acc = Accumulator.empty(nu) if acc is None else acc
    for p, v in zip(points, values):
        acc = absorb(acc, p, v)
    return acc


def rel_error(actual, expected, points):
    """Max-norm difference scaled by the largest point coordinate.

    The barycenter can sit near the origin while the points are far from
    it, so the point magnitude is the natural scale for rounding error.
    """
    scale = max(float(np.max(np.abs(points))), np.finfo(float).tiny)
    return float(np.max(np.abs(np.asarray(actual) - np.asarray(expected)))) / scale
