"""Zero-order oracles: goal functions that only answer with values.

Every corpus function is vectorized over leading axes, so ``func(X)`` with
``X`` of shape ``(..., n_x)`` returns shape ``(...)``. The :class:`Oracle`
wrapper evaluates single points and counts queries.
"""
from __future__ import annotations

import threading
from typing import Callable, Optional, Sequence

import numpy as np

from .core import as_point
from .errors import InvalidValue, NotFound
from .rng import check_seed, stream

__all__ = [
    "Oracle",
    "NoisyOracle",
    "PartialSumOracle",
    "corpus",
    "make_oracle",
    "evaluate_noisy",
    "evaluate_partial",
    "KINDS",
]

KINDS = ("smooth", "non-smooth", "noisy", "partial-sum", "linear-box")

# Worker slot of the noise streams; keeps them apart from search streams.
_NOISE_WORKER = 0xC0FFEE
_NOISE_BLOCK = 4096


class Oracle:
    """Query-counting wrapper around a goal function.

    Args:
        name: corpus name or any label.
        func: vectorized goal function.
        dimension: required length of query points, ``None`` for any.
        kind: one of :data:`KINDS`.
        smooth_part: for non-smooth goals, the smooth function whose
            residual the goal adds; ``None`` otherwise.
    """

    def __init__(
        self,
        name: str,
        func: Callable[[np.ndarray], np.ndarray],
        dimension: Optional[int] = None,
        kind: str = "smooth",
        smooth_part: Optional[Callable[[np.ndarray], np.ndarray]] = None,
        params: Optional[dict] = None,
    ):
        if kind not in KINDS:
            raise ValueError(f"unknown oracle kind {kind!r}")
        self.name = name
        self.func = func
        self.dimension = dimension
        self.kind = kind
        self.smooth_part = smooth_part
        self.params = dict(params or {})
        self._count = 0
        self._lock = threading.Lock()

    @property
    def query_count(self) -> int:
        return self._count

    def _next_index(self) -> int:
        with self._lock:
            index = self._count
            self._count += 1
        return index

    def reset(self) -> None:
        with self._lock:
            self._count = 0

    def _point(self, x) -> np.ndarray:
        return as_point(x, self.dimension)

    def evaluate(self, x) -> float:
        x = self._point(x)
        self._next_index()
        value = float(self.func(x))
        if not np.isfinite(value):
            raise InvalidValue(f"{self.name} returned {value!r} at {x}")
        return value

    __call__ = evaluate

    def __repr__(self):
        return f"{type(self).__name__}({self.name!r}, dimension={self.dimension}, kind={self.kind!r})"


class NoisyOracle(Oracle):
    """Adds i.i.d. ``N(0, sigma^2)`` noise to each answer of ``base``.

    The noise of the ``k``-th call depends only on ``(seed, k)``; querying
    the same point twice gives two independent draws.
    """

    def __init__(self, base: Oracle, sigma: float, seed: int = 0):
        if not sigma >= 0:
            raise ValueError(f"noise level must be >= 0, got {sigma!r}")
        super().__init__(
            f"noisy-{base.name}",
            base.func,
            base.dimension,
            "noisy",
            smooth_part=base.func,
            params={"base": base.name, "sigma": sigma, "seed": seed},
        )
        self.base = base
        self.sigma = float(sigma)
        self.seed = check_seed(seed)
        self._block_index = -1
        self._block = None

    def noise(self, index: int) -> float:
        """Standard-normal deviate used for call number ``index``."""
        block, offset = divmod(index, _NOISE_BLOCK)
        with self._lock:
            if block != self._block_index:
                self._block = stream(self.seed, _NOISE_WORKER, block).standard_normal(_NOISE_BLOCK)
                self._block_index = block
            return float(self._block[offset])

    def evaluate(self, x) -> float:
        x = self._point(x)
        index = self._next_index()
        value = float(self.base.func(x))
        if self.sigma == 0.0:
            return value
        return value + self.sigma * self.noise(index)

    __call__ = evaluate


class PartialSumOracle(Oracle):
    """Goal ``f = sum_j f_j`` of which each query reveals a single component.

    ``schedule`` maps the query index to the component index; the default
    cycles through the components in order.
    """

    def __init__(
        self,
        components: Sequence[Callable[[np.ndarray], np.ndarray]],
        schedule: Optional[Callable[[int], int]] = None,
        dimension: Optional[int] = None,
        name: str = "partial-sum",
    ):
        if len(components) == 0:
            raise ValueError("need at least one component")
        self.components = list(components)
        comps = self.components

        def full(x):
            return sum(fj(x) for fj in comps)

        super().__init__(name, full, dimension, "partial-sum", params={"k": len(comps)})
        k = len(comps)
        self.schedule = schedule or (lambda i: i % k)
        self.usage = [0] * k
        self.last_component: Optional[int] = None

    def evaluate_partial(self, x) -> tuple[float, int]:
        x = self._point(x)
        index = self._next_index()
        j = int(self.schedule(index))
        with self._lock:
            self.usage[j] += 1
        self.last_component = j
        return float(self.components[j](x)), j

    def evaluate(self, x) -> float:
        return self.evaluate_partial(x)[0]

    __call__ = evaluate


def evaluate_noisy(oracle: NoisyOracle, x) -> float:
    return oracle.evaluate(x)


def evaluate_partial(oracle: PartialSumOracle, x) -> tuple[float, int]:
    return oracle.evaluate_partial(x)


# ---------------------------------------------------------------------------
# corpus
# ---------------------------------------------------------------------------


def _sphere(center):
    c = np.asarray(center, dtype=float)

    def f(x):
        return np.sum((np.asarray(x) - c) ** 2, axis=-1)

    return f


def _quadratic(hessian):
    H = np.asarray(hessian, dtype=float)

    def f(x):
        x = np.asarray(x)
        return 0.5 * np.einsum("...i,ij,...j->...", x, H, x)

    return f


def _rosenbrock(x):
    x = np.asarray(x)
    return 100.0 * (x[..., 1] - x[..., 0] ** 2) ** 2 + (1.0 - x[..., 0]) ** 2


def _asymmetric(x):
    x = np.asarray(x)[..., 0]
    return x**2 + 0.3 * x**3


def _abs(x):
    return np.sum(np.abs(x), axis=-1)


def _smooth_abs(softness):
    def f(x):
        return np.sum(np.sqrt(np.asarray(x) ** 2 + softness**2) - softness, axis=-1)

    return f


def _step_quadratic(height):
    def f(x):
        r2 = np.sum(np.asarray(x) ** 2, axis=-1)
        return height * np.floor(r2 / height)

    return f


def _sum_squares(x):
    return np.sum(np.asarray(x) ** 2, axis=-1)


def _linear(offset, gradient):
    g = np.asarray(gradient, dtype=float)

    def f(x):
        return offset + np.asarray(x) @ g

    return f


def make_oracle(name: str, dimension: int = 2, **params) -> Oracle:
    """Build a corpus oracle by name.

    Names and parameters:

    ``sphere`` (center)
        ``|x - center|^2``; center defaults to the origin.
    ``quadratic`` (hessian)
        ``x^T H x / 2``; H defaults to ``diag(4, 1, 1, ...)``.
    ``rosenbrock``
        2-D Rosenbrock, minimum 0 at (1, 1).
    ``asymmetric``
        1-D ``x^2 + 0.3 x^3``, locally minimal at 0.
    ``abs`` (softness)
        ``sum |x_a|``; smooth part ``sum sqrt(x_a^2 + s^2) - s``.
    ``step_quadratic`` (height)
        ``|x|^2`` rounded down to a multiple of ``height``; smooth part ``|x|^2``.
    ``linear`` (offset, gradient)
        ``offset + gradient . x``, used on boxes for interference checks.
    """
    echo: dict = {}
    if name == "sphere":
        center = params.pop("center", np.zeros(dimension))
        dimension = len(center)
        f, kind, smooth = _sphere(center), "smooth", None
        echo["center"] = list(map(float, center))
    elif name == "quadratic":
        hessian = params.pop("hessian", None)
        if hessian is None:
            hessian = np.diag([4.0] + [1.0] * (dimension - 1))
        hessian = np.atleast_2d(np.asarray(hessian, dtype=float))
        if hessian.shape[0] != hessian.shape[1]:
            raise InvalidValue("hessian must be square")
        dimension = hessian.shape[0]
        f, kind, smooth = _quadratic(hessian), "smooth", None
        echo["hessian"] = hessian.tolist()
    elif name == "rosenbrock":
        dimension, f, kind, smooth = 2, _rosenbrock, "smooth", None
    elif name == "asymmetric":
        dimension, f, kind, smooth = 1, _asymmetric, "smooth", None
    elif name == "abs":
        softness = float(params.pop("softness", 0.05))
        f, kind, smooth = _abs, "non-smooth", _smooth_abs(softness)
        echo["softness"] = softness
    elif name == "step_quadratic":
        height = float(params.pop("height", 0.1))
        f, kind, smooth = _step_quadratic(height), "non-smooth", _sum_squares
        echo["height"] = height
    elif name == "linear":
        gradient = params.pop("gradient", np.ones(dimension))
        offset = float(params.pop("offset", 0.0))
        dimension = len(gradient)
        f, kind, smooth = _linear(offset, gradient), "linear-box", None
        echo.update(offset=offset, gradient=list(map(float, gradient)))
    else:
        raise NotFound(name)
    if params:
        raise InvalidValue(f"unknown parameters for {name}: {sorted(params)}")
    echo["dimension"] = dimension
    return Oracle(name, f, dimension, kind, smooth_part=smooth, params=echo)


CORPUS_NAMES = ("sphere", "quadratic", "rosenbrock", "asymmetric", "abs", "step_quadratic", "linear")


def corpus(dimension: int = 2) -> dict[str, Oracle]:
    """Fresh oracles for every corpus entry, with default parameters."""
    return {name: make_oracle(name, dimension) for name in CORPUS_NAMES}
