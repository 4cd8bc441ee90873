"""Randomized barycenter search.

Each query is the current barycenter plus a random curiosity offset drawn
from a Gaussian (or a mixture of Gaussians), optionally shifted by a
fraction of the previous barycenter step (momentum). Several searches can
run independently and be merged at the end.
"""
from __future__ import annotations

import dataclasses
import math
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import Exponent, as_point
from .errors import DegenerateMass, ExponentMismatch, InvalidValue
from .recursive import Accumulator, absorb, absorb_forgetting, merge_all, readout
from .rng import check_seed, stream

__all__ = [
    "CuriosityDistribution",
    "SearchConfig",
    "StepRow",
    "RunRecord",
    "sample_curiosity",
    "sample_mixture",
    "next_query",
    "run_search",
    "run_parallel",
]


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class CuriosityDistribution:
    """Gaussian exploration offset ``z ~ N(mean, covariance)``.

    ``factor`` is lower triangular with ``factor @ factor.T == covariance``.
    Build instances with :meth:`gaussian` or :meth:`isotropic`; the
    zero-spread limit is reachable through ``scaled(0.0)``.
    """

    mean: np.ndarray
    covariance: np.ndarray
    factor: np.ndarray

    @classmethod
    def gaussian(cls, mean, covariance) -> "CuriosityDistribution":
        mean = as_point(mean)
        cov = np.atleast_2d(np.asarray(covariance, dtype=float))
        if cov.shape != (mean.size, mean.size):
            raise InvalidValue(f"covariance shape {cov.shape} does not match mean of length {mean.size}")
        if not np.allclose(cov, cov.T, rtol=1e-12, atol=0.0):
            raise InvalidValue("covariance must be symmetric")
        try:
            factor = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError as exc:
            raise InvalidValue("covariance must be positive definite") from exc
        return cls(_frozen(mean), _frozen(cov), _frozen(factor))

    @classmethod
    def isotropic(cls, dimension: int, variance: float, mean=None) -> "CuriosityDistribution":
        mean = np.zeros(dimension) if mean is None else mean
        return cls.gaussian(mean, variance * np.eye(dimension))

    @property
    def dimension(self) -> int:
        return self.mean.size

    def scaled(self, s: float) -> "CuriosityDistribution":
        """Spread multiplied by ``s``; ``s = 0`` gives the point mass at ``mean``."""
        if not s >= 0:
            raise InvalidValue(f"scale must be >= 0, got {s!r}")
        return CuriosityDistribution(self.mean, _frozen(self.covariance * s * s), _frozen(self.factor * s))

    def shifted(self, delta) -> "CuriosityDistribution":
        return CuriosityDistribution(_frozen(self.mean + delta), self.covariance, self.factor)

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "covariance": self.covariance.tolist()}


def sample_curiosity(dist: CuriosityDistribution, rng: np.random.Generator) -> np.ndarray:
    """``mean + factor @ g`` with ``g`` standard normal; advances ``rng``."""
    g = rng.standard_normal(dist.dimension)
    return dist.mean + dist.factor @ g


def sample_mixture(
    mixture: Sequence[tuple[float, CuriosityDistribution]], rng: np.random.Generator
) -> tuple[np.ndarray, int]:
    """Pick a component by weight, then sample it. Returns ``(z, component)``."""
    weights = np.array([w for w, _ in mixture], dtype=float)
    k = int(rng.choice(len(mixture), p=weights / weights.sum()))
    return sample_curiosity(mixture[k][1], rng), k


@dataclass(frozen=True, eq=False)
class SearchConfig:
    """Parameters of one randomized barycenter search.

    Attributes:
        nu: weighting exponent; complex values run the stationary-phase
            variant, whose queries are kept in the positive orthant.
        curiosity: exploration distribution around the barycenter.
        budget: number of oracle queries.
        initial_point: first query.
        seed: 64-bit key of the random streams.
        momentum_xi: fraction of the last barycenter step added to the
            curiosity mean, in [0, 1).
        forgetting_lambda: constant forgetting factor in (0, 1], or None.
        mixture: ``(weight, distribution)`` pairs replacing ``curiosity``
            when given; weights must sum to 1.
        box: ``(lower, upper)`` bounds; queries are clamped into it.
        script: fixed query sequence used instead of random sampling.
        early_stop_tol: stop once the step norm stays below this for
            ``early_stop_patience`` consecutive steps. Off by default.
    """

    nu: Exponent
    curiosity: CuriosityDistribution
    budget: int
    initial_point: np.ndarray
    seed: int = 0
    momentum_xi: float = 0.0
    forgetting_lambda: Optional[float] = None
    mixture: Optional[tuple] = None
    box: Optional[tuple] = None
    script: Optional[np.ndarray] = None
    early_stop_tol: Optional[float] = None
    early_stop_patience: int = 25

    def __post_init__(self):
        def set_(name, value):
            object.__setattr__(self, name, value)

        set_("nu", Exponent.coerce(self.nu))
        d = self.curiosity.dimension
        set_("initial_point", as_point(self.initial_point, d))
        set_("seed", check_seed(self.seed))
        if int(self.budget) < 1:
            raise InvalidValue(f"budget must be positive, got {self.budget}")
        set_("budget", int(self.budget))
        if not 0.0 <= self.momentum_xi < 1.0:
            raise InvalidValue(f"momentum must lie in [0, 1), got {self.momentum_xi}")
        if self.forgetting_lambda is not None and not 0.0 < self.forgetting_lambda <= 1.0:
            raise InvalidValue(f"forgetting factor must lie in (0, 1], got {self.forgetting_lambda}")
        if self.mixture is not None:
            mixture = tuple((float(w), dist) for w, dist in self.mixture)
            if any(w <= 0 for w, _ in mixture):
                raise InvalidValue("mixture weights must be positive")
            if abs(sum(w for w, _ in mixture) - 1.0) > 1e-12:
                raise InvalidValue("mixture weights must sum to 1")
            if any(dist.dimension != d for _, dist in mixture):
                raise InvalidValue("mixture components must match the search dimension")
            set_("mixture", mixture)
        if self.box is not None:
            lower = np.broadcast_to(np.asarray(self.box[0], dtype=float), (d,))
            upper = np.broadcast_to(np.asarray(self.box[1], dtype=float), (d,))
            if np.any(lower >= upper):
                raise InvalidValue("box needs lower < upper in every coordinate")
            set_("box", (_frozen(lower), _frozen(upper)))
        if self.script is not None:
            script = np.array(self.script, dtype=float).reshape(-1, d)
            set_("script", _frozen(script))
            set_("budget", min(self.budget, len(script)))
        if not self.nu.is_real:
            if np.any(self.initial_point < 0):
                raise InvalidValue("complex exponents need a nonnegative initial point")
            if self.box is not None and np.any(self.box[0] < 0):
                raise InvalidValue("complex exponents need a box inside the positive orthant")

    @property
    def dimension(self) -> int:
        return self.curiosity.dimension

    def with_seed(self, seed: int) -> "SearchConfig":
        return dataclasses.replace(self, seed=seed)

    def to_dict(self) -> dict:
        return {
            "nu": {"re": self.nu.real, "im": self.nu.imag},
            "curiosity": self.curiosity.to_dict(),
            "budget": self.budget,
            "initial_point": self.initial_point.tolist(),
            "seed": self.seed,
            "momentum_xi": self.momentum_xi,
            "forgetting_lambda": self.forgetting_lambda,
            "mixture": None
            if self.mixture is None
            else [{"weight": w, **dist.to_dict()} for w, dist in self.mixture],
            "box": None if self.box is None else [self.box[0].tolist(), self.box[1].tolist()],
            "script": None if self.script is None else self.script.tolist(),
            "early_stop_tol": self.early_stop_tol,
            "early_stop_patience": self.early_stop_patience,
        }


@dataclass(frozen=True, eq=False)
class StepRow:
    n: int
    query: np.ndarray
    value: float
    mass_magnitude: float
    readout: np.ndarray
    step_norm: float


@dataclass(eq=False)
class RunRecord:
    """Trace of a search: one row per query plus a summary."""

    config: SearchConfig
    rows: list = field(default_factory=list)
    accumulator: Optional[Accumulator] = None
    wall_time: float = 0.0
    degenerate: bool = False
    stopped_early: bool = False
    metadata: dict = field(default_factory=dict)
    workers: list = field(default_factory=list)

    @property
    def queries(self) -> int:
        return len(self.rows)

    @property
    def final_readout(self) -> Optional[np.ndarray]:
        if self.accumulator is None or self.accumulator.count == 0:
            return None
        return readout(self.accumulator)

    @property
    def best(self) -> tuple[Optional[float], Optional[np.ndarray]]:
        if not self.rows:
            return None, None
        row = min(self.rows, key=lambda r: r.value)
        return row.value, row.query

    def summary(self) -> dict:
        best_value, best_point = self.best
        final = self.final_readout
        return {
            "best_value": best_value,
            "best_point": None if best_point is None else best_point.tolist(),
            "final_readout": None if final is None else final.tolist(),
            "queries": self.queries,
            "wall_time": self.wall_time,
            "degenerate": self.degenerate,
            "stopped_early": self.stopped_early,
            "metadata": dict(self.metadata),
        }


def _clamp(x: np.ndarray, config: SearchConfig) -> np.ndarray:
    if config.box is not None:
        x = np.clip(x, config.box[0], config.box[1])
    if not config.nu.is_real:
        x = np.maximum(x, 0.0)
    return x


def next_query(acc: Accumulator, config: SearchConfig, rng: np.random.Generator) -> np.ndarray:
    """Next point to query: barycenter plus curiosity (plus momentum), clamped to the box."""
    if config.script is not None:
        return config.script[acc.count].copy()
    if acc.count == 0:
        return config.initial_point.copy()
    if config.mixture is not None:
        z, _ = sample_mixture(config.mixture, rng)
    else:
        z = sample_curiosity(config.curiosity, rng)
    if config.momentum_xi and acc.last_step is not None:
        z = z + config.momentum_xi * acc.last_step
    return _clamp(readout(acc) + z, config)


def _mass_magnitude(acc: Accumulator) -> float:
    log_mag = acc.mass.log_magnitude
    return math.exp(log_mag) if log_mag < 709.0 else math.inf


def run_search(config: SearchConfig, oracle, worker: int = 0) -> RunRecord:
    """Run ``config.budget`` query/absorb steps against ``oracle``.

    The random stream of step ``n`` is keyed by ``(config.seed, worker, n)``,
    so a run is fully determined by its inputs. A degenerate mass stops the
    run early and is flagged on the returned record.
    """
    start = time.perf_counter()
    acc = Accumulator.empty(config.nu)
    record = RunRecord(config)
    if not config.nu.is_real:
        record.metadata["complex_feedback"] = True
    quiet = 0
    for n in range(1, config.budget + 1):
        x = next_query(acc, config, stream(config.seed, worker, n))
        value = oracle(x)
        try:
            if config.forgetting_lambda is None:
                acc = absorb(acc, x, value)
            else:
                acc = absorb_forgetting(acc, x, value, config.forgetting_lambda)
        except DegenerateMass as exc:
            record.degenerate = True
            record.metadata["degenerate_reason"] = str(exc)
            break
        step_norm = 0.0 if acc.last_step is None else float(np.linalg.norm(acc.last_step))
        record.rows.append(StepRow(n, np.asarray(x), float(value), _mass_magnitude(acc), readout(acc), step_norm))
        if config.early_stop_tol is not None and n > 1:
            quiet = quiet + 1 if step_norm < config.early_stop_tol else 0
            if quiet >= config.early_stop_patience:
                record.stopped_early = True
                break
    record.accumulator = acc
    record.wall_time = time.perf_counter() - start
    return record


def run_parallel(configs: Sequence[SearchConfig], oracle, executor=None) -> RunRecord:
    """Independent searches merged into one barycenter.

    Worker ``l`` runs ``configs[l]`` on its own random streams. ``executor``
    (a ``concurrent.futures`` executor) runs workers concurrently; the final
    merge happens in worker order either way.
    """
    configs = list(configs)
    if not configs:
        raise ValueError("need at least one configuration")
    nu, dim = configs[0].nu, configs[0].dimension
    for c in configs[1:]:
        if c.nu != nu:
            raise ExponentMismatch("all workers must share the exponent")
        if c.dimension != dim:
            raise InvalidValue("all workers must share the dimension")
    start = time.perf_counter()
    jobs = [(c, oracle, k) for k, c in enumerate(configs)]
    if executor is None:
        subs = [run_search(*job) for job in jobs]
    else:
        subs = list(executor.map(lambda job: run_search(*job), jobs))

    record = RunRecord(configs[0], workers=subs)
    n = 0
    for sub in subs:
        for row in sub.rows:
            n += 1
            record.rows.append(StepRow(n, row.query, row.value, row.mass_magnitude, row.readout, row.step_norm))
    record.metadata["workers"] = len(subs)
    if not nu.is_real:
        record.metadata["complex_feedback"] = True
    record.degenerate = any(s.degenerate for s in subs)
    try:
        record.accumulator = merge_all(s.accumulator for s in subs)
    except DegenerateMass as exc:
        record.degenerate = True
        record.metadata["degenerate_reason"] = str(exc)
    record.wall_time = time.perf_counter() - start
    return record
