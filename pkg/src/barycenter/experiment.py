"""Experiment configuration, repeated runs and report files.

A configuration is a JSON document::

    {
      "oracle": {"name": "sphere", "params": {"center": [1, 1]}},
      "nu": 2.0,
      "curiosity": {"variance": 0.25},
      "budget": 400,
      "initial_point": [0, 0],
      "seed": 0,
      "repetitions": 50,
      "success": {"target": [1, 1], "radius": 0.15}
    }

``nu`` may also be ``{"re": 1, "im": 3}``. Unknown keys are rejected at
every level.
"""
from __future__ import annotations

import csv
import io
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import Exponent
from .errors import BarycenterError, ConfigError, InvalidValue, NotFound, OracleError
from .oracles import NoisyOracle, Oracle, make_oracle
from .strategies import CuriosityDistribution, RunRecord, SearchConfig, run_parallel, run_search

__all__ = [
    "BoxShift",
    "shift_box",
    "ExperimentConfig",
    "ExperimentResult",
    "parse_config",
    "load_config",
    "build_oracle",
    "run_experiment",
    "rows_csv",
    "rows_json",
    "write_outputs",
]

_TOP_KEYS = {
    "oracle",
    "nu",
    "curiosity",
    "budget",
    "initial_point",
    "seed",
    "momentum_xi",
    "forgetting_lambda",
    "mixture",
    "box",
    "script",
    "early_stop_tol",
    "early_stop_patience",
    "repetitions",
    "workers",
    "output",
    "format",
    "success",
}
_ORACLE_KEYS = {"name", "params", "noise_sigma", "noise_seed"}
_CURIOSITY_KEYS = {"variance", "mean", "covariance"}
_MIXTURE_KEYS = _CURIOSITY_KEYS | {"weight"}
_BOX_KEYS = {"min", "max"}
_SUCCESS_KEYS = {"target", "radius"}
FORMATS = ("csv", "json")


# ---------------------------------------------------------------------------
# box shift
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class BoxShift:
    """Translation ``x -> x + offset`` moving a box into the positive orthant."""

    offset: np.ndarray
    box_min: np.ndarray
    box_max: np.ndarray

    def shift(self, x) -> np.ndarray:
        return np.asarray(x, dtype=float) + self.offset

    def unshift(self, y) -> np.ndarray:
        return np.asarray(y, dtype=float) - self.offset

    @property
    def shifted_min(self) -> np.ndarray:
        return self.shift(self.box_min)

    @property
    def shifted_max(self) -> np.ndarray:
        return self.shift(self.box_max)

    @property
    def is_identity(self) -> bool:
        return not np.any(self.offset)

    def to_dict(self) -> dict:
        return {
            "offset": self.offset.tolist(),
            "shifted_min": self.shifted_min.tolist(),
            "shifted_max": self.shifted_max.tolist(),
        }


def shift_box(box_min, box_max) -> BoxShift:
    """Offset ``t = max(0, -box_min)`` per coordinate."""
    lo = np.atleast_1d(np.asarray(box_min, dtype=float))
    hi = np.atleast_1d(np.asarray(box_max, dtype=float))
    if lo.shape != hi.shape:
        raise InvalidValue("box bounds must have the same length")
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
        raise InvalidValue("box bounds must be finite")
    if np.any(lo >= hi):
        raise InvalidValue("box needs min < max in every coordinate")
    return BoxShift(np.maximum(0.0, -lo) + 0.0, lo, hi)


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    oracle_name: str
    oracle_params: dict
    search: SearchConfig
    repetitions: int = 1
    workers: int = 1
    output: Optional[str] = None
    format: str = "csv"
    noise_sigma: Optional[float] = None
    noise_seed: int = 0
    user_box: Optional[tuple] = None
    success_target: Optional[np.ndarray] = None
    success_radius: Optional[float] = None

    @property
    def shift(self) -> Optional[BoxShift]:
        if self.user_box is None or self.search.nu.is_real:
            return None
        return shift_box(*self.user_box)

    def to_dict(self) -> dict:
        """Resolved configuration, in user (unshifted) coordinates."""
        search = self.search.to_dict()
        shift = self.shift
        if shift is not None:
            search["initial_point"] = shift.unshift(self.search.initial_point).tolist()
        search["box"] = None if self.user_box is None else {
            "min": self.user_box[0].tolist(),
            "max": self.user_box[1].tolist(),
        }
        out = {
            "oracle": {
                "name": self.oracle_name,
                "params": self.oracle_params,
                "noise_sigma": self.noise_sigma,
                "noise_seed": self.noise_seed,
            },
            **search,
            "repetitions": self.repetitions,
            "workers": self.workers,
            "output": self.output,
            "format": self.format,
            "success": None
            if self.success_radius is None
            else {"target": self.success_target.tolist(), "radius": self.success_radius},
        }
        if shift is not None:
            out["shift"] = shift.to_dict()
        return out


def _reject_unknown(section: dict, allowed: set, where: str) -> None:
    if not isinstance(section, dict):
        raise ConfigError(f"{where} must be an object")
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")


def _parse_nu(raw) -> Exponent:
    if isinstance(raw, dict):
        _reject_unknown(raw, {"re", "im"}, "nu")
        raw = complex(float(raw.get("re", 0.0)), float(raw.get("im", 0.0)))
    if isinstance(raw, bool) or not isinstance(raw, (int, float, complex)):
        raise ConfigError("nu must be a number or {'re': ..., 'im': ...}")
    return Exponent(complex(raw))


def _parse_curiosity(raw, dimension: int, where: str, allowed=_CURIOSITY_KEYS) -> CuriosityDistribution:
    _reject_unknown(raw, allowed, where)
    if "variance" in raw and "covariance" in raw:
        raise ConfigError(f"{where}: give either variance or covariance")
    if "covariance" in raw:
        mean = raw.get("mean", np.zeros(dimension))
        return CuriosityDistribution.gaussian(mean, raw["covariance"])
    if "variance" not in raw:
        raise ConfigError(f"{where}: needs variance or covariance")
    return CuriosityDistribution.isotropic(dimension, float(raw["variance"]), raw.get("mean"))


def _require(raw: dict, key: str):
    if key not in raw:
        raise ConfigError(f"missing required key {key!r}")
    return raw[key]


def parse_config(raw: dict) -> ExperimentConfig:
    """Validate a decoded JSON configuration. Raises ConfigError."""
    try:
        return _parse_config(raw)
    except ConfigError:
        raise
    except (ValueError, TypeError, KeyError, IndexError) as exc:
        raise ConfigError(str(exc)) from exc


def _shifted_script(script, dimension: int, shift: Optional[BoxShift]) -> np.ndarray:
    points = np.asarray(script, dtype=float).reshape(-1, dimension)
    return points if shift is None else shift.shift(points)


def _parse_config(raw: dict) -> ExperimentConfig:
    _reject_unknown(raw, _TOP_KEYS, "config")
    oracle = _require(raw, "oracle")
    _reject_unknown(oracle, _ORACLE_KEYS, "oracle")
    name = _require(oracle, "name")
    params = dict(oracle.get("params") or {})

    nu = _parse_nu(_require(raw, "nu"))
    initial = np.asarray(_require(raw, "initial_point"), dtype=float).reshape(-1)
    d = initial.size
    curiosity = _parse_curiosity(_require(raw, "curiosity"), d, "curiosity")

    mixture = None
    if raw.get("mixture") is not None:
        mixture = []
        for k, comp in enumerate(raw["mixture"]):
            dist = _parse_curiosity(comp, d, f"mixture[{k}]", _MIXTURE_KEYS)
            mixture.append((float(_require(comp, "weight")), dist))

    user_box = None
    box = None
    shift = None
    if raw.get("box") is not None:
        _reject_unknown(raw["box"], _BOX_KEYS, "box")
        lo = np.broadcast_to(np.asarray(_require(raw["box"], "min"), dtype=float), (d,)).copy()
        hi = np.broadcast_to(np.asarray(_require(raw["box"], "max"), dtype=float), (d,)).copy()
        user_box = (lo, hi)
        if not nu.is_real:
            shift = shift_box(lo, hi)
            box = (shift.shifted_min, shift.shifted_max)
        else:
            box = user_box
    if shift is not None:
        initial = shift.shift(initial)

    search = SearchConfig(
        nu=nu,
        curiosity=curiosity,
        budget=int(_require(raw, "budget")),
        initial_point=initial,
        seed=int(raw.get("seed", 0)),
        momentum_xi=float(raw.get("momentum_xi", 0.0)),
        forgetting_lambda=raw.get("forgetting_lambda"),
        mixture=mixture,
        box=box,
        script=None if raw.get("script") is None else _shifted_script(raw["script"], d, shift),
        early_stop_tol=raw.get("early_stop_tol"),
        early_stop_patience=int(raw.get("early_stop_patience", 25)),
    )

    repetitions = int(raw.get("repetitions", 1))
    workers = int(raw.get("workers", 1))
    if repetitions < 1 or workers < 1:
        raise ConfigError("repetitions and workers must be positive")
    fmt = raw.get("format", "csv")
    if fmt not in FORMATS:
        raise ConfigError(f"format must be one of {FORMATS}, got {fmt!r}")

    target = radius = None
    if raw.get("success") is not None:
        _reject_unknown(raw["success"], _SUCCESS_KEYS, "success")
        target = np.asarray(_require(raw["success"], "target"), dtype=float).reshape(-1)
        radius = float(_require(raw["success"], "radius"))
        if target.size != d:
            raise ConfigError("success target must match the search dimension")

    noise_sigma = oracle.get("noise_sigma")
    return ExperimentConfig(
        oracle_name=name,
        oracle_params=params,
        search=search,
        repetitions=repetitions,
        workers=workers,
        output=raw.get("output"),
        format=fmt,
        noise_sigma=None if noise_sigma is None else float(noise_sigma),
        noise_seed=int(oracle.get("noise_seed", 0)),
        user_box=user_box,
        success_target=target,
        success_radius=radius,
    )


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    return parse_config(raw)


# ---------------------------------------------------------------------------
# running
# ---------------------------------------------------------------------------


class _GuardedOracle:
    """Turns any failure of the goal function into OracleError; optionally shifts queries back."""

    def __init__(self, oracle: Oracle, shift: Optional[BoxShift]):
        self.oracle = oracle
        self.shift = shift

    def __call__(self, y) -> float:
        x = y if self.shift is None else self.shift.unshift(y)
        try:
            return self.oracle(x)
        except Exception as exc:
            raise OracleError(f"{self.oracle.name} failed at {np.asarray(x).tolist()}: {exc}") from exc


def build_oracle(config: ExperimentConfig) -> Oracle:
    try:
        oracle = make_oracle(config.oracle_name, config.search.dimension, **config.oracle_params)
        if oracle.dimension is not None and oracle.dimension != config.search.dimension:
            raise InvalidValue(
                f"{config.oracle_name} has dimension {oracle.dimension}, search has {config.search.dimension}"
            )
        if config.noise_sigma is not None:
            oracle = NoisyOracle(oracle, config.noise_sigma, config.noise_seed)
    except NotFound as exc:
        raise OracleError(f"unknown oracle {config.oracle_name!r}") from exc
    except (BarycenterError, ValueError, TypeError) as exc:
        raise OracleError(str(exc)) from exc
    return oracle


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    records: list = field(default_factory=list)
    seeds: list = field(default_factory=list)

    @property
    def degenerate(self) -> bool:
        return any(r.degenerate for r in self.records)

    def readouts(self) -> list:
        """Final barycenters in user coordinates (``None`` for empty runs)."""
        shift = self.config.shift
        finals = [r.final_readout for r in self.records]
        if shift is None:
            return finals
        return [None if f is None else shift.unshift(f) for f in finals]

    def success_flags(self) -> Optional[list]:
        if self.config.success_radius is None:
            return None
        target, radius = self.config.success_target, self.config.success_radius
        return [
            final is not None and bool(np.linalg.norm(final - target) <= radius) for final in self.readouts()
        ]

    def summary(self) -> dict:
        runs = []
        for seed, record, final in zip(self.seeds, self.records, self.readouts()):
            best_value, best_point = record.best
            shift = self.config.shift
            if best_point is not None and shift is not None:
                best_point = shift.unshift(best_point)
            runs.append(
                {
                    "seed": seed,
                    "best_value": best_value,
                    "best_point": None if best_point is None else best_point.tolist(),
                    "final_readout": None if final is None else final.tolist(),
                    "queries": record.queries,
                    "degenerate": record.degenerate,
                    "stopped_early": record.stopped_early,
                    "wall_time": record.wall_time,
                    "metadata": dict(record.metadata),
                }
            )
        best = min((r for r in runs if r["best_value"] is not None), key=lambda r: r["best_value"], default=None)
        out = {
            "config": self.config.to_dict(),
            "best_value": None if best is None else best["best_value"],
            "best_point": None if best is None else best["best_point"],
            "final_readout": runs[0]["final_readout"] if len(runs) == 1 else [r["final_readout"] for r in runs],
            "queries": sum(r["queries"] for r in runs),
            "degenerate": self.degenerate,
            "runs": runs,
        }
        flags = self.success_flags()
        if flags is not None:
            out["success_rate"] = sum(flags) / len(flags)
        return out


def _one_repetition(config: ExperimentConfig, oracle, seed: int) -> RunRecord:
    search = config.search.with_seed(seed)
    if config.workers == 1:
        return run_search(search, oracle)
    return run_parallel([search] * config.workers, oracle)


def run_experiment(config: ExperimentConfig, seed: Optional[int] = None, threads: int = 1) -> ExperimentResult:
    """Run every repetition; repetition ``k`` uses seed ``base + k``.

    Noisy oracles keep one call counter, so their repetitions always run
    one after another; otherwise ``threads`` may run them concurrently.
    """
    base = config.search.seed if seed is None else int(seed)
    seeds = [base + k for k in range(config.repetitions)]
    oracle = build_oracle(config)
    guarded = _GuardedOracle(oracle, config.shift)
    if threads > 1 and config.noise_sigma is None:
        with ThreadPoolExecutor(threads) as pool:
            records = list(pool.map(lambda s: _one_repetition(config, guarded, s), seeds))
    else:
        records = [_one_repetition(config, guarded, s) for s in seeds]
    return ExperimentResult(config, records, seeds)


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------


def _row_values(record: RunRecord, shift: Optional[BoxShift]):
    for row in record.rows:
        x, xhat = row.query, row.readout
        if shift is not None:
            x, xhat = shift.unshift(x), shift.unshift(xhat)
        yield row.n, x, row.value, row.mass_magnitude, xhat, row.step_norm


def rows_csv(record: RunRecord, shift: Optional[BoxShift] = None) -> str:
    """Trace as CSV: ``n, x[0..], f, mass_magnitude, xhat[0..], step_norm``; floats via ``repr``."""
    d = record.config.dimension
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(
        ["n", *(f"x[{i}]" for i in range(d)), "f", "mass_magnitude", *(f"xhat[{i}]" for i in range(d)), "step_norm"]
    )
    for n, x, f, mass, xhat, step in _row_values(record, shift):
        writer.writerow([n, *map(repr, map(float, x)), repr(f), repr(mass), *map(repr, map(float, xhat)), repr(step)])
    return buf.getvalue()


def rows_json(record: RunRecord, shift: Optional[BoxShift] = None) -> str:
    rows = [
        {
            "n": n,
            "x": x.tolist(),
            "f": f,
            "mass_magnitude": mass,
            "xhat": xhat.tolist(),
            "step_norm": step,
        }
        for n, x, f, mass, xhat, step in _row_values(record, shift)
    ]
    return json.dumps({"rows": rows}, indent=1) + "\n"


def _paths(output: str, fmt: str, repetitions: int) -> tuple[list[str], str]:
    root, ext = os.path.splitext(output)
    if not ext:
        ext = "." + fmt
    if repetitions == 1:
        rows = [root + ext]
    else:
        width = len(str(repetitions - 1))
        rows = [f"{root}-rep{k:0{width}d}{ext}" for k in range(repetitions)]
    return rows, root + ".summary.json"


def write_outputs(result: ExperimentResult, output: str, fmt: Optional[str] = None) -> dict:
    """Write one trace per repetition plus a JSON summary; returns the paths written."""
    fmt = fmt or result.config.format
    render = rows_csv if fmt == "csv" else rows_json
    row_paths, summary_path = _paths(output, fmt, len(result.records))
    texts = [render(r, result.config.shift) for r in result.records]
    summary = json.dumps(result.summary(), indent=2) + "\n"
    directory = os.path.dirname(os.path.abspath(output))
    os.makedirs(directory, exist_ok=True)
    for path, text in zip(row_paths, texts):
        with open(path, "w", newline="") as fh:
            fh.write(text)
    with open(summary_path, "w") as fh:
        fh.write(summary)
    return {"rows": row_paths, "summary": summary_path}
