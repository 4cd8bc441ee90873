"""Statistical checks of the predictions in :mod:`barycenter.analysis`.

Every check reads its seeds and tolerances from ``registry.json`` and
returns :class:`CheckResult` rows. Empirical sides run the library's own
search path (``next_query`` followed by ``absorb``) wherever a barycenter
step is simulated, so a check exercises the implementation and the
prediction independently.
"""
from __future__ import annotations

import cmath
import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from importlib import resources
from typing import Callable, Optional

import numpy as np

from . import analysis
from .core import batch_barycenter, make_record
from .oracles import make_oracle
from .recursive import Accumulator, absorb, readout
from .rng import stream
from .strategies import CuriosityDistribution, SearchConfig, next_query, run_search, sample_curiosity

__all__ = ["CheckResult", "load_registry", "run_checks", "suites", "format_table", "format_report"]


@dataclass
class CheckResult:
    check_id: str
    suite: str
    predicted: list
    empirical: list
    se: Optional[list]
    tolerance: str
    passed: bool
    detail: str = ""
    extra: dict = field(default_factory=dict)


def load_registry(path=None) -> dict:
    if path is None:
        text = resources.files("barycenter").joinpath("registry.json").read_text()
    else:
        with open(path) as fh:
            text = fh.read()
    return json.loads(text)


def _flat(x) -> list:
    return np.atleast_1d(np.asarray(x, dtype=float)).ravel().tolist()


def within_se(predicted, empirical, se, n_se: float) -> bool:
    diff = np.abs(np.asarray(predicted) - np.asarray(empirical))
    return bool(np.all(diff <= n_se * np.asarray(se)))


def within_rel(predicted, empirical, rel: float, scale=None) -> bool:
    predicted = np.asarray(predicted, dtype=float)
    scale = np.abs(predicted) if scale is None else np.asarray(scale)
    return bool(np.all(np.abs(predicted - np.asarray(empirical)) <= rel * scale))


# ---------------------------------------------------------------------------
# barycenter steps
# ---------------------------------------------------------------------------


def _quadratic_setup(params):
    f = make_oracle("quadratic", hessian=params["hessian"]).func
    dist = CuriosityDistribution.isotropic(len(params["center"]), params["curiosity_variance"])
    return f, dist


def _prior(params, f) -> Accumulator:
    acc = Accumulator.empty(params["nu"])
    center = np.asarray(params["center"], dtype=float)
    prior = params.get("prior", "center")
    if prior == "none":
        return acc
    if prior == "two-points":
        previous = np.asarray(params["previous"], dtype=float)
        acc = absorb(acc, previous, f(previous))
    return absorb(acc, center, f(center))


def simulate_steps(acc: Accumulator, f: Callable, config: SearchConfig, simulations: int) -> np.ndarray:
    """Barycenter steps of ``simulations`` independent one-query continuations of ``acc``.

    An empty accumulator starts from ``config.initial_point`` as its
    barycenter and queries ``initial_point + z``.
    """
    start = readout(acc) if acc.count else np.asarray(config.initial_point, dtype=float)
    steps = np.empty((simulations, config.dimension))
    for i in range(simulations):
        rng = stream(config.seed, 0, i)
        if acc.count:
            x = next_query(acc, config, rng)
        else:
            x = start + sample_curiosity(config.curiosity, rng)
        steps[i] = readout(absorb(acc, x, f(x))) - start
    return steps


def _one_step_config(params, dist, acc) -> SearchConfig:
    start = np.asarray(params["center"], dtype=float)
    return SearchConfig(
        nu=params["nu"],
        curiosity=dist,
        budget=1,
        initial_point=start,
        seed=params["seed"],
        momentum_xi=params.get("momentum_xi", 0.0),
    )


def check_expected_step(check_id, params) -> list[CheckResult]:
    f, dist = _quadratic_setup(params)
    acc = _prior(params, f)
    config = _one_step_config(params, dist, acc)
    mass, center = acc.mass, (readout(acc) if acc.count else config.initial_point)
    curiosity = dist
    if config.momentum_xi and acc.last_step is not None:
        curiosity = dist.shifted(config.momentum_xi * acc.last_step)
    steps = simulate_steps(acc, f, config, params["simulations"])
    pred = analysis.predicted_mean_step(
        mass, center, f, curiosity, params["nu"], samples=params["prediction_samples"], seed=config.seed + 1
    )
    emp = steps.mean(axis=0)
    se_emp = steps.std(axis=0, ddof=1) / math.sqrt(len(steps))
    se = np.hypot(se_emp, pred.mean_se)
    n_se = params["n_se"]
    return [
        CheckResult(
            check_id,
            params["suite"],
            _flat(pred.mean),
            _flat(emp),
            _flat(se),
            f"{n_se:g} combined SE",
            within_se(pred.mean, emp, se, n_se),
            detail=f"z = {np.round((emp - pred.mean) / se, 2).tolist()}",
        )
    ]


def check_step_variance(check_id, params) -> list[CheckResult]:
    f, dist = _quadratic_setup(params)
    acc = _prior(params, f)
    config = _one_step_config(params, dist, acc)
    steps = simulate_steps(acc, f, config, params["simulations"])
    emp = np.cov(steps.T)
    pred = analysis.predicted_step_variance(
        acc.mass, readout(acc), f, dist, params["nu"], samples=params["prediction_samples"], seed=config.seed + 1
    )
    cov = pred.covariance
    # Off-diagonal entries are judged against the geometric mean of their diagonals.
    scale = np.sqrt(np.outer(np.diag(cov), np.diag(cov)))
    rel = params["rel_tol"]
    return [
        CheckResult(
            check_id,
            params["suite"],
            _flat(cov),
            _flat(emp),
            _flat(pred.covariance_se),
            f"{rel:g} relative per entry",
            within_rel(cov, emp, rel, scale),
            detail=f"relative error {np.round((emp - cov) / scale, 4).ravel().tolist()}",
        )
    ]


# ---------------------------------------------------------------------------
# interference
# ---------------------------------------------------------------------------


def check_interference_closed_form(check_id, params) -> list[CheckResult]:
    r, q = np.array(params["points"], dtype=float).T
    closed = analysis.interference_factor_sq(r, q)
    direct = np.array([abs(cmath.sinh(complex(a, b)) / complex(a, b)) ** 2 for a, b in zip(r, q)])
    rel = params["rel_tol"]
    return [
        CheckResult(
            check_id,
            params["suite"],
            _flat(closed),
            _flat(direct),
            None,
            f"{rel:g} relative",
            within_rel(closed, direct, rel, np.abs(direct)),
        )
    ]


def interference_mass_ratio(nu: complex, gradient, delta, box_center, offset, samples, seed):
    """Monte Carlo ``|E exp(-nu f)| / E exp(-Re(nu) f)`` for linear ``f`` on a uniform box."""
    gradient = np.asarray(gradient, dtype=float)
    delta = np.asarray(delta, dtype=float)
    box_center = np.asarray(box_center, dtype=float)
    rng = stream(seed)
    x = box_center + rng.uniform(-1.0, 1.0, size=(samples, gradient.size)) * delta
    f = make_oracle("linear", offset=offset, gradient=gradient).func(x)
    complex_mass = np.exp(-nu * f).mean()
    real_mass = np.exp(-nu.real * f).mean()
    w = np.exp(-nu * f) / real_mass
    se = np.sqrt(np.var(w.real) + np.var(w.imag)) / math.sqrt(samples)
    return abs(complex_mass) / real_mass, se


def check_interference_discount(check_id, params) -> list[CheckResult]:
    nu = complex(*params["nu"])
    gradient = np.asarray(params["gradient"], dtype=float)
    # Half-widths that put Im(nu f'_a delta_a) at pi on every axis.
    delta = math.pi / (nu.imag * np.abs(gradient))
    predicted = analysis.predicted_weight_discount(nu, gradient, delta)
    empirical, se = interference_mass_ratio(
        nu, gradient, delta, params["box_center"], params["offset"], params["samples"], params["seed"]
    )
    rel = params["rel_tol"]
    return [
        CheckResult(
            check_id,
            params["suite"],
            [predicted],
            [empirical],
            [se],
            f"{rel:g} relative",
            within_rel(predicted, empirical, rel),
            extra={"delta": delta.tolist()},
        )
    ]


# ---------------------------------------------------------------------------
# noise
# ---------------------------------------------------------------------------


def _noise_problem(params):
    spec = params["points"]
    x = np.linspace(spec["start"], spec["stop"], spec["count"])
    goal = params["goal"]
    return x, goal["scale"] * (x - goal["center"]) ** 2


def noisy_barycenters(points, values, nu, sigma, draws, seed):
    """Barycenters under antithetic noise pairs ``(w, -w)``; returns both halves."""
    points = np.asarray(points, dtype=float)
    g = stream(seed).standard_normal((draws // 2, len(values)))

    def eta(w):
        log_a = -nu * (values + w)
        a = np.exp(log_a - log_a.max(axis=1, keepdims=True))
        return (a @ points) / a.sum(axis=1)

    return eta(sigma * g), eta(-sigma * g)


def noise_statistics(points, values, nu, sigma, draws, seed):
    """Empirical bias (with SE from pair means) and variance of the noisy barycenter."""
    plus, minus = noisy_barycenters(points, values, nu, sigma, draws, seed)
    eta_bar = float(batch_barycenter([make_record([p], v, nu) for p, v in zip(points, values)], nu)[0])
    pair = 0.5 * (plus + minus) - eta_bar
    bias = pair.mean()
    se = pair.std(ddof=1) / math.sqrt(len(pair))
    var = np.concatenate([plus, minus]).var(ddof=1)
    return bias, se, var


def check_noise_bias(check_id, params) -> list[CheckResult]:
    x, fx = _noise_problem(params)
    pred = analysis.noise_prediction_from_arrays(x, fx, params["nu"], params["sigma"])
    bias, se, _ = noise_statistics(x, fx, params["nu"], params["sigma"], params["draws"], params["seed"])
    n_se = params["n_se"]
    return [
        CheckResult(
            check_id,
            params["suite"],
            _flat(pred.mean_shift),
            [float(bias)],
            [se],
            f"{n_se:g} SE",
            within_se(pred.mean_shift, bias, se, n_se),
        )
    ]


def check_noise_variance(check_id, params) -> list[CheckResult]:
    x, fx = _noise_problem(params)
    pred = analysis.noise_prediction_from_arrays(x, fx, params["nu"], params["sigma"])
    _, _, var = noise_statistics(x, fx, params["nu"], params["sigma"], params["draws"], params["seed"])
    rel = params["rel_tol"]
    return [
        CheckResult(
            check_id,
            params["suite"],
            _flat(pred.covariance),
            [float(var)],
            None,
            f"{rel:g} relative",
            within_rel(pred.covariance, var, rel),
        )
    ]


def check_noise_slope(check_id, params) -> list[CheckResult]:
    x, fx = _noise_problem(params)
    sigmas = np.asarray(params["sigmas"], dtype=float)
    stats = [noise_statistics(x, fx, params["nu"], s, params["draws"], params["seed"]) for s in sigmas]
    bias = np.abs([b for b, _, _ in stats])
    var = np.array([v for _, _, v in stats])
    log_s = np.log(sigmas)
    slopes = [np.polyfit(log_s, np.log(bias), 1)[0], np.polyfit(log_s, np.log(var), 1)[0]]
    target, tol = params["slope"], params["abs_tol"]
    return [
        CheckResult(
            check_id,
            params["suite"],
            [target, target],
            [float(s) for s in slopes],
            None,
            f"+-{tol:g} absolute",
            bool(np.all(np.abs(np.asarray(slopes) - target) <= tol)),
            detail="slopes of |bias| and variance",
            extra={"sigmas": sigmas.tolist(), "bias": bias.tolist(), "variance": var.tolist()},
        )
    ]


# ---------------------------------------------------------------------------
# quotient lemma
# ---------------------------------------------------------------------------


def check_quotient_zero_variance(check_id, params) -> list[CheckResult]:
    a = np.asarray(params["a"], dtype=float)
    B = np.asarray(params["b"], dtype=float)
    v = np.asarray(params["v_mean"], dtype=float)
    mean, cov = analysis.quotient_moments(a, B, v, np.zeros((a.size, a.size)))
    exact = B @ v / (a @ v)
    ok = bool(np.all(mean == exact) and np.all(cov == 0.0))
    return [
        CheckResult(
            check_id, params["suite"], _flat(mean) + _flat(cov), _flat(exact) + [0.0] * cov.size, None, "exact", ok
        )
    ]


def random_quotient_instance(rng: np.random.Generator, max_size: int, spread: tuple[float, float]):
    n = int(rng.integers(2, max_size + 1))
    a = rng.uniform(0.5, 2.0, n)
    b = rng.uniform(-1.0, 2.0, n)
    v_mean = rng.uniform(0.5, 2.0, n)
    L = rng.normal(size=(n, n))
    corr = L @ L.T + n * np.eye(n)
    d = 1.0 / np.sqrt(np.diag(corr))
    corr = corr * np.outer(d, d)
    rel = rng.uniform(*spread, n) * v_mean
    return a, b, v_mean, corr * np.outer(rel, rel)


def check_quotient_monte_carlo(check_id, params) -> list[CheckResult]:
    rng = stream(params["seed"])
    n_se, var_tol = params["n_se"], params["var_rel_tol"]
    preds, emps, ses, pvars, evars = [], [], [], [], []
    mean_ok = var_ok = True
    for k in range(params["instances"]):
        a, b, v_mean, V = random_quotient_instance(rng, params["max_size"], tuple(params["relative_spread"]))
        mean, cov = analysis.quotient_moments(a, b, v_mean, V)
        v = stream(params["seed"], 1, k).multivariate_normal(v_mean, V, size=params["draws"], method="cholesky")
        q = (v @ b) / (v @ a)
        emp, var = q.mean(), q.var(ddof=1)
        se = q.std(ddof=1) / math.sqrt(len(q))
        mean_ok &= within_se(mean[0], emp, se, n_se)
        var_ok &= within_rel(cov[0, 0], var, var_tol)
        preds.append(float(mean[0]))
        emps.append(float(emp))
        ses.append(float(se))
        pvars.append(float(cov[0, 0]))
        evars.append(float(var))
    z = (np.array(emps) - np.array(preds)) / np.array(ses)
    rel_var = np.array(evars) / np.array(pvars) - 1.0
    return [
        CheckResult(
            check_id + ".mean",
            params["suite"],
            preds,
            emps,
            ses,
            f"{n_se:g} SE per instance",
            bool(mean_ok),
            detail=f"max |z| = {np.abs(z).max():.2f} over {len(z)} instances",
        ),
        CheckResult(
            check_id + ".variance",
            params["suite"],
            pvars,
            evars,
            None,
            f"{var_tol:g} relative per instance",
            bool(var_ok),
            detail=f"max relative error {np.abs(rel_var).max():.4f}",
        ),
    ]


def check_quotient_specialization(check_id, params) -> list[CheckResult]:
    rng = stream(params["seed"])
    nu, sigma, tol = params["nu"], params["sigma"], params["rel_tol"]
    w_bar = math.exp((nu * sigma) ** 2 / 2)
    worst = 0.0
    preds, emps = [], []
    for _ in range(params["instances"]):
        n = int(rng.integers(2, 30))
        dim = int(rng.integers(1, 4))
        x = rng.uniform(0.0, 3.0, (n, dim))
        fx = rng.uniform(-1.0, 2.0, n)
        a = np.exp(-nu * fx)
        B = (x * a[:, None]).T
        v_mean = np.full(n, w_bar)
        V = (w_bar**4 - w_bar**2) * np.eye(n)
        mean, cov = analysis.quotient_moments(a, B, v_mean, V)
        theorem = analysis.noise_prediction_from_arrays(x, fx, nu, sigma, exact_gain=True)
        ref_mean = theorem.eta_bar + theorem.mean_shift
        scale_m = np.abs(ref_mean).max()
        scale_c = np.abs(theorem.covariance).max()
        worst = max(
            worst,
            np.abs(mean - ref_mean).max() / scale_m,
            np.abs(cov - theorem.covariance).max() / scale_c,
        )
        preds.extend(_flat(mean))
        emps.extend(_flat(ref_mean))
    return [
        CheckResult(
            check_id,
            params["suite"],
            preds,
            emps,
            None,
            f"{tol:g} relative",
            worst <= tol,
            detail=f"worst relative difference {worst:.2e}",
        )
    ]


# ---------------------------------------------------------------------------
# searches
# ---------------------------------------------------------------------------


def sphere_config(params, seed: int) -> SearchConfig:
    d = len(params["center"])
    return SearchConfig(
        nu=params["nu"],
        curiosity=CuriosityDistribution.isotropic(d, params["curiosity_variance"]),
        budget=params["budget"],
        initial_point=params["initial_point"],
        seed=seed,
        momentum_xi=params.get("momentum_xi", 0.0),
    )


def check_end_to_end(check_id, params) -> list[CheckResult]:
    center = np.asarray(params["center"], dtype=float)
    seeds = range(params["seeds"]["start"], params["seeds"]["start"] + params["seeds"]["count"])
    distances = []
    for seed in seeds:
        oracle = make_oracle("sphere", center=center)
        record = run_search(sphere_config(params, seed), oracle)
        distances.append(float(np.linalg.norm(record.final_readout - center)))
    successes = int(np.sum(np.array(distances) <= params["radius"]))
    need = params["min_successes"]
    return [
        CheckResult(
            check_id,
            params["suite"],
            [need],
            [successes],
            None,
            f">= {need}/{len(distances)} within {params['radius']}",
            successes >= need,
            extra={"distances": distances},
        )
    ]


def asymmetry_biases(half_width: float, count: int, nus) -> list[float]:
    x = np.linspace(-half_width, half_width, count)
    f = make_oracle("asymmetric").func(x[:, None])
    return [float(abs(batch_barycenter([make_record([p], v, nu) for p, v in zip(x, f)], nu)[0])) for nu in nus]


def check_asymmetry(check_id, params) -> list[CheckResult]:
    biases = asymmetry_biases(params["half_width"], params["count"], params["nus"])
    ok = all(b2 < b1 for b1, b2 in zip(biases, biases[1:]))
    return [CheckResult(check_id, params["suite"], params["nus"], biases, None, "strictly decreasing", ok)]


CHECKS: dict[str, Callable[[str, dict], list[CheckResult]]] = {
    "expected-step.fresh": check_expected_step,
    "expected-step.quadratic": check_expected_step,
    "expected-step.momentum": check_expected_step,
    "step-variance.minimum": check_step_variance,
    "interference.closed-form": check_interference_closed_form,
    "interference.discount": check_interference_discount,
    "noise.bias": check_noise_bias,
    "noise.variance": check_noise_variance,
    "noise.slope": check_noise_slope,
    "quotient-lemma.zero-variance": check_quotient_zero_variance,
    "quotient-lemma.monte-carlo": check_quotient_monte_carlo,
    "quotient-lemma.specialization": check_quotient_specialization,
    "end-to-end.sphere": check_end_to_end,
    "asymmetry.bias-trend": check_asymmetry,
}


def suites(registry: Optional[dict] = None) -> dict[str, list[str]]:
    registry = registry or load_registry()
    out: dict[str, list[str]] = {}
    for check_id, params in registry["checks"].items():
        out.setdefault(params["suite"], []).append(check_id)
    return out


def run_checks(selection: str = "all", registry: Optional[dict] = None) -> list[CheckResult]:
    """Run a suite name, a single check id, or ``"all"``."""
    registry = registry or load_registry()
    checks = registry["checks"]
    if selection == "all":
        ids = list(checks)
    elif selection in checks:
        ids = [selection]
    else:
        ids = suites(registry).get(selection)
        if not ids:
            raise KeyError(f"unknown suite or check {selection!r}")
    results = []
    for check_id in ids:
        results.extend(CHECKS[check_id](check_id, checks[check_id]))
    return results


def _short(values, limit=3) -> str:
    if values is None:
        return "-"
    text = ", ".join(f"{v:.6g}" for v in values[:limit])
    return text + (", ..." if len(values) > limit else "")


def format_table(results) -> str:
    header = ("check", "predicted", "empirical", "SE", "tolerance", "verdict")
    rows = [
        (
            r.check_id,
            _short(r.predicted),
            _short(r.empirical),
            _short(r.se),
            r.tolerance,
            "PASS" if r.passed else "FAIL",
        )
        for r in results
    ]
    widths = [max(len(h), *(len(row[i]) for row in rows)) if rows else len(h) for i, h in enumerate(header)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths))]
    lines.append("  ".join("-" * w for w in widths))
    lines.extend("  ".join(c.ljust(w) for c, w in zip(row, widths)) for row in rows)
    return "\n".join(lines)


def format_report(results, fmt: str = "json") -> str:
    if fmt == "json":
        return json.dumps([asdict(r) for r in results], indent=2) + "\n"
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["check", "suite", "predicted", "empirical", "se", "tolerance", "verdict"])
    for r in results:
        writer.writerow(
            [
                r.check_id,
                r.suite,
                " ".join(repr(v) for v in r.predicted),
                " ".join(repr(v) for v in r.empirical),
                "" if r.se is None else " ".join(repr(v) for v in r.se),
                r.tolerance,
                "pass" if r.passed else "fail",
            ]
        )
    return buf.getvalue()
