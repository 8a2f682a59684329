"""Monte Carlo and exact experiments: variance decay of the centered trace
statistic, the uniform-bound constant, Markov brothers' inequality checks
and the polynomial-method pipeline on exact moments.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial import Polynomial

from .analysis import EvenBump, PolynomialH, TestFunction, calibrate_c0, default_htilde
from .covers import DEFAULT_TRIAL_CAP, moment_exact, rational_fit, sample_homs
from .surface_group import build_catalog, build_genus2_group
from .trace_formula import ComposedTransform, geometric_side_batch


class DegreeTooHigh(ValueError):
    pass


@lru_cache(maxsize=None)
def calibrated_test_function() -> TestFunction:
    """The standard bump with its calibrated c0 (Lambda0 = 1/4)."""
    tf = TestFunction()
    calibrate_c0(tf)
    return tf


@lru_cache(maxsize=None)
def _catalog(cutoff: float):
    return build_catalog(build_genus2_group(), cutoff)


# ---------------------------------------------------------------------------
# Variance experiment

@dataclass(frozen=True)
class VarianceConfig:
    genus: int = 2
    degrees: tuple[int, ...] = (4, 6, 8, 10)
    samples: int = 10_000
    q: int = 2
    Lambda0: float = 0.25
    seed: int = 42
    htilde: tuple[float, ...] | None = None  # Chebyshev coefficients; default T_{q-1}
    bump_center: float | None = None  # use an explicit two-sided bump instead of (h o f_L0)^check
    bump_width: float = 0.5
    threads: int | None = None
    trial_cap: int = DEFAULT_TRIAL_CAP


@dataclass(frozen=True)
class DegreeResult:
    n: int
    samples: int
    mean: float
    variance: float
    meanSq: float
    stdError: float
    acceptedTrials: int
    rejectedTrials: int
    termCount: int


@dataclass
class VarianceRun:
    config: VarianceConfig
    supportRadius: float
    results: list[DegreeResult] = field(default_factory=list)
    slope: float = float("nan")
    slopeCI: tuple[float, float] = (float("nan"), float("nan"))
    constants: dict = field(default_factory=dict)


def test_function_for(cfg: VarianceConfig):
    """The even geometric-side function phi and its support radius."""
    if cfg.bump_center is not None:
        phi = EvenBump(cfg.bump_width, cfg.bump_center)
        return phi, phi.support, {}
    tf = calibrated_test_function().with_lambda0(cfg.Lambda0)
    M = tf.fAtIHalf
    poly = PolynomialH(tuple(cfg.htilde), M) if cfg.htilde is not None else default_htilde(cfg.q, M)
    if poly.q != cfg.q:
        raise ValueError("htilde must have q coefficients")
    phi = ComposedTransform(tf, poly)
    consts = {"c0": tf.c0, "fAtIHalf": M, "htildeNorm": poly.sup_norm()}
    return phi, phi.support, consts


def log_log_slope(ns: Sequence[int], means: Sequence[float], errs: Sequence[float]):
    """Weighted least-squares slope of log(mean) against log(n) and a 95% interval.

    Returns NaNs when any mean is non-positive (the logarithm is undefined).
    """
    ns = np.asarray(ns, dtype=float)
    m = np.asarray(means, dtype=float)
    e = np.asarray(errs, dtype=float)
    nan = float("nan")
    if len(ns) < 2 or np.any(m <= 0):
        return nan, (nan, nan)
    x = np.log(ns)
    y = np.log(m)
    sd = np.where(e > 0, e / m, 0.0)
    w = 1.0 / np.maximum(sd, 1e-12) ** 2 if np.all(sd > 0) else np.ones_like(x)
    X = np.column_stack([np.ones_like(x), x])
    cov = np.linalg.inv(X.T @ (w[:, None] * X))
    beta = cov @ (X.T @ (w * y))
    se = math.sqrt(cov[1, 1]) if np.all(sd > 0) else 0.0
    slope = float(beta[1])
    return slope, (slope - 1.96 * se, slope + 1.96 * se)


def run_variance_experiment(cfg: VarianceConfig) -> VarianceRun:
    """Sample covers for each n and record mean(S_n^2), where
    S_n = (1/n) * geometric side with phi = (h o f_L0)^check."""
    phi, T, consts = test_function_for(cfg)
    cat = _catalog(T)
    run = VarianceRun(cfg, T, constants={**consts, "supportRadius": T, "catalogEntries": len(cat)})
    for n in cfg.degrees:
        sample = sample_homs(cfg.genus, n, cfg.samples, cfg.seed, cfg.threads, cfg.trial_cap)
        values, terms = geometric_side_batch(cat, sample, phi, T)
        S = values / n
        sq = S * S
        total = int(sample.trials.sum())
        run.results.append(DegreeResult(
            n=n,
            samples=len(S),
            mean=float(S.mean()),
            # shifting by the first value keeps constant data at exactly zero variance
            variance=float((S - S[0]).var()),
            meanSq=float(sq.mean()),
            stdError=float(math.sqrt((sq - sq[0]).var() / len(S))),
            acceptedTrials=len(S),
            rejectedTrials=total - len(S),
            termCount=terms,
        ))
    run.slope, run.slopeCI = log_log_slope(
        [r.n for r in run.results], [r.meanSq for r in run.results], [r.stdError for r in run.results]
    )
    return run


def monotone_within(run: VarianceRun, k_se: float = 2.0) -> bool:
    """mean(S_n^2) is nonincreasing in n up to ``k_se`` combined standard errors."""
    res = run.results
    for a, b in zip(res, res[1:]):
        if b.meanSq > a.meanSq + k_se * math.hypot(a.stdError, b.stdError):
            return False
    return True


def _g(x: float) -> str:
    return format(x, ".17g")


def variance_csv_rows(run: VarianceRun, experiment: str = "variance") -> list[str]:
    rows = ["experiment,n,samples,mean_sq,std_err,seed"]
    for r in run.results:
        rows.append(f"{experiment},{r.n},{r.samples},{_g(r.meanSq)},{_g(r.stdError)},{run.config.seed}")
    return rows


def _json_float(x: float):
    return None if not math.isfinite(x) else x


def variance_summary_json(run: VarianceRun) -> str:
    summary = {
        "slope": _json_float(run.slope),
        "slope_ci": [_json_float(v) for v in run.slopeCI],
        "constants": {k: (_json_float(v) if isinstance(v, float) else v) for k, v in run.constants.items()},
        "degrees": [asdict(r) for r in run.results],
    }
    return json.dumps(summary, sort_keys=True, indent=2)


# ---------------------------------------------------------------------------
# Uniform bound

@dataclass(frozen=True)
class UniformBoundConfig:
    degrees: tuple[int, ...] = (2, 4, 6, 8)
    covers: int = 1000
    qs: tuple[int, ...] = (1, 2, 3, 4)
    lambdas: tuple[float, ...] = (0.25, 1.0, 4.0)
    seed: int = 42
    threads: int | None = None


@dataclass
class UniformBound:
    constant: float
    grid: dict  # (q, Lambda0) -> max ratio


def uniform_bound_measurement(cfg: UniformBoundConfig, htilde: Callable[[int, float], PolynomialH] | None = None,
                              samples: dict | None = None) -> UniformBound:
    """max over covers and the (q, Lambda0) grid of |S_n|^2 / (Lambda0^2 ||h~||^2)."""
    grid = {}
    base = calibrated_test_function()
    if samples is None:
        samples = {n: sample_homs(2, n, cfg.covers, cfg.seed, cfg.threads) for n in cfg.degrees}
    for q in cfg.qs:
        for lam in cfg.lambdas:
            tf = base.with_lambda0(lam)
            poly = htilde(q, tf.fAtIHalf) if htilde else default_htilde(q, tf.fAtIHalf)
            norm = poly.sup_norm()
            phi = ComposedTransform(tf, poly)
            cat = _catalog(phi.support)
            best = 0.0
            for n, sample in samples.items():
                values, _ = geometric_side_batch(cat, sample, phi)
                S = values / n
                if norm > 0:
                    best = max(best, float(np.max(S * S)) / (lam * lam * norm * norm))
            grid[(q, lam)] = best
    return UniformBound(max(grid.values(), default=0.0), grid)


# ---------------------------------------------------------------------------
# Markov brothers' inequality

@dataclass(frozen=True)
class MarkovCheck:
    polyDegree: int
    k: int
    leftSide: float
    rightSide: float
    satisfied: bool


def double_factorial(m: int) -> int:
    out = 1
    while m > 1:
        out *= m
        m -= 2
    return out


def _as_polynomial(p) -> Polynomial:
    if isinstance(p, Polynomial):
        return p
    return Polynomial(np.asarray(p, dtype=float))


def _reciprocal_sup(P: Polynomial, n0: int, nmax: int) -> float:
    """max(|P(1/n)| for n0 <= n <= nmax, |P(0)|), extending the scan until
    doubling it changes the maximum by less than 1e-12."""
    best = abs(float(P(0.0)))
    lo = n0
    while True:
        ns = np.arange(lo, nmax + 1, dtype=float)
        inc = float(np.max(np.abs(P(1.0 / ns)))) if ns.size else 0.0
        new = max(best, inc)
        if lo > n0 and new - best < 1e-12:
            return new
        best = new
        lo, nmax = nmax + 1, 2 * nmax


def markov_brothers_check(p, q: int, k: int, nMax: int | None = None) -> MarkovCheck:
    """Compare sup_{[0, 1/(2q^2)]} |P^(k)| with
    2^(2k+1) q^(4k) / (2k-1)!! * sup_{n >= q^2} |P(1/n)|."""
    P = _as_polynomial(p).trim()
    deg = P.degree()
    if deg > q:
        raise DegreeTooHigh(f"degree {deg} exceeds q = {q}")
    if k < 1:
        raise ValueError("k must be at least 1")
    n0 = q * q
    nMax = max(nMax or 1000, n0)
    D = P.deriv(k) if deg >= k else Polynomial([0.0])
    a, b = 0.0, 1.0 / (2.0 * q * q)
    x = np.linspace(a, b, 10_000)
    left = float(np.max(np.abs(D(x))))
    if D.degree() >= 1:
        for r in D.deriv().roots():
            if abs(r.imag) < 1e-12 and a <= r.real <= b:
                left = max(left, abs(float(D(r.real))))
    factor = 2.0 ** (2 * k + 1) * float(q) ** (4 * k) / double_factorial(2 * k - 1)
    right = factor * _reciprocal_sup(P, n0, nMax)
    return MarkovCheck(deg, k, left, right, left <= right + 1e-9 * right)


def markov_fuzz(trials: int = 1000, seed: int = 0, qmax: int = 8, kmax: int = 3) -> list[MarkovCheck]:
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(trials):
        q = int(rng.integers(1, qmax + 1))
        k = int(rng.integers(1, kmax + 1))
        deg = int(rng.integers(0, q + 1))
        coeffs = rng.uniform(-1.0, 1.0, deg + 1)
        out.append(markov_brothers_check(coeffs, q, k))
    return out


# ---------------------------------------------------------------------------
# Polynomial method on exact moments

def moment_table(words: Sequence, degrees: Sequence[int] = (2, 3, 4, 5)) -> list[tuple[int, float]]:
    return [(n, moment_exact(2, n, list(words))) for n in degrees]


@dataclass(frozen=True)
class PipelineReport:
    coeffs: tuple[float, ...]
    residuals: tuple[float, ...]
    limit: float
    kappa: int
    interval: tuple[float, float]
    supDerivative: float
    markovRight: float


def polynomial_method_pipeline(momentTable: Sequence[tuple[int, float]], q: int, kappa: int = 2,
                               maxDeg: int | None = None) -> PipelineReport:
    """Fit p(1/n) to the moments, form P(x) = x^2 p(x) and report
    sup |P'| on [0, 1/(2 q^kappa)] with the Markov right-hand side for P."""
    data = list(momentTable)
    deg = len(data) - 1 if maxDeg is None else maxDeg
    fit = rational_fit(data, deg)
    P = Polynomial([0.0, 0.0, *fit.coeffs])
    dP = P.deriv()
    b = 1.0 / (2.0 * q ** kappa)
    x = np.linspace(0.0, b, 10_000)
    sup = float(np.max(np.abs(dP(x))))
    if dP.degree() >= 1:
        for r in dP.deriv().roots():
            if abs(r.imag) < 1e-12 and 0.0 <= r.real <= b:
                sup = max(sup, abs(float(dP(r.real))))
    Q = max(1, P.trim().degree())
    right = 8.0 * Q ** 4 * _reciprocal_sup(P, Q * Q, 1000)
    return PipelineReport(tuple(float(c) for c in fit.coeffs), tuple(float(r) for r in fit.residuals),
                          fit.limit, kappa, (0.0, b), sup, right)
