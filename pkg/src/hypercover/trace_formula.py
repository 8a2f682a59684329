"""Computable pieces of the twisted Selberg trace formula on a random cover:
the geometric side over the geodesic catalog, the volume term, Weyl-law
predictions and the pre-trace sum over a displacement ball.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import optimize

from .analysis import PolynomialH, TestFunction, inverse_fourier_even, selberg_kernel
from .analysis import spectral_measure_integral, tanh_measure_integral
from .covers import BudgetExceeded, CoverHom, HomSample, apply_word, cycle_orbit_identity_check
from .covers import fix_count, word_images
from .surface_group import (
    FuchsianGroup,
    GeodesicCatalog,
    _letters,
    free_reduce,
    geodesic_length,
    same_element,
    word_matrix,
)


class CatalogTooSmall(ValueError):
    """The catalog cutoff is below the support radius of the test function."""


def _support_of(phi, T):
    if T is not None:
        return float(T)
    try:
        return float(phi.support)
    except AttributeError:
        raise ValueError("test function needs a support radius") from None


@dataclass(frozen=True)
class TraceStatistic:
    value: float
    termCount: int
    truncation: dict
    cover: CoverHom | None = None
    testFn: object = None


def _terms(cat: GeodesicCatalog, phi, T: float):
    """(entry index, k, weight) for every k l <= T with nonzero phi(k l)."""
    out = []
    for idx, e in enumerate(cat.entries):
        ell = e.length
        k = 1
        while k * ell <= T:
            w = ell / (2.0 * math.sinh(k * ell / 2.0)) * float(phi(k * ell))
            out.append((idx, k, w))
            k += 1
    return out


def geometric_side(cat: GeodesicCatalog, hom: CoverHom, phi, T: float | None = None) -> TraceStatistic:
    """sum over catalog entries g and k >= 1 with k l_g <= T of
    l_g / (2 sinh(k l_g / 2)) phi(k l_g) Fix(rho(g)^k)."""
    T = _support_of(phi, T)
    if cat.lengthCutoff < T:
        raise CatalogTooSmall(f"catalog cutoff {cat.lengthCutoff} < support radius {T}")
    terms = _terms(cat, phi, T)
    vals = []
    perms = {}
    for idx, k, w in terms:
        if idx not in perms:
            perms[idx] = apply_word(hom, cat.entries[idx].cls.letters)
        vals.append(w * fix_count(perms[idx] ** k))
    vals.sort(key=abs)
    value = math.fsum(vals)
    max_k = max((k for _, k, _ in terms), default=0)
    return TraceStatistic(value, len(terms), {"supportRadius": T, "maxK": max_k}, hom, phi)


def _power_fix_counts(images: np.ndarray, kmax: int) -> np.ndarray:
    """Fix counts of sigma^k for k = 1..kmax; images has shape (H, n)."""
    H, n = images.shape
    rows = np.arange(H)[:, None]
    ident = np.arange(n)
    cur = images.copy()
    out = np.empty((kmax, H), dtype=np.int64)
    for k in range(kmax):
        out[k] = (cur == ident).sum(axis=1)
        cur = images[rows, cur]
    return out


def geometric_side_batch(cat: GeodesicCatalog, sample: HomSample, phi, T: float | None = None):
    """geometric_side for every homomorphism of a batch; returns (values, termCount)."""
    T = _support_of(phi, T)
    if cat.lengthCutoff < T:
        raise CatalogTooSmall(f"catalog cutoff {cat.lengthCutoff} < support radius {T}")
    terms = _terms(cat, phi, T)
    H = len(sample)
    if not terms:
        return np.zeros(H), 0
    contrib = np.empty((len(terms), H))
    by_entry: dict[int, list[tuple[int, int, float]]] = {}
    for row, (idx, k, w) in enumerate(terms):
        by_entry.setdefault(idx, []).append((row, k, w))
    for idx, items in by_entry.items():
        images = word_images(sample.gens, cat.entries[idx].cls.letters)
        fixes = _power_fix_counts(images, max(k for _, k, _ in items))
        for row, k, w in items:
            contrib[row] = w * fixes[k - 1]
    order = np.argsort(np.abs(contrib), axis=0, kind="stable")
    ordered = np.take_along_axis(contrib, order, axis=0)
    values = np.array([math.fsum(ordered[:, j]) for j in range(H)])
    return values, len(terms)


# ---------------------------------------------------------------------------
# Test functions built from f

@dataclass(frozen=True)
class ComposedTransform:
    """phi = (h o f_L0)^check, the even geometric-side function attached to
    a polynomial h(x) = x h~(x) and the rescaled test function f_L0.

    phi vanishes identically outside [-q c0 L0^{-1/2}, q c0 L0^{-1/2}];
    inside it is computed by inverse Fourier quadrature.
    """

    tf: TestFunction
    poly: PolynomialH
    ymax: float = 500.0  # f(y) < 1e-15 beyond this point

    @property
    def support(self) -> float:
        return self.poly.q * self.tf.scale

    def spectral(self, r):
        """(h o f_L0)(r)."""
        return self.poly.h(self.tf.f_lambda0(r))

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        out = np.zeros(t.shape)
        inside = np.abs(t) < self.support
        if inside.any():
            s = self.tf.scale
            hf = lambda y: self.poly.h(self.tf.f(y))
            out[inside] = inverse_fourier_even(hf, np.abs(t[inside]) / s, self.ymax) / s
        return out if out.ndim else float(out)

    def unrestricted(self, t):
        """Direct inverse transform, without using the support law."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        s = self.tf.scale
        hf = lambda y: self.poly.h(self.tf.f(y))
        return inverse_fourier_even(hf, np.abs(t) / s, self.ymax) / s


# ---------------------------------------------------------------------------
# Volume term and Weyl law

def volume_term(psiHat: Callable, n: int, genus: int = 2) -> float:
    """Vol(X_n)/(2 pi) int_0^inf psiHat(r) r tanh(pi r) dr with Vol(X) = 2 pi (2g - 2)."""
    return (2 * genus - 2) * n * spectral_measure_integral(psiHat)


@dataclass(frozen=True)
class WeylPrediction:
    Lambda: float
    n: int
    genus: int
    count: float
    errorTerm: str = "O(n^(1-alpha) Lambda^(1/2+eps))"


def weyl_prediction(Lambda: float, n: int, genus: int = 2) -> WeylPrediction:
    """Main term (2g-2) n int_0^sqrt(Lambda - 1/4) r tanh(pi r) dr."""
    if Lambda < 0.25:
        raise ValueError("Lambda must be at least 1/4")
    R = math.sqrt(Lambda - 0.25)
    return WeylPrediction(Lambda, n, genus, (2 * genus - 2) * n * tanh_measure_integral(R))


def predicted_eigenvalue(j: int, n: int, genus: int = 2) -> float:
    """lambda_j >= 1/4 with int_0^sqrt(lambda_j - 1/4) r tanh(pi r) dr = j/(n(2g-2))."""
    if j < 0 or n < 1:
        raise ValueError("need j >= 0 and n >= 1")
    target = j / (n * (2 * genus - 2))
    if target == 0:
        return 0.25
    # r^2/2 - 1/24 <= F(r) <= r^2/2, so the root lies in [lo, hi] with room to spare
    lo = math.sqrt(2.0 * target)
    hi = math.sqrt(2.0 * target + 1.0 / 6.0)
    F = lambda R: tanh_measure_integral(R) - target
    R = optimize.brentq(F, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=200)
    # one Newton step polishes the last ulps; F'(R) = R tanh(pi R)
    resid = F(R)
    if R > 0:
        R2 = R - resid / (R * math.tanh(math.pi * R))
        if abs(F(R2)) < abs(resid):
            R = R2
    return 0.25 + R * R


# ---------------------------------------------------------------------------
# Pre-trace sum

def hyperbolic_distance(z: complex, w: complex) -> float:
    if z.imag <= 0 or w.imag <= 0:
        raise ValueError("points must lie in the upper half plane")
    d2 = (z.real - w.real) ** 2 + (z.imag - w.imag) ** 2
    return math.acosh(1.0 + d2 / (2.0 * z.imag * w.imag))


def mobius(m: np.ndarray, z: complex) -> complex:
    return (m[0, 0] * z + m[0, 1]) / (m[1, 0] * z + m[1, 1])


def systole(g: FuchsianGroup) -> float:
    return min(geodesic_length(m) for m in g.generators)


def octagon_circumradius() -> float:
    """Circumradius of the regular octagon with interior angles pi/4."""
    return math.acosh((1.0 + math.sqrt(2.0)) ** 2)


def _matrix_key(m: np.ndarray) -> tuple:
    # PSL(2,R): normalize the sign, then round
    flat = m.ravel()
    nz = flat[np.argmax(np.abs(flat) > 1e-9)]
    if nz < 0:
        flat = -flat
    return tuple(np.round(flat, 7))


@dataclass(frozen=True)
class BallElement:
    word: tuple[int, ...]
    displacement: float


def displacement_ball(g: FuchsianGroup, z: complex, T: float, node_cap: int = 2_000_000) -> list[BallElement]:
    """Non-identity group elements with d(z, gamma z) <= T.

    Breadth-first search over the side pairings of the octagon centred at i.
    A tile gamma F met by the segment [i, gamma' i] has d(i, gamma i) at most
    d(i, gamma' i) + circumradius, so pruning at that radius is exact.
    Distinct elements are recognized by their matrices; coinciding keys are
    confirmed with Dehn's word problem.
    """
    z0 = 1j
    radius = T + 2.0 * hyperbolic_distance(z, z0) + octagon_circumradius() + 1e-9
    steps = []
    for m, w in zip(g.sidePairings, g.sidePairingWords):
        steps.append((m, w.letters))
        inv = np.array([[m[1, 1], -m[0, 1]], [-m[1, 0], m[0, 0]]])
        steps.append((inv, tuple(-x for x in reversed(w.letters))))
    seen = {_matrix_key(np.eye(2)): [()]}
    frontier = [(np.eye(2), ())]
    found = []
    nodes = 0
    while frontier:
        nxt = []
        for m, w in frontier:
            for s, sw in steps:
                mm = m @ s
                if hyperbolic_distance(z0, mobius(mm, z0)) > radius:
                    continue
                ww = free_reduce(w + sw).letters
                key = _matrix_key(mm)
                bucket = seen.setdefault(key, [])
                if any(same_element(ww, other) for other in bucket):
                    continue
                bucket.append(ww)
                nodes += 1
                if nodes > node_cap:
                    raise BudgetExceeded(f"ball enumeration exceeded {node_cap} nodes")
                nxt.append((mm, ww))
                d = hyperbolic_distance(z, mobius(mm, z))
                if d <= T:
                    found.append(BallElement(ww, d))
        frontier = nxt
    found.sort(key=lambda e: (e.displacement, e.word))
    return found


@dataclass(frozen=True)
class PretraceResult:
    value: float
    ballCount: int
    elements: tuple[BallElement, ...]


def pretrace_local_sum(g: FuchsianGroup, hom: CoverHom, z: complex, i: int, phi,
                       T: float | None = None, node_cap: int = 2_000_000) -> PretraceResult:
    """sum over gamma != id with d(z, gamma z) <= T of rho_ii(gamma) k(d(z, gamma z)),
    where k is the Selberg kernel of phi and supp k is in [0, T]."""
    T = _support_of(phi, T)
    if T > 2.0 * systole(g) + 1e-12:
        raise ValueError("support radius limited to twice the systole")
    ball = displacement_ball(g, z, T, node_cap)
    vals = []
    for e in ball:
        if apply_word(hom, e.word)(i) == i:
            vals.append(float(selberg_kernel(phi, e.displacement, support=T)))
    vals.sort(key=abs)
    return PretraceResult(math.fsum(vals), len(ball), tuple(ball))


def lift_identity_check(hom: CoverHom, gammaWord, k: int) -> bool:
    return cycle_orbit_identity_check(apply_word(hom, gammaWord), k)


def statistic_csv_row(n: int, seed: int, value: float, terms: int, T: float, q: int, Lambda0: float) -> str:
    return f"{n},{seed},{value:.17g},{terms},{T:.17g},{q},{Lambda0:.17g}"


def prediction_csv_row(j: int, n: int, lam: float) -> str:
    return f"{j},{n},{lam:.17g}"
