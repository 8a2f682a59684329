"""Test function f, its rescalings, Chebyshev tools, smooth cutoffs and the
integral transforms used by the trace formula.

Fourier convention: g^(x) = int g(xi) e^{-i x xi} dxi and
g_check(xi) = (1/2pi) int g(x) e^{i x xi} dx.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np
from numpy.polynomial import Chebyshev, Polynomial
from scipy import integrate, special

QUAD_TOL = 1e-10
TRANSFORM_TOL = 1e-9
GRID_POINTS = 10_000


class CalibrationFailed(RuntimeError):
    pass


class NonConvergent(RuntimeError):
    pass


class DomainError(ValueError):
    pass


def _gauss_legendre(a: float, b: float, n: int):
    x, w = np.polynomial.legendre.leggauss(n)
    half = 0.5 * (b - a)
    return a + half * (x + 1.0), half * w


def _raw_bump(x):
    """exp(-1/(1 - (2x)^2)) on |x| < 1/2, zero outside."""
    x = np.asarray(x, dtype=float)
    y = 1.0 - 4.0 * x * x
    out = np.zeros_like(x)
    inside = y > 0
    out[inside] = np.exp(-1.0 / y[inside])
    return out


@dataclass(frozen=True)
class BumpProfile:
    """Even smooth bump phi0 on [-1/2, 1/2] with unit integral."""

    halfWidth: float = 0.5
    nodes: int = 1024

    @cached_property
    def normalization(self) -> float:
        xi, w = _gauss_legendre(0.0, self.halfWidth, self.nodes)
        return float(2.0 * np.sum(w * _raw_bump(xi)))

    @cached_property
    def _rule(self):
        xi, w = _gauss_legendre(0.0, self.halfWidth, self.nodes)
        return xi, w * self(xi)

    def __call__(self, x):
        return _raw_bump(x) / self.normalization

    def variance(self) -> float:
        xi, wphi = self._rule
        return float(2.0 * np.sum(wphi * xi * xi))

    def cosine_transform(self, x, deriv: int = 0):
        """phi0^(x) = int phi0(xi) cos(x xi) dxi (or its first derivative in x)."""
        x = np.asarray(x, dtype=float)
        xi, wphi = self._rule
        flat = x.ravel()
        out = np.empty_like(flat)
        small = np.abs(flat) <= 1500.0
        if small.any():
            arg = np.outer(flat[small], xi)
            if deriv == 0:
                out[small] = 2.0 * (np.cos(arg) @ wphi)
            else:
                out[small] = -2.0 * (np.sin(arg) @ (wphi * xi))
        for k in np.nonzero(~small)[0]:
            out[k] = self._oscillatory(flat[k], deriv)
        return out.reshape(x.shape)

    def _oscillatory(self, x: float, deriv: int) -> float:
        if deriv == 0:
            fn, weight = (lambda t: float(self(t))), "cos"
        else:
            fn, weight = (lambda t: -float(t * self(t))), "sin"
        val, _ = integrate.quad(fn, 0.0, self.halfWidth, weight=weight, wvar=abs(x), limit=400)
        if deriv and x < 0:
            val = -val
        return 2.0 * val

    def cosh_transform(self, t):
        """int phi0(xi) cosh(t xi) dxi, the continuation to the imaginary axis."""
        t = np.asarray(t, dtype=float)
        xi, wphi = self._rule
        return (2.0 * (np.cosh(np.outer(t.ravel(), xi)) @ wphi)).reshape(t.shape)

    def self_convolution(self, xi):
        """(phi0 * phi0)(xi), which equals f_check."""
        xi = np.atleast_1d(np.asarray(xi, dtype=float))
        out = np.zeros_like(xi)
        for k, s in enumerate(xi):
            lo, hi = max(-0.5, s - 0.5), min(0.5, s + 0.5)
            if hi <= lo:
                continue
            eta, w = _gauss_legendre(lo, hi, 256)
            out[k] = np.sum(w * self(eta) * self(s - eta))
        return out


@dataclass
class TestFunction:
    """f = (phi0^)^2 and its rescaling f_L0(x) = f(c0 L0^{-1/2} x).

    f_check = phi0 * phi0 is supported in [-1, 1] and f(0) = 1.
    """

    profile: BumpProfile = field(default_factory=BumpProfile)
    c0: float | None = None
    Lambda0: float = 0.25

    def __post_init__(self):
        if self.Lambda0 < 0.25:
            raise ValueError("Lambda0 must be at least 1/4")

    def f(self, x):
        """f on the real line; a complex argument must be purely imaginary
        with imaginary part in [0, 1/2]."""
        if np.iscomplexobj(x):
            x = np.asarray(x)
            if np.any(x.real != 0):
                raise DomainError("f is evaluated on the real or imaginary axis only")
            t = x.imag
            if np.any((t < 0) | (t > 0.5)):
                raise DomainError("imaginary argument must lie in [0, i/2]")
            return self.profile.cosh_transform(t) ** 2
        return self.profile.cosine_transform(x) ** 2

    def f_imag(self, t):
        """f(it) for real t >= 0 (no domain restriction)."""
        return self.profile.cosh_transform(t) ** 2

    def fprime(self, x):
        x = np.asarray(x, dtype=float)
        return 2.0 * self.profile.cosine_transform(x) * self.profile.cosine_transform(x, deriv=1)

    @cached_property
    def fAtIHalf(self) -> float:
        return float(self.f_imag(0.5))

    @property
    def scale(self) -> float:
        """c0 Lambda0^{-1/2}, the dilation in f_L0(x) = f(scale x)."""
        if self.c0 is None:
            raise CalibrationFailed("c0 not calibrated")
        return self.c0 / math.sqrt(self.Lambda0)

    def f_lambda0(self, x):
        return self.f(np.asarray(x, dtype=float) * self.scale)

    def f_lambda0_imag(self, t):
        return self.f_imag(np.asarray(t, dtype=float) * self.scale)

    def fcheck(self, xi):
        return self.profile.self_convolution(xi)

    def with_lambda0(self, Lambda0: float) -> "TestFunction":
        return TestFunction(self.profile, self.c0, Lambda0)


def eval_f(tf: TestFunction, x):
    return tf.f(x)


def _c0_conditions(f, fprime, c: float, grid_points: int = GRID_POINTS, xmax: float = 200.0) -> bool:
    """The curvature and monotonicity inequalities for a candidate c."""
    x = np.linspace(0.0, 4.0 * c, grid_points)
    fx, dfx = f(x), fprime(x)
    f0 = fx[0]
    f4c = fx[-1]
    if not f4c > 0:
        return False
    # f' <= -c x (both sides vanish at x = 0)
    if np.any((dfx > -c * x + 1e-15) & (x > 0)):
        return False
    if np.any(fx < f4c - 1e-15) or np.any(fx > f0 - c * x * x + 1e-15):
        return False
    tail = np.linspace(4.0 * c, xmax, grid_points)[1:]
    return bool(np.all(f(tail) <= f4c + 1e-15))


def calibrate_c0(tf: TestFunction, denominator: int = 1024) -> float:
    """Largest c = j/denominator in (0, 1/2) satisfying the curvature
    inequalities on a grid; stores it on ``tf``."""
    for j in range(denominator // 2 - 1, 0, -1):
        c = j / denominator
        if c < 1e-4:
            break
        # a coarse grid rejects most candidates cheaply
        if _c0_conditions(tf.f, tf.fprime, c, grid_points=64) and _c0_conditions(tf.f, tf.fprime, c):
            tf.c0 = c
            return c
    raise CalibrationFailed("no admissible c >= 1e-4")


def f_slope_constant(tf: TestFunction) -> float:
    """Smallest C with -C x <= f'(x) on [0, 4 c0] (grid estimate)."""
    x = np.linspace(0.0, 4.0 * tf.c0, GRID_POINTS)[1:]
    return float(np.max(-tf.fprime(x) / x))


def f_lambda0_inverse_fourier_support(tf: TestFunction, q: int = 1) -> tuple[float, float]:
    """Guaranteed support of (h o f_L0)^check for h of degree q."""
    r = q * tf.scale
    return (-r, r)


def inverse_fourier_even(H: Callable, xi, xmax: float, nodes: int = 24):
    """(1/2pi) int H(x) e^{i x xi} dx = (1/pi) int_0^xmax H(x) cos(x xi) dx
    for even H negligible beyond xmax, by composite Gauss-Legendre with
    panels shorter than a quarter period."""
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    top = float(np.max(np.abs(xi))) if xi.size else 0.0
    width = min(1.0, 0.5 * math.pi / top) if top > 0 else 1.0
    panels = int(math.ceil(xmax / width))
    edges = np.linspace(0.0, xmax, panels + 1)
    gx, gw = np.polynomial.legendre.leggauss(nodes)
    mid = 0.5 * (edges[:-1] + edges[1:])[:, None]
    half = 0.5 * (edges[1:] - edges[:-1])[:, None]
    xs = (mid + half * gx).ravel()
    ws = (half * gw).ravel()
    hx = np.asarray(H(xs), dtype=float) * ws
    return (np.cos(np.outer(xi, xs)) @ hx) / math.pi


# ---------------------------------------------------------------------------
# Chebyshev polynomials h~

@dataclass(frozen=True)
class PolynomialH:
    """h~(x) = sum_j a_j T_j(2x/M - 1) on [0, M]; h(x) = x h~(x) has degree q."""

    coeffs: tuple[float, ...]
    M: float

    @property
    def q(self) -> int:
        return len(self.coeffs)

    @cached_property
    def htilde(self) -> Chebyshev:
        return Chebyshev(np.array(self.coeffs, dtype=float), domain=[0.0, self.M])

    def __call__(self, x):
        return self.htilde(x)

    def h(self, x):
        x = np.asarray(x, dtype=float)
        return x * self.htilde(x)

    @cached_property
    def h_monomial(self) -> np.ndarray:
        """Coefficients b_0..b_q of h in powers of x (b_0 = 0)."""
        p = self.htilde.convert(kind=Polynomial, domain=[-1, 1], window=[-1, 1])
        return np.concatenate([[0.0], p.coef])

    def sup_norm(self, grid_points: int = GRID_POINTS) -> float:
        x = np.linspace(0.0, self.M, grid_points)
        return float(np.max(np.abs(self.htilde(x))))


def chebyshev_fit(fn: Callable, M: float, degree: int) -> PolynomialH:
    """Chebyshev coefficients of fn on [0, M] by collocation at Gauss nodes."""
    if M <= 0 or degree < 0:
        raise ValueError("need M > 0 and degree >= 0")
    cheb = Chebyshev.interpolate(lambda x: np.asarray(fn(x), dtype=float) * np.ones_like(x), degree, domain=[0.0, M])
    return PolynomialH(tuple(float(c) for c in cheb.coef), float(M))


def _sup_on_interval(p: Polynomial | Chebyshev, a: float, b: float, grid_points: int) -> float:
    x = np.linspace(a, b, grid_points)
    best = float(np.max(np.abs(p(x))))
    dp = p.deriv()
    if dp.degree() >= 1:
        for r in dp.roots():
            if abs(r.imag) < 1e-12 and a <= r.real <= b:
                best = max(best, float(abs(p(r.real))))
    return best


def ck_norm(p: PolynomialH, k: int, grid_points: int = GRID_POINTS) -> float:
    """sum_{j<=k} sup_{[0,M]} |d^j h~/dx^j|."""
    if k < 0:
        raise ValueError("k must be non-negative")
    total = 0.0
    cur = p.htilde
    for j in range(k + 1):
        if j:
            cur = cur.deriv()
        total += _sup_on_interval(cur, 0.0, p.M, grid_points)
    return total


def default_htilde(q: int, M: float) -> PolynomialH:
    """h~ = T_{q-1}(2x/M - 1), a unit-norm choice of degree q - 1."""
    coeffs = [0.0] * q
    coeffs[-1] = 1.0
    return PolynomialH(tuple(coeffs), M)


# ---------------------------------------------------------------------------
# Smooth cutoff

def _step(t):
    """exp-based smooth step: 0 for t <= 0, 1 for t >= 1."""
    t = np.asarray(t, dtype=float)
    out = np.where(t >= 1.0, 1.0, 0.0)
    mid = (t > 0.0) & (t < 1.0)
    tm = t[mid]
    a = np.exp(-1.0 / tm)
    b = np.exp(-1.0 / (1.0 - tm))
    out[mid] = a / (a + b)
    return out


@dataclass(frozen=True)
class SmoothCutoff:
    a: float
    b: float

    def __call__(self, x):
        return _step((np.asarray(x, dtype=float) - self.a) / (self.b - self.a))

    def derivative_constants(self, jmax: int = 4, degree: int = 400) -> list[float]:
        """Measured C_j with sup |psi^(j)| = C_j (b - a)^{-j}."""
        cheb = Chebyshev.interpolate(_step, degree, domain=[0.0, 1.0])
        x = np.linspace(0.0, 1.0, 100_001)
        out = []
        cur = cheb
        for j in range(jmax + 1):
            if j:
                cur = cur.deriv()
            out.append(float(np.max(np.abs(cur(x)))))
        return out


def smooth_cutoff(a: float, b: float) -> SmoothCutoff:
    if not a < b:
        raise ValueError("need a < b")
    return SmoothCutoff(float(a), float(b))


# ---------------------------------------------------------------------------
# Spectral measure r tanh(pi r) dr

def tanh_deficit(r):
    """r (1 - tanh(pi r)), computed without cancellation."""
    r = np.asarray(r, dtype=float)
    return 2.0 * r * special.expit(-2.0 * math.pi * r)


def tanh_measure_antiderivative(R):
    """Closed form of int_0^R r tanh(pi r) dr.

    R^2/2 + (R/pi) log(1 + e^{-2 pi R}) - Li2(-e^{-2 pi R})/(2 pi^2) - 1/24,
    with Li2(-q) = spence(1 + q).
    """
    R = np.asarray(R, dtype=float)
    q = np.exp(-2.0 * math.pi * R)
    li2 = special.spence(1.0 + q)
    return 0.5 * R * R + (R / math.pi) * np.log1p(q) - li2 / (2.0 * math.pi ** 2) - 1.0 / 24.0


_DEFICIT_CUT = 12.0  # r (1 - tanh pi r) < 1e-30 beyond this point


def tanh_measure_integral(R: float) -> float:
    """int_0^R r tanh(pi r) dr as R^2/2 minus a quadrature of the deficit."""
    if R <= 0:
        return 0.0
    top = min(R, _DEFICIT_CUT)
    deficit, _ = integrate.quad(lambda r: float(tanh_deficit(r)), 0.0, top, epsabs=1e-15, epsrel=1e-15, limit=200)
    return 0.5 * R * R - deficit


def spectral_measure_integral(psi: Callable, tol: float = QUAD_TOL, tail_tol: float = 1e-13,
                              max_windows: int = 60) -> float:
    """int_0^inf psi(r) r tanh(pi r) dr over windows [0,1], [1,2], [2,4], ...
    until two consecutive windows contribute less than ``tail_tol``."""
    f = lambda r: float(psi(r)) * r * math.tanh(math.pi * r)
    total, _ = integrate.quad(f, 0.0, 1.0, epsabs=tol / 10, epsrel=1e-13, limit=200)
    lo, hi = 1.0, 2.0
    quiet = 0
    for _ in range(max_windows):
        pieces = max(1, int(hi - lo))
        part = 0.0
        edges = np.linspace(lo, hi, min(pieces, 64) + 1)
        for a, b in zip(edges[:-1], edges[1:]):
            v, _ = integrate.quad(f, a, b, epsabs=tol / 100, epsrel=1e-13, limit=200)
            part += v
        total += part
        quiet = quiet + 1 if abs(part) < tail_tol else 0
        if quiet >= 2:
            return total
        lo, hi = hi, 2.0 * hi
    raise NonConvergent("spectral integral tail did not decay")


# ---------------------------------------------------------------------------
# Selberg transform

@dataclass(frozen=True)
class EvenBump:
    """Even smooth function sum of bumps exp(-1/(1 - ((x -+ center)/width)^2)).

    With center = 0 this is a single bump on [-width, width]; otherwise two
    mirrored bumps, which lets the support straddle a chosen length.
    """

    width: float
    center: float = 0.0
    height: float = 1.0

    @property
    def support(self) -> float:
        return self.center + self.width

    def _parts(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if self.center == 0.0:
            return [x / self.width]
        return [(x - self.center) / self.width, (x + self.center) / self.width]

    def __call__(self, x):
        val = self.height * sum(_raw_bump(0.5 * u) for u in self._parts(x))
        return val.reshape(np.shape(x)) if np.ndim(x) else float(val[0])

    def derivative(self, x):
        total = 0.0
        for u in self._parts(x):
            y = 1.0 - u * u
            inside = y > 0
            d = np.zeros_like(u)
            ui, yi = u[inside], y[inside]
            d[inside] = np.exp(-1.0 / yi) * (-2.0 * ui / (yi * yi)) / self.width
            total = total + d
        val = self.height * total
        return val.reshape(np.shape(x)) if np.ndim(x) else float(val[0])


def numeric_derivative(phi: Callable, step: float = 1e-5) -> Callable:
    return lambda s: (phi(s + step) - phi(s - step)) / (2.0 * step)


def _panel_rule(panels: int, nodes: int = 16):
    """Composite Gauss-Legendre nodes and weights on [0, 1]."""
    gx, gw = np.polynomial.legendre.leggauss(nodes)
    edges = np.linspace(0.0, 1.0, panels + 1)
    mid = 0.5 * (edges[:-1] + edges[1:])[:, None]
    half = 0.5 * (edges[1:] - edges[:-1])[:, None]
    return (mid + half * gx).ravel(), (half * gw).ravel()


def _cosh_weight(base, v):
    """2 v / sqrt(cosh(base + v^2) - cosh(base)), written without cancellation."""
    return 2.0 * v / np.sqrt(2.0 * np.sinh(base + 0.5 * v * v) * np.sinh(0.5 * v * v))


def selberg_kernel(phi: Callable, t, support: float | None = None, dphi: Callable | None = None,
                   tol: float = 1e-12, panels: int | None = None):
    """k(t) = -(1/(sqrt(2) pi)) int_t^inf phi'(s) / sqrt(cosh s - cosh t) ds.

    With s = t + u^2 the integrand becomes smooth:
    2u phi'(t + u^2) / sqrt(2 sinh(t + u^2/2) sinh(u^2/2)).
    Adaptive quadrature by default; ``panels`` switches to a vectorized
    composite Gauss-Legendre rule with that many panels.
    """
    T = support if support is not None else getattr(phi, "support")
    if dphi is None:
        dphi = getattr(phi, "derivative", None) or numeric_derivative(phi)
    ts = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(ts < 0):
        raise DomainError("t must be non-negative")
    out = np.zeros_like(ts)
    if panels is not None:
        live = ts < T
        if live.any():
            x, w = _panel_rule(panels)
            tl = ts[live][:, None]
            umax = np.sqrt(T - tl)
            u = umax * x
            vals = _cosh_weight(tl, u) * np.asarray(dphi(tl + u * u), dtype=float)
            out[live] = -(vals @ w) * umax[:, 0] / (math.sqrt(2.0) * math.pi)
        return out if np.ndim(t) else float(out[0])
    for i, tv in enumerate(ts):
        if tv >= T:
            continue
        umax = math.sqrt(T - tv)

        def integrand(u, tv=tv):
            if u == 0.0:
                return 0.0
            return float(_cosh_weight(tv, u)) * float(dphi(np.array([tv + u * u]))[0])

        val, _ = integrate.quad(integrand, 0.0, umax, epsabs=tol, epsrel=tol, limit=400)
        out[i] = -val / (math.sqrt(2.0) * math.pi)
    return out if np.ndim(t) else float(out[0])


def abel_inverse(k: Callable, u, support: float, tol: float = 1e-10, panels: int | None = None):
    """phi(u) = sqrt(2) int_u^inf k(t) sinh t / sqrt(cosh t - cosh u) dt,
    the inverse of ``selberg_kernel``.

    With ``panels`` the rule is composite Gauss-Legendre and ``k`` is called
    once on an array of abscissae.
    """
    us = np.atleast_1d(np.asarray(u, dtype=float))
    out = np.zeros_like(us)
    if panels is not None:
        live = us < support
        if live.any():
            x, w = _panel_rule(panels)
            ul = us[live][:, None]
            vmax = np.sqrt(support - ul)
            v = vmax * x
            t = ul + v * v
            kt = np.asarray(k(t.ravel()), dtype=float).reshape(t.shape)
            vals = _cosh_weight(ul, v) * kt * np.sinh(t)
            out[live] = math.sqrt(2.0) * (vals @ w) * vmax[:, 0]
        return out if np.ndim(u) else float(out[0])
    for i, uv in enumerate(us):
        if uv >= support:
            continue
        vmax = math.sqrt(support - uv)

        def integrand(v, uv=uv):
            if v == 0.0:
                return 0.0
            t = uv + v * v
            return float(_cosh_weight(uv, v)) * float(k(t)) * math.sinh(t)

        val, _ = integrate.quad(integrand, 0.0, vmax, epsabs=tol, epsrel=tol, limit=200)
        out[i] = math.sqrt(2.0) * val
    return out if np.ndim(u) else float(out[0])


def kernel_bound_constant(phi, grid_points: int = 200) -> float:
    """C in sup|k| = C sup|phi'| (support length)^{1/2}, measured on a grid."""
    T = phi.support
    ts = np.linspace(0.0, T, grid_points, endpoint=False)
    ks = np.abs(selberg_kernel(phi, ts))
    s = np.linspace(0.0, T, 20_001)
    dsup = float(np.max(np.abs(phi.derivative(s))))
    return float(np.max(ks) / (dsup * math.sqrt(T)))
