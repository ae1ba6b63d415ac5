"""Periodic forcing fields g(x, y) on the unit torus.

Three concrete representations are supported:

* smooth fields, either as a trigonometric polynomial
  ``c0 + sum_j a_j sin(2 pi (k_j x + l_j y) + phi_j)`` (exact derivatives,
  exact mollification, usable from compiled kernels) or as an arbitrary
  vectorised sampler;
* x-only piecewise constant fields given by breakpoints and values, the
  concrete stand-in for bounded measurable forcings;
* mollified fields, the periodic convolution of a base field with a smooth
  compactly supported bump of total support width ``delta``.

Directional averages along rational lines (``slope_average`` and
``normal_average``) are computed by periodic quadrature; the caller declares
whether a slope is rational (integer pair) or irrational (tagged real),
since floating point cannot decide it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from fractions import Fraction
from typing import Callable, Optional

import numpy as np

from .errors import QuadratureError

SMOOTH = "SmoothPeriodic"
XONLY = "XOnlyPiecewiseConstant"
MOLLIFIED = "Mollified"

TWO_PI = 2.0 * math.pi

# numba kernel codes, see ForcingField.compiled()
CODE_TRIG = 0
CODE_PWX = 1
CODE_MOLPWX = 2


# ---------------------------------------------------------------------------
# mollifier bump


def _raw_bump(w):
    """Unnormalised C-infinity bump supported on |w| < 1/2."""
    w = np.asarray(w, dtype=float)
    out = np.zeros_like(w)
    inside = np.abs(w) < 0.5
    q = 1.0 - 4.0 * w[inside] ** 2
    out[inside] = np.exp(-1.0 / q)
    return out


def _build_bump_table(n_cells=2048, n_gauss=16):
    # cumulative integral of the raw bump with Gauss-Legendre on each cell
    w = np.linspace(-0.5, 0.5, n_cells + 1)
    xg, wg = np.polynomial.legendre.leggauss(n_gauss)
    h = w[1] - w[0]
    mids = 0.5 * (w[:-1] + w[1:])
    nodes = mids[:, None] + 0.5 * h * xg[None, :]
    cell = 0.5 * h * (_raw_bump(nodes) * wg[None, :]).sum(axis=1)
    cum = np.concatenate([[0.0], np.cumsum(cell)])
    mass = cum[-1]
    return w, cum / mass, _raw_bump(w) / mass, mass


_TABLE_W, _TABLE_CDF, _TABLE_PDF, _BUMP_MASS = _build_bump_table()


def bump(z, delta):
    """Unit-mass mollifier of support width ``delta`` (|z| < delta/2)."""
    return _raw_bump(np.asarray(z, dtype=float) / delta) / (_BUMP_MASS * delta)


def bump_cdf(z, delta):
    """Cumulative mass of :func:`bump` on (-inf, z]; cubic Hermite on a table."""
    w = np.asarray(z, dtype=float) / delta
    out = np.where(w >= 0.5, 1.0, 0.0)
    inside = np.abs(w) < 0.5
    if np.any(inside):
        out[inside] = _hermite_cdf(w[inside])
    return out


def _hermite_cdf(w):
    n = _TABLE_W.size - 1
    h = 1.0 / n
    pos = (w + 0.5) / h
    j = np.clip(np.floor(pos).astype(np.int64), 0, n - 1)
    t = pos - j
    t2 = t * t
    t3 = t2 * t
    h00 = 2 * t3 - 3 * t2 + 1
    h10 = t3 - 2 * t2 + t
    h01 = -2 * t3 + 3 * t2
    h11 = t3 - t2
    return (h00 * _TABLE_CDF[j] + h10 * h * _TABLE_PDF[j]
            + h01 * _TABLE_CDF[j + 1] + h11 * h * _TABLE_PDF[j + 1])


def bump_cosine_moment(k, delta, n=512):
    """Fourier multiplier of the bump, int rho(z) cos(2 pi k z) dz.

    Composite trapezoid over the support; the integrand vanishes to all
    orders at the ends so the rule converges faster than any power of 1/n.
    """
    z = np.linspace(-0.5 * delta, 0.5 * delta, n + 1)
    rho = bump(z, delta)
    dz = delta / n
    return float(np.sum(rho * np.cos(TWO_PI * k * z)) * dz)


# ---------------------------------------------------------------------------
# slopes and directions


@dataclass(frozen=True)
class Slope:
    """A line slope, declared rational (``num/den``) or irrational."""

    value: float
    num: Optional[int] = None
    den: Optional[int] = None

    @classmethod
    def rational(cls, num, den=1):
        frac = Fraction(int(num), int(den))
        return cls(float(frac), frac.numerator, frac.denominator)

    @classmethod
    def irrational(cls, value):
        return cls(float(value))

    @property
    def is_rational(self):
        return self.num is not None

    def label(self):
        if self.is_rational:
            return f"{self.num}/{self.den}"
        return f"irr:{self.value!r}"


@dataclass(frozen=True)
class Direction:
    """A nonzero vector p, either integer (rational ratio) or tagged irrational."""

    p: tuple
    integer: bool

    @classmethod
    def lattice(cls, p1, p2):
        p1, p2 = int(p1), int(p2)
        if p1 == 0 and p2 == 0:
            raise ValueError("direction must be nonzero")
        d = math.gcd(p1, p2)
        return cls((p1 // d, p2 // d), True)

    @classmethod
    def irrational(cls, p1, p2):
        if p1 == 0 and p2 == 0:
            raise ValueError("direction must be nonzero")
        return cls((float(p1), float(p2)), False)

    @property
    def norm(self):
        return math.hypot(*self.p)

    @property
    def unit(self):
        n = self.norm
        return (self.p[0] / n, self.p[1] / n)


# ---------------------------------------------------------------------------
# forcing fields


@dataclass(frozen=True, eq=False)
class ForcingField:
    """Immutable 1-periodic forcing.  Build with the module-level constructors."""

    kind: str
    impl: str
    name: str = ""
    c0: float = 0.0
    terms: Optional[np.ndarray] = None  # rows (amp, kx, ky, phase)
    sampler: Optional[Callable] = None
    gradient_fn: Optional[Callable] = None
    hessian_fn: Optional[Callable] = None
    breakpoints: Optional[np.ndarray] = None
    values: Optional[np.ndarray] = None
    base: Optional["ForcingField"] = None
    delta: Optional[float] = None
    x_only: bool = False
    quad_points: int = 32
    _cache: dict = dc_field(default_factory=dict, repr=False, compare=False)

    def __call__(self, x, y):
        return evaluate(self, x, y)

    def compiled(self):
        """Flat-array encoding for the numba kernels, or None for samplers.

        Returns ``(code, c0, terms, breakpoints, values, delta, table_cdf,
        table_pdf)``; unused slots hold empty arrays.
        """
        empty = np.zeros(0)
        if self.impl == "trig":
            return (CODE_TRIG, float(self.c0), np.ascontiguousarray(self.terms),
                    empty, empty, 0.0, empty, empty)
        if self.impl == "pwx":
            return (CODE_PWX, 0.0, np.zeros((0, 4)), self.breakpoints, self.values,
                    0.0, empty, empty)
        if self.impl == "molpwx":
            return (CODE_MOLPWX, 0.0, np.zeros((0, 4)), self.breakpoints, self.values,
                    float(self.delta), _TABLE_CDF, _TABLE_PDF)
        return None

    def describe(self):
        out = {"kind": self.kind, "impl": self.impl, "name": self.name}
        if self.delta is not None:
            out["delta"] = self.delta
        if self.breakpoints is not None:
            out["breakpoints"] = [float(b) for b in self.breakpoints]
            out["values"] = [float(v) for v in self.values]
        return out


def trig(c0=0.0, terms=(), name="trig"):
    """Trigonometric polynomial ``c0 + sum a sin(2 pi (k x + l y) + phi)``.

    ``terms`` is a sequence of ``(a, k, l, phi)`` with integer k, l.
    """
    arr = np.array(terms, dtype=float).reshape(-1, 4)
    if arr.size and not np.all(arr[:, 1:3] == np.round(arr[:, 1:3])):
        raise ValueError("trigonometric wave numbers must be integers")
    x_only = bool(np.all(arr[:, 2] == 0)) if arr.size else True
    return ForcingField(SMOOTH, "trig", name=name, c0=float(c0), terms=arr,
                        x_only=x_only)


def constant(c):
    return trig(c, (), name=f"constant({c!r})")


def sin_x(amp=1.0, offset=0.0):
    """offset + amp sin(2 pi x)"""
    return trig(offset, [(amp, 1, 0, 0.0)], name="sin-x")


def sin_y(amp=1.0, offset=0.0):
    """offset + amp sin(2 pi y)"""
    return trig(offset, [(amp, 0, 1, 0.0)], name="sin-y")


def offset_sin(offset, amp=1.0, axis="y"):
    if axis == "x":
        return sin_x(amp, offset)
    if axis == "y":
        return sin_y(amp, offset)
    raise ValueError(f"axis must be 'x' or 'y', got {axis!r}")


def product(amp=1.0):
    """amp sin(2 pi x) cos(2 pi y), stored as two plane waves."""
    half = 0.5 * amp
    return trig(0.0, [(half, 1, 1, 0.0), (half, 1, -1, 0.0)], name="product")


def from_function(fn, gradient=None, hessian=None, x_only=False, name="sampler"):
    """Wrap a vectorised 1-periodic ``fn(x, y)``.

    ``gradient`` returns ``(gx, gy)``; ``hessian`` returns ``(gxx, gxy, gyy)``.
    """
    return ForcingField(SMOOTH, "sampler", name=name, sampler=fn, gradient_fn=gradient,
                        hessian_fn=hessian, x_only=x_only)


def piecewise_x(breakpoints, values, name="piecewise-x"):
    """x-only step field: value ``values[i]`` on ``[b_i, b_{i+1})``.

    ``breakpoints`` must run from 0 to 1 strictly increasing, one longer
    than ``values``.
    """
    b = np.asarray(breakpoints, dtype=float)
    v = np.asarray(values, dtype=float)
    if b.ndim != 1 or v.ndim != 1 or b.size != v.size + 1 or v.size < 1:
        raise ValueError("need len(breakpoints) == len(values) + 1")
    if b[0] != 0.0 or b[-1] != 1.0 or np.any(np.diff(b) <= 0):
        raise ValueError("breakpoints must increase strictly from 0 to 1")
    return ForcingField(XONLY, "pwx", name=name, breakpoints=b, values=v, x_only=True)


def square_wave(low, high, name="square-wave"):
    return piecewise_x([0.0, 0.5, 1.0], [low, high], name=name)


# ---------------------------------------------------------------------------
# evaluation


def _wrap(a):
    return np.mod(np.asarray(a, dtype=float), 1.0)


def _trig_eval(c0, terms, x, y):
    out = np.full(np.broadcast(x, y).shape, c0, dtype=float)
    for a, k, l, ph in terms:
        out += a * np.sin(TWO_PI * (k * x + l * y) + ph)
    return out


def _pwx_eval(b, v, x):
    idx = np.searchsorted(b, x, side="right") - 1
    return v[np.clip(idx, 0, v.size - 1)]


def _molpwx_eval(b, v, delta, x, kernel=bump_cdf):
    out = np.zeros_like(x)
    for shift in (-1.0, 0.0, 1.0):
        for i in range(v.size):
            lo = b[i] + shift
            hi = b[i + 1] + shift
            out += v[i] * (kernel(x - lo, delta) - kernel(x - hi, delta))
    return out


def evaluate(field, x, y):
    """g(x mod 1, y mod 1), vectorised over broadcastable ``x``, ``y``."""
    scalar = np.isscalar(x) and np.isscalar(y)
    xw, yw = np.broadcast_arrays(_wrap(x), _wrap(y))
    impl = field.impl
    if impl == "trig":
        out = _trig_eval(field.c0, field.terms, xw, yw)
    elif impl == "pwx":
        out = _pwx_eval(field.breakpoints, field.values, xw)
    elif impl == "molpwx":
        out = _molpwx_eval(field.breakpoints, field.values, field.delta, xw.astype(float))
    elif impl == "sampler":
        out = np.asarray(field.sampler(xw, yw), dtype=float) * np.ones(xw.shape)
    elif impl == "molsampler":
        out = _molsampler_eval(field, xw, yw)
    else:  # pragma: no cover
        raise ValueError(f"unknown implementation {impl!r}")
    return float(out) if scalar else out


def _quad_nodes(delta, n):
    z = -0.5 * delta + (np.arange(n) + 0.5) * (delta / n)
    w = bump(z, delta)
    return z, w / w.sum()


def _molsampler_eval(field, x, y):
    base = field.base
    z, w = _quad_nodes(field.delta, field.quad_points)
    out = np.zeros(x.shape)
    if field.x_only:
        for zi, wi in zip(z, w):
            out += wi * evaluate(base, x - zi, y)
        return out
    for zi, wi in zip(z, w):
        for zj, wj in zip(z, w):
            out += wi * wj * evaluate(base, x - zi, y - zj)
    return out


# ---------------------------------------------------------------------------
# derivatives


def gradient(field, x, y, h=1e-5):
    """(g_x, g_y); analytic where available, central differences otherwise."""
    xw, yw = np.broadcast_arrays(_wrap(x), _wrap(y))
    if field.impl == "trig":
        gx = np.zeros(xw.shape)
        gy = np.zeros(xw.shape)
        for a, k, l, ph in field.terms:
            c = a * TWO_PI * np.cos(TWO_PI * (k * xw + l * yw) + ph)
            gx += k * c
            gy += l * c
        return gx, gy
    if field.impl == "sampler" and field.gradient_fn is not None:
        gx, gy = field.gradient_fn(xw, yw)
        return np.broadcast_to(gx, xw.shape) * 1.0, np.broadcast_to(gy, xw.shape) * 1.0
    if field.impl == "pwx":
        raise ValueError("piecewise constant forcing has no classical gradient")
    gx = (evaluate(field, xw + h, yw) - evaluate(field, xw - h, yw)) / (2 * h)
    gy = (evaluate(field, xw, yw + h) - evaluate(field, xw, yw - h)) / (2 * h)
    return gx, gy


def hessian(field, x, y, h=1e-4):
    """(g_xx, g_xy, g_yy)."""
    xw, yw = np.broadcast_arrays(_wrap(x), _wrap(y))
    if field.impl == "trig":
        gxx = np.zeros(xw.shape)
        gxy = np.zeros(xw.shape)
        gyy = np.zeros(xw.shape)
        for a, k, l, ph in field.terms:
            s = -a * TWO_PI ** 2 * np.sin(TWO_PI * (k * xw + l * yw) + ph)
            gxx += k * k * s
            gxy += k * l * s
            gyy += l * l * s
        return gxx, gxy, gyy
    if field.impl == "sampler" and field.hessian_fn is not None:
        return tuple(np.broadcast_to(c, xw.shape) * 1.0 for c in field.hessian_fn(xw, yw))
    if field.impl == "pwx":
        raise ValueError("piecewise constant forcing has no classical Hessian")
    f = lambda a, b: evaluate(field, a, b)
    gxx = (f(xw + h, yw) - 2 * f(xw, yw) + f(xw - h, yw)) / h ** 2
    gyy = (f(xw, yw + h) - 2 * f(xw, yw) + f(xw, yw - h)) / h ** 2
    gxy = (f(xw + h, yw + h) - f(xw + h, yw - h) - f(xw - h, yw + h) + f(xw - h, yw - h)) / (4 * h ** 2)
    return gxx, gxy, gyy


# ---------------------------------------------------------------------------
# norms and means


def _grid_max(fn, grid, chunk=256):
    xs = (np.arange(grid) + 0.0) / grid
    best = 0.0
    for start in range(0, grid, chunk):
        yy = xs[start:start + chunk]
        X, Y = np.meshgrid(xs, yy, indexing="ij")
        best = max(best, float(np.max(fn(X, Y))))
    return best


def sup_norm(field, grid=4096):
    """max |g|.

    Exact for piecewise constant fields.  Smooth fields are sampled on a
    ``grid x grid`` lattice (x-only fields on ``64 * grid`` points in x), so
    the result is an approximate lower bound that converges like grid**-2.
    """
    if field.impl == "pwx":
        return float(np.max(np.abs(field.values)))
    if field.impl == "trig" and field.terms.size == 0:
        return abs(field.c0)
    key = ("sup", grid)
    if key not in field._cache:
        if field.x_only:
            xs = np.arange(64 * grid) / (64 * grid)
            val = float(np.max(np.abs(evaluate(field, xs, 0.0))))
        else:
            val = _grid_max(lambda X, Y: np.abs(evaluate(field, X, Y)), grid)
        field._cache[key] = val
    return field._cache[key]


def derivative_sup_norms(field, grid=512):
    """(max |grad g|, max ||D^2 g||_2) sampled on a grid."""
    key = ("dsup", grid)
    if key not in field._cache:
        def gnorm(X, Y):
            gx, gy = gradient(field, X, Y)
            return np.hypot(gx, gy)

        def hnorm(X, Y):
            a, b, c = hessian(field, X, Y)
            # spectral norm of the symmetric 2x2 matrix [[a, b], [b, c]]
            return 0.5 * np.abs(a + c) + np.sqrt(0.25 * (a - c) ** 2 + b ** 2)

        field._cache[key] = (_grid_max(gnorm, grid), _grid_max(hnorm, grid))
    return field._cache[key]


def torus_mean(field, tol=1e-13, max_level=12):
    """int over [0,1]^2 of g."""
    if field.impl == "trig":
        mean = field.c0
        for a, k, l, ph in field.terms:
            if k == 0 and l == 0:
                mean += a * math.sin(ph)
        return float(mean)
    if field.impl in ("pwx", "molpwx"):
        return float(np.dot(field.values, np.diff(field.breakpoints)))
    if field.impl == "molsampler":
        return torus_mean(field.base, tol, max_level)
    prev = None
    n = 16
    for _ in range(max_level):
        xs = np.arange(n) / n
        if field.x_only:
            val = float(np.mean(evaluate(field, xs, 0.0)))
        else:
            X, Y = np.meshgrid(xs, xs, indexing="ij")
            val = float(np.mean(evaluate(field, X, Y)))
        if prev is not None and abs(val - prev) <= tol * max(1.0, abs(val)):
            return val
        prev = val
        n *= 2
    raise QuadratureError("torus mean did not converge")


# ---------------------------------------------------------------------------
# mollification


def mollify(field, delta, quad_points=32):
    """Periodic convolution with the unit-mass bump of support width ``delta``.

    Trigonometric fields are damped term by term by the bump's Fourier
    multiplier (exact convolution).  Step fields are convolved in closed form
    through the bump's cumulative mass, which keeps the result smooth and the
    mean exact.  Other fields use a midpoint rule with ``quad_points`` nodes
    across the support in each direction.
    """
    if not delta > 0:
        raise ValueError("mollification width must be positive")
    if delta > 1.0:
        raise ValueError("mollification width must not exceed the period")
    name = f"mollified({field.name}, {delta!r})"
    if field.impl == "trig":
        rows = []
        cache = {}
        for a, k, l, ph in field.terms:
            for wn in (k, l):
                if wn not in cache:
                    cache[wn] = 1.0 if wn == 0 else bump_cosine_moment(abs(wn), delta)
            rows.append((a * cache[k] * cache[l], k, l, ph))
        arr = np.array(rows, dtype=float).reshape(-1, 4)
        return ForcingField(MOLLIFIED, "trig", name=name, c0=field.c0, terms=arr,
                            base=field, delta=float(delta), x_only=field.x_only)
    if field.impl == "pwx":
        return ForcingField(MOLLIFIED, "molpwx", name=name, breakpoints=field.breakpoints,
                            values=field.values, base=field, delta=float(delta), x_only=True)
    if quad_points < 8:
        raise ValueError("need at least 8 quadrature points per mollifier width")
    return ForcingField(MOLLIFIED, "molsampler", name=name, base=field, delta=float(delta),
                        x_only=field.x_only, quad_points=int(quad_points))


# ---------------------------------------------------------------------------
# directional averages


def _periodic_average(fn, tol, n0=32, max_n=1 << 20):
    """Mean of a 1-periodic function on [0, 1] by trapezoid doubling."""
    n = n0
    prev = float(np.mean(fn(np.arange(n) / n)))
    while n < max_n:
        n *= 2
        # reuse old nodes: new mean is the average of old and midpoint means
        mid = float(np.mean(fn((np.arange(n // 2) + 0.5) / (n // 2))))
        val = 0.5 * (prev + mid)
        if abs(val - prev) <= tol * max(1.0, abs(val)):
            return val
        prev = val
    raise QuadratureError(f"line average did not converge to {tol:g} with {max_n} nodes")


def slope_average(field, slope, s, tol=1e-12):
    """Average of g along the line y = alpha x + s over one full period.

    For ``alpha = q/r`` the line closes after ``r`` periods in x; for an
    irrational slope the line is dense and the torus mean is returned.
    """
    if not isinstance(slope, Slope):
        raise TypeError("slope must be a Slope (rational pair or irrational tag)")
    scalar = np.isscalar(s)
    svals = np.atleast_1d(np.asarray(s, dtype=float))
    out = np.empty(svals.shape)
    # irrational lines are dense; an x-only field integrated over whole
    # periods in x gives its mean
    if not slope.is_rational or (field.x_only and field.impl in ("pwx", "molpwx")):
        out[...] = torus_mean(field)
        return float(out[0]) if scalar else out
    q, r = slope.num, slope.den
    for i, sv in enumerate(svals.flat):
        fn = lambda th, sv=sv: evaluate(field, r * th, q * th + sv)
        out.flat[i] = _periodic_average(fn, tol)
    return float(out[0]) if scalar else out


def normal_average(field, direction, s, tol=1e-12):
    """Average of g over the line {s p/|p| + z : z . p = 0}.

    For an integer direction (p1, p2) in lowest terms the line closes after
    travelling the lattice vector (-p2, p1); irrational directions return the
    torus mean.
    """
    if not isinstance(direction, Direction):
        raise TypeError("direction must be a Direction")
    scalar = np.isscalar(s)
    svals = np.atleast_1d(np.asarray(s, dtype=float))
    out = np.empty(svals.shape)
    if not direction.integer:
        out[...] = torus_mean(field)
        return float(out[0]) if scalar else out
    p1, p2 = direction.p
    u1, u2 = direction.unit
    if field.impl in ("pwx", "molpwx") and p2 != 0:
        out[...] = torus_mean(field)
        return float(out[0]) if scalar else out
    for i, sv in enumerate(svals.flat):
        x0, y0 = sv * u1, sv * u2
        if field.impl == "pwx":
            # p2 == 0: the line is vertical, x fixed
            out.flat[i] = float(evaluate(field, x0, 0.0))
            continue
        fn = lambda th, x0=x0, y0=y0: evaluate(field, x0 - p2 * th, y0 + p1 * th)
        out.flat[i] = _periodic_average(fn, tol)
    return float(out[0]) if scalar else out


def normal_period(direction):
    """Period in s of ``normal_average`` for an integer direction."""
    return 1.0 / direction.norm

