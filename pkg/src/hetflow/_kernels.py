"""numba kernels for the graph solver.

Forcings reach these through ``ForcingField.compiled()`` or, for x-only
fields, as values sampled once at the nodes (``CODE_NODAL``).  Sampler
fields that depend on u fall back to the numpy path in
:mod:`hetflow.graph_flow`.
"""

import math

import numpy as np
from numba import njit

TWO_PI = 2.0 * math.pi
# forcing already sampled at the nodes (x-only fields): vals[i] = g(x_i)
CODE_NODAL = 3


@njit(cache=True, nogil=True)
def _hermite_cdf(w, tcdf, tpdf):
    if w <= -0.5:
        return 0.0
    if w >= 0.5:
        return 1.0
    n = tcdf.size - 1
    h = 1.0 / n
    pos = (w + 0.5) / h
    j = int(math.floor(pos))
    if j > n - 1:
        j = n - 1
    t = pos - j
    t2 = t * t
    t3 = t2 * t
    return ((2 * t3 - 3 * t2 + 1) * tcdf[j] + (t3 - 2 * t2 + t) * h * tpdf[j]
            + (-2 * t3 + 3 * t2) * tcdf[j + 1] + (t3 - t2) * h * tpdf[j + 1])


@njit(cache=True, nogil=True)
def g_point(code, c0, terms, bps, vals, delta, tcdf, tpdf, x, y):
    x = x - math.floor(x)
    y = y - math.floor(y)
    if code == 0:
        out = c0
        for j in range(terms.shape[0]):
            out += terms[j, 0] * math.sin(TWO_PI * (terms[j, 1] * x + terms[j, 2] * y) + terms[j, 3])
        return out
    m = vals.size
    if code == 1:
        for i in range(m):
            if x < bps[i + 1]:
                return vals[i]
        return vals[m - 1]
    out = 0.0
    for shift in (-1.0, 0.0, 1.0):
        for i in range(m):
            lo = (x - bps[i] - shift) / delta
            hi = (x - bps[i + 1] - shift) / delta
            out += vals[i] * (_hermite_cdf(lo, tcdf, tpdf) - _hermite_cdf(hi, tcdf, tpdf))
    return out


@njit(cache=True, nogil=True)
def graph_rhs(u, wind, dx, xs, sx, sy, code, c0, terms, bps, vals, delta, tcdf, tpdf, out):
    """Collocated u_xx/(1+u_x^2) + g(x sx, u sy) sqrt(1+u_x^2); returns max|u_x|."""
    n = u.size
    gmax = 0.0
    for i in range(n):
        if i == 0:
            ul = u[n - 1] - wind
        else:
            ul = u[i - 1]
        if i == n - 1:
            ur = u[0] + wind
        else:
            ur = u[i + 1]
        ux = (ur - ul) / (2.0 * dx)
        uxx = (ur - 2.0 * u[i] + ul) / (dx * dx)
        q = 1.0 + ux * ux
        if code == CODE_NODAL:
            g = vals[i]
        else:
            g = g_point(code, c0, terms, bps, vals, delta, tcdf, tpdf, xs[i] * sx, u[i] * sy)
        out[i] = uxx / q + g * math.sqrt(q)
        if abs(ux) > gmax:
            gmax = abs(ux)
    return gmax


@njit(cache=True, nogil=True)
def graph_heun(u, wind, dx, xs, sx, sy, dt, nsteps, cap,
               code, c0, terms, bps, vals, delta, tcdf, tpdf):
    """Advance ``u`` in place by up to ``nsteps`` Heun steps.

    Returns the number of completed steps; fewer than ``nsteps`` means
    max|u_x| exceeded ``cap``.
    """
    n = u.size
    k1 = np.empty(n)
    k2 = np.empty(n)
    ut = np.empty(n)
    for step in range(nsteps):
        gm = graph_rhs(u, wind, dx, xs, sx, sy, code, c0, terms, bps, vals, delta, tcdf, tpdf, k1)
        if gm > cap or not math.isfinite(gm):
            return step
        for i in range(n):
            ut[i] = u[i] + dt * k1[i]
        graph_rhs(ut, wind, dx, xs, sx, sy, code, c0, terms, bps, vals, delta, tcdf, tpdf, k2)
        for i in range(n):
            u[i] = u[i] + 0.5 * dt * (k1[i] + k2[i])
    return nsteps
