"""Oscillatory forcing g(x/eps, u/eps): eps-sweeps, wave speeds and effective speeds."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dc_field
from fractions import Fraction
from functools import partial
from typing import Callable, Optional

import numpy as np
from scipy import integrate, optimize

from . import forcing as forcing_mod
from . import graph_flow
from .errors import AmbiguousPinning, FitDegenerate, QuadratureError
from .forcing import Direction, Slope

BRANCH_ZERO = "zero-crossing"
BRANCH_HARMONIC = "harmonic-mean"
BRANCH_TORUS = "torus-mean"


def eps_to_m(eps, name="eps"):
    """Return m with eps = 1/m, m >= 2 an integer, else raise ValueError."""
    if isinstance(eps, Fraction):
        if eps.numerator != 1 or eps.denominator < 2:
            raise ValueError(f"{name} must be 1/m with integer m >= 2, got {eps}")
        return eps.denominator
    eps = float(eps)
    if not eps > 0:
        raise ValueError(f"{name} must be positive, got {eps}")
    m = round(1.0 / eps)
    if m < 2 or abs(1.0 / m - eps) > 1e-12 * eps:
        raise ValueError(f"{name} must be 1/m with integer m >= 2, got {eps!r}")
    return int(m)


# ---------------------------------------------------------------------------
# effective speeds


@dataclass(frozen=True)
class EffectiveSpeed:
    slope: str  # "q/r", "irrational(v)" or "p=(p1,p2)"
    s: np.ndarray  # sample locations
    G: np.ndarray  # directional averages at s
    pinned: bool
    c: float
    branch: str
    zero_at: Optional[float] = None
    min_abs_G: float = float("nan")


def _depends_on_x(field):
    if field.impl == "trig":
        return bool(np.any(field.terms[:, 1] != 0)) if field.terms.size else False
    return True


def _classify_G(G_fn, period, samples, tol_G, label):
    """Shared zero-crossing / harmonic-mean logic over one period of G."""
    s = np.arange(samples) * (period / samples)
    G = np.asarray(G_fn(s), dtype=float)
    absG = np.abs(G)
    kmin = int(np.argmin(absG))
    if absG[kmin] < tol_G:
        return EffectiveSpeed(label, s, G, True, 0.0, BRANCH_ZERO, float(s[kmin]),
                              float(absG[kmin]))
    # sign changes between neighbours, including the wrap
    sg = np.sign(G)
    change = np.nonzero(sg != np.roll(sg, -1))[0]
    if change.size:
        k = int(change[0])
        a, b = s[k], s[k] + period / samples
        root = optimize.brentq(lambda z: float(G_fn(z)), a, b, xtol=1e-14)
        return EffectiveSpeed(label, s, G, True, 0.0, BRANCH_ZERO, float(root % period),
                              0.0)
    # refine the smallest |G| around its best sample to catch a dip between nodes;
    # sign * G is positive on every sample
    h = period / samples
    sign = sg[kmin]
    res = optimize.minimize_scalar(lambda z: sign * float(G_fn(z)),
                                   bounds=(s[kmin] - h, s[kmin] + h), method="bounded",
                                   options={"xatol": 1e-12})
    gmin = float(res.fun)
    if gmin < tol_G:
        return EffectiveSpeed(label, s, G, True, 0.0, BRANCH_ZERO, float(res.x % period),
                              abs(gmin))
    if gmin < 10 * tol_G:
        raise AmbiguousPinning(
            f"|G| dips to {gmin:.3g} near s={res.x % period:.6g} without changing sign")
    val, err = integrate.quad(lambda z: 1.0 / float(G_fn(z)), 0.0, period, limit=400,
                              epsabs=1e-13, epsrel=1e-12)
    if not math.isfinite(val) or err > 1e-8 * max(1.0, abs(val)):
        raise QuadratureError(f"harmonic mean quadrature error {err:.3g}")
    c = period / val
    return EffectiveSpeed(label, s, G, False, float(c), BRANCH_HARMONIC, None, gmin)


def effective_c(field, slope, tol_G=1e-8, samples=256):
    """Limit speed c(alpha) for the front y = alpha x.

    Zero if the line average G(s) vanishes somewhere, otherwise the inverse of
    the mean of 1/G; irrational slopes return the torus mean.
    """
    if not isinstance(slope, Slope):
        raise TypeError("slope must be a Slope")
    if not slope.is_rational:
        m = forcing_mod.torus_mean(field)
        return EffectiveSpeed(slope.label(), np.zeros(0), np.zeros(0), False, float(m),
                              BRANCH_TORUS, None, abs(m))
    G_fn = partial(forcing_mod.slope_average, field, slope)
    return _classify_G(G_fn, 1.0, samples, tol_G, slope.label())


def cbar(field, direction, tol_G=1e-8, samples=256):
    """Effective normal speed for the direction p, from G_p over one period 1/|p|."""
    if not isinstance(direction, Direction):
        raise TypeError("direction must be a Direction")
    label = f"p=({direction.p[0]:g},{direction.p[1]:g})"
    if not direction.integer:
        m = forcing_mod.torus_mean(field)
        return EffectiveSpeed(label, np.zeros(0), np.zeros(0), False, float(m), BRANCH_TORUS,
                              None, abs(m))
    G_fn = partial(forcing_mod.normal_average, field, direction)
    return _classify_G(G_fn, forcing_mod.normal_period(direction), samples, tol_G, label)


@dataclass(frozen=True)
class ScanRow:
    slope: Slope
    c: float
    branch: str
    pinned: bool
    jump: float  # c - torus mean


def discontinuity_scan(field, slopes, tol_G=1e-8, jump_tol=1e-6):
    """c(alpha) over a grid of slopes, flagging departures from the torus-mean plateau."""
    plateau = forcing_mod.torus_mean(field)
    rows = []
    for sl in slopes:
        e = effective_c(field, sl, tol_G)
        rows.append(ScanRow(sl, e.c, e.branch, e.pinned, e.c - plateau))
    flagged = [r for r in rows if abs(r.jump) > jump_tol]
    return rows, flagged, plateau


# ---------------------------------------------------------------------------
# eps-problems


@dataclass(frozen=True)
class EpsSweepConfig:
    """``initial`` maps a node count n to the initial GraphState."""

    eps: tuple
    field: forcing_mod.ForcingField
    initial: Callable
    T: float = 0.1
    nodes_per_cell: int = 32
    cfl: float = 0.25
    sample_interval: Optional[float] = None

    def __post_init__(self):
        eps = tuple(self.eps)
        if not eps:
            raise ValueError("need at least one eps")
        ms = [eps_to_m(e) for e in eps]
        if any(b <= a for a, b in zip(ms[:-1], ms[1:])):
            raise ValueError("eps list must be strictly decreasing")
        if self.nodes_per_cell < 32:
            raise ValueError("need at least 32 nodes per fast period")
        if not self.T > 0:
            raise ValueError("horizon T must be positive")
        object.__setattr__(self, "eps", eps)

    def n_for(self, eps):
        return self.nodes_per_cell * eps_to_m(eps)

    def solver(self, n=None):
        return graph_flow.GraphSolverConfig(t_max=self.T, cfl=self.cfl,
                                            sample_interval=self.sample_interval, n=n)


def solve_eps(cfg, eps):
    """Solve the problem with forcing g(x/eps, u/eps) on n = nodes_per_cell/eps nodes."""
    m = eps_to_m(eps)
    n = cfg.n_for(eps)
    return graph_flow.solve_graph(cfg.initial(n), cfg.field, cfg.solver(n), scale=float(m))


def limit_solve(mean_g, u0, cfg):
    """Averaged problem: constant forcing equal to the mean of g."""
    return graph_flow.solve_graph(u0, forcing_mod.constant(mean_g), cfg)


def shift_estimate_worst(traj, eps, lip):
    """max of |u(x) - u(x + N eps)| - ([L] + 1) N eps over nodes, N and samples.

    x + N eps is taken on the grid (the grid has a whole number of nodes per
    fast period); crossing x = 1 applies the winding.
    """
    m = eps_to_m(eps)
    s0 = traj.states[0]
    n = s0.n
    if n % m:
        raise ValueError("grid does not resolve whole fast periods")
    per = n // m
    bound_unit = (math.floor(lip) + 1) * (1.0 / m)
    worst = -np.inf
    idx = np.arange(n)
    for s in traj.states:
        for N in range(1, m):
            j = idx + N * per
            wrap = j >= n
            other = s.u[j % n] + np.where(wrap, s.delta, 0.0)
            worst = max(worst, float(np.max(np.abs(s.u - other)) - bound_unit * N))
    return worst


@dataclass
class HomogenizationReport:
    eps: list
    times: list
    distances: list  # per eps: sup-norm distance to the limit at each sample
    final_distances: list
    amplitude: float  # max |u_limit(., T)|
    mean_g: Optional[float]
    shift_estimate_worst: list
    lipschitz: float
    limit_compared: bool
    trajectories: list = dc_field(repr=False, default_factory=list)

    def to_json(self):
        return {
            "eps": [float(e) for e in self.eps],
            "times": [float(t) for t in self.times],
            "distances": [[float(v) for v in d] for d in self.distances],
            "final_distances": [float(v) for v in self.final_distances],
            "amplitude": self.amplitude,
            "mean_g": self.mean_g,
            "shift_estimate_worst": [float(v) for v in self.shift_estimate_worst],
            "lipschitz": self.lipschitz,
            "limit_compared": self.limit_compared,
            "strictly_decreasing": self.strictly_decreasing,
        }

    @property
    def strictly_decreasing(self):
        d = self.final_distances
        return bool(all(b < a for a, b in zip(d[:-1], d[1:])))


def _initial_lipschitz(state):
    """Discrete Lipschitz constant of the initial datum from neighbour chords."""
    ur = np.roll(state.u, -1)
    ur[-1] += state.delta
    return float(np.max(np.abs(ur - state.u)) * state.n)


def sweep(cfg, jobs=1):
    """Run every eps, compare against the averaged limit when g is x-only.

    The limit problem is solved on each eps grid, so the distance isolates
    the effect of eps from the spatial discretization.
    """
    def run(e):
        return solve_eps(cfg, e)

    if jobs and jobs > 1 and len(cfg.eps) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            trajs = list(ex.map(run, cfg.eps))
    else:
        trajs = [run(e) for e in cfg.eps]
    n_fine = cfg.n_for(cfg.eps[-1])
    u_fine = cfg.initial(n_fine)
    lip = _initial_lipschitz(u_fine)
    est = [shift_estimate_worst(tr, e, lip) if cfg.field.x_only else float("nan")
           for tr, e in zip(trajs, cfg.eps)]
    times = list(trajs[0].times)
    if not cfg.field.x_only:
        return HomogenizationReport(list(cfg.eps), times, [], [], float("nan"), None, est, lip,
                                    False, trajs)
    mean_g = forcing_mod.torus_mean(cfg.field)
    lims = [limit_solve(mean_g, cfg.initial(cfg.n_for(e)), cfg.solver(cfg.n_for(e)))
            for e in cfg.eps]
    dists = [[float(np.max(np.abs(s.u - L.u))) for s, L in zip(tr.states, lim.states)]
             for tr, lim in zip(trajs, lims)]
    amp = float(np.max(np.abs(lims[-1].final.u)))
    return HomogenizationReport(list(cfg.eps), times, dists, [d[-1] for d in dists], amp,
                                float(mean_g), est, lip, True, trajs + [lims[-1]])


# ---------------------------------------------------------------------------
# pulsating waves


@dataclass(frozen=True)
class WaveSpeed:
    eps: float
    slope: str
    c: float
    r2: float
    pinned: bool
    displacement: float
    max_excursion: float  # max over samples of sup |u - alpha x - u0 mean|
    times: np.ndarray
    mean_height: np.ndarray


def measure_wave_speed(field, eps, slope, T=None, n=None, cfl=0.25, samples=400):
    """Estimate c(alpha, eps) from the planar datum u0 = alpha x.

    Fits mean(u - alpha x) against sqrt(1 + alpha^2) t over the second half
    of the run.  A total displacement below eps is reported as pinning.
    """
    if not isinstance(slope, Slope) or not slope.is_rational:
        raise ValueError("wave speeds are measured for rational slopes")
    m = eps_to_m(eps)
    alpha = slope.value
    if (Fraction(slope.num, slope.den) * m).denominator != 1:
        raise ValueError("alpha / eps must be an integer so the forcing is periodic on the grid")
    if T is None:
        T = 40.0 / m
    if n is None:
        n = 16 if (alpha == 0 and not _depends_on_x(field)) else 32 * m
    u0 = graph_flow.linear_state(alpha, n)
    cfg = graph_flow.GraphSolverConfig(t_max=T, cfl=cfl, sample_interval=T / samples)
    traj = graph_flow.solve_graph(u0, field, cfg, scale=float(m))
    t = np.asarray(traj.times)
    x = u0.x
    h = np.array([float(np.mean(s.u - alpha * x)) for s in traj.states])
    exc = float(max(np.max(np.abs(s.u - alpha * x - h[0])) for s in traj.states))
    disp = float(h[-1] - h[0])
    pinned = abs(disp) < 1.0 / m
    sel = t >= 0.5 * t[-1]
    X = math.sqrt(1.0 + alpha * alpha) * t[sel]
    Y = h[sel]
    A = np.column_stack([X, np.ones_like(X)])
    coef, *_ = np.linalg.lstsq(A, Y, rcond=None)
    resid = Y - A @ coef
    ss_tot = float(np.sum((Y - Y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot > 0 else 1.0
    c = float(coef[0])
    if not pinned and r2 < 0.99:
        raise FitDegenerate(f"wave-speed fit has R^2 = {r2:.4f} < 0.99; extend the horizon")
    return WaveSpeed(float(eps), slope.label(), c, r2, pinned, disp, exc, t, h)
