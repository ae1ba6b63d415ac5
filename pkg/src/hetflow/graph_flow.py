"""Graph formulation u_t = u_xx/(1+u_x^2) + g(x, u) sqrt(1+u_x^2).

Fronts are graphs over the unit period with the winding condition
u(x + 1, t) = u(x, t) + Delta.  Space is discretised by collocated central
differences on N uniform nodes x_i = i/N, time by explicit Heun steps with
dt = cfl dx^2.  The forcing may be evaluated at scaled coordinates
g(x s, u s), which is how the oscillatory problem with s = 1/eps is posed.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field as dc_field, fields
from typing import Optional

import numpy as np

from . import _kernels
from . import forcing as forcing_mod
from .errors import GradientBlowup, NotCauchy


@dataclass(frozen=True)
class GraphState:
    """Node values ``u_i = u(i/N)``, winding ``delta`` and time ``t``."""

    u: np.ndarray
    delta: float = 0.0
    t: float = 0.0

    def __post_init__(self):
        arr = np.array(self.u, dtype=float)
        arr.setflags(write=False)
        object.__setattr__(self, "u", arr)
        object.__setattr__(self, "delta", float(self.delta))
        object.__setattr__(self, "t", float(self.t))

    @property
    def n(self):
        return self.u.size

    @property
    def dx(self):
        return 1.0 / self.n

    @property
    def x(self):
        return np.arange(self.n) / self.n

    def validate(self):
        if self.u.ndim != 1 or self.n < 16:
            raise ValueError(f"need a 1-d grid of at least 16 nodes, got shape {self.u.shape}")
        if not (np.all(np.isfinite(self.u)) and math.isfinite(self.delta)):
            raise ValueError("graph values must be finite")
        return self

    def with_values(self, u, t=None):
        return GraphState(u, self.delta, self.t if t is None else t)

    def shifted(self, c):
        """Vertical translate u + c."""
        return GraphState(self.u + c, self.delta, self.t)


def constant_state(c=0.0, n=256):
    return GraphState(np.full(n, float(c)), 0.0)


def linear_state(slope, n=256, offset=0.0):
    """u = offset + slope x, winding ``slope``."""
    return GraphState(offset + slope * np.arange(n) / n, slope)


def fourier_state(modes, n=256, slope=0.0, offset=0.0):
    """offset + slope x + sum a cos(2 pi k x) + b sin(2 pi k x) over ``(k, a, b)``."""
    x = np.arange(n) / n
    u = offset + slope * x
    for k, a, b in modes:
        u = u + a * np.cos(2 * np.pi * k * x) + b * np.sin(2 * np.pi * k * x)
    return GraphState(u, slope)


@dataclass(frozen=True)
class GraphSolverConfig:
    """``n`` is optional and only checked against the initial state."""

    t_max: float = 1.0
    cfl: float = 0.25
    sample_interval: Optional[float] = None
    grad_cap: float = 1e3
    n: Optional[int] = None
    dt: Optional[float] = None
    use_numba: bool = True

    def __post_init__(self):
        if not 0.0 < self.cfl <= 0.5:
            raise ValueError(f"cfl must lie in (0, 0.5], got {self.cfl}")
        if not self.t_max > 0:
            raise ValueError("t_max must be positive")
        if self.sample_interval is not None and not self.sample_interval > 0:
            raise ValueError("sample_interval must be positive")
        if self.n is not None and self.n < 16:
            raise ValueError("n must be at least 16")


# ---------------------------------------------------------------------------
# spatial operators


def _neighbours(u, delta):
    ur = np.roll(u, -1)
    ur[-1] += delta
    ul = np.roll(u, 1)
    ul[0] -= delta
    return ul, ur


def derivatives(state):
    """Central differences (u_x, u_xx) with the winding applied at the wrap."""
    u = state.u
    ul, ur = _neighbours(u, state.delta)
    dx = state.dx
    return (ur - ul) / (2 * dx), (ur - 2 * u + ul) / (dx * dx)


def _d0_periodic(f, dx):
    return (np.roll(f, -1) - np.roll(f, 1)) / (2 * dx)


def forcing_at_nodes(state, field, scale=1.0):
    return forcing_mod.evaluate(field, state.x * scale, state.u * scale)


def rhs_graph(state, field, scale=1.0):
    """Per-node rates u_xx/(1+u_x^2) + g(x s, u s) sqrt(1+u_x^2)."""
    ux, uxx = derivatives(state)
    q = 1.0 + ux * ux
    return uxx / q + forcing_at_nodes(state, field, scale) * np.sqrt(q)


def F_density(p):
    """F(p) = p arctan p - log sqrt(1 + p^2)."""
    p = np.asarray(p, dtype=float)
    return p * np.arctan(p) - 0.5 * np.log1p(p * p)


def energy_F(state):
    """int_0^1 F(u_x) dx by the periodic trapezoid rule."""
    ux, _ = derivatives(state)
    return float(np.mean(F_density(ux)))


def graph_length(state):
    ux, _ = derivatives(state)
    return float(np.mean(np.sqrt(1.0 + ux * ux)))


# ---------------------------------------------------------------------------
# solver


@dataclass(frozen=True)
class GraphRecord:
    t: float
    length: float  # int sqrt(1+u_x^2)
    energy: float  # int F(u_x)
    cubic: float  # int (1+u_x^2)^{3/2}
    ut_max: float  # max |u_t|, u_t from rhs_graph
    ux_max: float
    arctan_x2: float  # int (arctan u_x)_x^2
    arctan_t2: float  # int (arctan u_x)_t^2 = int u_xt^2/(1+u_x^2) at this instant
    arctan_t2_cum: float  # its time integral from the start (trapezoid over samples)

    @classmethod
    def columns(cls):
        return [f.name for f in fields(cls)]

    def as_dict(self):
        return asdict(self)


def graph_record(state, field, scale=1.0, prev=None):
    ux, uxx = derivatives(state)
    q = 1.0 + ux * ux
    ut = uxx / q + forcing_at_nodes(state, field, scale) * np.sqrt(q)
    uxt = _d0_periodic(ut, state.dx)
    at2 = float(np.mean(uxt * uxt / q))
    cum = 0.0
    if prev is not None:
        cum = prev.arctan_t2_cum + 0.5 * (prev.arctan_t2 + at2) * (state.t - prev.t)
    return GraphRecord(
        t=state.t,
        length=float(np.mean(np.sqrt(q))),
        energy=float(np.mean(F_density(ux))),
        cubic=float(np.mean(q ** 1.5)),
        ut_max=float(np.max(np.abs(ut))),
        ux_max=float(np.max(np.abs(ux))),
        arctan_x2=float(np.mean((uxx / q) ** 2)),
        arctan_t2=at2,
        arctan_t2_cum=cum,
    )


@dataclass
class GraphTrajectory:
    times: list
    states: list
    records: list
    reason: str = "max_time"
    t_end: float = 0.0
    message: str = ""
    scale: float = 1.0

    def series(self, key):
        return np.array([getattr(r, key) for r in self.records])

    @property
    def final(self):
        return self.states[-1]


def _kernel_args(field, xs, scale):
    if field.x_only:
        g = np.ascontiguousarray(forcing_mod.evaluate(field, xs * scale, np.zeros_like(xs)),
                                 dtype=float)
        empty = np.zeros(0)
        return (_kernels.CODE_NODAL, 0.0, np.zeros((0, 4)), empty, g, 0.0, empty, empty)
    return field.compiled()


def _numpy_heun(u, delta, field, scale, dt, nsteps, cap, t0):
    for k in range(nsteps):
        s = GraphState(u, delta, t0 + k * dt)
        ux, _ = derivatives(s)
        gm = float(np.max(np.abs(ux)))
        if not (gm <= cap):
            return u, k
        k1 = rhs_graph(s, field, scale)
        k2 = rhs_graph(GraphState(u + dt * k1, delta), field, scale)
        u = u + 0.5 * dt * (k1 + k2)
    return u, nsteps


def solve_graph(u0, field, cfg, scale=1.0):
    """Integrate to ``cfg.t_max`` sampling every ``cfg.sample_interval``.

    Each inter-sample interval is split into equal steps no longer than
    ``cfl dx^2`` so samples land exactly.  Raises :class:`GradientBlowup`
    (with the partial trajectory as ``exc.trajectory``) when max|u_x|
    exceeds ``cfg.grad_cap``.
    """
    u0.validate()
    if cfg.n is not None and cfg.n != u0.n:
        raise ValueError(f"config asks for n={cfg.n} but the initial state has {u0.n} nodes")
    dx = u0.dx
    dt_max = cfg.dt if cfg.dt is not None else cfg.cfl * dx * dx
    interval = cfg.sample_interval or cfg.t_max
    xs = u0.x
    args = _kernel_args(field, xs, scale) if cfg.use_numba else None

    traj = GraphTrajectory([], [], [], scale=scale)

    def sample(s):
        prev = traj.records[-1] if traj.records else None
        traj.times.append(s.t)
        traj.states.append(s)
        traj.records.append(graph_record(s, field, scale, prev))

    state = u0
    sample(state)
    t_end = u0.t + cfg.t_max
    k = 1
    while state.t < t_end - 1e-12 * max(1.0, t_end):
        target = u0.t + k * interval
        if target >= t_end - 1e-12 * max(1.0, t_end):
            target = t_end
        span = target - state.t
        nsteps = max(1, int(math.ceil(span / dt_max - 1e-9)))
        dt = span / nsteps
        u = np.array(state.u)
        if args is not None:
            done = _kernels.graph_heun(u, state.delta, dx, xs, scale, scale, dt, nsteps,
                                       cfg.grad_cap, *args)
        else:
            u, done = _numpy_heun(u, state.delta, field, scale, dt, nsteps, cfg.grad_cap,
                                  state.t)
        t_now = target if done == nsteps else state.t + done * dt
        state = GraphState(u, state.delta, t_now)
        if done < nsteps or not np.all(np.isfinite(u)):
            traj.reason = "gradient_blowup"
            traj.t_end = state.t
            traj.message = f"max|u_x| exceeded {cfg.grad_cap:g} near t={state.t:.6g}"
            if np.all(np.isfinite(u)):
                sample(state)
            exc = GradientBlowup(traj.message)
            exc.trajectory = traj
            raise exc
        sample(state)
        k += 1
    traj.t_end = state.t
    return traj


# ---------------------------------------------------------------------------
# energy identities and estimates


def energy_identity_residual(states, field, scale=1.0):
    """|d/dt int F(u_x) - int (-u_t^2 + g u_t sqrt(1+u_x^2))| at the middle sample.

    The time derivative is the forward difference to the next sample, so the
    residual is first order in the sample spacing (plus an O(dx^2) floor).
    u_t is taken from :func:`rhs_graph`.
    """
    if len(states) < 3:
        raise ValueError("need at least 3 consecutive samples")
    m = len(states) // 2
    s0, s1 = states[m], states[m + 1]
    lhs = (energy_F(s1) - energy_F(s0)) / (s1.t - s0.t)
    ux, _ = derivatives(s0)
    sq = np.sqrt(1.0 + ux * ux)
    ut = rhs_graph(s0, field, scale)
    g = forcing_at_nodes(s0, field, scale)
    rhs = float(np.mean(-ut * ut + g * ut * sq))
    return abs(lhs - rhs)


def length_energy_check(traj, sup_g):
    """Worst violations of the length and energy inequalities between samples.

    Uses the integrated forms L(t1) <= L(t0) exp(C1 h) with C1 = |g|^2/2 and
    E(t1) - E(t0) <= C2 int (1 + u_x^2) dt with C2 = |g|^2/4 (trapezoid in
    time).  Values <= 0 mean the inequality held.
    """
    t = np.asarray(traj.times)
    h = np.diff(t)
    L = traj.series("length")
    E = traj.series("energy")
    q_int = np.array([float(np.mean(1.0 + derivatives(s)[0] ** 2)) for s in traj.states])
    w_len = L[1:] - L[:-1] * np.exp(0.5 * sup_g ** 2 * h)
    w_en = (E[1:] - E[:-1]) - 0.25 * sup_g ** 2 * 0.5 * (q_int[1:] + q_int[:-1]) * h
    return {"worst_length": float(np.max(w_len)), "worst_energy": float(np.max(w_en))}


def ut_max_nonincreasing(traj, slack=1e-8):
    """(ok, worst increase) for the sampled series max_i |u_t(x_i, t)|."""
    m = traj.series("ut_max")
    if m.size < 2:
        return True, 0.0
    worst = float(np.max(np.diff(m)))
    return worst <= slack, worst


def graph_curve_velocity(state, field):
    """Vertical graph speed implied by the parametric flow at each node.

    The nodes (x_i, u_i) form one period of a polyline; the curve solver's
    normal speed kappa + g, divided by the vertical normal component, is the
    speed of the graph at fixed x.  Matches :func:`rhs_graph` to O(dx^2).
    """
    from .curve_flow import _frenet_arrays

    x = state.x
    pts = np.column_stack([x, state.u])
    ext = np.vstack([[x[-1] - 1.0, state.u[-1] - state.delta], pts,
                     [1.0 + x[0], state.u[0] + state.delta]])
    _, nu, kappa, *_ = _frenet_arrays(ext)
    nu = nu[1:-1]
    kappa = kappa[1:-1]
    g = forcing_mod.evaluate(field, x, state.u)
    return (kappa + g) / nu[:, 1]


# ---------------------------------------------------------------------------
# weak formulation


@dataclass(frozen=True)
class SpaceTimeBump:
    """phi(x, t) = b(t) p(x) with a smooth bump b supported in (t0, t1) and
    p(x) = sum a cos(2 pi k x) + b sin(2 pi k x) over ``modes`` (k, a, b)."""

    t0: float
    t1: float
    modes: tuple = ((0, 1.0, 0.0),)

    def _time(self, t):
        t = np.asarray(t, dtype=float)
        half = 0.5 * (self.t1 - self.t0)
        s = (t - 0.5 * (self.t0 + self.t1)) / half
        inside = np.abs(s) < 1
        si = np.where(inside, s, 0.0)
        b = np.where(inside, np.exp(-1.0 / (1.0 - si * si)), 0.0)
        db = np.where(inside, b * (-2 * si / (1.0 - si * si) ** 2) / half, 0.0)
        return b, db

    def _space(self, x):
        x = np.asarray(x, dtype=float)
        p = np.zeros_like(x)
        dp = np.zeros_like(x)
        for k, a, b in self.modes:
            w = 2 * np.pi * k
            p = p + a * np.cos(w * x) + b * np.sin(w * x)
            dp = dp + w * (-a * np.sin(w * x) + b * np.cos(w * x))
        return p, dp

    def __call__(self, x, t):
        return self._time(t)[0] * self._space(x)[0]

    def parts(self, x, t):
        """(b(t), b'(t), p(x), p'(x))."""
        b, db = self._time(t)
        p, dp = self._space(x)
        return b, db, p, dp


def default_test_functions(T):
    """Five fixed test functions supported inside (0, T)."""
    a, b = 0.1 * T, 0.9 * T
    return [
        SpaceTimeBump(a, b, ((0, 1.0, 0.0),)),
        SpaceTimeBump(a, b, ((1, 1.0, 0.0),)),
        SpaceTimeBump(0.2 * T, 0.7 * T, ((1, 0.0, 1.0),)),
        SpaceTimeBump(0.3 * T, 0.95 * T, ((0, 0.5, 0.0), (2, 0.3, -0.4))),
        SpaceTimeBump(0.05 * T, 0.6 * T, ((1, 0.2, 0.7), (3, -0.25, 0.1))),
    ]


def random_test_functions(rng, T, count=5, kmax=3):
    out = []
    for _ in range(count):
        t0, t1 = np.sort(rng.uniform(0.02 * T, 0.98 * T, size=2))
        if t1 - t0 < 0.2 * T:
            t0, t1 = 0.1 * T, 0.9 * T
        modes = tuple((int(k), float(rng.normal()), float(rng.normal()))
                      for k in range(kmax + 1))
        out.append(SpaceTimeBump(float(t0), float(t1), modes))
    return out


_GL3 = np.polynomial.legendre.leggauss(3)


def _forcing_weights(field, n, scale):
    """Cell quadrature of g against the periodic hat basis.

    Returns ``W`` with ``int g h dx = sum_i W_i h_i`` for any periodic
    piecewise-linear h with node values h_i.  Cells are split at the
    breakpoints of step fields, so the result is exact for them.
    """
    nodes = np.arange(n + 1) / n
    cuts = [nodes]
    if field.impl == "pwx":
        m = int(round(scale))
        if abs(m - scale) > 1e-12:
            raise ValueError("step fields need an integer scale")
        b = field.breakpoints[:-1]
        cuts.append(((b[None, :] + np.arange(m)[:, None]) / m).ravel())
    P = np.unique(np.concatenate(cuts))
    a, b = P[:-1], P[1:]
    xg, wg = _GL3
    X = 0.5 * (a + b)[:, None] + 0.5 * (b - a)[:, None] * xg[None, :]
    Wq = 0.5 * (b - a)[:, None] * wg[None, :]
    G = forcing_mod.evaluate(field, X.ravel() * scale, np.zeros(X.size)).reshape(X.shape)
    cell = np.minimum(np.floor(X * n).astype(int), n - 1)
    s = X * n - cell
    W = np.zeros(n)
    np.add.at(W, cell.ravel(), (G * Wq * (1 - s)).ravel())
    np.add.at(W, ((cell + 1) % n).ravel(), (G * Wq * s).ravel())
    return W


def weak_residual(traj, field, testfn, scale=1.0):
    """Space-time residual of the weak form for an x-only forcing.

    With phi compactly supported in time the u_t phi term is integrated by
    parts to -u phi_t.  arctan(u_x) phi_x uses nodal values; the forcing term
    uses hat-basis weights exact for step fields.  Time integration is the
    trapezoid rule over the samples.
    """
    if not field.x_only:
        raise ValueError("the weak form is posed for x-only forcings")
    s0 = traj.states[0]
    n = s0.n
    x = s0.x
    W = _forcing_weights(field, n, scale)
    t = np.asarray(traj.times)
    vals = np.empty(t.size)
    for k, s in enumerate(traj.states):
        b, db, p, dp = testfn.parts(x, s.t)
        if b == 0 and db == 0:
            vals[k] = 0.0
            continue
        ux, _ = derivatives(s)
        sq = np.sqrt(1.0 + ux * ux)
        val = np.mean(-s.u * db * p + np.arctan(ux) * b * dp)
        val -= float(np.dot(W, sq * b * p))
        vals[k] = val
    return float(np.sum(0.5 * (vals[1:] + vals[:-1]) * np.diff(t)))


@dataclass
class WeakReport:
    deltas: list
    gaps: list  # sup distance between consecutive delta solutions
    cauchy: bool
    ut_monotone: list
    ut_worst_increase: list
    trajectories: list = dc_field(repr=False)

    @property
    def finest(self):
        return self.trajectories[-1]


def sup_distance(traj_a, traj_b):
    """max over common samples and nodes of |u_a - u_b|."""
    if len(traj_a.states) != len(traj_b.states):
        raise ValueError("trajectories have different sample counts")
    return float(max(np.max(np.abs(a.u - b.u)) for a, b in zip(traj_a.states, traj_b.states)))


def _map(fn, items, jobs):
    if jobs is None or jobs <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, items))


def solve_weak_Linfty(u0, field, deltas, cfg, jobs=1, strict=True, slack=1e-8):
    """Mollified-sequence construction for an x-only bounded forcing.

    Solves with ``mollify(field, delta)`` for each width, reports the sup
    distances between consecutive solutions and checks that max|u_t| is
    non-increasing along each run.  Raises :class:`NotCauchy` (carrying the
    report) when ``strict`` and the distances do not strictly decrease.
    """
    if not field.x_only:
        raise ValueError("the L-infinity construction needs an x-only forcing")
    deltas = [float(d) for d in deltas]
    if len(deltas) < 2 or np.any(np.diff(deltas) >= 0):
        raise ValueError("mollifier widths must be strictly decreasing")
    fields_ = [forcing_mod.mollify(field, d) for d in deltas]
    trajs = _map(lambda f: solve_graph(u0, f, cfg), fields_, jobs)
    gaps = [sup_distance(a, b) for a, b in zip(trajs[:-1], trajs[1:])]
    mono = [ut_max_nonincreasing(tr, slack) for tr in trajs]
    cauchy = all(b < a for a, b in zip(gaps[:-1], gaps[1:]))
    rep = WeakReport(deltas, gaps, cauchy, [m[0] for m in mono], [m[1] for m in mono], trajs)
    if strict and not cauchy:
        exc = NotCauchy(f"consecutive distances not strictly decreasing: {gaps}")
        exc.report = rep
        raise exc
    return rep


@dataclass(frozen=True)
class ComparisonResult:
    ordered: bool
    times: np.ndarray
    min_gap: np.ndarray


def comparison_check(u0_low, u0_high, field, cfg, tol=1e-10):
    """Co-evolve two ordered data and report min(u_high - u_low) per sample."""
    if not field.x_only:
        raise ValueError("the comparison check is posed for x-only forcings")
    if u0_low.n != u0_high.n or abs(u0_low.delta - u0_high.delta) > 0:
        raise ValueError("both data need the same grid and winding")
    if np.any(u0_low.u > u0_high.u):
        raise ValueError("initial data are not ordered")
    lo = solve_graph(u0_low, field, cfg)
    hi = solve_graph(u0_high, field, cfg)
    gaps = np.array([float(np.min(b.u - a.u)) for a, b in zip(lo.states, hi.states)])
    return ComparisonResult(bool(np.all(gaps >= -tol)), np.asarray(lo.times), gaps)
