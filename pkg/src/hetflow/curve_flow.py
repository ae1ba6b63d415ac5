"""Closed polyline curves moving by normal velocity (curvature + forcing).

Nodes are uniform in the periodic parameter x in [0, 1) with spacing
h = 1/N.  Derivatives are periodic central differences; the curvature is
``(gamma_xx . nu) / |gamma_x|^2`` with the metric squared approximated by
the product of the two adjacent chord lengths over h^2, which is second
order and exact on regular polygons (so circles that should be stationary
are).  There is no tangential velocity unless equal-arclength resampling is
switched on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import Optional

import numpy as np
from scipy.interpolate import CubicSpline

from . import forcing as forcing_mod
from .errors import BlowupDetected, DegenerateSegment, InsufficientData

TYPE_I = "TypeI"
TYPE_II = "TypeII"


@dataclass(frozen=True, eq=False)
class Curve:
    """Counter-clockwise closed polyline ``points`` (N x 2) at time ``t``."""

    points: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def n(self):
        return self.points.shape[0]

    def validate(self):
        pts = self.points
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise ValueError("points must be an (N, 2) array")
        if pts.shape[0] < 8:
            raise ValueError("a curve needs at least 8 nodes")
        seg = np.linalg.norm(np.roll(pts, -1, axis=0) - pts, axis=1)
        if seg.min() <= 0.0:
            raise DegenerateSegment("consecutive nodes coincide")
        if signed_area(pts) <= 0.0:
            raise ValueError("curve must be counter-clockwise (positive signed area)")
        return self

    def with_points(self, points, t=None):
        return Curve(points, self.t if t is None else t)


def signed_area(points):
    x, y = points[:, 0], points[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _param(n):
    return np.arange(n) / n


def circle(radius=1.0, n=256, center=(0.0, 0.0), t=0.0):
    th = 2 * np.pi * _param(n)
    pts = np.column_stack([center[0] + radius * np.cos(th), center[1] + radius * np.sin(th)])
    return Curve(pts, t).validate()


def ellipse(a=2.0, b=1.0, n=256, center=(0.0, 0.0), t=0.0):
    th = 2 * np.pi * _param(n)
    pts = np.column_stack([center[0] + a * np.cos(th), center[1] + b * np.sin(th)])
    return Curve(pts, t).validate()


def perturbed_circle(radius=1.0, modes=(), n=256, center=(0.0, 0.0), t=0.0):
    """r(theta) = radius + sum a_k cos(k theta) + b_k sin(k theta), ``modes`` = [(k, a_k, b_k)]."""
    th = 2 * np.pi * _param(n)
    r = np.full(n, float(radius))
    for k, a, b in modes:
        r += a * np.cos(k * th) + b * np.sin(k * th)
    if r.min() <= 0:
        raise ValueError("perturbation makes the radius non-positive")
    pts = np.column_stack([center[0] + r * np.cos(th), center[1] + r * np.sin(th)])
    return Curve(pts, t).validate()


# ---------------------------------------------------------------------------
# Frenet data


@dataclass(frozen=True, eq=False)
class FrenetData:
    tangent: np.ndarray
    normal: np.ndarray  # inward for counter-clockwise curves
    kappa: np.ndarray
    metric: np.ndarray  # |gamma_x|
    ds: np.ndarray  # arclength weight per node (mean of adjacent chords)
    chords: np.ndarray  # |gamma_{i+1} - gamma_i|

    @property
    def length(self):
        return float(self.chords.sum())


def _frenet_arrays(pts):
    n = pts.shape[0]
    h = 1.0 / n
    fwd = np.roll(pts, -1, axis=0) - pts
    bwd = pts - np.roll(pts, 1, axis=0)
    lf = np.hypot(fwd[:, 0], fwd[:, 1])
    lb = np.roll(lf, 1)
    if lf.min() <= 0.0:
        raise DegenerateSegment("two consecutive nodes coincide")
    gx = (fwd + bwd) / (2 * h)
    gnorm = np.hypot(gx[:, 0], gx[:, 1])
    if gnorm.min() <= 0.0:
        raise DegenerateSegment("central tangent vanishes (node folds back)")
    tau = gx / gnorm[:, None]
    nu = np.column_stack([-tau[:, 1], tau[:, 0]])
    gxx = (fwd - bwd) / (h * h)
    metric2 = lf * lb / (h * h)
    kappa = np.einsum("ij,ij->i", gxx, nu) / metric2
    return tau, nu, kappa, np.sqrt(metric2), 0.5 * (lf + lb), lf


def frenet(curve):
    """Unit tangent, inward unit normal, curvature, metric and arclength weights."""
    pts = curve.points if isinstance(curve, Curve) else np.asarray(curve, dtype=float)
    return FrenetData(*_frenet_arrays(pts))


def rhs(curve, field):
    """Node velocities (kappa + g(gamma)) nu."""
    pts = curve.points if isinstance(curve, Curve) else np.asarray(curve, dtype=float)
    _, nu, kappa, *_ = _frenet_arrays(pts)
    g = forcing_mod.evaluate(field, pts[:, 0], pts[:, 1])
    return (kappa + g)[:, None] * nu


# ---------------------------------------------------------------------------
# time stepping


@dataclass(frozen=True)
class CurveSolverConfig:
    t_max: float = 1.0
    cfl: float = 0.25
    dt: Optional[float] = None
    kappa_max: float = 1e3
    min_segment_factor: float = 1e-6
    sample_interval: Optional[float] = None
    reparametrize: bool = False
    check_intersections: bool = True

    def __post_init__(self):
        if not 0.0 < self.cfl <= 0.5:
            raise ValueError("cfl must lie in (0, 0.5]")
        if self.dt is not None and not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.t_max > 0:
            raise ValueError("t_max must be positive")


def resample_equal_arclength(points):
    """Redistribute nodes uniformly in arclength along a periodic cubic spline."""
    n = points.shape[0]
    closed = np.vstack([points, points[:1]])
    seg = np.linalg.norm(np.diff(closed, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    spline = CubicSpline(s, closed, bc_type="periodic", axis=0)
    return spline(np.arange(n) * (s[-1] / n))


def step(curve, field, dt, kappa_max=np.inf, min_segment=0.0, reparametrize=False):
    """One explicit Heun step.  Raises BlowupDetected before moving if the
    current curve already violates the curvature or segment thresholds."""
    pts = curve.points
    _, nu, kappa, _, _, chords = _frenet_arrays(pts)
    kmax = float(np.max(np.abs(kappa)))
    if kmax > kappa_max or chords.min() < min_segment:
        raise BlowupDetected(f"max|kappa|={kmax:.6g} at t={curve.t:.9g}", curve.t, kmax)
    g = forcing_mod.evaluate(field, pts[:, 0], pts[:, 1])
    k1 = (kappa + g)[:, None] * nu
    pred = pts + dt * k1
    k2 = rhs(pred, field)
    new = pts + 0.5 * dt * (k1 + k2)
    if reparametrize:
        new = resample_equal_arclength(new)
    return Curve(new, curve.t + dt)


@dataclass
class Trajectory:
    """Sampled snapshots plus a per-step scalar history."""

    times: list
    curves: list
    records: list
    reason: str = "max_time"
    history: dict = dc_field(default_factory=dict)
    t_end: float = 0.0
    T_est: Optional[float] = None
    message: str = ""

    def series(self, key):
        return np.asarray(self.history[key])


def _history_row(hist, t, kappa, ds, chords):
    hist["t"].append(t)
    hist["kappa_max"].append(float(np.max(np.abs(kappa))))
    hist["length"].append(float(chords.sum()))
    hist["kappa2"].append(float(np.sum(kappa ** 2 * ds)))
    hist["abs_kappa"].append(float(np.sum(np.abs(kappa) * ds)))


def solve(curve0, field, cfg, record_context=None):
    """Integrate from ``curve0`` until ``cfg.t_max``, blowup or self-intersection.

    Snapshots and diagnostics records are taken every ``cfg.sample_interval``
    (landing exactly on the sample times) and at termination.
    """
    from . import diagnostics

    curve0.validate()
    ctx = dict(record_context or {})
    n = curve0.n
    L0 = frenet(curve0).length
    min_seg = cfg.min_segment_factor * L0 / n
    interval = cfg.sample_interval or cfg.t_max
    hist = {k: [] for k in ("t", "kappa_max", "length", "kappa2", "abs_kappa")}
    traj = Trajectory([], [], [], history=hist)

    def sample(c):
        traj.times.append(c.t)
        traj.curves.append(c)
        traj.records.append(diagnostics.record(c, field, **ctx))

    curve = curve0
    sample(curve)
    eps_t = 1e-12 * max(1.0, cfg.t_max)
    k_sample = 1

    def sample_time(k):
        ts = k * interval
        return cfg.t_max if ts >= cfg.t_max - eps_t else ts

    next_sample = sample_time(k_sample)
    while True:
        _, _, kappa, _, ds, chords = _frenet_arrays(curve.points)
        _history_row(hist, curve.t, kappa, ds, chords)
        if curve.t >= cfg.t_max - eps_t:
            traj.reason = "max_time"
            break
        if cfg.dt is not None:
            dt = cfg.dt
        else:
            dt = cfg.cfl * float(chords.min()) ** 2
        dt = min(dt, next_sample - curve.t)
        try:
            new = step(curve, field, dt, cfg.kappa_max, min_seg, cfg.reparametrize)
        except BlowupDetected as exc:
            traj.reason = "blowup"
            traj.message = str(exc)
            break
        if abs(new.t - next_sample) <= eps_t:
            new = Curve(new.points, next_sample)
        curve = new
        if not np.all(np.isfinite(curve.points)):
            traj.reason = "blowup"
            traj.message = "non-finite node positions"
            break
        if curve.t >= next_sample - eps_t:
            if cfg.check_intersections and self_intersects(curve):
                traj.reason = "self_intersection"
                sample(curve)
                break
            sample(curve)
            k_sample += 1
            next_sample = sample_time(k_sample)
    if traj.times[-1] != curve.t:
        sample(curve)
    traj.t_end = curve.t
    if traj.reason == "blowup":
        try:
            traj.T_est = estimate_blowup_time(traj)
        except InsufficientData:
            traj.T_est = None
    return traj


# ---------------------------------------------------------------------------
# blowup analysis


def _blowup_window(t, kmax, decades=1.0):
    kfinal = kmax[-1]
    sel = kmax >= kfinal / 10.0 ** decades
    # contiguous tail only
    idx = len(sel)
    while idx > 0 and sel[idx - 1]:
        idx -= 1
    return slice(idx, len(sel))


def estimate_blowup_time(traj, min_samples=10):
    """Fit 1/max|kappa|^2 linearly in t over the last decade of curvature growth
    and return its zero crossing."""
    t = traj.series("t")
    k = traj.series("kappa_max")
    win = _blowup_window(t, k)
    tw, kw = t[win], k[win]
    if tw.size < min_samples:
        raise InsufficientData(f"only {tw.size} samples in the blowup window")
    slope, intercept = np.polyfit(tw, 1.0 / kw ** 2, 1)
    if slope >= 0:
        raise InsufficientData("1/kappa^2 is not decreasing in the blowup window")
    return float(-intercept / slope)


@dataclass(frozen=True)
class SingularityReport:
    kind: Optional[str]
    T_est: Optional[float] = None
    exponent: float = float("nan")  # d log(sqrt(T-t) max|kappa|) / d log(T-t)
    limit: float = float("nan")  # sqrt(T-t) max|kappa| at the last sample
    ratios: np.ndarray = dc_field(default_factory=lambda: np.zeros(0))
    times: np.ndarray = dc_field(default_factory=lambda: np.zeros(0))


def classify_blowup(t, kmax, T_est, min_samples=10, growth_threshold=0.1):
    """Type I / II decision from a (t, max|kappa|) series ending at blowup.

    Over the last decade of curvature growth, ``r = sqrt(T - t) max|kappa|``
    is fitted as a power of (T - t).  An exponent below ``-growth_threshold``
    means r keeps growing as t -> T (type II); otherwise r stays bounded.
    """
    t = np.asarray(t, dtype=float)
    kmax = np.asarray(kmax, dtype=float)
    keep = t < T_est
    t, kmax = t[keep], kmax[keep]
    if t.size == 0:
        raise InsufficientData("no samples before T_est")
    win = _blowup_window(t, kmax)
    tw, kw = t[win], kmax[win]
    if tw.size < min_samples:
        raise InsufficientData(f"only {tw.size} samples in the blowup window")
    r = np.sqrt(T_est - tw) * kw
    expo = float(np.polyfit(np.log(T_est - tw), np.log(r), 1)[0])
    kind = TYPE_II if expo < -growth_threshold else TYPE_I
    return SingularityReport(kind, float(T_est), expo, float(r[-1]), r, tw)


def classify_singularity(traj, T_est=None, **kw):
    if traj.reason != "blowup":
        return SingularityReport(None)
    if T_est is None:
        T_est = traj.T_est if traj.T_est is not None else estimate_blowup_time(traj)
    return classify_blowup(traj.series("t"), traj.series("kappa_max"), T_est, **kw)


def curvature_lower_bound_ratio(traj, T_est=None):
    """min over the blowup window of sqrt(T-t) max|kappa| (reported, not asserted)."""
    rep = classify_singularity(traj, T_est)
    return float(np.min(rep.ratios)) if rep.kind else float("nan")


# ---------------------------------------------------------------------------
# rescalings


@dataclass(frozen=True)
class Type1Rescaling:
    z: np.ndarray
    times: np.ndarray
    curves: list
    sup_radius: np.ndarray


def rescale_type1(traj, p_hat, T):
    """gamma~ = (gamma - p_hat)/sqrt(2(T - t)),  z = -log sqrt(T - t)."""
    p = np.asarray(p_hat, dtype=float)
    zs, ts, curves, sups = [], [], [], []
    for t, c in zip(traj.times, traj.curves):
        if not t < T:
            raise ValueError("T must exceed every snapshot time")
        scale = math.sqrt(2.0 * (T - t))
        pts = (c.points - p) / scale
        z = -math.log(math.sqrt(T - t))
        zs.append(z)
        ts.append(t)
        curves.append(Curve(pts, z))
        sups.append(float(np.max(np.hypot(pts[:, 0], pts[:, 1]))))
    return Type1Rescaling(np.array(zs), np.array(ts), curves, np.array(sups))


@dataclass(frozen=True)
class Type2Rescaling:
    u: np.ndarray
    curves: list
    base_node: int
    t_n: float
    k_n: float
    base_kappa: float
    forcing: object  # callable y -> g_n(y)
    forcing_sup: float


def rescale_type2(traj, x_n, t_n, k_n, field=None):
    """gamma_n = k_n (gamma - gamma(x_n, t_n)),  u = k_n^2 (t - t_n).

    ``t_n`` snaps to the nearest snapshot.  ``base_kappa`` is the curvature
    of the rescaled snapshot at node ``x_n``; it equals 1 when
    ``k_n = |kappa(x_n, t_n)|``.
    """
    if not k_n > 0:
        raise ValueError("k_n must be positive")
    times = np.asarray(traj.times)
    if not times[0] <= t_n <= times[-1]:
        raise ValueError("t_n outside the trajectory")
    j = int(np.argmin(np.abs(times - t_n)))
    t_ref = float(times[j])
    anchor = traj.curves[j].points[x_n].copy()
    us = k_n ** 2 * (times - t_ref)
    curves = [Curve(k_n * (c.points - anchor), u) for c, u in zip(traj.curves, us)]
    base_kappa = float(frenet(curves[j]).kappa[x_n])

    g_n = None
    g_sup = float("nan")
    if field is not None:
        def g_n(y, _a=anchor, _k=k_n, _f=field):
            y = np.asarray(y, dtype=float)
            return forcing_mod.evaluate(_f, y[..., 0] / _k + _a[0], y[..., 1] / _k + _a[1]) / _k
        g_sup = forcing_mod.sup_norm(field) / k_n
    return Type2Rescaling(us, curves, x_n, t_ref, float(k_n), base_kappa, g_n, g_sup)


# ---------------------------------------------------------------------------
# embeddedness


def eta(curve, chunk=512):
    """min over node pairs of chord / shorter arc.  Returns (ratio, (i, j))."""
    pts = curve.points if isinstance(curve, Curve) else np.asarray(curve, dtype=float)
    n = pts.shape[0]
    seg = np.linalg.norm(np.roll(pts, -1, axis=0) - pts, axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)[:-1]])
    L = float(seg.sum())
    best = np.inf
    pair = (0, 1)
    for start in range(0, n, chunk):
        i = np.arange(start, min(start + chunk, n))
        d = pts[i, None, :] - pts[None, :, :]
        chord = np.hypot(d[..., 0], d[..., 1])
        arc = np.abs(s[i, None] - s[None, :])
        arc = np.minimum(arc, L - arc)
        with np.errstate(invalid="ignore", divide="ignore"):
            ratio = np.where(arc > 0, chord / arc, np.inf)
        k = int(np.argmin(ratio))
        r = ratio.flat[k]
        if r < best:
            best = float(r)
            pair = (int(i[k // n]), int(k % n))
    a, b = sorted(pair)
    return best, (a, b)


def lifespan_lower_bound(eta0, sup_g):
    """2 eta_bar^2 / ((1 + 4 sqrt 2 / pi)^2 |g|^2),  eta_bar = min(eta0, sqrt 2 / 2)."""
    eta_bar = min(eta0, math.sqrt(2.0) / 2.0)
    if sup_g == 0:
        return math.inf
    return 2.0 * eta_bar ** 2 / ((1.0 + 4.0 * math.sqrt(2.0) / math.pi) ** 2 * sup_g ** 2)


def self_intersects(curve):
    """True if two non-adjacent edges of the closed polyline meet."""
    pts = curve.points if isinstance(curve, Curve) else np.asarray(curve, dtype=float)
    n = pts.shape[0]
    a = pts
    b = np.roll(pts, -1, axis=0)
    lo = np.minimum(a, b)
    hi = np.maximum(a, b)
    overlap = ((lo[:, None, 0] <= hi[None, :, 0]) & (lo[None, :, 0] <= hi[:, None, 0])
               & (lo[:, None, 1] <= hi[None, :, 1]) & (lo[None, :, 1] <= hi[:, None, 1]))
    i, j = np.nonzero(np.triu(overlap, k=2))
    keep = ~((i == 0) & (j == n - 1))
    i, j = i[keep], j[keep]
    if i.size == 0:
        return False
    p, p2, q, q2 = a[i], b[i], a[j], b[j]

    def orient(u, v, w):
        return np.sign((v[:, 0] - u[:, 0]) * (w[:, 1] - u[:, 1]) - (v[:, 1] - u[:, 1]) * (w[:, 0] - u[:, 0]))

    o1, o2 = orient(p, p2, q), orient(p, p2, q2)
    o3, o4 = orient(q, q2, p), orient(q, q2, p2)
    proper = (o1 * o2 < 0) & (o3 * o4 < 0)
    # touching / collinear cases: bounding boxes already overlap
    touch = (o1 == 0) | (o2 == 0) | (o3 == 0) | (o4 == 0)
    return bool(np.any(proper | (touch & ((o1 * o2 <= 0) & (o3 * o4 <= 0)))))
