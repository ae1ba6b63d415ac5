"""Monitored functionals and residual checks for curve trajectories."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields
from typing import Optional

import numpy as np

from . import curve_flow
from . import forcing as forcing_mod
from .curve_flow import _frenet_arrays


@dataclass(frozen=True)
class DiagnosticsRecord:
    t: float
    length: float
    kappa_max: float
    kappa2: float  # int kappa^2 ds
    abs_kappa: float  # int |kappa| ds
    eta: float
    g_sup_curve: float  # max |g| over the nodes
    density: Optional[float] = None
    res_kappa: Optional[float] = None
    res_metric: Optional[float] = None

    @classmethod
    def columns(cls):
        return [f.name for f in fields(cls)]

    def as_dict(self):
        return asdict(self)


def record(curve, field, p0=None, T=None, residual_dt=None, with_eta=True):
    """Collect the scalar diagnostics of one snapshot.

    The Gaussian density is filled when ``p0`` and ``T`` are given, the two
    evolution residuals when ``residual_dt`` is given.
    """
    pts = curve.points
    _, _, kappa, _, ds, chords = _frenet_arrays(pts)
    g = forcing_mod.evaluate(field, pts[:, 0], pts[:, 1])
    density = None
    if p0 is not None and T is not None and curve.t < T:
        density = gaussian_density(curve, p0, T)
    res_k = res_m = None
    if residual_dt is not None:
        res_k = kappa_evolution_residual(curve, field, residual_dt)
        res_m = metric_evolution_residual(curve, field, residual_dt)
    return DiagnosticsRecord(
        t=float(curve.t),
        length=float(chords.sum()),
        kappa_max=float(np.max(np.abs(kappa))),
        kappa2=float(np.sum(kappa ** 2 * ds)),
        abs_kappa=float(np.sum(np.abs(kappa) * ds)),
        eta=curve_flow.eta(curve)[0] if with_eta else float("nan"),
        g_sup_curve=float(np.max(np.abs(g))),
        density=density,
        res_kappa=res_k,
        res_metric=res_m,
    )


# ---------------------------------------------------------------------------
# Gaussian densities


def gaussian_density(curve, p0, T):
    """int exp(-|gamma - p0|^2 / 4(T-t)) / sqrt(4 pi (T-t)) ds."""
    tau = T - curve.t
    if not tau > 0:
        raise ValueError("density needs t < T")
    pts = curve.points
    _, _, _, _, ds, _ = _frenet_arrays(pts)
    d2 = np.sum((pts - np.asarray(p0, dtype=float)) ** 2, axis=1)
    return float(np.sum(np.exp(-d2 / (4 * tau)) * ds) / math.sqrt(4 * math.pi * tau))


def rescaled_density(curve):
    """F = int exp(-|gamma~|^2 / 2) ds~ on an already rescaled curve."""
    pts = curve.points
    _, _, _, _, ds, _ = _frenet_arrays(pts)
    return float(np.sum(np.exp(-0.5 * np.sum(pts ** 2, axis=1)) * ds))


def local_mass(curve, radius):
    """Length of a rescaled curve inside the ball B(0, radius)."""
    pts = curve.points
    _, _, _, _, ds, _ = _frenet_arrays(pts)
    inside = np.sum(pts ** 2, axis=1) <= radius ** 2
    return float(np.sum(ds[inside]))


@dataclass(frozen=True)
class MonotonicityReport:
    z: np.ndarray
    F: np.ndarray
    dF: np.ndarray  # centred differences at interior samples
    bound: np.ndarray  # (|g|^2/2) e^{-2z} F at interior samples
    worst: float  # max of dF - bound; <= 0 means the inequality holds
    integrated_worst: float  # max of F(z) - e^{|g|^2 T/4} F(z0)
    local_mass_worst: float  # max over z of mass in B(0, R) - e^{R^2/2} F(z)


def monotonicity_check(traj, p0, T, sup_g, radius=1.0):
    """Check the rescaled monotonicity inequality along a trajectory.

    Returns the worst signed violations of the differential form, its
    integrated form, and the local length bound in B(0, radius).
    """
    resc = curve_flow.rescale_type1(traj, p0, T)
    if len(resc.curves) < 3:
        raise ValueError("need at least 3 samples before T")
    F = np.array([rescaled_density(c) for c in resc.curves])
    z = resc.z
    dF = (F[2:] - F[:-2]) / (z[2:] - z[:-2])
    bound = 0.5 * sup_g ** 2 * np.exp(-2 * z[1:-1]) * F[1:-1]
    # integrating from the first sample: F(z) <= exp(|g|^2 (T - t0) / 4) F(z0),
    # which is exp(|g|^2 T / 4) F(-log sqrt T) when the run starts at t0 = 0
    integ = F - math.exp(sup_g ** 2 * (T - resc.times[0]) / 4.0) * F[0]
    mass = np.array([local_mass(c, radius) for c in resc.curves])
    lm = mass - math.exp(radius ** 2 / 2.0) * F
    return MonotonicityReport(z, F, dF, bound, float(np.max(dF - bound)),
                              float(np.max(integ)), float(np.max(lm)))


def density_sensitivity(traj, p0, T, rel=0.1):
    """Densities of every snapshot for T (1 - rel), T, T (1 + rel)."""
    rows = []
    for t, c in zip(traj.times, traj.curves):
        row = [t]
        for TT in (T * (1 - rel), T, T * (1 + rel)):
            row.append(gaussian_density(c, p0, TT) if t < TT else float("nan"))
        rows.append(row)
    return np.array(rows)


def shrinker_residual(curve):
    """Discrete L^2 norm of kappa + gamma . nu over the curve."""
    pts = curve.points
    _, nu, kappa, _, ds, _ = _frenet_arrays(pts)
    r = kappa + np.einsum("ij,ij->i", pts, nu)
    return float(math.sqrt(np.sum(r ** 2 * ds)))


# ---------------------------------------------------------------------------
# evolution identities


def _second_arclength_derivative(f, chords):
    lf = chords
    lb = np.roll(chords, 1)
    fwd = (np.roll(f, -1) - f) / lf
    bwd = (f - np.roll(f, 1)) / lb
    return (fwd - bwd) / (0.5 * (lf + lb))


def kappa_evolution_rhs(curve, field):
    """(kappa + g)_ss + kappa^2 (kappa + g) at the nodes."""
    pts = curve.points
    _, _, kappa, _, _, chords = _frenet_arrays(pts)
    f = kappa + forcing_mod.evaluate(field, pts[:, 0], pts[:, 1])
    return _second_arclength_derivative(f, chords) + kappa ** 2 * f


def _advance(curve, field, dt, cfl=0.25):
    """Evolve by ``dt`` in equal Heun sub-steps no longer than cfl min(ds)^2."""
    _, _, _, _, _, chords = _frenet_arrays(curve.points)
    nsub = max(1, int(math.ceil(dt / (cfl * float(chords.min()) ** 2) - 1e-9)))
    h = dt / nsub
    out = curve
    for _ in range(nsub):
        out = curve_flow.step(out, field, h)
    return out


def kappa_evolution_residual(curve, field, dt):
    """|| (kappa(t+dt) - kappa(t))/dt - ((kappa+g)_ss + kappa^2 (kappa+g)) ||_L2

    The difference quotient spans a window ``dt`` integrated with stable
    sub-steps, so the residual is first order in ``dt`` down to an O(ds^2)
    floor.
    """
    _, _, k0, _, ds, _ = _frenet_arrays(curve.points)
    new = _advance(curve, field, dt)
    _, _, k1, *_ = _frenet_arrays(new.points)
    r = (k1 - k0) / dt - kappa_evolution_rhs(curve, field)
    return float(math.sqrt(np.sum(r ** 2 * ds)))


def metric_evolution_residual(curve, field, dt):
    """|| (w(t+dt) - w(t))/dt + kappa (kappa + g) ||_L2 with w = log|gamma_x|."""
    pts = curve.points
    _, _, k0, m0, ds, _ = _frenet_arrays(pts)
    g = forcing_mod.evaluate(field, pts[:, 0], pts[:, 1])
    new = _advance(curve, field, dt)
    _, _, _, m1, _, _ = _frenet_arrays(new.points)
    r = (np.log(m1) - np.log(m0)) / dt + k0 * (k0 + g)
    return float(math.sqrt(np.sum(r ** 2 * ds)))


# ---------------------------------------------------------------------------
# length and curvature estimates along a run


def _trapz(y, x):
    y = np.asarray(y)
    x = np.asarray(x)
    return float(np.sum(0.5 * (y[1:] + y[:-1]) * np.diff(x)))


@dataclass(frozen=True)
class EstimateReport:
    length_ratio_max: float  # max_t L(t) / (L0 exp(|g|^2 t / 2))
    curvature_energy: float  # int_0^T int kappa^2 ds dt
    exp_bound: float  # 2 L0 (exp(|g|^2 T/2) - 1) + |g|^2 T
    balance_bound: float  # 2 (L0 - L_T) + |g|^2 int_0^T L dt
    corrected_exp_bound: float  # 2 L0 exp(|g|^2 T/2), the balance bound after Gronwall
    T: float


def length_curvature_estimates(traj, sup_g):
    t = traj.series("t")
    L = traj.series("length")
    k2 = traj.series("kappa2")
    L0 = L[0]
    T = float(t[-1] - t[0])
    ratio = L / (L0 * np.exp(0.5 * sup_g ** 2 * (t - t[0])))
    energy = _trapz(k2, t)
    exp_b = 2 * L0 * (math.exp(0.5 * sup_g ** 2 * T) - 1.0) + sup_g ** 2 * T
    balance = 2 * (L0 - L[-1]) + sup_g ** 2 * _trapz(L, t)
    return EstimateReport(float(ratio.max()), energy, exp_b, balance,
                          2 * L0 * math.exp(0.5 * sup_g ** 2 * T), T)


def total_abs_curvature_check(traj, field, grid=256):
    """Worst of d/dt int|kappa| ds - (|grad g| + |D^2 g|) L(t) over the history.

    The time derivative is a centred difference of the per-step series.
    """
    t = traj.series("t")
    a = traj.series("abs_kappa")
    L = traj.series("length")
    gsup, hsup = forcing_mod.derivative_sup_norms(field, grid)
    rate = (a[2:] - a[:-2]) / (t[2:] - t[:-2])
    return float(np.max(rate - (gsup + hsup) * L[1:-1]))
