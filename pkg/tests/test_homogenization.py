import json
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from hetflow import forcing as F
from hetflow import graph_flow as G
from hetflow import homogenization as H
from hetflow.errors import AmbiguousPinning, FitDegenerate
from hetflow.forcing import Direction, Slope

import oracles


# --- eps handling ----------------------------------------------------------------


def test_eps_to_m():
    assert H.eps_to_m(0.25) == 4
    assert H.eps_to_m(Fraction(1, 8)) == 8
    for bad in (0.3, 0.5 + 1e-9, 1.0, -0.25, Fraction(2, 7)):
        with pytest.raises(ValueError):
            H.eps_to_m(bad)


def test_sweep_config_validation():
    init = lambda n: G.constant_state(0.0, n)
    with pytest.raises(ValueError):
        H.EpsSweepConfig((0.125, 0.25), F.constant(1.0), init)
    with pytest.raises(ValueError):
        H.EpsSweepConfig((0.25,), F.constant(1.0), init, nodes_per_cell=16)
    with pytest.raises(ValueError):
        H.EpsSweepConfig((0.3,), F.constant(1.0), init)
    cfg = H.EpsSweepConfig((0.25, 0.125), F.constant(1.0), init)
    assert cfg.n_for(0.125) == 256


# --- effective speed ---------------------------------------------------------------


@pytest.mark.parametrize("slope", [Slope.rational(0), Slope.rational(1, 2), Slope.rational(-3),
                                   Slope.irrational(math.pi)])
def test_constant_field_speed(slope):
    assert H.effective_c(F.constant(1.7), slope).c == pytest.approx(1.7, abs=1e-12)


def test_closed_form_harmonic_mean():
    e = H.effective_c(F.sin_y(1.0, 2.0), Slope.rational(0))
    assert e.branch == H.BRANCH_HARMONIC and not e.pinned
    assert e.c == pytest.approx(oracles.SQRT3, abs=1e-6)
    ref = 1.0 / integrate.quad(lambda s: 1.0 / (2 + math.sin(2 * math.pi * s)), 0, 1,
                               epsabs=1e-14)[0]
    assert e.c == pytest.approx(ref, abs=1e-10)
    assert e.min_abs_G == pytest.approx(1.0, abs=1e-9)


def test_pinned_exact_zero():
    e = H.effective_c(F.sin_y(), Slope.rational(0))
    assert e.pinned and e.c == 0.0 and e.branch == H.BRANCH_ZERO


def test_pinned_by_sign_change_between_samples():
    # G(s) = 0.3 + sin(2 pi s) changes sign away from the sample grid
    e = H.effective_c(F.sin_y(1.0, 0.3), Slope.rational(0), samples=16)
    assert e.pinned and e.c == 0.0
    assert 0.3 + math.sin(2 * math.pi * e.zero_at) == pytest.approx(0.0, abs=1e-10)


def test_grazing_zero_is_ambiguous():
    with pytest.raises(AmbiguousPinning):
        H.effective_c(F.sin_y(1.0, 1.0 + 5e-8), Slope.rational(0))


def test_grazing_below_tolerance_pins():
    e = H.effective_c(F.sin_y(1.0, 1.0 + 1e-9), Slope.rational(0))
    assert e.pinned and e.c == 0.0


def test_irrational_torus_mean():
    g = F.trig(0.35, [(1.0, 1, 1, 0.4), (0.5, 0, 2, 0.0)])
    e = H.effective_c(g, Slope.irrational(math.sqrt(2)))
    assert e.branch == H.BRANCH_TORUS
    assert e.c == pytest.approx(0.35, abs=1e-8)


def test_negative_mean_keeps_sign():
    e = H.effective_c(F.sin_y(1.0, -2.0), Slope.rational(0))
    assert e.c == pytest.approx(-oracles.SQRT3, abs=1e-6)


def test_effective_c_requires_slope():
    with pytest.raises(TypeError):
        H.effective_c(F.constant(1.0), 0.0)


@given(st.integers(0, 2 ** 31 - 1), st.sampled_from([(1, 1), (1, 2), (-2, 3), (3, 1)]))
@settings(max_examples=20)
def test_x_only_step_fields_give_mean(seed, qr):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(2, 6))
    b = np.concatenate([[0.0], np.sort(rng.uniform(0.05, 0.95, k - 1)), [1.0]])
    vals = rng.uniform(-3, 3, k)
    g = F.piecewise_x(b, vals)
    mean = F.torus_mean(g)
    if abs(mean) < 0.05:
        return
    for sl in (Slope.rational(*qr), Slope.irrational(1 + math.sqrt(2))):
        e = H.effective_c(g, sl)
        assert e.c == pytest.approx(mean, abs=1e-8)
        assert math.copysign(1.0, e.c) == math.copysign(1.0, mean)


def test_cbar_harmonic_mean_diagonal():
    g = F.trig(2.0, [(1.0, 1, 1, 0.0)])  # 2 + sin(2 pi (x + y))
    e = H.cbar(g, Direction.lattice(1, 1))
    # G_p(s) = 2 + sin(2 pi sqrt(2) s) over the period 1/sqrt(2)
    assert e.c == pytest.approx(oracles.SQRT3, abs=1e-6)
    assert H.cbar(g, Direction.lattice(1, -1)).c == pytest.approx(2.0, abs=1e-9)


def test_cbar_cases():
    assert H.cbar(F.constant(0.9), Direction.lattice(2, 5)).c == pytest.approx(0.9)
    assert H.cbar(F.sin_y(), Direction.lattice(0, 1)).pinned
    assert H.cbar(F.sin_y(1.0, 3.0), Direction.irrational(1.0, math.sqrt(3))).c == 3.0
    with pytest.raises(TypeError):
        H.cbar(F.constant(1.0), (0, 1))


def test_branch_soundness():
    for g, sl in [(F.sin_y(1.0, 2.0), Slope.rational(0)), (F.sin_y(), Slope.rational(0)),
                  (F.product(), Slope.rational(1)), (F.sin_x(1.0, 0.5), Slope.rational(1, 2))]:
        e = H.effective_c(g, sl)
        if e.pinned:
            assert e.c == 0.0
        else:
            assert np.min(np.abs(e.G)) > 1e-8
            assert np.sign(e.c) == np.sign(e.G[0])


# --- discontinuity scan ---------------------------------------------------------------


SLOPES = [Slope.rational(0), Slope.rational(1, 3), Slope.irrational(math.sqrt(2)),
          Slope.irrational((1 + math.sqrt(5)) / 2)]


def test_scan_jump():
    rows, flagged, plateau = H.discontinuity_scan(F.sin_y(1.0, 2.0), SLOPES)
    assert plateau == 2.0
    assert rows[0].c == pytest.approx(oracles.SQRT3, abs=1e-6)
    assert rows[0].jump == pytest.approx(-oracles.JUMP_2_MINUS_SQRT3, abs=1e-6)
    assert all(r.c == 2.0 for r in rows[2:])
    assert rows[0] in flagged and rows[2] not in flagged


def test_scan_constant_no_jumps():
    rows, flagged, _ = H.discontinuity_scan(F.constant(1.2), SLOPES)
    assert flagged == []


def test_scan_pinned_no_jump():
    rows, flagged, _ = H.discontinuity_scan(F.sin_y(), SLOPES)
    assert rows[0].branch == H.BRANCH_ZERO and rows[2].branch == H.BRANCH_TORUS
    assert all(r.c == 0.0 for r in rows)
    assert flagged == []


# --- eps problems -----------------------------------------------------------------------


def test_solve_eps_constant_field_is_eps_independent():
    cfg = H.EpsSweepConfig((0.25, 0.125), F.constant(1.0), lambda n: G.constant_state(0.0, n),
                           T=0.05)
    for e in cfg.eps:
        tr = H.solve_eps(cfg, e)
        assert np.max(np.abs(tr.final.u - 0.05)) < 1e-12


def test_solve_eps_oscillation_amplitude():
    cfg = H.EpsSweepConfig((0.125,), F.sin_x(1.0, 1.0), lambda n: G.constant_state(0.0, n),
                           T=0.1)
    tr = H.solve_eps(cfg, 0.125)
    osc = np.ptp(tr.final.u)
    assert tr.reason == "max_time"
    assert 0 < osc < 0.125
    assert float(np.mean(tr.final.u)) == pytest.approx(0.1, rel=0.05)


def test_limit_solve_cases():
    cfg = G.GraphSolverConfig(t_max=0.05)
    flat = H.limit_solve(1.0, G.constant_state(0.0, 32), cfg)
    assert np.max(np.abs(flat.final.u - 0.05)) < 1e-12
    decay = H.limit_solve(0.0, G.fourier_state([(1, 0.0, 0.1)], 64), cfg)
    assert np.max(np.abs(decay.final.u)) < 0.1


def test_shift_estimate_synthetic():
    # u = 2.4 x: |u(x) - u(x + N eps)| = 2.4 N eps <= 3 N eps
    s = G.linear_state(2.4, 64)
    traj = G.GraphTrajectory([0.0], [s], [])
    assert H.shift_estimate_worst(traj, 0.25, 2.4) == pytest.approx(-0.6 * 0.25)
    with pytest.raises(ValueError):
        H.shift_estimate_worst(G.GraphTrajectory([0.0], [G.linear_state(1.0, 30)], []), 0.25, 1.0)


def test_sweep_constant_field():
    cfg = H.EpsSweepConfig((0.5, 0.25), F.constant(1.0), lambda n: G.fourier_state([(1, 0, 0.1)], n),
                           T=0.02, sample_interval=0.01)
    rep = H.sweep(cfg)
    assert max(max(d) for d in rep.distances) <= 1e-6
    js = rep.to_json()
    json.dumps(js)
    assert js["eps"] == [0.5, 0.25]


def test_sweep_vertical_shift_invariance():
    g = F.square_wave(0.5, 1.5)
    mk = lambda c: H.EpsSweepConfig(
        (0.5, 0.25), g, lambda n: G.fourier_state([(1, 0, 0.1)], n, offset=c), T=0.02,
        sample_interval=0.01)
    a = H.sweep(mk(0.0))
    b = H.sweep(mk(3.0))
    assert np.allclose(a.final_distances, b.final_distances, atol=1e-10)
    assert all(w <= 0 for w in a.shift_estimate_worst)


def test_sweep_parallel_matches_serial():
    cfg = H.EpsSweepConfig((0.5, 0.25), F.square_wave(0.5, 1.5),
                           lambda n: G.fourier_state([(1, 0, 0.1)], n), T=0.02)
    assert H.sweep(cfg, jobs=2).final_distances == H.sweep(cfg, jobs=1).final_distances


def test_sweep_y_dependent_skips_limit():
    cfg = H.EpsSweepConfig((0.5,), F.sin_y(1.0, 2.0), lambda n: G.constant_state(0.0, n), T=0.01)
    rep = H.sweep(cfg)
    assert not rep.limit_compared and rep.distances == []


# --- wave speeds ------------------------------------------------------------------------


def test_wave_speed_constant_exact():
    w = H.measure_wave_speed(F.constant(1.3), 0.25, Slope.rational(0))
    assert w.c == pytest.approx(1.3, abs=1e-10)
    assert w.r2 == pytest.approx(1.0)


def test_wave_speed_constant_sloped():
    w = H.measure_wave_speed(F.constant(0.7), 0.25, Slope.rational(1), T=0.2)
    assert w.c == pytest.approx(0.7, abs=1e-8)


def test_wave_speed_harmonic():
    w = H.measure_wave_speed(F.sin_y(1.0, 2.0), 0.25, Slope.rational(0))
    assert w.c == pytest.approx(oracles.SQRT3, rel=0.02)
    assert not w.pinned


def test_wave_speed_pinned():
    w = H.measure_wave_speed(F.sin_y(), 0.25, Slope.rational(0), T=5.0)
    assert w.pinned
    assert w.max_excursion <= 0.25


def test_wave_speed_fit_degenerate():
    with pytest.raises(FitDegenerate):
        H.measure_wave_speed(F.sin_y(1.0, 2.0), 0.25, Slope.rational(0), T=0.3)


def test_wave_speed_validation():
    with pytest.raises(ValueError):
        H.measure_wave_speed(F.constant(1.0), 0.25, Slope.irrational(1.5))
    with pytest.raises(ValueError):
        H.measure_wave_speed(F.constant(1.0), 0.25, Slope.rational(1, 3))
