import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from hetflow import forcing as F
from hetflow.errors import QuadratureError
from hetflow.forcing import Direction, Slope

import oracles


def random_step(rng, m):
    b = np.concatenate([[0.0], np.sort(rng.uniform(0.02, 0.98, m - 1)), [1.0]])
    b = np.unique(b)
    return F.piecewise_x(b, rng.uniform(-3, 3, b.size - 1))


# --- evaluation -------------------------------------------------------------


def test_constant_value():
    assert F.evaluate(F.constant(2.0), 0.3, 7.9) == 2.0


def test_sin_x_wraps():
    assert F.evaluate(F.sin_x(), 1.25, 0.0) == pytest.approx(1.0, abs=1e-15)


def test_step_lookup():
    g = F.piecewise_x([0.0, 0.5, 1.0], [1.0, 3.0])
    assert F.evaluate(g, 0.75, -2.2) == 3.0
    assert F.evaluate(g, 0.5, 0.0) == 3.0  # left-closed intervals
    assert F.evaluate(g, -0.5, 0.0) == 3.0


def test_vectorised_shapes():
    g = F.product()
    x = np.linspace(0, 1, 7)
    assert F.evaluate(g, x, 0.2).shape == (7,)
    assert F.evaluate(g, x[:, None], x[None, :]).shape == (7, 7)
    assert isinstance(F.evaluate(g, 0.1, 0.2), float)


def test_product_matches_definition():
    g = F.product(1.5)
    x, y = 0.13, 0.71
    assert F.evaluate(g, x, y) == pytest.approx(
        1.5 * math.sin(2 * math.pi * x) * math.cos(2 * math.pi * y), abs=1e-14)


def test_constructor_validation():
    with pytest.raises(ValueError):
        F.piecewise_x([0.0, 0.6, 0.5, 1.0], [1, 2, 3])
    with pytest.raises(ValueError):
        F.piecewise_x([0.1, 1.0], [1])
    with pytest.raises(ValueError):
        F.trig(0, [(1.0, 0.5, 0, 0)])
    with pytest.raises(ValueError):
        F.offset_sin(1.0, axis="z")


@given(st.floats(-5, 5), st.floats(-5, 5), st.integers(-4, 4), st.integers(-4, 4))
def test_periodicity_step_exact(x, y, k, l):
    g = F.piecewise_x([0.0, 0.3, 0.55, 1.0], [1.0, -2.0, 0.5])
    # exact up to the wrap of x itself
    assert F.evaluate(g, x + k, y + l) == F.evaluate(g, x, y) or \
        abs(((x + k) % 1.0) - (x % 1.0)) > 0


@given(st.floats(-5, 5), st.floats(-5, 5), st.integers(-4, 4), st.integers(-4, 4))
def test_periodicity_smooth(x, y, k, l):
    g = F.trig(0.3, [(0.7, 1, 2, 0.1), (0.4, -3, 1, 1.3)])
    assert F.evaluate(g, x + k, y + l) == pytest.approx(F.evaluate(g, x, y), abs=1e-12)


def test_periodicity_random_1000():
    rng = np.random.default_rng(3)
    x, y = rng.uniform(-3, 3, (2, 1000))
    k, l = rng.integers(-5, 6, (2, 1000))
    step = F.piecewise_x([0.0, 0.25, 0.5, 1.0], [1.0, 3.0, -1.0])
    xw = np.mod(x, 1.0)
    # shift by whole periods after wrapping so the float wrap is exact
    assert np.array_equal(F.evaluate(step, xw + k, y + l), F.evaluate(step, xw, y))
    smooth = F.product()
    assert np.max(np.abs(F.evaluate(smooth, x + k, y + l) - F.evaluate(smooth, x, y))) < 1e-12


# --- sup norm ---------------------------------------------------------------


def test_sup_norm_constant():
    assert F.sup_norm(F.constant(2.0)) == 2.0
    assert F.sup_norm(F.constant(-3.0)) == 3.0


def test_sup_norm_step_exact():
    g = F.piecewise_x([0.0, 0.2, 0.7, 1.0], [1.0, 3.0, -4.0])
    assert F.sup_norm(g) == 4.0


def test_sup_norm_offset_sine():
    assert F.sup_norm(F.sin_y(1.0, 2.0)) == pytest.approx(3.0, abs=1e-6)


def test_sup_norm_dense_oracle():
    # 10^6-point random sample never exceeds the reported grid bound by more
    # than the O(grid^-2) sampling gap
    g = F.trig(0.1, [(0.6, 1, 1, 0.3), (0.5, 2, -1, 1.1)])
    bound = F.sup_norm(g, grid=1024)
    rng = np.random.default_rng(0)
    x, y = rng.uniform(0, 1, (2, 10 ** 6))
    sample = float(np.max(np.abs(F.evaluate(g, x, y))))
    assert sample <= bound + 1e-4
    assert bound <= sample + 1e-3


def test_derivative_sup_norms_trig():
    g = F.sin_x(1.0)
    gs, hs = F.derivative_sup_norms(g, grid=256)
    assert gs == pytest.approx(2 * math.pi, rel=1e-6)
    assert hs == pytest.approx(4 * math.pi ** 2, rel=1e-6)


def test_gradient_rejected_for_steps():
    with pytest.raises(ValueError):
        F.gradient(F.square_wave(0, 1), 0.1, 0.1)


def test_sampler_gradient_fd_matches_analytic():
    fn = lambda x, y: np.sin(2 * np.pi * x) * np.cos(2 * np.pi * y)
    g = F.from_function(fn)
    gx, gy = F.gradient(g, 0.2, 0.35)
    ax, ay = F.gradient(F.product(), 0.2, 0.35)
    assert gx == pytest.approx(ax, abs=1e-6)
    assert gy == pytest.approx(ay, abs=1e-6)


# --- means and mollification --------------------------------------------------


def test_torus_means():
    assert F.torus_mean(F.sin_y(1.0, 2.0)) == 2.0
    assert F.torus_mean(F.square_wave(0.5, 1.5)) == pytest.approx(1.0, abs=1e-15)
    g = F.from_function(lambda x, y: 1.0 + np.sin(2 * np.pi * x) ** 2, x_only=True)
    assert F.torus_mean(g) == pytest.approx(1.5, abs=1e-12)


def test_mollify_constant_unchanged():
    g = F.mollify(F.constant(1.7), 0.3)
    x = np.linspace(0, 1, 11)
    assert np.allclose(F.evaluate(g, x, x), 1.7, atol=1e-15)


def test_mollify_rejects_bad_width():
    with pytest.raises(ValueError):
        F.mollify(F.constant(1.0), 0.0)
    with pytest.raises(ValueError):
        F.mollify(F.constant(1.0), 1.5)


def test_mollify_step_preserves_mean():
    g = F.piecewise_x([0.0, 0.3, 1.0], [1.0, 2.0 + 0.3 / 0.7])
    m = F.mollify(g, 0.05)
    assert F.torus_mean(g) == pytest.approx(2.0, abs=1e-12)
    # mean of the mollified field by an independent fine midpoint rule
    x = (np.arange(200000) + 0.5) / 200000
    assert float(np.mean(F.evaluate(m, x, 0.0))) == pytest.approx(2.0, abs=1e-8)


def test_mollify_step_is_smooth_and_bounded():
    g = F.square_wave(-1.0, 2.0)
    m = F.mollify(g, 0.1)
    x = np.linspace(0, 1, 20001)
    v = F.evaluate(m, x, 0.0)
    assert v.max() <= 2.0 + 1e-12 and v.min() >= -1.0 - 1e-12
    # away from the jumps by more than delta/2 the field is untouched
    far = (np.abs(x - 0.5) > 0.051) & (x > 0.051) & (x < 0.949)
    assert np.array_equal(v[far], F.evaluate(g, x[far], 0.0))
    assert np.max(np.abs(np.diff(v))) < 3.0 * 3 / (0.1 * 20000) * 3


def test_mollify_trig_second_order():
    g = F.product()
    x, y = 0.17, 0.41
    g0 = F.evaluate(g, x, y)
    errs = [abs(F.evaluate(F.mollify(g, d), x, y) - g0) for d in (0.2, 0.1, 0.05)]
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.1)
    assert errs[1] / errs[2] == pytest.approx(4.0, rel=0.1)


def test_mollify_sampler_matches_trig():
    fn = lambda x, y: np.sin(2 * np.pi * x) * np.cos(2 * np.pi * y)
    ms = F.mollify(F.from_function(fn), 0.1, quad_points=64)
    mt = F.mollify(F.product(), 0.1)
    pts = np.array([0.1, 0.33, 0.8])
    assert np.allclose(F.evaluate(ms, pts, pts[::-1]), F.evaluate(mt, pts, pts[::-1]), atol=1e-4)


def test_mollify_sampler_needs_quadrature():
    g = F.from_function(lambda x, y: x * 0 + 1.0)
    with pytest.raises(ValueError):
        F.mollify(g, 0.1, quad_points=4)


@given(st.floats(0.01, 1.0))
def test_mollify_contracts_sup(delta):
    g = F.piecewise_x([0.0, 0.2, 0.45, 1.0], [1.0, -2.5, 0.7])
    m = F.mollify(g, delta)
    x = np.linspace(0, 1, 4001)
    assert float(np.max(np.abs(F.evaluate(m, x, 0.0)))) <= F.sup_norm(g) + 1e-12
    assert F.torus_mean(m) == pytest.approx(F.torus_mean(g), abs=1e-8)


def test_bump_unit_mass():
    z = np.linspace(-0.05, 0.05, 200001)
    assert np.trapezoid(F.bump(z, 0.1), z) == pytest.approx(1.0, abs=1e-9)
    assert F.bump_cdf(-0.05, 0.1) == 0.0 and F.bump_cdf(0.05, 0.1) == 1.0
    assert F.bump_cdf(0.0, 0.1) == pytest.approx(0.5, abs=1e-12)


# --- line averages ------------------------------------------------------------


def test_slope_average_examples():
    g = F.sin_y(1.0, 2.0)
    assert F.slope_average(g, Slope.rational(0), 0.25) == pytest.approx(3.0, abs=1e-12)
    c = F.constant(1.3)
    for sl in (Slope.rational(0), Slope.rational(2, 3), Slope.irrational(math.sqrt(2))):
        assert F.slope_average(c, sl, 0.6) == pytest.approx(1.3, abs=1e-14)
    assert F.slope_average(F.sin_x(), Slope.rational(0), 0.37) == pytest.approx(0.0, abs=1e-14)


def test_slope_average_requires_declared_slope():
    with pytest.raises(TypeError):
        F.slope_average(F.constant(1.0), 0.5, 0.0)


def test_slope_average_irrational_is_torus_mean():
    g = F.trig(0.4, [(1.0, 1, -1, 0.2)])
    assert F.slope_average(g, Slope.irrational(1.0), 0.3) == 0.4


@pytest.mark.parametrize("q,r", [(0, 1), (1, 1), (1, 2), (2, 3), (-3, 2)])
def test_slope_average_vs_riemann(q, r):
    g = F.trig(0.2, [(1.0, 1, 1, 0.3), (0.5, 2, -1, 0.0), (0.3, 3, 2, 1.0), (0.7, 0, 1, 0.5)])
    for s in (0.0, 0.31, 0.77):
        ref = oracles.line_average_riemann(lambda x, y: F.evaluate(g, x, y), q, r, s)
        assert F.slope_average(g, Slope.rational(q, r), s) == pytest.approx(ref, abs=1e-6)


def test_slope_average_vectorised():
    g = F.sin_y(1.0, 2.0)
    s = np.array([0.0, 0.25, 0.75])
    assert np.allclose(F.slope_average(g, Slope.rational(0), s), [2.0, 3.0, 1.0], atol=1e-12)


def test_slope_average_quadrature_failure():
    g = F.from_function(lambda x, y: np.where(y % 1.0 < 0.5, 1.0, 0.0) * np.sqrt(np.abs(x) + 0.1))
    with pytest.raises(QuadratureError):
        F.slope_average(g, Slope.rational(1, 1), 0.123, tol=1e-15)


def test_normal_average_examples():
    g = F.piecewise_x([0.0, 0.4, 1.0], [2.0, -1.0])
    for s in (0.0, 0.2, 0.9):
        assert F.normal_average(g, Direction.lattice(0, 1), s) == pytest.approx(F.torus_mean(g))
    assert F.normal_average(F.constant(0.7), Direction.lattice(2, 3), 0.4) == pytest.approx(0.7)
    phi = (1 + math.sqrt(5)) / 2
    h = F.trig(0.25, [(1.0, 1, 2, 0.0)])
    assert F.normal_average(h, Direction.irrational(phi, 1.0), 0.3) == 0.25


def test_normal_average_horizontal_direction_samples_x():
    # p = (1, 0): lines x = s, so G_p(s) = g(s) for an x-only field
    g = F.sin_x(1.0, 2.0)
    assert F.normal_average(g, Direction.lattice(1, 0), 0.25) == pytest.approx(3.0, abs=1e-12)
    step = F.square_wave(0.5, 1.5)
    assert F.normal_average(step, Direction.lattice(1, 0), 0.7) == 1.5


def test_normal_period():
    assert F.normal_period(Direction.lattice(3, 4)) == pytest.approx(0.2)
    assert Direction.lattice(2, 4).p == (1, 2)
