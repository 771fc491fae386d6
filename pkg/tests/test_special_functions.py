import math
import threading

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from shflab.errors import AccuracyError, DomainError
from shflab.special_functions import (
    EULER_GAMMA,
    DickmanGrid,
    GreenEvaluator,
    adaptive_quadrature,
    dickman_density,
    dickman_tail_bound,
    gaussian_product_split,
    green_function,
    green_kernel,
    heat_kernel,
)

from oracles import green_trapezoid_richardson

# Frozen from runs cross-checked against the trapezoid/Richardson oracle
# (agreement ~1e-13); the oracle is re-run below so these cannot drift.
G0_AT_1 = 1.0746236222602694
G0_AT_HALF = 0.9159402055127972
G0_AT_3 = 1.0000073580460909
G1_AT_1 = 7.108063758764908


@pytest.fixture(scope="module")
def grid():
    return DickmanGrid(np.arange(0.0, 24.0001, 0.125), t_max=12.0)


@pytest.fixture(scope="module")
def evaluator():
    return GreenEvaluator()


# ----------------------------------------------------------------------
# heat kernel
# ----------------------------------------------------------------------

def test_heat_kernel_normalizes():
    z, w = np.polynomial.legendre.leggauss(160)
    for t in (0.01, 1.0, 7.5):
        half = 9.0 * math.sqrt(t)
        nodes = half * z
        wts = half * w
        pts = np.stack(np.meshgrid(nodes, nodes, indexing="ij"), axis=-1)
        total = float(np.einsum("i,j,ij->", wts, wts, heat_kernel(t, pts)))
        assert total == pytest.approx(1.0, rel=1e-10)


def test_heat_kernel_chapman_kolmogorov():
    x = np.array([0.3, -0.7])
    y = np.array([-0.2, 0.4])
    t, s = 0.6, 1.1
    z, w = np.polynomial.hermite_e.hermegauss(60)
    pts = x + math.sqrt(t) * np.stack(np.meshgrid(z, z, indexing="ij"), axis=-1)
    rhs = float(np.einsum("i,j,ij->", w, w, heat_kernel(s, pts, y))) / (2.0 * math.pi)
    assert rhs == pytest.approx(float(heat_kernel(t + s, x, y)), rel=1e-12)


def test_heat_kernel_rejects_bad_inputs():
    with pytest.raises(DomainError):
        heat_kernel(0.0, np.zeros(2))
    with pytest.raises(DomainError):
        heat_kernel(-1.0, np.zeros(2))
    with pytest.raises(DomainError):
        heat_kernel(1.0, np.zeros(3))


@settings(deadline=None, max_examples=60)
@given(
    t=st.floats(1e-3, 10.0),
    coords=st.lists(st.floats(-5.0, 5.0), min_size=6, max_size=6),
)
def test_gaussian_product_split_identity(t, coords):
    x = np.array(coords[0:2])
    xp = np.array(coords[2:4])
    y = np.array(coords[4:6])
    pref, t_half, mid = gaussian_product_split(t, x, xp)
    lhs = float(heat_kernel(t, x, y) * heat_kernel(t, xp, y))
    rhs = float(pref * heat_kernel(t_half, mid, y))
    assert rhs == pytest.approx(lhs, rel=1e-11, abs=1e-300)
    assert t_half == 0.5 * t


# ----------------------------------------------------------------------
# Dickman density
# ----------------------------------------------------------------------

def test_dickman_closed_forms():
    # on (0, 1] the density is s exp(-gamma s) t^(s-1) / Gamma(s+1)
    for t in (0.1, 0.5, 1.0):
        assert dickman_density(1.0, t) == pytest.approx(math.exp(-EULER_GAMMA), rel=1e-14)
    assert dickman_density(2.0, 1.0) == pytest.approx(math.exp(-2.0 * EULER_GAMMA), rel=1e-14)
    assert dickman_density(0.5, 1.0) == pytest.approx(
        0.5 * math.exp(-0.5 * EULER_GAMMA) / math.gamma(1.5), rel=1e-14
    )
    # classical Dickman value rho(t) = exp(-gamma)(1 - log t) on (1, 2]
    assert dickman_density(1.0, 1.5) == pytest.approx(
        math.exp(-EULER_GAMMA) * (1.0 - math.log(1.5)), rel=1e-13
    )
    assert dickman_density(0.0, 0.7) == 0.0


@pytest.mark.parametrize("s", [0.7, 1.3])
@pytest.mark.parametrize("t", [1.25, 1.9])
def test_dickman_integral_equation_series_region(s, t):
    # t f_s(t) = s int_{t-1}^t f_s; both sides from exact formulas
    val, err = quad(lambda a: dickman_density(s, a), t - 1.0, t, points=[1.0], limit=200)
    assert t * dickman_density(s, t) == pytest.approx(s * val, rel=1e-9)


@pytest.mark.parametrize("s,t,tol", [
    # s on the grid so the check isolates the marched table itself;
    # the far node has density ~1e-11 and relative error amplifies there
    (0.75, 2.6, 1e-6),
    (1.25, 3.4, 1e-6),
    (1.0, 6.0, 1e-6),
    (2.0, 11.5, 1e-4),
])
def test_dickman_integral_equation_marched_region(s, t, tol, grid):
    val, err = quad(
        lambda a: dickman_density(s, a, grid), t - 1.0, t, points=[2.0], limit=200
    )
    assert t * dickman_density(s, t, grid) == pytest.approx(s * val, rel=tol)


def test_dickman_off_grid_interpolation_accuracy(grid):
    # off-node s goes through the s-spline; accuracy is interpolation-limited
    val, err = quad(lambda a: dickman_density(0.7, a, grid), 1.6, 2.6, points=[2.0], limit=200)
    assert 2.6 * dickman_density(0.7, 2.6, grid) == pytest.approx(0.7 * val, rel=2e-4)


def test_dickman_grid_prefix_consistency():
    """Extending the horizon must not change earlier nodes (causal march)."""
    sv = np.arange(0.0, 12.0001, 0.25)
    g_short = DickmanGrid(sv, t_max=3.0)
    g_long = DickmanGrid(sv, t_max=6.0)
    n = g_short.table.shape[1]
    assert np.array_equal(g_short.table, g_long.table[:, :n])


def test_dickman_normalization_certified(grid):
    for s in (0.5, 1.0, 2.0):
        val, tail = grid.normalization(s)
        assert tail < 1e-6
        # mass on (0, t_max] plus the certified tail must bracket 1
        assert val <= 1.0 + 1e-5
        assert val + tail >= 1.0 - 1e-5
        assert abs(val - 1.0) <= 1e-5 + tail


def test_dickman_profile_matches_pointwise(grid):
    s_query = np.array([0.31, 0.9, 1.7, 4.2])
    prof = grid.density_s_profile(2.6, s_query)
    point = np.array([grid.density(float(s), 2.6) for s in s_query])
    np.testing.assert_allclose(prof, point, rtol=1e-9)


def test_dickman_rejects_bad_inputs(grid):
    with pytest.raises(DomainError):
        dickman_density(-0.1, 1.0)
    with pytest.raises(DomainError):
        dickman_density(1.0, 0.0)
    with pytest.raises(DomainError):
        dickman_density(1.0, 3.0)  # t > 2 needs a grid
    with pytest.raises(DomainError):
        grid.density(1.0, 13.0)  # beyond horizon
    with pytest.raises(DomainError):
        grid.density(50.0, 3.0)  # beyond s coverage
    with pytest.raises(DomainError):
        DickmanGrid(np.array([0.0, 1.0, 2.0, 3.0]), t_max=1.5)


def test_dickman_tail_bound_properties(grid):
    bounds = [dickman_tail_bound(1.0, T) for T in (2.0, 3.0, 5.0, 9.0)]
    assert all(0.0 < b <= 1.0 for b in bounds)
    assert all(a > b for a, b in zip(bounds, bounds[1:]))
    # the certificate dominates the actual tail mass on [T, t_max]
    actual, _ = quad(lambda a: dickman_density(1.0, a, grid), 3.0, 12.0, limit=200)
    assert dickman_tail_bound(1.0, 3.0) >= actual
    assert dickman_tail_bound(0.0, 3.0) == 0.0


# ----------------------------------------------------------------------
# adaptive quadrature
# ----------------------------------------------------------------------

def test_adaptive_quadrature_smooth():
    val, err, n = adaptive_quadrature(np.exp, 0.0, 1.0, 1e-12)
    assert val == pytest.approx(math.e - 1.0, abs=1e-12)
    assert err <= 1e-12


def test_adaptive_quadrature_endpoint_singularity():
    val, err, n = adaptive_quadrature(lambda x: 1.0 / np.sqrt(x), 0.0, 1.0, 1e-7)
    assert val == pytest.approx(2.0, abs=1e-6)


def test_adaptive_quadrature_failure_modes():
    with pytest.raises(DomainError):
        adaptive_quadrature(np.exp, 1.0, 0.0, 1e-6)
    with pytest.raises(AccuracyError):
        adaptive_quadrature(lambda x: 1.0 / np.sqrt(x), 0.0, 1.0, 1e-14, max_panels=12)


# ----------------------------------------------------------------------
# Green function
# ----------------------------------------------------------------------

def test_green_frozen_values(evaluator):
    assert evaluator.value(0.0, 1.0) == pytest.approx(G0_AT_1, rel=1e-12)
    assert evaluator.value(0.0, 0.5) == pytest.approx(G0_AT_HALF, rel=1e-12)
    assert evaluator.value(0.0, 3.0) == pytest.approx(G0_AT_3, rel=1e-9)
    assert evaluator.value(1.0, 1.0) == pytest.approx(G1_AT_1, rel=1e-12)


def test_green_matches_trapezoid_oracle(evaluator):
    for t in (0.5, 1.0):
        assert evaluator.value(0.0, t) == pytest.approx(
            green_trapezoid_richardson(t), abs=1e-9
        )


def test_green_monotone_in_theta(evaluator):
    vals = [evaluator.value(th, 0.8) for th in (-2.0, -0.5, 0.0, 1.0, 2.5)]
    assert all(a < b for a, b in zip(vals, vals[1:]))


def test_green_continuous_across_table_start(evaluator):
    # the route switches from exact series to the marched table at t = 2
    v_lo = evaluator.value(0.0, 2.0)
    v_hi = evaluator.value(0.0, 2.0 + 1e-3)
    assert abs(v_hi - v_lo) < 0.05 * 1e-3 + 1e-7


def test_green_small_time_identity(evaluator):
    def fun(ws):
        return evaluator.values(0.0, ws)

    direct, _, _ = adaptive_quadrature(fun, 1e-6, 0.25, 1e-9)
    ident = evaluator.small_time_mass(0.0, 0.25) - evaluator.small_time_mass(0.0, 1e-6)
    assert direct == pytest.approx(ident, abs=1e-8)


def test_green_kernel_identity(evaluator):
    x = np.array([0.4, -1.2])
    t = 0.9
    assert green_kernel(0.5, t, x, evaluator) == pytest.approx(
        evaluator.value(0.5, t) * float(heat_kernel(2.0 * t, x)), rel=1e-14
    )
    assert green_function(0.5, t, evaluator) == evaluator.value(0.5, t)


def test_green_horizon_and_domain_errors():
    sv = np.arange(0.0, 12.0001, 0.25)
    ev = GreenEvaluator(grid=DickmanGrid(sv, t_max=3.0))
    with pytest.raises(DomainError):
        ev.value(0.0, 5.0)
    with pytest.raises(DomainError):
        ev.value(0.0, 0.0)
    with pytest.raises(DomainError):
        ev.small_time_mass(0.0, 1.5)


def test_green_evaluator_thread_safe(evaluator):
    ts = np.geomspace(1e-6, 2.0, 40)
    expected = evaluator.values(0.0, ts)
    fresh = GreenEvaluator()
    results = {}

    def worker(idx):
        results[idx] = fresh.values(0.0, ts)

    threads = [threading.Thread(target=worker, args=(i,)) for i in range(8)]
    for th in threads:
        th.start()
    for th in threads:
        th.join()
    for got in results.values():
        np.testing.assert_array_equal(got, expected)
