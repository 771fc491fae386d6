"""Path-ensemble simulator tests.

Statistical checks run at fixed seeds with 3-sigma tolerances against
either closed-form targets (mean-one martingale, exact start area) or
independent estimates (heat-semigroup quadrature, tube mass vs the
Girsanov-weighted cone ensemble).  Everything here is deterministic:
a failure is a code change, not an unlucky draw.
"""

import math

import numpy as np
import pytest

from shflab.errors import AccuracyError, ConfigError, DomainError, GeometryError
from shflab.fk_simulator import (DriftedMassEstimate, DriftSchedule,
                                 MassEstimate, RegionSpec, frozen_path_noise_mean,
                                 independence_check, simulate_drifted_mass,
                                 simulate_mass, tail_estimate)
from shflab.moment_calculus import ProfileSpec, mean_mass
from shflab.noise_field import GridSpec
from shflab.tube_geometry import TubeFamily, center


@pytest.fixture(scope="module")
def fam4():
    return TubeFamily(4, 2.5, 1.0, 1.0, C_drift=0.05)


@pytest.fixture(scope="module")
def fam_short():
    # t = 0.1 keeps per-path noise variance small enough for tight SEs
    return TubeFamily(8, 2.5, 1.0, 0.1, C_drift=0.02)


# ---------------------------------------------------------------- regions

def test_region_kinds_validate():
    with pytest.raises(ConfigError, match="kind"):
        RegionSpec("disc", r_start=1.0)
    with pytest.raises(ConfigError, match="start radius"):
        RegionSpec("full")
    with pytest.raises(ConfigError, match="start radius"):
        RegionSpec("full", r_start=-2.0)
    with pytest.raises(ConfigError, match="end radius"):
        RegionSpec("ball_to_ball", r_start=1.0)
    with pytest.raises(ConfigError, match="family"):
        RegionSpec("cone")


def test_region_tube_indices(fam4):
    with pytest.raises(ConfigError, match="rotation index"):
        RegionSpec("tube", family=fam4, n=4)
    with pytest.raises(DomainError, match="outside"):
        RegionSpec("tube", family=fam4, n=1, j=0)
    with pytest.raises(DomainError, match="outside"):
        RegionSpec("cone", family=fam4, n=17)


def test_region_start_geometry(fam4):
    full = RegionSpec("full", r_start=2.0)
    assert full.start_area == pytest.approx(4.0 * math.pi, rel=1e-15)
    tube = RegionSpec("tube", family=fam4, n=4, j=0)
    assert tube.r_start == fam4.base_radius
    assert np.allclose(tube.start_center, center(fam4, 4, 0, 0.0)[0])
    cone = RegionSpec("cone", family=fam4, n=4)
    assert cone.r_start == fam4.base_radius
    assert np.all(cone.start_center == 0.0)


def test_region_descriptor_fields(fam4):
    d = RegionSpec("ball_to_ball", r_start=1.0, r_end=0.5,
                   end_center=(1.0, 0.0)).descriptor()
    assert d["kind"] == "ball_to_ball"
    assert d["r_end"] == 0.5
    assert d["end_center"] == [1.0, 0.0]
    d = RegionSpec("tube", family=fam4, n=4, j=0).descriptor()
    assert d["family"]["C_drift"] == 0.05
    assert d["n"] == 4 and d["j"] == 0


# -------------------------------------------------------------- schedules

def test_zero_schedule_properties():
    z = DriftSchedule.zero()
    assert z.is_zero
    assert z.tag() == "zero"
    assert z.boundaries == []
    assert z.max_offset() == 0.0
    assert np.allclose(z.axis(), [1.0, 0.0])
    assert np.all(z.center_at([0.1, 0.7]) == 0.0)
    assert np.all(z.log_weights(np.ones((5, 4))) == 0.0)


def test_tube_schedule_geometry(fam4):
    sc = DriftSchedule.from_tube(fam4, 4, 0)
    b = fam4.b_N
    assert sc.tag() == "tube:4:0"
    assert sc.boundaries == [b, 0.5, 1.0 - b]
    assert np.allclose(sc.axis(), [1.0, 0.0])
    s = np.array([0.0, 0.3, 0.5, 0.9])
    assert np.allclose(sc.center_at(s), center(fam4, 4, 0, s), rtol=1e-15)
    assert sc.max_offset() == pytest.approx(
        float(fam4.axial_position(4, np.array([0.5]))[0]), rel=1e-15)


def test_rotated_schedule_axis():
    fam = TubeFamily(16, 2.5, 1.0, 1.0, C_drift=0.005)
    sc = DriftSchedule.from_tube(fam, 16, 1)
    ang = fam.angle(1)
    assert np.allclose(sc.axis(), [math.cos(ang), math.sin(ang)], rtol=1e-15)
    assert np.allclose(sc.center_at([0.25]), center(fam, 16, 1, [0.25]))


def test_schedule_validates_indices(fam4):
    with pytest.raises(DomainError, match="outside"):
        DriftSchedule.from_tube(fam4, 1)
    with pytest.raises(DomainError, match="outside"):
        DriftSchedule.from_tube(fam4, 4, j=3)


# ----------------------------------------------------- noiseless ensembles

def test_full_region_beta_zero_is_exact_area():
    # no constraint and unit weights: every path contributes the area
    est = simulate_mass(RegionSpec("full", r_start=2.0), 0.0, 0.5, 1.0,
                        0.25, 400, seed=11, beta=0.0)
    assert est.mean == pytest.approx(4.0 * math.pi, rel=1e-14)
    assert est.std_error == 0.0
    assert est.aborted == 0


def test_ball_to_ball_beta_zero_matches_quadrature():
    region = RegionSpec("ball_to_ball", r_start=1.0, r_end=1.0)
    est = simulate_mass(region, 0.0, 0.5, 1.0, 0.125, 200_000, seed=21,
                        beta=0.0)
    oracle = mean_mass(ProfileSpec("indicator_ball", radius=1.0),
                       ProfileSpec("indicator_ball", radius=1.0), 1.0)
    assert abs(est.mean - oracle.value) < 3.0 * est.std_error + oracle.abs_error


def test_ball_to_ball_beta_zero_shifted_target():
    region = RegionSpec("ball_to_ball", r_start=1.0, r_end=1.0,
                        end_center=(1.0, 0.0))
    est = simulate_mass(region, 0.0, 0.5, 1.0, 0.125, 200_000, seed=22,
                        beta=0.0)
    oracle = mean_mass(ProfileSpec("indicator_ball", radius=1.0),
                       ProfileSpec("indicator_ball", radius=1.0,
                                   center=(1.0, 0.0)), 1.0)
    assert abs(est.mean - oracle.value) < 3.0 * est.std_error + oracle.abs_error


def test_log_mean_matches_mean():
    est = simulate_mass(RegionSpec("ball_to_ball", r_start=1.0, r_end=1.0),
                        0.0, 0.5, 1.0, 0.25, 4000, seed=3, beta=0.0)
    assert est.log_mean == pytest.approx(math.log(est.mean), rel=1e-12)


# ------------------------------------------------------------- validation

def test_config_validation(fam4):
    full = RegionSpec("full", r_start=1.0)
    with pytest.raises(ConfigError, match="divide"):
        simulate_mass(full, 0.0, 0.5, 1.0, 0.3, 100, seed=1, beta=0.0)
    with pytest.raises(ConfigError, match="positive"):
        simulate_mass(full, 0.0, 0.5, 1.0, -0.1, 100, seed=1, beta=0.0)
    with pytest.raises(ConfigError, match="multiple"):
        simulate_mass(full, 0.0, 0.5, 1.0, 0.25, 100, seed=1, beta=0.0,
                      n_noise=3)
    cone = RegionSpec("cone", family=fam4, n=4)
    with pytest.raises(ConfigError, match="horizon"):
        simulate_mass(cone, 0.0, 0.5, 0.5, 0.25, 100, seed=1, beta=0.0)


def test_drifted_requires_cone_region(fam4):
    sched = DriftSchedule.from_tube(fam4, 4, 0)
    with pytest.raises(ConfigError, match="cone"):
        simulate_drifted_mass(RegionSpec("full", r_start=1.0), sched,
                              0.0, 0.5, 1.0, 0.25, 100, seed=1, beta=0.0)


def test_schedule_horizon_mismatch(fam4, fam_short):
    region = RegionSpec("cone", family=fam_short, n=8)
    sched = DriftSchedule.from_tube(fam4, 4, 0)  # lives on t = 1
    with pytest.raises(ConfigError, match="horizon"):
        simulate_drifted_mass(region, sched, 0.0, 0.5, 0.1, 0.025, 100,
                              seed=1, beta=0.0)


def test_abort_policy_rejects_small_grid():
    # grid half-extent 2 loses a macroscopic fraction of free paths by t=1
    with pytest.raises(GeometryError, match="grid"):
        simulate_mass(RegionSpec("full", r_start=1.0), 0.0, 0.5, 1.0,
                      0.125, 2000, seed=8, grid=GridSpec(0.125, 4.0))


# ---------------------------------------------------------- with noise on

def test_determinism_and_digest():
    region = RegionSpec("full", r_start=1.0)
    a = simulate_mass(region, 0.0, 0.5, 0.1, 0.025, 800, seed=31, n_noise=2)
    b = simulate_mass(region, 0.0, 0.5, 0.1, 0.025, 800, seed=31, n_noise=2)
    assert a == b
    c = simulate_mass(region, 1.0, 0.5, 0.1, 0.025, 800, seed=31, n_noise=2)
    assert c.config_digest != a.config_digest
    assert c.beta > a.beta


def test_threads_do_not_change_the_result():
    region = RegionSpec("full", r_start=1.0)
    a = simulate_mass(region, 0.0, 0.5, 0.1, 0.025, 1600, seed=5, n_noise=4)
    b = simulate_mass(region, 0.0, 0.5, 0.1, 0.025, 1600, seed=5, n_noise=4,
                      threads=2)
    assert a == b


def test_mean_one_full_region_with_noise():
    # E Z(full) = start area exactly at every dt; SE measured across the
    # independent noise blocks, not across paths sharing a stack
    region = RegionSpec("full", r_start=1.0)
    est = simulate_mass(region, 0.0, 0.5, 0.1, 0.025, 10_000, seed=41,
                        n_noise=25)
    assert est.n_noise == 25
    assert est.std_error > 0.0
    assert abs(est.mean - math.pi) < 3.0 * est.std_error


def test_frozen_path_mean_one():
    positions = np.array([[0.05, 0.0], [0.1, 0.05], [0.0, -0.1],
                          [-0.05, 0.02]])
    mean, se = frozen_path_noise_mean(positions, 0.0, 0.4, 0.05, 0.0125,
                                      400, seed=17)
    assert se > 0.0
    assert abs(mean - 1.0) < 3.0 * se


def test_frozen_path_shape_validation():
    with pytest.raises(ConfigError, match="midpoints"):
        frozen_path_noise_mean(np.zeros((3, 2)), 0.0, 0.4, 0.05, 0.0125,
                               10, seed=1)


# ------------------------------------------------------- drifted ensembles

def test_zero_schedule_degenerates_to_simulate_mass(fam4):
    region = RegionSpec("cone", family=fam4, n=4)
    base = simulate_mass(region, 0.0, 0.5, 1.0, 1.0 / 32, 2000, seed=7,
                         n_noise=2)
    drift = simulate_drifted_mass(region, DriftSchedule.zero(), 0.0, 0.5,
                                  1.0, 1.0 / 32, 2000, seed=7, n_noise=2)
    assert isinstance(drift, DriftedMassEstimate)
    assert drift.plain is drift.weighted
    # same draws and arithmetic; only the schedule tag in the digest differs
    assert drift.plain.mean == base.mean
    assert drift.plain.std_error == base.std_error
    assert drift.plain.log_mean == base.log_mean
    assert drift.plain.aborted == base.aborted


def test_girsanov_identity_beta_zero(fam4):
    # tube mass and the weighted centered-cone ensemble estimate the same
    # quantity; at beta = 0 this isolates the change of measure itself
    tube = simulate_mass(RegionSpec("tube", family=fam4, n=4, j=0),
                         0.0, 0.5, 1.0, 1.0 / 128, 100_000, seed=51, beta=0.0)
    drift = simulate_drifted_mass(RegionSpec("cone", family=fam4, n=4),
                                  DriftSchedule.from_tube(fam4, 4, 0),
                                  0.0, 0.5, 1.0, 1.0 / 128, 100_000, seed=52,
                                  beta=0.0)
    se = math.hypot(tube.std_error, drift.weighted.std_error)
    assert abs(tube.mean - drift.weighted.mean) < 3.0 * se


def test_girsanov_identity_rotated_tube():
    fam = TubeFamily(16, 2.5, 1.0, 1.0, C_drift=0.005)
    tube = simulate_mass(RegionSpec("tube", family=fam, n=16, j=1),
                         0.0, 0.5, 1.0, 1.0 / 64, 100_000, seed=61, beta=0.0)
    drift = simulate_drifted_mass(RegionSpec("cone", family=fam, n=16),
                                  DriftSchedule.from_tube(fam, 16, 1),
                                  0.0, 0.5, 1.0, 1.0 / 64, 100_000, seed=62,
                                  beta=0.0)
    se = math.hypot(tube.std_error, drift.weighted.std_error)
    assert abs(tube.mean - drift.weighted.mean) < 3.0 * se


def test_drifted_equality_in_law_with_noise(fam_short):
    # with noise on, the weighted cone ensemble reading the shifted
    # trajectory must agree with direct tube simulation in expectation
    kw = dict(theta=0.0, epsilon=0.3, t=0.1, dt=0.1 / 64, M=20_000,
              n_noise=20)
    tube = simulate_mass(RegionSpec("tube", family=fam_short, n=8, j=0),
                         seed=101, **kw)
    drift = simulate_drifted_mass(RegionSpec("cone", family=fam_short, n=8),
                                  DriftSchedule.from_tube(fam_short, 8, 0),
                                  seed=202, **kw)
    se = math.hypot(tube.std_error, drift.weighted.std_error)
    assert abs(tube.mean - drift.weighted.mean) < 3.0 * se
    assert drift.plain.mean != drift.weighted.mean


# ------------------------------------------------------------------- tails

def test_tail_rows_are_monotone_and_bracketed():
    region = RegionSpec("full", r_start=1.0)
    est = tail_estimate(region, 0.0, 0.5, 0.25, 1.0 / 16,
                        [1.0, -2.0, 0.0, -1.0], M_outer=24, M_inner=200,
                        seed=71)
    xs = [row.x for row in est.rows]
    assert xs == sorted(xs)
    ps = [row.p_hat for row in est.rows]
    assert all(a >= b for a, b in zip(ps, ps[1:]))
    for row in est.rows:
        assert row.p_hat == row.count / est.M_outer
        assert 0.0 <= row.wilson_low <= row.p_hat <= row.wilson_high <= 1.0
    assert 0 <= est.flagged <= est.M_outer


def test_tail_determinism():
    region = RegionSpec("full", r_start=1.0)
    kw = dict(thresholds=[0.0, -1.0], M_outer=12, M_inner=100, seed=72)
    a = tail_estimate(region, 0.0, 0.5, 0.25, 1.0 / 16, **kw)
    b = tail_estimate(region, 0.0, 0.5, 0.25, 1.0 / 16, **kw)
    assert a == b


def test_tail_validation():
    region = RegionSpec("full", r_start=1.0)
    with pytest.raises(ConfigError, match="threshold"):
        tail_estimate(region, 0.0, 0.5, 0.25, 1.0 / 16, [], 10, 100, seed=1)
    with pytest.raises(ConfigError, match="realizations"):
        tail_estimate(region, 0.0, 0.5, 0.25, 1.0 / 16, [1.0], 1, 100, seed=1)


# ---------------------------------------------------------- independence

@pytest.fixture(scope="module")
def fam_ind():
    return TubeFamily(16, 3.0, 1.0, 0.1, C_drift=1.0)


def test_independence_on_disjoint_reads(fam_ind):
    res = independence_check(fam_ind, [(8, 0), (8, 1)], 0.0, 0.2,
                             0.1 / 16, M=500, R=30, seed=81)
    assert res.ok
    assert res.max_abs_offdiag < res.threshold == 3.0 / math.sqrt(30)
    corr = np.asarray(res.correlations)
    assert corr.shape == (2, 2)
    assert np.allclose(np.diag(corr), 1.0)
    assert np.allclose(corr, corr.T)
    assert res.min_pair_margin > 2.0 * 0.2 + 3.0 * 0.05


def test_independence_rejects_narrow_margin(fam_ind):
    # 2 eps + 3h exceeds the certified pair margin at this epsilon
    with pytest.raises(ConfigError, match="margin"):
        independence_check(fam_ind, [(8, 0), (8, 1)], 0.0, 0.3,
                           0.1 / 16, M=100, R=5, seed=1)


def test_independence_needs_two_distinct_tubes(fam_ind):
    with pytest.raises(ConfigError, match="two"):
        independence_check(fam_ind, [(8, 0)], 0.0, 0.2, 0.1 / 16,
                           M=100, R=5, seed=1)
    with pytest.raises(ConfigError, match="distinct"):
        independence_check(fam_ind, [(8, 0), (8, 0)], 0.0, 0.2, 0.1 / 16,
                           M=100, R=5, seed=1)
