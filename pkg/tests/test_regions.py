import numpy as np
import pytest
from scipy.spatial.distance import cdist

from app.core.regions import (
  CONE_SEGMENT_SHARE_3D, AngleProfile, Ball, ClippedLinearRadius, FixedCone, SaturatingRadius, SlopeSet, SpeedBall, VisionCone,
  cone_eps_boundary_bound, contains, enlarged_contains, eps_boundary_contains, reduced_contains, signed_distance,
  slope_set, theta_contains, theta_enlarged_contains, unit_ball_volume,
)

N_PROPERTY_SAMPLES = 100_000


def _random_velocities(rng, n, dimension, max_speed=3.0):
  directions = rng.standard_normal((n, dimension))
  directions /= np.linalg.norm(directions, axis=1, keepdims=True)
  return directions * rng.uniform(0.0, max_speed, size=(n, 1))


class TestMembership:
  def test_ball_contains_and_signed_distance(self, ball):
    v = np.array([0.3, 0.0])
    assert contains(ball, v, np.array([0.5, 0.0]))
    assert not contains(ball, v, np.array([2.0, 0.0]))
    assert signed_distance(ball, v, np.array([0.5, 0.0])) == pytest.approx(-0.5)
    assert signed_distance(ball, v, np.array([0.0, 2.0])) == pytest.approx(1.0)

  def test_every_member_lies_in_global_radius(self, region, rng):
    v = _random_velocities(rng, 20_000, 2)
    x = rng.uniform(-3.0, 3.0, size=(20_000, 2))
    inside = region.contains(v, x)
    assert np.all(np.linalg.norm(x[inside], axis=1) <= region.global_radius + 1e-12)

  def test_vision_cone_is_full_ball_up_to_unit_speed(self, vision_cone, ball, rng):
    x = rng.uniform(-1.5, 1.5, size=(50_000, 2))
    x = x[np.abs(np.linalg.norm(x, axis=1) - 1.0) > 1e-9]
    for speed in (0.0, 0.25, 0.75, 1.0):
      v = np.array([speed, 0.0])
      np.testing.assert_array_equal(vision_cone.contains(v[None, :], x), ball.contains(v[None, :], x))

  def test_vision_cone_excludes_points_behind_at_high_speed(self, vision_cone):
    v = np.array([5.0, 0.0])
    assert contains(vision_cone, v, np.array([0.5, 0.0]))
    assert not contains(vision_cone, v, np.array([-0.5, 0.0]))
    assert contains(vision_cone, v, np.zeros(2))

  def test_cone_in_three_dimensions(self):
    cone = VisionCone(1.0, AngleProfile(np.pi / 3.0, 1.0))
    v = np.array([0.0, 0.0, 5.0])
    assert contains(cone, v, np.array([0.0, 0.1, 0.9]))
    assert not contains(cone, v, np.array([0.0, 0.9, -0.1]))

  def test_signed_distance_matches_dense_boundary_samples(self, vision_cone, rng):
    v = np.array([2.0, 0.0])
    boundary = vision_cone.sample_boundary_points(v, 100_000, rng)
    x = rng.uniform(-1.5, 1.5, size=(50, 2))
    nearest = cdist(x, boundary).min(axis=1)
    np.testing.assert_allclose(np.abs(vision_cone.signed_distance(v[None, :], x)), nearest, atol=1e-3)

  def test_boundary_samples_lie_on_the_boundary(self, region, rng):
    v = np.array([1.7, 0.4])
    points = region.sample_boundary_points(v, 2_000, rng)
    np.testing.assert_allclose(region.boundary_distance(v[None, :], points), 0.0, atol=1e-9)


class TestProfiles:
  def test_angle_profile_shape(self):
    profile = AngleProfile(np.pi / 3.0, 1.0)
    assert profile(0.0) == np.pi
    assert profile(1.0) == np.pi
    speeds = np.linspace(1.0, 20.0, 2_000)
    values = profile(speeds)
    assert np.all(np.diff(values) <= 0.0)
    assert values[-1] == pytest.approx(np.pi / 3.0, abs=1e-12)

  def test_angle_profile_lipschitz_constant(self):
    profile = AngleProfile(np.pi / 4.0, 2.0)
    speeds = np.linspace(0.0, 6.0, 60_001)
    slopes = np.abs(np.diff(profile(speeds))) / np.diff(speeds)
    assert slopes.max() <= profile.lipschitz * (1.0 + 1e-6)

  @pytest.mark.parametrize("profile", [ClippedLinearRadius(0.5, 1.0, 0.8, 2.0), SaturatingRadius(1.0, 2.5, 0.7)])
  def test_radius_profiles_are_bounded_and_lipschitz(self, profile):
    speeds = np.linspace(0.0, 10.0, 10_001)
    values = profile(speeds)
    assert np.all(values > 0.0)
    assert np.all(values <= profile.sup + 1e-12)
    assert np.max(np.abs(np.diff(values)) / np.diff(speeds)) <= profile.lipschitz * (1.0 + 1e-9)

  def test_unit_ball_volume(self):
    assert unit_ball_volume(2) == pytest.approx(np.pi)
    assert unit_ball_volume(3) == pytest.approx(4.0 * np.pi / 3.0)


class TestEpsBoundaryCalculus:
  def test_eps_boundary_rejects_non_positive_width(self, ball):
    with pytest.raises(ValueError):
      eps_boundary_contains(ball, np.zeros(2), np.zeros(2), 0.0)

  def test_nesting_of_reduction_and_enlargement(self, region, rng):
    v = _random_velocities(rng, N_PROPERTY_SAMPLES, 2)
    x = rng.uniform(-2.5, 2.5, size=(N_PROPERTY_SAMPLES, 2))
    eps = 0.1
    inner = reduced_contains(region, v, x, eps)
    base = region.contains(v, x)
    outer = enlarged_contains(region, v, x, eps)
    assert np.count_nonzero(inner & ~base) == 0
    assert np.count_nonzero(base & ~outer) == 0

  def test_eps_boundary_is_enlargement_minus_reduction(self, region, rng):
    v = _random_velocities(rng, N_PROPERTY_SAMPLES, 2)
    x = rng.uniform(-2.5, 2.5, size=(N_PROPERTY_SAMPLES, 2))
    eps = 0.07
    shell = eps_boundary_contains(region, v, x, eps)
    difference = enlarged_contains(region, v, x, eps) & ~reduced_contains(region, v, x, eps)
    np.testing.assert_array_equal(shell, difference)

  def test_enlargements_compose(self, region, rng):
    v = _random_velocities(rng, N_PROPERTY_SAMPLES, 2)
    x = rng.uniform(-2.5, 2.5, size=(N_PROPERTY_SAMPLES, 2))
    small, large = 0.05, 0.12
    assert np.count_nonzero(enlarged_contains(region, v, x, small) & ~enlarged_contains(region, v, x, large)) == 0
    assert np.count_nonzero(reduced_contains(region, v, x, large) & ~reduced_contains(region, v, x, small)) == 0

  def test_velocity_lipschitz_inclusion(self, region, rng):
    v = _random_velocities(rng, N_PROPERTY_SAMPLES, 2)
    w = _random_velocities(rng, N_PROPERTY_SAMPLES, 2, max_speed=0.2)
    x = rng.uniform(-2.5, 2.5, size=(N_PROPERTY_SAMPLES, 2))
    margin = region.velocity_lipschitz * np.linalg.norm(w, axis=1) + 1e-9
    shifted = region.contains(v - w, x)
    covered = region.contains(v, x) | (region.boundary_distance(v, x) <= margin)
    assert np.count_nonzero(shifted & ~covered) == 0

  def test_theta_contains_boundary_of_region(self, region, rng):
    v = np.array([1.3, -0.2])
    points = region.sample_boundary_points(v, 1_000, rng)
    assert np.all(theta_contains(region, v[None, :], points))

  def test_theta_enlargement_rejects_negative_width(self, vision_cone):
    with pytest.raises(ValueError):
      theta_enlarged_contains(vision_cone, np.zeros(2), np.zeros(2), -0.1)


class TestVisionConeTheta:
  def test_segment_belongs_to_theta_in_band(self, vision_cone):
    inside_band = np.array([0.75, 0.0])
    below_band = np.array([0.25, 0.0])
    x = np.array([-0.7, 0.0])
    assert theta_contains(vision_cone, inside_band, x)
    assert not theta_contains(vision_cone, below_band, x)

  def test_segment_ends(self, vision_cone):
    low, high = vision_cone.segment_ends(np.array(0.75))
    assert float(low) == -1.0
    assert float(high) == pytest.approx(-0.5)

  def test_theta_enlargement_contains_nearby_points(self, vision_cone):
    v = np.array([0.75, 0.0])
    assert theta_enlarged_contains(vision_cone, v, np.array([-0.7, 0.05]), 0.06)
    assert not theta_enlarged_contains(vision_cone, v, np.array([-0.7, 0.05]), 0.04)

  def test_theta_samples_lie_on_theta(self, vision_cone, rng):
    v = np.array([0.0, 0.8])
    points = vision_cone.sample_theta_points(v, 5_000, rng)
    np.testing.assert_allclose(vision_cone.theta_distance(v[None, :], points), 0.0, atol=1e-9)

  def test_theta_samples_in_three_dimensions_split_off_the_segment(self, rng):
    cone = VisionCone(1.0, AngleProfile(np.pi / 3.0, 1.0))
    v = np.array([0.75, 0.0, 0.0])
    n = 20_000
    points = cone.sample_theta_points(v, n, rng)
    on_axis = np.count_nonzero(np.all(points[:, 1:] == 0.0, axis=1))
    assert abs(on_axis - CONE_SEGMENT_SHARE_3D * n) < 300
    np.testing.assert_allclose(cone.theta_distance(v[None, :], points), 0.0, atol=1e-9)


class TestSlopeSet:
  def test_slope_values(self, ball):
    v = np.array([1.0, 0.0])
    assert slope_set(ball, v, np.array([0.2, 0.0])) is SlopeSet.ONE
    assert slope_set(ball, v, np.array([1.5, 0.0])) is SlopeSet.ZERO
    assert slope_set(ball, v, np.array([1.0, 0.0])) is SlopeSet.FULL
    assert slope_set(ball, v, np.array([1.0 + 5e-8, 0.0])) is SlopeSet.FULL

  def test_slope_intervals(self):
    assert SlopeSet.ZERO.interval == (0.0, 0.0)
    assert SlopeSet.ONE.interval == (1.0, 1.0)
    assert SlopeSet.FULL.interval == (0.0, 1.0)

  def test_tolerance_must_be_positive(self, ball):
    with pytest.raises(ValueError):
      slope_set(ball, np.zeros(2), np.zeros(2), tol_b=0.0)

  def test_cone_segment_is_ambiguous(self, vision_cone):
    v = np.array([0.8, 0.0])
    assert slope_set(vision_cone, v, np.array([-0.5, 0.0])) is SlopeSet.FULL


class TestFamilies:
  def test_fixed_cone_is_not_admissible(self):
    cone = FixedCone(1.0, np.pi / 3.0)
    assert not cone.admissible
    assert np.isinf(cone.velocity_lipschitz)
    assert FixedCone(1.0, np.pi).admissible

  def test_analytic_constants(self, ball, speed_ball, vision_cone):
    assert ball.analytic_h2_constant == 0.0
    assert speed_ball.analytic_h2_constant == pytest.approx(1.0)
    expected = 2.0 * max(2.0, vision_cone.profile.lipschitz) * vision_cone.r
    assert vision_cone.analytic_h2_constant == pytest.approx(expected)

  def test_speed_ball_radius_follows_profile(self, speed_ball):
    assert contains(speed_ball, np.array([0.5, 0.0]), np.array([1.4, 0.0]))
    assert not contains(speed_ball, np.array([0.1, 0.0]), np.array([1.4, 0.0]))

  def test_cone_boundary_bound(self, vision_cone):
    assert np.isnan(cone_eps_boundary_bound(vision_cone, np.array([0.5, 0.0]), 0.1))
    bound = cone_eps_boundary_bound(vision_cone, np.array([5.0, 0.0]), 0.1)
    theta = float(vision_cone.aperture(5.0))
    assert bound == pytest.approx(4.0 * 0.1 * theta * (1.0 + 1.0 / np.sin(theta)))

  def test_invalid_parameters(self):
    with pytest.raises(ValueError):
      Ball(0.0)
    with pytest.raises(ValueError):
      AngleProfile(np.pi, 1.0)
    with pytest.raises(ValueError):
      SpeedBall(ClippedLinearRadius(1.0, 1.0, 0.0, 2.0))
