import numpy as np
import pytest

from app.core.region_measure import (
  ball_sampler, box_sampler, check_inclusion_sampled, count_hits, measure_eps_boundary_mc,
  measure_symmetric_difference_mc,
)
from app.core.regions import unit_ball_volume


def _annulus(r, eps, dimension):
  return unit_ball_volume(dimension) * ((r + eps) ** dimension - (r - eps) ** dimension)


@pytest.mark.parametrize("dimension", [2, 3])
def test_ball_eps_boundary_matches_annulus(ball, dimension):
  v = np.zeros(dimension)
  result = measure_eps_boundary_mc(ball, v, 0.1, 200_000, seed=11)
  assert abs(result.estimate - _annulus(1.0, 0.1, dimension)) <= 4.0 * result.std_err


@pytest.mark.slow
def test_ball_eps_boundary_with_many_samples(ball):
  result = measure_eps_boundary_mc(ball, np.zeros(2), 0.05, 1_000_000, seed=12, workers=4)
  assert abs(result.estimate - _annulus(1.0, 0.05, 2)) <= 4.0 * result.std_err
  assert result.std_err < 5e-3


def test_slow_cone_agrees_with_ball(ball, vision_cone):
  v = np.array([0.25, 0.0])
  cone = measure_eps_boundary_mc(vision_cone, v, 0.1, 50_000, seed=3)
  sphere = measure_eps_boundary_mc(ball, v, 0.1, 50_000, seed=3)
  assert abs(cone.hits - sphere.hits) <= 1


def test_theta_target_includes_the_segment(vision_cone):
  v = np.array([0.75, 0.0])
  boundary = measure_eps_boundary_mc(vision_cone, v, 0.05, 100_000, seed=4, target="boundary")
  theta = measure_eps_boundary_mc(vision_cone, v, 0.05, 100_000, seed=4, target="theta")
  assert theta.hits > boundary.hits


def test_estimates_are_reproducible(speed_ball):
  v = np.array([0.3, 0.4])
  first = measure_eps_boundary_mc(speed_ball, v, 0.2, 20_000, seed=9, workers=3)
  second = measure_eps_boundary_mc(speed_ball, v, 0.2, 20_000, seed=9, workers=3)
  assert first == second


def test_symmetric_difference_is_zero_for_equal_velocities(region):
  v = np.array([1.2, -0.3])
  result = measure_symmetric_difference_mc(region, v, v.copy(), 10_000, seed=1)
  assert result.estimate == 0.0
  assert result.std_err == 0.0


def test_symmetric_difference_of_speed_balls(speed_ball):
  result = measure_symmetric_difference_mc(speed_ball, np.zeros(2), np.array([0.5, 0.0]), 100_000, seed=2)
  assert abs(result.estimate - np.pi * (1.5 ** 2 - 1.0)) <= 4.0 * result.std_err


def test_invalid_arguments(ball):
  v = np.zeros(2)
  with pytest.raises(ValueError):
    measure_eps_boundary_mc(ball, v, 1.0, 10_000, seed=0)
  with pytest.raises(ValueError):
    measure_eps_boundary_mc(ball, v, 0.1, 10, seed=0)
  with pytest.raises(ValueError):
    measure_eps_boundary_mc(ball, v, 0.1, 10_000, seed=0, target="interior")
  with pytest.raises(ValueError):
    measure_symmetric_difference_mc(ball, v, v, 10, seed=0)


def test_inclusion_violations():
  inner = lambda points: np.linalg.norm(points, axis=1) <= 0.5
  outer = lambda points: np.linalg.norm(points, axis=1) <= 1.0
  sampler = box_sampler(1.5, 2)
  assert check_inclusion_sampled(inner, outer, sampler, 20_000, seed=5) == 0
  assert check_inclusion_sampled(outer, inner, sampler, 20_000, seed=5) > 0


def test_count_hits_splits_work_deterministically():
  everywhere = lambda points: np.ones(points.shape[0], dtype=bool)
  assert count_hits(everywhere, box_sampler(1.0, 2), 12_345, seed=0, workers=4) == 12_345


def test_ball_sampler_stays_inside(rng):
  points = ball_sampler(0.7, 3)(rng, 5_000)
  assert points.shape == (5_000, 3)
  assert np.all(np.linalg.norm(points, axis=1) <= 0.7)
