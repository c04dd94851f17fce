import time

import numpy as np
import pytest

from app.core.errors import DegenerateMeasureError, DimensionMismatchError, ProblemTooLargeError
from app.core.transport import (
  MAX_ATOMS, ClippedLinear, ConstantFunction, CoordinateProjection, DiscreteMeasure, DistanceToPoint, dual_check,
  push_forward, push_forward_bound, subsample, w1, w1_bruteforce, w1_distance,
)


def _random_measure(rng, size, dimension=4):
  return DiscreteMeasure(rng.standard_normal((size, dimension)), rng.dirichlet(np.ones(size)))


class TestMeasure:
  def test_rejects_degenerate_input(self):
    with pytest.raises(DegenerateMeasureError):
      DiscreteMeasure(np.zeros((2, 2)), np.zeros(2))
    with pytest.raises(DegenerateMeasureError):
      DiscreteMeasure(np.zeros((2, 2)), np.array([1.2, -0.2]))
    with pytest.raises(DegenerateMeasureError):
      DiscreteMeasure(np.zeros((2, 2)), np.array([0.5, 0.6]))
    with pytest.raises(DegenerateMeasureError):
      DiscreteMeasure.uniform(np.array([[np.nan, 0.0]]))

  def test_degenerate_measure_maps_to_configuration_exit_code(self):
    assert DegenerateMeasureError.exit_code == 2


class TestW1:
  def test_distance_to_itself_is_zero(self, rng):
    mu = DiscreteMeasure.uniform(rng.standard_normal((30, 4)))
    assert w1_distance(mu, mu) == 0.0

  def test_dirac_masses(self):
    mu = DiscreteMeasure.uniform([[0.0, 0.0, 0.0, 0.0]])
    nu = DiscreteMeasure.uniform([[3.0, 4.0, 0.0, 0.0]])
    assert w1_distance(mu, nu) == pytest.approx(5.0)

  def test_translation(self, rng):
    points = rng.standard_normal((25, 4))
    shift = np.array([0.3, -0.1, 0.2, 0.05])
    distance = w1_distance(DiscreteMeasure.uniform(points), DiscreteMeasure.uniform(points + shift))
    assert distance == pytest.approx(np.linalg.norm(shift), rel=1e-12)

  def test_matches_bruteforce_for_uniform_measures(self, rng):
    mu = DiscreteMeasure.uniform(rng.standard_normal((7, 4)))
    nu = DiscreteMeasure.uniform(rng.standard_normal((7, 4)))
    assert w1_distance(mu, nu) == pytest.approx(w1_bruteforce(mu, nu), rel=1e-12)

  def test_matches_bruteforce_for_rational_weights(self, rng):
    mu = DiscreteMeasure(rng.standard_normal((3, 4)), np.array([0.25, 0.25, 0.5]))
    nu = DiscreteMeasure(rng.standard_normal((4, 4)), np.array([0.5, 0.125, 0.125, 0.25]))
    assert w1_distance(mu, nu) == pytest.approx(w1_bruteforce(mu, nu), rel=1e-12)

  @pytest.mark.parametrize("sizes", [(3, 4), (4, 3), (2, 5)])
  def test_matches_bruteforce_for_random_weights(self, rng, sizes):
    mu = _random_measure(rng, sizes[0])
    nu = _random_measure(rng, sizes[1])
    assert w1_distance(mu, nu) == pytest.approx(w1_bruteforce(mu, nu), rel=1e-9)

  def test_plan_is_a_coupling(self, rng):
    mu = _random_measure(rng, 12)
    nu = _random_measure(rng, 9)
    distance, plan = w1(mu, nu)
    dense = plan.to_dense(mu.size, nu.size)
    np.testing.assert_allclose(dense.sum(axis=1), mu.weights, atol=1e-12)
    np.testing.assert_allclose(dense.sum(axis=0), nu.weights, atol=1e-12)
    assert plan.cost(mu, nu) == pytest.approx(distance, rel=1e-12)
    assert all(mass > 0.0 for _, _, mass in plan.triples())

  def test_metric_properties(self, rng):
    first, second, third = (_random_measure(rng, size) for size in (10, 14, 8))
    forward = w1_distance(first, second)
    assert forward == pytest.approx(w1_distance(second, first), rel=1e-9)
    assert forward <= w1_distance(first, third) + w1_distance(third, second) + 1e-12

  def test_dimension_mismatch(self, rng):
    with pytest.raises(DimensionMismatchError):
      w1(DiscreteMeasure.uniform(rng.standard_normal((3, 4))), DiscreteMeasure.uniform(rng.standard_normal((3, 6))))

  def test_problem_too_large(self):
    huge = DiscreteMeasure.uniform(np.zeros((MAX_ATOMS + 1, 2)))
    with pytest.raises(ProblemTooLargeError):
      w1(huge, DiscreteMeasure.uniform([[0.0, 0.0]]))

  @pytest.mark.parametrize("sizes", [(6, 6), (5, 6), (6, 4), (1, 6)])
  def test_bruteforce_covers_six_atoms_per_side(self, rng, sizes):
    mu = _random_measure(rng, sizes[0])
    nu = _random_measure(rng, sizes[1])
    assert w1_distance(mu, nu) == pytest.approx(w1_bruteforce(mu, nu), rel=1e-9)

  def test_bruteforce_single_source(self, rng):
    source = rng.standard_normal((1, 4))
    nu = _random_measure(rng, 5)
    expected = float(np.dot(nu.weights, np.linalg.norm(nu.points - source, axis=1)))
    assert w1_bruteforce(DiscreteMeasure.uniform(source), nu) == pytest.approx(expected, rel=1e-12)

  def test_bruteforce_refuses_large_enumerations(self, rng):
    with pytest.raises(ProblemTooLargeError):
      w1_bruteforce(_random_measure(rng, 9), _random_measure(rng, 3))

  @pytest.mark.slow
  def test_matches_bruteforce_on_random_instances(self, rng):
    started = time.perf_counter()
    for _ in range(200):
      sizes = rng.integers(1, 7, size=2)
      mu = _random_measure(rng, int(sizes[0]))
      nu = _random_measure(rng, int(sizes[1]))
      assert abs(w1_distance(mu, nu) - w1_bruteforce(mu, nu)) <= 1e-9
    assert time.perf_counter() - started < 10.0


class TestDuality:
  @pytest.mark.parametrize("test_fn", [
    CoordinateProjection(index=1),
    DistanceToPoint(point=(0.5, 0.0, -0.5, 1.0)),
    ClippedLinear(direction=(0.6, 0.0, 0.8, 0.0), offset=0.1, lower=-0.5, upper=0.5),
    ConstantFunction(value=3.0),
  ])
  def test_dual_lower_bound(self, rng, test_fn):
    mu = _random_measure(rng, 15)
    nu = _random_measure(rng, 11)
    assert dual_check(mu, nu, test_fn) <= w1_distance(mu, nu) + 1e-12

  def test_dual_rejects_steep_functions(self, rng):
    mu = _random_measure(rng, 3)
    with pytest.raises(ValueError):
      dual_check(mu, mu, ClippedLinear(direction=(2.0, 0.0, 0.0, 0.0)))


class TestPushForward:
  def test_bound_dominates_the_distance(self, rng):
    mu = _random_measure(rng, 20)
    first = lambda z: z + 0.1
    second = lambda z: 1.05 * z
    distance = w1_distance(push_forward(mu, first), push_forward(mu, second))
    assert distance <= push_forward_bound(mu, first, second) + 1e-12

  def test_subsample(self, rng):
    mu = _random_measure(rng, 20)
    sample = subsample(mu, 50, seed=1)
    assert sample.size == 50
    assert sample.is_uniform
    assert np.array_equal(sample.points, subsample(mu, 50, seed=1).points)
    with pytest.raises(ValueError):
      subsample(mu, 0, seed=1)
