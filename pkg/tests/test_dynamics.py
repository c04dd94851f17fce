import numpy as np
import pytest

from app.core.dynamics import (
  ParticleState, SimConfig, kinetic_energy, max_speed, momentum, simulate, step, to_measure, velocity_diameter,
  velocity_support_radius,
)
from app.core.errors import NumericalAbortError
from app.core.forces import ForceKind, ForceModel, MollifiedMode, SharpMode
from app.core.kernels import ClippedLinearCoupling, ConstantField, ConstantKernel, MorseGradient, RationalKernel
from app.core.mollifier import MollifierParams


@pytest.fixture
def free_model(ball):
  return ForceModel(kind=ForceKind.CUCKER_SMALE, region=ball, psi=ConstantKernel(1.0),
    h=ClippedLinearCoupling(1.0, 1.0), amplitude=0.0)


class TestParticleState:
  def test_state_is_read_only(self, random_state):
    state = random_state(n=5)
    with pytest.raises(ValueError):
      state.positions[0, 0] = 1.0

  def test_weights_must_sum_to_one(self):
    with pytest.raises(ValueError):
      ParticleState(np.zeros((2, 2)), np.zeros((2, 2)), np.array([0.5, 0.4]))

  def test_dimension_and_shapes_are_checked(self):
    with pytest.raises(ValueError):
      ParticleState.uniform(np.zeros((3, 4)), np.zeros((3, 4)))
    with pytest.raises(ValueError):
      ParticleState.uniform(np.zeros((3, 2)), np.zeros((2, 2)))

  def test_measure_round_trip(self, random_state):
    state = random_state(n=7, dimension=3)
    restored = ParticleState.from_measure(to_measure(state), 3)
    np.testing.assert_array_equal(restored.positions, state.positions)
    np.testing.assert_array_equal(restored.velocities, state.velocities)
    with pytest.raises(ValueError):
      ParticleState.from_measure(to_measure(state), 2)


class TestDiagnostics:
  def test_quantities(self):
    state = ParticleState(np.zeros((2, 2)), np.array([[3.0, 4.0], [0.0, -1.0]]), np.array([0.25, 0.75]))
    assert max_speed(state) == pytest.approx(5.0)
    np.testing.assert_allclose(momentum(state), [0.75, 0.25])
    assert kinetic_energy(state) == pytest.approx(0.5 * (0.25 * 25.0 + 0.75 * 1.0))
    assert velocity_diameter(state) == pytest.approx(np.hypot(3.0, 5.0))


class TestSimulate:
  def test_free_streaming(self, free_model, random_state):
    initial = random_state(n=6)
    trajectory = simulate(initial, SimConfig(dt=0.01, t_end=0.1, force=free_model))
    np.testing.assert_allclose(trajectory.final.positions, initial.positions + 0.1 * initial.velocities, atol=1e-14)
    np.testing.assert_array_equal(trajectory.final.velocities, initial.velocities)
    assert len(trajectory.diagnostics) == 11

  def test_single_particle_moves_in_a_straight_line(self, cs_ball_model):
    initial = ParticleState.uniform(np.array([[0.0, 0.0]]), np.array([[1.0, 2.0]]))
    trajectory = simulate(initial, SimConfig(dt=0.01, t_end=0.1, force=cs_ball_model))
    np.testing.assert_allclose(trajectory.final.positions, [[0.1, 0.2]])

  def test_zero_time_step_keeps_the_initial_state(self, cs_ball_model, random_state):
    initial = random_state(n=4)
    trajectory = simulate(initial, SimConfig(dt=0.0, t_end=0.0, force=cs_ball_model))
    assert len(trajectory.snapshots) == 1
    assert trajectory.final is initial

  def test_time_step_longer_than_horizon_is_rejected(self, cs_ball_model, random_state):
    with pytest.raises(ValueError):
      simulate(random_state(n=4), SimConfig(dt=1.0, t_end=0.5, force=cs_ball_model))

  def test_record_every_controls_snapshots(self, cs_ball_model, random_state):
    trajectory = simulate(random_state(n=10), SimConfig(dt=0.01, t_end=0.2, force=cs_ball_model, record_every=5))
    np.testing.assert_allclose(trajectory.times, [0.0, 0.05, 0.1, 0.15, 0.2])
    assert trajectory.at(0.1) is trajectory.snapshots[2]
    with pytest.raises(KeyError):
      trajectory.at(0.12)
    assert np.isnan(trajectory.diagnostics["velocity_diameter"].iloc[1])
    assert np.isfinite(trajectory.diagnostics["velocity_diameter"].iloc[5])

  def test_final_state_is_recorded_off_the_stride(self, free_model, random_state):
    initial = random_state(n=5)
    trajectory = simulate(initial, SimConfig(dt=0.01, t_end=0.23, force=free_model, record_every=5))
    np.testing.assert_allclose(trajectory.times, [0.0, 0.05, 0.1, 0.15, 0.2, 0.23])
    assert trajectory.times[-1] == pytest.approx(0.23)
    np.testing.assert_allclose(trajectory.final.positions, initial.positions + 0.23 * initial.velocities, atol=1e-14)
    assert np.isfinite(trajectory.diagnostics["velocity_diameter"].iloc[-1])
    assert trajectory.at(0.23) is trajectory.final

  def test_alignment_conserves_momentum(self, cs_ball_model, random_state):
    initial = random_state(n=60, box=0.8)
    trajectory = simulate(initial, SimConfig(dt=0.01, t_end=0.5, force=cs_ball_model))
    np.testing.assert_allclose(momentum(trajectory.final), momentum(initial), atol=1e-12)

  def test_alignment_does_not_increase_max_speed(self, cs_ball_model, random_state):
    config = SimConfig(dt=0.01, t_end=0.5, force=cs_ball_model, check_max_speed=True, record_every=10)
    trajectory = simulate(random_state(n=60, box=0.8, speed=2.0), config)
    speeds = velocity_support_radius(trajectory)
    assert np.all(np.diff(speeds) <= 1e-12)

  def test_speed_check_requires_monotone_alignment(self, ball):
    model = ForceModel(kind=ForceKind.COMBINED, region=ball, psi=RationalKernel(), h=ClippedLinearCoupling(),
      grad_phi=MorseGradient())
    with pytest.raises(ValueError):
      SimConfig(dt=0.01, t_end=0.1, force=model, check_max_speed=True)

  def test_speed_check_requires_small_time_step(self, cs_ball_model):
    with pytest.raises(ValueError):
      SimConfig(dt=2.0, t_end=4.0, force=cs_ball_model, check_max_speed=True)

  def test_non_finite_state_aborts_with_time(self, cs_ball_model):
    initial = ParticleState.uniform(np.zeros((2, 2)), np.array([[np.inf, 0.0], [0.0, 0.0]]))
    with pytest.raises(NumericalAbortError) as excinfo:
      simulate(initial, SimConfig(dt=0.01, t_end=0.1, force=cs_ball_model))
    assert excinfo.value.time == pytest.approx(0.01)
    assert excinfo.value.exit_code == 3

  def test_runs_are_deterministic(self, vision_cone, random_state):
    model = ForceModel(kind=ForceKind.COMBINED, region=vision_cone, psi=RationalKernel(), h=ClippedLinearCoupling(),
      grad_phi=MorseGradient())
    initial = random_state(n=40, box=1.5, speed=2.0)
    first = simulate(initial, SimConfig(dt=0.01, t_end=0.1, force=model))
    second = simulate(initial, SimConfig(dt=0.01, t_end=0.1, force=model, workers=3, neighbor_search="grid"))
    assert np.array_equal(first.final.positions, second.final.positions)
    assert np.array_equal(first.final.velocities, second.final.velocities)

  def test_mollified_mode_runs(self, vision_cone, random_state):
    model = ForceModel(kind=ForceKind.CUCKER_SMALE, region=vision_cone, psi=RationalKernel(), h=ClippedLinearCoupling())
    mode = MollifiedMode(MollifierParams(0.1, 0.1, 4))
    trajectory = simulate(random_state(n=20), SimConfig(dt=0.02, t_end=0.1, force=model, mode=mode))
    assert np.all(np.isfinite(trajectory.final.velocities))

  def test_first_order_stores_the_velocity_field(self, ball):
    model = ForceModel(kind=ForceKind.FIRST_ORDER, region=ball, grad_phi=MorseGradient(),
      w_field=ConstantField((1.0, 0.0)))
    initial = ParticleState.uniform(np.array([[0.0, 0.0], [0.5, 0.0]]), np.zeros((2, 2)))
    advanced = step(initial, SimConfig(dt=0.1, t_end=0.1, force=model, mode=SharpMode()))
    np.testing.assert_allclose(advanced.positions, initial.positions + 0.1 * advanced.velocities)
    assert np.any(advanced.velocities != 0.0)
