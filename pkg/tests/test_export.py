import json

import numpy as np
import pytest

from app.core.component_mapper import ComponentMapper
from app.core.dynamics import simulate
from app.core.errors import ConfigurationError
from app.core.transport import DiscreteMeasure, w1
from app.models.config import RunConfig
from app.services.export import (
  build_manifest, output_path, read_measure_csv, read_trajectory_csv, write_json, write_measure_csv, write_plan_csv,
  write_trajectory_csv,
)
from app.services.sampling import sample_initial


@pytest.fixture
def trajectory(small_config):
  config = small_config()
  initial = sample_initial(config.study.initial, 15, config.seed)
  return simulate(initial, ComponentMapper.build_sim_config(config))


def test_trajectory_csv_is_exact(trajectory, tmp_path):
  path = write_trajectory_csv(trajectory, str(tmp_path / "trajectory.csv"))
  restored = read_trajectory_csv(path)
  np.testing.assert_array_equal(restored.times, trajectory.times)
  for original, loaded in zip(trajectory.snapshots, restored.snapshots):
    np.testing.assert_array_equal(loaded.positions, original.positions)
    np.testing.assert_array_equal(loaded.velocities, original.velocities)
    np.testing.assert_array_equal(loaded.weights, original.weights)
  assert list(restored.diagnostics["t"]) == list(trajectory.times)


def test_measure_csv_is_exact(rng, tmp_path):
  measure = DiscreteMeasure(rng.standard_normal((9, 3)), rng.dirichlet(np.ones(9)))
  restored = read_measure_csv(write_measure_csv(measure, str(tmp_path / "mu.csv")))
  np.testing.assert_array_equal(restored.points, measure.points)
  np.testing.assert_array_equal(restored.weights, measure.weights)


def test_plan_csv_columns(rng, tmp_path):
  mu = DiscreteMeasure.uniform(rng.standard_normal((4, 2)))
  nu = DiscreteMeasure.uniform(rng.standard_normal((4, 2)))
  _, plan = w1(mu, nu)
  path = write_plan_csv(plan, str(tmp_path / "plan.csv"))
  with open(path, encoding="utf-8") as f:
    assert f.readline().strip() == "i,j,mass"


def test_missing_files_are_configuration_errors(tmp_path):
  with pytest.raises(ConfigurationError):
    read_measure_csv(str(tmp_path / "absent.csv"))
  with pytest.raises(ConfigurationError):
    read_trajectory_csv(str(tmp_path / "absent.csv"))


def test_measure_csv_needs_a_weight_column(tmp_path):
  path = tmp_path / "points.csv"
  path.write_text("z0\n1.0\n", encoding="utf-8")
  with pytest.raises(ConfigurationError):
    read_measure_csv(str(path))


def test_manifest_echo_reloads_the_config(small_config):
  config = small_config()
  path = output_path(config, "manifest.json")
  assert path.endswith("test_manifest.json")
  write_json(build_manifest("simulate", config, [path], {"mass": 1.0}), path)
  with open(path, encoding="utf-8") as f:
    manifest = json.load(f)
  assert RunConfig.model_validate(manifest["config"]) == config
  assert manifest["outputs"] == ["test_manifest.json"]
  assert set(manifest["libraries"]) >= {"numpy", "pot", "pandas"}
