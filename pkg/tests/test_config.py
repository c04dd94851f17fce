import glob
import json
import os

import pytest

from app.core.component_mapper import ComponentMapper
from app.core.config_loader import OUTPUT_DIR_ENV, ConfigLoader, load_run_config
from app.core.errors import ConfigurationError
from app.core.forces import MollifiedMode, SeededRandom
from app.core.regions import FixedCone, SpeedBall, VisionCone
from app.models.config import RunConfig

CONFIG_DIR = os.path.join(os.path.dirname(os.path.dirname(__file__)), "configs")


@pytest.mark.parametrize("path", sorted(glob.glob(os.path.join(CONFIG_DIR, "*.json"))))
def test_shipped_configs_validate(path):
  config = load_run_config(path)
  assert config.output.prefix


def test_defaults_without_a_file():
  config = load_run_config()
  assert config.region.kind == "vision_cone"
  assert config.dynamics.mode.kind == "sharp"
  assert config.workers == 1


def test_default_file_matches_the_path_helper():
  assert os.path.samefile(ConfigLoader().default_config_path(), os.path.join(CONFIG_DIR, "default.json"))


class TestOverrides:
  def test_values_are_parsed_as_json(self):
    config = load_run_config(None, ["dynamics.dt=0.0005", "study.n_list=[10, 20]", "output.prefix=trial"])
    assert config.dynamics.dt == 0.0005
    assert config.study.n_list == [10, 20]
    assert config.output.prefix == "trial"

  def test_nested_discriminated_override(self):
    config = load_run_config(None, ['dynamics.mode={"kind": "mollified", "eps": 0.1}'])
    assert config.dynamics.mode.kind == "mollified"
    assert config.dynamics.mode.eps == 0.1

  @pytest.mark.parametrize("override", ["region.colour=1", "dynamics.dt", "=3", "seed=-1", "study.times=[0.0, 2.0]"])
  def test_invalid_overrides(self, override):
    with pytest.raises(ConfigurationError):
      load_run_config(None, [override])

  def test_override_through_a_scalar_is_rejected(self):
    with pytest.raises(ConfigurationError):
      load_run_config(None, ["seed.value=1"])


class TestFiles:
  def test_missing_file(self, tmp_path):
    with pytest.raises(ConfigurationError):
      load_run_config(str(tmp_path / "absent.json"))

  def test_malformed_file(self, tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{not json", encoding="utf-8")
    with pytest.raises(ConfigurationError):
      load_run_config(str(path))

  def test_non_object_file(self, tmp_path):
    path = tmp_path / "list.json"
    path.write_text("[1, 2]", encoding="utf-8")
    with pytest.raises(ConfigurationError):
      load_run_config(str(path))

  def test_unknown_keys_are_rejected(self, tmp_path):
    path = tmp_path / "extra.json"
    path.write_text(json.dumps({"dynamics": {"dt": 0.01, "substeps": 4}}), encoding="utf-8")
    with pytest.raises(ConfigurationError):
      load_run_config(str(path))

  def test_environment_overrides_the_output_directory(self, tmp_path, monkeypatch):
    monkeypatch.setenv(OUTPUT_DIR_ENV, str(tmp_path / "env"))
    assert load_run_config().output.directory == str(tmp_path / "env")

  def test_edited_file_is_reloaded(self, tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({"seed": 1}), encoding="utf-8")
    assert load_run_config(str(path)).seed == 1
    path.write_text(json.dumps({"seed": 22}), encoding="utf-8")
    assert load_run_config(str(path)).seed == 22


class TestModels:
  def test_echo_round_trip(self):
    config = load_run_config(os.path.join(CONFIG_DIR, "two_cluster_stability.json"))
    assert RunConfig.model_validate(config.echo()) == config

  def test_schema_lists_the_sections(self):
    schema = RunConfig.model_json_schema()
    assert {"region", "force", "dynamics", "study", "output"} <= set(schema["properties"])

  def test_dimension_consistency(self):
    with pytest.raises(ValueError):
      RunConfig.model_validate({"study": {"dimension": 3}})

  def test_eps_grid_is_sorted(self):
    config = RunConfig.model_validate({"study": {"hypothesis": {"eps_grid": [0.2, 0.05, 0.1]}}})
    assert config.study.hypothesis.eps_grid == [0.05, 0.1, 0.2]


class TestComponentMapper:
  def test_regions(self):
    assert isinstance(ComponentMapper.build_region(load_run_config().region), VisionCone)
    config = RunConfig.model_validate({"region": {"kind": "speed_ball", "profile": {"kind": "saturating"}}})
    assert isinstance(ComponentMapper.build_region(config.region), SpeedBall)

  def test_fixed_cone_builds_but_cannot_drive_dynamics(self):
    config = load_run_config(os.path.join(CONFIG_DIR, "fixed_cone_control.json"))
    region = ComponentMapper.build_region(config.region)
    assert isinstance(region, FixedCone)
    with pytest.raises(ConfigurationError):
      ComponentMapper.build_force(config.force, region)

  def test_invalid_radius_profile_is_a_configuration_error(self):
    config = RunConfig.model_validate({"region": {"kind": "speed_ball", "profile": {"r_min": 3.0, "r_max": 2.0}}})
    with pytest.raises(ConfigurationError):
      ComponentMapper.build_region(config.region)

  def test_sim_config(self):
    config = load_run_config(None, ['dynamics.mode={"kind": "sharp", "selection": "seeded_random"}', "seed=9"])
    sim = ComponentMapper.build_sim_config(config)
    assert sim.mode.selection == SeededRandom(9)
    mollified = ComponentMapper.build_sim_config(config, mode=MollifiedMode(), record_every=7)
    assert isinstance(mollified.mode, MollifiedMode)
    assert mollified.record_every == 7

  def test_speed_check_with_unsuitable_force(self):
    config = load_run_config(None, ["force.kind=combined", "dynamics.check_max_speed=true"])
    with pytest.raises(ConfigurationError):
      ComponentMapper.build_sim_config(config)

  def test_record_stride(self):
    assert ComponentMapper.record_stride(0.01, [0.0, 0.1, 0.25]) == 5
    assert ComponentMapper.record_stride(0.01, [0.0]) == 1
    with pytest.raises(ConfigurationError):
      ComponentMapper.record_stride(0.01, [0.0, 0.105])
    with pytest.raises(ConfigurationError):
      ComponentMapper.record_stride(0.0, [0.0, 0.1])
