import numpy as np
import pytest

from app.core.config_loader import clear_cache
from app.core.dynamics import ParticleState
from app.core.forces import ForceKind, ForceModel
from app.core.kernels import ConstantKernel, IdentityCoupling
from app.core.regions import AngleProfile, Ball, ClippedLinearRadius, SpeedBall, VisionCone
from app.models.config import RunConfig


@pytest.fixture
def rng():
  return np.random.default_rng(20240607)


@pytest.fixture
def ball():
  return Ball(1.0)


@pytest.fixture
def speed_ball():
  return SpeedBall(ClippedLinearRadius(1.0, 1.0, 1.0, 2.0))


@pytest.fixture
def vision_cone():
  return VisionCone(1.0, AngleProfile(np.pi / 3.0, 1.0))


@pytest.fixture(params=["ball", "speed_ball", "vision_cone"])
def region(request):
  return request.getfixturevalue(request.param)


@pytest.fixture
def cs_ball_model(ball):
  """ψ ≡ 1, h = id の Cucker-Smale 型"""
  return ForceModel(kind=ForceKind.CUCKER_SMALE, region=ball, psi=ConstantKernel(1.0), h=IdentityCoupling())


@pytest.fixture
def random_state(rng):
  def make(n: int = 50, dimension: int = 2, box: float = 1.0, speed: float = 1.0) -> ParticleState:
    positions = rng.uniform(-box, box, size=(n, dimension))
    velocities = rng.uniform(-speed, speed, size=(n, dimension))
    return ParticleState.uniform(positions, velocities)
  return make


@pytest.fixture
def small_config(tmp_path):
  """テスト用に縮小した実行設定"""
  def make(**updates) -> RunConfig:
    document = {
      "seed": 5,
      "region": {"kind": "ball", "r": 1.0},
      "dynamics": {"dt": 0.01, "t_end": 0.2, "record_every": 5},
      "study": {
        "dimension": 2,
        "n_particles": 20,
        "n_list": [20, 40],
        "n_ref": 160,
        "times": [0.0, 0.1, 0.2],
        "reference": {"eps": 0.1, "eta": 0.1, "quad_nodes": 4},
      },
      "output": {"directory": str(tmp_path / "outputs"), "prefix": "test"},
    }
    for path, value in updates.items():
      node = document
      keys = path.split("__")
      for key in keys[:-1]:
        node = node.setdefault(key, {})
      node[keys[-1]] = value
    return RunConfig.model_validate(document)
  return make


@pytest.fixture(autouse=True)
def _fresh_config_cache(monkeypatch):
  monkeypatch.delenv("SWARMLAB_OUTPUT_DIR", raising=False)
  clear_cache()
  yield
  clear_cache()
