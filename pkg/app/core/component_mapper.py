"""検証済みの設定モデルからドメインオブジェクトを組み立てるレジストリ"""
from typing import Any, Callable, Dict

import numpy as np

from app.core.dynamics import SimConfig
from app.core.errors import ConfigurationError
from app.core.forces import (
  ForceKind, ForceModel, Lower, Midpoint, MollifiedMode, Mode, SeededRandom, SelectionRule, SharpMode, Upper,
)
from app.core.kernels import (
  ClippedLinearCoupling, ConstantField, ConstantKernel, IdentityCoupling, MorseGradient, RationalKernel, RotationalField,
)
from app.core.logging_config import get_logger
from app.core.mollifier import MollifierParams
from app.core.regions import (
  AngleProfile, Ball, ClippedLinearRadius, FixedCone, RegionFamily, SaturatingRadius, SpeedBall, VisionCone,
)
from app.models.config import DynamicsConfig, ForceConfig, MollifierConfig, RunConfig

logger = get_logger(__name__)


class ComponentMapper:
  """kind 毎の構築関数を管理するクラス"""

  RADIUS_BUILDERS: Dict[str, Callable[[Any], Any]] = {
    "clipped_linear": lambda c: ClippedLinearRadius(c.r0, c.slope, c.r_min, c.r_max),
    "saturating": lambda c: SaturatingRadius(c.r0, c.r_inf, c.scale),
  }

  REGION_BUILDERS: Dict[str, Callable[[Any], RegionFamily]] = {
    "ball": lambda c: Ball(c.r),
    "speed_ball": lambda c: SpeedBall(ComponentMapper.build_radius(c.profile)),
    "vision_cone": lambda c: VisionCone(c.r, AngleProfile(c.theta_star, c.k)),
    "fixed_cone": lambda c: FixedCone(c.r, c.theta),
  }

  KERNEL_BUILDERS: Dict[str, Callable[[Any], Any]] = {
    "constant": lambda c: ConstantKernel(c.value),
    "rational": lambda c: RationalKernel(c.gamma),
  }

  COUPLING_BUILDERS: Dict[str, Callable[[Any], Any]] = {
    "identity": lambda c: IdentityCoupling(),
    "clipped_linear": lambda c: ClippedLinearCoupling(c.gain, c.clip),
  }

  FIELD_BUILDERS: Dict[str, Callable[[Any], Any]] = {
    "constant": lambda c: ConstantField(tuple(c.direction)),
    "rotational": lambda c: RotationalField(c.strength, c.frequency),
  }

  SELECTION_BUILDERS: Dict[str, Callable[[int], SelectionRule]] = {
    "midpoint": lambda seed: Midpoint(),
    "lower": lambda seed: Lower(),
    "upper": lambda seed: Upper(),
    "seeded_random": lambda seed: SeededRandom(seed),
  }

  @classmethod
  def _lookup(cls, table: Dict[str, Callable], kind: str, what: str) -> Callable:
    if kind not in table:
      logger.error(f"不明な{what}: {kind}")
      raise ConfigurationError(f"不明な{what}: {kind}. 利用可能: {list(table.keys())}")
    return table[kind]

  @classmethod
  def build_radius(cls, config) -> Any:
    return cls._lookup(cls.RADIUS_BUILDERS, config.kind, "半径プロファイル")(config)

  @classmethod
  def build_region(cls, config) -> RegionFamily:
    """領域設定から RegionFamily を構築

    Raises:
      ConfigurationError: 不明な kind、またはパラメータが不正な場合
    """
    builder = cls._lookup(cls.REGION_BUILDERS, config.kind, "領域")
    try:
      region = builder(config)
    except ValueError as e:
      logger.error(f"領域の構築に失敗しました: {e}")
      raise ConfigurationError(f"領域の構築に失敗しました: {e}") from e
    logger.debug(f"領域を構築: {region.describe()}")
    return region

  @classmethod
  def build_force(cls, config: ForceConfig, region: RegionFamily) -> ForceModel:
    """力の設定から ForceModel を構築（kind に不要な要素は渡さない）"""
    kind = ForceKind(config.kind)
    components: Dict[str, Any] = {}
    if kind in (ForceKind.CUCKER_SMALE, ForceKind.COMBINED):
      components["psi"] = cls._lookup(cls.KERNEL_BUILDERS, config.psi.kind, "通信重み")(config.psi)
      components["h"] = cls._lookup(cls.COUPLING_BUILDERS, config.h.kind, "速度結合")(config.h)
    if kind is not ForceKind.CUCKER_SMALE:
      g = config.grad_phi
      components["grad_phi"] = MorseGradient(g.repulsion, g.repulsion_length, g.attraction, g.attraction_length)
    if kind is ForceKind.FIRST_ORDER:
      components["w_field"] = cls._lookup(cls.FIELD_BUILDERS, config.w_field.kind, "方向場")(config.w_field)
    try:
      return ForceModel(kind=kind, region=region, speed_cap=config.speed_cap, amplitude=config.amplitude, **components)
    except ValueError as e:
      logger.error(f"力のモデルの構築に失敗しました: {e}")
      raise ConfigurationError(f"力のモデルの構築に失敗しました: {e}") from e

  @classmethod
  def build_mollifier(cls, config: MollifierConfig) -> MollifierParams:
    return MollifierParams(config.eps, config.eta, config.quad_nodes)

  @classmethod
  def build_mode(cls, config, seed: int) -> Mode:
    if config.kind == "mollified":
      return MollifiedMode(cls.build_mollifier(config))
    selection = cls._lookup(cls.SELECTION_BUILDERS, config.selection, "選択規則")(seed)
    return SharpMode(selection, config.tol_b)

  @classmethod
  def build_sim_config(cls, config: RunConfig, mode: Mode = None, dynamics: DynamicsConfig = None,
    record_every: int = None, check_max_speed: bool = None) -> SimConfig:
    """RunConfig から SimConfig を構築（スタディ用に一部を差し替え可能）"""
    dynamics = dynamics or config.dynamics
    region = cls.build_region(config.region)
    force = cls.build_force(config.force, region)
    try:
      return SimConfig(
        dt=dynamics.dt,
        t_end=dynamics.t_end,
        force=force,
        mode=mode if mode is not None else cls.build_mode(dynamics.mode, config.seed),
        record_every=record_every or dynamics.record_every,
        seed=config.seed,
        workers=config.workers,
        neighbor_search=dynamics.neighbor_search,
        check_max_speed=dynamics.check_max_speed if check_max_speed is None else check_max_speed,
      )
    except ValueError as e:
      logger.error(f"シミュレーション設定の構築に失敗しました: {e}")
      raise ConfigurationError(f"シミュレーション設定の構築に失敗しました: {e}") from e

  @staticmethod
  def record_stride(dt: float, times) -> int:
    """全ての評価時刻がスナップショットに載る記録間隔（ステップ数の最大公約数）"""
    if dt <= 0.0:
      raise ConfigurationError("評価時刻を使うスタディには dt > 0 が必要です")
    indices = []
    for t in times:
      k = int(round(t / dt))
      if abs(k * dt - t) > 1e-9 * max(1.0, t):
        raise ConfigurationError(f"時刻 {t} は dt={dt} の整数倍ではありません")
      indices.append(k)
    stride = int(np.gcd.reduce([k for k in indices if k > 0])) if any(indices) else 1
    return max(1, stride)
