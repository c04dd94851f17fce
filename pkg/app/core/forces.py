"""粒子間相互作用の評価（鋭い指示関数モードと平滑化モード）

粒子 i への寄与は Σ_{j≠i} α_ij m_j T(X_i − X_j, V_i, V_j) で、α_ij は
K(V_i)（一階モデルでは K(w(X_i))）に対する指示関数の値または許容傾きの選択値。
和は j の昇順に逐次加算する。
"""
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING, Optional, Tuple, Union

import numpy as np
from joblib import Parallel, delayed

from app.core.kernels import Kernel, OrientationField, VectorKernel, VelocityCoupling, cap_speed
from app.core.logging_config import get_logger
from app.core.mollifier import MollifierParams, mollified_values
from app.core.neighbors import UniformGrid
from app.core.regions import DEFAULT_BOUNDARY_TOLERANCE, RegionFamily, SlopeSet

if TYPE_CHECKING:
  from app.core.dynamics import ParticleState

logger = get_logger(__name__)

# 1ブロックで扱う (行 × 候補) ペアの最大数
_BLOCK_PAIRS = 1 << 18


class SelectionRule(ABC):
  """許容傾き集合が [0,1] となるペアでの α の選び方"""

  name: str = "selection"

  @abstractmethod
  def alphas(self, rows: np.ndarray, cols: np.ndarray, n_particles: int, step: int) -> np.ndarray:
    """rows (B,) と cols (B, K) に対する α (B, K)"""


@dataclass(frozen=True)
class Midpoint(SelectionRule):
  name = "midpoint"

  def alphas(self, rows, cols, n_particles, step):
    return np.full(cols.shape, 0.5)


@dataclass(frozen=True)
class Lower(SelectionRule):
  name = "lower"

  def alphas(self, rows, cols, n_particles, step):
    return np.zeros(cols.shape)


@dataclass(frozen=True)
class Upper(SelectionRule):
  name = "upper"

  def alphas(self, rows, cols, n_particles, step):
    return np.ones(cols.shape)


@dataclass(frozen=True)
class SeededRandom(SelectionRule):
  """行毎に (seed, step, i) から生成した一様乱数を使う"""
  seed: int = 0
  name = "seeded_random"

  def alphas(self, rows, cols, n_particles, step):
    out = np.empty(cols.shape)
    for b, i in enumerate(rows):
      draws = np.random.default_rng([self.seed, step, int(i)]).random(n_particles)
      out[b] = draws[cols[b]]
    return out


@dataclass(frozen=True)
class SharpMode:
  selection: SelectionRule = field(default_factory=Midpoint)
  tol_b: float = DEFAULT_BOUNDARY_TOLERANCE

  def __post_init__(self):
    if self.tol_b <= 0.0:
      raise ValueError(f"tol_b は正の値で指定してください: {self.tol_b}")


@dataclass(frozen=True)
class MollifiedMode:
  params: MollifierParams = field(default_factory=MollifierParams)


Mode = Union[SharpMode, MollifiedMode]


class ForceKind(str, Enum):
  CUCKER_SMALE = "cucker_smale"
  ATTRACTIVE_REPULSIVE = "attractive_repulsive"
  FIRST_ORDER = "first_order"
  COMBINED = "combined"


@dataclass(frozen=True)
class ForceModel:
  """力のモデル

  Attributes:
    kind: モデルの種類
    region: 感受領域族
    psi, h: Cucker-Smale 型の通信重みと速度結合
    grad_phi: ポテンシャル勾配
    w_field: 一階モデルの方向場
    speed_cap: h の中で速度を打ち切る大きさ（None で無効）
    amplitude: 力全体に掛ける係数
  """
  kind: ForceKind
  region: RegionFamily
  psi: Optional[Kernel] = None
  h: Optional[VelocityCoupling] = None
  grad_phi: Optional[VectorKernel] = None
  w_field: Optional[OrientationField] = None
  speed_cap: Optional[float] = None
  amplitude: float = 1.0

  def __post_init__(self):
    if self.kind in (ForceKind.CUCKER_SMALE, ForceKind.COMBINED) and (self.psi is None or self.h is None):
      raise ValueError(f"{self.kind.value} には psi と h が必要です")
    if self.kind in (ForceKind.ATTRACTIVE_REPULSIVE, ForceKind.FIRST_ORDER, ForceKind.COMBINED) and self.grad_phi is None:
      raise ValueError(f"{self.kind.value} には grad_phi が必要です")
    if self.kind is ForceKind.FIRST_ORDER:
      if self.w_field is None:
        raise ValueError("first_order には w_field が必要です")
      if self.w_field.min_norm <= 0.0:
        raise ValueError(f"方向場は |w| ≥ w0 > 0 を満たす必要があります: w0={self.w_field.min_norm}")
    if self.speed_cap is not None and self.speed_cap <= 0.0:
      raise ValueError(f"speed_cap は正の値で指定してください: {self.speed_cap}")
    if not np.isfinite(self.region.velocity_lipschitz):
      raise ValueError(f"領域 {self.region.name} は正則性仮定を満たさないためダイナミクスでは使用できません")

  @property
  def is_first_order(self) -> bool:
    return self.kind is ForceKind.FIRST_ORDER

  @property
  def uses_alignment(self) -> bool:
    return self.kind in (ForceKind.CUCKER_SMALE, ForceKind.COMBINED)

  @property
  def uses_potential(self) -> bool:
    return self.kind is not ForceKind.CUCKER_SMALE

  @property
  def is_monotone_alignment(self) -> bool:
    """最大速さが単調非増加となる Cucker-Smale 型（h = id、打ち切りなし、振幅 ≥ 0）かどうか"""
    return (self.kind is ForceKind.CUCKER_SMALE and self.h.is_identity and self.speed_cap is None
      and self.amplitude >= 0.0)

  def orientation(self, positions: np.ndarray, velocities: np.ndarray) -> np.ndarray:
    """領域を決める向き（V_i、一階モデルでは w(X_i)）"""
    if self.is_first_order:
      return self.w_field(positions)
    return velocities

  def pair_terms(self, displacement: np.ndarray, v_target: np.ndarray, v_source: np.ndarray) -> np.ndarray:
    """指示関数と重みを掛ける前のペア項 T"""
    terms = np.zeros(np.broadcast_shapes(displacement.shape, v_target.shape, v_source.shape))
    if self.uses_alignment:
      relative = cap_speed(v_source, self.speed_cap) - cap_speed(v_target, self.speed_cap)
      terms = terms + self.psi(displacement)[..., None] * self.h(relative)
    if self.uses_potential:
      terms = terms + self.grad_phi(displacement)
    return terms

  def acceleration_bound(self, max_speed: float) -> float:
    """|加速度|（一階モデルでは |速度場|）の解析的上限"""
    bound = 0.0
    if self.uses_alignment:
      radius = 2.0 * max_speed if self.speed_cap is None else 2.0 * min(max_speed, self.speed_cap)
      bound += self.psi.sup * self.h.bound(radius)
    if self.uses_potential:
      bound += self.grad_phi.sup
    return abs(self.amplitude) * bound

  def interaction_radius(self, mode: Mode) -> float:
    """これより遠いペアの寄与は厳密に 0"""
    if isinstance(mode, MollifiedMode):
      return self.region.global_radius + mode.params.saturation_margin(self.region)
    return self.region.global_radius + mode.tol_b


def _indicator_weights(model: ForceModel, orientation: np.ndarray, displacement: np.ndarray, rows: np.ndarray,
  cols: np.ndarray, valid: np.ndarray, n_particles: int, mode: Mode, step: int) -> np.ndarray:
  alpha = np.zeros(cols.shape)
  if not valid.any():
    return alpha
  region = model.region
  if isinstance(mode, MollifiedMode):
    alpha[valid] = mollified_values(region, orientation[valid], displacement[valid], mode.params)
    return alpha
  codes = region.slope_codes(orientation, displacement, mode.tol_b)
  alpha = np.where(codes == SlopeSet.ONE.value, 1.0, 0.0)
  ambiguous = (codes == SlopeSet.FULL.value) & valid
  if ambiguous.any():
    alpha = np.where(ambiguous, mode.selection.alphas(rows, cols, n_particles, step), alpha)
  return np.where(valid, alpha, 0.0)


def _block_field(model: ForceModel, state: "ParticleState", targets_x: np.ndarray, targets_v: np.ndarray,
  rows: np.ndarray, mode: Mode, step: int, exclude_self: bool, grid: Optional[UniformGrid]) -> np.ndarray:
  positions, velocities, weights = state.positions, state.velocities, state.weights
  n_particles = positions.shape[0]
  n_rows, dimension = targets_x.shape
  if grid is None:
    cols = np.broadcast_to(np.arange(n_particles), (n_rows, n_particles))
    valid = np.ones((n_rows, n_particles), dtype=bool)
  else:
    cols, valid = grid.candidates(targets_x)
  if cols.shape[1] == 0:
    return np.zeros((n_rows, dimension))
  if exclude_self:
    valid = valid & (cols != rows[:, None])
  displacement = targets_x[:, None, :] - positions[cols]
  orientation = np.broadcast_to(model.orientation(targets_x, targets_v)[:, None, :], displacement.shape)
  alpha = _indicator_weights(model, orientation, displacement, rows, cols, valid, n_particles, mode, step)
  terms = model.pair_terms(displacement, targets_v[:, None, :], velocities[cols])
  scale = model.amplitude * (alpha * weights[cols])
  return np.cumsum(terms * scale[..., None], axis=1)[:, -1, :]


def _row_blocks(n_rows: int, n_cols: int):
  size = max(1, _BLOCK_PAIRS // max(1, n_cols))
  return [(start, min(start + size, n_rows)) for start in range(0, n_rows, size)]


def _grid_for(model: ForceModel, state: "ParticleState", mode: Mode, neighbor_search: str) -> Optional[UniformGrid]:
  if neighbor_search == "dense":
    return None
  if neighbor_search == "grid":
    return UniformGrid(model.interaction_radius(mode)).build(state.positions)
  raise ValueError(f"未対応の近傍探索です: {neighbor_search}")


def field_at(model: ForceModel, state: "ParticleState", targets_x: np.ndarray, targets_v: np.ndarray, mode: Mode,
  rows: Optional[np.ndarray] = None, step: int = 0, exclude_self: bool = False, workers: int = 1,
  neighbor_search: str = "dense") -> np.ndarray:
  """任意の点 (x, v) における相互作用場

  粒子自身の位置で評価する場合は rows に粒子番号を渡し exclude_self=True とする。
  平均場の力 F(f)(x, v) を調べる場合は exclude_self=False のまま使う。

  Returns:
    np.ndarray: (B, d) の加速度（一階モデルでは速度場）
  """
  targets_x = np.atleast_2d(np.asarray(targets_x, dtype=float))
  targets_v = np.atleast_2d(np.asarray(targets_v, dtype=float))
  n_rows = targets_x.shape[0]
  rows = np.arange(n_rows) if rows is None else np.asarray(rows, dtype=np.int64)
  grid = _grid_for(model, state, mode, neighbor_search)
  blocks = _row_blocks(n_rows, state.positions.shape[0])

  def run(block: Tuple[int, int]) -> np.ndarray:
    lo, hi = block
    return _block_field(model, state, targets_x[lo:hi], targets_v[lo:hi], rows[lo:hi], mode, step, exclude_self, grid)

  if workers > 1 and len(blocks) > 1:
    parts = Parallel(n_jobs=workers, prefer="threads")(delayed(run)(block) for block in blocks)
  else:
    parts = [run(block) for block in blocks]
  if not parts:
    return np.zeros((0, state.dimension))
  return np.concatenate(parts, axis=0)


def interaction_field(model: ForceModel, state: "ParticleState", mode: Mode, step: int = 0, workers: int = 1,
  neighbor_search: str = "dense") -> np.ndarray:
  """全粒子への相互作用（二階モデルは加速度、一階モデルは速度場）"""
  return field_at(model, state, state.positions, state.velocities, mode, rows=np.arange(state.n_particles),
    step=step, exclude_self=True, workers=workers, neighbor_search=neighbor_search)


def _single(model: ForceModel, state: "ParticleState", i: int, mode: Mode) -> np.ndarray:
  if not 0 <= i < state.n_particles:
    raise IndexError(f"粒子番号が範囲外です: {i}")
  return field_at(model, state, state.positions[i:i + 1], state.velocities[i:i + 1], mode,
    rows=np.array([i]), exclude_self=True)[0]


def accel_sharp(model: ForceModel, state: "ParticleState", i: int, selection: Optional[SelectionRule] = None,
  tol_b: float = DEFAULT_BOUNDARY_TOLERANCE) -> np.ndarray:
  """鋭い指示関数（境界では selection による α）での粒子 i の加速度"""
  return _single(model, state, i, SharpMode(selection or Midpoint(), tol_b))


def accel_mollified(model: ForceModel, state: "ParticleState", i: int, params: MollifierParams) -> np.ndarray:
  """平滑化指示関数での粒子 i の加速度"""
  return _single(model, state, i, MollifiedMode(params))


def velocity_first_order(model: ForceModel, state: "ParticleState", i: int, selection: Optional[SelectionRule] = None,
  tol_b: float = DEFAULT_BOUNDARY_TOLERANCE) -> np.ndarray:
  """一階モデルの粒子 i における速度場 u

  Raises:
    ValueError: 一階モデル以外が渡された場合
  """
  if not model.is_first_order:
    logger.error(f"一階モデル以外が指定されました: {model.kind.value}")
    raise ValueError(f"velocity_first_order には first_order モデルが必要です: {model.kind.value}")
  return _single(model, state, i, SharpMode(selection or Midpoint(), tol_b))
