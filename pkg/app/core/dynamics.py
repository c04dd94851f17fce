"""N 粒子系の時間積分（陽的 Euler、Jacobi 更新）と診断量"""
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
import pandas as pd

from app.core.errors import NumericalAbortError
from app.core.forces import ForceModel, MollifiedMode, Mode, SharpMode, interaction_field
from app.core.logging_config import get_logger
from app.core.regions import SUPPORTED_DIMENSIONS
from app.core.transport import DiscreteMeasure

logger = get_logger(__name__)

WEIGHT_SUM_TOLERANCE = 1e-12
MAX_SPEED_TOLERANCE = 1e-12


def _frozen(array) -> np.ndarray:
  array = np.array(array, dtype=float)
  array.setflags(write=False)
  return array


@dataclass(frozen=True, eq=False)
class ParticleState:
  """粒子の位置・速度・重み

  Attributes:
    positions: (N, d)
    velocities: (N, d)
    weights: (N,) 正で総和 1
  """
  positions: np.ndarray
  velocities: np.ndarray
  weights: np.ndarray

  def __post_init__(self):
    positions, velocities, weights = _frozen(self.positions), _frozen(self.velocities), _frozen(self.weights)
    if positions.ndim != 2 or positions.shape[0] < 1:
      raise ValueError(f"positions は (N, d) 形状で N ≥ 1 が必要です: {positions.shape}")
    if positions.shape[1] not in SUPPORTED_DIMENSIONS:
      raise ValueError(f"次元は 2 または 3 のみ対応しています: d={positions.shape[1]}")
    if velocities.shape != positions.shape:
      raise ValueError(f"velocities の形状が positions と一致しません: {velocities.shape} != {positions.shape}")
    if weights.shape != (positions.shape[0],):
      raise ValueError(f"weights の形状が不正です: {weights.shape}")
    if np.any(weights <= 0.0):
      raise ValueError("weights は全て正である必要があります")
    if abs(weights.sum() - 1.0) > WEIGHT_SUM_TOLERANCE:
      raise ValueError(f"weights の総和は 1 である必要があります: {weights.sum():.17g}")
    object.__setattr__(self, "positions", positions)
    object.__setattr__(self, "velocities", velocities)
    object.__setattr__(self, "weights", weights)

  @classmethod
  def uniform(cls, positions, velocities) -> "ParticleState":
    """一様重み 1/N の状態"""
    positions = np.asarray(positions, dtype=float)
    n = positions.shape[0]
    return cls(positions, velocities, np.full(n, 1.0 / n))

  @classmethod
  def from_measure(cls, measure: DiscreteMeasure, dimension: int) -> "ParticleState":
    """to_measure の逆変換"""
    if measure.dimension != 2 * dimension:
      raise ValueError(f"測度の次元 {measure.dimension} は相空間 2×{dimension} と一致しません")
    return cls(measure.points[:, :dimension], measure.points[:, dimension:], measure.weights)

  @property
  def n_particles(self) -> int:
    return self.positions.shape[0]

  @property
  def dimension(self) -> int:
    return self.positions.shape[1]

  def replace(self, positions: np.ndarray, velocities: np.ndarray) -> "ParticleState":
    return ParticleState(positions, velocities, self.weights)


@dataclass(frozen=True)
class SimConfig:
  """シミュレーション設定

  Attributes:
    dt: 時間刻み（0 以上）
    t_end: 終了時刻
    force: 力のモデル
    mode: SharpMode または MollifiedMode
    record_every: スナップショットを記録するステップ間隔（最終ステップは常に記録する）
    seed: 乱数シード（記録用。選択規則の乱数は SeededRandom が保持）
    workers: 粒子ブロックを並列評価するスレッド数
    neighbor_search: "dense" または "grid"
    check_max_speed: 最大速さの単調性を毎ステップ検査するか
  """
  dt: float
  t_end: float
  force: ForceModel
  mode: Mode = field(default_factory=SharpMode)
  record_every: int = 1
  seed: int = 0
  workers: int = 1
  neighbor_search: str = "dense"
  check_max_speed: bool = False

  def __post_init__(self):
    if self.dt < 0.0 or self.t_end < 0.0:
      raise ValueError(f"dt, t_end は 0 以上で指定してください: dt={self.dt}, t_end={self.t_end}")
    if self.record_every < 1:
      raise ValueError(f"record_every は 1 以上で指定してください: {self.record_every}")
    if self.neighbor_search not in ("dense", "grid"):
      raise ValueError(f"未対応の近傍探索です: {self.neighbor_search}")
    if self.check_max_speed:
      if not self.force.is_monotone_alignment:
        raise ValueError("最大速さの単調性検査は Cucker-Smale 型（h = id、打ち切りなし、振幅 ≥ 0）でのみ有効です")
      if self.dt * self.force.psi.sup * self.force.amplitude > 1.0:
        raise ValueError(f"最大速さの単調性検査には dt·sup|ψ| ≤ 1 が必要です: dt={self.dt}, sup|ψ|={self.force.psi.sup}")

  @property
  def n_steps(self) -> int:
    if self.dt == 0.0:
      return 0
    return int(np.floor(self.t_end / self.dt + 1e-9))


@dataclass(frozen=True, eq=False)
class Trajectory:
  """スナップショット列と毎ステップの診断量"""
  times: np.ndarray
  snapshots: Tuple[ParticleState, ...]
  diagnostics: pd.DataFrame

  @property
  def final(self) -> ParticleState:
    return self.snapshots[-1]

  def at(self, t: float, tolerance: float = 1e-9) -> ParticleState:
    """時刻 t のスナップショット"""
    index = int(np.argmin(np.abs(self.times - t)))
    if abs(self.times[index] - t) > tolerance:
      raise KeyError(f"時刻 {t} のスナップショットは記録されていません")
    return self.snapshots[index]


def max_speed(state: ParticleState) -> float:
  return float(np.max(np.linalg.norm(state.velocities, axis=1)))


def momentum(state: ParticleState) -> np.ndarray:
  """Σ m_i V_i"""
  return state.weights @ state.velocities


def kinetic_energy(state: ParticleState) -> float:
  return float(0.5 * np.sum(state.weights * np.sum(state.velocities ** 2, axis=1)))


def velocity_diameter(state: ParticleState) -> float:
  """max_{i,j} |V_i − V_j|"""
  velocities = state.velocities
  if velocities.shape[0] == 1:
    return 0.0
  largest = 0.0
  for start in range(0, velocities.shape[0], 512):
    block = velocities[start:start + 512]
    gaps = np.linalg.norm(block[:, None, :] - velocities[None, :, :], axis=-1)
    largest = max(largest, float(gaps.max()))
  return largest


def velocity_support_radius(trajectory: Trajectory) -> np.ndarray:
  """毎ステップの速度台半径 max_i |V_i(t)|"""
  return trajectory.diagnostics["max_speed"].to_numpy()


def to_measure(state: ParticleState) -> DiscreteMeasure:
  """経験測度 Σ m_i δ_{(X_i, V_i)}"""
  return DiscreteMeasure(np.hstack([state.positions, state.velocities]), state.weights)


def _diagnostics_row(step_index: int, time: float, state: ParticleState, with_diameter: bool = True) -> dict:
  row = {"step": step_index, "t": time, "max_speed": max_speed(state)}
  for axis, value in enumerate(momentum(state)):
    row[f"momentum_{axis}"] = float(value)
  row["kinetic_energy"] = kinetic_energy(state)
  row["velocity_diameter"] = velocity_diameter(state) if with_diameter else float("nan")
  return row


def step(state: ParticleState, config: SimConfig, step_index: int = 0, time: Optional[float] = None) -> ParticleState:
  """陽的 Euler の1ステップ

  二階モデル: X ← X + dt·V, V ← V + dt·A（A はステップ前のスナップショットで評価）。
  一階モデル: X ← X + dt·u, 速度列には u を格納する。

  Raises:
    NumericalAbortError: 更新後の状態が有限でない場合
  """
  if config.dt == 0.0:
    return state
  field_values = interaction_field(config.force, state, config.mode, step=step_index, workers=config.workers,
    neighbor_search=config.neighbor_search)
  if config.force.is_first_order:
    positions = state.positions + config.dt * field_values
    velocities = field_values
  else:
    positions = state.positions + config.dt * state.velocities
    velocities = state.velocities + config.dt * field_values
  if not (np.all(np.isfinite(positions)) and np.all(np.isfinite(velocities))):
    logger.error(f"非有限の状態を検出しました: step={step_index}")
    raise NumericalAbortError(f"非有限の状態を検出しました (step={step_index})", time=time)
  return state.replace(positions, velocities)


def simulate(initial: ParticleState, config: SimConfig) -> Trajectory:
  """t_end まで step を繰り返し、スナップショットと診断量を記録する

  Raises:
    NumericalAbortError: 非有限の状態、または有効化した不変量の破れ（失敗時刻付き）
  """
  n_steps = config.n_steps
  if config.t_end > 0.0 and n_steps == 0:
    raise ValueError(f"dt={config.dt} では t_end={config.t_end} まで進めません")
  mode_name = "mollified" if isinstance(config.mode, MollifiedMode) else "sharp"
  logger.info(f"シミュレーション開始: N={initial.n_particles}, d={initial.dimension}, steps={n_steps}, mode={mode_name}, force={config.force.kind.value}")

  state = initial
  times: List[float] = [0.0]
  snapshots: List[ParticleState] = [initial]
  rows = [_diagnostics_row(0, 0.0, initial)]
  for k in range(n_steps):
    time = (k + 1) * config.dt
    previous_speed = rows[-1]["max_speed"]
    state = step(state, config, step_index=k, time=time)
    recorded = (k + 1) % config.record_every == 0 or k + 1 == n_steps
    row = _diagnostics_row(k + 1, time, state, with_diameter=recorded)
    rows.append(row)
    if config.check_max_speed and row["max_speed"] > previous_speed + MAX_SPEED_TOLERANCE:
      logger.error(f"最大速さが増加しました: {previous_speed:.17g} -> {row['max_speed']:.17g}")
      raise NumericalAbortError("最大速さの単調性が破れました", time=time)
    if not config.force.is_first_order:
      # 加速度の解析的上限（|V(t)| ≤ |V(0)| + t·sup|F|）による速度台の検査
      growth = config.force.acceleration_bound(previous_speed)
      if row["max_speed"] > previous_speed + config.dt * growth * (1.0 + 1e-9) + MAX_SPEED_TOLERANCE:
        logger.error(f"速度台の増加が力の上限を超えました: t={time:.6g}")
        raise NumericalAbortError("速度台の増加が力の上限を超えました", time=time)
    if recorded:
      times.append(time)
      snapshots.append(state)
  logger.info(f"シミュレーション完了: 最終最大速さ={rows[-1]['max_speed']:.6g}")
  return Trajectory(np.asarray(times), tuple(snapshots), pd.DataFrame(rows))
