"""平滑化した平均場の力 F(f^{η,ε}) の局所リプシッツ性と線形増大の診断"""
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
import pandas as pd

from app.core.dynamics import ParticleState, Trajectory, max_speed
from app.core.forces import ForceModel, MollifiedMode, field_at
from app.core.logging_config import LoggerMixin
from app.core.mollifier import MollifierParams
from app.models.schemas import LipschitzReport


@dataclass(frozen=True, eq=False)
class ProbePairs:
  """相空間のプローブ対 z1 = (x1, v1), z2 = (x2, v2)（各 (P, 2d)）"""
  first: np.ndarray
  second: np.ndarray

  def __len__(self) -> int:
    return self.first.shape[0]

  def head(self, n: int) -> "ProbePairs":
    return ProbePairs(self.first[:n], self.second[:n])


def sample_probe_pairs(state: ParticleState, n_probes: int, position_box: float, perturbation: float,
  seed: int) -> ProbePairs:
  """位置は箱 [−B, B]^d、速度は速度台 B(0, max|V|) から一様に選び、相空間で perturbation だけずらす

  倍増の検査では 2P 組を引き、先頭 P 組を元の集合として使う。
  """
  rng = np.random.default_rng(seed)
  dimension = state.dimension
  positions = rng.uniform(-position_box, position_box, size=(n_probes, dimension))
  directions = rng.standard_normal((n_probes, dimension))
  directions /= np.linalg.norm(directions, axis=1, keepdims=True)
  radii = max_speed(state) * rng.random(n_probes) ** (1.0 / dimension)
  first = np.hstack([positions, directions * radii[:, None]])
  offsets = rng.standard_normal(first.shape)
  offsets *= perturbation / np.linalg.norm(offsets, axis=1, keepdims=True)
  return ProbePairs(first, first + offsets)


class LipschitzDiagnosticService(LoggerMixin):
  """プローブ点での力の差分比と増大度を調べるサービス"""

  def force_at(self, force: ForceModel, state: ParticleState, points: np.ndarray, params: MollifierParams,
    workers: int = 1) -> np.ndarray:
    """参照粒子の総和としての F(x, v)（自己相互作用の除外なし）"""
    d = state.dimension
    return field_at(force, state, points[:, :d], points[:, d:], MollifiedMode(params), workers=workers)

  def ratios(self, force: ForceModel, state: ParticleState, pairs: ProbePairs, params: MollifierParams,
    workers: int = 1) -> Tuple[np.ndarray, np.ndarray]:
    """|F(z1) − F(z2)| / ((1 + |v1|)|z1 − z2|)（z1 = z2 では 0）と |F(z1)|/(1 + |v1|)"""
    d = state.dimension
    f1 = self.force_at(force, state, pairs.first, params, workers)
    f2 = self.force_at(force, state, pairs.second, params, workers)
    scale = 1.0 + np.linalg.norm(pairs.first[:, d:], axis=1)
    gaps = np.linalg.norm(pairs.first - pairs.second, axis=1)
    differences = np.linalg.norm(f1 - f2, axis=1)
    ratio = np.divide(differences, scale * gaps, out=np.zeros_like(gaps), where=gaps > 0.0)
    growth = np.linalg.norm(f1, axis=1) / scale
    return ratio, growth

  def analytic_growth_constant(self, force: ForceModel, state: ParticleState) -> float:
    """|F(x, v)| ≤ c(1 + |v|) を満たす解析的な c"""
    bound = 0.0
    if force.uses_alignment:
      bound += force.psi.sup * force.h.lipschitz * max(max_speed(state), 1.0)
    if force.uses_potential:
      bound += force.grad_phi.sup
    return abs(force.amplitude) * bound

  def lipschitz_diagnostic(self, trajectory_ref: Trajectory, probe_pairs: ProbePairs, params: MollifierParams,
    force: ForceModel, refined_pairs: Optional[ProbePairs] = None, refinement_tolerance: float = 0.2,
    t: Optional[float] = None, workers: int = 1) -> Tuple[LipschitzReport, pd.DataFrame]:
    """
    参照解のスナップショットでプローブ対の比を評価する

    Args:
      trajectory_ref: 参照解の軌道
      probe_pairs: プローブ対
      params: 平滑化パラメータ
      force: 力のモデル
      refined_pairs: 倍増したプローブ対（先頭が probe_pairs と一致するもの）。None で安定性を検査しない
      refinement_tolerance: 倍増時に許す最大比の相対変化
      t: 評価時刻（None で最終時刻）
      workers: 並列ワーカー数
    Returns:
      Tuple[LipschitzReport, pd.DataFrame]: 要約とプローブ毎の表
    """
    state = trajectory_ref.final if t is None else trajectory_ref.at(t)
    ratio, growth = self.ratios(force, state, probe_pairs, params, workers)
    max_ratio = float(np.max(ratio)) if ratio.size else 0.0
    refined_max = max_ratio
    if refined_pairs is not None:
      refined_ratio, refined_growth = self.ratios(force, state, refined_pairs, params, workers)
      refined_max = float(np.max(refined_ratio)) if refined_ratio.size else 0.0
      growth = np.concatenate([growth, refined_growth])
    largest = max(max_ratio, refined_max)
    stable = largest == 0.0 or abs(refined_max - max_ratio) <= refinement_tolerance * largest
    growth_constant = float(np.max(growth)) if growth.size else 0.0
    analytic = self.analytic_growth_constant(force, state)
    growth_satisfied = growth_constant <= analytic * (1.0 + 1e-9) + 1e-12
    finite = bool(np.isfinite(largest))
    notes = []
    if not stable:
      notes.append(f"プローブ倍増で最大比が {max_ratio:.6g} から {refined_max:.6g} に変化した")
    report = LipschitzReport(
      n_probes=len(probe_pairs),
      max_ratio=max_ratio,
      max_ratio_refined=refined_max,
      stable=stable,
      growth_constant=growth_constant,
      analytic_growth_constant=analytic,
      growth_satisfied=growth_satisfied,
      passed=finite and stable and growth_satisfied,
      notes=notes,
    )
    self.logger.info(f"リプシッツ診断: 最大比={max_ratio:.6g} -> {refined_max:.6g}, ĉ={growth_constant:.6g} (解析値 {analytic:.6g})")
    frame = pd.DataFrame({"study": "lipschitz", "probe": np.arange(len(probe_pairs)), "ratio": ratio,
      "growth": growth[:len(probe_pairs)]})
    return report, frame


# グローバル関数（モジュール単位での利用のため）
_lipschitz_service = LipschitzDiagnosticService()


def lipschitz_diagnostic(trajectory_ref: Trajectory, probe_pairs: ProbePairs, params: MollifierParams, force: ForceModel,
  refined_pairs: Optional[ProbePairs] = None, refinement_tolerance: float = 0.2, t: Optional[float] = None,
  workers: int = 1) -> Tuple[LipschitzReport, pd.DataFrame]:
  return _lipschitz_service.lipschitz_diagnostic(trajectory_ref, probe_pairs, params, force, refined_pairs,
    refinement_tolerance, t, workers)
