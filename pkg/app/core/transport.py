"""相空間上の離散測度間の Wasserstein-1 距離（厳密解）と押し出し"""
from dataclasses import dataclass
from itertools import permutations
from typing import Callable, List, Optional, Tuple

import numpy as np
import ot
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist

from app.core.errors import DegenerateMeasureError, DimensionMismatchError, NumericalAbortError, ProblemTooLargeError
from app.core.logging_config import get_logger

logger = get_logger(__name__)

WEIGHT_SUM_TOLERANCE = 1e-12
MAX_ATOMS = 20_000
# 厳密な総当たりで許容する1辺あたりの最大点数
BRUTEFORCE_MAX_ATOMS = 8
# コスト行列を組み立てるブロックの行数
_COST_BLOCK_ROWS = 2048

PointMap = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
  """重み付き点群 Σ w_i δ_{z_i}

  Attributes:
    points: (M, D) の座標
    weights: (M,) 正で総和 1
  """
  points: np.ndarray
  weights: np.ndarray

  def __post_init__(self):
    points = np.array(self.points, dtype=float)
    weights = np.array(self.weights, dtype=float)
    if points.ndim != 2 or points.shape[0] < 1:
      raise DegenerateMeasureError(f"points は (M, D) 形状で M ≥ 1 が必要です: {points.shape}")
    if weights.shape != (points.shape[0],):
      raise DegenerateMeasureError(f"weights の形状が不正です: {weights.shape}")
    total = weights.sum()
    if not total > 0.0:
      raise DegenerateMeasureError(f"総質量が 0 以下です: {total}")
    if np.any(weights <= 0.0):
      raise DegenerateMeasureError("weights は全て正である必要があります")
    if abs(total - 1.0) > WEIGHT_SUM_TOLERANCE:
      raise DegenerateMeasureError(f"weights の総和は 1 である必要があります: {total:.17g}")
    if not np.all(np.isfinite(points)):
      raise DegenerateMeasureError("points に非有限の値が含まれています")
    points.setflags(write=False)
    weights.setflags(write=False)
    object.__setattr__(self, "points", points)
    object.__setattr__(self, "weights", weights)

  @classmethod
  def uniform(cls, points) -> "DiscreteMeasure":
    points = np.atleast_2d(np.asarray(points, dtype=float))
    return cls(points, np.full(points.shape[0], 1.0 / points.shape[0]))

  @property
  def size(self) -> int:
    return self.points.shape[0]

  @property
  def dimension(self) -> int:
    return self.points.shape[1]

  @property
  def is_uniform(self) -> bool:
    return bool(np.ptp(self.weights) == 0.0)


@dataclass(frozen=True, eq=False)
class TransportPlan:
  """疎な輸送計画 (source, target, mass)"""
  sources: np.ndarray
  targets: np.ndarray
  masses: np.ndarray

  def to_dense(self, n_sources: int, n_targets: int) -> np.ndarray:
    dense = np.zeros((n_sources, n_targets))
    np.add.at(dense, (self.sources, self.targets), self.masses)
    return dense

  def cost(self, mu: DiscreteMeasure, nu: DiscreteMeasure) -> float:
    """計画の輸送コスト Σ mass·|z_i − z'_j|"""
    lengths = np.linalg.norm(mu.points[self.sources] - nu.points[self.targets], axis=1)
    return float(np.sum(self.masses * lengths))

  def triples(self) -> List[Tuple[int, int, float]]:
    return [(int(i), int(j), float(m)) for i, j, m in zip(self.sources, self.targets, self.masses)]


def _check_pair(mu: DiscreteMeasure, nu: DiscreteMeasure) -> None:
  if mu.dimension != nu.dimension:
    logger.error(f"測度の次元が一致しません: {mu.dimension} != {nu.dimension}")
    raise DimensionMismatchError(f"測度の次元が一致しません: {mu.dimension} != {nu.dimension}")


def cost_matrix(mu: DiscreteMeasure, nu: DiscreteMeasure) -> np.ndarray:
  """ユークリッド距離のコスト行列（行ブロック毎に組み立て）"""
  cost = np.empty((mu.size, nu.size))
  for start in range(0, mu.size, _COST_BLOCK_ROWS):
    stop = min(start + _COST_BLOCK_ROWS, mu.size)
    cost[start:stop] = cdist(mu.points[start:stop], nu.points, metric="euclidean")
  return cost


def w1(mu: DiscreteMeasure, nu: DiscreteMeasure) -> Tuple[float, TransportPlan]:
  """W1 距離と最適輸送計画

  同サイズ・一様重みでは割当問題、それ以外はネットワーク単体法で解く。

  Raises:
    DimensionMismatchError: 次元が一致しない場合
    ProblemTooLargeError: 片側の点数が上限を超える場合
    NumericalAbortError: 単体法が最適解に到達しなかった場合
  """
  _check_pair(mu, nu)
  if max(mu.size, nu.size) > MAX_ATOMS:
    logger.error(f"W1 の問題サイズが上限を超えています: {mu.size}×{nu.size}")
    raise ProblemTooLargeError(
      f"片側 {MAX_ATOMS} 点を超える W1 は扱えません ({mu.size}×{nu.size})。subsample で点数を減らしてください"
    )
  cost = cost_matrix(mu, nu)

  if mu.size == nu.size and mu.is_uniform and nu.is_uniform:
    rows, cols = linear_sum_assignment(cost)
    masses = np.full(mu.size, 1.0 / mu.size)
    plan = TransportPlan(rows.astype(np.int64), cols.astype(np.int64), masses)
    distance = float(np.sum(cost[rows, cols]) / mu.size)
    logger.debug(f"割当問題で W1 を計算: n={mu.size}, d1={distance:.6g}")
    return distance, plan

  n_iter = max(100_000, 50 * mu.size * nu.size)
  dense, log = ot.emd(mu.weights, nu.weights, cost, numItermax=n_iter, log=True, check_marginals=False)
  if log.get("result_code", 1) != 1:
    logger.error(f"ネットワーク単体法が最適解に到達しませんでした: {log.get('warning')}")
    raise NumericalAbortError(f"ネットワーク単体法が最適解に到達しませんでした: {log.get('warning')}")
  sources, targets = np.nonzero(dense > 0.0)
  masses = dense[sources, targets]
  distance = float(np.sum(masses * cost[sources, targets]))
  logger.debug(f"ネットワーク単体法で W1 を計算: {mu.size}×{nu.size}, d1={distance:.6g}")
  return distance, TransportPlan(sources.astype(np.int64), targets.astype(np.int64), masses)


def w1_distance(mu: DiscreteMeasure, nu: DiscreteMeasure) -> float:
  return w1(mu, nu)[0]


def _common_denominator(mu: DiscreteMeasure, nu: DiscreteMeasure) -> Optional[int]:
  for q in range(1, BRUTEFORCE_MAX_ATOMS + 1):
    scaled = np.concatenate([mu.weights, nu.weights]) * q
    if np.all(np.abs(scaled - np.round(scaled)) < 1e-9):
      return q
  return None


def _split_atoms(measure: DiscreteMeasure, q: int) -> np.ndarray:
  counts = np.round(measure.weights * q).astype(int)
  return np.repeat(measure.points, counts, axis=0)


def _best_matching(cost: np.ndarray) -> float:
  n = cost.shape[0]
  best = np.inf
  for perm in permutations(range(n)):
    best = min(best, float(sum(cost[i, perm[i]] for i in range(n))))
  return best / n


def _dual_vertex_value(cost: np.ndarray, supply: np.ndarray, demand: np.ndarray) -> float:
  """双対多面体 {u_i + v_j ≤ c_ij, u_0 = 0} の全頂点を列挙し、双対目的関数の最大値を返す

  頂点は等号の成り立つ辺からなる全域木に対応する。行 0 から木を1点ずつ伸ばし、各段では
  等号で置ける点のうち添字が最小のものだけを選ぶ。選ばなかった小さい添字の点には、その段の
  候補値を厳密な上限として課すので、各頂点はちょうど1度だけ現れる（m×n で C(m+n−2, m−1) 個）。
  """
  m, n = cost.shape
  tol = 1e-12 * max(1.0, float(cost.max()))
  weights = np.concatenate([supply, demand])
  placed = np.zeros(m + n, dtype=bool)
  potential = np.zeros(m + n)
  bound = np.full(m + n, np.inf)
  placed[0] = True

  def candidates() -> np.ndarray:
    # 未配置の相手は −∞ として min から外す
    u = np.where(placed[:m], potential[:m], -np.inf)
    v = np.where(placed[m:], potential[m:], -np.inf)
    return np.concatenate([np.min(cost - v[None, :], axis=1), np.min(cost - u[:, None], axis=0)])

  def grow(n_placed: int) -> float:
    if n_placed == m + n:
      return float(weights @ potential)
    cand = candidates()
    saved = bound.copy()
    best = -np.inf
    for y in range(m + n):
      if placed[y] or not np.isfinite(cand[y]):
        continue
      if cand[y] < bound[y] - tol:
        placed[y], potential[y] = True, cand[y]
        best = max(best, grow(n_placed + 1))
        placed[y], potential[y] = False, 0.0
      bound[y] = min(bound[y], cand[y])
    bound[:] = saved
    return best

  return grow(1)


def w1_bruteforce(mu: DiscreteMeasure, nu: DiscreteMeasure) -> float:
  """総当たりによる W1（テスト用の参照解）

  一様重み・同サイズ（8 点以下）なら全ての並べ替え、重みが 1/q（q ≤ 8）の倍数なら
  単位質量の原子に分割して並べ替え、それ以外は双対多面体の全頂点を列挙する（各辺 8 点以下）。
  線形計画の双対定理により、双対目的関数の最大値が W1 に一致する。

  Raises:
    ProblemTooLargeError: 点数が列挙の上限を超える場合
  """
  _check_pair(mu, nu)
  if mu.size == nu.size and mu.is_uniform and nu.is_uniform and mu.size <= BRUTEFORCE_MAX_ATOMS:
    return _best_matching(cost_matrix(mu, nu))
  q = _common_denominator(mu, nu)
  if q is not None:
    left, right = _split_atoms(mu, q), _split_atoms(nu, q)
    return _best_matching(cdist(left, right))

  largest = max(mu.size, nu.size)
  if largest > BRUTEFORCE_MAX_ATOMS:
    logger.error(f"総当たりの点数が上限を超えています: {largest} > {BRUTEFORCE_MAX_ATOMS}")
    raise ProblemTooLargeError(f"総当たりの点数が上限を超えています: {largest} > {BRUTEFORCE_MAX_ATOMS}")
  return _dual_vertex_value(cost_matrix(mu, nu), mu.weights, nu.weights)


class LipschitzTestFunction:
  """リプシッツ定数が構成的に分かっている試験関数 φ"""

  lipschitz: float = 1.0

  def __call__(self, points: np.ndarray) -> np.ndarray:
    raise NotImplementedError


@dataclass(frozen=True)
class CoordinateProjection(LipschitzTestFunction):
  index: int = 0
  lipschitz: float = 1.0

  def __call__(self, points):
    return np.asarray(points, dtype=float)[:, self.index]


@dataclass(frozen=True)
class DistanceToPoint(LipschitzTestFunction):
  point: Tuple[float, ...] = ()
  lipschitz: float = 1.0

  def __call__(self, points):
    return np.linalg.norm(np.asarray(points, dtype=float) - np.asarray(self.point, dtype=float), axis=1)


@dataclass(frozen=True)
class ClippedLinear(LipschitzTestFunction):
  """φ(z) = clip(a·z + b, lo, hi)（リプシッツ定数 |a|）"""
  direction: Tuple[float, ...] = ()
  offset: float = 0.0
  lower: float = -np.inf
  upper: float = np.inf

  @property
  def lipschitz(self) -> float:
    return float(np.linalg.norm(self.direction))

  def __call__(self, points):
    values = np.asarray(points, dtype=float) @ np.asarray(self.direction, dtype=float) + self.offset
    return np.clip(values, self.lower, self.upper)


@dataclass(frozen=True)
class ConstantFunction(LipschitzTestFunction):
  value: float = 0.0
  lipschitz: float = 0.0

  def __call__(self, points):
    return np.full(np.asarray(points).shape[0], self.value)


def dual_check(mu: DiscreteMeasure, nu: DiscreteMeasure, test_fn: LipschitzTestFunction) -> float:
  """|∫φ dμ − ∫φ dν|（弱双対性により W1 以下）

  Raises:
    ValueError: 試験関数のリプシッツ定数が 1 を超える場合
  """
  _check_pair(mu, nu)
  if test_fn.lipschitz > 1.0 + 1e-12:
    raise ValueError(f"試験関数のリプシッツ定数は 1 以下である必要があります: {test_fn.lipschitz}")
  return float(abs(np.dot(mu.weights, test_fn(mu.points)) - np.dot(nu.weights, test_fn(nu.points))))


def push_forward(mu: DiscreteMeasure, transform: PointMap) -> DiscreteMeasure:
  """T#μ: 各原子を写し、重みはそのまま"""
  return DiscreteMeasure(np.asarray(transform(mu.points), dtype=float), mu.weights)


def push_forward_bound(mu: DiscreteMeasure, first: PointMap, second: PointMap) -> float:
  """Σ_i w_i |T1(z_i) − T2(z_i)|（d1(T1#μ, T2#μ) の上界）"""
  gaps = np.linalg.norm(np.asarray(first(mu.points)) - np.asarray(second(mu.points)), axis=1)
  return float(np.dot(mu.weights, gaps))


def subsample(measure: DiscreteMeasure, n: int, seed: int) -> DiscreteMeasure:
  """重みに従う i.i.d. 再標本化（一様重み 1/n）"""
  if n < 1:
    raise ValueError(f"n は 1 以上で指定してください: {n}")
  rng = np.random.default_rng(seed)
  index = rng.choice(measure.size, size=n, replace=True, p=measure.weights)
  return DiscreteMeasure.uniform(measure.points[index])
