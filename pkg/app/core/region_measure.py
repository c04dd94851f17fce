"""感受領域に関する体積のモンテカルロ推定と標本による包含判定"""
from dataclasses import dataclass
from typing import Callable, Tuple

import numpy as np
from joblib import Parallel, delayed

from app.core.logging_config import get_logger
from app.core.regions import RegionFamily

logger = get_logger(__name__)

MIN_SAMPLES = 1000
# 一度に生成するサンプル数の上限
_BATCH = 1 << 16

Predicate = Callable[[np.ndarray], np.ndarray]
Sampler = Callable[[np.random.Generator, int], np.ndarray]


@dataclass(frozen=True)
class MonteCarloEstimate:
  estimate: float
  std_err: float
  n_samples: int
  hits: int

  def as_tuple(self) -> Tuple[float, float]:
    return self.estimate, self.std_err


def box_sampler(half_width: float, dimension: int) -> Sampler:
  """立方体 [−half_width, half_width]^d 上の一様サンプラー"""
  def sample(rng: np.random.Generator, n: int) -> np.ndarray:
    return rng.uniform(-half_width, half_width, size=(n, dimension))
  return sample


def ball_sampler(radius: float, dimension: int) -> Sampler:
  """球 B(0, radius) 上の一様サンプラー"""
  def sample(rng: np.random.Generator, n: int) -> np.ndarray:
    directions = rng.standard_normal((n, dimension))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    radii = radius * rng.random(n) ** (1.0 / dimension)
    return directions * radii[:, None]
  return sample


def _count_hits(predicate: Predicate, sampler: Sampler, n: int, seed_sequence: np.random.SeedSequence) -> int:
  rng = np.random.default_rng(seed_sequence)
  hits = 0
  for start in range(0, n, _BATCH):
    points = sampler(rng, min(_BATCH, n - start))
    hits += int(np.count_nonzero(predicate(points)))
  return hits


def _split(n: int, workers: int):
  base, extra = divmod(n, workers)
  return [base + (1 if k < extra else 0) for k in range(workers)]


def count_hits(predicate: Predicate, sampler: Sampler, n_samples: int, seed: int, workers: int = 1) -> int:
  """サンプルのうち predicate を満たす個数（ワーカー毎に派生シードを使用し、固定順で合計）"""
  workers = max(1, min(workers, n_samples))
  children = np.random.SeedSequence(seed).spawn(workers)
  sizes = _split(n_samples, workers)
  if workers == 1:
    counts = [_count_hits(predicate, sampler, sizes[0], children[0])]
  else:
    counts = Parallel(n_jobs=workers, prefer="threads")(
      delayed(_count_hits)(predicate, sampler, size, child) for size, child in zip(sizes, children)
    )
  return int(sum(counts))


def _estimate(predicate: Predicate, half_width: float, dimension: int, n_samples: int, seed: int, workers: int) -> MonteCarloEstimate:
  box_volume = (2.0 * half_width) ** dimension
  hits = count_hits(predicate, box_sampler(half_width, dimension), n_samples, seed, workers)
  fraction = hits / n_samples
  estimate = box_volume * fraction
  std_err = box_volume * np.sqrt(fraction * (1.0 - fraction) / n_samples)
  return MonteCarloEstimate(float(estimate), float(std_err), n_samples, hits)


def measure_eps_boundary_mc(region: RegionFamily, v, eps: float, n_samples: int, seed: int,
  target: str = "boundary", workers: int = 1) -> MonteCarloEstimate:
  """|∂^ε K(v)| または |Θ(v)^{ε,+}| のモンテカルロ推定

  立方体 [−(R_K+1), R_K+1]^d 上の一様サンプルの的中率に箱の体積を掛ける。

  Args:
    region: 感受領域族
    v: 速度 (d,)
    eps: 幅 ε ∈ (0, 1)
    n_samples: サンプル数（1000 以上）
    seed: 乱数シード
    target: "boundary"（∂^ε K(v)）または "theta"（Θ(v)^{ε,+}）
    workers: 並列ワーカー数

  Returns:
    MonteCarloEstimate: 推定値と標準誤差

  Raises:
    ValueError: eps が (0, 1) の外、サンプル数不足、target が不正な場合
  """
  if not 0.0 < eps < 1.0:
    raise ValueError(f"eps は (0, 1) の範囲で指定してください: {eps}")
  if n_samples < MIN_SAMPLES:
    raise ValueError(f"n_samples は {MIN_SAMPLES} 以上で指定してください: {n_samples}")
  v = np.asarray(v, dtype=float)
  if target == "boundary":
    distance = region.boundary_distance
  elif target == "theta":
    distance = region.theta_distance
  else:
    raise ValueError(f"未対応の target です: {target}")

  def predicate(points: np.ndarray) -> np.ndarray:
    return distance(v[None, :], points) <= eps

  result = _estimate(predicate, region.global_radius + 1.0, v.shape[-1], n_samples, seed, workers)
  logger.debug(f"{target} 測度推定: |v|={np.linalg.norm(v):.4g}, eps={eps}, 推定値={result.estimate:.6g}±{result.std_err:.2g}")
  return result


def measure_symmetric_difference_mc(region: RegionFamily, v, w, n_samples: int, seed: int,
  workers: int = 1) -> MonteCarloEstimate:
  """|K(v) Δ K(w)| のモンテカルロ推定（v = w の場合は厳密に 0）"""
  if n_samples < MIN_SAMPLES:
    raise ValueError(f"n_samples は {MIN_SAMPLES} 以上で指定してください: {n_samples}")
  v = np.asarray(v, dtype=float)
  w = np.asarray(w, dtype=float)
  if np.array_equal(v, w):
    return MonteCarloEstimate(0.0, 0.0, n_samples, 0)

  def predicate(points: np.ndarray) -> np.ndarray:
    return region.contains(v[None, :], points) != region.contains(w[None, :], points)

  return _estimate(predicate, region.global_radius + 1.0, v.shape[-1], n_samples, seed, workers)


def check_inclusion_sampled(predicate_a: Predicate, predicate_b: Predicate, sampler: Sampler,
  n_samples: int, seed: int, workers: int = 1) -> int:
  """A ⊂ B を標本で検査し、A を満たし B を満たさない点の数を返す"""
  def violation(points: np.ndarray) -> np.ndarray:
    return np.asarray(predicate_a(points), dtype=bool) & ~np.asarray(predicate_b(points), dtype=bool)

  violations = count_hits(violation, sampler, n_samples, seed, workers)
  if violations:
    logger.debug(f"包含違反を検出: {violations}/{n_samples}")
  return violations
