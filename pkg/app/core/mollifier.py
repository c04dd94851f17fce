"""位置・速度の両方で平滑化した領域指示関数 1^{η,ε}_{K(v)}"""
from dataclasses import dataclass
from functools import lru_cache
from typing import Tuple

import numpy as np

from app.core.logging_config import get_logger
from app.core.regions import RegionFamily

logger = get_logger(__name__)

# 1チャンクで評価する (ペア × 速度ノード × 位置ノード) の最大要素数
_CHUNK_ELEMENTS = 2_000_000


@dataclass(frozen=True)
class MollifierParams:
  """平滑化パラメータ

  Attributes:
    eps: 位置方向の幅 ε
    eta: 速度方向の幅 η
    quad_nodes: 各軸あたりの Gauss-Legendre ノード数
  """
  eps: float = 0.05
  eta: float = 0.05
  quad_nodes: int = 8

  def __post_init__(self):
    if self.eps <= 0.0 or self.eta <= 0.0:
      raise ValueError(f"eps, eta は正の値で指定してください: eps={self.eps}, eta={self.eta}")
    if self.quad_nodes < 1:
      raise ValueError(f"quad_nodes は 1 以上で指定してください: {self.quad_nodes}")

  def saturation_margin(self, region: RegionFamily) -> float:
    """Θ(v) からの距離がこれを超える点では指示関数が 0 または 1 に飽和する"""
    return self.eps + self.eta * region.velocity_lipschitz

  @property
  def within_stability_range(self) -> bool:
    return self.eps <= 0.5 and self.eta <= 0.5


@lru_cache(maxsize=16)
def bump_quadrature(dimension: int, quad_nodes: int) -> Tuple[np.ndarray, np.ndarray]:
  """単位球上の bump 関数 exp(−1/(1−|u|²)) に対するテンソル積求積則

  Returns:
    (nodes, weights): 単位球内部のノード (Q, d) と総和 1 に正規化した重み (Q,)
  """
  points, weights = np.polynomial.legendre.leggauss(quad_nodes)
  grids = np.meshgrid(*([points] * dimension), indexing="ij")
  nodes = np.stack([g.ravel() for g in grids], axis=-1)
  tensor_weights = np.prod(np.stack(np.meshgrid(*([weights] * dimension), indexing="ij"), axis=-1).reshape(-1, dimension), axis=-1)
  norm_sq = np.sum(nodes ** 2, axis=-1)
  interior = norm_sq < 1.0
  bump = np.exp(-1.0 / (1.0 - norm_sq[interior]))
  mass = tensor_weights[interior] * bump
  if mass.sum() <= 0.0:
    raise ValueError(f"quad_nodes={quad_nodes} では球内部にノードがありません")
  logger.debug(f"bump 求積則を生成: d={dimension}, nodes={int(interior.sum())}")
  nodes = nodes[interior]
  weights = mass / mass.sum()
  nodes.setflags(write=False)
  weights.setflags(write=False)
  return nodes, weights


def _sequential_sum(values: np.ndarray, weights: np.ndarray) -> np.ndarray:
  """最終軸に沿った重み付き和を固定順序で計算"""
  return np.cumsum(values * weights, axis=-1)[..., -1]


def mollified_values(region: RegionFamily, v: np.ndarray, x: np.ndarray, params: MollifierParams) -> np.ndarray:
  """平滑化指示関数のベクトル化版

  Args:
    region: 感受領域族
    v: 速度 (M, d)
    x: 変位 (M, d)
    params: 平滑化パラメータ

  Returns:
    np.ndarray: [0, 1] の値 (M,)
  """
  v, x = np.broadcast_arrays(np.atleast_2d(np.asarray(v, dtype=float)), np.atleast_2d(np.asarray(x, dtype=float)))
  inside = region.contains(v, x)
  values = inside.astype(float)
  straddling = np.flatnonzero(region.theta_distance(v, x) <= params.saturation_margin(region))
  if straddling.size == 0:
    return values

  dimension = v.shape[-1]
  nodes, weights = bump_quadrature(dimension, params.quad_nodes)
  space_shift = params.eps * nodes
  velocity_shift = params.eta * nodes
  n_nodes = nodes.shape[0]
  chunk = max(1, _CHUNK_ELEMENTS // (n_nodes * n_nodes))
  for start in range(0, straddling.size, chunk):
    index = straddling[start:start + chunk]
    shifted_v = v[index][:, None, None, :] - velocity_shift[None, :, None, :]
    shifted_x = x[index][:, None, None, :] - space_shift[None, None, :, :]
    hits = region.contains(shifted_v, shifted_x).astype(float)
    over_space = _sequential_sum(hits, weights)
    values[index] = _sequential_sum(over_space, weights)
  return np.clip(values, 0.0, 1.0)


def mollified_indicator(region: RegionFamily, v, x, params: MollifierParams) -> float:
  """単一点 (v, x) での平滑化指示関数の値"""
  return float(mollified_values(region, np.asarray(v, dtype=float)[None, :], np.asarray(x, dtype=float)[None, :], params)[0])
