"""一様格子による近傍候補探索"""
from itertools import product
from typing import Dict, Tuple

import numpy as np

from app.core.logging_config import get_logger

logger = get_logger(__name__)


class UniformGrid:
  """セル幅 cell_size の一様格子

  点から cell_size 以内にある粒子は必ず隣接 3^d セルに含まれる。
  候補は昇順の添字配列として返すので、全ペア和と同じ順序で加算できる。
  """

  def __init__(self, cell_size: float):
    if not np.isfinite(cell_size) or cell_size <= 0.0:
      raise ValueError(f"セル幅は正の有限値で指定してください: {cell_size}")
    self.cell_size = float(cell_size)
    self._cells: Dict[Tuple[int, ...], np.ndarray] = {}
    self._offsets = ()

  def _keys(self, points: np.ndarray) -> np.ndarray:
    return np.floor(points / self.cell_size).astype(np.int64)

  def build(self, positions: np.ndarray) -> "UniformGrid":
    """粒子位置からセル表を構築"""
    buckets: Dict[Tuple[int, ...], list] = {}
    for index, key in enumerate(map(tuple, self._keys(positions))):
      buckets.setdefault(key, []).append(index)
    self._cells = {key: np.asarray(members, dtype=np.int64) for key, members in buckets.items()}
    self._offsets = tuple(product((-1, 0, 1), repeat=positions.shape[1]))
    logger.debug(f"格子を構築: 粒子数={len(positions)}, 使用セル数={len(self._cells)}")
    return self

  def candidates(self, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """各点の近傍候補

    Returns:
      (index, valid): 昇順の候補添字 (B, K) とパディングでないことを示すマスク (B, K)
    """
    empty = np.empty(0, dtype=np.int64)
    rows = []
    for key in map(tuple, self._keys(points)):
      found = [self._cells.get(tuple(k + o for k, o in zip(key, offset)), empty) for offset in self._offsets]
      rows.append(np.sort(np.concatenate(found)))
    width = max((len(r) for r in rows), default=0)
    index = np.zeros((len(rows), width), dtype=np.int64)
    valid = np.zeros((len(rows), width), dtype=bool)
    for b, row in enumerate(rows):
      index[b, :len(row)] = row
      valid[b, :len(row)] = True
    return index, valid
