"""スタディで共通に使う定数推定"""
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, Tuple

import numpy as np
from sklearn.linear_model import LinearRegression
from sklearn.metrics import r2_score


@dataclass(frozen=True)
class LinearFit:
  slope: float
  intercept: float
  r2: float
  slope_std_err: Optional[float] = None


def linear_fit(x: Sequence[float], y: Sequence[float], y_std_err: Optional[Sequence[float]] = None) -> LinearFit:
  """最小二乗の直線当てはめ

  y_std_err を与えた場合、傾きの標準誤差を各点の誤差の伝播として求める。
  """
  x = np.asarray(x, dtype=float)
  y = np.asarray(y, dtype=float)
  if x.size < 2:
    raise ValueError("直線の当てはめには2点以上が必要です")
  model = LinearRegression().fit(x[:, None], y)
  predicted = model.predict(x[:, None])
  r2 = float(r2_score(y, predicted)) if np.ptp(y) > 0.0 else 1.0
  slope_std_err = None
  if y_std_err is not None:
    centered = x - x.mean()
    coefficients = centered / np.sum(centered ** 2)
    slope_std_err = float(np.sqrt(np.sum((coefficients * np.asarray(y_std_err, dtype=float)) ** 2)))
  return LinearFit(float(model.coef_[0]), float(model.intercept_), r2, slope_std_err)


def max_log_slope(rows: Iterable[Tuple[float, float]], horizon: Optional[float] = None) -> Optional[float]:
  """t > 0 の (t, d1(t)/d1(0)) から max log(ratio)/t を求める（該当なしは None）"""
  slopes = [
    np.log(ratio) / t for t, ratio in rows
    if t > 0.0 and ratio is not None and ratio > 0.0 and (horizon is None or t <= horizon + 1e-12)
  ]
  return float(max(slopes)) if slopes else None


def consistent(first: Optional[float], second: Optional[float], relative: float, floor: float = 1e-3) -> bool:
  """2つの推定値が相対許容誤差（絶対下限 floor）内で一致するか"""
  if first is None or second is None:
    return True
  return abs(first - second) <= max(relative * max(abs(first), abs(second)), floor)
