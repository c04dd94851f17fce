"""感受領域族が正則性仮定を満たすかのモンテカルロ検証"""
from typing import Callable, List, Sequence, Tuple

import numpy as np
import pandas as pd

from app.core.logging_config import LoggerMixin
from app.core.region_measure import box_sampler, check_inclusion_sampled, measure_eps_boundary_mc
from app.core.regions import GEOMETRY_TOLERANCE, ConeRegion, RegionFamily, cone_eps_boundary_bound
from app.models.schemas import HypothesisReport, InclusionCheck, MeasureFit
from app.services.fitting import linear_fit

TARGETS = ("theta", "boundary")
_TAG_MEASURE, _TAG_SYMMETRIC, _TAG_SHIFT = 1, 2, 3
_CALIBRATION, _VALIDATION = 0, 1


def child_seed(seed: int, *keys: int) -> int:
  """(seed, keys...) から派生する整数シード（領域の種類には依存しない）"""
  return int(np.random.SeedSequence([seed, *keys]).generate_state(1)[0])


def velocities_from_speeds(speeds: Sequence[float], dimension: int) -> np.ndarray:
  """第1軸方向の速度 |v| e_1 を並べる（領域族は回転不変）"""
  velocities = np.zeros((len(speeds), dimension))
  velocities[:, 0] = speeds
  return velocities


def _directions(v: np.ndarray) -> np.ndarray:
  """速さを変える向き (±v/|v|) と向きを変える向き (±v⊥)"""
  speed = np.linalg.norm(v)
  axis = v / speed if speed > 0.0 else np.eye(v.shape[0])[0]
  if v.shape[0] == 2:
    perpendicular = np.array([-axis[1], axis[0]])
  else:
    helper = np.eye(3)[int(np.argmin(np.abs(axis)))]
    perpendicular = np.cross(axis, helper)
    perpendicular /= np.linalg.norm(perpendicular)
  return np.array([axis, -axis, perpendicular, -perpendicular])


class HypothesisCheckService(LoggerMixin):
  """|Θ(v)^{ε,+}| の線形性と2つの包含関係を検査するサービス"""

  def fit_measures(self, region: RegionFamily, v_samples: np.ndarray, eps_grid: Sequence[float], n_samples: int,
    seed: int, workers: int = 1) -> List[MeasureFit]:
    """速度毎・対象毎に ε に対する体積の直線当てはめを行う"""
    fits = []
    for a, v in enumerate(v_samples):
      speed = float(np.linalg.norm(v))
      for target_index, target in enumerate(TARGETS):
        results = [
          measure_eps_boundary_mc(region, v, eps, n_samples, child_seed(seed, _TAG_MEASURE, a, b, target_index),
            target=target, workers=workers)
          for b, eps in enumerate(eps_grid)
        ]
        estimates = [r.estimate for r in results]
        std_errs = [r.std_err for r in results]
        fit = linear_fit(eps_grid, estimates, std_errs)
        bounds, bound_ok = None, None
        if target == "boundary" and isinstance(region, ConeRegion):
          values = [cone_eps_boundary_bound(region, v, eps) for eps in eps_grid]
          if all(np.isfinite(values)):
            bounds = values
            bound_ok = all(e <= bound + 3.0 * s for e, s, bound in zip(estimates, std_errs, values))
        fits.append(MeasureFit(
          speed=speed, target=target, eps=list(eps_grid), estimates=estimates, std_errs=std_errs,
          slope=fit.slope, slope_std_err=fit.slope_std_err, intercept=fit.intercept, r2=fit.r2,
          analytic_bounds=bounds, analytic_bound_ok=bound_ok,
        ))
        self.logger.debug(f"|v|={speed:.4g}, {target}: 傾き={fit.slope:.6g}±{fit.slope_std_err:.2g}, R²={fit.r2:.6f}")
    return fits

  def _pairs(self, v_samples: np.ndarray, perturbations: Sequence[float]):
    for a, v in enumerate(v_samples):
      for b, delta in enumerate(perturbations):
        for c, direction in enumerate(_directions(v)):
          yield (a, b, c), v, v + delta * direction, float(delta)

  def _origin_pairs(self, dimension: int, perturbations: Sequence[float], index: int):
    """原点をまたぐ検証専用の対 v = (δ/2)e_1, w = −v（較正には使わない）"""
    axis = np.eye(dimension)[0]
    for b, delta in enumerate(perturbations):
      if delta > 0.0:
        yield (index, b, 0), 0.5 * delta * axis, -0.5 * delta * axis, float(delta)

  def _inclusion(self, name: str, tag: int, region: RegionFamily, v_samples: np.ndarray, perturbations: Sequence[float],
    n_samples: int, seed: int, margin: float, workers: int,
    make_points: Callable[[np.ndarray, np.ndarray], Tuple[Callable, Callable]]) -> InclusionCheck:
    """較正用の標本で定数を推定し、別の標本でマージン付きの包含を検査する

    make_points(v, w) はサンプラーと「A に属するか」の述語を返す。
    """
    half = max(1, n_samples // 2)
    pairs = list(self._pairs(v_samples, perturbations))
    fitted = 0.0
    for keys, v, w, delta in pairs:
      if delta == 0.0:
        continue
      sampler, member = make_points(v, w)
      points = sampler(np.random.default_rng(child_seed(seed, tag, *keys, _CALIBRATION)), half)
      points = points[member(points)]
      if points.shape[0]:
        fitted = max(fitted, float(np.max(region.theta_distance(v[None, :], points))) / delta)
    validated = fitted * (1.0 + margin)

    held_out = pairs + list(self._origin_pairs(v_samples.shape[1], perturbations, len(v_samples)))
    violations = 0
    for keys, v, w, delta in held_out:
      sampler, member = make_points(v, w)
      threshold = validated * delta + GEOMETRY_TOLERANCE

      def covered(points: np.ndarray, v=v, threshold=threshold) -> np.ndarray:
        return region.theta_distance(v[None, :], points) <= threshold

      violations += check_inclusion_sampled(member, covered, sampler, half, child_seed(seed, tag, *keys, _VALIDATION), workers)
    self.logger.info(f"{name}: 較正定数={fitted:.6g}, 検証定数={validated:.6g}, 違反={violations}")
    return InclusionCheck(
      name=name, fitted_constant=fitted, validated_constant=validated, analytic_constant=region.analytic_h2_constant,
      n_pairs=len(held_out), n_points=half * len(held_out), violations=violations,
    )

  def hypothesis_check(self, region: RegionFamily, v_samples, eps_grid: Sequence[float], n_samples: int, seed: int,
    perturbations: Sequence[float] = (0.01, 0.02, 0.05, 0.1, 0.2), margin: float = 0.1, r2_threshold: float = 0.99,
    workers: int = 1) -> Tuple[HypothesisReport, pd.DataFrame]:
    """
    正則性仮定の数値検証

    Args:
      region: 感受領域族
      v_samples: 検査する速度 (S, d)
      eps_grid: (0, 1) 内の ε の格子
      n_samples: 推定・検査あたりのサンプル数
      seed: 乱数シード
      perturbations: 包含検査で使う |v − w|
      margin: 較正定数に上乗せする相対マージン
      r2_threshold: 直線当てはめの合格基準
      workers: 並列ワーカー数
    Returns:
      Tuple[HypothesisReport, pd.DataFrame]: 要約と (speed, target, eps, estimate, std_err) の表
    Raises:
      ValueError: eps_grid が (0, 1) に含まれない場合
    """
    v_samples = np.atleast_2d(np.asarray(v_samples, dtype=float))
    eps_grid = [float(e) for e in eps_grid]
    if len(eps_grid) < 2 or any(not 0.0 < e < 1.0 for e in eps_grid):
      raise ValueError(f"eps_grid は (0, 1) 内の2点以上が必要です: {eps_grid}")
    self.logger.info(f"正則性検証開始: 領域={region.name}, 速さ={np.linalg.norm(v_samples, axis=1).tolist()}")

    fits = self.fit_measures(region, v_samples, eps_grid, n_samples, seed, workers)
    dimension = v_samples.shape[1]
    cube = box_sampler(region.global_radius + 1.0, dimension)

    def symmetric_difference(v, w):
      return cube, lambda points: region.contains(v[None, :], points) != region.contains(w[None, :], points)

    def theta_of_w(v, w):
      return (lambda rng, n: region.sample_theta_points(w, n, rng)), (lambda points: np.ones(points.shape[0], dtype=bool))

    inclusions = [
      self._inclusion("symmetric_difference", _TAG_SYMMETRIC, region, v_samples, perturbations, n_samples, seed, margin,
        workers, symmetric_difference),
      self._inclusion("theta_shift", _TAG_SHIFT, region, v_samples, perturbations, n_samples, seed, margin,
        workers, theta_of_w),
    ]
    min_r2 = min(fit.r2 for fit in fits)
    notes = []
    if not region.admissible:
      notes.append("解析的な速度リプシッツ定数が有限でない（v = 0 近傍で速度摂動に対する包含が破れる族）")
    if min_r2 < r2_threshold:
      notes.append(f"直線当てはめの R² が基準 {r2_threshold} を下回った: {min_r2:.6f}")
    passed = region.admissible and min_r2 >= r2_threshold and all(c.violations == 0 for c in inclusions)
    report = HypothesisReport(region=region.describe(), admissible=region.admissible, fits=fits, inclusions=inclusions,
      min_r2=min_r2, passed=passed, notes=notes)
    self.logger.info(f"正則性検証完了: min R²={min_r2:.6f}, 判定={'PASS' if passed else 'FAIL'}")
    return report, self._frame(fits)

  def _frame(self, fits: List[MeasureFit]) -> pd.DataFrame:
    records = []
    for fit in fits:
      for index, eps in enumerate(fit.eps):
        records.append({
          "study": "hypcheck", "speed": fit.speed, "target": fit.target, "eps": eps,
          "estimate": fit.estimates[index], "std_err": fit.std_errs[index],
          "analytic_bound": fit.analytic_bounds[index] if fit.analytic_bounds else None,
        })
    return pd.DataFrame.from_records(records)


# グローバル関数（モジュール単位での利用のため）
_hypothesis_service = HypothesisCheckService()


def hypothesis_check(region: RegionFamily, v_samples, eps_grid: Sequence[float], n_samples: int, seed: int,
  perturbations: Sequence[float] = (0.01, 0.02, 0.05, 0.1, 0.2), margin: float = 0.1, r2_threshold: float = 0.99,
  workers: int = 1) -> Tuple[HypothesisReport, pd.DataFrame]:
  return _hypothesis_service.hypothesis_check(region, v_samples, eps_grid, n_samples, seed, perturbations, margin,
    r2_threshold, workers)


def fit_measures(region: RegionFamily, v_samples, eps_grid: Sequence[float], n_samples: int, seed: int,
  workers: int = 1) -> List[MeasureFit]:
  return _hypothesis_service.fit_measures(region, np.atleast_2d(np.asarray(v_samples, dtype=float)), eps_grid,
    n_samples, seed, workers)
