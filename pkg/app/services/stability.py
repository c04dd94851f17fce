"""安定性スタディ（初期密度の違い、平滑化パラメータの違い）"""
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from app.core.component_mapper import ComponentMapper
from app.core.dynamics import Trajectory, simulate, to_measure
from app.core.errors import DegenerateSamplingError
from app.core.forces import MollifiedMode
from app.core.logging_config import LoggerMixin
from app.core.mollifier import MollifierParams
from app.core.transport import w1_distance
from app.models.config import RunConfig
from app.models.schemas import DistanceRow, MollifierRow, MollifierStabilityReport, StabilityReport
from app.services.fitting import linear_fit, max_log_slope
from app.services.sampling import InitialDensitySpec, sample_initial


class StabilityStudyService(LoggerMixin):
  """2つの解の距離の時間発展を調べるサービス"""

  def _run_all(self, jobs, workers: int) -> List[Trajectory]:
    if workers > 1 and len(jobs) > 1:
      return Parallel(n_jobs=min(workers, len(jobs)), prefer="threads")(delayed(simulate)(*job) for job in jobs)
    return [simulate(*job) for job in jobs]

  def stability_study(self, spec_a: InitialDensitySpec, spec_b: InitialDensitySpec, config: RunConfig, n: int,
    times: Sequence[float], params: Optional[MollifierParams] = None,
    translation_bound: Optional[float] = None) -> Tuple[StabilityReport, pd.DataFrame]:
    """
    2つの初期密度から平滑化モードで解き、d1(t)/d1(0) と Ĉ を報告する

    Args:
      spec_a, spec_b: 初期密度
      config: 実行設定
      n: 各アンサンブルの粒子数
      times: 評価時刻
      params: 平滑化パラメータ（None で study.reference）
      translation_bound: spec_b が spec_a の平行移動の場合の |c|
    Returns:
      Tuple[StabilityReport, pd.DataFrame]: 要約と表
    Raises:
      DegenerateSamplingError: 入力が異なるのに d1(0) = 0 の場合
    """
    times = list(times)
    params = params or ComponentMapper.build_mollifier(config.study.reference)
    stride = ComponentMapper.record_stride(config.dynamics.dt, times)
    sim = ComponentMapper.build_sim_config(config, mode=MollifiedMode(params), record_every=stride, check_max_speed=False)
    tolerance = config.study.fit_tolerance

    if spec_a == spec_b:
      self.logger.info("2つの初期密度が同一のため、比率を計算せずに終了します")
      rows = [DistanceRow(t=t, d1=0.0) for t in times]
      report = StabilityReport(n=n, identical_inputs=True, rows=rows, d1_initial=0.0, passed=True,
        notes=["同一の入力（同じシード）では解も一致するため比率は定義しない"])
      return report, self._frame(report)

    self.logger.info(f"安定性スタディ開始: N={n}, 評価時刻={times}")
    jobs = [(sample_initial(spec, n, config.seed), sim) for spec in (spec_a, spec_b)]
    first, second = self._run_all(jobs, config.workers)
    distances = [w1_distance(to_measure(first.at(t)), to_measure(second.at(t))) for t in times]
    initial = distances[0]
    if initial == 0.0:
      self.logger.error("異なる初期密度から d1(0) = 0 が得られました")
      raise DegenerateSamplingError("d1(0) = 0 のため比率が定義できません。seed または初期密度を見直してください", time=0.0)

    rows = [DistanceRow(t=t, d1=d, ratio=d / initial) for t, d in zip(times, distances)]
    fitted = max_log_slope([(row.t, row.ratio) for row in rows])
    residuals = [np.log(row.ratio) - (fitted or 0.0) * row.t for row in rows if row.t > 0.0]
    max_residual = float(max(residuals)) if residuals else None
    finite = all(np.isfinite(row.ratio) for row in rows)
    notes = []
    passed = finite and (max_residual is None or max_residual <= tolerance)
    if translation_bound is not None:
      within = initial <= translation_bound * (1.0 + 1e-12) + 1e-15
      if not within:
        notes.append(f"d1(0)={initial:.17g} が平行移動の上界 {translation_bound:.17g} を超えた")
      passed = passed and within
    report = StabilityReport(
      n=n,
      identical_inputs=False,
      rows=rows,
      d1_initial=initial,
      translation_bound=translation_bound,
      fitted_c=fitted,
      max_log_residual=max_residual,
      passed=passed,
      notes=notes,
    )
    self.logger.info(f"安定性スタディ完了: d1(0)={initial:.6g}, Ĉ={fitted}, 判定={'PASS' if passed else 'FAIL'}")
    return report, self._frame(report)

  def _frame(self, report: StabilityReport) -> pd.DataFrame:
    return pd.DataFrame.from_records(
      [{"study": "stability", "N": report.n, "t": row.t, "d1": row.d1, "ratio": row.ratio} for row in report.rows]
    )

  def mollifier_stability_study(self, spec: InitialDensitySpec, config: RunConfig, n_ref: int,
    params_sequence: Sequence[MollifierParams], t_final: Optional[float] = None) -> Tuple[MollifierStabilityReport, pd.DataFrame]:
    """
    同じ標本から (ε, η) を変えて解き、最も細かい設定との d1(T) を (ε+η+ε'+η') に対して当てはめる

    Raises:
      ValueError: パラメータ列が2つ未満の場合
    """
    params_sequence = list(params_sequence)
    if len(params_sequence) < 2:
      raise ValueError("平滑化パラメータは2組以上指定してください")
    t_final = config.dynamics.t_end if t_final is None else t_final
    stride = ComponentMapper.record_stride(config.dynamics.dt, [0.0, t_final])
    initial = sample_initial(spec, n_ref, config.seed)
    jobs = [
      (initial, ComponentMapper.build_sim_config(config, mode=MollifiedMode(p), record_every=stride, check_max_speed=False))
      for p in params_sequence
    ]
    self.logger.info(f"平滑化安定性スタディ開始: N_ref={n_ref}, (eps, eta)={[(p.eps, p.eta) for p in params_sequence]}")
    trajectories = self._run_all(jobs, config.workers)
    finest, finest_params = to_measure(trajectories[-1].at(t_final)), params_sequence[-1]
    rows = []
    for p, trajectory in zip(params_sequence[:-1], trajectories[:-1]):
      width = p.eps + p.eta + finest_params.eps + finest_params.eta
      distance = w1_distance(to_measure(trajectory.at(t_final)), finest)
      rows.append(MollifierRow(eps=p.eps, eta=p.eta, width_sum=width, d1_final=distance))
      self.logger.info(f"eps={p.eps}, eta={p.eta}: d1(T)={distance:.6g}")

    finals = [row.d1_final for row in rows]
    decreasing = all(later <= earlier for earlier, later in zip(finals, finals[1:]))
    slope = intercept = r2 = None
    notes = []
    if len(rows) >= 2:
      fit = linear_fit([row.width_sum for row in rows], finals)
      slope, intercept, r2 = fit.slope, fit.intercept, fit.r2
    else:
      notes.append("比較対象が1組のみのため直線の当てはめは行わない")
    fitted_c = max(row.d1_final / row.width_sum for row in rows)
    passed = decreasing and (slope is None or (np.isfinite(slope) and slope > 0.0))
    report = MollifierStabilityReport(
      n_ref=n_ref,
      t_final=t_final,
      rows=rows,
      slope=slope,
      intercept=intercept,
      r2=r2,
      fitted_c=fitted_c,
      decreasing=decreasing,
      passed=passed,
      notes=notes,
    )
    self.logger.info(f"平滑化安定性スタディ完了: 傾き={slope}, Ĉ={fitted_c:.6g}, 判定={'PASS' if passed else 'FAIL'}")
    frame = pd.DataFrame.from_records([
      {"study": "mollifier", "N": n_ref, "t": t_final, "eps": row.eps, "eta": row.eta, "width_sum": row.width_sum,
        "d1": row.d1_final} for row in rows
    ])
    return report, frame


# グローバル関数（モジュール単位での利用のため）
_stability_service = StabilityStudyService()


def stability_study(spec_a: InitialDensitySpec, spec_b: InitialDensitySpec, config: RunConfig, n: int,
  times: Sequence[float], params: Optional[MollifierParams] = None,
  translation_bound: Optional[float] = None) -> Tuple[StabilityReport, pd.DataFrame]:
  return _stability_service.stability_study(spec_a, spec_b, config, n, times, params, translation_bound)


def mollifier_stability_study(spec: InitialDensitySpec, config: RunConfig, n_ref: int,
  params_sequence: Sequence[MollifierParams], t_final: Optional[float] = None) -> Tuple[MollifierStabilityReport, pd.DataFrame]:
  return _stability_service.mollifier_stability_study(spec, config, n_ref, params_sequence, t_final)
