from typing import Any, Dict, List, Optional

from pydantic import BaseModel, Field


class RunManifest(BaseModel):
  """実行の再現に必要な情報（設定のエコー、シード、ライブラリのバージョン）"""
  subcommand: str = Field(..., description="実行したサブコマンド")
  version: str = Field(..., description="swarmlab のバージョン")
  seed: int = Field(..., description="全体の乱数シード")
  workers: int = Field(..., description="ワーカー数")
  config: Dict[str, Any] = Field(..., description="検証済み設定のエコー")
  libraries: Dict[str, str] = Field(..., description="数値計算ライブラリのバージョン")
  outputs: List[str] = Field(default_factory=list, description="書き出したファイル")
  diagnostics: Dict[str, Any] = Field(default_factory=dict, description="診断量の要約")
  notes: List[str] = Field(default_factory=list, description="補足")


class DistanceRow(BaseModel):
  t: float = Field(..., description="時刻")
  d1: float = Field(..., ge=0, description="W1 距離")
  ratio: Optional[float] = Field(None, description="d1(t)/d1(0)（d1(0)=0 の場合は null）")


class ConvergenceSeries(BaseModel):
  n: int = Field(..., description="粒子数 N")
  rows: List[DistanceRow] = Field(..., description="時刻毎の距離")
  identical_to_reference: bool = Field(False, description="参照解と全時刻で一致")


class ConvergenceReport(BaseModel):
  """平均場収束スタディの結果"""
  n_list: List[int]
  n_ref: int
  times: List[float]
  series: List[ConvergenceSeries]
  fitted_c: float = Field(..., description="max log(d1(t)/d1(0))/t")
  fitted_c_half: Optional[float] = Field(None, description="[0, T/2] のみで推定した Ĉ")
  gronwall_consistent: bool
  bound_satisfied: bool = Field(..., description="全ての行で d1(t) ≤ e^{Ĉt} d1(0)")
  monotone_in_n: bool = Field(..., description="d1(T) が N について単調減少（許容係数付き）")
  monotone_slack: float
  observed_rate: Optional[float] = Field(None, description="log d1(T) の log N に対する傾き")
  observed_initial_rate: Optional[float] = Field(None, description="log d1(0) の log N に対する傾き")
  reference_rate: float = Field(..., description="標本化による参考レート −1/(2·2d)")
  symmetry_gap: Optional[float] = Field(None, description="入力を入れ替えた W1 の差（抜き取り）")
  passed: bool
  notes: List[str] = Field(default_factory=list)


class StabilityReport(BaseModel):
  """2つの初期密度からの解の安定性スタディの結果"""
  n: int
  identical_inputs: bool
  rows: List[DistanceRow]
  d1_initial: float
  translation_bound: Optional[float] = Field(None, description="平行移動による d1(0) の上界 |c|")
  fitted_c: Optional[float] = None
  max_log_residual: Optional[float] = Field(None, description="max(log 比 − Ĉt)")
  passed: bool
  notes: List[str] = Field(default_factory=list)


class MollifierRow(BaseModel):
  eps: float
  eta: float
  width_sum: float = Field(..., description="ε + η + ε' + η'（ε', η' は最も細かい設定）")
  d1_final: float = Field(..., ge=0, description="最も細かい設定との d1(T)")


class MollifierStabilityReport(BaseModel):
  """平滑化パラメータに関する安定性スタディの結果"""
  n_ref: int
  t_final: float
  rows: List[MollifierRow]
  slope: Optional[float] = None
  intercept: Optional[float] = None
  r2: Optional[float] = None
  fitted_c: Optional[float] = Field(None, description="max d1(T)/(ε+η+ε'+η')")
  decreasing: bool
  passed: bool
  notes: List[str] = Field(default_factory=list)


class MeasureFit(BaseModel):
  speed: float
  target: str = Field(..., description="theta（Θ(v)^{ε,+}）または boundary（∂^ε K(v)）")
  eps: List[float]
  estimates: List[float]
  std_errs: List[float]
  slope: float
  slope_std_err: float
  intercept: float
  r2: float
  analytic_bounds: Optional[List[float]] = Field(None, description="錐の ∂^ε K(v) の解析的上界")
  analytic_bound_ok: Optional[bool] = None


class InclusionCheck(BaseModel):
  name: str = Field(..., description="symmetric_difference（速度摂動に対する対称差）または theta_shift（Θ の平行移動）")
  fitted_constant: float = Field(..., description="較正データで推定した定数")
  validated_constant: float = Field(..., description="マージンを上乗せした検証用の定数")
  analytic_constant: float
  n_pairs: int
  n_points: int
  violations: int


class HypothesisReport(BaseModel):
  """正則性仮定の数値検証の結果"""
  region: Dict[str, Any]
  admissible: bool
  fits: List[MeasureFit]
  inclusions: List[InclusionCheck]
  min_r2: float
  passed: bool
  notes: List[str] = Field(default_factory=list)


class LipschitzReport(BaseModel):
  """平均場の力の局所リプシッツ性の診断結果"""
  n_probes: int
  max_ratio: float
  max_ratio_refined: float
  stable: bool
  growth_constant: float = Field(..., description="max |F(x,v)|/(1+|v|)")
  analytic_growth_constant: float
  growth_satisfied: bool
  passed: bool
  notes: List[str] = Field(default_factory=list)
