from typing import Annotated, List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class StrictModel(BaseModel):
  """未知のキーを拒否する設定モデルの基底"""
  model_config = ConfigDict(extra="forbid")


# ---- 感受領域 ----

class ClippedLinearRadiusConfig(StrictModel):
  """r̃(z) = clip(r0 + slope·z, r_min, r_max)"""
  kind: Literal["clipped_linear"] = "clipped_linear"
  r0: float = Field(1.0, description="速さ 0 での半径")
  slope: float = Field(1.0, description="速さに対する傾き")
  r_min: float = Field(1.0, gt=0, description="半径の下限")
  r_max: float = Field(2.0, gt=0, description="半径の上限（sup）")


class SaturatingRadiusConfig(StrictModel):
  """r̃(z) = r0 + (r_inf − r0)(1 − exp(−z/scale))"""
  kind: Literal["saturating"] = "saturating"
  r0: float = Field(1.0, gt=0, description="速さ 0 での半径")
  r_inf: float = Field(2.0, gt=0, description="速さ無限大での半径")
  scale: float = Field(1.0, gt=0, description="飽和の速さスケール")


RadiusProfileConfig = Annotated[Union[ClippedLinearRadiusConfig, SaturatingRadiusConfig], Field(discriminator="kind")]


class BallRegionConfig(StrictModel):
  kind: Literal["ball"] = "ball"
  r: float = Field(1.0, gt=0, description="半径")


class SpeedBallRegionConfig(StrictModel):
  kind: Literal["speed_ball"] = "speed_ball"
  profile: RadiusProfileConfig = Field(default_factory=ClippedLinearRadiusConfig, description="速さ→半径の写像")


class VisionConeRegionConfig(StrictModel):
  kind: Literal["vision_cone"] = "vision_cone"
  r: float = Field(1.0, gt=0, description="視野錐の半径")
  theta_star: float = Field(1.0471975511965976, gt=0, lt=3.141592653589793, description="高速時の極限半開き角 θ*")
  k: float = Field(1.0, gt=0, description="開き角プロファイルの形状パラメータ")


class FixedConeRegionConfig(StrictModel):
  """仮説検証の対照群専用（ダイナミクスでは使用不可）"""
  kind: Literal["fixed_cone"] = "fixed_cone"
  r: float = Field(1.0, gt=0, description="錐の半径")
  theta: float = Field(1.0471975511965976, gt=0, le=3.141592653589793, description="一定の半開き角")


RegionConfig = Annotated[
  Union[BallRegionConfig, SpeedBallRegionConfig, VisionConeRegionConfig, FixedConeRegionConfig],
  Field(discriminator="kind"),
]


# ---- カーネルと力 ----

class ConstantKernelConfig(StrictModel):
  kind: Literal["constant"] = "constant"
  value: float = Field(1.0, ge=0, description="ψ ≡ value")


class RationalKernelConfig(StrictModel):
  kind: Literal["rational"] = "rational"
  gamma: float = Field(0.5, gt=0, description="ψ(x) = (1+|x|²)^(−γ) の指数")


KernelConfig = Annotated[Union[ConstantKernelConfig, RationalKernelConfig], Field(discriminator="kind")]


class IdentityCouplingConfig(StrictModel):
  kind: Literal["identity"] = "identity"


class ClippedLinearCouplingConfig(StrictModel):
  kind: Literal["clipped_linear"] = "clipped_linear"
  gain: float = Field(1.0, gt=0, description="線形部分の係数")
  clip: float = Field(1.0, gt=0, description="|h| の上限")


CouplingConfig = Annotated[Union[IdentityCouplingConfig, ClippedLinearCouplingConfig], Field(discriminator="kind")]


class MorseGradientConfig(StrictModel):
  kind: Literal["morse"] = "morse"
  repulsion: float = Field(1.0, ge=0, description="反発の振幅 C_r")
  repulsion_length: float = Field(0.5, gt=0, description="反発の長さ ℓ_r")
  attraction: float = Field(0.5, ge=0, description="引力の振幅 C_a")
  attraction_length: float = Field(2.0, gt=0, description="引力の長さ ℓ_a")


class ConstantFieldConfig(StrictModel):
  kind: Literal["constant"] = "constant"
  direction: List[float] = Field(default_factory=lambda: [1.0, 0.0], description="一定の方向ベクトル w")


class RotationalFieldConfig(StrictModel):
  kind: Literal["rotational"] = "rotational"
  strength: float = Field(1.0, gt=0, description="|w|")
  frequency: float = Field(1.0, ge=0, description="回転の角周波数 ω")


OrientationFieldConfig = Annotated[Union[ConstantFieldConfig, RotationalFieldConfig], Field(discriminator="kind")]


class ForceConfig(StrictModel):
  """力のモデル"""
  kind: Literal["cucker_smale", "attractive_repulsive", "first_order", "combined"] = Field(
    "cucker_smale", description="モデルの種類"
  )
  psi: KernelConfig = Field(default_factory=ConstantKernelConfig, description="通信重み ψ")
  h: CouplingConfig = Field(default_factory=IdentityCouplingConfig, description="速度結合 h")
  grad_phi: MorseGradientConfig = Field(default_factory=MorseGradientConfig, description="ポテンシャル勾配 ∇φ")
  w_field: OrientationFieldConfig = Field(default_factory=ConstantFieldConfig, description="一階モデルの方向場 w")
  speed_cap: Optional[float] = Field(None, gt=0, description="h の中での速度打ち切り（null で無効）")
  amplitude: float = Field(1.0, description="力全体の係数（0 で自由運動）")


# ---- ダイナミクス ----

class MollifierConfig(StrictModel):
  eps: float = Field(0.05, gt=0, description="位置方向の平滑化幅 ε")
  eta: float = Field(0.05, gt=0, description="速度方向の平滑化幅 η")
  quad_nodes: int = Field(8, ge=1, description="軸あたりの求積ノード数")


class SharpModeConfig(StrictModel):
  kind: Literal["sharp"] = "sharp"
  selection: Literal["midpoint", "lower", "upper", "seeded_random"] = Field("midpoint", description="境界上での α の選択規則")
  tol_b: float = Field(1e-7, gt=0, description="境界判定の許容誤差")


class MollifiedModeConfig(MollifierConfig):
  kind: Literal["mollified"] = "mollified"


ModeConfig = Annotated[Union[SharpModeConfig, MollifiedModeConfig], Field(discriminator="kind")]


class DynamicsConfig(StrictModel):
  dt: float = Field(1e-3, ge=0, description="時間刻み")
  t_end: float = Field(1.0, ge=0, description="終了時刻")
  mode: ModeConfig = Field(default_factory=SharpModeConfig, description="鋭い指示関数モードまたは平滑化モード")
  record_every: int = Field(1, ge=1, description="スナップショットの記録間隔（ステップ）")
  neighbor_search: Literal["dense", "grid"] = Field("dense", description="ペア探索の方法")
  check_max_speed: bool = Field(False, description="最大速さの単調性を毎ステップ検査する")


# ---- 初期密度 ----

class UniformBoxGaussianVConfig(StrictModel):
  """位置は箱上一様、速度は打ち切り正規分布"""
  kind: Literal["uniform_box_gaussian_v"] = "uniform_box_gaussian_v"
  box_low: List[float] = Field(default_factory=lambda: [-1.0, -1.0], description="箱の下端")
  box_high: List[float] = Field(default_factory=lambda: [1.0, 1.0], description="箱の上端")
  velocity_mean: List[float] = Field(default_factory=lambda: [1.0, 0.0], description="速度の平均")
  velocity_std: float = Field(0.5, ge=0, description="速度の標準偏差")
  velocity_cutoff: float = Field(2.0, gt=0, description="速度台の半径 R_v⁰")

  @model_validator(mode="after")
  def _check_shapes(self):
    if not len(self.box_low) == len(self.box_high) == len(self.velocity_mean):
      raise ValueError("box_low, box_high, velocity_mean の次元が一致しません")
    if any(lo >= hi for lo, hi in zip(self.box_low, self.box_high)):
      raise ValueError("box_low < box_high が必要です")
    if sum(m * m for m in self.velocity_mean) ** 0.5 >= self.velocity_cutoff:
      raise ValueError("velocity_mean は速度台 B(0, velocity_cutoff) の内部にある必要があります")
    return self

  @property
  def dimension(self) -> int:
    return len(self.box_low)


class TwoClusterFlockConfig(StrictModel):
  """2つのガウス型クラスター"""
  kind: Literal["two_cluster_flock"] = "two_cluster_flock"
  centers: List[List[float]] = Field(default_factory=lambda: [[-1.0, 0.0], [1.0, 0.0]], description="クラスター中心")
  spreads: List[float] = Field(default_factory=lambda: [0.3, 0.3], description="位置の標準偏差")
  mean_velocities: List[List[float]] = Field(default_factory=lambda: [[0.5, 0.5], [-0.5, 0.5]], description="クラスター平均速度")
  velocity_std: float = Field(0.2, ge=0, description="速度の標準偏差")
  velocity_cutoff: float = Field(2.0, gt=0, description="速度台の半径 R_v⁰")
  fraction: float = Field(0.5, gt=0, lt=1, description="第1クラスターに属する確率")

  @model_validator(mode="after")
  def _check_shapes(self):
    if len(self.centers) != 2 or len(self.spreads) != 2 or len(self.mean_velocities) != 2:
      raise ValueError("クラスターは2つ指定してください")
    dims = {len(c) for c in self.centers} | {len(v) for v in self.mean_velocities}
    if len(dims) != 1:
      raise ValueError("centers と mean_velocities の次元が一致しません")
    if any(sum(x * x for x in v) ** 0.5 >= self.velocity_cutoff for v in self.mean_velocities):
      raise ValueError("mean_velocities は速度台 B(0, velocity_cutoff) の内部にある必要があります")
    return self

  @property
  def dimension(self) -> int:
    return len(self.centers[0])


class CustomSamplesConfig(StrictModel):
  """与えられた相空間点 (x..., v...) からの一様再標本化"""
  kind: Literal["custom"] = "custom"
  samples: List[List[float]] = Field(..., min_length=1, description="相空間点の一覧")

  @field_validator("samples")
  @classmethod
  def _check_rows(cls, samples):
    widths = {len(row) for row in samples}
    if len(widths) != 1 or next(iter(widths)) not in (4, 6):
      raise ValueError("samples の各行は 2d 個（d = 2, 3）の座標を持つ必要があります")
    return samples

  @property
  def dimension(self) -> int:
    return len(self.samples[0]) // 2


InitialDensityConfig = Annotated[
  Union[UniformBoxGaussianVConfig, TwoClusterFlockConfig, CustomSamplesConfig],
  Field(discriminator="kind"),
]


# ---- スタディ ----

class HypothesisConfig(StrictModel):
  speeds: List[float] = Field(default_factory=lambda: [0.25, 0.75, 1.5, 5.0], description="検査する速さ |v|")
  eps_grid: List[float] = Field(
    default_factory=lambda: [0.02, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3], description="ε の格子（(0,1) 内）"
  )
  n_samples: int = Field(100_000, ge=1000, description="推定・検査あたりのサンプル数")
  perturbations: List[float] = Field(
    default_factory=lambda: [0.01, 0.02, 0.05, 0.1, 0.2], description="(iii)/(iv) で使う |v − w| の大きさ"
  )
  margin: float = Field(0.1, ge=0, description="較正した定数に上乗せする相対マージン")
  r2_threshold: float = Field(0.99, gt=0, le=1, description="線形フィットの R² の合格基準")

  @field_validator("eps_grid")
  @classmethod
  def _check_eps(cls, values):
    if len(values) < 2 or any(not 0 < e < 1 for e in values):
      raise ValueError("eps_grid は (0, 1) 内の2点以上が必要です")
    return sorted(values)


class LipschitzConfig(StrictModel):
  n_probes: int = Field(200, ge=2, description="プローブ対の数")
  position_box: float = Field(2.0, gt=0, description="プローブ位置の箱の半幅")
  perturbation: float = Field(1e-3, gt=0, description="プローブ対の間隔")
  refinement_tolerance: float = Field(0.2, ge=0, description="プローブ数倍増時の許容相対変化")


class StudyConfig(StrictModel):
  dimension: int = Field(2, ge=2, le=3, description="空間次元 d")
  n_particles: int = Field(200, ge=1, description="simulate で使う粒子数")
  n_list: List[int] = Field(default_factory=lambda: [100, 200, 400, 800, 1600], description="収束スタディの N")
  n_ref: int = Field(6400, ge=1, description="参照解の粒子数 N_ref")
  times: List[float] = Field(default_factory=lambda: [0.0, 0.25, 0.5, 0.75, 1.0], description="距離を評価する時刻")
  reference: MollifierConfig = Field(default_factory=MollifierConfig, description="参照解の平滑化パラメータ")
  initial: InitialDensityConfig = Field(default_factory=UniformBoxGaussianVConfig, description="初期密度 f0")
  comparison: Optional[InitialDensityConfig] = Field(None, description="安定性スタディの第2初期密度（null で shift 平行移動）")
  shift: List[float] = Field(default_factory=lambda: [0.1, 0.0], description="第2初期密度を作る位置の平行移動")
  monotone_slack: float = Field(1.15, ge=1, description="N に関する単調減少の許容係数")
  gronwall_tolerance: float = Field(0.25, ge=0, description="[0,T/2] と [0,T] の Ĉ の許容相対差")
  fit_tolerance: float = Field(0.1, ge=0, description="安定性スタディの log 比の許容残差")
  mollifier_sequence: List[MollifierConfig] = Field(
    default_factory=lambda: [
      MollifierConfig(eps=0.2, eta=0.2), MollifierConfig(eps=0.1, eta=0.1), MollifierConfig(eps=0.05, eta=0.05),
    ],
    description="平滑化安定性スタディの (ε, η) 列（最後が最も細かい）",
  )
  hypothesis: HypothesisConfig = Field(default_factory=HypothesisConfig)
  lipschitz: LipschitzConfig = Field(default_factory=LipschitzConfig)

  @field_validator("n_list")
  @classmethod
  def _check_n_list(cls, values):
    if not values or any(n < 1 for n in values) or values != sorted(values):
      raise ValueError("n_list は正の整数の昇順リストである必要があります")
    return values

  @field_validator("times")
  @classmethod
  def _check_times(cls, values):
    if not values or any(t < 0 for t in values) or values != sorted(set(values)):
      raise ValueError("times は 0 以上の狭義単調増加リストである必要があります")
    return values


class OutputConfig(StrictModel):
  directory: str = Field("outputs", description="出力ディレクトリ（環境変数 SWARMLAB_OUTPUT_DIR で上書き可）")
  prefix: str = Field("run", description="出力ファイル名の接頭辞")
  write_trajectory: bool = Field(True, description="simulate で軌道 CSV を書き出す")


class RunConfig(StrictModel):
  """実行設定全体"""
  seed: int = Field(0, ge=0, description="全体の乱数シード")
  workers: int = Field(1, ge=1, description="ワーカー数（1 でビット単位の再現性）")
  region: RegionConfig = Field(default_factory=VisionConeRegionConfig, description="感受領域族")
  force: ForceConfig = Field(default_factory=ForceConfig)
  dynamics: DynamicsConfig = Field(default_factory=DynamicsConfig)
  study: StudyConfig = Field(default_factory=StudyConfig)
  output: OutputConfig = Field(default_factory=OutputConfig)

  @model_validator(mode="after")
  def _check_dimensions(self):
    dimension = self.study.dimension
    if self.study.initial.dimension != dimension:
      raise ValueError(f"初期密度の次元 {self.study.initial.dimension} が study.dimension={dimension} と一致しません")
    if self.study.comparison is not None and self.study.comparison.dimension != dimension:
      raise ValueError("comparison の次元が study.dimension と一致しません")
    if len(self.study.shift) != dimension:
      raise ValueError("shift の次元が study.dimension と一致しません")
    if self.force.kind == "first_order" and isinstance(self.force.w_field, ConstantFieldConfig) \
        and len(self.force.w_field.direction) != dimension:
      raise ValueError("w_field.direction の次元が study.dimension と一致しません")
    if max(self.study.times) > self.dynamics.t_end + 1e-12:
      raise ValueError("times は [0, t_end] に含まれる必要があります")
    return self

  def echo(self) -> dict:
    """マニフェストに書き出す設定（再読込で同一設定になる）"""
    return self.model_dump(mode="json")

