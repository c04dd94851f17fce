"""速度依存の感受領域 K(v) の幾何計算

全てのメソッドは (..., d) 形状の速度 v と変位 x をブロードキャストして評価する。
次元 d は 2 または 3 のみを扱う。
"""
from abc import ABC, abstractmethod
from dataclasses import dataclass
from enum import Enum
from typing import Tuple

import numpy as np
from scipy.special import gamma

from app.core.logging_config import get_logger

logger = get_logger(__name__)

# 解析的幾何計算の許容誤差
GEOMETRY_TOLERANCE = 1e-9
# ダイナミクスでの境界判定の既定許容誤差（ステップ毎の位置ノイズより大きくとる）
DEFAULT_BOUNDARY_TOLERANCE = 1e-7
SUPPORTED_DIMENSIONS = (2, 3)
# 3次元の視野錐の境界標本のうち軸上の線分に割り当てる割合（線分は面測度 0）
CONE_SEGMENT_SHARE_3D = 0.1


class SlopeSet(Enum):
  """許容される指示関数の傾きの集合 A(x,v)"""
  ZERO = 0
  ONE = 1
  FULL = 2

  @property
  def interval(self) -> Tuple[float, float]:
    """集合を閉区間 [lo, hi] として返す"""
    if self is SlopeSet.ZERO:
      return (0.0, 0.0)
    if self is SlopeSet.ONE:
      return (1.0, 1.0)
    return (0.0, 1.0)


def unit_ball_volume(dimension: int) -> float:
  """d 次元単位球の体積 α(d)"""
  return float(np.pi ** (dimension / 2.0) / gamma(dimension / 2.0 + 1.0))


def _check_dimension(dimension: int) -> None:
  if dimension not in SUPPORTED_DIMENSIONS:
    raise ValueError(f"次元は 2 または 3 のみ対応しています: d={dimension}")


def _axis_and_speed(v: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
  """速度から単位軸 u と速さ |v| を求める（v=0 の場合は第1座標軸）"""
  speed = np.linalg.norm(v, axis=-1)
  moving = speed > 0.0
  safe_speed = np.where(moving, speed, 1.0)
  fallback = np.zeros(v.shape[-1])
  fallback[0] = 1.0
  axis = np.where(moving[..., None], v / safe_speed[..., None], fallback)
  return axis, speed


def _meridian(v: np.ndarray, x: np.ndarray):
  """軸 u を含む子午面上の座標 (a, b) = (x·u, |x − (x·u)u|) と |x|, |v|, u"""
  v, x = np.broadcast_arrays(np.asarray(v, dtype=float), np.asarray(x, dtype=float))
  axis, speed = _axis_and_speed(v)
  axial = np.sum(x * axis, axis=-1)
  radial = np.linalg.norm(x - axial[..., None] * axis, axis=-1)
  rho = np.linalg.norm(x, axis=-1)
  return axial, radial, rho, speed, axis


def _orthonormal_frame(axis: np.ndarray) -> np.ndarray:
  """単位ベクトル axis に直交する正規直交基底（d-1 本）を行として返す"""
  if axis.shape[-1] == 2:
    return np.array([[-axis[1], axis[0]]])
  helper = np.array([1.0, 0.0, 0.0]) if abs(axis[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
  e1 = helper - np.dot(helper, axis) * axis
  e1 /= np.linalg.norm(e1)
  e2 = np.cross(axis, e1)
  return np.vstack([e1, e2])


def _from_meridian(axial: np.ndarray, radial: np.ndarray, axis: np.ndarray, rng: np.random.Generator) -> np.ndarray:
  """子午面座標を回転対称に d 次元の点へ戻す（方位角は一様乱数）"""
  frame = _orthonormal_frame(axis)
  if axis.shape[-1] == 2:
    sign = np.where(rng.random(axial.shape[0]) < 0.5, -1.0, 1.0)
    return axial[:, None] * axis + (sign * radial)[:, None] * frame[0]
  psi = rng.uniform(0.0, 2.0 * np.pi, size=axial.shape[0])
  return (
    axial[:, None] * axis
    + (radial * np.cos(psi))[:, None] * frame[0]
    + (radial * np.sin(psi))[:, None] * frame[1]
  )


def _uniform_sphere(n: int, dimension: int, radius: float, rng: np.random.Generator) -> np.ndarray:
  directions = rng.standard_normal((n, dimension))
  directions /= np.linalg.norm(directions, axis=1, keepdims=True)
  return radius * directions


@dataclass(frozen=True)
class AngleProfile:
  """視野角プロファイル θ(z)

  θ(z) = π (z ≤ 1)、θ(z) = θ* + (π − θ*) exp(−k (z − 1)²) (z > 1)。
  z = 1 で全ての導関数が一致し、単調減少で θ* に収束する。
  """
  theta_star: float = np.pi / 3.0
  k: float = 1.0

  def __post_init__(self):
    if not 0.0 < self.theta_star < np.pi:
      raise ValueError(f"theta_star は (0, π) の範囲で指定してください: {self.theta_star}")
    if self.k <= 0.0:
      raise ValueError(f"k は正の値で指定してください: {self.k}")

  def __call__(self, speed):
    speed = np.asarray(speed, dtype=float)
    excess = np.maximum(speed - 1.0, 0.0)
    smooth = self.theta_star + (np.pi - self.theta_star) * np.exp(-self.k * excess ** 2)
    return np.where(speed <= 1.0, np.pi, smooth)

  @property
  def lipschitz(self) -> float:
    """θ のリプシッツ定数（ガウス因子の導関数の最大値）"""
    return float((np.pi - self.theta_star) * np.sqrt(2.0 * self.k) * np.exp(-0.5))


class RadiusProfile(ABC):
  """速さから半径への有界リプシッツ写像 r̃"""

  @abstractmethod
  def __call__(self, speed): ...

  @property
  @abstractmethod
  def lipschitz(self) -> float: ...

  @property
  @abstractmethod
  def sup(self) -> float: ...

  @property
  @abstractmethod
  def inf(self) -> float: ...


@dataclass(frozen=True)
class ClippedLinearRadius(RadiusProfile):
  """r̃(z) = clip(r0 + slope·z, r_min, r_max)"""
  r0: float = 1.0
  slope: float = 1.0
  r_min: float = 1.0
  r_max: float = 2.0

  def __post_init__(self):
    if not 0.0 < self.r_min <= self.r_max:
      raise ValueError(f"0 < r_min ≤ r_max が必要です: r_min={self.r_min}, r_max={self.r_max}")

  def __call__(self, speed):
    return np.clip(self.r0 + self.slope * np.asarray(speed, dtype=float), self.r_min, self.r_max)

  @property
  def lipschitz(self) -> float:
    return abs(self.slope)

  @property
  def sup(self) -> float:
    return self.r_max

  @property
  def inf(self) -> float:
    return self.r_min


@dataclass(frozen=True)
class SaturatingRadius(RadiusProfile):
  """r̃(z) = r0 + (r_inf − r0)(1 − exp(−z/scale))"""
  r0: float = 1.0
  r_inf: float = 2.0
  scale: float = 1.0

  def __post_init__(self):
    if self.r0 <= 0.0 or self.r_inf <= 0.0 or self.scale <= 0.0:
      raise ValueError("r0, r_inf, scale は正の値で指定してください")

  def __call__(self, speed):
    speed = np.asarray(speed, dtype=float)
    return self.r0 + (self.r_inf - self.r0) * (1.0 - np.exp(-speed / self.scale))

  @property
  def lipschitz(self) -> float:
    return abs(self.r_inf - self.r0) / self.scale

  @property
  def sup(self) -> float:
    return max(self.r0, self.r_inf)

  @property
  def inf(self) -> float:
    return min(self.r0, self.r_inf)


class RegionFamily(ABC):
  """速度で添字付けられたコンパクト集合族 K(v) と代理境界族 Θ(v)"""

  name: str = "region"

  @property
  @abstractmethod
  def global_radius(self) -> float:
    """全ての K(v) を含む球の半径 R_K"""

  @property
  @abstractmethod
  def velocity_lipschitz(self) -> float:
    """K(v−w) ⊂ K(v)^{Lip_K|w|,+} を満たす定数 Lip_K"""

  @property
  def analytic_h2_constant(self) -> float:
    """速度摂動に対する包含と Θ の平行移動の解析的な定数"""
    return self.velocity_lipschitz

  @property
  def admissible(self) -> bool:
    """正則性仮定を満たす族かどうか"""
    return bool(np.isfinite(self.velocity_lipschitz))

  @abstractmethod
  def contains(self, v, x) -> np.ndarray:
    """x ∈ K(v) の判定（閉集合、境界上は True）"""

  @abstractmethod
  def boundary_distance(self, v, x) -> np.ndarray:
    """x から ∂K(v) までのユークリッド距離"""

  def signed_distance(self, v, x) -> np.ndarray:
    """符号付き距離（内部で負、外部で正）"""
    distance = self.boundary_distance(v, x)
    return np.where(self.contains(v, x), -distance, distance)

  def theta_distance(self, v, x) -> np.ndarray:
    """x から Θ(v) までの距離（既定では Θ(v) = ∂K(v)）"""
    return self.boundary_distance(v, x)

  def slope_codes(self, v, x, tol_b: float) -> np.ndarray:
    """SlopeSet の値を整数配列として返す（ベクトル化版）"""
    inside = self.contains(v, x)
    near = self.theta_distance(v, x) <= tol_b
    codes = np.where(inside, SlopeSet.ONE.value, SlopeSet.ZERO.value)
    return np.where(near, SlopeSet.FULL.value, codes).astype(np.int8)

  @abstractmethod
  def sample_boundary_points(self, v, n: int, rng: np.random.Generator) -> np.ndarray:
    """∂K(v) 上の点を n 個サンプル"""

  def sample_theta_points(self, v, n: int, rng: np.random.Generator) -> np.ndarray:
    """Θ(v) 上の点を n 個サンプル"""
    return self.sample_boundary_points(v, n, rng)

  def describe(self) -> dict:
    return {"kind": self.name, "global_radius": self.global_radius, "velocity_lipschitz": self.velocity_lipschitz}


@dataclass(frozen=True)
class Ball(RegionFamily):
  """速度に依存しない球 B(0, r)"""
  r: float = 1.0
  name = "ball"

  def __post_init__(self):
    if self.r <= 0.0:
      raise ValueError(f"半径は正の値で指定してください: {self.r}")

  @property
  def global_radius(self) -> float:
    return self.r

  @property
  def velocity_lipschitz(self) -> float:
    return 0.0

  def contains(self, v, x):
    v, x = np.broadcast_arrays(np.asarray(v, dtype=float), np.asarray(x, dtype=float))
    return np.linalg.norm(x, axis=-1) <= self.r

  def boundary_distance(self, v, x):
    v, x = np.broadcast_arrays(np.asarray(v, dtype=float), np.asarray(x, dtype=float))
    return np.abs(np.linalg.norm(x, axis=-1) - self.r)

  def sample_boundary_points(self, v, n, rng):
    v = np.asarray(v, dtype=float)
    return _uniform_sphere(n, v.shape[-1], self.r, rng)


@dataclass(frozen=True)
class SpeedBall(RegionFamily):
  """速さに依存する半径の球 B(0, r̃(|v|))"""
  profile: RadiusProfile = ClippedLinearRadius()
  name = "speed_ball"

  def radius(self, v) -> np.ndarray:
    return self.profile(np.linalg.norm(np.asarray(v, dtype=float), axis=-1))

  @property
  def global_radius(self) -> float:
    return self.profile.sup

  @property
  def velocity_lipschitz(self) -> float:
    return self.profile.lipschitz

  def contains(self, v, x):
    v, x = np.broadcast_arrays(np.asarray(v, dtype=float), np.asarray(x, dtype=float))
    return np.linalg.norm(x, axis=-1) <= self.radius(v)

  def boundary_distance(self, v, x):
    v, x = np.broadcast_arrays(np.asarray(v, dtype=float), np.asarray(x, dtype=float))
    return np.abs(np.linalg.norm(x, axis=-1) - self.radius(v))

  def sample_boundary_points(self, v, n, rng):
    v = np.asarray(v, dtype=float)
    return _uniform_sphere(n, v.shape[-1], float(self.radius(v)), rng)


class ConeRegion(RegionFamily):
  """開き角が速さの関数で与えられる扇形（d=2）/ 円錐（d=3）の共通実装

  子午面 (a, b≥0) に落とすと、K(v) は半径 r・角度 [0, θ] の扇形になる。
  d=3 の回転体でも最近境界点は同じ子午面上にあるので、距離は子午面で計算できる。
  """

  r: float

  @abstractmethod
  def aperture(self, speed) -> np.ndarray:
    """速さ |v| に対する半開き角 θ(|v|)"""

  def segment_band(self, speed) -> np.ndarray:
    """Θ(v) に線分 R(v) を含める速さの範囲"""
    return np.zeros(np.shape(speed), dtype=bool)

  @property
  def global_radius(self) -> float:
    return self.r

  def contains(self, v, x):
    axial, radial, rho, speed, _ = _meridian(v, x)
    theta = self.aperture(speed)
    angle = np.arctan2(radial, axial)
    return (rho <= self.r) & ((angle <= theta + GEOMETRY_TOLERANCE) | (rho == 0.0))

  def boundary_distance(self, v, x):
    axial, radial, rho, speed, _ = _meridian(v, x)
    theta = self.aperture(speed)
    angle = np.arctan2(radial, axial)
    cos_t, sin_t = np.cos(theta), np.sin(theta)
    # 円弧 {ρ = r, 角度 ∈ [0, θ]}
    to_arc = np.where(
      angle <= theta,
      np.abs(rho - self.r),
      np.hypot(axial - self.r * cos_t, radial - self.r * sin_t),
    )
    # 側面 {角度 = θ, ρ ∈ [0, r]}（θ = π では軸上の内部線分なので境界ではない）
    t = np.clip(axial * cos_t + radial * sin_t, 0.0, self.r)
    to_face = np.hypot(axial - t * cos_t, radial - t * sin_t)
    full_ball = theta >= np.pi
    return np.where(full_ball, np.abs(rho - self.r), np.minimum(to_arc, to_face))

  def segment_ends(self, speed):
    """線分 R(v) の軸方向座標 [−r, 2r(|v|−1)]"""
    speed = np.asarray(speed, dtype=float)
    return -self.r * np.ones_like(speed), 2.0 * self.r * (speed - 1.0)

  def segment_distance(self, v, x) -> np.ndarray:
    """x から線分 R(v) までの距離（R(v) を持たない速さでは inf）"""
    axial, radial, _, speed, _ = _meridian(v, x)
    low, high = self.segment_ends(speed)
    nearest = np.clip(axial, low, np.maximum(low, high))
    distance = np.hypot(axial - nearest, radial)
    return np.where(self.segment_band(speed), distance, np.inf)

  def theta_distance(self, v, x):
    return np.minimum(self.boundary_distance(v, x), self.segment_distance(v, x))

  def sample_boundary_points(self, v, n, rng):
    v = np.asarray(v, dtype=float)
    dimension = v.shape[-1]
    axis, speed = _axis_and_speed(v)
    theta = float(self.aperture(speed))
    if theta >= np.pi:
      return _uniform_sphere(n, dimension, self.r, rng)
    if dimension == 2:
      arc_measure, face_measure = 2.0 * theta * self.r, 2.0 * self.r
    else:
      arc_measure = 2.0 * np.pi * self.r ** 2 * (1.0 - np.cos(theta))
      face_measure = np.pi * self.r ** 2 * np.sin(theta)
    n_arc, n_face = rng.multinomial(n, [arc_measure / (arc_measure + face_measure), face_measure / (arc_measure + face_measure)])
    if dimension == 2:
      arc_angle = rng.uniform(0.0, theta, size=n_arc)
      face_length = rng.uniform(0.0, self.r, size=n_face)
    else:
      arc_angle = np.arccos(rng.uniform(np.cos(theta), 1.0, size=n_arc))
      face_length = self.r * np.sqrt(rng.random(n_face))
    axial = np.concatenate([self.r * np.cos(arc_angle), face_length * np.cos(theta)])
    radial = np.concatenate([self.r * np.sin(arc_angle), face_length * np.sin(theta)])
    return _from_meridian(axial, radial, axis, rng)

  def sample_theta_points(self, v, n, rng):
    v = np.asarray(v, dtype=float)
    axis, speed = _axis_and_speed(v)
    if not bool(self.segment_band(speed)):
      return self.sample_boundary_points(v, n, rng)
    low, high = self.segment_ends(speed)
    length = float(high - low)
    if v.shape[-1] == 2:
      share = length / (length + 2.0 * np.pi * self.r)
    else:
      share = CONE_SEGMENT_SHARE_3D
    n_segment = rng.binomial(n, share)
    boundary = self.sample_boundary_points(v, n - n_segment, rng)
    segment = rng.uniform(float(low), float(high), size=n_segment)[:, None] * axis
    return np.vstack([boundary, segment])


@dataclass(frozen=True)
class VisionCone(ConeRegion):
  """視野錐 C(r, v, θ(|v|))

  |v| ≤ 1 では球全体、それ以上では開き角が θ* へ単調に狭まる。
  Θ(v) は |v| ∈ (1/2, 1] で線分 R(v) = [−r v/|v|, 2r(|v|−1) v/|v|] を含む。
  """
  r: float = 1.0
  profile: AngleProfile = AngleProfile()
  name = "vision_cone"

  def __post_init__(self):
    if self.r <= 0.0:
      raise ValueError(f"半径は正の値で指定してください: {self.r}")

  def aperture(self, speed):
    return self.profile(speed)

  def segment_band(self, speed):
    speed = np.asarray(speed, dtype=float)
    return (speed > 0.5) & (speed <= 1.0)

  @property
  def velocity_lipschitz(self) -> float:
    return 2.0 * max(2.0, self.profile.lipschitz) * self.r


@dataclass(frozen=True)
class FixedCone(ConeRegion):
  """開き角一定の錐 C(r, v, θ)

  v = 0 で不連続になり正則性仮定を満たさないため、仮説検証の対照群としてのみ使う。
  """
  r: float = 1.0
  theta: float = np.pi / 3.0
  name = "fixed_cone"

  def __post_init__(self):
    if self.r <= 0.0 or not 0.0 < self.theta <= np.pi:
      raise ValueError(f"r > 0, θ ∈ (0, π] が必要です: r={self.r}, θ={self.theta}")

  def aperture(self, speed):
    return np.full(np.shape(speed), self.theta)

  @property
  def velocity_lipschitz(self) -> float:
    return float("inf") if self.theta < np.pi else 0.0


def cone_eps_boundary_bound(region: ConeRegion, v, eps: float) -> float:
  """θ(|v|) < π/2 の錐について |∂^ε K(v)| の解析的上界を返す（適用外なら nan）"""
  v = np.asarray(v, dtype=float)
  theta = float(region.aperture(np.linalg.norm(v)))
  if theta >= np.pi / 2.0:
    return float("nan")
  factor = 1.0 + 1.0 / np.sin(theta)
  if v.shape[-1] == 2:
    return float(4.0 * region.r * eps * theta * factor)
  return float(4.0 * np.pi / 3.0 * eps * (1.0 - np.cos(theta)) * factor * (3.0 * region.r ** 2 + factor ** 2))


# 以下はスカラー入力向けの関数インターフェース

def contains(region: RegionFamily, v, x):
  return region.contains(v, x)[()]


def signed_distance(region: RegionFamily, v, x):
  return region.signed_distance(v, x)[()]


def eps_boundary_contains(region: RegionFamily, v, x, eps: float):
  """x ∈ ∂^ε K(v) の判定

  Raises:
    ValueError: eps ≤ 0 の場合
  """
  if eps <= 0.0:
    raise ValueError(f"eps は正の値で指定してください: {eps}")
  return (region.boundary_distance(v, x) <= eps)[()]


def enlarged_contains(region: RegionFamily, v, x, eps: float):
  """x ∈ K(v)^{ε,+}"""
  return (region.contains(v, x) | (region.boundary_distance(v, x) <= eps))[()]


def reduced_contains(region: RegionFamily, v, x, eps: float):
  """x ∈ K(v)^{ε,−}"""
  return (region.contains(v, x) & (region.boundary_distance(v, x) > eps))[()]


def theta_contains(region: RegionFamily, v, x):
  return theta_enlarged_contains(region, v, x, 0.0)


def theta_enlarged_contains(region: RegionFamily, v, x, eps: float):
  """x ∈ Θ(v)^{ε,+}（eps = 0 では幾何許容誤差で Θ(v) を判定）"""
  if eps < 0.0:
    raise ValueError(f"eps は 0 以上で指定してください: {eps}")
  return (region.theta_distance(v, x) <= max(eps, GEOMETRY_TOLERANCE))[()]


def slope_set(region: RegionFamily, v, x, tol_b: float = DEFAULT_BOUNDARY_TOLERANCE) -> SlopeSet:
  """点 (x, v) での許容傾き集合

  一般化境界 ∂̃K(v) は Θ(v) で代用する（∂̃K(v) ⊆ Θ(v)）。

  Raises:
    ValueError: tol_b ≤ 0 の場合
  """
  if tol_b <= 0.0:
    raise ValueError(f"tol_b は正の値で指定してください: {tol_b}")
  return SlopeSet(int(region.slope_codes(v, x, tol_b)))
