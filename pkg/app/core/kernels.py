"""相互作用カーネル（通信重み ψ、速度結合 h、ポテンシャル勾配 ∇φ、方向場 w）

各組み込みカーネルは解析的な上限（sup）とリプシッツ定数を持つ。
"""
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np


class Kernel(ABC):
  """スカラー通信重み ψ: R^d → R"""

  @abstractmethod
  def __call__(self, z: np.ndarray) -> np.ndarray: ...

  @property
  @abstractmethod
  def sup(self) -> float: ...

  @property
  @abstractmethod
  def lipschitz(self) -> float: ...


@dataclass(frozen=True)
class ConstantKernel(Kernel):
  value: float = 1.0

  def __call__(self, z):
    return np.full(np.shape(z)[:-1], self.value)

  @property
  def sup(self) -> float:
    return abs(self.value)

  @property
  def lipschitz(self) -> float:
    return 0.0


@dataclass(frozen=True)
class RationalKernel(Kernel):
  """ψ(z) = (1 + |z|²)^{−γ}"""
  gamma: float = 0.5

  def __post_init__(self):
    if self.gamma <= 0.0:
      raise ValueError(f"gamma は正の値で指定してください: {self.gamma}")

  def __call__(self, z):
    return (1.0 + np.sum(np.asarray(z) ** 2, axis=-1)) ** (-self.gamma)

  @property
  def sup(self) -> float:
    return 1.0

  @property
  def lipschitz(self) -> float:
    # |ψ'(s)| = 2γ s (1 + s²)^{−γ−1} は s² = 1/(2γ+1) で最大
    s = 1.0 / np.sqrt(2.0 * self.gamma + 1.0)
    return float(2.0 * self.gamma * s * (1.0 + s * s) ** (-self.gamma - 1.0))


class VelocityCoupling(ABC):
  """速度結合 h: R^d → R^d（h(0) = 0）"""

  @abstractmethod
  def __call__(self, u: np.ndarray) -> np.ndarray: ...

  @property
  @abstractmethod
  def lipschitz(self) -> float: ...

  @abstractmethod
  def bound(self, radius: float) -> float:
    """|u| ≤ radius における |h(u)| の上限"""

  @property
  def is_identity(self) -> bool:
    return False


@dataclass(frozen=True)
class IdentityCoupling(VelocityCoupling):
  def __call__(self, u):
    return np.asarray(u, dtype=float)

  @property
  def lipschitz(self) -> float:
    return 1.0

  def bound(self, radius: float) -> float:
    return radius

  @property
  def is_identity(self) -> bool:
    return True


@dataclass(frozen=True)
class ClippedLinearCoupling(VelocityCoupling):
  """h(u) = gain·u を大きさ clip で打ち切ったもの"""
  gain: float = 1.0
  clip: float = 1.0

  def __post_init__(self):
    if self.gain <= 0.0 or self.clip <= 0.0:
      raise ValueError("gain, clip は正の値で指定してください")

  def __call__(self, u):
    scaled = self.gain * np.asarray(u, dtype=float)
    norm = np.linalg.norm(scaled, axis=-1, keepdims=True)
    factor = np.minimum(1.0, self.clip / np.maximum(norm, np.finfo(float).tiny))
    return scaled * factor

  @property
  def lipschitz(self) -> float:
    return self.gain

  def bound(self, radius: float) -> float:
    return min(self.clip, self.gain * radius)


class VectorKernel(ABC):
  """ポテンシャル勾配 ∇φ: R^d → R^d"""

  @abstractmethod
  def __call__(self, z: np.ndarray) -> np.ndarray: ...

  @property
  @abstractmethod
  def sup(self) -> float: ...

  @property
  @abstractmethod
  def lipschitz(self) -> float: ...


@dataclass(frozen=True)
class MorseGradient(VectorKernel):
  """ガウス型 Morse ポテンシャルの勾配

  ∇φ(z) = 2z (C_r/ℓ_r² exp(−|z|²/ℓ_r²) − C_a/ℓ_a² exp(−|z|²/ℓ_a²))。
  短距離で反発、長距離で引力となる奇関数。
  """
  repulsion: float = 1.0
  repulsion_length: float = 0.5
  attraction: float = 0.5
  attraction_length: float = 2.0

  def __post_init__(self):
    if self.repulsion < 0.0 or self.attraction < 0.0:
      raise ValueError("振幅は 0 以上で指定してください")
    if self.repulsion_length <= 0.0 or self.attraction_length <= 0.0:
      raise ValueError("長さスケールは正の値で指定してください")

  def _terms(self) -> Tuple[Tuple[float, float], ...]:
    return ((self.repulsion, self.repulsion_length), (-self.attraction, self.attraction_length))

  def __call__(self, z):
    z = np.asarray(z, dtype=float)
    norm_sq = np.sum(z * z, axis=-1, keepdims=True)
    profile = sum(c / l ** 2 * np.exp(-norm_sq / l ** 2) for c, l in self._terms())
    return 2.0 * z * profile

  @property
  def sup(self) -> float:
    return float(sum(np.sqrt(2.0) * abs(c) * np.exp(-0.5) / l for c, l in self._terms()))

  @property
  def lipschitz(self) -> float:
    return float(sum(2.0 * abs(c) / l ** 2 for c, l in self._terms()))


class OrientationField(ABC):
  """一階モデルの方向場 w: R^d → R^d（|w| ≥ w0 > 0）"""

  @abstractmethod
  def __call__(self, x: np.ndarray) -> np.ndarray: ...

  @property
  @abstractmethod
  def min_norm(self) -> float: ...

  @property
  @abstractmethod
  def lipschitz(self) -> float: ...


@dataclass(frozen=True)
class ConstantField(OrientationField):
  direction: Tuple[float, ...] = (1.0, 0.0)

  def __call__(self, x):
    x = np.asarray(x, dtype=float)
    direction = np.asarray(self.direction, dtype=float)
    if direction.shape[-1] != x.shape[-1]:
      raise ValueError(f"方向場の次元が一致しません: {direction.shape[-1]} != {x.shape[-1]}")
    return np.broadcast_to(direction, x.shape).copy()

  @property
  def min_norm(self) -> float:
    return float(np.linalg.norm(self.direction))

  @property
  def lipschitz(self) -> float:
    return 0.0


@dataclass(frozen=True)
class RotationalField(OrientationField):
  """w(x) = s (cos ω|x|, sin ω|x|, 0, ...)"""
  strength: float = 1.0
  frequency: float = 1.0

  def __call__(self, x):
    x = np.asarray(x, dtype=float)
    phase = self.frequency * np.linalg.norm(x, axis=-1)
    field = np.zeros_like(x)
    field[..., 0] = self.strength * np.cos(phase)
    field[..., 1] = self.strength * np.sin(phase)
    return field

  @property
  def min_norm(self) -> float:
    return abs(self.strength)

  @property
  def lipschitz(self) -> float:
    return abs(self.strength * self.frequency)


def cap_speed(v: np.ndarray, speed_cap: Optional[float]) -> np.ndarray:
  """速度を (R ∧ |v|) v/|v| に打ち切る（speed_cap が None なら恒等）"""
  if speed_cap is None:
    return v
  norm = np.linalg.norm(v, axis=-1, keepdims=True)
  factor = np.minimum(1.0, speed_cap / np.maximum(norm, np.finfo(float).tiny))
  return v * factor
