"""初期密度 f0 からの経験測度の標本化"""
from typing import Sequence, Union

import numpy as np

from app.core.dynamics import ParticleState
from app.core.logging_config import get_logger
from app.models.config import CustomSamplesConfig, TwoClusterFlockConfig, UniformBoxGaussianVConfig

logger = get_logger(__name__)

InitialDensitySpec = Union[UniformBoxGaussianVConfig, TwoClusterFlockConfig, CustomSamplesConfig]


def sample_rng(seed: int, n: int) -> np.random.Generator:
  """(seed, N) から決まる乱数生成器（同じ N なら参照解と同じ標本になる）"""
  return np.random.default_rng([seed, n])


def _truncated_normal(rng: np.random.Generator, means: np.ndarray, std: float, cutoff: float) -> np.ndarray:
  """各行を平均 means の正規分布から引き、|v| > cutoff の行だけ引き直す"""
  draws = means + std * rng.standard_normal(means.shape)
  outside = np.linalg.norm(draws, axis=1) > cutoff
  while outside.any():
    draws[outside] = means[outside] + std * rng.standard_normal((int(outside.sum()), means.shape[1]))
    outside = np.linalg.norm(draws, axis=1) > cutoff
  return draws


def sample_initial(spec: InitialDensitySpec, n: int, seed: int) -> ParticleState:
  """f0 からの i.i.d. 標本（重み 1/N、速度台は B(0, R_v⁰) 内）

  Raises:
    ValueError: n < 1 の場合
  """
  if n < 1:
    raise ValueError(f"粒子数は 1 以上で指定してください: {n}")
  rng = sample_rng(seed, n)
  if isinstance(spec, UniformBoxGaussianVConfig):
    positions = rng.uniform(np.asarray(spec.box_low), np.asarray(spec.box_high), size=(n, spec.dimension))
    means = np.broadcast_to(np.asarray(spec.velocity_mean, dtype=float), (n, spec.dimension))
    velocities = _truncated_normal(rng, means, spec.velocity_std, spec.velocity_cutoff)
  elif isinstance(spec, TwoClusterFlockConfig):
    labels = (rng.random(n) >= spec.fraction).astype(int)
    centers = np.asarray(spec.centers, dtype=float)[labels]
    spreads = np.asarray(spec.spreads, dtype=float)[labels]
    positions = centers + spreads[:, None] * rng.standard_normal((n, spec.dimension))
    means = np.asarray(spec.mean_velocities, dtype=float)[labels]
    velocities = _truncated_normal(rng, means, spec.velocity_std, spec.velocity_cutoff)
  elif isinstance(spec, CustomSamplesConfig):
    samples = np.asarray(spec.samples, dtype=float)
    picked = samples[rng.integers(0, samples.shape[0], size=n)]
    positions, velocities = picked[:, :spec.dimension], picked[:, spec.dimension:]
  else:
    raise ValueError(f"未対応の初期密度です: {type(spec).__name__}")
  logger.debug(f"初期密度から標本化: kind={spec.kind}, N={n}, seed={seed}")
  return ParticleState.uniform(positions, velocities)


def velocity_cutoff(spec: InitialDensitySpec) -> float:
  """速度台の半径 R_v⁰"""
  if isinstance(spec, CustomSamplesConfig):
    samples = np.asarray(spec.samples, dtype=float)
    return float(np.max(np.linalg.norm(samples[:, spec.dimension:], axis=1)))
  return spec.velocity_cutoff


def position_mean(spec: InitialDensitySpec) -> np.ndarray:
  if isinstance(spec, UniformBoxGaussianVConfig):
    return (np.asarray(spec.box_low) + np.asarray(spec.box_high)) / 2.0
  if isinstance(spec, TwoClusterFlockConfig):
    centers = np.asarray(spec.centers, dtype=float)
    return spec.fraction * centers[0] + (1.0 - spec.fraction) * centers[1]
  return np.mean(np.asarray(spec.samples, dtype=float)[:, :spec.dimension], axis=0)


def position_std(spec: InitialDensitySpec) -> np.ndarray:
  """位置の座標毎の標準偏差"""
  if isinstance(spec, UniformBoxGaussianVConfig):
    return (np.asarray(spec.box_high) - np.asarray(spec.box_low)) / np.sqrt(12.0)
  if isinstance(spec, TwoClusterFlockConfig):
    centers = np.asarray(spec.centers, dtype=float)
    spreads = np.asarray(spec.spreads, dtype=float)
    f = spec.fraction
    mean = f * centers[0] + (1.0 - f) * centers[1]
    second = f * (spreads[0] ** 2 + centers[0] ** 2) + (1.0 - f) * (spreads[1] ** 2 + centers[1] ** 2)
    return np.sqrt(second - mean ** 2)
  return np.std(np.asarray(spec.samples, dtype=float)[:, :spec.dimension], axis=0)


def translate_spec(spec: InitialDensitySpec, shift: Sequence[float]) -> InitialDensitySpec:
  """位置を shift だけ平行移動した初期密度"""
  shift = np.asarray(shift, dtype=float)
  if shift.shape != (spec.dimension,):
    raise ValueError(f"shift の次元が一致しません: {shift.shape} != ({spec.dimension},)")
  if isinstance(spec, UniformBoxGaussianVConfig):
    return spec.model_copy(update={
      "box_low": (np.asarray(spec.box_low) + shift).tolist(),
      "box_high": (np.asarray(spec.box_high) + shift).tolist(),
    })
  if isinstance(spec, TwoClusterFlockConfig):
    return spec.model_copy(update={"centers": (np.asarray(spec.centers) + shift).tolist()})
  samples = np.asarray(spec.samples, dtype=float).copy()
  samples[:, :spec.dimension] += shift
  return spec.model_copy(update={"samples": samples.tolist()})
