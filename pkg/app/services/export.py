"""CSV / JSON の入出力（17 有効桁の10進表現）"""
import json
import os
from importlib.metadata import PackageNotFoundError, version
from typing import Dict, List

import numpy as np
import pandas as pd
from pydantic import BaseModel

from app import __version__
from app.core.dynamics import ParticleState, Trajectory, _diagnostics_row
from app.core.errors import ConfigurationError
from app.core.logging_config import get_logger
from app.core.transport import DiscreteMeasure, TransportPlan
from app.models.config import RunConfig
from app.models.schemas import RunManifest

logger = get_logger(__name__)

FLOAT_FORMAT = "%.17g"


def ensure_directory(directory: str) -> str:
  os.makedirs(directory, exist_ok=True)
  return directory


def write_frame(frame: pd.DataFrame, path: str) -> str:
  ensure_directory(os.path.dirname(os.path.abspath(path)))
  frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
  logger.info(f"CSV を書き出しました: {path}")
  return path


def write_json(payload, path: str) -> str:
  """pydantic モデルまたは dict を JSON として書き出す"""
  ensure_directory(os.path.dirname(os.path.abspath(path)))
  if isinstance(payload, BaseModel):
    text = payload.model_dump_json(indent=2)
  else:
    text = json.dumps(payload, indent=2, ensure_ascii=False)
  with open(path, "w", encoding="utf-8") as f:
    f.write(text + "\n")
  logger.info(f"JSON を書き出しました: {path}")
  return path


def trajectory_frame(trajectory: Trajectory) -> pd.DataFrame:
  """1行 = 1スナップショットの1粒子（t, id, x…, v…, m）"""
  frames = []
  for t, state in zip(trajectory.times, trajectory.snapshots):
    d = state.dimension
    data = {"t": np.full(state.n_particles, t), "id": np.arange(state.n_particles)}
    for k in range(d):
      data[f"x{k}"] = state.positions[:, k]
    for k in range(d):
      data[f"v{k}"] = state.velocities[:, k]
    data["m"] = state.weights
    frames.append(pd.DataFrame(data))
  return pd.concat(frames, ignore_index=True)


def write_trajectory_csv(trajectory: Trajectory, path: str) -> str:
  return write_frame(trajectory_frame(trajectory), path)


def read_trajectory_csv(path: str) -> Trajectory:
  """軌道 CSV を読み戻す（診断量はスナップショットから再計算）

  Raises:
    ConfigurationError: ファイルが存在しない、または列が不正な場合
  """
  if not os.path.exists(path):
    logger.error(f"軌道ファイルが見つかりません: {path}")
    raise ConfigurationError(f"軌道ファイルが見つかりません: {path}")
  frame = pd.read_csv(path, float_precision="round_trip")
  position_columns = sorted([c for c in frame.columns if c.startswith("x")], key=lambda c: int(c[1:]))
  velocity_columns = sorted([c for c in frame.columns if c.startswith("v")], key=lambda c: int(c[1:]))
  if not {"t", "id", "m"}.issubset(frame.columns) or len(position_columns) != len(velocity_columns):
    raise ConfigurationError(f"軌道 CSV の列が不正です: {list(frame.columns)}")
  times, snapshots, rows = [], [], []
  for index, (t, group) in enumerate(frame.groupby("t", sort=True)):
    group = group.sort_values("id")
    state = ParticleState(group[position_columns].to_numpy(), group[velocity_columns].to_numpy(), group["m"].to_numpy())
    times.append(float(t))
    snapshots.append(state)
    rows.append(_diagnostics_row(index, float(t), state))
  logger.info(f"軌道を読み込みました: {path} (スナップショット数={len(snapshots)})")
  return Trajectory(np.asarray(times), tuple(snapshots), pd.DataFrame(rows))


def measure_frame(measure: DiscreteMeasure) -> pd.DataFrame:
  data = {f"z{k}": measure.points[:, k] for k in range(measure.dimension)}
  data["weight"] = measure.weights
  return pd.DataFrame(data)


def write_measure_csv(measure: DiscreteMeasure, path: str) -> str:
  return write_frame(measure_frame(measure), path)


def read_measure_csv(path: str) -> DiscreteMeasure:
  """ヘッダー行 + 1行1原子（座標列、最後の列が重み）の CSV を読み込む"""
  if not os.path.exists(path):
    logger.error(f"測度ファイルが見つかりません: {path}")
    raise ConfigurationError(f"測度ファイルが見つかりません: {path}")
  frame = pd.read_csv(path, float_precision="round_trip")
  if frame.shape[1] < 2:
    raise ConfigurationError(f"測度 CSV には座標列と重み列が必要です: {path}")
  values = frame.to_numpy(dtype=float)
  return DiscreteMeasure(values[:, :-1], values[:, -1])


def plan_to_frame(plan: TransportPlan) -> pd.DataFrame:
  return pd.DataFrame({"i": plan.sources, "j": plan.targets, "mass": plan.masses})


def write_plan_csv(plan: TransportPlan, path: str) -> str:
  return write_frame(plan_to_frame(plan), path)


def library_versions() -> Dict[str, str]:
  versions = {}
  for package in ("numpy", "scipy", "pot", "pandas", "scikit-learn", "joblib", "pydantic"):
    try:
      versions[package] = version(package)
    except PackageNotFoundError:
      versions[package] = "unknown"
  return versions


def build_manifest(subcommand: str, config: RunConfig, outputs: List[str], diagnostics: Dict = None,
  notes: List[str] = None) -> RunManifest:
  return RunManifest(
    subcommand=subcommand,
    version=__version__,
    seed=config.seed,
    workers=config.workers,
    config=config.echo(),
    libraries=library_versions(),
    outputs=[os.path.basename(p) for p in outputs],
    diagnostics=diagnostics or {},
    notes=notes or [],
  )


def output_path(config: RunConfig, name: str) -> str:
  """<directory>/<prefix>_<name>"""
  return os.path.join(ensure_directory(config.output.directory), f"{config.output.prefix}_{name}")
