"""サブコマンドの処理（設定からサービスを呼び出し、結果をファイルへ書き出す）"""
import argparse
import json
from typing import Callable, Dict, List

import numpy as np

from app.core.component_mapper import ComponentMapper
from app.core.dynamics import momentum, simulate
from app.core.logging_config import get_logger
from app.core.transport import w1
from app.models.config import RunConfig
from app.services.convergence import convergence_study, reference_solution
from app.services.export import (
  build_manifest, output_path, read_measure_csv, read_trajectory_csv, write_frame, write_json, write_plan_csv,
  write_trajectory_csv,
)
from app.services.hypothesis import hypothesis_check, velocities_from_speeds
from app.services.lipschitz import lipschitz_diagnostic, sample_probe_pairs
from app.services.sampling import sample_initial, translate_spec
from app.services.stability import mollifier_stability_study, stability_study

logger = get_logger(__name__)

Handler = Callable[[RunConfig, argparse.Namespace], int]


def _finish(config: RunConfig, subcommand: str, outputs: List[str], diagnostics: Dict, notes: List[str] = None) -> None:
  manifest_path = output_path(config, "manifest.json")
  manifest = build_manifest(subcommand, config, outputs + [manifest_path], diagnostics, notes)
  write_json(manifest, manifest_path)


def _write_report(config: RunConfig, study: str, report, frame) -> List[str]:
  return [write_frame(frame, output_path(config, f"{study}.csv")), write_json(report, output_path(config, f"{study}.json"))]


def run_simulate(config: RunConfig, args: argparse.Namespace) -> int:
  """初期密度から N 粒子系を解き、軌道と診断量を書き出す"""
  sim = ComponentMapper.build_sim_config(config)
  initial = sample_initial(config.study.initial, config.study.n_particles, config.seed)
  trajectory = simulate(initial, sim)
  outputs = []
  if config.output.write_trajectory:
    outputs.append(write_trajectory_csv(trajectory, output_path(config, "trajectory.csv")))
  outputs.append(write_frame(trajectory.diagnostics, output_path(config, "diagnostics.csv")))
  drift = float(np.max(np.abs(momentum(trajectory.final) - momentum(initial))))
  summary = {
    "n_particles": initial.n_particles,
    "n_steps": sim.n_steps,
    "final_time": float(trajectory.times[-1]),
    "initial_max_speed": float(trajectory.diagnostics["max_speed"].iloc[0]),
    "final_max_speed": float(trajectory.diagnostics["max_speed"].iloc[-1]),
    "momentum_drift": drift,
    "mass": float(np.sum(trajectory.final.weights)),
  }
  outputs.append(write_json(summary, output_path(config, "simulate.json")))
  _finish(config, "simulate", outputs, summary)
  return 0


def run_converge(config: RunConfig, args: argparse.Namespace) -> int:
  study = config.study
  report, frame = convergence_study(study.initial, config, study.n_list, study.n_ref, study.times)
  outputs = _write_report(config, "converge", report, frame)
  _finish(config, "converge", outputs, {"fitted_c": report.fitted_c, "passed": report.passed}, report.notes)
  return 0


def run_stability(config: RunConfig, args: argparse.Namespace) -> int:
  """study.comparison（未指定なら shift だけ平行移動した初期密度）との安定性スタディ"""
  study = config.study
  translation_bound = None
  comparison = study.comparison
  if comparison is None:
    comparison = translate_spec(study.initial, study.shift)
    translation_bound = float(np.linalg.norm(study.shift))
  report, frame = stability_study(study.initial, comparison, config, study.n_ref, study.times,
    translation_bound=translation_bound)
  outputs = _write_report(config, "stability", report, frame)
  _finish(config, "stability", outputs, {"fitted_c": report.fitted_c, "passed": report.passed}, report.notes)
  return 0


def run_mollifier(config: RunConfig, args: argparse.Namespace) -> int:
  study = config.study
  sequence = [ComponentMapper.build_mollifier(p) for p in study.mollifier_sequence]
  report, frame = mollifier_stability_study(study.initial, config, study.n_ref, sequence)
  outputs = _write_report(config, "mollifier", report, frame)
  _finish(config, "mollifier", outputs, {"fitted_c": report.fitted_c, "passed": report.passed}, report.notes)
  return 0


def run_hypcheck(config: RunConfig, args: argparse.Namespace) -> int:
  settings = config.study.hypothesis
  region = ComponentMapper.build_region(config.region)
  v_samples = velocities_from_speeds(settings.speeds, config.study.dimension)
  report, frame = hypothesis_check(region, v_samples, settings.eps_grid, settings.n_samples, config.seed,
    settings.perturbations, settings.margin, settings.r2_threshold, config.workers)
  outputs = _write_report(config, "hypcheck", report, frame)
  _finish(config, "hypcheck", outputs, {"min_r2": report.min_r2, "passed": report.passed}, report.notes)
  return 0


def run_w1(config: RunConfig, args: argparse.Namespace) -> int:
  """2つの測度 CSV の W1 距離を標準出力に表示する"""
  distance, plan = w1(read_measure_csv(args.first), read_measure_csv(args.second))
  if args.plan:
    write_plan_csv(plan, args.plan)
  print(repr(float(distance)))
  return 0


def run_lipschitz(config: RunConfig, args: argparse.Namespace) -> int:
  """参照解（--trajectory 指定時はその CSV）でのリプシッツ診断"""
  study = config.study
  params = ComponentMapper.build_mollifier(study.reference)
  if args.trajectory:
    trajectory = read_trajectory_csv(args.trajectory)
  else:
    trajectory = reference_solution(study.initial, config, study.n_ref, params, [0.0, config.dynamics.t_end])
  force = ComponentMapper.build_force(config.force, ComponentMapper.build_region(config.region))
  settings = study.lipschitz
  refined = sample_probe_pairs(trajectory.final, 2 * settings.n_probes, settings.position_box, settings.perturbation,
    config.seed)
  report, frame = lipschitz_diagnostic(trajectory, refined.head(settings.n_probes), params, force, refined_pairs=refined,
    refinement_tolerance=settings.refinement_tolerance, workers=config.workers)
  outputs = _write_report(config, "lipschitz", report, frame)
  _finish(config, "lipschitz", outputs, {"max_ratio": report.max_ratio, "passed": report.passed}, report.notes)
  return 0


def run_schema(config: RunConfig, args: argparse.Namespace) -> int:
  print(json.dumps(RunConfig.model_json_schema(), indent=2, ensure_ascii=False))
  return 0


COMMANDS: Dict[str, Handler] = {
  "simulate": run_simulate,
  "converge": run_converge,
  "stability": run_stability,
  "mollifier": run_mollifier,
  "hypcheck": run_hypcheck,
  "w1": run_w1,
  "lipschitz": run_lipschitz,
  "schema": run_schema,
}
