import argparse
import json
import sys
from typing import List, Optional

from app import __version__
from app.api.commands import COMMANDS
from app.core.config_loader import load_run_config
from app.core.errors import SwarmLabError
from app.core.logging_config import get_logger, setup_logging

logger = get_logger(__name__)

# 結果を標準出力に書くサブコマンド（既定ではログを抑える）
STDOUT_COMMANDS = ("w1", "schema")


def _common_options() -> argparse.ArgumentParser:
  common = argparse.ArgumentParser(add_help=False)
  common.add_argument("--config", default=None, help="実行設定（JSON）のパス。省略時は全て既定値")
  common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
    help="ドット区切りのパスによる設定の上書き（繰り返し指定可）。例: dynamics.dt=0.0005")
  common.add_argument("--workers", type=int, default=None, help="ワーカー数（1 でビット単位の再現性）")
  common.add_argument("--output-dir", default=None, help="出力ディレクトリ（設定・環境変数より優先）")
  common.add_argument("--log-level", default=None, help="ログレベル（DEBUG, INFO, WARNING, ...）")
  return common


def build_parser() -> argparse.ArgumentParser:
  """サブコマンド毎の引数パーサーを構築"""
  common = _common_options()
  parser = argparse.ArgumentParser(prog="swarmlab", description="感受領域を持つ群れモデルの数値実験ラボ")
  parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
  subparsers = parser.add_subparsers(dest="command", required=True)
  subparsers.add_parser("simulate", parents=[common], help="N 粒子系を解いて軌道を書き出す")
  subparsers.add_parser("converge", parents=[common], help="平均場収束スタディ")
  subparsers.add_parser("stability", parents=[common], help="初期密度に関する安定性スタディ")
  subparsers.add_parser("mollifier", parents=[common], help="平滑化パラメータに関する安定性スタディ")
  subparsers.add_parser("hypcheck", parents=[common], help="領域族の正則性仮定の検証")
  w1_parser = subparsers.add_parser("w1", parents=[common], help="2つの測度 CSV の W1 距離を表示")
  w1_parser.add_argument("first", help="1つ目の測度 CSV")
  w1_parser.add_argument("second", help="2つ目の測度 CSV")
  w1_parser.add_argument("--plan", default=None, help="最適輸送計画 (i, j, mass) の書き出し先")
  lipschitz_parser = subparsers.add_parser("lipschitz", parents=[common], help="平均場の力のリプシッツ診断")
  lipschitz_parser.add_argument("--trajectory", default=None, help="参照解の軌道 CSV（省略時は参照解を計算）")
  subparsers.add_parser("schema", parents=[common], help="実行設定の JSON スキーマを表示")
  return parser


def _error_payload(error: BaseException, exit_code: int) -> str:
  return json.dumps({"error": type(error).__name__, "message": str(error), "exit_code": exit_code}, ensure_ascii=False)


def main(argv: Optional[List[str]] = None) -> int:
  """
  コマンドラインのエントリポイント

  Returns:
    int: 終了コード（0 成功、2 設定エラー、3 数値計算の中断、4 問題サイズ超過、1 その他）
  """
  args = build_parser().parse_args(argv)
  level = args.log_level
  if level is None and args.command in STDOUT_COMMANDS:
    level = "WARNING"
  setup_logging(level)
  try:
    overrides = list(args.overrides)
    if args.workers is not None:
      overrides.append(f"workers={args.workers}")
    if args.output_dir is not None:
      overrides.append(f"output.directory={json.dumps(args.output_dir)}")
    config = load_run_config(args.config, overrides)
    if args.output_dir is not None and config.output.directory != args.output_dir:
      config = config.model_copy(update={"output": config.output.model_copy(update={"directory": args.output_dir})})
    logger.info(f"{args.command} を開始します (seed={config.seed}, workers={config.workers})")
    status = COMMANDS[args.command](config, args)
    logger.info(f"{args.command} が完了しました")
    return status
  except SwarmLabError as e:
    logger.error(f"{args.command} が失敗しました: {e}")
    print(_error_payload(e, e.exit_code), file=sys.stderr)
    return e.exit_code
  except ValueError as e:
    logger.error(f"入力が不正です: {e}")
    print(_error_payload(e, 2), file=sys.stderr)
    return 2
  except Exception as e:
    logger.error(f"未処理の例外が発生しました: {e}", exc_info=True)
    print(_error_payload(e, 1), file=sys.stderr)
    return 1


if __name__ == "__main__":
  sys.exit(main())
