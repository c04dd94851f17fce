import logging
import os
import sys
from typing import Optional

LOG_LEVEL_ENV = "SWARMLAB_LOG_LEVEL"
LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
DATE_FORMAT = "%Y-%m-%d %H:%M:%S"

# 数値計算ライブラリのログは WARNING 以上のみ
QUIET_LIBRARIES = ("joblib", "ot")


def setup_logging(level: Optional[str] = None) -> None:
  """ラボ全体のログ設定を初期化（呼び出す度に設定し直す）

  Args:
    level: ログレベル名。未指定の場合は環境変数 SWARMLAB_LOG_LEVEL（既定 INFO）
  """
  level_name = (level or os.environ.get(LOG_LEVEL_ENV) or "INFO").upper()
  resolved = logging.getLevelName(level_name)
  logging.basicConfig(
    level=resolved if isinstance(resolved, int) else logging.INFO,
    format=LOG_FORMAT,
    datefmt=DATE_FORMAT,
    handlers=[logging.StreamHandler(sys.stdout)],
    force=True,
  )
  for name in QUIET_LIBRARIES:
    logging.getLogger(name).setLevel(logging.WARNING)
  if not isinstance(resolved, int):
    logging.getLogger(__name__).warning(f"未知のログレベル {level_name} のため INFO を使用します")


def get_logger(name: str) -> logging.Logger:
  """指定された名前のロガーを取得"""
  return logging.getLogger(name)


class LoggerMixin:
  """サービスクラスにクラス名付きのロガーを与える"""
  @property
  def logger(self) -> logging.Logger:
    return get_logger(f"{self.__class__.__module__}.{self.__class__.__name__}")
