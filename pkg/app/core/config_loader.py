import json
import os
from typing import Any, Dict, Iterable, Optional

from dotenv import load_dotenv
from pydantic import ValidationError

from app.core.errors import ConfigurationError
from app.core.logging_config import get_logger
from app.models.config import RunConfig

logger = get_logger(__name__)

OUTPUT_DIR_ENV = "SWARMLAB_OUTPUT_DIR"

# 設定キャッシュ（パス・更新時刻・上書き指定をキーとする）
_config_cache: Dict[str, RunConfig] = {}


class ConfigLoader:
  """実行設定の読み込み・上書き・検証を行うクラス"""

  def __init__(self):
    self.base_path = os.path.join(os.path.dirname(os.path.dirname(os.path.dirname(__file__))), "configs")
    load_dotenv()

  def default_config_path(self) -> str:
    return os.path.join(self.base_path, "default.json")

  def read_document(self, config_path: Optional[str]) -> Dict[str, Any]:
    """
    設定ファイル（JSON）を読み込む。パス未指定の場合は空の文書（全て既定値）

    Raises:
      ConfigurationError: ファイルが見つからない、または JSON として不正な場合
    """
    if config_path is None:
      return {}
    if not os.path.exists(config_path):
      logger.error(f"設定ファイルが見つかりません: {config_path}")
      raise ConfigurationError(f"設定ファイルが見つかりません: {config_path}")
    try:
      with open(config_path, "r", encoding="utf-8") as f:
        document = json.load(f)
    except json.JSONDecodeError as e:
      logger.error(f"設定ファイルの形式が正しくありません: {e}")
      raise ConfigurationError(f"設定ファイルの形式が正しくありません: {e}") from e
    if not isinstance(document, dict):
      raise ConfigurationError("設定ファイルの最上位は JSON オブジェクトである必要があります")
    return document

  @staticmethod
  def parse_value(text: str) -> Any:
    """上書き値を JSON として解釈し、失敗した場合は文字列のまま返す"""
    try:
      return json.loads(text)
    except json.JSONDecodeError:
      return text

  def apply_overrides(self, document: Dict[str, Any], overrides: Iterable[str]) -> Dict[str, Any]:
    """
    `section.key=value` 形式の上書きを文書に適用

    Raises:
      ConfigurationError: 形式が不正な場合
    """
    for item in overrides:
      if "=" not in item:
        raise ConfigurationError(f"上書き指定は key=value 形式で指定してください: {item}")
      path, raw = item.split("=", 1)
      keys = [k for k in path.strip().split(".") if k]
      if not keys:
        raise ConfigurationError(f"上書きキーが空です: {item}")
      node = document
      for key in keys[:-1]:
        child = node.get(key)
        if child is None:
          child = {}
          node[key] = child
        if not isinstance(child, dict):
          raise ConfigurationError(f"{path} の途中 {key} はオブジェクトではありません")
        node = child
      node[keys[-1]] = self.parse_value(raw)
      logger.debug(f"設定を上書き: {path}={raw}")
    return document

  def validate(self, document: Dict[str, Any]) -> RunConfig:
    try:
      return RunConfig.model_validate(document)
    except ValidationError as e:
      logger.error(f"設定の検証に失敗しました: {e.error_count()} 件のエラー")
      raise ConfigurationError(f"設定の検証に失敗しました:\n{e}") from e

  def load(self, config_path: Optional[str] = None, overrides: Iterable[str] = ()) -> RunConfig:
    """
    設定を読み込み、上書きを適用して検証する（結果はキャッシュ）

    Returns:
      RunConfig: 検証済みの実行設定
    """
    overrides = list(overrides)
    env_dir = os.environ.get(OUTPUT_DIR_ENV)
    stamp = None
    if config_path and os.path.exists(config_path):
      info = os.stat(config_path)
      stamp = [info.st_mtime_ns, info.st_size]
    cache_key = json.dumps([os.path.abspath(config_path) if config_path else None, stamp, overrides, env_dir])
    if cache_key not in _config_cache:
      document = self.apply_overrides(self.read_document(config_path), overrides)
      config = self.validate(document)
      if env_dir:
        config = config.model_copy(update={"output": config.output.model_copy(update={"directory": env_dir})})
        logger.info(f"出力ディレクトリを環境変数で上書きしました: {env_dir}")
      _config_cache[cache_key] = config
      logger.info(f"設定を読み込みました: {config_path or '(既定値)'}")
    return _config_cache[cache_key]


def clear_cache() -> None:
  _config_cache.clear()


# グローバル関数（モジュール単位での利用のため）
_config_loader = ConfigLoader()


def load_run_config(config_path: Optional[str] = None, overrides: Iterable[str] = ()) -> RunConfig:
  return _config_loader.load(config_path, overrides)
