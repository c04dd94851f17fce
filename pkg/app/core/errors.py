"""ラボ共通の例外階層

CLI はここで定義された例外の種類から終了コードを決定する。
"""
from typing import Optional


class SwarmLabError(Exception):
  """ラボ固有エラーの基底クラス"""
  exit_code: int = 1


class ConfigurationError(SwarmLabError, ValueError):
  """設定ファイル・上書き指定がスキーマに違反している場合"""
  exit_code = 2


class NumericalAbortError(SwarmLabError, RuntimeError):
  """数値計算を継続できない場合（非有限値、不変量違反、退化したサンプリング）"""
  exit_code = 3

  def __init__(self, message: str, time: Optional[float] = None):
    if time is not None:
      message = f"{message} (t={time:.17g})"
    super().__init__(message)
    self.time = time


class DegenerateSamplingError(NumericalAbortError):
  """初期距離 d1(0) が 0 となり比率系列が定義できない場合"""


class ProblemTooLargeError(SwarmLabError, ValueError):
  """問題サイズが上限を超えた場合"""
  exit_code = 4


class DegenerateMeasureError(SwarmLabError, ValueError):
  """総質量が 0 の測度が与えられた場合"""
  exit_code = 2


class DimensionMismatchError(SwarmLabError, ValueError):
  """次元の異なる入力が組み合わされた場合"""
  exit_code = 2
