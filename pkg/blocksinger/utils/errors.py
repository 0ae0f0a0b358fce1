"""
エラーとエラーハンドリングモジュール

このモジュールは、パッケージ全体で使用される例外クラスとエラーハンドリング機能を定義します。
各例外クラスは所属するモジュール名（feature-io, vocoder, ...）を持ち、
CLI はそれを使ってモジュール名付きのメッセージと終了コードを決定します。
"""

import logging
import traceback
import functools
from typing import Dict, Any, Optional, Type, Callable, TypeVar, Union, List

# 関数の戻り値の型
T = TypeVar('T')

# CLI 終了コード
EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERICAL = 3


# ベース例外クラス
class AppError(Exception):
    """アプリケーション基本エラークラス"""

    module = "blocksinger"

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        """
        初期化

        Args:
            message: エラーメッセージ
            details: 追加の詳細情報（オプション）
        """
        super().__init__(message)
        self.message = message
        self.details = details or {}

    def __str__(self) -> str:
        if self.details:
            return f"{self.message} - 詳細: {self.details}"
        return self.message


# 設定関連の例外
class ConfigError(AppError):
    """設定関連のエラー"""

    module = "config"

    def __init__(self, message: str, config_file: Optional[str] = None, config_key: Optional[str] = None,
                 details: Optional[Dict[str, Any]] = None):
        """
        初期化

        Args:
            message: エラーメッセージ
            config_file: 設定ファイルパス（オプション）
            config_key: 設定キー（オプション）
            details: 追加の詳細情報（オプション）
        """
        details = details or {}
        if config_file:
            details['config_file'] = config_file
        if config_key:
            details['config_key'] = config_key
        super().__init__(message, details)
        self.config_file = config_file
        self.config_key = config_key


# 入力検証関連の例外
class ValidationError(AppError):
    """入力検証関連のエラー"""

    def __init__(self, message: str, field: Optional[str] = None, value: Optional[Any] = None,
                 module: Optional[str] = None, details: Optional[Dict[str, Any]] = None):
        """
        初期化

        Args:
            message: エラーメッセージ
            field: フィールド名（オプション）
            value: 無効な値（オプション）
            module: エラーが発生したモジュール名（オプション）
            details: 追加の詳細情報（オプション）
        """
        details = details or {}
        if field:
            details['field'] = field
        if value is not None:
            details['value'] = str(value)
        super().__init__(message, details)
        self.field = field
        self.value = value
        if module:
            self.module = module


# データ形式関連の例外
class DataFormatError(AppError):
    """ファイル形式・データ形式のエラー"""

    module = "feature-io"

    def __init__(self, message: str, file_path: Optional[str] = None, details: Optional[Dict[str, Any]] = None):
        """
        初期化

        Args:
            message: エラーメッセージ
            file_path: 対象ファイルのパス（オプション）
            details: 追加の詳細情報（オプション）
        """
        details = details or {}
        if file_path:
            details['file_path'] = file_path
        super().__init__(message, details)
        self.file_path = file_path


class AnnotationParseError(DataFormatError):
    """音素アノテーションの解析エラー"""

    def __init__(self, message: str, line_number: Optional[int] = None, file_path: Optional[str] = None,
                 details: Optional[Dict[str, Any]] = None):
        details = details or {}
        if line_number is not None:
            details['line_number'] = line_number
        super().__init__(message, file_path, details)
        self.line_number = line_number


class ContainerFormatError(DataFormatError):
    """特徴量コンテナ・チェックポイントの形式エラー"""


class AudioFormatError(DataFormatError):
    """WAVファイルの形式エラー"""

    module = "vocoder"


# リソース関連の例外
class ResourceError(AppError):
    """リソース関連のエラー"""

    module = "cli"

    def __init__(self, message: str, resource_type: Optional[str] = None, resource_path: Optional[str] = None,
                 details: Optional[Dict[str, Any]] = None):
        """
        初期化

        Args:
            message: エラーメッセージ
            resource_type: リソースタイプ（オプション）
            resource_path: リソースパス（オプション）
            details: 追加の詳細情報（オプション）
        """
        details = details or {}
        if resource_type:
            details['resource_type'] = resource_type
        if resource_path:
            details['resource_path'] = resource_path
        super().__init__(message, details)
        self.resource_type = resource_type
        self.resource_path = resource_path


# 数値計算関連の例外
class ShapeError(AppError):
    """テンソル形状の不一致エラー"""

    module = "neural-core"

    def __init__(self, message: str, expected: Optional[Any] = None, actual: Optional[Any] = None,
                 module: Optional[str] = None, details: Optional[Dict[str, Any]] = None):
        details = details or {}
        if expected is not None:
            details['expected'] = str(expected)
        if actual is not None:
            details['actual'] = str(actual)
        super().__init__(message, details)
        self.expected = expected
        self.actual = actual
        if module:
            self.module = module


class NumericalError(AppError):
    """非有限値の損失など数値計算の失敗"""

    module = "training"

    def __init__(self, message: str, step: Optional[int] = None, details: Optional[Dict[str, Any]] = None):
        details = details or {}
        if step is not None:
            details['step'] = step
        super().__init__(message, details)
        self.step = step


class SelfCheckError(NumericalError):
    """勾配チェックや W1 プローブなどのセルフチェックの失敗"""

    module = "cli"


# エラーハンドリング関数
def with_error_handling(
    error_type: Type[AppError] = AppError,
    error_message: str = "処理中にエラーが発生しました",
    logger: Optional[logging.Logger] = None,
    raise_original: bool = False,
    return_on_error: Optional[Any] = None,
    log_level: int = logging.ERROR
) -> Callable[[Callable[..., T]], Callable[..., Union[T, Any]]]:
    """
    エラーハンドリングを行うデコレータ

    AppError はそのまま再送出し、それ以外の例外を error_type で包みます。

    Args:
        error_type: 発生した例外を包むエラー型
        error_message: エラーメッセージ
        logger: 使用するロガー（指定しない場合は関数のモジュールのロガー）
        raise_original: 元の例外を再スローするかどうか
        return_on_error: エラー時の戻り値
        log_level: ログレベル

    Returns:
        デコレータ関数
    """
    def decorator(func: Callable[..., T]) -> Callable[..., Union[T, Any]]:
        @functools.wraps(func)
        def wrapper(*args: Any, **kwargs: Any) -> Union[T, Any]:
            nonlocal logger
            logger = logger or logging.getLogger(func.__module__)

            try:
                return func(*args, **kwargs)
            except AppError:
                raise
            except Exception as e:
                logger.log(log_level, f"{error_message}: {str(e)}", exc_info=log_level >= logging.ERROR)

                if raise_original:
                    raise

                if return_on_error is not None:
                    return return_on_error

                details = {
                    'function': func.__name__,
                    'module': func.__module__,
                    'cause': f"{type(e).__name__}: {e}",
                    'traceback': traceback.format_exc()
                }
                raise error_type(f"{error_message}: {e}", details=details) from e

        return wrapper

    return decorator


def get_detailed_error_message(error: Exception) -> str:
    """
    例外からモジュール名付きの詳細なエラーメッセージを生成する

    Args:
        error: 例外オブジェクト

    Returns:
        "<module>: <message>" 形式のメッセージ
    """
    if isinstance(error, AnnotationParseError):
        msg = f"{error.module}: アノテーション解析エラー: {error.message}"
        if error.line_number is not None:
            msg += f" (行: {error.line_number})"
        if error.file_path:
            msg += f" - ファイル: {error.file_path}"
        return msg

    elif isinstance(error, DataFormatError):
        msg = f"{error.module}: 形式エラー: {error.message}"
        if error.file_path:
            msg += f" - ファイル: {error.file_path}"
        return msg

    elif isinstance(error, ShapeError):
        msg = f"{error.module}: 形状エラー: {error.message}"
        if error.expected is not None:
            msg += f" (期待: {error.expected}, 実際: {error.actual})"
        return msg

    elif isinstance(error, NumericalError):
        msg = f"{error.module}: 数値エラー: {error.message}"
        if error.step is not None:
            msg += f" (ステップ: {error.step})"
        return msg

    elif isinstance(error, ValidationError):
        msg = f"{error.module}: 検証エラー: {error.message}"
        if error.field:
            msg += f" - フィールド: {error.field}"
        return msg

    elif isinstance(error, ResourceError):
        msg = f"{error.module}: リソースエラー: {error.message}"
        if error.resource_path:
            msg += f" - パス: {error.resource_path}"
        return msg

    elif isinstance(error, ConfigError):
        msg = f"{error.module}: 設定エラー: {error.message}"
        if error.config_file:
            msg += f" - ファイル: {error.config_file}"
        if error.config_key:
            msg += f" (キー: {error.config_key})"
        return msg

    elif isinstance(error, AppError):
        return f"{error.module}: {error.message}"

    else:
        return f"エラー: {str(error)}"


def classify_error(error: Exception) -> Dict[str, Any]:
    """
    エラーを分類し、構造化された情報を返す

    Args:
        error: 例外オブジェクト

    Returns:
        エラーの分類情報（category, module, exit_code を含む）
    """
    result = {
        'type': type(error).__name__,
        'message': str(error),
        'is_app_error': isinstance(error, AppError),
        'module': getattr(error, 'module', 'unknown'),
        'category': 'unknown',
        'exit_code': EXIT_USAGE,
        'details': {}
    }

    if isinstance(error, NumericalError):
        result['category'] = 'numerical'
        result['exit_code'] = EXIT_NUMERICAL
    elif isinstance(error, (DataFormatError, ValidationError, ShapeError, ResourceError)):
        result['category'] = 'data'
        result['exit_code'] = EXIT_DATA
    elif isinstance(error, ConfigError):
        result['category'] = 'config'
        result['exit_code'] = EXIT_USAGE

    if isinstance(error, AppError):
        result['details'] = error.details

    return result


def exit_code_for(error: Exception) -> int:
    """例外に対応する CLI 終了コードを返す"""
    return classify_error(error)['exit_code']


class ErrorCollector:
    """複数のエラーを収集するクラス"""

    def __init__(self):
        self.errors: List[Exception] = []

    def add(self, error: Exception) -> None:
        """
        エラーを追加

        Args:
            error: 追加する例外
        """
        self.errors.append(error)

    def has_errors(self) -> bool:
        return len(self.errors) > 0

    def raise_if_errors(self, combine: bool = True) -> None:
        """
        エラーがある場合は例外を発生させる

        Args:
            combine: 複数のエラーを1つにまとめるかどうか

        Raises:
            DataFormatError: 複数のエラーをまとめた場合
        """
        if not self.has_errors():
            return

        if combine and len(self.errors) > 1:
            error_messages = [get_detailed_error_message(error) for error in self.errors]
            raise DataFormatError(
                f"{len(self.errors)}件のエラーが発生しました",
                details={'errors': error_messages}
            )
        raise self.errors[0]
