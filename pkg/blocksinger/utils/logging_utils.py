"""
ロギングユーティリティモジュール

このモジュールでは、処理時間の記録と、学習ログ（JSON Lines）の書き出しを提供します。
"""

import json
import logging
import time
import functools
from pathlib import Path
from typing import Callable, TypeVar, Any, Optional, Dict, Union

# 関数の戻り値の型
T = TypeVar('T')


def log_execution_time(logger: Optional[logging.Logger] = None, level: int = logging.DEBUG) -> Callable:
    """
    関数の実行時間をログに記録するデコレータ

    Args:
        logger: 使用するロガー（指定しない場合は呼び出し元のモジュールのロガー）
        level: ログレベル

    Returns:
        デコレータ関数
    """
    def decorator(func: Callable[..., T]) -> Callable[..., T]:
        @functools.wraps(func)
        def wrapper(*args: Any, **kwargs: Any) -> T:
            nonlocal logger

            if logger is None:
                logger = logging.getLogger(func.__module__)

            start_time = time.perf_counter()
            result = func(*args, **kwargs)
            execution_time = time.perf_counter() - start_time

            logger.log(level, f"{func.__name__} の実行時間: {format_duration(execution_time)}")

            return result

        return wrapper

    return decorator


def format_duration(seconds: float) -> str:
    """
    時間を読みやすい形式に整形する

    Args:
        seconds: 秒数

    Returns:
        整形された時間文字列
    """
    if seconds < 60:
        return f"{seconds:.3f}秒"
    elif seconds < 3600:
        return f"{seconds / 60:.1f}分"
    return f"{seconds / 3600:.1f}時間"


class JsonlWriter:
    """1行1レコードの JSON ログを追記するクラス"""

    def __init__(self, path: Union[str, Path], append: bool = True):
        """
        初期化

        Args:
            path: 出力ファイルパス
            append: 既存ファイルに追記するかどうか
        """
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        if not append and self.path.exists():
            self.path.unlink()

    def write(self, record: Dict[str, Any]) -> None:
        """
        レコードを1行追記する

        Args:
            record: JSON シリアライズ可能な辞書
        """
        with open(self.path, 'a', encoding='utf-8') as f:
            f.write(json.dumps(record, ensure_ascii=False, allow_nan=False) + "\n")

    def read_all(self) -> list:
        if not self.path.exists():
            return []
        with open(self.path, 'r', encoding='utf-8') as f:
            return [json.loads(line) for line in f if line.strip()]
