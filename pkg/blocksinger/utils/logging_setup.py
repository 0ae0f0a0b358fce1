"""
ロギング設定モジュール

このモジュールでは、パッケージ全体で使用するロギングシステムの初期化と設定を行います。
ロガーの階層、ログレベル、ログローテーションなどを設定します。
"""

import os
import sys
import logging
import logging.handlers
from pathlib import Path
from typing import Optional

from ..config.models import LoggingConfig


LOG_FORMAT = '%(asctime)s - %(levelname)s - %(name)s - %(filename)s:%(lineno)d - %(message)s'
LOG_DATE_FORMAT = '%Y-%m-%d %H:%M:%S'


def initialize_logging(config: LoggingConfig, app_name: str = "blocksinger",
                       log_file: Optional[Path] = None) -> logging.Logger:
    """
    パッケージ全体のロギングを初期化する

    Args:
        config: ロギング設定
        app_name: アプリケーション名
        log_file: 設定値より優先するログファイルパス（オプション）

    Returns:
        ルートロガー
    """
    root_logger = logging.getLogger()

    # 既存のハンドラをクリア
    for handler in root_logger.handlers[:]:
        root_logger.removeHandler(handler)

    # 環境変数が設定されていればログレベルを上書き
    level_name = os.environ.get("BLOCKSINGER_LOG_LEVEL", config.log_level)
    log_level = getattr(logging, level_name.upper(), logging.INFO)
    root_logger.setLevel(log_level)

    formatter = logging.Formatter(LOG_FORMAT, datefmt=LOG_DATE_FORMAT)

    # コンソールハンドラ（標準出力はレポート用に空けておく）
    console_handler = logging.StreamHandler(sys.stderr)
    console_handler.setFormatter(formatter)
    console_handler.setLevel(log_level)
    root_logger.addHandler(console_handler)

    log_file = log_file or config.log_file
    if log_file:
        log_file = Path(log_file)
        logs_dir = os.environ.get("LOGS_DIR")
        if logs_dir:
            log_file = Path(logs_dir) / log_file.name

        log_file.parent.mkdir(parents=True, exist_ok=True)

        # ログローテーションを設定
        try:
            file_handler = logging.handlers.RotatingFileHandler(
                log_file,
                maxBytes=10 * 1024 * 1024,  # 10MB
                backupCount=5,
                encoding='utf-8'
            )
            file_handler.setFormatter(formatter)
            file_handler.setLevel(log_level)
            root_logger.addHandler(file_handler)
            root_logger.info(f"ログファイルを設定しました: {log_file}")
        except (IOError, PermissionError) as e:
            root_logger.warning(f"ログファイルを設定できませんでした: {e}")

    root_logger.debug(f"{app_name} ロギングシステムが初期化されました (レベル: {logging.getLevelName(log_level)})")

    return root_logger
