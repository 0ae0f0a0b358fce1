"""
設定ファイルの読み込みを行うモジュール

このモジュールでは、YAML / JSON / TOML ファイルから設定を読み込み、
コマンドライン引数による上書きをマージしてPydanticモデルに変換する機能を提供します。
"""

import copy
import json
import logging
import sys
from pathlib import Path
from typing import Dict, Any, Optional, Union

import yaml
from dotenv import load_dotenv
from pydantic import ValidationError as PydanticValidationError

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .models import AppConfig
from ..utils.errors import ConfigError


def deep_merge(base: Dict[str, Any], overrides: Dict[str, Any]) -> Dict[str, Any]:
    """
    辞書を再帰的にマージする（overrides が優先）

    Args:
        base: ベースとなる辞書
        overrides: 上書きする辞書

    Returns:
        マージされた新しい辞書
    """
    merged = copy.deepcopy(base)
    for key, value in overrides.items():
        if value is None:
            continue
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


class ConfigLoader:
    """
    設定ファイルを読み込むクラス

    拡張子に応じて YAML / JSON / TOML を解釈し、AppConfig に変換します。
    """

    def __init__(self, config_path: Optional[Union[str, Path]] = None, env_file: Optional[Union[str, Path]] = None):
        """
        ConfigLoaderの初期化

        Args:
            config_path: 設定ファイルのパス（Noneの場合はデフォルト値のみ）
            env_file: .envファイルのパス（Noneの場合はカレントディレクトリから探索）
        """
        self.logger = logging.getLogger(__name__)
        self.config_path = Path(config_path) if config_path else None
        self._raw: Dict[str, Any] = {}

        # 環境変数を読み込む
        if env_file:
            load_dotenv(env_file)
        else:
            load_dotenv()

    def read_raw(self) -> Dict[str, Any]:
        """
        設定ファイルを辞書として読み込む

        Returns:
            設定値の辞書

        Raises:
            ConfigError: ファイルが存在しない、または解析に失敗した場合
        """
        if self.config_path is None:
            return {}

        if not self.config_path.exists():
            raise ConfigError("設定ファイルが見つかりません", config_file=str(self.config_path))

        suffix = self.config_path.suffix.lower()
        try:
            if suffix in (".yaml", ".yml"):
                with open(self.config_path, 'r', encoding='utf-8') as f:
                    data = yaml.safe_load(f)
            elif suffix == ".json":
                with open(self.config_path, 'r', encoding='utf-8') as f:
                    data = json.load(f)
            elif suffix == ".toml":
                with open(self.config_path, 'rb') as f:
                    data = tomllib.load(f)
            else:
                raise ConfigError(f"未対応の設定ファイル形式です: {suffix}", config_file=str(self.config_path))
        except (yaml.YAMLError, json.JSONDecodeError, tomllib.TOMLDecodeError) as e:
            raise ConfigError(f"設定ファイルの解析エラー: {e}", config_file=str(self.config_path)) from e

        if data is None:
            data = {}
        if not isinstance(data, dict):
            raise ConfigError("設定ファイルの最上位はマッピングでなければなりません", config_file=str(self.config_path))

        self.logger.info(f"設定ファイルを読み込みました: {self.config_path}")
        self._raw = data
        return data

    def load(self, overrides: Optional[Dict[str, Any]] = None) -> AppConfig:
        """
        設定を読み込み、上書きを適用して検証する

        Args:
            overrides: セクション別の上書き値（Noneの値は無視）

        Returns:
            アプリケーション設定

        Raises:
            ConfigError: 設定値の検証に失敗した場合
        """
        raw = deep_merge(self.read_raw(), overrides or {})
        try:
            return AppConfig(**raw)
        except PydanticValidationError as e:
            first = e.errors()[0]
            key = ".".join(str(p) for p in first.get('loc', ()))
            raise ConfigError(
                f"設定値が不正です: {first.get('msg')}",
                config_file=str(self.config_path) if self.config_path else None,
                config_key=key or None
            ) from e


def load_config(config_path: Optional[Union[str, Path]] = None,
                overrides: Optional[Dict[str, Any]] = None) -> AppConfig:
    """
    設定を読み込むショートカット関数

    Args:
        config_path: 設定ファイルのパス
        overrides: 上書き値

    Returns:
        アプリケーション設定
    """
    return ConfigLoader(config_path).load(overrides)


def dump_config(config: AppConfig, path: Union[str, Path]) -> None:
    """
    有効な設定をJSONとして書き出す

    Args:
        config: アプリケーション設定
        path: 出力パス
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        f.write(config.model_dump_json(indent=2))


def read_config_json(path: Union[str, Path]) -> AppConfig:
    """
    実行ディレクトリに保存された設定JSONを読み込む

    Args:
        path: config.json のパス

    Returns:
        アプリケーション設定

    Raises:
        ConfigError: ファイルが存在しない、または不正な場合
    """
    return ConfigLoader(path).load()
