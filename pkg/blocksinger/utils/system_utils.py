"""
システムユーティリティモジュール

このモジュールでは、システムリソースの監視と、並列処理のワーカー数の計算を提供します。
"""

import os
import logging
from typing import Dict, Any

# psutilをインポート
try:
    import psutil
    has_psutil = True
except ImportError:
    has_psutil = False
    logging.warning("psutilがインストールされていません。システムリソース監視機能が制限されます。")


def get_memory_usage() -> Dict[str, Any]:
    """
    メモリ使用状況を取得する

    Returns:
        メモリ使用状況を含む辞書
    """
    if not has_psutil:
        return {'error': 'psutilがインストールされていません'}

    try:
        process = psutil.Process(os.getpid())
        memory_info = process.memory_info()

        return {
            'rss': memory_info.rss,  # 物理メモリ使用量
            'vms': memory_info.vms,  # 仮想メモリ使用量
            'percent': process.memory_percent()
        }
    except Exception as e:
        logging.warning(f"メモリ使用状況の取得エラー: {e}")
        return {'error': str(e)}


def calculate_worker_count(
    memory_per_item_mb: int = 200,
    max_memory_percent: float = 70.0,
    min_workers: int = 1,
    max_workers: int = 8,
    cpu_factor: float = 1.0
) -> int:
    """
    システムリソースに基づいてファイル単位の並列ワーカー数を計算する

    Args:
        memory_per_item_mb: 1ファイルあたりの推定メモリ使用量（MB）
        max_memory_percent: 使用可能な最大メモリ使用率（%）
        min_workers: 最小ワーカー数
        max_workers: 最大ワーカー数
        cpu_factor: CPUコア数に対する倍率

    Returns:
        計算されたワーカー数
    """
    if not has_psutil:
        logging.warning("psutilがインストールされていないため、ワーカー数1で処理します")
        return min_workers

    try:
        memory = psutil.virtual_memory()
        available_memory_mb = memory.available / (1024 * 1024)
        usable_memory_mb = available_memory_mb * (max_memory_percent / 100)
        memory_based = int(usable_memory_mb / memory_per_item_mb)

        cpu_count = psutil.cpu_count(logical=False) or 1
        cpu_based = int(cpu_count * cpu_factor)

        workers = max(min_workers, min(memory_based, cpu_based, max_workers))

        logging.debug(
            f"ワーカー数を計算: {workers} "
            f"(メモリベース: {memory_based}, CPUベース: {cpu_based})"
        )
        return workers
    except Exception as e:
        logging.warning(f"ワーカー数の計算エラー: {e}")
        return min_workers
