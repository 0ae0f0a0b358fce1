"""
特徴量の正規化モジュール

学習分割の次元ごとの最小値・最大値で、各次元を [-1, 1] にアフィン変換します。
値が一定の次元は 0 に写し、逆変換ではその定数に戻します。
"""

from typing import Sequence

import numpy as np

from .models import FeatureMatrix, NormStats
from ..utils.errors import ShapeError, ValidationError


def compute_norm_stats(matrices: Sequence[FeatureMatrix]) -> NormStats:
    """
    学習用の特徴量行列から正規化統計を計算する

    Args:
        matrices: 学習分割の特徴量行列

    Returns:
        次元ごとの最小値・最大値

    Raises:
        ValidationError: 入力が空の場合
        ShapeError: 次元数が揃っていない場合
    """
    if not matrices:
        raise ValidationError("正規化統計を計算する特徴量がありません", module="feature-io")

    dim = matrices[0].dim
    for m in matrices:
        if m.dim != dim:
            raise ShapeError("特徴量の次元数が揃っていません", expected=dim, actual=m.dim, module="feature-io")

    stacked = np.concatenate([np.asarray(m.frames, dtype=np.float64) for m in matrices], axis=0)
    return NormStats(
        minimum=stacked.min(axis=0).tolist(),
        maximum=stacked.max(axis=0).tolist(),
        dim_labels=list(matrices[0].dim_labels),
    )


def _bounds(stats: NormStats, dim: int):
    if stats.dim != dim:
        raise ShapeError("正規化統計と特徴量の次元数が一致しません", expected=stats.dim, actual=dim,
                         module="feature-io")
    lo = np.asarray(stats.minimum, dtype=np.float64)
    hi = np.asarray(stats.maximum, dtype=np.float64)
    span = hi - lo
    constant = span == 0
    return lo, np.where(constant, 1.0, span), constant


def normalize_array(frames: np.ndarray, stats: NormStats) -> np.ndarray:
    """T×D 配列を [-1, 1] に正規化する（float64）"""
    frames = np.asarray(frames, dtype=np.float64)
    lo, span, constant = _bounds(stats, frames.shape[-1])
    out = 2.0 * (frames - lo) / span - 1.0
    return np.where(constant, 0.0, out)


def denormalize_array(frames: np.ndarray, stats: NormStats) -> np.ndarray:
    """正規化された T×D 配列を元のスケールに戻す（float64）"""
    frames = np.asarray(frames, dtype=np.float64)
    lo, span, constant = _bounds(stats, frames.shape[-1])
    out = (frames + 1.0) * 0.5 * span + lo
    return np.where(constant, lo, out)


def normalize(matrix: FeatureMatrix, stats: NormStats) -> FeatureMatrix:
    """
    特徴量行列を正規化する

    Args:
        matrix: 特徴量行列
        stats: 正規化統計

    Returns:
        各次元が [-1, 1] に写された特徴量行列

    Raises:
        ShapeError: 次元数が一致しない場合
    """
    return matrix.with_frames(normalize_array(matrix.frames, stats))


def denormalize(matrix: FeatureMatrix, stats: NormStats) -> FeatureMatrix:
    """
    正規化された特徴量行列を元のスケールに戻す

    Args:
        matrix: 正規化された特徴量行列
        stats: 正規化統計

    Returns:
        元のスケールの特徴量行列

    Raises:
        ShapeError: 次元数が一致しない場合
    """
    return matrix.with_frames(denormalize_array(matrix.frames, stats))
