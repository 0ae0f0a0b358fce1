"""
ブロック分割・オーバーラップ加算モジュール

曲を固定長の重なりのあるブロックに分割し、三角形のクロスフェード重みで再結合します。
"""

import math

import numpy as np

from .models import BlockSequence, FeatureMatrix
from ..utils.errors import ValidationError


def _check_geometry(block_len: int, hop: int) -> None:
    if block_len < 1 or hop < 1:
        raise ValidationError("block_lenとhopは1以上でなければなりません", field="hop", value=hop,
                              module="feature-io")
    if hop > block_len:
        raise ValidationError(f"hop ({hop}) がblock_len ({block_len}) より大きいです", field="hop", value=hop,
                              module="feature-io")


def block_count(n_frames: int, block_len: int, hop: int) -> int:
    """全フレームを覆うのに必要なブロック数"""
    if n_frames <= block_len:
        return 1
    return math.ceil((n_frames - block_len) / hop) + 1


def crossfade_weights(block_len: int, hop: int) -> np.ndarray:
    """
    ブロック内の三角形クロスフェード重みを返す

    重なり幅 ov = block_len - hop の範囲で線形に立ち上がり・立ち下がり、
    hop = block_len / 2 のとき隣接ブロックの重みの和が 1 になります。
    重なりがない場合はすべて 1 です。

    Args:
        block_len: ブロック長
        hop: ブロックシフト

    Returns:
        長さ block_len の重み配列
    """
    _check_geometry(block_len, hop)
    overlap = block_len - hop
    if overlap == 0:
        return np.ones(block_len)
    n = np.arange(block_len) + 0.5
    return np.minimum(np.minimum(n / overlap, 1.0), (block_len - n) / overlap)


def split_blocks(frames: np.ndarray, block_len: int, hop: int) -> np.ndarray:
    """
    T×C 配列を n×block_len×C のブロックに分割する（末尾はゼロ詰め）

    Args:
        frames: T×C 配列
        block_len: ブロック長
        hop: ブロックシフト

    Returns:
        ブロック配列
    """
    _check_geometry(block_len, hop)
    frames = np.asarray(frames)
    n_frames = frames.shape[0]
    n_blocks = block_count(n_frames, block_len, hop)
    total = (n_blocks - 1) * hop + block_len

    padded = np.zeros((total,) + frames.shape[1:], dtype=frames.dtype)
    padded[:n_frames] = frames
    starts = np.arange(n_blocks) * hop
    return np.stack([padded[s:s + block_len] for s in starts])


def merge_blocks(blocks: np.ndarray, hop: int, n_frames: int) -> np.ndarray:
    """
    ブロック列を重み付きオーバーラップ加算で T×C 配列に戻す

    Args:
        blocks: n×block_len×C のブロック配列
        hop: ブロックシフト
        n_frames: 出力フレーム数（ゼロ詰め分は切り捨て）

    Returns:
        n_frames×C の配列（float64）
    """
    blocks = np.asarray(blocks, dtype=np.float64)
    n_blocks, block_len = blocks.shape[:2]
    weights = crossfade_weights(block_len, hop)
    total = (n_blocks - 1) * hop + block_len

    acc = np.zeros((total,) + blocks.shape[2:])
    norm = np.zeros(total)
    shape = (block_len,) + (1,) * (blocks.ndim - 2)
    for i in range(n_blocks):
        s = i * hop
        acc[s:s + block_len] += weights.reshape(shape) * blocks[i]
        norm[s:s + block_len] += weights

    out = acc / norm.reshape((total,) + (1,) * (blocks.ndim - 2))
    return out[:n_frames]


def make_blocks(matrix: FeatureMatrix, block_len: int, hop: int) -> BlockSequence:
    """
    特徴量行列をブロック列に分割する

    Args:
        matrix: 特徴量行列
        block_len: ブロック長（フレーム）
        hop: ブロックシフト（フレーム）

    Returns:
        ブロック列（最終ブロックのゼロ詰め長を記録）

    Raises:
        ValidationError: hop > block_len の場合
    """
    blocks = split_blocks(matrix.frames, block_len, hop)
    covered = (blocks.shape[0] - 1) * hop + block_len
    return BlockSequence(
        blocks=blocks,
        block_len=block_len,
        hop=hop,
        n_frames=matrix.n_frames,
        pad_frames=covered - matrix.n_frames,
        song_id=matrix.song_id,
        singer_id=matrix.singer_id,
        hop_s=matrix.hop_s,
        dim_labels=list(matrix.dim_labels),
    )


def overlap_add(sequence: BlockSequence) -> FeatureMatrix:
    """
    ブロック列をオーバーラップ加算で特徴量行列に戻す

    Args:
        sequence: ブロック列

    Returns:
        ゼロ詰めを除いた特徴量行列
    """
    frames = merge_blocks(sequence.blocks, sequence.hop, sequence.n_frames)
    labels = sequence.dim_labels or [f"dim_{i}" for i in range(frames.shape[1])]
    return FeatureMatrix(
        frames=frames,
        hop_s=sequence.hop_s,
        dim_labels=labels,
        song_id=sequence.song_id,
        singer_id=sequence.singer_id,
    )
