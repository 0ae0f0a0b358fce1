"""
推論モジュール

曲全体の条件をブロックに分けて生成器に順に通し（状態は引き継ぐ）、出力ブロックを
三角窓のオーバーラップ加算で結合して元のスケールに戻します。
歌手 one-hot の差し替えによる声質変換と、ボコーダーまでの合成もここで行います。
"""

import logging
from typing import List, Optional, Sequence

import numpy as np

from .condition import ConditionLayout, SongConditions, condition_blocks
from .model import ModelParams, generator_forward
from ..audio.synthesis import synthesize
from ..audio.wav_io import Waveform
from ..config.models import AnalysisConfig
from ..data.blocks import merge_blocks
from ..data.dataset import SongData
from ..data.models import FeatureMatrix, NormStats
from ..data.normalization import denormalize_array
from ..utils.errors import ValidationError

logger = logging.getLogger(__name__)


def song_conditions(song: SongData) -> SongConditions:
    """データセットの曲データから条件を取り出す"""
    return SongConditions(song_id=song.song_id, phoneme_ids=song.phoneme_ids, f0=song.f0, vuv=song.vuv,
                          singer_index=song.singer_index)


def voice_change(conditions: SongConditions, target_singer: int, n_singers: int) -> SongConditions:
    """
    歌手IDだけを差し替えた条件を返す

    Args:
        conditions: 元の条件
        target_singer: 変換先の歌手インデックス
        n_singers: 歌手数 S

    Returns:
        歌手以外は同一の条件

    Raises:
        ValidationError: 歌手インデックスが範囲外の場合
    """
    if not 0 <= target_singer < n_singers:
        raise ValidationError(f"変換先の歌手IDが範囲外です: {target_singer} (S={n_singers})", field="target_singer",
                              value=target_singer, module="inference")
    return conditions.model_copy(update={"singer_index": target_singer})


def replace_singer(blocks: Sequence[np.ndarray], layout: ConditionLayout, target_singer: int) -> List[np.ndarray]:
    """
    組み立て済みの条件ブロックの歌手チャネルを差し替える

    Raises:
        ValidationError: 歌手インデックスが範囲外の場合
    """
    if not 0 <= target_singer < layout.n_singers:
        raise ValidationError(f"変換先の歌手IDが範囲外です: {target_singer} (S={layout.n_singers})",
                              field="target_singer", value=target_singer, module="inference")
    changed = []
    for block in blocks:
        block = np.array(block, copy=True)
        block[..., layout.singer_slice, :] = 0.0
        block[..., layout.n_phonemes + 2 + target_singer, :] = 1.0
        changed.append(block)
    return changed


def synthesize_features(params: ModelParams, conditions: SongConditions, norm_stats: Optional[NormStats],
                        block_len: int = 128, hop: Optional[int] = None, seed: int = 0, zero_noise: bool = False,
                        vuv_threshold: float = 0.5, silence_id: Optional[int] = None, hop_s: float = 0.005,
                        dim_labels: Optional[List[str]] = None, singer_id: str = "") -> FeatureMatrix:
    """
    曲全体の特徴量を生成する

    Args:
        params: 学習済みパラメータ
        conditions: フレームごとの条件
        norm_stats: 学習分割の正規化統計
        block_len: ブロック長
        hop: ブロックシフト（None は block_len / 2）
        seed: ノイズチャネルの乱数シード
        zero_noise: ノイズチャネルを 0 にするか
        vuv_threshold: 有声フラグの二値化閾値
        silence_id: 末尾延長に使う音素ID（None は最後の音素）
        hop_s: フレームシフト（秒）
        dim_labels: 出力の次元ラベル（None は正規化統計のラベル）
        singer_id: 出力に記録する歌手ID

    Returns:
        条件と同じフレーム数の特徴量行列（元のスケール）

    Raises:
        ValidationError: 正規化統計がない場合
    """
    if norm_stats is None:
        raise ValidationError("正規化統計がありません", field="norm_stats", module="inference")
    hop = hop or block_len // 2
    gen_config = params.generator_config
    if silence_id is None:
        silence_id = int(conditions.phoneme_ids[-1])

    blocks = condition_blocks(conditions, params.dims.layout, block_len, hop, silence_id,
                              rng=np.random.default_rng(seed), f0_ref=gen_config.f0_ref,
                              f0_octaves=gen_config.f0_octaves, zero_noise=zero_noise)
    outputs, _ = generator_forward(params, [b.astype(params.dtype)[None] for b in blocks])
    stacked = np.stack([out.value[0].T for out in outputs])

    normalized = merge_blocks(stacked, hop, conditions.n_frames)
    frames = denormalize_array(normalized, norm_stats)

    labels = list(dim_labels or norm_stats.dim_labels)
    if "vuv" in labels:
        k = labels.index("vuv")
        frames[:, k] = (frames[:, k] >= vuv_threshold).astype(np.float64)

    logger.debug(f"特徴量を生成しました: {conditions.song_id} {conditions.n_frames}フレーム, {len(blocks)}ブロック")
    return FeatureMatrix(frames=frames, hop_s=hop_s, dim_labels=labels, song_id=conditions.song_id,
                         singer_id=singer_id)


def synthesize_song(params: ModelParams, conditions: SongConditions, norm_stats: Optional[NormStats],
                    analysis_config: AnalysisConfig, block_len: int = 128, hop: Optional[int] = None,
                    seed: int = 0, zero_noise: bool = False, vuv_threshold: float = 0.5,
                    silence_id: Optional[int] = None) -> Waveform:
    """
    曲全体を波形まで合成する

    特徴量の生成後、入力の f0 系列でボコーダー合成します。

    Returns:
        合成波形
    """
    features = synthesize_features(params, conditions, norm_stats, block_len=block_len, hop=hop, seed=seed,
                                   zero_noise=zero_noise, vuv_threshold=vuv_threshold, silence_id=silence_id,
                                   hop_s=analysis_config.frame_hop, dim_labels=analysis_config.dim_labels())
    return synthesize(features, conditions.f0, analysis_config, seed=seed)
