"""
条件入力モジュール

フレームごとの音素・f0・有声フラグ・歌手ID・ノイズから、生成器とクリティックに与える
条件テンソル（チャネル × フレーム）を組み立てます。
チャネルの並びは [音素 one-hot (P) | 正規化 log f0 | vuv | 歌手 one-hot (S) | ノイズ (N)] です。
"""

import logging
from typing import List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from ..data.blocks import block_count
from ..utils.errors import ShapeError, ValidationError

logger = logging.getLogger(__name__)


class ConditionLayout(BaseModel):
    """条件テンソルのチャネル構成"""
    model_config = ConfigDict(frozen=True)

    n_phonemes: int = Field(..., ge=1, description="音素数 P")
    n_singers: int = Field(..., ge=1, description="歌手数 S")
    n_noise: int = Field(4, ge=0, description="ノイズチャネル数 N")

    @property
    def phoneme_slice(self) -> slice:
        return slice(0, self.n_phonemes)

    @property
    def f0_index(self) -> int:
        return self.n_phonemes

    @property
    def vuv_index(self) -> int:
        return self.n_phonemes + 1

    @property
    def singer_slice(self) -> slice:
        return slice(self.n_phonemes + 2, self.n_phonemes + 2 + self.n_singers)

    @property
    def noise_slice(self) -> slice:
        return slice(self.n_channels - self.n_noise, self.n_channels)

    @property
    def n_channels(self) -> int:
        return self.n_phonemes + self.n_singers + 2 + self.n_noise

    @property
    def n_static_channels(self) -> int:
        """ノイズを除いたチャネル数（クリティックに渡す条件）"""
        return self.n_channels - self.n_noise


class SongConditions(BaseModel):
    """1曲分のフレームごとの条件"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    song_id: str = Field("", description="曲ID")
    phoneme_ids: np.ndarray = Field(..., description="フレームごとの音素ID")
    f0: np.ndarray = Field(..., description="フレームごとのf0（Hz、無声は0）")
    vuv: np.ndarray = Field(..., description="フレームごとの有声フラグ")
    singer_index: int = Field(..., ge=0, description="歌手のインデックス")

    @field_validator('phoneme_ids')
    @classmethod
    def validate_ids(cls, v):
        v = np.asarray(v, dtype=np.int64)
        if v.ndim != 1 or v.size == 0:
            raise ValueError("phoneme_idsは長さ1以上の1次元配列でなければなりません")
        return v

    @field_validator('f0', 'vuv')
    @classmethod
    def validate_series(cls, v):
        return np.asarray(v, dtype=np.float64)

    @model_validator(mode='after')
    def validate_lengths(self):
        n = self.phoneme_ids.shape[0]
        if self.f0.shape != (n,) or self.vuv.shape != (n,):
            raise ValueError(f"条件系列の長さが揃っていません ({n}, {self.f0.shape}, {self.vuv.shape})")
        return self

    @property
    def n_frames(self) -> int:
        return int(self.phoneme_ids.shape[0])


def encode_f0(f0: np.ndarray, f0_ref: float = 220.0, octaves: float = 2.0) -> np.ndarray:
    """f0 を log2(f0 / f_ref) / octaves で [-1, 1] に写す（無声は 0）"""
    f0 = np.asarray(f0, dtype=np.float64)
    voiced = f0 > 0
    safe = np.where(voiced, f0, f0_ref)
    return np.where(voiced, np.clip(np.log2(safe / f0_ref) / octaves, -1.0, 1.0), 0.0)


def assemble_condition(phoneme_ids: np.ndarray, f0: np.ndarray, vuv: np.ndarray, singer_id: int,
                       layout: ConditionLayout, seed: Optional[int] = None,
                       rng: Optional[np.random.Generator] = None, f0_ref: float = 220.0,
                       f0_octaves: float = 2.0, zero_noise: bool = False) -> np.ndarray:
    """
    条件テンソルを組み立てる

    Args:
        phoneme_ids: 長さ T の音素ID
        f0: 長さ T のf0（Hz、無声は0）
        vuv: 長さ T の有声フラグ
        singer_id: 歌手のインデックス
        layout: チャネル構成
        seed: ノイズの乱数シード（rng が None の場合に使う）
        rng: ノイズの乱数生成器
        f0_ref: log f0 正規化の基準周波数
        f0_octaves: クランプ範囲（オクターブ）
        zero_noise: ノイズチャネルを 0 にするか

    Returns:
        C×T の条件テンソル（float64）

    Raises:
        ShapeError: 系列の長さが揃っていない場合
        ValidationError: IDが範囲外、または f0 が負の場合
    """
    phoneme_ids = np.asarray(phoneme_ids, dtype=np.int64)
    f0 = np.asarray(f0, dtype=np.float64)
    vuv = np.asarray(vuv, dtype=np.float64)
    n_frames = phoneme_ids.shape[0]
    if f0.shape != (n_frames,) or vuv.shape != (n_frames,):
        raise ShapeError("条件系列の長さが揃っていません", expected=(n_frames,), actual=(f0.shape, vuv.shape),
                         module="model")
    if n_frames and (phoneme_ids.min() < 0 or phoneme_ids.max() >= layout.n_phonemes):
        raise ValidationError(f"音素IDが範囲外です (P={layout.n_phonemes})", field="phoneme_ids", module="model")
    if not 0 <= singer_id < layout.n_singers:
        raise ValidationError(f"歌手IDが範囲外です: {singer_id} (S={layout.n_singers})", field="singer_id",
                              value=singer_id, module="model")
    if np.any(f0 < 0):
        raise ValidationError("f0に負の値が含まれています", field="f0", module="model")

    cond = np.zeros((layout.n_channels, n_frames))
    cond[phoneme_ids, np.arange(n_frames)] = 1.0
    cond[layout.f0_index] = encode_f0(f0, f0_ref, f0_octaves)
    cond[layout.vuv_index] = vuv
    cond[layout.n_phonemes + 2 + singer_id] = 1.0
    if layout.n_noise and not zero_noise:
        rng = rng if rng is not None else np.random.default_rng(seed)
        cond[layout.noise_slice] = rng.standard_normal((n_frames, layout.n_noise)).T
    return cond


def pad_conditions(conditions: SongConditions, n_frames: int, silence_id: int) -> SongConditions:
    """末尾を無音（f0 = 0, vuv = 0）で n_frames まで延長する"""
    extra = n_frames - conditions.n_frames
    if extra <= 0:
        return conditions
    return conditions.model_copy(update={
        "phoneme_ids": np.concatenate([conditions.phoneme_ids, np.full(extra, silence_id, dtype=np.int64)]),
        "f0": np.concatenate([conditions.f0, np.zeros(extra)]),
        "vuv": np.concatenate([conditions.vuv, np.zeros(extra)]),
    })


def condition_blocks(conditions: SongConditions, layout: ConditionLayout, block_len: int, hop: int,
                     silence_id: int, rng: Optional[np.random.Generator] = None, f0_ref: float = 220.0,
                     f0_octaves: float = 2.0, zero_noise: bool = False) -> List[np.ndarray]:
    """
    曲全体の条件をブロックに切り分ける

    末尾は無音で延長し、ノイズは曲全体に対して (T, N) の形で一度に引きます。

    Returns:
        C×block_len の条件ブロックのリスト
    """
    n_blocks = block_count(conditions.n_frames, block_len, hop)
    covered = (n_blocks - 1) * hop + block_len
    padded = pad_conditions(conditions, covered, silence_id)
    cond = assemble_condition(padded.phoneme_ids, padded.f0, padded.vuv, padded.singer_index, layout,
                              rng=rng if rng is not None else np.random.default_rng(0),
                              f0_ref=f0_ref, f0_octaves=f0_octaves, zero_noise=zero_noise)
    return [cond[:, n * hop:n * hop + block_len] for n in range(n_blocks)]
