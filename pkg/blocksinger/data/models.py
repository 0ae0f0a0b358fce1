"""
データモデル定義モジュール

このモジュールでは、特徴量の入出力で使用するデータモデルを定義します。
Pydanticを使用して、データの検証と型安全性を確保します。
"""

from typing import Dict, List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class PhoneSegment(BaseModel):
    """音素区間を表すモデル（半開区間 [start, end)）"""
    model_config = ConfigDict(frozen=True)

    start: float = Field(description="開始時刻（秒）")
    end: float = Field(description="終了時刻（秒）")
    label: str = Field(description="音素ラベル")

    @model_validator(mode='after')
    def validate_interval(self):
        if self.start < 0:
            raise ValueError(f"開始時刻が負です: {self.start}")
        if not self.start < self.end:
            raise ValueError(f"開始時刻が終了時刻以上です: {self.start} >= {self.end}")
        if not self.label or any(ch.isspace() for ch in self.label):
            raise ValueError(f"音素ラベルが不正です: {self.label!r}")
        return self


class PhonemeVocab(BaseModel):
    """音素語彙を表すモデル"""
    model_config = ConfigDict(frozen=True)

    labels: List[str] = Field(description="辞書順に並んだ一意な音素ラベル")
    silence_label: str = Field("sil", description="無音ラベル")

    @model_validator(mode='after')
    def validate_labels(self):
        if self.labels != sorted(set(self.labels)):
            raise ValueError("音素ラベルは辞書順かつ一意でなければなりません")
        if self.silence_label not in self.labels:
            raise ValueError(f"無音ラベル {self.silence_label} が語彙に含まれていません")
        return self

    @property
    def size(self) -> int:
        return len(self.labels)

    @property
    def index(self) -> Dict[str, int]:
        return {label: i for i, label in enumerate(self.labels)}

    @property
    def silence_id(self) -> int:
        return self.labels.index(self.silence_label)

    def id_of(self, label: str) -> int:
        """
        ラベルのIDを取得します。

        Args:
            label: 音素ラベル

        Returns:
            音素ID

        Raises:
            KeyError: 語彙に存在しないラベルの場合
        """
        return self.index[label]


class SingerTable(BaseModel):
    """歌手テーブルを表すモデル"""
    model_config = ConfigDict(frozen=True)

    ids: List[str] = Field(description="歌手IDの順序付きリスト")
    genders: List[str] = Field(description="歌手ごとの性別タグ（M/F/U）")

    @model_validator(mode='after')
    def validate_table(self):
        if not self.ids:
            raise ValueError("歌手が1人もいません")
        if len(set(self.ids)) != len(self.ids):
            raise ValueError("歌手IDが重複しています")
        if len(self.genders) != len(self.ids):
            raise ValueError("性別タグの数が歌手数と一致しません")
        if any(g not in ("M", "F", "U") for g in self.genders):
            raise ValueError("性別タグはM/F/Uのいずれかでなければなりません")
        return self

    @property
    def size(self) -> int:
        return len(self.ids)

    def index_of(self, singer_id: str) -> int:
        return self.ids.index(singer_id)

    def gender_of(self, singer_id: str) -> str:
        return self.genders[self.index_of(singer_id)]

    def with_gender(self, gender: str) -> List[str]:
        return [s for s, g in zip(self.ids, self.genders) if g == gender]


class FeatureMatrix(BaseModel):
    """1録音分のフレーム単位特徴量（T×D）を表すモデル"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    frames: np.ndarray = Field(description="T×D の特徴量行列")
    hop_s: float = Field(description="フレームシフト（秒）")
    dim_labels: List[str] = Field(description="次元ごとのラベル")
    song_id: str = Field("", description="曲ID")
    singer_id: str = Field("", description="歌手ID")
    pad_frames: int = Field(0, description="末尾のゼロ詰めフレーム数")

    @field_validator('frames')
    @classmethod
    def validate_frames(cls, v):
        v = np.asarray(v)
        if v.ndim != 2 or v.shape[0] < 1:
            raise ValueError(f"framesはT≥1の2次元配列でなければなりません: {v.shape}")
        if not np.issubdtype(v.dtype, np.floating):
            v = v.astype(np.float64)
        return v

    @model_validator(mode='after')
    def validate_labels(self):
        if len(self.dim_labels) != self.frames.shape[1]:
            raise ValueError(
                f"dim_labelsの数 ({len(self.dim_labels)}) が次元数 ({self.frames.shape[1]}) と一致しません"
            )
        if self.hop_s <= 0:
            raise ValueError("hop_sは正の数でなければなりません")
        if self.pad_frames < 0:
            raise ValueError("pad_framesは0以上でなければなりません")
        return self

    @property
    def n_frames(self) -> int:
        return int(self.frames.shape[0])

    @property
    def dim(self) -> int:
        return int(self.frames.shape[1])

    def columns(self, prefix: str) -> np.ndarray:
        """
        ラベルの接頭辞に一致する列を取得します。

        Args:
            prefix: 例 "mcep_"、"bap_"、"vuv"

        Returns:
            該当する列からなる T×k 配列
        """
        idx = [i for i, label in enumerate(self.dim_labels) if label.startswith(prefix)]
        return self.frames[:, idx]

    def with_frames(self, frames: np.ndarray, **updates) -> "FeatureMatrix":
        """フレームを差し替えた新しいインスタンスを返す"""
        fields = dict(hop_s=self.hop_s, dim_labels=list(self.dim_labels), song_id=self.song_id,
                      singer_id=self.singer_id, pad_frames=self.pad_frames)
        fields.update(updates)
        return FeatureMatrix(frames=frames, **fields)


class NormStats(BaseModel):
    """学習データから求めた次元ごとの最小値・最大値"""
    model_config = ConfigDict(frozen=True)

    minimum: List[float] = Field(description="次元ごとの最小値")
    maximum: List[float] = Field(description="次元ごとの最大値")
    dim_labels: List[str] = Field(default_factory=list, description="次元ごとのラベル")

    @model_validator(mode='after')
    def validate_range(self):
        if len(self.minimum) != len(self.maximum):
            raise ValueError("minimumとmaximumの長さが一致しません")
        if any(lo > hi for lo, hi in zip(self.minimum, self.maximum)):
            raise ValueError("minimumはmaximum以下でなければなりません")
        if self.dim_labels and len(self.dim_labels) != len(self.minimum):
            raise ValueError("dim_labelsの長さが次元数と一致しません")
        return self

    @property
    def dim(self) -> int:
        return len(self.minimum)


class BlockSequence(BaseModel):
    """曲を固定長ブロックに分割した列を表すモデル"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    blocks: np.ndarray = Field(description="n×block_len×D のブロック配列")
    block_len: int = Field(description="ブロック長（フレーム）")
    hop: int = Field(description="ブロックシフト（フレーム）")
    n_frames: int = Field(description="元の曲のフレーム数")
    pad_frames: int = Field(0, description="最終ブロックのゼロ詰めフレーム数")
    song_id: str = Field("", description="元の曲ID")
    singer_id: str = Field("", description="歌手ID")
    hop_s: float = Field(0.005, description="フレームシフト（秒）")
    dim_labels: List[str] = Field(default_factory=list, description="次元ごとのラベル")

    @model_validator(mode='after')
    def validate_blocks(self):
        if self.blocks.ndim != 3 or self.blocks.shape[1] != self.block_len:
            raise ValueError(f"blocksの形状が不正です: {self.blocks.shape}")
        if not 0 < self.hop <= self.block_len:
            raise ValueError("hopは0より大きくblock_len以下でなければなりません")
        return self

    @property
    def n_blocks(self) -> int:
        return int(self.blocks.shape[0])


class SongEntry(BaseModel):
    """データセットに含まれる1曲の情報"""
    song_id: str = Field(description="曲ID")
    singer_id: str = Field(description="歌手ID")
    split: str = Field(description="分割（train / held-out / read）")
    features: str = Field(description="特徴量コンテナの相対パス")
    annotation: str = Field(description="アノテーションファイルの相対パス")
    n_frames: int = Field(description="フレーム数")


class DatasetManifest(BaseModel):
    """データセットのマニフェスト"""
    songs: List[SongEntry] = Field(default_factory=list, description="曲一覧")
    singers: SingerTable = Field(description="歌手テーブル")
    vocab: PhonemeVocab = Field(description="音素語彙")
    norm_stats: Optional[NormStats] = Field(None, description="学習分割の正規化統計")
    hop_s: float = Field(0.005, description="フレームシフト（秒）")
    dim_labels: List[str] = Field(default_factory=list, description="特徴量次元ラベル")
    source: str = Field("synthetic", description="データの出自（synthetic / corpus）")

    def songs_in(self, split: str) -> List[SongEntry]:
        return [s for s in self.songs if s.split == split]

    def song(self, song_id: str) -> SongEntry:
        for entry in self.songs:
            if entry.song_id == song_id:
                return entry
        raise KeyError(song_id)
