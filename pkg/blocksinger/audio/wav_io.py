"""
WAVファイル入出力モジュール

RIFF PCM 16bit モノラルの WAV ファイルのみを扱います。
"""

import logging
from math import gcd
from pathlib import Path
from typing import Optional, Union

import numpy as np
import soundfile as sf
from pydantic import BaseModel, ConfigDict, Field, field_validator
from scipy.signal import resample_poly

from ..utils.errors import AudioFormatError

logger = logging.getLogger(__name__)


class Waveform(BaseModel):
    """モノラル波形を表すモデル"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    samples: np.ndarray = Field(description="[-1, 1] のサンプル列")
    sample_rate: int = Field(16000, description="サンプリング周波数（Hz）")

    @field_validator('samples')
    @classmethod
    def validate_samples(cls, v):
        v = np.asarray(v, dtype=np.float64)
        if v.ndim != 1:
            raise ValueError(f"samplesは1次元配列でなければなりません: {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("samplesに非有限値が含まれています")
        if v.size and np.max(np.abs(v)) > 1.0:
            raise ValueError("samplesは[-1, 1]の範囲でなければなりません")
        return v

    @field_validator('sample_rate')
    @classmethod
    def validate_rate(cls, v):
        if v <= 0:
            raise ValueError("sample_rateは正の数でなければなりません")
        return v

    @property
    def duration(self) -> float:
        return self.samples.shape[0] / self.sample_rate


def resample(samples: np.ndarray, source_rate: int, target_rate: int) -> np.ndarray:
    """
    ポリフェーズフィルタでサンプリング周波数を変換する

    Args:
        samples: サンプル列
        source_rate: 元の周波数
        target_rate: 変換後の周波数

    Returns:
        変換後のサンプル列（[-1, 1] にクリップ）
    """
    if source_rate == target_rate:
        return samples
    g = gcd(source_rate, target_rate)
    out = resample_poly(samples, target_rate // g, source_rate // g)
    return np.clip(out, -1.0, 1.0)


def read_wav(path: Union[str, Path], target_rate: Optional[int] = None) -> Waveform:
    """
    WAVファイルを読み込む

    Args:
        path: WAVファイルのパス
        target_rate: 変換先のサンプリング周波数（Noneの場合は変換しない）

    Returns:
        波形

    Raises:
        AudioFormatError: ファイルが存在しない、または PCM 16bit モノラル WAV ではない場合
    """
    path = Path(path)
    if not path.exists():
        raise AudioFormatError("WAVファイルが見つかりません", file_path=str(path))

    try:
        info = sf.info(str(path))
    except RuntimeError as e:
        raise AudioFormatError(f"音声ファイルとして読み込めません: {e}", file_path=str(path)) from e

    if info.format != "WAV" or info.subtype != "PCM_16":
        raise AudioFormatError(f"PCM 16bit WAV ではありません ({info.format}/{info.subtype})", file_path=str(path))
    if info.channels != 1:
        raise AudioFormatError(f"モノラルではありません (チャネル数: {info.channels})", file_path=str(path))

    samples, rate = sf.read(str(path), dtype='float64', always_2d=False)
    if target_rate is not None and rate != target_rate:
        logger.debug(f"リサンプリング: {path.name} {rate}Hz -> {target_rate}Hz")
        samples, rate = resample(samples, rate, target_rate), target_rate

    return Waveform(samples=samples, sample_rate=rate)


def write_wav(waveform: Waveform, path: Union[str, Path]) -> None:
    """
    波形を PCM 16bit モノラル WAV として書き出す

    Args:
        waveform: 波形
        path: 出力パス
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    sf.write(str(path), np.clip(waveform.samples, -1.0, 1.0), waveform.sample_rate, format='WAV', subtype='PCM_16')
