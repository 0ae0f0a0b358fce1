"""
客観評価モジュール

メルケプストラム距離（MCD）と、1次元経験分布間の厳密な Wasserstein-1 距離、
学習済みモデルの曲ごとの MCD レポートを提供します。
"""

import json
import logging
from pathlib import Path
from typing import List, Literal, Optional, Sequence, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field, field_validator

from .inference import song_conditions, synthesize_features, synthesize_song
from .model import ModelParams
from ..audio.analysis import analyze
from ..config.models import AnalysisConfig, DataConfig, InferenceConfig
from ..data.dataset import FeatureDataset
from ..utils.errors import ShapeError, ValidationError
from ..utils.logging_utils import log_execution_time

logger = logging.getLogger(__name__)

# 10√2 / ln 10
MCD_CONSTANT = 10.0 * np.sqrt(2.0) / np.log(10.0)


def mcd(reference: np.ndarray, generated: np.ndarray, n_coefficients: Optional[int] = 25) -> float:
    """
    メルケプストラム距離 (10√2 / ln 10)·(1/T)·Σ_t √(Σ_i (C_ti - Ĉ_ti)²) [dB]

    係数 0 を含むすべての係数（既定で 25 個）を使います。

    Args:
        reference: T×n の参照メルケプストラム
        generated: T×n の生成メルケプストラム
        n_coefficients: 要求する係数の数（None は検査しない）

    Returns:
        MCD（dB）

    Raises:
        ShapeError: 形状が一致しない、T = 0、または係数の数が違う場合
    """
    reference = np.asarray(reference, dtype=np.float64)
    generated = np.asarray(generated, dtype=np.float64)
    if reference.shape != generated.shape or reference.ndim != 2 or reference.shape[0] < 1:
        raise ShapeError("MCDの入力の形状が一致しません", expected=reference.shape, actual=generated.shape,
                         module="evaluation")
    if n_coefficients is not None and reference.shape[1] != n_coefficients:
        raise ShapeError("メルケプストラムの係数の数が一致しません", expected=n_coefficients,
                         actual=reference.shape[1], module="evaluation")
    per_frame = np.sqrt(np.sum((reference - generated) ** 2, axis=1))
    return float(MCD_CONSTANT * per_frame.mean())


def wasserstein1_empirical(x: Sequence[float], y: Sequence[float]) -> float:
    """
    同数サンプルの1次元経験分布間の Wasserstein-1 距離 mean|sort(x) - sort(y)|

    Raises:
        ShapeError: サンプル数が一致しない、または空の場合
    """
    x = np.sort(np.asarray(x, dtype=np.float64).ravel())
    y = np.sort(np.asarray(y, dtype=np.float64).ravel())
    if x.shape != y.shape or x.size == 0:
        raise ShapeError("サンプル数が一致しません", expected=x.shape, actual=y.shape, module="evaluation")
    return float(np.mean(np.abs(x - y)))


class SongMcd(BaseModel):
    """1曲分の MCD"""
    song_id: str = Field(..., description="曲ID")
    singer_id: str = Field("", description="歌手ID")
    frames: int = Field(..., ge=1, description="MCD計算に使ったフレーム数 T")
    mcd_db: float = Field(..., description="MCD（dB）")

    @field_validator('mcd_db')
    @classmethod
    def validate_mcd(cls, v):
        if not np.isfinite(v) or v < 0:
            raise ValueError(f"MCDは非負の有限値でなければなりません: {v}")
        return v


class McdReport(BaseModel):
    """モデル1つ分の MCD レポート"""
    model: str = Field(..., description="モデルのラベル")
    split: str = Field("train", description="評価した分割")
    source: Literal["features", "audio"] = Field("features", description="特徴量を直接比較したか、音声経由か")
    songs: List[SongMcd] = Field(default_factory=list, description="曲ごとの MCD")

    @property
    def mean_db(self) -> float:
        return float(np.mean([s.mcd_db for s in self.songs])) if self.songs else float("nan")

    def to_json(self, path: Union[str, Path]) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        data = self.model_dump()
        data["mean_db"] = self.mean_db
        path.write_text(json.dumps(data, ensure_ascii=False, indent=2), encoding='utf-8')

    @classmethod
    def from_json(cls, path: Union[str, Path]) -> "McdReport":
        data = json.loads(Path(path).read_text(encoding='utf-8'))
        data.pop("mean_db", None)
        return cls.model_validate(data)


@log_execution_time()
def evaluate_mcd(params: ModelParams, dataset: FeatureDataset, analysis_config: AnalysisConfig,
                 data_config: DataConfig, inference_config: Optional[InferenceConfig] = None,
                 split: str = "train", model_label: str = "model", source: str = "features",
                 max_songs: Optional[int] = None, song_ids: Optional[Sequence[str]] = None) -> McdReport:
    """
    データセットの曲を合成して MCD を計算する

    Args:
        params: 学習済みパラメータ
        dataset: データセット
        analysis_config: 分析設定
        data_config: ブロック設定
        inference_config: 推論設定
        split: 評価する分割
        model_label: レポートに記録するモデル名
        source: "features"（生成特徴量をそのまま比較）または "audio"（合成→再分析して比較）
        max_songs: 評価する曲数の上限
        song_ids: 評価する曲（指定時は split より優先）

    Returns:
        MCD レポート

    Raises:
        ValidationError: 評価する曲がない、または source が不正な場合
    """
    if source not in ("features", "audio"):
        raise ValidationError(f"不正な評価ソースです: {source}", field="source", value=source, module="evaluation")
    inference_config = inference_config or InferenceConfig()
    ids = list(song_ids) if song_ids is not None else dataset.song_ids(split)
    if max_songs is not None:
        ids = ids[:max_songs]
    if not ids:
        raise ValidationError(f"評価する曲がありません (split={split})", field="split", value=split,
                              module="evaluation")

    n_mcep = analysis_config.n_mcep
    results = []
    for song_id in ids:
        song = dataset.song_data(song_id)
        conditions = song_conditions(song)
        kwargs = dict(block_len=data_config.block_len, hop=data_config.block_hop, seed=inference_config.seed,
                      zero_noise=inference_config.zero_noise, vuv_threshold=inference_config.vuv_threshold,
                      silence_id=dataset.vocab.silence_id)
        if source == "features":
            generated = synthesize_features(params, conditions, dataset.norm_stats, hop_s=song.features.hop_s,
                                            **kwargs).frames[:, :n_mcep]
        else:
            waveform = synthesize_song(params, conditions, dataset.norm_stats, analysis_config, **kwargs)
            generated = analyze(waveform, analysis_config)[0].frames[:, :n_mcep]

        reference = np.asarray(song.features.frames, dtype=np.float64)[:, :n_mcep]
        n = min(reference.shape[0], generated.shape[0])
        results.append(SongMcd(song_id=song_id, singer_id=song.features.singer_id, frames=n,
                               mcd_db=mcd(reference[:n], generated[:n], n_mcep)))

    report = McdReport(model=model_label, split=split, source=source, songs=results)
    logger.info(f"MCD評価: {model_label} ({split}, {source}) {len(results)}曲, 平均 {report.mean_db:.4f} dB")
    return report


def compare_reports(reports: Sequence[McdReport]) -> pd.DataFrame:
    """
    複数モデルのレポートを曲 × モデルの表にまとめる（最終行は平均）

    Args:
        reports: MCD レポート

    Returns:
        行が曲ID、列がモデル名の DataFrame
    """
    frames = []
    for report in reports:
        frames.append(pd.Series({s.song_id: s.mcd_db for s in report.songs}, name=report.model))
    table = pd.concat(frames, axis=1).sort_index() if frames else pd.DataFrame()
    if not table.empty:
        table.loc["mean"] = table.mean(axis=0)
    return table
