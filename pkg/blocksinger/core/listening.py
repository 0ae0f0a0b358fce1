"""
聴取試験用の刺激書き出しモジュール

性別ごとに曲を選び（既定で1曲）、各曲について「声質変換なし」「同性間の変換」「異性間の変換」の3条件を作り、
モデルごとに合成した WAV を匿名化したファイル名で書き出します。
対応関係はマニフェスト CSV にだけ記録します。
"""

import hashlib
import logging
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .inference import song_conditions, synthesize_song, voice_change
from .model import ModelParams
from ..audio.wav_io import write_wav
from ..config.models import AnalysisConfig, DataConfig, InferenceConfig
from ..data.dataset import SPLIT_HELD_OUT, SPLIT_TRAIN, FeatureDataset
from ..utils.errors import ValidationError
from ..utils.logging_utils import log_execution_time

MANIFEST_NAME = "manifest.csv"
MANIFEST_COLUMNS = ["file", "song", "model", "source_singer", "target_singer", "condition"]
CONDITIONS = ("none", "same-gender", "opposite-gender")
GENDERS = ("M", "F")
DEFAULT_SONGS_PER_GENDER = 1


def blinded_name(model: str, song: str, source: str, target: str, condition: str, seed: int) -> str:
    """刺激の属性から推測できないファイル名を作る"""
    combined = f"{model}:{song}:{source}:{target}:{condition}:{seed}"
    return hashlib.sha256(combined.encode('utf-8')).hexdigest()[:20] + ".wav"


class ListeningTestExporter:
    """
    聴取試験の刺激を書き出すクラス

    刺激の組（曲・変換元・変換先・条件）は全モデルで共通にし、乱数シードで決まります。
    """

    def __init__(self, dataset: FeatureDataset, analysis_config: AnalysisConfig, data_config: DataConfig,
                 inference_config: Optional[InferenceConfig] = None, split: str = SPLIT_HELD_OUT, seed: int = 0,
                 songs_per_gender: int = DEFAULT_SONGS_PER_GENDER):
        """
        初期化

        Args:
            dataset: データセット
            analysis_config: 分析設定
            data_config: ブロック設定
            inference_config: 推論設定
            split: 刺激の曲を選ぶ分割（該当曲がなければ学習分割も使う）
            seed: 曲と変換先の選択に使う乱数シード
            songs_per_gender: 性別ごとに選ぶ曲数

        Raises:
            ValidationError: songs_per_gender が1未満の場合
        """
        if songs_per_gender < 1:
            raise ValidationError(f"性別ごとの曲数は1以上でなければなりません: {songs_per_gender}",
                                  field="songs_per_gender", value=songs_per_gender, module="evaluation")
        self.logger = logging.getLogger(__name__)
        self.dataset = dataset
        self.analysis_config = analysis_config
        self.data_config = data_config
        self.inference_config = inference_config or InferenceConfig()
        self.split = split
        self.seed = seed
        self.songs_per_gender = songs_per_gender

    def _candidates(self, gender: str, rng: np.random.Generator) -> List[Tuple[str, str]]:
        """(歌手, 曲) の候補。指定分割の曲を先に並べ、足りない分を学習分割の曲で補う"""
        singers = self.dataset.singers
        ordered: List[Tuple[str, str]] = []
        for split in dict.fromkeys([self.split, SPLIT_TRAIN]):
            pool = [(e.singer_id, e.song_id) for e in self.dataset.manifest.songs_in(split)
                    if singers.gender_of(e.singer_id) == gender]
            ordered.extend(pool[i] for i in rng.permutation(len(pool)))
        return list(dict.fromkeys(ordered))

    def plan(self) -> List[Tuple[str, str, str, str]]:
        """
        刺激の組を決める

        Returns:
            (condition, song_id, source_singer, target_singer) のリスト

        Raises:
            ValidationError: いずれかの性別の歌手がいない場合
        """
        singers = self.dataset.singers
        rng = np.random.default_rng(self.seed)

        plan = []
        for gender in GENDERS:
            picked = self._candidates(gender, rng)[:self.songs_per_gender]
            other = "F" if gender == "M" else "M"
            opposite = singers.with_gender(other)
            if not picked or not opposite:
                raise ValidationError(f"聴取試験には各性別の歌手が1人以上必要です（{gender}の曲または{other}の歌手がいません）",
                                      field="singer_genders", module="evaluation")

            if len(picked) < self.songs_per_gender:
                self.logger.warning(f"性別 {gender} の曲が {len(picked)} 曲しかありません（要求 {self.songs_per_gender} 曲）")
            if len(singers.with_gender(gender)) < 2:
                self.logger.warning(f"性別 {gender} の歌手が1人だけのため、同性間の変換条件を省略します")

            for source, song in picked:
                plan.append(("none", song, source, source))
                same = [s for s in singers.with_gender(gender) if s != source]
                if same:
                    plan.append(("same-gender", song, source, same[int(rng.integers(len(same)))]))
                plan.append(("opposite-gender", song, source, opposite[int(rng.integers(len(opposite)))]))
        return plan

    @log_execution_time()
    def export(self, models: Sequence[Tuple[str, ModelParams]], out_dir: Union[str, Path]) -> pd.DataFrame:
        """
        全モデルの刺激を合成して書き出す

        Args:
            models: (ラベル, パラメータ) のリスト
            out_dir: 出力ディレクトリ

        Returns:
            マニフェスト（ファイル名順）

        Raises:
            ValidationError: モデルがない、またはラベルが重複している場合
        """
        labels = [label for label, _ in models]
        if not labels:
            raise ValidationError("モデルが指定されていません", field="models", module="evaluation")
        if len(set(labels)) != len(labels):
            raise ValidationError("モデルのラベルが重複しています", field="models", value=labels, module="evaluation")

        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        plan = self.plan()
        singers = self.dataset.singers
        inference = self.inference_config
        self.logger.info(f"聴取試験の書き出し開始: モデル数={len(models)}, 条件数={len(plan)}, 出力先={out_dir}")

        rows = []
        for label, params in models:
            for condition, song_id, source, target in plan:
                conditions = voice_change(song_conditions(self.dataset.song_data(song_id)),
                                          singers.index_of(target), singers.size)
                waveform = synthesize_song(params, conditions, self.dataset.norm_stats, self.analysis_config,
                                           block_len=self.data_config.block_len, hop=self.data_config.block_hop,
                                           seed=inference.seed, zero_noise=inference.zero_noise,
                                           vuv_threshold=inference.vuv_threshold,
                                           silence_id=self.dataset.vocab.silence_id)
                name = blinded_name(label, song_id, source, target, condition, self.seed)
                write_wav(waveform, out_dir / name)
                rows.append({"file": name, "song": song_id, "model": label, "source_singer": source,
                             "target_singer": target, "condition": condition})

        manifest = pd.DataFrame(rows, columns=MANIFEST_COLUMNS).sort_values("file").reset_index(drop=True)
        manifest.to_csv(out_dir / MANIFEST_NAME, index=False)
        self.logger.info(f"聴取試験の書き出し完了: {len(manifest)}ファイル")
        return manifest


def export_listening_test(models: Sequence[Tuple[str, ModelParams]], dataset: FeatureDataset,
                          out_dir: Union[str, Path], analysis_config: AnalysisConfig, data_config: DataConfig,
                          inference_config: Optional[InferenceConfig] = None, split: str = SPLIT_HELD_OUT,
                          seed: int = 0, songs_per_gender: int = DEFAULT_SONGS_PER_GENDER) -> pd.DataFrame:
    """ListeningTestExporter で刺激とマニフェストを書き出す"""
    exporter = ListeningTestExporter(dataset, analysis_config, data_config, inference_config, split, seed,
                                     songs_per_gender)
    return exporter.export(models, out_dir)
