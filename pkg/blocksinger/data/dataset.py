"""
データセット管理モジュール

このモジュールでは、特徴量コンテナ・f0・アノテーション・マニフェストからなる
データセットディレクトリの書き出しと読み込み、および歌唱コーパスの取り込みを行います。

ディレクトリ構成:
    manifest.json
    features/<song_id>.gsf
    f0/<song_id>.gsf
    annotations/<song_id>.txt
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from tqdm import tqdm

from .annotations import build_phoneme_vocab, frame_align, read_phone_annotations, write_phone_annotations
from .container import read_container, write_container
from .models import (
    DatasetManifest, FeatureMatrix, NormStats, PhoneSegment, PhonemeVocab, SingerTable, SongEntry
)
from .normalization import compute_norm_stats
from .synthetic import SyntheticDataset
from ..config.models import AnalysisConfig, DataConfig
from ..utils.errors import (
    ContainerFormatError, ErrorCollector, ResourceError, ValidationError, with_error_handling
)
from ..utils.logging_utils import log_execution_time
from ..utils.system_utils import calculate_worker_count

logger = logging.getLogger(__name__)

SPLIT_TRAIN = "train"
SPLIT_HELD_OUT = "held-out"
SPLIT_READ = "read"


class SongData(BaseModel):
    """学習・推論で使う1曲分のフレーム単位データ"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    song_id: str = Field(description="曲ID")
    singer_index: int = Field(description="歌手テーブル上のインデックス")
    features: FeatureMatrix = Field(description="特徴量行列（元のスケール）")
    phoneme_ids: np.ndarray = Field(description="フレームごとの音素ID")
    f0: np.ndarray = Field(description="フレームごとのf0（Hz）")
    vuv: np.ndarray = Field(description="フレームごとの有声フラグ")

    @property
    def n_frames(self) -> int:
        return self.features.n_frames


def assign_splits(song_ids: Sequence[str], held_out_fraction: float, seed: int) -> Dict[str, str]:
    """
    曲を学習・評価分割に決定的に割り当てる

    Args:
        song_ids: 曲IDのリスト
        held_out_fraction: 評価用の割合
        seed: 乱数シード

    Returns:
        曲IDから分割名への辞書（学習曲は必ず1曲以上）
    """
    ordered = sorted(song_ids)
    n_held = min(int(math.floor(held_out_fraction * len(ordered))), max(len(ordered) - 1, 0))
    order = np.random.default_rng(seed).permutation(len(ordered))
    held = {ordered[i] for i in order[:n_held]}
    return {song: (SPLIT_HELD_OUT if song in held else SPLIT_TRAIN) for song in ordered}


def f0_matrix(f0: np.ndarray, matrix: FeatureMatrix) -> FeatureMatrix:
    """f0 系列を1次元の特徴量コンテナとして包む"""
    return FeatureMatrix(frames=np.asarray(f0, dtype=np.float64).reshape(-1, 1), hop_s=matrix.hop_s,
                         dim_labels=["f0"], song_id=matrix.song_id, singer_id=matrix.singer_id)


class FeatureDataset:
    """
    データセットディレクトリを扱うクラス

    マニフェストを読み込み、曲ごとの特徴量・f0・音素列へのアクセスを提供します。
    """

    MANIFEST = "manifest.json"

    def __init__(self, root: Union[str, Path]):
        """
        初期化

        Args:
            root: データセットディレクトリ

        Raises:
            ResourceError: マニフェストが存在しない場合
            ContainerFormatError: マニフェストが不正な場合
        """
        self.logger = logging.getLogger(__name__)
        self.root = Path(root)
        self.manifest = self._load_manifest()
        self._cache: Dict[str, SongData] = {}

    def _load_manifest(self) -> DatasetManifest:
        path = self.root / self.MANIFEST
        if not path.exists():
            raise ResourceError("データセットのマニフェストが見つかりません", resource_type="dataset",
                                resource_path=str(path))
        try:
            manifest = DatasetManifest.model_validate_json(path.read_text(encoding='utf-8'))
        except ValueError as e:
            raise ContainerFormatError(f"マニフェストが不正です: {e}", file_path=str(path)) from e
        self.logger.debug(f"マニフェストを読み込みました: {path} ({len(manifest.songs)}曲)")
        return manifest

    @property
    def vocab(self) -> PhonemeVocab:
        return self.manifest.vocab

    @property
    def singers(self) -> SingerTable:
        return self.manifest.singers

    @property
    def norm_stats(self) -> NormStats:
        if self.manifest.norm_stats is None:
            raise ValidationError("データセットに正規化統計がありません", field="norm_stats", module="feature-io")
        return self.manifest.norm_stats

    def song_ids(self, split: Optional[str] = None) -> List[str]:
        songs = self.manifest.songs if split is None else self.manifest.songs_in(split)
        return [s.song_id for s in songs]

    def entry(self, song_id: str) -> SongEntry:
        try:
            return self.manifest.song(song_id)
        except KeyError:
            raise ValidationError(f"曲が見つかりません: {song_id}", field="song_id", value=song_id,
                                  module="feature-io")

    def features(self, song_id: str) -> FeatureMatrix:
        return read_container(self.root / self.entry(song_id).features)

    def f0(self, song_id: str) -> np.ndarray:
        entry = self.entry(song_id)
        return read_container(self.root / "f0" / f"{entry.song_id}.gsf").frames[:, 0].astype(np.float64)

    def segments(self, song_id: str) -> List[PhoneSegment]:
        return read_phone_annotations(self.root / self.entry(song_id).annotation)

    def song_data(self, song_id: str) -> SongData:
        """
        1曲分のフレーム単位データを取得する（読み込み結果はキャッシュ）

        Args:
            song_id: 曲ID

        Returns:
            曲データ
        """
        if song_id in self._cache:
            return self._cache[song_id]

        entry = self.entry(song_id)
        features = self.features(song_id)
        f0 = self.f0(song_id)
        if f0.shape[0] != features.n_frames:
            raise ContainerFormatError("f0と特徴量のフレーム数が一致しません", file_path=str(self.root / entry.features))

        phoneme_ids = frame_align(self.segments(song_id), features.hop_s, features.n_frames, self.vocab)
        vuv = features.columns("vuv")[:, 0].astype(np.float64) if "vuv" in features.dim_labels \
            else (f0 > 0).astype(np.float64)

        data = SongData(song_id=song_id, singer_index=self.singers.index_of(entry.singer_id), features=features,
                        phoneme_ids=phoneme_ids, f0=f0, vuv=vuv)
        self._cache[song_id] = data
        return data


@log_execution_time()
def write_dataset(out_dir: Union[str, Path], features: Sequence[FeatureMatrix], f0s: Sequence[np.ndarray],
                  annotations: Sequence[Sequence[PhoneSegment]], vocab: PhonemeVocab, singers: SingerTable,
                  splits: Dict[str, str], source: str) -> FeatureDataset:
    """
    データセットディレクトリを書き出す

    正規化統計は学習分割の曲のみから計算されます。

    Args:
        out_dir: 出力ディレクトリ
        features: 曲ごとの特徴量行列
        f0s: 曲ごとのf0
        annotations: 曲ごとの音素区間
        vocab: 音素語彙
        singers: 歌手テーブル
        splits: 曲IDから分割名への辞書
        source: データの出自

    Returns:
        書き出したデータセット

    Raises:
        ValidationError: 学習分割の曲がない場合
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    entries = []
    for matrix, f0, segments in zip(features, f0s, annotations):
        write_container(matrix, out_dir / "features" / f"{matrix.song_id}.gsf")
        write_container(f0_matrix(f0, matrix), out_dir / "f0" / f"{matrix.song_id}.gsf")
        write_phone_annotations(segments, out_dir / "annotations" / f"{matrix.song_id}.txt")
        entries.append(SongEntry(
            song_id=matrix.song_id, singer_id=matrix.singer_id, split=splits[matrix.song_id],
            features=f"features/{matrix.song_id}.gsf", annotation=f"annotations/{matrix.song_id}.txt",
            n_frames=matrix.n_frames,
        ))

    # 正規化統計はコンテナに保存された float32 の値から計算する
    train = [read_container(out_dir / e.features) for e in entries if e.split == SPLIT_TRAIN]
    if not train:
        raise ValidationError("学習分割に曲がありません", field="splits", module="feature-io")

    manifest = DatasetManifest(
        songs=entries, singers=singers, vocab=vocab, norm_stats=compute_norm_stats(train),
        hop_s=features[0].hop_s, dim_labels=list(features[0].dim_labels), source=source,
    )
    (out_dir / FeatureDataset.MANIFEST).write_text(manifest.model_dump_json(indent=2), encoding='utf-8')
    logger.info(f"データセットを書き出しました: {out_dir} ({len(entries)}曲, 学習{len(train)}曲)")
    return FeatureDataset(out_dir)


def write_synthetic_dataset(out_dir: Union[str, Path], dataset: SyntheticDataset,
                            data_config: Optional[DataConfig] = None) -> FeatureDataset:
    """
    合成データセットをディレクトリに書き出す

    Args:
        out_dir: 出力ディレクトリ
        dataset: 合成データセット
        data_config: 分割設定（Noneの場合はデフォルト）

    Returns:
        書き出したデータセット
    """
    data_config = data_config or DataConfig()
    splits = assign_splits([m.song_id for m in dataset.features], data_config.held_out_fraction,
                           data_config.split_seed)
    return write_dataset(out_dir, dataset.features, dataset.f0, dataset.annotations, dataset.vocab,
                         dataset.singers, splits, source="synthetic")


def _scan_corpus(corpus_dir: Path) -> List[Tuple[str, str, Path, Path]]:
    """(歌手, 種別 sing/read, wavパス, txtパス) のリスト"""
    items = []
    for singer_dir in sorted(p for p in corpus_dir.iterdir() if p.is_dir()):
        for kind in ("sing", "read"):
            kind_dir = singer_dir / kind
            if not kind_dir.is_dir():
                continue
            for wav in sorted(kind_dir.glob("*.wav")):
                items.append((singer_dir.name, kind, wav, wav.with_suffix(".txt")))
    return items


@with_error_handling(ResourceError, "コーパスの取り込みに失敗しました")
@log_execution_time(level=logging.INFO)
def prepare_corpus(corpus_dir: Union[str, Path], out_dir: Union[str, Path],
                   analysis_config: AnalysisConfig, data_config: DataConfig,
                   max_workers: Optional[int] = None) -> FeatureDataset:
    """
    歌唱コーパス（<歌手>/sing/*.wav, <歌手>/read/*.wav と同名の .txt）を取り込む

    各録音を分析・コンテナ化し、歌唱録音を学習・評価分割に、朗読録音を read 分割に割り当てます。

    Args:
        corpus_dir: コーパスディレクトリ
        out_dir: 出力データセットディレクトリ
        analysis_config: 分析設定
        data_config: データ設定（歌手の性別、分割）
        max_workers: 並列ワーカー数（Noneの場合はシステムから計算）

    Returns:
        書き出したデータセット

    Raises:
        ResourceError: コーパスディレクトリが存在しない、または録音が見つからない場合
        DataFormatError: 読み込みに失敗したファイルがある場合（まとめて報告）
    """
    # 循環参照を避けるため関数内でインポート
    from ..audio.analysis import analyze, center_frames
    from ..audio.wav_io import read_wav

    corpus_dir = Path(corpus_dir)
    if not corpus_dir.is_dir():
        raise ResourceError("コーパスディレクトリが見つかりません", resource_type="corpus",
                            resource_path=str(corpus_dir))

    items = _scan_corpus(corpus_dir)
    if not items:
        raise ResourceError("録音が見つかりません", resource_type="corpus", resource_path=str(corpus_dir))

    def process(item):
        singer, kind, wav_path, txt_path = item
        song_id = f"{singer}_{wav_path.stem}" if kind == "sing" else f"{singer}_read_{wav_path.stem}"
        waveform = center_frames(read_wav(wav_path, target_rate=analysis_config.sample_rate), analysis_config)
        matrix, f0 = analyze(waveform, analysis_config, song_id=song_id, singer_id=singer)
        segments = read_phone_annotations(txt_path)
        return kind, matrix, f0, segments

    workers = max_workers or calculate_worker_count()
    collector = ErrorCollector()
    results = []
    with ThreadPoolExecutor(max_workers=workers) as executor:
        futures = [executor.submit(process, item) for item in items]
        for future, item in tqdm(zip(futures, items), total=len(items), desc="コーパス取り込み"):
            try:
                results.append(future.result())
            except Exception as e:
                logger.warning(f"取り込みに失敗しました: {item[2]} ({e})")
                collector.add(e)
    collector.raise_if_errors()

    vocab = build_phoneme_vocab([r[3] for r in results], silence_label=data_config.silence_label)
    singer_names = sorted({item[0] for item in items})
    singers = SingerTable(ids=singer_names,
                          genders=[data_config.singer_genders.get(name, "U") for name in singer_names])

    sung = [r[1].song_id for r in results if r[0] == "sing"]
    splits = assign_splits(sung, data_config.held_out_fraction, data_config.split_seed)
    splits.update({r[1].song_id: SPLIT_READ for r in results if r[0] == "read"})

    return write_dataset(out_dir, [r[1] for r in results], [r[2] for r in results], [r[3] for r in results],
                         vocab, singers, splits, source="corpus")
