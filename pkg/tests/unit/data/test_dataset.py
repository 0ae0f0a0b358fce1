"""
合成データセットとデータセットディレクトリのユニットテスト
"""

import json

import numpy as np
import pytest

from blocksinger.audio.wav_io import Waveform, write_wav
from blocksinger.config.models import AnalysisConfig, DataConfig
from blocksinger.data.annotations import write_phone_annotations
from blocksinger.data.dataset import (
    SPLIT_HELD_OUT, SPLIT_READ, SPLIT_TRAIN, FeatureDataset, assign_splits, prepare_corpus
)
from blocksinger.data.models import PhoneSegment
from blocksinger.data.synthetic import generate_synthetic_dataset
from blocksinger.utils.errors import ResourceError, ValidationError


class TestSyntheticDataset:
    """generate_synthetic_dataset のテスト"""

    def test_shapes(self):
        """2歌手・5音素・10曲 × 512フレームで 512×30 の行列が10個できることを確認"""
        ds = generate_synthetic_dataset(seed=0, n_singers=2, n_phonemes=5, n_songs=10, frames_per_song=512)
        assert len(ds.features) == 10
        assert all(m.frames.shape == (512, 30) for m in ds.features)
        assert ds.vocab.size == 5
        assert ds.singers.ids == ["SYN00", "SYN01"]
        assert ds.singers.genders == ["M", "F"]

    def test_deterministic(self, synthetic_data, tiny_analysis_config):
        """同じシードでビット単位で同じデータになることを確認"""
        again = generate_synthetic_dataset(seed=0, n_singers=4, n_phonemes=4, n_songs=8, frames_per_song=40,
                                           n_mcep=tiny_analysis_config.n_mcep, n_bap=tiny_analysis_config.n_bap)
        for a, b in zip(synthetic_data.features, again.features):
            assert a.frames.tobytes() == b.frames.tobytes()
        for a, b in zip(synthetic_data.f0, again.f0):
            np.testing.assert_array_equal(a, b)
        assert synthetic_data.annotations == again.annotations

    def test_templates_are_separated(self, synthetic_data):
        """異なる（歌手, 音素）のテンプレートがノイズの 5σ√D より離れていることを確認"""
        distance, threshold = synthetic_data.template_separation()
        assert distance > threshold

    def test_vuv_and_f0_agree(self, synthetic_data):
        """有声フラグが {0, 1} で、無声フレームの f0 が 0 であることを確認"""
        for matrix, f0 in zip(synthetic_data.features, synthetic_data.f0):
            vuv = matrix.columns("vuv")[:, 0]
            assert set(np.unique(vuv)) <= {0.0, 1.0}
            np.testing.assert_array_equal(f0[vuv == 0], 0.0)
            assert np.all(f0[vuv == 1] > 0)

    def test_invalid_counts(self):
        """個数が1未満の場合に ValidationError になることを確認"""
        with pytest.raises(ValidationError):
            generate_synthetic_dataset(seed=0, n_singers=0, n_phonemes=3, n_songs=1, frames_per_song=10)


class TestFeatureDataset:
    """書き出したデータセットのテスト"""

    def test_splits(self, synthetic_dataset):
        """8曲のうち2曲が評価用に取り分けられることを確認"""
        assert len(synthetic_dataset.song_ids()) == 8
        assert len(synthetic_dataset.song_ids(SPLIT_HELD_OUT)) == 2
        assert len(synthetic_dataset.song_ids(SPLIT_TRAIN)) == 6

    def test_norm_stats_from_training_split(self, synthetic_dataset):
        """正規化統計が学習分割の曲のみから計算されることを確認"""
        train = np.concatenate([synthetic_dataset.features(s).frames for s in synthetic_dataset.song_ids(SPLIT_TRAIN)])
        stats = synthetic_dataset.norm_stats
        np.testing.assert_allclose(stats.minimum, train.min(axis=0))
        np.testing.assert_allclose(stats.maximum, train.max(axis=0))

    def test_song_data(self, synthetic_dataset, synthetic_data):
        """曲データの音素列・f0・有声フラグが元データと一致することを確認"""
        song_id = synthetic_dataset.song_ids()[0]
        song = synthetic_dataset.song_data(song_id)
        k = [m.song_id for m in synthetic_data.features].index(song_id)
        assert song.n_frames == 40
        np.testing.assert_allclose(song.f0, synthetic_data.f0[k], rtol=1e-6)
        np.testing.assert_array_equal(song.vuv, synthetic_data.features[k].columns("vuv")[:, 0])
        assert song.singer_index == synthetic_dataset.singers.index_of(synthetic_data.features[k].singer_id)
        assert synthetic_dataset.song_data(song_id) is song

    def test_unknown_song(self, synthetic_dataset):
        """存在しない曲IDで ValidationError になることを確認"""
        with pytest.raises(ValidationError):
            synthetic_dataset.song_data("nope")

    def test_missing_manifest(self, tmp_path):
        """マニフェストがない場合に ResourceError になることを確認"""
        with pytest.raises(ResourceError):
            FeatureDataset(tmp_path)

    def test_assign_splits_keeps_one_training_song(self):
        """割合が大きくても学習曲が1曲以上残ることを確認"""
        splits = assign_splits(["a", "b"], 0.9, 0)
        assert list(splits.values()).count(SPLIT_TRAIN) >= 1
        assert assign_splits(["a", "b", "c", "d"], 0.5, 3) == assign_splits(["d", "c", "b", "a"], 0.5, 3)


@pytest.fixture
def tiny_corpus(tmp_path):
    """2歌手 × (歌唱2曲 + 朗読1曲) の正弦波コーパス"""
    corpus = tmp_path / "corpus"
    sr = 16000
    t = np.arange(int(0.4 * sr)) / sr
    for singer, pitch in (("ADIZ", 220.0), ("JLEE", 130.0)):
        for kind, names in (("sing", ["01", "02"]), ("read", ["01"])):
            for k, name in enumerate(names):
                samples = 0.3 * np.sin(2 * np.pi * pitch * (1 + 0.1 * k) * t)
                write_wav(Waveform(samples=samples, sample_rate=sr), corpus / singer / kind / f"{name}.wav")
                write_phone_annotations([PhoneSegment(start=0.0, end=0.1, label="sil"),
                                         PhoneSegment(start=0.1, end=0.4, label="a")],
                                        corpus / singer / kind / f"{name}.txt")
    return corpus


def test_prepare_corpus(tiny_corpus, tmp_path):
    """コーパスを取り込み、歌唱と朗読を分割に割り当てることを確認"""
    analysis = AnalysisConfig(n_mels=8, n_mcep=4, n_bap=1)
    data = DataConfig(held_out_fraction=0.25, singer_genders={"ADIZ": "F", "JLEE": "M"})
    ds = prepare_corpus(tiny_corpus, tmp_path / "data", analysis, data, max_workers=1)

    assert ds.singers.ids == ["ADIZ", "JLEE"]
    assert ds.singers.genders == ["F", "M"]
    assert ds.vocab.labels == ["a", "sil"]
    assert sorted(ds.song_ids(SPLIT_READ)) == ["ADIZ_read_01", "JLEE_read_01"]
    assert len(ds.song_ids(SPLIT_TRAIN)) == 3
    assert len(ds.song_ids(SPLIT_HELD_OUT)) == 1

    song = ds.song_data("ADIZ_01")
    assert song.features.dim == analysis.feature_dim
    voiced = song.f0[song.vuv > 0]
    assert voiced.size > 0
    assert np.median(voiced) == pytest.approx(220.0, rel=0.03)

    manifest = json.loads((tmp_path / "data" / "manifest.json").read_text(encoding="utf-8"))
    assert manifest["source"] == "corpus"


def test_prepare_corpus_missing_dir(tmp_path):
    """コーパスディレクトリがない場合に ResourceError になることを確認"""
    with pytest.raises(ResourceError):
        prepare_corpus(tmp_path / "none", tmp_path / "out", AnalysisConfig(), DataConfig())
