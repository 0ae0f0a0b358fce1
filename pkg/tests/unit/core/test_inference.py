"""
推論（全曲合成・声質変換）のユニットテスト
"""

from unittest.mock import patch

import numpy as np
import pytest

from blocksinger.audio.analysis import analyze
from blocksinger.core.condition import SongConditions
from blocksinger.core.evaluation import evaluate_mcd, mcd
from blocksinger.core.inference import (
    replace_singer, song_conditions, synthesize_features, synthesize_song, voice_change
)
from blocksinger.nn.tape import Tensor
from blocksinger.utils.errors import ValidationError


@pytest.fixture
def conditions(synthetic_dataset):
    song_id = synthetic_dataset.song_ids()[0]
    return song_conditions(synthetic_dataset.song_data(song_id))


def _synth(params, conditions, dataset, config, **kwargs):
    return synthesize_features(params, conditions, dataset.norm_stats, block_len=config.data.block_len,
                               hop=config.data.block_hop, silence_id=dataset.vocab.silence_id, **kwargs)


class TestSynthesizeFeatures:
    """synthesize_features のテスト"""

    def test_frame_count_and_labels(self, tiny_params, conditions, synthetic_dataset, tiny_config):
        """出力のフレーム数が条件と同じで、次元ラベルが正規化統計のものになることを確認"""
        out = _synth(tiny_params, conditions, synthetic_dataset, tiny_config)
        assert out.n_frames == conditions.n_frames
        assert out.dim_labels == synthetic_dataset.norm_stats.dim_labels
        assert set(np.unique(out.columns("vuv"))) <= {0.0, 1.0}

    def test_deterministic(self, tiny_params, conditions, synthetic_dataset, tiny_config):
        """同じシードで同じ特徴量になり、zero_noise ではシードに依存しないことを確認"""
        a = _synth(tiny_params, conditions, synthetic_dataset, tiny_config, seed=1)
        b = _synth(tiny_params, conditions, synthetic_dataset, tiny_config, seed=1)
        np.testing.assert_array_equal(a.frames, b.frames)
        z1 = _synth(tiny_params, conditions, synthetic_dataset, tiny_config, seed=1, zero_noise=True)
        z2 = _synth(tiny_params, conditions, synthetic_dataset, tiny_config, seed=2, zero_noise=True)
        np.testing.assert_array_equal(z1.frames, z2.frames)

    def test_denormalizes_generator_output(self, tiny_params, conditions, synthetic_dataset, tiny_config):
        """生成器が 0 を出力すると各次元の (min + max) / 2 に戻ることを確認"""
        def fake_forward(params, blocks, *args, **kwargs):
            return [Tensor(np.zeros((1, params.dims.feature_dim, b.shape[-1]))) for b in blocks], {}

        with patch("blocksinger.core.inference.generator_forward", side_effect=fake_forward) as mock_forward:
            out = _synth(tiny_params, conditions, synthetic_dataset, tiny_config, vuv_threshold=2.0)

        stats = synthetic_dataset.norm_stats
        midpoint = (np.asarray(stats.minimum) + np.asarray(stats.maximum)) / 2
        vuv = stats.dim_labels.index("vuv")
        others = [k for k in range(stats.dim) if k != vuv]
        np.testing.assert_allclose(out.frames[:, others], np.broadcast_to(midpoint[others], (out.n_frames, len(others))),
                                   atol=1e-9)
        np.testing.assert_array_equal(out.frames[:, vuv], 0.0)
        mock_forward.assert_called_once()

    @pytest.mark.parametrize("n_blocks", [1, 2, 3])
    def test_prefix_is_consistent(self, tiny_params, conditions, synthetic_dataset, tiny_config, n_blocks):
        """条件の先頭部分だけを合成しても、最後の完全なブロックまでは曲全体の合成と一致することを確認"""
        block_len, hop = tiny_config.data.block_len, tiny_config.data.block_hop
        n = (n_blocks - 1) * hop + block_len
        assert n < conditions.n_frames
        prefix = SongConditions(song_id=conditions.song_id, phoneme_ids=conditions.phoneme_ids[:n],
                                f0=conditions.f0[:n], vuv=conditions.vuv[:n], singer_index=conditions.singer_index)
        whole = _synth(tiny_params, conditions, synthetic_dataset, tiny_config, zero_noise=True)
        head = _synth(tiny_params, prefix, synthetic_dataset, tiny_config, zero_noise=True)
        assert head.n_frames == n
        np.testing.assert_allclose(head.frames[:n_blocks * hop], whole.frames[:n_blocks * hop], atol=1e-12)

    def test_missing_norm_stats(self, tiny_params, conditions):
        """正規化統計がない場合に ValidationError になることを確認"""
        with pytest.raises(ValidationError):
            synthesize_features(tiny_params, conditions, None, block_len=16, hop=8)


class TestVoiceChange:
    """声質変換のテスト"""

    def test_only_singer_changes(self, conditions):
        """歌手ID以外の条件が変わらないことを確認"""
        changed = voice_change(conditions, 3, 4)
        assert changed.singer_index == 3
        np.testing.assert_array_equal(changed.phoneme_ids, conditions.phoneme_ids)
        np.testing.assert_array_equal(changed.f0, conditions.f0)

    @pytest.mark.parametrize("target", [-1, 4])
    def test_out_of_range(self, conditions, target):
        """範囲外の歌手で ValidationError になることを確認"""
        with pytest.raises(ValidationError):
            voice_change(conditions, target, 4)

    def test_replace_singer_channels(self, tiny_params, rng):
        """組み立て済みブロックの歌手 one-hot だけが差し替わることを確認"""
        layout = tiny_params.dims.layout
        block = rng.standard_normal((layout.n_channels, 16))
        changed, = replace_singer([block], layout, 2)
        expected = np.zeros((layout.n_singers, 16))
        expected[2] = 1.0
        np.testing.assert_array_equal(changed[layout.singer_slice], expected)
        mask = np.ones(layout.n_channels, dtype=bool)
        mask[layout.singer_slice] = False
        np.testing.assert_array_equal(changed[mask], block[mask])
        with pytest.raises(ValidationError):
            replace_singer([block], layout, layout.n_singers)

    def test_changing_singer_changes_output(self, tiny_params, conditions, synthetic_dataset, tiny_config):
        """歌手を変えると生成特徴量が変わることを確認"""
        a = _synth(tiny_params, conditions, synthetic_dataset, tiny_config, zero_noise=True)
        other = (conditions.singer_index + 1) % synthetic_dataset.singers.size
        b = _synth(tiny_params, voice_change(conditions, other, synthetic_dataset.singers.size),
                   synthetic_dataset, tiny_config, zero_noise=True)
        assert np.mean(np.abs(a.frames - b.frames)) > 0


class TestSynthesizeSong:
    """synthesize_song のテスト"""

    def test_duration(self, tiny_params, synthetic_dataset, tiny_config):
        """T フレームの条件から (T - 1)·hop + window サンプルの波形になり、再分析で T フレームに戻ることを確認"""
        analysis = tiny_config.analysis
        n = 200
        conds = SongConditions(song_id="one_second", phoneme_ids=np.zeros(n, dtype=int), f0=np.full(n, 220.0),
                               vuv=np.ones(n), singer_index=0)
        wave = synthesize_song(tiny_params, conds, synthetic_dataset.norm_stats, analysis, block_len=16, hop=8,
                               silence_id=synthetic_dataset.vocab.silence_id)
        assert n * analysis.frame_hop == pytest.approx(1.0)
        assert wave.samples.shape[0] == (n - 1) * analysis.hop_samples + analysis.window_length
        assert analyze(wave, analysis)[0].n_frames == n

    def test_matches_audio_report(self, tiny_params, synthetic_dataset, tiny_config):
        """合成音声を再分析した MCD が評価レポートの値と 1e-6 以内で一致することを確認"""
        song_id = synthetic_dataset.song_ids()[0]
        song = synthetic_dataset.song_data(song_id)
        analysis = tiny_config.analysis
        wave = synthesize_song(tiny_params, song_conditions(song), synthetic_dataset.norm_stats, analysis,
                               block_len=16, hop=8, seed=0, silence_id=synthetic_dataset.vocab.silence_id)
        generated = analyze(wave, analysis)[0].frames[:, :analysis.n_mcep]
        reference = np.asarray(song.features.frames, dtype=np.float64)[:, :analysis.n_mcep]
        expected = mcd(reference, generated, analysis.n_mcep)

        report = evaluate_mcd(tiny_params, synthetic_dataset, analysis, tiny_config.data, tiny_config.inference,
                              source="audio", song_ids=[song_id])
        assert report.songs[0].mcd_db == pytest.approx(expected, abs=1e-6)


@pytest.mark.slow
class TestTrainedVoiceChange:
    """学習済みの小さなモデルでの声質変換のテスト"""

    def test_own_identity_is_closer(self, trained_small_model):
        """歌手 A の曲は A の歌手IDで合成したほうが B の歌手IDより MCD が小さいことを確認"""
        trainer = trained_small_model["trainer"]
        dataset = trained_small_model["dataset"]
        config = trained_small_model["config"]
        n_mcep = config.analysis.n_mcep

        song = next(dataset.song_data(s) for s in dataset.song_ids() if dataset.song_data(s).singer_index == 0)
        own = song_conditions(song)
        swapped = voice_change(own, 1, dataset.singers.size)
        kwargs = dict(block_len=config.data.block_len, hop=config.data.block_hop, zero_noise=True,
                      silence_id=dataset.vocab.silence_id)
        as_own = synthesize_features(trainer.params, own, dataset.norm_stats, **kwargs).frames
        as_other = synthesize_features(trainer.params, swapped, dataset.norm_stats, **kwargs).frames

        assert np.mean(np.abs(as_own - as_other)) > 0
        reference = np.asarray(song.features.frames, dtype=np.float64)[:, :n_mcep]
        assert mcd(reference, as_own[:, :n_mcep], n_mcep) < mcd(reference, as_other[:, :n_mcep], n_mcep)
