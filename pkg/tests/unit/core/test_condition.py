"""
条件テンソルのユニットテスト
"""

import numpy as np
import pytest

from blocksinger.core.condition import (
    ConditionLayout, SongConditions, assemble_condition, condition_blocks, encode_f0, pad_conditions
)
from blocksinger.utils.errors import ShapeError, ValidationError


@pytest.fixture
def layout():
    """音素3・歌手2・ノイズ2 のチャネル構成"""
    return ConditionLayout(n_phonemes=3, n_singers=2, n_noise=2)


def test_layout_channels(layout):
    """チャネルの並びが [音素 | f0 | vuv | 歌手 | ノイズ] であることを確認"""
    assert layout.n_channels == 9
    assert layout.n_static_channels == 7
    assert layout.phoneme_slice == slice(0, 3)
    assert (layout.f0_index, layout.vuv_index) == (3, 4)
    assert layout.singer_slice == slice(5, 7)
    assert layout.noise_slice == slice(7, 9)


@pytest.mark.parametrize("f0,expected", [
    (220.0, 0.0), (440.0, 0.5), (110.0, -0.5), (55.0, -1.0), (10.0, -1.0), (1760.0, 1.0), (0.0, 0.0)
])
def test_encode_f0(f0, expected):
    """log2(f0/220)/2 を [-1, 1] にクランプし、無声は 0 になることを確認"""
    assert encode_f0(np.array([f0]))[0] == pytest.approx(expected)


class TestAssembleCondition:
    """assemble_condition のテスト"""

    def test_one_hot_layout(self, layout):
        """音素と歌手の one-hot、f0、vuv が正しい位置に入ることを確認"""
        cond = assemble_condition(np.array([0, 2, 1]), np.array([220.0, 0.0, 440.0]), np.array([1.0, 0.0, 1.0]),
                                  1, layout, zero_noise=True)
        assert cond.shape == (9, 3)
        np.testing.assert_array_equal(cond[layout.phoneme_slice], [[1, 0, 0], [0, 0, 1], [0, 1, 0]])
        np.testing.assert_allclose(cond[layout.f0_index], [0.0, 0.0, 0.5])
        np.testing.assert_array_equal(cond[layout.vuv_index], [1, 0, 1])
        np.testing.assert_array_equal(cond[layout.singer_slice], [[0, 0, 0], [1, 1, 1]])
        np.testing.assert_array_equal(cond[layout.noise_slice], 0.0)

    def test_noise_is_seeded(self, layout):
        """ノイズチャネルが同じシードで同じ値になることを確認"""
        args = (np.zeros(5, dtype=int), np.zeros(5), np.zeros(5), 0, layout)
        a = assemble_condition(*args, seed=3)
        b = assemble_condition(*args, seed=3)
        c = assemble_condition(*args, seed=4)
        np.testing.assert_array_equal(a, b)
        assert not np.array_equal(a[layout.noise_slice], c[layout.noise_slice])
        np.testing.assert_array_equal(a[:layout.n_static_channels], c[:layout.n_static_channels])

    def test_length_mismatch(self, layout):
        """系列の長さが揃っていない場合に ShapeError になることを確認"""
        with pytest.raises(ShapeError):
            assemble_condition(np.zeros(3, dtype=int), np.zeros(2), np.zeros(3), 0, layout)

    @pytest.mark.parametrize("phonemes,singer,f0", [
        ([0, 3], 0, [0.0, 0.0]),
        ([0, -1], 0, [0.0, 0.0]),
        ([0, 1], 2, [0.0, 0.0]),
        ([0, 1], 0, [100.0, -1.0]),
    ])
    def test_out_of_range(self, layout, phonemes, singer, f0):
        """範囲外のIDや負の f0 で ValidationError になることを確認"""
        with pytest.raises(ValidationError):
            assemble_condition(np.array(phonemes), np.array(f0), np.zeros(2), singer, layout)


class TestConditionBlocks:
    """condition_blocks と pad_conditions のテスト"""

    @pytest.fixture
    def conditions(self):
        return SongConditions(song_id="s", phoneme_ids=np.arange(20) % 2, f0=np.full(20, 220.0),
                              vuv=np.ones(20), singer_index=1)

    def test_padding_uses_silence(self, conditions):
        """末尾が無音音素・f0=0・vuv=0 で延長されることを確認"""
        padded = pad_conditions(conditions, 24, silence_id=2)
        assert padded.n_frames == 24
        np.testing.assert_array_equal(padded.phoneme_ids[20:], 2)
        np.testing.assert_array_equal(padded.f0[20:], 0.0)
        np.testing.assert_array_equal(padded.vuv[20:], 0.0)
        assert pad_conditions(conditions, 10, silence_id=2) is conditions

    def test_blocks_overlap_consistently(self, conditions, layout):
        """重なり部分の条件（ノイズを含む）が隣接ブロックで一致することを確認"""
        blocks = condition_blocks(conditions, layout, 16, 8, silence_id=2, rng=np.random.default_rng(0))
        assert len(blocks) == 2
        assert all(b.shape == (9, 16) for b in blocks)
        np.testing.assert_array_equal(blocks[0][:, 8:], blocks[1][:, :8])
        # 最終ブロックの末尾4フレームは無音
        np.testing.assert_array_equal(blocks[1][2, 12:], 1.0)
        np.testing.assert_array_equal(blocks[1][layout.vuv_index, 12:], 0.0)

    def test_song_conditions_validation(self):
        """系列の長さが揃っていない曲条件を拒否することを確認"""
        with pytest.raises(ValueError):
            SongConditions(phoneme_ids=np.zeros(3, dtype=int), f0=np.zeros(2), vuv=np.zeros(3), singer_index=0)
