"""
音素アノテーションのユニットテスト
"""

import numpy as np
import pytest

from blocksinger.data.annotations import (
    build_phoneme_vocab, format_phone_annotations, frame_align, parse_phone_annotations,
    read_phone_annotations, write_phone_annotations
)
from blocksinger.data.models import PhoneSegment, PhonemeVocab
from blocksinger.utils.errors import AnnotationParseError, ValidationError


class TestParsePhoneAnnotations:
    """parse_phone_annotations のテスト"""

    def test_two_segments(self):
        """2行の入力が2つの区間になることを確認"""
        segments = parse_phone_annotations("0.00 0.32 sil\n0.32 0.61 ah")
        assert segments == [PhoneSegment(start=0.0, end=0.32, label="sil"),
                            PhoneSegment(start=0.32, end=0.61, label="ah")]

    def test_blank_lines_are_skipped(self):
        """空行が無視されることを確認"""
        assert len(parse_phone_annotations("\n0 0.1 a\n\n  \n0.1 0.2 b\n")) == 2

    def test_start_after_end(self):
        """開始時刻が終了時刻以上の行で ValidationError になることを確認"""
        with pytest.raises(ValidationError):
            parse_phone_annotations("0.5 0.4 ah")

    def test_overlap(self):
        """重なった区間で ValidationError になることを確認"""
        with pytest.raises(ValidationError):
            parse_phone_annotations("0.0 0.3 a\n0.2 0.5 b")

    @pytest.mark.parametrize("text,line", [
        ("0.0 0.1 a\n0.1 0.2\n", 2),
        ("0.0 0.1 a b", 1),
        ("0.0 x a", 1),
        ("0.0 0.1 a\n0.1 inf b", 2),
    ])
    def test_malformed_line_reports_line_number(self, text, line):
        """不正な行で行番号付きの AnnotationParseError になることを確認"""
        with pytest.raises(AnnotationParseError) as exc_info:
            parse_phone_annotations(text, file_path="song.txt")
        assert exc_info.value.line_number == line
        assert exc_info.value.file_path == "song.txt"

    def test_golden_file_round_trip(self, fixtures_dir, tmp_path):
        """100行の固定ファイルが読み込み・書き出しでバイト単位で一致することを確認"""
        golden = fixtures_dir / "phones_100.txt"
        segments = read_phone_annotations(golden)
        assert len(segments) == 100
        assert segments[0] == PhoneSegment(start=0.0, end=0.05, label="sil")
        assert segments[-1].label == "n"
        assert segments[-1].end == pytest.approx(5.0)

        out = tmp_path / "round_trip.txt"
        write_phone_annotations(segments, out)
        assert out.read_bytes() == golden.read_bytes()

    def test_format(self):
        """書き出し形式が小数6桁であることを確認"""
        text = format_phone_annotations([PhoneSegment(start=0.0, end=0.32, label="sil")])
        assert text == "0.000000 0.320000 sil\n"


class TestBuildPhonemeVocab:
    """build_phoneme_vocab のテスト"""

    def test_sorted_labels(self):
        """ラベルが辞書順に並び、無音が含まれることを確認"""
        segments = [[PhoneSegment(start=0, end=1, label="ah"), PhoneSegment(start=1, end=2, label="sil")],
                    [PhoneSegment(start=0, end=1, label="b")]]
        vocab = build_phoneme_vocab(segments)
        assert vocab.labels == ["ah", "b", "sil"]
        assert vocab.index == {"ah": 0, "b": 1, "sil": 2}
        assert vocab.silence_id == 2

    def test_order_independent(self):
        """入力順に依存しないことを確認"""
        a = [PhoneSegment(start=0, end=1, label="k")]
        b = [PhoneSegment(start=0, end=1, label="a"), PhoneSegment(start=1, end=2, label="z")]
        assert build_phoneme_vocab([a, b]) == build_phoneme_vocab([b, a])

    def test_silence_added(self):
        """無音ラベルが区間になくても追加されることを確認"""
        vocab = build_phoneme_vocab([[PhoneSegment(start=0, end=1, label="a")]], silence_label="pau")
        assert vocab.labels == ["a", "pau"]

    def test_empty(self):
        """区間が1つもない場合に ValidationError になることを確認"""
        with pytest.raises(ValidationError):
            build_phoneme_vocab([[], []])


class TestFrameAlign:
    """frame_align のテスト"""

    @pytest.fixture
    def vocab(self):
        return PhonemeVocab(labels=["ah", "b", "sil"])

    def test_frame_centers(self, vocab):
        """フレーム中心で区間を選び、範囲外は無音になることを確認"""
        ids = frame_align([PhoneSegment(start=0.0, end=0.010, label="ah")], 0.005, 3, vocab)
        np.testing.assert_array_equal(ids, [0, 0, 2])

    def test_empty_segments(self, vocab):
        """区間がない場合はすべて無音になることを確認"""
        np.testing.assert_array_equal(frame_align([], 0.005, 2, vocab), [2, 2])

    def test_tie_goes_to_later_segment(self, vocab):
        """境界がフレーム中心にある場合は後ろの区間が選ばれることを確認"""
        segments = [PhoneSegment(start=0.0, end=0.0025, label="ah"), PhoneSegment(start=0.0025, end=0.02, label="b")]
        assert frame_align(segments, 0.005, 1, vocab)[0] == vocab.id_of("b")

    def test_length_and_range(self, fixtures_dir):
        """出力長が n_frames で、すべてのIDが語彙内であることを確認"""
        segments = read_phone_annotations(fixtures_dir / "phones_100.txt")
        vocab = build_phoneme_vocab([segments])
        ids = frame_align(segments, 0.005, 1200, vocab)
        assert ids.shape == (1200,)
        assert ids.dtype == np.int64
        assert np.all((ids >= 0) & (ids < vocab.size))
        # 5秒以降のフレームは無音
        assert np.all(ids[1000:] == vocab.silence_id)
        assert ids[10] == vocab.id_of("a")

    def test_unknown_label(self, vocab):
        """語彙にない音素で ValidationError になることを確認"""
        with pytest.raises(ValidationError):
            frame_align([PhoneSegment(start=0, end=1, label="zz")], 0.005, 4, vocab)

    def test_non_positive_hop(self, vocab):
        """hop ≤ 0 で ValidationError になることを確認"""
        with pytest.raises(ValidationError):
            frame_align([], 0.0, 4, vocab)
