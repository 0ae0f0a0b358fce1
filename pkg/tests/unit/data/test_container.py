"""
特徴量コンテナとセクションコンテナのユニットテスト
"""

import struct

import numpy as np
import pytest

from blocksinger.data.container import (
    FEATURE_MAGIC, decode_container, encode_container, read_container, read_sections, write_container,
    write_sections
)
from blocksinger.data.models import FeatureMatrix
from blocksinger.utils.errors import ContainerFormatError


@pytest.fixture
def matrix(rng):
    """T=2, D=3 の特徴量行列"""
    return FeatureMatrix(frames=rng.standard_normal((2, 3)).astype(np.float32), hop_s=0.005,
                         dim_labels=["mcep_0", "bap_0", "vuv"], song_id="ADIZ_01", singer_id="ADIZ", pad_frames=1)


class TestFeatureContainer:
    """.gsf コンテナのテスト"""

    def test_round_trip_bit_exact(self, matrix, tmp_path):
        """書き出しと読み込みでビット単位で一致することを確認"""
        path = tmp_path / "song.gsf"
        write_container(matrix, path)
        restored = read_container(path)
        assert restored.frames.dtype == np.float32
        assert restored.frames.tobytes() == matrix.frames.tobytes()
        assert restored.dim_labels == matrix.dim_labels
        assert (restored.song_id, restored.singer_id, restored.pad_frames) == ("ADIZ_01", "ADIZ", 1)
        assert restored.hop_s == matrix.hop_s

    def test_file_size(self, matrix):
        """ファイルサイズがヘッダ長 + 24 バイトのペイロードになることを確認"""
        data = encode_container(matrix)
        (header_len,) = struct.unpack("<I", data[4:8])
        assert data[:4] == FEATURE_MAGIC
        assert len(data) == 8 + header_len + 2 * 3 * 4

    def test_corrupted_magic(self, matrix):
        """マジックバイトが壊れている場合に ContainerFormatError になることを確認"""
        data = b"XXXX" + encode_container(matrix)[4:]
        with pytest.raises(ContainerFormatError):
            decode_container(data)

    def test_truncated_payload(self, matrix):
        """ペイロードが途中で切れている場合に ContainerFormatError になることを確認"""
        with pytest.raises(ContainerFormatError):
            decode_container(encode_container(matrix)[:-4])

    def test_truncated_header(self, matrix):
        """ヘッダが途中で切れている場合に ContainerFormatError になることを確認"""
        with pytest.raises(ContainerFormatError):
            decode_container(encode_container(matrix)[:12])

    def test_missing_file(self, tmp_path):
        """存在しないファイルで ContainerFormatError になることを確認"""
        with pytest.raises(ContainerFormatError):
            read_container(tmp_path / "missing.gsf")


class TestSectionContainer:
    """.gsc セクションコンテナのテスト"""

    def test_round_trip_keeps_dtypes(self, tmp_path, rng):
        """float32 / float64 / int64 のセクションがビット単位で復元されることを確認"""
        sections = {
            "a": rng.standard_normal((3, 4)).astype(np.float32),
            "b": rng.standard_normal(5),
            "c": np.arange(6, dtype=np.int64).reshape(2, 3),
        }
        path = tmp_path / "model.gsc"
        write_sections(path, sections, {"epoch": 3})
        restored, meta = read_sections(path)
        assert list(restored) == ["a", "b", "c"]
        for name, array in sections.items():
            assert restored[name].dtype == array.dtype
            assert restored[name].tobytes() == array.tobytes()
        assert meta == {"epoch": 3}

    def test_unsupported_dtype(self, tmp_path):
        """未対応の dtype で ContainerFormatError になることを確認"""
        with pytest.raises(ContainerFormatError):
            write_sections(tmp_path / "bad.gsc", {"s": np.array(["x"])})

    def test_feature_file_is_not_section_file(self, matrix, tmp_path):
        """特徴量コンテナをセクションコンテナとして読むと ContainerFormatError になることを確認"""
        path = tmp_path / "song.gsf"
        write_container(matrix, path)
        with pytest.raises(ContainerFormatError):
            read_sections(path)
