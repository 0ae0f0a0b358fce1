"""
特徴量コンテナモジュール

このモジュールでは、自己記述型のバイナリ形式で特徴量行列とチェックポイントを読み書きします。

特徴量コンテナ（.gsf）:
    マジック `GSF1` / ヘッダ長（uint32 LE） / UTF-8 JSON ヘッダ / float32 LE の行優先ペイロード

セクション付きコンテナ（.gsc）:
    マジック `GSC1` / ヘッダ長（uint32 LE） / JSON ヘッダ（meta と sections） / 各セクションのペイロード
"""

import json
import logging
import struct
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np

from .models import FeatureMatrix
from ..utils.errors import ContainerFormatError

logger = logging.getLogger(__name__)

FEATURE_MAGIC = b"GSF1"
SECTION_MAGIC = b"GSC1"
HEADER_KEYS = ("t", "d", "hop_s", "dim_labels", "song_id", "singer_id", "pad_frames")
SECTION_DTYPES = ("<f4", "<f8", "<i8")


def _pack(magic: bytes, header: Dict[str, Any], payload: bytes) -> bytes:
    header_bytes = json.dumps(header, ensure_ascii=False, separators=(",", ":")).encode("utf-8")
    return magic + struct.pack("<I", len(header_bytes)) + header_bytes + payload


def _unpack(data: bytes, magic: bytes, path: str) -> Tuple[Dict[str, Any], bytes]:
    if len(data) < 8:
        raise ContainerFormatError("ファイルが短すぎます", file_path=path)
    if data[:4] != magic:
        raise ContainerFormatError(f"マジックバイトが不正です: {data[:4]!r}", file_path=path)

    (header_len,) = struct.unpack("<I", data[4:8])
    if 8 + header_len > len(data):
        raise ContainerFormatError("ヘッダが途中で切れています", file_path=path)

    try:
        header = json.loads(data[8:8 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ContainerFormatError(f"ヘッダを解析できません: {e}", file_path=path) from e
    if not isinstance(header, dict):
        raise ContainerFormatError("ヘッダがJSONオブジェクトではありません", file_path=path)

    return header, data[8 + header_len:]


def encode_container(matrix: FeatureMatrix) -> bytes:
    """
    特徴量行列をコンテナのバイト列に変換する

    Args:
        matrix: 特徴量行列

    Returns:
        .gsf 形式のバイト列
    """
    header = {
        "t": matrix.n_frames,
        "d": matrix.dim,
        "hop_s": matrix.hop_s,
        "dim_labels": list(matrix.dim_labels),
        "song_id": matrix.song_id,
        "singer_id": matrix.singer_id,
        "pad_frames": matrix.pad_frames,
    }
    payload = np.ascontiguousarray(matrix.frames, dtype="<f4").tobytes(order="C")
    return _pack(FEATURE_MAGIC, header, payload)


def decode_container(data: bytes, path: str = "<bytes>") -> FeatureMatrix:
    """
    コンテナのバイト列を特徴量行列に変換する

    Args:
        data: .gsf 形式のバイト列
        path: エラーメッセージ用のパス

    Returns:
        特徴量行列（float32）

    Raises:
        ContainerFormatError: マジック・ヘッダ・ペイロード長が不正な場合
    """
    header, payload = _unpack(data, FEATURE_MAGIC, path)

    missing = [key for key in HEADER_KEYS if key not in header]
    if missing:
        raise ContainerFormatError(f"ヘッダに必須キーがありません: {missing}", file_path=path)

    t, d = header["t"], header["d"]
    if not (isinstance(t, int) and isinstance(d, int) and t >= 1 and d >= 1):
        raise ContainerFormatError(f"ヘッダの形状が不正です: t={t}, d={d}", file_path=path)

    expected = t * d * 4
    if len(payload) != expected:
        raise ContainerFormatError(
            f"ペイロード長がヘッダと一致しません (期待: {expected}, 実際: {len(payload)})", file_path=path
        )

    frames = np.frombuffer(payload, dtype="<f4").reshape(t, d).astype(np.float32)
    try:
        return FeatureMatrix(
            frames=frames,
            hop_s=float(header["hop_s"]),
            dim_labels=list(header["dim_labels"]),
            song_id=str(header["song_id"]),
            singer_id=str(header["singer_id"]),
            pad_frames=int(header["pad_frames"]),
        )
    except ValueError as e:
        raise ContainerFormatError(f"ヘッダの内容が不正です: {e}", file_path=path) from e


def write_container(matrix: FeatureMatrix, path: Union[str, Path]) -> None:
    """
    特徴量行列を .gsf ファイルに書き出す

    Args:
        matrix: 特徴量行列
        path: 出力パス
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_container(matrix))


def read_container(path: Union[str, Path]) -> FeatureMatrix:
    """
    .gsf ファイルから特徴量行列を読み込む

    Args:
        path: 入力パス

    Returns:
        特徴量行列

    Raises:
        ContainerFormatError: ファイル形式が不正な場合
    """
    path = Path(path)
    if not path.exists():
        raise ContainerFormatError("ファイルが見つかりません", file_path=str(path))
    return decode_container(path.read_bytes(), str(path))


def write_sections(path: Union[str, Path], sections: Dict[str, np.ndarray], meta: Optional[Dict[str, Any]] = None) -> None:
    """
    名前付きセクションを持つコンテナを書き出す

    各セクションは元の dtype（float32 / float64 / int64）のまま保存されるため、
    読み込み結果はビット単位で一致します。

    Args:
        path: 出力パス
        sections: セクション名と配列の辞書（挿入順に保存）
        meta: JSON シリアライズ可能なメタ情報
    """
    entries = []
    chunks = []
    offset = 0
    for name, array in sections.items():
        array = np.asarray(array)
        if array.dtype == np.float32:
            dtype = "<f4"
        elif array.dtype == np.float64:
            dtype = "<f8"
        elif np.issubdtype(array.dtype, np.integer):
            dtype = "<i8"
        else:
            raise ContainerFormatError(f"未対応のdtypeです: {name} ({array.dtype})", file_path=str(path))
        raw = np.ascontiguousarray(array, dtype=dtype).tobytes(order="C")
        entries.append({"name": name, "dtype": dtype, "shape": list(array.shape), "offset": offset, "nbytes": len(raw)})
        chunks.append(raw)
        offset += len(raw)

    header = {"meta": meta or {}, "sections": entries}
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(_pack(SECTION_MAGIC, header, b"".join(chunks)))
    tmp.replace(path)


def read_sections(path: Union[str, Path]) -> Tuple[Dict[str, np.ndarray], Dict[str, Any]]:
    """
    名前付きセクションを持つコンテナを読み込む

    Args:
        path: 入力パス

    Returns:
        (セクション名と配列の辞書, メタ情報)

    Raises:
        ContainerFormatError: ファイル形式が不正な場合
    """
    path = Path(path)
    if not path.exists():
        raise ContainerFormatError("ファイルが見つかりません", file_path=str(path))

    header, payload = _unpack(path.read_bytes(), SECTION_MAGIC, str(path))
    entries = header.get("sections")
    if not isinstance(entries, list):
        raise ContainerFormatError("セクション一覧がありません", file_path=str(path))

    sections: Dict[str, np.ndarray] = {}
    expected_total = 0
    for entry in entries:
        try:
            name, dtype, shape = entry["name"], entry["dtype"], tuple(entry["shape"])
            offset, nbytes = int(entry["offset"]), int(entry["nbytes"])
        except (KeyError, TypeError, ValueError) as e:
            raise ContainerFormatError(f"セクション情報が不正です: {entry}", file_path=str(path)) from e
        if dtype not in SECTION_DTYPES:
            raise ContainerFormatError(f"未対応のdtypeです: {dtype}", file_path=str(path))

        itemsize = np.dtype(dtype).itemsize
        if nbytes != int(np.prod(shape, dtype=np.int64)) * itemsize or offset + nbytes > len(payload):
            raise ContainerFormatError(f"セクション {name} のサイズが不正です", file_path=str(path))

        native = np.dtype(dtype).newbyteorder("=")
        sections[name] = np.frombuffer(payload, dtype=dtype, count=nbytes // itemsize, offset=offset) \
            .reshape(shape).astype(native)
        expected_total = max(expected_total, offset + nbytes)

    if expected_total != len(payload):
        raise ContainerFormatError(
            f"ペイロード長がヘッダと一致しません (期待: {expected_total}, 実際: {len(payload)})", file_path=str(path)
        )

    return sections, header.get("meta", {})
