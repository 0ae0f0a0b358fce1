"""
音素アノテーション処理モジュール

このモジュールでは、`start end label` 形式の音素アノテーションの解析と書き出し、
音素語彙の構築、フレーム単位の音素ID列への変換を行います。
"""

import logging
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Union

import numpy as np
from pydantic import ValidationError as PydanticValidationError

from .models import PhoneSegment, PhonemeVocab
from ..utils.errors import AnnotationParseError, ValidationError

logger = logging.getLogger(__name__)


def parse_phone_annotations(text: str, file_path: Optional[str] = None) -> List[PhoneSegment]:
    """
    アノテーションテキストを解析して音素区間のリストを返す

    Args:
        text: アノテーションファイルの内容
        file_path: エラーメッセージ用のファイルパス（オプション）

    Returns:
        時刻順に並んだ音素区間のリスト

    Raises:
        AnnotationParseError: フィールド数や数値形式が不正な行がある場合
        ValidationError: 区間の前後関係が不正な場合
    """
    segments: List[PhoneSegment] = []

    for line_number, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue

        fields = line.split()
        if len(fields) != 3:
            raise AnnotationParseError(
                f"フィールド数が3ではありません ({len(fields)})", line_number=line_number, file_path=file_path
            )

        try:
            start, end = float(fields[0]), float(fields[1])
        except ValueError:
            raise AnnotationParseError(
                f"時刻が数値ではありません: {fields[0]!r} {fields[1]!r}", line_number=line_number, file_path=file_path
            )
        if not (np.isfinite(start) and np.isfinite(end)):
            raise AnnotationParseError("時刻が有限値ではありません", line_number=line_number, file_path=file_path)

        try:
            segment = PhoneSegment(start=start, end=end, label=fields[2])
        except PydanticValidationError as e:
            raise ValidationError(
                f"{line_number}行目: {e.errors()[0].get('msg')}",
                field="segment", value=line, module="feature-io"
            ) from e

        if segments and segment.start < segments[-1].end:
            raise ValidationError(
                f"{line_number}行目: 区間が前の区間と重なっているか順序が逆です",
                field="segment", value=line, module="feature-io"
            )
        segments.append(segment)

    return segments


def format_phone_annotations(segments: Sequence[PhoneSegment]) -> str:
    """
    音素区間のリストをアノテーションテキストに変換する

    Args:
        segments: 音素区間のリスト

    Returns:
        1行1区間の `start end label` 形式テキスト
    """
    return "".join(f"{s.start:.6f} {s.end:.6f} {s.label}\n" for s in segments)


def read_phone_annotations(path: Union[str, Path]) -> List[PhoneSegment]:
    path = Path(path)
    return parse_phone_annotations(path.read_text(encoding='utf-8'), file_path=str(path))


def write_phone_annotations(segments: Sequence[PhoneSegment], path: Union[str, Path]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(format_phone_annotations(segments), encoding='utf-8')


def build_phoneme_vocab(all_segments: Iterable[Sequence[PhoneSegment]], silence_label: str = "sil") -> PhonemeVocab:
    """
    全録音の音素区間から音素語彙を構築する

    入力の順序に依存せず、同じラベル集合からは常に同じ語彙が得られます。

    Args:
        all_segments: 録音ごとの音素区間リスト
        silence_label: 無音ラベル（常に語彙に追加される）

    Returns:
        音素語彙

    Raises:
        ValidationError: 区間が1つもない場合
    """
    labels = {segment.label for segments in all_segments for segment in segments}
    if not labels:
        raise ValidationError("音素区間が1つもありません", field="segments", module="feature-io")

    labels.add(silence_label)
    vocab = PhonemeVocab(labels=sorted(labels), silence_label=silence_label)
    logger.debug(f"音素語彙を構築しました: {vocab.size}種類")
    return vocab


def frame_align(segments: Sequence[PhoneSegment], hop: float, n_frames: int, vocab: PhonemeVocab) -> np.ndarray:
    """
    音素区間をフレーム単位の音素ID列に変換する

    フレーム t には時刻 (t + 0.5)·hop を含む区間の音素を割り当てます。
    区間は半開区間なので、境界がちょうどフレーム中心にある場合は後ろの区間が選ばれます。
    どの区間にも含まれないフレームは無音になります。

    Args:
        segments: 検証済みの音素区間リスト
        hop: フレームシフト（秒）
        n_frames: フレーム数
        vocab: 音素語彙

    Returns:
        長さ n_frames の音素ID配列（int64）

    Raises:
        ValidationError: hopが正でない場合、または語彙にない音素が含まれる場合
    """
    if hop <= 0:
        raise ValidationError("hopは正の数でなければなりません", field="hop", value=hop, module="feature-io")

    ids = np.full(n_frames, vocab.silence_id, dtype=np.int64)
    if not segments or n_frames <= 0:
        return ids

    index = vocab.index
    try:
        segment_ids = np.array([index[s.label] for s in segments], dtype=np.int64)
    except KeyError as e:
        raise ValidationError(f"語彙にない音素です: {e.args[0]}", field="label", module="feature-io") from e

    starts = np.array([s.start for s in segments])
    ends = np.array([s.end for s in segments])
    centers = (np.arange(n_frames) + 0.5) * hop

    # 中心以下で最後に始まる区間を探す
    k = np.searchsorted(starts, centers, side='right') - 1
    inside = (k >= 0) & (centers < ends[np.clip(k, 0, None)])
    ids[inside] = segment_ids[k[inside]]
    return ids
