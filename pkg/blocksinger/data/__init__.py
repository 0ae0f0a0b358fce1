"""特徴量入出力パッケージ"""

from .models import (
    PhoneSegment, PhonemeVocab, SingerTable, FeatureMatrix, NormStats, BlockSequence,
    SongEntry, DatasetManifest
)
from .annotations import (
    parse_phone_annotations, format_phone_annotations, build_phoneme_vocab, frame_align
)
from .container import read_container, write_container
from .normalization import compute_norm_stats, normalize, denormalize
from .blocks import make_blocks, overlap_add
from .synthetic import generate_synthetic_dataset
