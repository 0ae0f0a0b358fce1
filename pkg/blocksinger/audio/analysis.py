"""
ボコーダー分析モジュール

波形から、フレームごとのメルケプストラム（対数メルバンドエネルギーの正規直交 DCT-II）、
帯域非周期性成分、有声フラグ、および条件入力として使う f0 を計算します。
"""

import logging
from functools import lru_cache
from typing import Tuple

import librosa
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.fft import dct, irfft, rfft
from scipy.signal import get_window

from .wav_io import Waveform
from ..config.models import AnalysisConfig
from ..data.models import FeatureMatrix
from ..utils.errors import ValidationError

logger = logging.getLogger(__name__)

# f0 候補として採用するピークの最大ピークに対する比
PEAK_RATIO = 0.85
HARMONIC_HALF_WIDTH_BINS = 2
AP_EPSILON = 1e-12
AP_MIN = 1e-3
CHUNK_FRAMES = 1024


class FrontEnd:
    """分析・合成で共有する窓関数・メルフィルタバンク・帯域割り当て"""

    def __init__(self, sample_rate: int, window_length: int, fft_size: int, n_mels: int,
                 n_bap: int, bap_min_hz: float):
        self.sample_rate = sample_rate
        self.window_length = window_length
        self.fft_size = fft_size
        self.window = get_window('hann', window_length, fftbins=True)
        self.window_sum = float(self.window.sum())
        self.mel_basis = librosa.filters.mel(sr=sample_rate, n_fft=fft_size, n_mels=n_mels, fmin=0.0,
                                             fmax=sample_rate / 2.0, htk=False, norm=None, dtype=np.float64)
        self.bin_hz = np.arange(fft_size // 2 + 1) * sample_rate / fft_size

        edges = np.geomspace(bap_min_hz, sample_rate / 2.0, n_bap + 1)
        edges[0] = 0.0
        self.band_edges = edges
        self.bin_band = np.clip(np.searchsorted(edges[1:-1], self.bin_hz, side='right'), 0, n_bap - 1)
        centers = librosa.mel_frequencies(n_mels=n_mels + 2, fmin=0.0, fmax=sample_rate / 2.0, htk=False)[1:-1]
        self.mel_band = np.clip(np.searchsorted(edges[1:-1], centers, side='right'), 0, n_bap - 1)


@lru_cache(maxsize=8)
def _front_end(sample_rate: int, window_length: int, fft_size: int, n_mels: int, n_bap: int,
               bap_min_hz: float) -> FrontEnd:
    return FrontEnd(sample_rate, window_length, fft_size, n_mels, n_bap, bap_min_hz)


def front_end(config: AnalysisConfig) -> FrontEnd:
    return _front_end(config.sample_rate, config.window_length, config.fft_size, config.n_mels,
                      config.n_bap, config.bap_min_hz)


def frame_count(n_samples: int, config: AnalysisConfig) -> int:
    """分析フレーム数 T = floor((len - window) / hop) + 1"""
    return (n_samples - config.window_length) // config.hop_samples + 1


def estimate_f0(frames: np.ndarray, config: AnalysisConfig) -> np.ndarray:
    """
    正規化自己相関で各フレームのf0を推定する

    ゼロラグからの最初のゼロ交差より後の局所最大のうち、最大値の PEAK_RATIO 倍以上で
    最も小さいラグを周期とし、放物線補間で精度を上げます。
    ピーク値が有声判定閾値未満、またはフレームパワーが無音閾値未満のフレームは 0 です。

    Args:
        frames: T×W のフレーム行列
        config: 分析設定

    Returns:
        長さ T のf0配列（Hz、無声は0）
    """
    sr = config.sample_rate
    n_frames, width = frames.shape
    lag_min = max(int(np.floor(sr / config.f0_max)), 2)
    lag_max = min(int(np.ceil(sr / config.f0_min)), width - 2)

    y = frames - frames.mean(axis=1, keepdims=True)
    power_db = 10.0 * np.log10(np.mean(frames ** 2, axis=1) + 1e-20)

    spectrum = rfft(y, n=2 * width, axis=1)
    r = irfft(np.abs(spectrum) ** 2, n=2 * width, axis=1)[:, :lag_max + 2]

    # 重なり部分のエネルギーで正規化
    cs = np.concatenate([np.zeros((n_frames, 1)), np.cumsum(y ** 2, axis=1)], axis=1)
    lags = np.arange(lag_max + 2)
    head = cs[:, width - lags]
    tail = cs[:, width:width + 1] - cs[:, lags]
    denom = np.sqrt(head * tail)
    r_norm = np.where(denom > 0, r / np.where(denom > 0, denom, 1.0), 0.0)

    crossing = np.where((r_norm <= 0).any(axis=1), np.argmax(r_norm <= 0, axis=1), lag_max + 2)
    start = np.maximum(crossing, lag_min)

    centre = r_norm[:, 1:-1]
    is_peak = (centre > r_norm[:, :-2]) & (centre >= r_norm[:, 2:])
    lag_idx = np.arange(1, lag_max + 1)
    is_peak &= (lag_idx[None, :] >= start[:, None]) & (lag_idx[None, :] <= lag_max)

    peak_values = np.where(is_peak, centre, -np.inf)
    best = peak_values.max(axis=1)
    candidate = is_peak & (centre >= PEAK_RATIO * best[:, None])
    chosen = lag_idx[np.argmax(candidate, axis=1)]

    voiced = np.isfinite(best) & (best >= config.voicing_threshold) & (power_db >= config.silence_db)

    rows = np.arange(n_frames)
    a, b, c = r_norm[rows, chosen - 1], r_norm[rows, chosen], r_norm[rows, chosen + 1]
    curvature = a - 2.0 * b + c
    delta = np.where(np.abs(curvature) > 1e-12, 0.5 * (a - c) / np.where(np.abs(curvature) > 1e-12, curvature, 1.0), 0.0)
    period = chosen + np.clip(delta, -0.5, 0.5)

    f0 = np.where(voiced, sr / period, 0.0)
    f0[(f0 < config.f0_min) | (f0 > config.f0_max)] = 0.0
    return f0


def band_aperiodicity(power: np.ndarray, f0: np.ndarray, fe: FrontEnd, n_bap: int) -> np.ndarray:
    """
    帯域ごとの非周期性成分（調波マスク外のエネルギー / 全エネルギー）を計算する

    Args:
        power: T×K のパワースペクトル
        f0: 長さ T のf0（無声は0）
        fe: フロントエンド
        n_bap: 帯域数

    Returns:
        T×n_bap の非周期性（[1e-3, 1]、無声フレームは1）
    """
    bin_width = fe.sample_rate / fe.fft_size
    safe_f0 = np.where(f0 > 0, f0, 1.0)
    harmonic = np.rint(fe.bin_hz[None, :] / safe_f0[:, None])
    near = np.abs(fe.bin_hz[None, :] - harmonic * safe_f0[:, None]) <= HARMONIC_HALF_WIDTH_BINS * bin_width
    mask = (harmonic >= 1) & near & (f0[:, None] > 0)

    noise_power = np.where(mask, 0.0, power)
    ap = np.ones((power.shape[0], n_bap))
    for band in range(n_bap):
        in_band = fe.bin_band == band
        total = power[:, in_band].sum(axis=1)
        noise = noise_power[:, in_band].sum(axis=1)
        ap[:, band] = (noise + AP_EPSILON) / (total + AP_EPSILON)

    ap = np.clip(ap, AP_MIN, 1.0)
    ap[f0 <= 0] = 1.0
    return ap


def log_mel_energy(frames: np.ndarray, config: AnalysisConfig) -> Tuple[np.ndarray, np.ndarray]:
    """
    フレーム行列からパワースペクトルと対数メルバンドエネルギーを計算する

    Args:
        frames: T×W のフレーム行列
        config: 分析設定

    Returns:
        (T×K パワースペクトル, T×n_mels 対数メルエネルギー)
    """
    fe = front_end(config)
    spectrum = rfft(frames * fe.window, n=config.fft_size, axis=1) / fe.window_sum
    power = np.abs(spectrum) ** 2
    return power, np.log(power @ fe.mel_basis.T + config.log_floor)


def _analyze_chunk(frames: np.ndarray, config: AnalysisConfig, fe: FrontEnd):
    power, log_mel = log_mel_energy(frames, config)
    mcep = dct(log_mel, type=2, norm='ortho', axis=1)[:, :config.n_mcep]
    f0 = estimate_f0(frames, config)
    bap = band_aperiodicity(power, f0, fe, config.n_bap)
    return mcep, bap, f0


def analyze(waveform: Waveform, config: AnalysisConfig, song_id: str = "",
            singer_id: str = "") -> Tuple[FeatureMatrix, np.ndarray]:
    """
    波形を分析して特徴量行列とf0を返す

    Args:
        waveform: 入力波形（config.sample_rate と同じ周波数）
        config: 分析設定
        song_id: 曲ID
        singer_id: 歌手ID

    Returns:
        (T×D 特徴量行列 [mcep | bap | vuv], 長さ T のf0)

    Raises:
        ValidationError: 波形が1窓より短い、またはサンプリング周波数が一致しない場合
    """
    if waveform.sample_rate != config.sample_rate:
        raise ValidationError(
            f"サンプリング周波数が設定と一致しません ({waveform.sample_rate} != {config.sample_rate})",
            field="sample_rate", value=waveform.sample_rate, module="vocoder"
        )
    x = waveform.samples
    if x.shape[0] < config.window_length:
        raise ValidationError(
            f"波形が短すぎます ({x.shape[0]} < {config.window_length}サンプル)",
            field="samples", module="vocoder"
        )

    fe = front_end(config)
    n_frames = frame_count(x.shape[0], config)
    frames = sliding_window_view(x, config.window_length)[::config.hop_samples][:n_frames]

    parts = [_analyze_chunk(frames[i:i + CHUNK_FRAMES], config, fe) for i in range(0, n_frames, CHUNK_FRAMES)]
    mcep = np.concatenate([p[0] for p in parts], axis=0)
    bap = np.concatenate([p[1] for p in parts], axis=0)
    f0 = np.concatenate([p[2] for p in parts], axis=0)
    vuv = (f0 > 0).astype(np.float64)

    features = FeatureMatrix(
        frames=np.concatenate([mcep, bap, vuv[:, None]], axis=1),
        hop_s=config.frame_hop,
        dim_labels=config.dim_labels(),
        song_id=song_id,
        singer_id=singer_id,
    )
    logger.debug(f"分析完了: {song_id or '(無名)'} {n_frames}フレーム, 有声率 {vuv.mean():.2f}")
    return features, f0


def center_frames(waveform: Waveform, config: AnalysisConfig) -> Waveform:
    """
    フレーム t の中心が時刻 (t + 0.5)·hop に来るよう、先頭に (window - hop) / 2 サンプルの無音を足す

    音素アノテーションのフレーム割り当てと分析フレームの時刻を揃えるために使います。

    Args:
        waveform: 入力波形
        config: 分析設定

    Returns:
        先頭を無音で延長した波形
    """
    pad = (config.window_length - config.hop_samples) // 2
    return Waveform(samples=np.concatenate([np.zeros(pad), waveform.samples]), sample_rate=waveform.sample_rate)
