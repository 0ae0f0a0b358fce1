"""
ボコーダー合成モジュール

特徴量行列とf0から、調波正弦波バンクとフィルタ済みノイズの和として波形を合成します。
メルケプストラムから復元したメルバンドエネルギーを、帯域非周期性で調波成分とノイズ成分に配分します。
"""

import logging

import numpy as np
from scipy.fft import idct, rfft
from scipy.optimize import nnls
from scipy.signal import get_window, istft, stft

from .analysis import FrontEnd, front_end
from .wav_io import Waveform
from ..config.models import AnalysisConfig
from ..data.models import FeatureMatrix
from ..utils.errors import ShapeError
from ..utils.logging_utils import log_execution_time

logger = logging.getLogger(__name__)

PEAK_LIMIT = 0.99
KERNEL_OVERSAMPLING = 16
# 調波フィッティングの相対重みの下限（最大バンドエネルギー比）
RELATIVE_WEIGHT_FLOOR = 1e-4
# ノイズ成分の STFT 窓。端で0にならないので istft の窓二乗和が先頭・末尾でも正になる
NOISE_WINDOW = "hamming"


def _window_kernel(fe: FrontEnd) -> np.ndarray:
    """正規化窓スペクトルのパワー |W(Δf)|² を周波数方向にオーバーサンプリングした表"""
    n = KERNEL_OVERSAMPLING * fe.fft_size
    return np.abs(rfft(fe.window, n=n)) ** 2 / fe.window_sum ** 2


def _lookup_kernel(table: np.ndarray, delta_hz: np.ndarray, fe: FrontEnd) -> np.ndarray:
    step = fe.sample_rate / (KERNEL_OVERSAMPLING * fe.fft_size)
    idx = np.rint(np.abs(delta_hz) / step).astype(np.int64)
    return table[np.minimum(idx, table.shape[0] - 1)]


def harmonic_amplitudes(harmonic_energy: np.ndarray, f0: np.ndarray, voiced: np.ndarray,
                        fe: FrontEnd, log_floor: float) -> np.ndarray:
    """
    各フレームの調波振幅を非負最小二乗で推定する

    k 番目の調波（振幅 A_k）がメルバンド m に与えるエネルギーは
    (A_k² / 4)·Σ_bin mel[m, bin]·|W(f_bin - k·f0)|² なので、
    バンドエネルギーに対する相対誤差を最小にする A_k² / 4 ≥ 0 を求めます。

    Args:
        harmonic_energy: T×n_mels の調波成分のバンドエネルギー
        f0: 長さ T のf0
        voiced: 長さ T の有声マスク
        fe: フロントエンド
        log_floor: 対数エネルギーの下限

    Returns:
        T×K_max の振幅行列
    """
    nyquist = fe.sample_rate / 2.0
    if not voiced.any():
        return np.zeros((f0.shape[0], 0))

    k_max = int(np.floor((nyquist - 1e-9) / f0[voiced].min()))
    amplitudes = np.zeros((f0.shape[0], k_max))
    table = _window_kernel(fe)

    for t in np.flatnonzero(voiced):
        n_harmonics = int(np.floor((nyquist - 1e-9) / f0[t]))
        if n_harmonics < 1:
            continue
        harmonics_hz = f0[t] * np.arange(1, n_harmonics + 1)
        kernel = _lookup_kernel(table, fe.bin_hz[:, None] - harmonics_hz[None, :], fe)
        gain = fe.mel_basis @ kernel

        target = harmonic_energy[t]
        weight = 1.0 / (target + RELATIVE_WEIGHT_FLOOR * target.max() + log_floor)
        power, _ = nnls(gain * weight[:, None], target * weight)
        amplitudes[t, :n_harmonics] = 2.0 * np.sqrt(power)

    return amplitudes


def _harmonic_part(amplitudes: np.ndarray, f0: np.ndarray, voiced: np.ndarray, centers: np.ndarray,
                   n_samples: int, sample_rate: int) -> np.ndarray:
    out = np.zeros(n_samples)
    if amplitudes.shape[1] == 0:
        return out

    # 無声フレームのf0は隣接する有声フレームから補間（振幅は0なので位相の連続性のみに使う）
    frame_idx = np.arange(f0.shape[0])
    voiced_idx = np.flatnonzero(voiced)
    f0_filled = np.interp(frame_idx, voiced_idx, f0[voiced_idx])

    n = np.arange(n_samples)
    f0_samples = np.interp(n, centers, f0_filled)
    phase = 2.0 * np.pi * np.cumsum(f0_samples) / sample_rate
    nyquist = sample_rate / 2.0

    for k in range(1, amplitudes.shape[1] + 1):
        track = amplitudes[:, k - 1]
        if not track.any():
            continue
        a = np.interp(n, centers, track)
        a[k * f0_samples >= nyquist] = 0.0
        out += a * np.cos(k * phase)
    return out


def _noise_part(noise_energy: np.ndarray, fe: FrontEnd, config: AnalysisConfig, n_samples: int,
                rng: np.random.Generator) -> np.ndarray:
    width, hop = config.window_length, config.hop_samples
    window = get_window(NOISE_WINDOW, width, fftbins=True)
    white = rng.standard_normal(n_samples)
    _, _, spectrum = stft(white, window=window, nperseg=width, noverlap=width - hop, nfft=config.fft_size,
                          boundary=None, padded=False, detrend=False)

    # 単位分散の白色ノイズを分析窓で見たときの1ビンあたりの期待パワー
    white_power = float(np.sum(fe.window ** 2)) / fe.window_sum ** 2
    area = fe.mel_basis.sum(axis=1)
    density = (noise_energy / np.where(area > 0, area, 1.0)) @ fe.mel_basis

    n_frames = min(spectrum.shape[1], density.shape[0])
    spectrum = spectrum[:, :n_frames] * np.sqrt(density[:n_frames].T / white_power)
    _, noise = istft(spectrum, window=window, nperseg=width, noverlap=width - hop, nfft=config.fft_size,
                     boundary=False)

    out = np.zeros(n_samples)
    length = min(n_samples, noise.shape[0])
    out[:length] = noise[:length]
    return out


@log_execution_time()
def synthesize(features: FeatureMatrix, f0: np.ndarray, config: AnalysisConfig, seed: int = 0) -> Waveform:
    """
    特徴量行列とf0から波形を合成する

    出力長は (T - 1)·hop + window サンプルで、フレーム t は t·hop + window/2 を中心とします。
    有声（f0 > 0 かつ vuv ≥ 0.5）フレームは調波成分とノイズ成分の和、無声フレームはノイズのみです。
    ピークが 0.99 を超える場合のみ 0.99 に縮小します。

    Args:
        features: T×D 特徴量行列 [mcep | bap | vuv]（元のスケール）
        f0: 長さ T のf0（Hz、無声は0）
        config: 分析設定
        seed: ノイズ成分の乱数シード

    Returns:
        合成波形

    Raises:
        ShapeError: 次元数またはフレーム数が一致しない場合
    """
    if features.dim != config.feature_dim:
        raise ShapeError("特徴量の次元数が設定と一致しません", expected=config.feature_dim, actual=features.dim,
                         module="vocoder")
    f0 = np.asarray(f0, dtype=np.float64)
    if f0.shape != (features.n_frames,):
        raise ShapeError("f0の長さがフレーム数と一致しません", expected=(features.n_frames,), actual=f0.shape,
                         module="vocoder")

    fe = front_end(config)
    frames = np.asarray(features.frames, dtype=np.float64)
    n_frames = features.n_frames
    mcep = frames[:, :config.n_mcep]
    bap = np.clip(frames[:, config.n_mcep:config.n_mcep + config.n_bap], 0.0, 1.0)
    vuv = frames[:, -1]

    padded = np.zeros((n_frames, config.n_mels))
    padded[:, :config.n_mcep] = mcep
    energy = np.maximum(np.exp(idct(padded, type=2, norm='ortho', axis=1)) - config.log_floor, 0.0)

    voiced = (f0 > 0) & (vuv >= 0.5)
    aperiodicity = np.where(voiced[:, None], bap[:, fe.mel_band], 1.0)
    noise_energy = energy * aperiodicity
    harmonic_energy = energy * (1.0 - aperiodicity)

    n_samples = (n_frames - 1) * config.hop_samples + config.window_length
    centers = np.arange(n_frames) * config.hop_samples + config.window_length / 2.0

    amplitudes = harmonic_amplitudes(harmonic_energy, f0, voiced, fe, config.log_floor)
    y = _harmonic_part(amplitudes, f0, voiced, centers, n_samples, config.sample_rate)
    y += _noise_part(noise_energy, fe, config, n_samples, np.random.default_rng(seed))

    peak = float(np.max(np.abs(y))) if y.size else 0.0
    if peak > PEAK_LIMIT:
        y *= PEAK_LIMIT / peak

    logger.debug(f"合成完了: {n_frames}フレーム -> {n_samples}サンプル (有声 {voiced.mean():.2f})")
    return Waveform(samples=y, sample_rate=config.sample_rate)
