"""
テスト共通のフィクスチャ
"""

import time
from pathlib import Path
from unittest.mock import patch

import numpy as np
import pytest

from blocksinger.config.models import (
    AnalysisConfig, AppConfig, CriticConfig, DataConfig, GeneratorConfig, InferenceConfig, TrainConfig
)
from blocksinger.core.model import ModelDims, init_params
from blocksinger.core.trainer import Trainer
from blocksinger.data.dataset import write_synthetic_dataset
from blocksinger.data.synthetic import generate_synthetic_dataset
from blocksinger.nn.optim import clip_weights

FIXTURES_DIR = Path(__file__).parent / "fixtures"

# 学習の確認に使う小さなモデル（2歌手・5音素・128フレーム×200ブロック、2+2層、wgan）
LEARNING_EPOCHS = 300
LEARNING_MCD_EVERY = 5


@pytest.fixture
def fixtures_dir():
    """固定データのディレクトリ"""
    return FIXTURES_DIR


@pytest.fixture
def rng():
    """テスト用の乱数生成器"""
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_analysis_config():
    """メルケプストラム4次・非周期性1帯域の小さな分析設定"""
    return AnalysisConfig(n_mels=8, n_mcep=4, n_bap=1)


@pytest.fixture
def tiny_config(tiny_analysis_config):
    """2層・ブロック長16の小さなアプリケーション設定"""
    return AppConfig(
        analysis=tiny_analysis_config,
        data=DataConfig(block_len=16, block_hop=8, held_out_fraction=0.25, split_seed=0),
        generator=GeneratorConfig(encoder_channels=[4, 4], decoder_channels=[4, 4], n_noise=2),
        critic=CriticConfig(encoder_channels=[4, 4]),
        train=TrainConfig(n_critic=2, batch_size=2, blocks_per_segment=2, epochs=1, learning_rate=1e-3,
                          mcd_every=0, seed=0),
        inference=InferenceConfig(seed=0),
    )


@pytest.fixture
def synthetic_data(tiny_analysis_config):
    """歌手4人（M/F 交互）・8曲の合成データセット（メモリ上）"""
    return generate_synthetic_dataset(seed=0, n_singers=4, n_phonemes=4, n_songs=8, frames_per_song=40,
                                      n_mcep=tiny_analysis_config.n_mcep, n_bap=tiny_analysis_config.n_bap)


@pytest.fixture
def synthetic_dataset(tmp_path, synthetic_data, tiny_config):
    """tmp_path に書き出した合成データセット"""
    return write_synthetic_dataset(tmp_path / "data", synthetic_data, tiny_config.data)


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="時間のかかるテストも実行する")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="--runslow を指定した場合のみ実行")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def tiny_params(synthetic_dataset, tiny_config):
    """合成データセットの次元に合わせて初期化した未学習のパラメータ"""
    dims = ModelDims(n_phonemes=synthetic_dataset.vocab.size, n_singers=synthetic_dataset.singers.size,
                     feature_dim=synthetic_dataset.norm_stats.dim, n_noise=tiny_config.generator.n_noise)
    return init_params(0, tiny_config.generator, tiny_config.critic, dims, dtype="float64")


@pytest.fixture(scope="session")
def trained_small_model(tmp_path_factory):
    """
    学習データ MCD が最初のエポックの半分を下回るまで（最大300エポック）学習したモデル

    クリティックの重みクリップを呼び出しごとに検査し、その結果も返します。
    MCD はエポック1と以降 LEARNING_MCD_EVERY エポックごとに計算します。
    """
    synthetic = generate_synthetic_dataset(seed=0, n_singers=2, n_phonemes=5, n_songs=10, frames_per_song=1344)
    config = AppConfig(
        data=DataConfig(block_len=128, block_hop=64, held_out_fraction=0.0),
        generator=GeneratorConfig(encoder_channels=[16, 32], decoder_channels=[32, 16]),
        critic=CriticConfig(encoder_channels=[16, 32]),
        train=TrainConfig(mode="wgan", learning_rate=5e-5, epochs=LEARNING_EPOCHS, batch_size=2,
                          blocks_per_segment=2, mcd_max_songs=4, seed=0),
    )
    dataset = write_synthetic_dataset(tmp_path_factory.mktemp("learning") / "data", synthetic, config.data)
    trainer = Trainer(dataset, config)

    clip_checks = []

    def checked_clip(params, clip):
        clip_weights(params, clip)
        clip_checks.append(max(float(np.max(np.abs(t.value))) for t in params.values()) <= clip)

    curve = []
    started = time.perf_counter()
    with patch("blocksinger.core.trainer.clip_weights", side_effect=checked_clip):
        while trainer.epoch < config.train.epochs:
            trainer.run_epoch()
            if trainer.epoch == 1 or trainer.epoch % LEARNING_MCD_EVERY == 0:
                curve.append((trainer.epoch, trainer.training_mcd()))
                if curve[-1][1] < 0.5 * curve[0][1]:
                    break
    return {"trainer": trainer, "dataset": dataset, "config": config, "mcd_curve": curve,
            "clip_checks": clip_checks, "elapsed": time.perf_counter() - started}
