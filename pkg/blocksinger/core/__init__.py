"""モデル・学習・推論・評価の中核パッケージ"""

from .condition import ConditionLayout, SongConditions, assemble_condition
from .model import ModelDims, ModelParams, critic_forward, generator_forward, init_params
from .losses import gan_losses, wgan_critic_loss, wgan_generator_loss
from .trainer import Trainer, TrainLog, load_checkpoint, save_checkpoint, train
from .inference import synthesize_features, synthesize_song, voice_change
from .evaluation import McdReport, compare_reports, evaluate_mcd, mcd, wasserstein1_empirical
from .w1_probe import critic_w1_probe, run_w1_sweep
from .selfcheck import run_gradcheck_suite
from .listening import ListeningTestExporter, export_listening_test

__all__ = [
    'ConditionLayout', 'SongConditions', 'assemble_condition',
    'ModelDims', 'ModelParams', 'critic_forward', 'generator_forward', 'init_params',
    'gan_losses', 'wgan_critic_loss', 'wgan_generator_loss',
    'Trainer', 'TrainLog', 'load_checkpoint', 'save_checkpoint', 'train',
    'synthesize_features', 'synthesize_song', 'voice_change',
    'McdReport', 'compare_reports', 'evaluate_mcd', 'mcd', 'wasserstein1_empirical',
    'critic_w1_probe', 'run_w1_sweep',
    'run_gradcheck_suite',
    'ListeningTestExporter', 'export_listening_test',
]
