"""
学習モジュール

クリティック（識別器）と生成器を交互に更新する敵対的学習ループ、学習ログ、
チェックポイントの保存・読み込みを提供します。

学習データは B 本のストリームで曲を順に流し、各ストリームは S_b ブロックごとに
生成器の状態を（勾配を切って）次の窓へ引き継ぎます。曲の末尾で窓に足りない分は
パディングブロックで埋め、損失からは除外します。
"""

import logging
import shutil
import time
from collections import deque
from pathlib import Path
from typing import Any, Deque, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from tqdm import tqdm

from .condition import assemble_condition
from .evaluation import evaluate_mcd
from .losses import (
    gan_generator_loss, gan_losses, reconstruction_loss, wgan_critic_loss, wgan_generator_loss
)
from .model import GeneratorState, ModelDims, ModelParams, critic_forward, generator_forward, init_params
from ..config.models import AppConfig, CriticConfig, GeneratorConfig
from ..data.blocks import block_count
from ..data.container import read_sections, write_sections
from ..data.dataset import SPLIT_TRAIN, FeatureDataset
from ..data.normalization import normalize_array
from ..nn import ops
from ..nn.convlstm import ConvLSTMState
from ..nn.optim import RMSProp, clip_weights
from ..nn.tape import GradientTape, Tensor, backward
from ..utils.errors import ContainerFormatError, NumericalError, ValidationError
from ..utils.logging_utils import JsonlWriter, format_duration
from ..utils.system_utils import get_memory_usage

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "blocksinger-checkpoint"
CHECKPOINT_VERSION = 1
LATEST_CHECKPOINT = "latest.gsc"


# ---------------------------------------------------------------------------
# 学習ログ
# ---------------------------------------------------------------------------

class TrainLog:
    """
    学習ログ

    ステップごとのクリティック損失・生成器損失・経過時間と、エポックごとの学習データ MCD を
    保持し、パスが指定されていれば JSON Lines として追記します。
    """

    def __init__(self, path: Optional[Union[str, Path]] = None, append: bool = False):
        self.steps: List[Dict[str, Any]] = []
        self.epochs: List[Dict[str, Any]] = []
        self.writer = JsonlWriter(path, append=append) if path is not None else None

    def _emit(self, record: Dict[str, Any]) -> None:
        if self.writer is not None:
            self.writer.write(record)

    def log_step(self, step: int, epoch: int, critic_loss: float, generator_loss: float, wall_time: float) -> None:
        """
        1ステップ分の損失を記録する

        Raises:
            ValidationError: ステップ番号が単調増加でない場合
            NumericalError: 損失が有限でない場合
        """
        if self.steps and step <= self.steps[-1]["step"]:
            raise ValidationError(f"ステップ番号が単調増加ではありません: {step}", field="step", value=step,
                                  module="training")
        if not (np.isfinite(critic_loss) and np.isfinite(generator_loss)):
            raise NumericalError("損失が有限ではありません", step=step)
        record = {"type": "step", "step": step, "epoch": epoch, "critic_loss": float(critic_loss),
                  "generator_loss": float(generator_loss), "wall_time": float(wall_time)}
        self.steps.append(record)
        self._emit(record)

    def log_epoch(self, epoch: int, train_mcd: Optional[float], wall_time: float) -> None:
        record = {"type": "epoch", "epoch": epoch,
                  "train_mcd": None if train_mcd is None else float(train_mcd), "wall_time": float(wall_time)}
        self.epochs.append(record)
        self._emit(record)

    def losses(self) -> List[Tuple[float, float]]:
        return [(r["critic_loss"], r["generator_loss"]) for r in self.steps]

    def mcd_curve(self) -> List[Tuple[int, float]]:
        return [(r["epoch"], r["train_mcd"]) for r in self.epochs if r["train_mcd"] is not None]

    @classmethod
    def read(cls, path: Union[str, Path]) -> "TrainLog":
        log = cls()
        for record in JsonlWriter(path).read_all():
            (log.steps if record.get("type") == "step" else log.epochs).append(record)
        return log


# ---------------------------------------------------------------------------
# チェックポイント
# ---------------------------------------------------------------------------

class Checkpoint(BaseModel):
    """チェックポイントの内容"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    params: ModelParams
    critic_optimizer: Dict[str, np.ndarray] = Field(default_factory=dict)
    generator_optimizer: Dict[str, np.ndarray] = Field(default_factory=dict)
    epoch: int = 0
    step: int = 0
    rng_state: Optional[Dict[str, Any]] = None
    config: Optional[Dict[str, Any]] = None


def save_checkpoint(path: Union[str, Path], params: ModelParams, critic_optimizer: Optional[RMSProp] = None,
                    generator_optimizer: Optional[RMSProp] = None, epoch: int = 0, step: int = 0,
                    rng_state: Optional[Dict[str, Any]] = None, config: Optional[Dict[str, Any]] = None) -> None:
    """
    パラメータとオプティマイザの状態を保存する（元の精度のまま、ビット単位で復元可能）

    Args:
        path: 出力パス（.gsc）
        params: パラメータ
        critic_optimizer: クリティックのオプティマイザ
        generator_optimizer: 生成器のオプティマイザ
        epoch: 完了したエポック数
        step: 完了したステップ数
        rng_state: 学習用乱数生成器の状態
        config: 実行時の設定
    """
    sections: Dict[str, np.ndarray] = {f"param/{n}": v for n, v in params.arrays().items()}
    if critic_optimizer is not None:
        sections.update({f"opt_critic/{n}": v for n, v in critic_optimizer.state_dict().items()})
    if generator_optimizer is not None:
        sections.update({f"opt_gen/{n}": v for n, v in generator_optimizer.state_dict().items()})
    meta = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "generator_config": params.generator_config.model_dump(),
        "critic_config": params.critic_config.model_dump(),
        "dims": params.dims.model_dump(),
        "dtype": str(params.dtype),
        "epoch": epoch,
        "step": step,
        "rng_state": rng_state,
        "config": config,
    }
    write_sections(path, sections, meta)
    logger.debug(f"チェックポイントを保存しました: {path} (epoch={epoch}, step={step})")


def load_checkpoint(path: Union[str, Path], template: Optional[ModelParams] = None) -> Checkpoint:
    """
    チェックポイントを読み込む

    Args:
        path: チェックポイントのパス
        template: 期待するパラメータ構成（指定時は名前と形状が一致しなければエラー）

    Returns:
        チェックポイント

    Raises:
        ContainerFormatError: ファイルが壊れている、またはチェックポイントでない場合
        ShapeError: template と形状が一致しない場合
    """
    sections, meta = read_sections(path)
    if meta.get("format") != CHECKPOINT_FORMAT:
        raise ContainerFormatError("チェックポイントではありません", file_path=str(path))
    try:
        gen_config = GeneratorConfig.model_validate(meta["generator_config"])
        critic_config = CriticConfig.model_validate(meta["critic_config"])
        dims = ModelDims.model_validate(meta["dims"])
        dtype = meta["dtype"]
    except (KeyError, ValueError) as e:
        raise ContainerFormatError(f"チェックポイントのメタ情報が不正です: {e}", file_path=str(path)) from e

    params = template.copy() if template is not None else init_params(0, gen_config, critic_config, dims, dtype)
    params.load_arrays({n[len("param/"):]: v for n, v in sections.items() if n.startswith("param/")})

    return Checkpoint(
        params=params,
        critic_optimizer={n[len("opt_critic/"):]: v for n, v in sections.items() if n.startswith("opt_critic/")},
        generator_optimizer={n[len("opt_gen/"):]: v for n, v in sections.items() if n.startswith("opt_gen/")},
        epoch=int(meta.get("epoch", 0)),
        step=int(meta.get("step", 0)),
        rng_state=meta.get("rng_state"),
        config=meta.get("config"),
    )


# ---------------------------------------------------------------------------
# 学習ループ
# ---------------------------------------------------------------------------

class _TrainSong(BaseModel):
    """正規化済みの学習曲（チャネル優先）"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    song_id: str
    features: np.ndarray      # D×T
    condition: np.ndarray     # (C - N)×T
    pad_column: np.ndarray    # (C - N) 無音フレームの条件

    @property
    def n_frames(self) -> int:
        return int(self.features.shape[1])


class _Stream:
    """1曲を S_b ブロックずつ流すストリーム"""

    def __init__(self, real: np.ndarray, condition: np.ndarray, valid: np.ndarray):
        self.real = real              # n×D×L
        self.condition = condition    # n×(C-N)×L
        self.valid = valid            # n
        self.cursor = 0
        self.states: Optional[Dict[str, Tuple[np.ndarray, np.ndarray]]] = None

    @property
    def finished(self) -> bool:
        return self.cursor >= self.real.shape[0]


class Trainer:
    """
    敵対的学習を行うクラス

    mode が wgan の場合はクリティックを n_critic 回更新するたびに重みをクリップし、
    gan の場合はシグモイド出力の識別器で飽和型 GAN 損失を使います。
    """

    def __init__(self, dataset: FeatureDataset, config: AppConfig, run_dir: Optional[Union[str, Path]] = None,
                 params: Optional[ModelParams] = None, resume_log: bool = False):
        """
        初期化

        Args:
            dataset: 学習データセット
            config: アプリケーション設定
            run_dir: 実行ディレクトリ（None の場合はファイルを書き出さない）
            params: 初期パラメータ（None の場合は seed から初期化）
            resume_log: 既存の log.jsonl に追記するか

        Raises:
            ValidationError: 学習分割に曲がない場合
        """
        self.logger = logging.getLogger(__name__)
        self.dataset = dataset
        self.config = config
        self.train_config = config.train
        self.run_dir = Path(run_dir) if run_dir is not None else None

        self.song_ids = dataset.song_ids(SPLIT_TRAIN)
        if not self.song_ids:
            raise ValidationError("学習分割に曲がありません", field="dataset", module="training")

        dims = ModelDims(n_phonemes=dataset.vocab.size, n_singers=dataset.singers.size,
                         feature_dim=dataset.norm_stats.dim, n_noise=config.generator.n_noise)
        self.params = params if params is not None else init_params(
            self.train_config.seed, config.generator, config.critic, dims, self.train_config.dtype)
        self.dtype = np.dtype(self.train_config.dtype)
        self.layout = self.params.dims.layout

        tc = self.train_config
        self.critic_optimizer = RMSProp(tc.learning_rate, tc.rho, tc.epsilon)
        self.generator_optimizer = RMSProp(tc.learning_rate, tc.rho, tc.epsilon)
        self.rng = np.random.default_rng([tc.seed, 1])
        self.epoch = 0
        self.step = 0

        log_path = self.run_dir / "log.jsonl" if self.run_dir is not None else None
        self.log = TrainLog(log_path, append=resume_log)
        self._songs = [self._prepare_song(song_id) for song_id in self.song_ids]
        self.logger.info(f"学習の準備ができました: {len(self._songs)}曲, モード {tc.mode}, "
                         f"パラメータ {sum(t.value.size for t in self.params.tensors.values())}要素")

    @classmethod
    def from_checkpoint(cls, dataset: FeatureDataset, config: AppConfig, checkpoint_path: Union[str, Path],
                        run_dir: Optional[Union[str, Path]] = None) -> "Trainer":
        """
        チェックポイントから学習を再開する Trainer を作る

        Raises:
            ShapeError: チェックポイントと設定の形状が一致しない場合
        """
        dims = ModelDims(n_phonemes=dataset.vocab.size, n_singers=dataset.singers.size,
                         feature_dim=dataset.norm_stats.dim, n_noise=config.generator.n_noise)
        template = init_params(config.train.seed, config.generator, config.critic, dims, config.train.dtype)
        checkpoint = load_checkpoint(checkpoint_path, template)

        trainer = cls(dataset, config, run_dir=run_dir, params=checkpoint.params, resume_log=True)
        trainer.critic_optimizer.load_state_dict(checkpoint.critic_optimizer)
        trainer.generator_optimizer.load_state_dict(checkpoint.generator_optimizer)
        if checkpoint.rng_state is not None:
            trainer.rng.bit_generator.state = checkpoint.rng_state
        trainer.epoch = checkpoint.epoch
        trainer.step = checkpoint.step
        trainer.logger.info(f"チェックポイントから再開します: {checkpoint_path} (epoch={trainer.epoch})")
        return trainer

    def _prepare_song(self, song_id: str) -> _TrainSong:
        song = self.dataset.song_data(song_id)
        features = normalize_array(song.features.frames, self.dataset.norm_stats).T.astype(self.dtype)
        gen = self.config.generator
        condition = assemble_condition(song.phoneme_ids, song.f0, song.vuv, song.singer_index, self.layout,
                                       f0_ref=gen.f0_ref, f0_octaves=gen.f0_octaves, zero_noise=True)
        silence = assemble_condition(np.array([self.dataset.vocab.silence_id]), np.zeros(1), np.zeros(1),
                                     song.singer_index, self.layout, zero_noise=True)
        n_static = self.layout.n_static_channels
        return _TrainSong(song_id=song_id, features=features, condition=condition[:n_static].astype(self.dtype),
                          pad_column=silence[:n_static, 0].astype(self.dtype))

    def _open_stream(self, song: _TrainSong) -> _Stream:
        """ランダムな位相でブロック列を切り出し、S_b の倍数までパディングしたストリームを作る"""
        block_len, hop = self.config.data.block_len, self.config.data.block_hop
        s_b = self.train_config.blocks_per_segment
        phase = int(self.rng.integers(0, max(1, min(hop, song.n_frames))))
        n_frames = song.n_frames - phase
        n_real = block_count(n_frames, block_len, hop)
        n_total = int(np.ceil(n_real / s_b) * s_b)
        covered = (n_total - 1) * hop + block_len

        features = np.zeros((song.features.shape[0], covered), dtype=self.dtype)
        features[:, :n_frames] = song.features[:, phase:]
        condition = np.repeat(song.pad_column[:, None], covered, axis=1)
        condition[:, :n_frames] = song.condition[:, phase:]

        starts = np.arange(n_total) * hop
        real = np.stack([features[:, s:s + block_len] for s in starts])
        cond = np.stack([condition[:, s:s + block_len] for s in starts])
        return _Stream(real, cond, np.arange(n_total) < n_real)

    def _batch_states(self, streams: Sequence[_Stream]) -> Optional[GeneratorState]:
        if not self.config.generator.carry_state:
            return None
        reference = next((s.states for s in streams if s.states is not None), None)
        if reference is None:
            return None
        states: GeneratorState = {}
        for name, (h_ref, c_ref) in reference.items():
            hs = [s.states[name][0] if s.states is not None else np.zeros_like(h_ref) for s in streams]
            cs = [s.states[name][1] if s.states is not None else np.zeros_like(c_ref) for s in streams]
            states[name] = ConvLSTMState(Tensor(np.stack(hs)), Tensor(np.stack(cs)))
        return states

    def _with_noise(self, static: np.ndarray) -> List[np.ndarray]:
        """S_b×B×(C-N)×L の条件にノイズを付けてブロックごとのリストにする"""
        s_b, batch, _, length = static.shape
        noise = self.rng.standard_normal((s_b, batch, self.layout.n_noise, length)).astype(self.dtype)
        return [np.concatenate([static[s], noise[s]], axis=1) for s in range(s_b)]

    def _check_finite(self, loss: Tensor, phase: str) -> float:
        value = loss.item()
        if not np.isfinite(value):
            raise NumericalError(f"{phase}の損失が有限ではありません: {value}", step=self.step + 1,
                                 details={"epoch": self.epoch + 1, "phase": phase})
        return value

    def train_step(self, streams: Sequence[_Stream]) -> Tuple[float, float]:
        """
        1ステップ（クリティック n_critic 回 + 生成器1回）を実行する

        Args:
            streams: 有効なストリーム

        Returns:
            (最後のクリティック損失, 生成器損失)
        """
        tc = self.train_config
        s_b = tc.blocks_per_segment
        gan = tc.mode == "gan"
        window = [slice(s.cursor, s.cursor + s_b) for s in streams]

        # ブロック優先 (S_b, B, ...) に並べ、有効ブロックだけを損失に使う
        real = np.stack([s.real[w] for s, w in zip(streams, window)], axis=1)
        static = np.stack([s.condition[w] for s, w in zip(streams, window)], axis=1)
        valid = np.stack([s.valid[w] for s, w in zip(streams, window)], axis=1).reshape(-1)
        index = np.flatnonzero(valid)
        real_v = real.reshape((-1,) + real.shape[2:])[index]
        cond_v = static.reshape((-1,) + static.shape[2:])[index]

        init_states = self._batch_states(streams)
        critic_params = self.params.critic()
        generator_params = self.params.generator()

        critic_loss = 0.0
        for _ in range(tc.n_critic):
            fakes, _ = generator_forward(self.params, self._with_noise(static), init_states)
            fake_v = np.concatenate([f.value for f in fakes], axis=0)[index]
            with GradientTape() as tape:
                d_real = critic_forward(self.params, real_v, cond_v, probability=gan)
                d_fake = critic_forward(self.params, fake_v, cond_v, probability=gan)
                loss = gan_losses(d_real, d_fake)[0] if gan else wgan_critic_loss(d_real, d_fake)
            critic_loss = self._check_finite(loss, "クリティック")
            grads = backward(tape, loss, list(critic_params.values()))
            self.critic_optimizer.step(critic_params, dict(zip(critic_params, grads)))
            if not gan:
                clip_weights(critic_params, tc.clip)

        with GradientTape() as tape:
            fakes, final_states = generator_forward(self.params, self._with_noise(static), init_states)
            fake_v = ops.take(ops.concat(fakes, axis=0), index, axis=0)
            d_fake = critic_forward(self.params, fake_v, cond_v, probability=gan)
            loss = gan_generator_loss(d_fake) if gan else wgan_generator_loss(d_fake)
            if tc.recon_weight > 0:
                loss = loss + tc.recon_weight * reconstruction_loss(fake_v, real_v)
        generator_loss = self._check_finite(loss, "生成器")
        grads = backward(tape, loss, list(generator_params.values()))
        self.generator_optimizer.step(generator_params, dict(zip(generator_params, grads)))

        for b, stream in enumerate(streams):
            stream.cursor += s_b
            if self.config.generator.carry_state:
                stream.states = {name: (st.h.value[b].copy(), st.c.value[b].copy())
                                 for name, st in final_states.items()}
        return critic_loss, generator_loss

    def run_epoch(self) -> int:
        """
        1エポック（全学習曲を1回ずつ）学習する

        Returns:
            このエポックで実行したステップ数
        """
        order: Deque[int] = deque(int(i) for i in self.rng.permutation(len(self._songs)))
        streams: List[Optional[_Stream]] = []
        for _ in range(min(self.train_config.batch_size, len(order))):
            streams.append(self._open_stream(self._songs[order.popleft()]))

        steps = 0
        while any(s is not None for s in streams):
            active = [s for s in streams if s is not None]
            start = time.perf_counter()
            critic_loss, generator_loss = self.train_step(active)
            self.step += 1
            steps += 1
            self.log.log_step(self.step, self.epoch + 1, critic_loss, generator_loss, time.perf_counter() - start)

            for k, stream in enumerate(streams):
                if stream is not None and stream.finished:
                    streams[k] = self._open_stream(self._songs[order.popleft()]) if order else None
        self.epoch += 1
        return steps

    def training_mcd(self) -> float:
        """学習曲（先頭 mcd_max_songs 曲）の平均 MCD"""
        report = evaluate_mcd(self.params, self.dataset, self.config.analysis, self.config.data,
                              self.config.inference, split=SPLIT_TRAIN, model_label="train",
                              song_ids=self.song_ids[:self.train_config.mcd_max_songs])
        return report.mean_db

    def save(self, path: Union[str, Path]) -> None:
        save_checkpoint(path, self.params, self.critic_optimizer, self.generator_optimizer, epoch=self.epoch,
                        step=self.step, rng_state=self.rng.bit_generator.state,
                        config=self.config.model_dump(mode="json"))

    def _write_checkpoint(self) -> None:
        ckpt_dir = self.run_dir / "checkpoints"
        path = ckpt_dir / f"epoch_{self.epoch:04d}.gsc"
        self.save(path)
        shutil.copyfile(path, ckpt_dir / LATEST_CHECKPOINT)

        keep = self.train_config.keep_checkpoints
        if keep > 0:
            for old in sorted(ckpt_dir.glob("epoch_*.gsc"))[:-keep]:
                old.unlink()

    def train(self, epochs: Optional[int] = None, progress: bool = True) -> Tuple[ModelParams, TrainLog]:
        """
        指定エポック数まで学習する

        Args:
            epochs: 到達するエポック数（None は設定値）
            progress: 進捗バーを表示するか

        Returns:
            (学習済みパラメータ, 学習ログ)

        Raises:
            NumericalError: 損失が有限でなくなった場合
        """
        tc = self.train_config
        target = epochs if epochs is not None else tc.epochs
        started = time.perf_counter()

        with tqdm(total=max(target - self.epoch, 0), desc="学習", unit="epoch", disable=not progress) as bar:
            while self.epoch < target:
                epoch_start = time.perf_counter()
                steps = self.run_epoch()

                train_mcd = None
                if tc.mcd_every and self.epoch % tc.mcd_every == 0:
                    train_mcd = self.training_mcd()
                self.log.log_epoch(self.epoch, train_mcd, time.perf_counter() - epoch_start)

                if self.run_dir is not None and (self.epoch % tc.checkpoint_every == 0 or self.epoch == target):
                    self._write_checkpoint()

                bar.update(1)
                if train_mcd is not None:
                    bar.set_postfix(mcd=f"{train_mcd:.3f}")
                memory = get_memory_usage()
                self.logger.debug(f"エポック {self.epoch}: {steps}ステップ, MCD {train_mcd}, "
                                  f"RSS {memory.get('rss', 0) / (1024 * 1024):.1f}MB")

        self.logger.info(f"学習が完了しました: {self.epoch}エポック, {self.step}ステップ "
                         f"({format_duration(time.perf_counter() - started)})")
        return self.params, self.log


def train(dataset: FeatureDataset, config: AppConfig, run_dir: Optional[Union[str, Path]] = None,
          progress: bool = True) -> Tuple[ModelParams, TrainLog]:
    """
    データセットでモデルを学習する

    Args:
        dataset: 学習データセット
        config: アプリケーション設定
        run_dir: 実行ディレクトリ
        progress: 進捗バーを表示するか

    Returns:
        (学習済みパラメータ, 学習ログ)
    """
    return Trainer(dataset, config, run_dir=run_dir).train(progress=progress)
