"""
生成器・クリティックのモデル定義モジュール

生成器は ConvLSTM のエンコーダ・デコーダ（U-Net 型のスキップ結合付き）で、
各層の状態をブロックからブロックへ引き継ぎます。
クリティックは生成器と同じ形のエンコーダ（状態なし）に時間方向の平均と線形ヘッドを付けたものです。
"""

import logging
from typing import Dict, Iterator, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .condition import ConditionLayout
from ..config.models import CriticConfig, GeneratorConfig
from ..nn import ops
from ..nn.convlstm import ConvLSTMLayer, ConvLSTMState, convlstm_cell, glorot_bound, init_convlstm
from ..nn.tape import Tensor
from ..utils.errors import ShapeError

logger = logging.getLogger(__name__)

GEN_PREFIX = "gen."
CRITIC_PREFIX = "critic."

GeneratorState = Dict[str, ConvLSTMState]
ArrayLike = Union[Tensor, np.ndarray]


class ModelDims(BaseModel):
    """データセットから決まるモデルの入出力次元"""
    model_config = ConfigDict(frozen=True)

    n_phonemes: int = Field(..., ge=1, description="音素数 P")
    n_singers: int = Field(..., ge=1, description="歌手数 S")
    feature_dim: int = Field(..., ge=1, description="出力特徴量の次元数 D_out")
    n_noise: int = Field(4, ge=0, description="ノイズチャネル数 N")

    @property
    def layout(self) -> ConditionLayout:
        return ConditionLayout(n_phonemes=self.n_phonemes, n_singers=self.n_singers, n_noise=self.n_noise)


def generator_layers(config: GeneratorConfig, dims: ModelDims) -> Tuple[List[ConvLSTMLayer], List[ConvLSTMLayer]]:
    """
    生成器のエンコーダ層・デコーダ層の構成を返す

    デコーダ j (≥2) の入力は直前のデコーダ出力とエンコーダ n+1-j の出力のチャネル連結です。
    """
    enc_ch, dec_ch = config.encoder_channels, config.decoder_channels
    n = len(enc_ch)
    encoders = []
    for l in range(n):
        encoders.append(ConvLSTMLayer(
            name=f"{GEN_PREFIX}enc{l + 1}",
            in_channels=dims.layout.n_channels if l == 0 else enc_ch[l - 1],
            hidden_channels=enc_ch[l], kernel_size=config.kernel_size,
            state_kernel_size=config.state_kernel_size, stride=config.stride,
        ))
    decoders = []
    for j in range(n):
        in_ch = enc_ch[-1] if j == 0 else dec_ch[j - 1] + enc_ch[n - 1 - j]
        decoders.append(ConvLSTMLayer(
            name=f"{GEN_PREFIX}dec{j + 1}", in_channels=in_ch, hidden_channels=dec_ch[j],
            kernel_size=config.kernel_size, state_kernel_size=config.state_kernel_size,
            stride=config.stride, transposed=True,
        ))
    return encoders, decoders


def critic_layers(config: CriticConfig, dims: ModelDims) -> List[ConvLSTMLayer]:
    """クリティックのエンコーダ層（状態側の重みを持たない）"""
    in_ch = dims.feature_dim + dims.layout.n_static_channels
    layers = []
    for l, ch in enumerate(config.encoder_channels):
        layers.append(ConvLSTMLayer(
            name=f"{CRITIC_PREFIX}enc{l + 1}", in_channels=in_ch if l == 0 else config.encoder_channels[l - 1],
            hidden_channels=ch, kernel_size=config.kernel_size, stride=config.stride, recurrent=False,
        ))
    return layers


class ModelParams:
    """
    生成器とクリティックの全パラメータ

    パラメータはレイヤー名付きの Tensor として保持され、構成と次元も一緒に持ちます。
    """

    def __init__(self, tensors: Dict[str, Tensor], bounds: Dict[str, float], generator_config: GeneratorConfig,
                 critic_config: CriticConfig, dims: ModelDims):
        self.tensors = tensors
        self.bounds = bounds
        self.generator_config = generator_config
        self.critic_config = critic_config
        self.dims = dims
        self.encoders, self.decoders = generator_layers(generator_config, dims)
        self.critic_encoders = critic_layers(critic_config, dims)

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self.tensors)

    def __len__(self) -> int:
        return len(self.tensors)

    @property
    def dtype(self):
        return next(iter(self.tensors.values())).dtype

    def generator(self) -> Dict[str, Tensor]:
        return {n: t for n, t in self.tensors.items() if n.startswith(GEN_PREFIX)}

    def critic(self) -> Dict[str, Tensor]:
        return {n: t for n, t in self.tensors.items() if n.startswith(CRITIC_PREFIX)}

    def arrays(self) -> Dict[str, np.ndarray]:
        return {n: t.value for n, t in self.tensors.items()}

    def shapes(self) -> Dict[str, Tuple[int, ...]]:
        return {n: t.shape for n, t in self.tensors.items()}

    def copy(self) -> "ModelParams":
        tensors = {n: Tensor(t.value.copy(), requires_grad=True, name=n) for n, t in self.tensors.items()}
        return ModelParams(tensors, dict(self.bounds), self.generator_config, self.critic_config, self.dims)

    def astype(self, dtype) -> "ModelParams":
        tensors = {n: Tensor(t.value.astype(dtype), requires_grad=True, name=n) for n, t in self.tensors.items()}
        return ModelParams(tensors, dict(self.bounds), self.generator_config, self.critic_config, self.dims)

    def load_arrays(self, arrays: Mapping[str, np.ndarray]) -> None:
        """
        配列でパラメータを置き換える

        Raises:
            ShapeError: 名前の集合または形状が一致しない場合
        """
        missing = set(self.tensors) - set(arrays)
        unknown = set(arrays) - set(self.tensors)
        if missing or unknown:
            raise ShapeError(f"パラメータ名が一致しません (不足: {sorted(missing)[:3]}, 余分: {sorted(unknown)[:3]})",
                             module="model")
        for name, tensor in self.tensors.items():
            value = np.asarray(arrays[name])
            if value.shape != tensor.shape:
                raise ShapeError(f"パラメータ {name} の形状が一致しません", expected=tensor.shape, actual=value.shape,
                                 module="model")
            tensor.value = value.astype(tensor.dtype, copy=True)


def init_params(seed: int, generator_config: GeneratorConfig, critic_config: CriticConfig, dims: ModelDims,
                dtype="float32") -> ModelParams:
    """
    パラメータを決定的に初期化する

    Args:
        seed: 乱数シード
        generator_config: 生成器の構成
        critic_config: クリティックの構成
        dims: 入出力次元
        dtype: パラメータの精度

    Returns:
        初期化されたパラメータ
    """
    dtype = np.dtype(dtype)
    rng = np.random.default_rng(seed)
    values: Dict[str, np.ndarray] = {}
    bounds: Dict[str, float] = {}

    encoders, decoders = generator_layers(generator_config, dims)
    for layer in encoders + decoders:
        v, b = init_convlstm(layer, rng, dtype)
        values.update(v)
        bounds.update(b)

    head_shape = (dims.feature_dim, generator_config.decoder_channels[-1], 1)
    bounds[f"{GEN_PREFIX}head.w"] = glorot_bound(head_shape)
    values[f"{GEN_PREFIX}head.w"] = rng.uniform(-bounds[f"{GEN_PREFIX}head.w"], bounds[f"{GEN_PREFIX}head.w"],
                                                size=head_shape).astype(dtype)
    values[f"{GEN_PREFIX}head.b"] = np.zeros(dims.feature_dim, dtype=dtype)

    for layer in critic_layers(critic_config, dims):
        v, b = init_convlstm(layer, rng, dtype)
        values.update(v)
        bounds.update(b)

    linear_shape = (critic_config.encoder_channels[-1], 1)
    bounds[f"{CRITIC_PREFIX}head.w"] = glorot_bound(linear_shape)
    values[f"{CRITIC_PREFIX}head.w"] = rng.uniform(-bounds[f"{CRITIC_PREFIX}head.w"],
                                                   bounds[f"{CRITIC_PREFIX}head.w"], size=linear_shape).astype(dtype)
    values[f"{CRITIC_PREFIX}head.b"] = np.zeros(1, dtype=dtype)

    tensors = {n: Tensor(v, requires_grad=True, name=n) for n, v in values.items()}
    logger.debug(f"パラメータを初期化しました: {len(tensors)}個, {sum(v.size for v in values.values())}要素 (seed={seed})")
    return ModelParams(tensors, bounds, generator_config, critic_config, dims)


def _as_batch(x: ArrayLike, dtype) -> Tensor:
    if isinstance(x, Tensor):
        return x
    x = np.asarray(x, dtype=dtype)
    return Tensor(x[None] if x.ndim == 2 else x)


def generator_step(params: ModelParams, condition: ArrayLike,
                   states: Optional[GeneratorState] = None) -> Tuple[Tensor, GeneratorState]:
    """
    生成器で1ブロックを生成する

    Args:
        params: パラメータ
        condition: (B, C, T_b) または (C, T_b) の条件ブロック
        states: 直前のブロックの各層の状態（None はゼロ状態）

    Returns:
        ((B, D_out, T_b) の出力, 各層の新しい状態)

    Raises:
        ShapeError: 条件のチャネル数またはブロック長が構成と一致しない場合
    """
    x = _as_batch(condition, params.dtype)
    layout = params.dims.layout
    if x.ndim != 3 or x.shape[1] != layout.n_channels:
        raise ShapeError("条件のチャネル数が一致しません", expected=layout.n_channels, actual=x.shape, module="model")
    factor = params.generator_config.stride ** params.generator_config.n_layers
    if x.shape[2] % factor:
        raise ShapeError(f"ブロック長は {factor} の倍数でなければなりません", expected=factor, actual=x.shape[2],
                         module="model")

    states = states or {}
    new_states: GeneratorState = {}
    skips: List[Tensor] = []
    lengths: List[int] = [x.shape[2]]
    h = x
    for layer in params.encoders:
        st = convlstm_cell(h, states.get(layer.name), params.tensors, layer)
        new_states[layer.name] = st
        h = st.h
        skips.append(h)
        lengths.append(h.shape[2])

    n = len(params.decoders)
    for j, layer in enumerate(params.decoders):
        inp = h if j == 0 else ops.concat([h, skips[n - 1 - j]], axis=1)
        st = convlstm_cell(inp, states.get(layer.name), params.tensors, layer, target_length=lengths[n - 1 - j])
        new_states[layer.name] = st
        h = st.h

    out = ops.conv1d(h, params[f"{GEN_PREFIX}head.w"])
    out = ops.tanh(ops.bias_add(out, params[f"{GEN_PREFIX}head.b"]))
    return out, new_states


def generator_forward(params: ModelParams, conditions: Sequence[ArrayLike],
                      initial_states: Optional[GeneratorState] = None,
                      carry_state: Optional[bool] = None) -> Tuple[List[Tensor], GeneratorState]:
    """
    1曲分（または1セグメント分）の条件ブロック列を順に生成する

    各層の ConvLSTM 状態はブロック n からブロック n+1 へ引き継がれます。
    carry_state が偽の場合はブロックごとに状態をゼロに戻します。

    Args:
        params: パラメータ
        conditions: 順序付きの条件ブロック
        initial_states: 最初のブロックの状態（None はゼロ状態）
        carry_state: 状態を引き継ぐか（None は構成に従う）

    Returns:
        (ブロックごとの出力, 最後のブロックの状態)
    """
    carry = params.generator_config.carry_state if carry_state is None else carry_state
    states = initial_states
    outputs = []
    for cond in conditions:
        out, new_states = generator_step(params, cond, states if carry else None)
        outputs.append(out)
        states = new_states
    return outputs, states


def critic_forward(params: ModelParams, features: ArrayLike, condition: ArrayLike,
                   probability: bool = False) -> Tensor:
    """
    クリティックのスコアを計算する

    Args:
        params: パラメータ
        features: (B, D_out, T_b) または (D_out, T_b) の特徴量ブロック
        condition: ノイズを除いた (B, C - N, T_b) の条件ブロック
        probability: 出力にシグモイドをかけるか（gan モード）

    Returns:
        (B,) のスコア

    Raises:
        ShapeError: 入力の形状が構成と一致しない場合
    """
    feats = _as_batch(features, params.dtype)
    cond = _as_batch(condition, params.dtype)
    dims = params.dims
    if feats.ndim != 3 or feats.shape[1] != dims.feature_dim:
        raise ShapeError("特徴量ブロックの次元数が一致しません", expected=dims.feature_dim, actual=feats.shape,
                         module="model")
    if cond.ndim != 3 or cond.shape[1] != dims.layout.n_static_channels or cond.shape[2] != feats.shape[2] \
            or cond.shape[0] != feats.shape[0]:
        raise ShapeError("クリティックの条件ブロックの形状が一致しません",
                         expected=(feats.shape[0], dims.layout.n_static_channels, feats.shape[2]), actual=cond.shape,
                         module="model")

    h = ops.concat([feats, cond], axis=1)
    for layer in params.critic_encoders:
        if h.shape[2] + 2 * layer.padding < layer.kernel_size:
            raise ShapeError("ブロック長がクリティックの層数に対して短すぎます", actual=feats.shape[2], module="model")
        h = convlstm_cell(h, None, params.tensors, layer).h
    pooled = ops.mean(h, axis=2)
    score = ops.add(ops.matmul(pooled, params[f"{CRITIC_PREFIX}head.w"]), params[f"{CRITIC_PREFIX}head.b"])
    score = ops.sum(score, axis=1)
    return ops.sigmoid(score) if probability else score
