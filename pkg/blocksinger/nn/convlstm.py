"""
ConvLSTM セルモジュール

入力から状態への変換と状態から状態への変換がともに1次元畳み込みである LSTM セルを定義します。
入力側の畳み込みはエンコーダ層ではストライド付き、デコーダ層では転置畳み込みです。
状態側の畳み込みは常にストライド1・同一長パディングです。ピープホール結合はありません。
"""

from typing import Dict, Mapping, NamedTuple, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from . import ops
from .tape import Tensor
from ..utils.errors import ShapeError

GATES = ("i", "f", "g", "o")
FORGET_BIAS = 1.0


class ConvLSTMState(NamedTuple):
    """層ごとの (h, c) 特徴マップ。どちらも (B, C_h, T)"""
    h: Tensor
    c: Tensor

    def detach(self) -> "ConvLSTMState":
        return ConvLSTMState(self.h.detach(), self.c.detach())


class ConvLSTMLayer(BaseModel):
    """ConvLSTM 層の構成"""
    model_config = ConfigDict(frozen=True)

    name: str = Field(..., description="パラメータ名の接頭辞")
    in_channels: int = Field(..., ge=1, description="入力チャネル数")
    hidden_channels: int = Field(..., ge=1, description="状態チャネル数 C_h")
    kernel_size: int = Field(3, ge=1, description="入力側カーネル幅")
    state_kernel_size: int = Field(3, ge=1, description="状態側カーネル幅")
    stride: int = Field(1, ge=1, description="入力側ストライド")
    transposed: bool = Field(False, description="入力側を転置畳み込みにするか")
    recurrent: bool = Field(True, description="状態側の重みを持つか")

    @field_validator('kernel_size', 'state_kernel_size')
    @classmethod
    def validate_odd(cls, v):
        if v % 2 != 1:
            raise ValueError(f"カーネル幅は奇数でなければなりません: {v}")
        return v

    @property
    def padding(self) -> int:
        return self.kernel_size // 2

    def input_kernel_shape(self) -> Tuple[int, int, int]:
        if self.transposed:
            return (self.in_channels, self.hidden_channels, self.kernel_size)
        return (self.hidden_channels, self.in_channels, self.kernel_size)

    def param_shapes(self) -> Dict[str, Tuple[int, ...]]:
        """パラメータ名と形状の対応"""
        shapes: Dict[str, Tuple[int, ...]] = {}
        for gate in GATES:
            shapes[f"{self.name}.wx_{gate}"] = self.input_kernel_shape()
            if self.recurrent:
                shapes[f"{self.name}.wh_{gate}"] = (self.hidden_channels, self.hidden_channels, self.state_kernel_size)
            shapes[f"{self.name}.b_{gate}"] = (self.hidden_channels,)
        return shapes

    def output_length(self, length: int) -> int:
        if self.transposed:
            return ops.conv_transpose_output_length(length, self.kernel_size, self.stride, self.padding)
        return ops.conv_output_length(length, self.kernel_size, self.stride, self.padding)


def glorot_bound(shape: Tuple[int, ...]) -> float:
    """カーネル (a, b, k) の一様初期化の範囲 √(6 / (fan_in + fan_out))、fan はチャネル数 × k"""
    if len(shape) == 3:
        fan_a, fan_b = shape[0] * shape[2], shape[1] * shape[2]
    else:
        fan_a, fan_b = shape[0], shape[1]
    return float(np.sqrt(6.0 / (fan_a + fan_b)))


def init_convlstm(layer: ConvLSTMLayer, rng: np.random.Generator,
                  dtype=np.float32) -> Tuple[Dict[str, np.ndarray], Dict[str, float]]:
    """
    ConvLSTM 層のパラメータを初期化する

    カーネルは ±√(6 / (fan_in + fan_out)) の一様分布、バイアスは 0（忘却ゲートのみ 1.0）です。

    Args:
        layer: 層の構成
        rng: 乱数生成器
        dtype: パラメータの精度

    Returns:
        (パラメータ名 → 配列, カーネル名 → 初期化範囲)
    """
    values: Dict[str, np.ndarray] = {}
    bounds: Dict[str, float] = {}
    for name, shape in layer.param_shapes().items():
        if len(shape) == 1:
            fill = FORGET_BIAS if name.endswith(".b_f") else 0.0
            values[name] = np.full(shape, fill, dtype=dtype)
        else:
            bound = glorot_bound(shape)
            values[name] = rng.uniform(-bound, bound, size=shape).astype(dtype)
            bounds[name] = bound
    return values, bounds


def zero_state(layer: ConvLSTMLayer, batch: int, length: int, dtype=np.float32) -> ConvLSTMState:
    zeros = np.zeros((batch, layer.hidden_channels, length), dtype=dtype)
    return ConvLSTMState(Tensor(zeros), Tensor(zeros.copy()))


def convlstm_cell(x: Tensor, state: Optional[ConvLSTMState], params: Mapping[str, Tensor],
                  layer: ConvLSTMLayer, target_length: Optional[int] = None) -> ConvLSTMState:
    """
    ConvLSTM セルを1ステップ進める

    i = σ(W_xi*x + W_hi*h + b_i), f = σ(W_xf*x + W_hf*h + b_f), g = tanh(W_xg*x + W_hg*h + b_g),
    o = σ(W_xo*x + W_ho*h + b_o), c' = f⊙c + i⊙g, h' = o⊙tanh(c')

    Args:
        x: (B, C_in, T) の入力
        state: 直前の状態（None はゼロ状態）
        params: パラメータ名 → Tensor
        layer: 層の構成
        target_length: 転置畳み込み層の出力長（output_padding をこれに合わせて決める）

    Returns:
        新しい状態 (h', c')

    Raises:
        ShapeError: 入力・状態・パラメータの形状が一致しない場合
    """
    if x.ndim != 3 or x.shape[1] != layer.in_channels:
        raise ShapeError(f"{layer.name}: 入力チャネル数が一致しません", expected=layer.in_channels,
                         actual=x.shape, module="neural-core")

    output_padding = 0
    if layer.transposed and target_length is not None:
        output_padding = target_length - layer.output_length(x.shape[2])
        if not 0 <= output_padding < layer.stride:
            raise ShapeError(f"{layer.name}: 出力長 {target_length} を転置畳み込みで作れません",
                             expected=layer.output_length(x.shape[2]), actual=target_length, module="neural-core")

    if state is not None and not layer.recurrent:
        raise ShapeError(f"{layer.name}: 状態を持たない層に状態が渡されました", module="neural-core")

    pre = {}
    for gate in GATES:
        w = params[f"{layer.name}.wx_{gate}"]
        if layer.transposed:
            z = ops.conv1d_transpose(x, w, layer.stride, layer.padding, output_padding)
        else:
            z = ops.conv1d(x, w, layer.stride, layer.padding)
        if state is not None:
            if state.h.shape != z.shape or state.c.shape != z.shape:
                raise ShapeError(f"{layer.name}: 状態の形状が一致しません", expected=z.shape, actual=state.h.shape,
                                 module="neural-core")
            z = z + ops.conv1d(state.h, params[f"{layer.name}.wh_{gate}"], 1, layer.state_kernel_size // 2)
        pre[gate] = ops.bias_add(z, params[f"{layer.name}.b_{gate}"])

    i = ops.sigmoid(pre["i"])
    f = ops.sigmoid(pre["f"])
    g = ops.tanh(pre["g"])
    o = ops.sigmoid(pre["o"])

    c = i * g if state is None else f * state.c + i * g
    h = o * ops.tanh(c)
    return ConvLSTMState(h, c)
