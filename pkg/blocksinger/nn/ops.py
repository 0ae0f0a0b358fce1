"""
微分可能な演算モジュール

Tensor に対する要素ごとの演算、縮約、行列積、1次元畳み込みと転置畳み込みを定義します。
各演算は順伝播の値を計算し、有効なテープに随伴（VJP）を記録します。
畳み込みの入力は (B, C, T)、重みは conv1d が (Cout, Cin, k)、conv1d_transpose が (Cin, Cout, k) です。
"""

from typing import Optional, Sequence, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .tape import Tensor, record
from ..utils.errors import ShapeError

Operand = Union[Tensor, np.ndarray, float, int]


def as_tensor(x: Operand, dtype=None) -> Tensor:
    """Tensor 以外の値を定数 Tensor に変換する"""
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype or np.float64))


def _operands(a: Operand, b: Operand):
    # 定数は相手の Tensor の精度に合わせる
    if isinstance(a, Tensor) and not isinstance(b, Tensor):
        return a, as_tensor(b, a.dtype)
    if isinstance(b, Tensor) and not isinstance(a, Tensor):
        return as_tensor(a, b.dtype), b
    return as_tensor(a), as_tensor(b)


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """ブロードキャストで広がった軸について勾配を合計して元の形に戻す"""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# 要素ごとの演算
# ---------------------------------------------------------------------------

def add(a: Operand, b: Operand) -> Tensor:
    a, b = _operands(a, b)
    out = Tensor(a.value + b.value)
    return record(out, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a: Operand, b: Operand) -> Tensor:
    a, b = _operands(a, b)
    out = Tensor(a.value - b.value)
    return record(out, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a: Operand, b: Operand) -> Tensor:
    a, b = _operands(a, b)
    out = Tensor(a.value * b.value)
    return record(out, (a, b), lambda g: (_unbroadcast(g * b.value, a.shape),
                                          _unbroadcast(g * a.value, b.shape)))


def neg(a: Operand) -> Tensor:
    a = as_tensor(a)
    return record(Tensor(-a.value), (a,), lambda g: (-g,))


def sigmoid(a: Operand) -> Tensor:
    a = as_tensor(a)
    # exp のオーバーフローを避ける安定な形
    y = np.where(a.value >= 0, 1.0 / (1.0 + np.exp(-np.abs(a.value))),
                 np.exp(-np.abs(a.value)) / (1.0 + np.exp(-np.abs(a.value)))).astype(a.dtype)
    return record(Tensor(y), (a,), lambda g: (g * y * (1.0 - y),))


def tanh(a: Operand) -> Tensor:
    a = as_tensor(a)
    y = np.tanh(a.value)
    return record(Tensor(y), (a,), lambda g: (g * (1.0 - y * y),))


def log(a: Operand) -> Tensor:
    a = as_tensor(a)
    return record(Tensor(np.log(a.value)), (a,), lambda g: (g / a.value,))


def abs(a: Operand) -> Tensor:  # noqa: A001
    a = as_tensor(a)
    return record(Tensor(np.abs(a.value)), (a,), lambda g: (g * np.sign(a.value),))


def square(a: Operand) -> Tensor:
    a = as_tensor(a)
    return record(Tensor(a.value * a.value), (a,), lambda g: (2.0 * g * a.value,))


def clip(a: Operand, low: float, high: float) -> Tensor:
    """値を [low, high] に制限する（範囲内の要素のみ勾配を通す）"""
    a = as_tensor(a)
    inside = (a.value >= low) & (a.value <= high)
    return record(Tensor(np.clip(a.value, low, high)), (a,), lambda g: (g * inside,))


# ---------------------------------------------------------------------------
# 縮約・形状操作
# ---------------------------------------------------------------------------

def sum(a: Operand, axis: Optional[int] = None) -> Tensor:  # noqa: A001
    a = as_tensor(a)
    out = Tensor(np.sum(a.value, axis=axis))

    def vjp(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return record(out, (a,), vjp)


def mean(a: Operand, axis: Optional[int] = None) -> Tensor:
    a = as_tensor(a)
    count = a.value.size if axis is None else a.shape[axis]
    out = Tensor(np.mean(a.value, axis=axis))

    def vjp(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g / count, a.shape).copy(),)

    return record(out, (a,), vjp)


def concat(tensors: Sequence[Operand], axis: int = 1) -> Tensor:
    """指定軸で連結する"""
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ShapeError("連結するテンソルがありません", module="neural-core")
    try:
        value = np.concatenate([t.value for t in tensors], axis=axis)
    except ValueError as e:
        raise ShapeError(f"連結できない形状です: {[t.shape for t in tensors]}", module="neural-core") from e
    bounds = np.cumsum([0] + [t.shape[axis] for t in tensors])

    def vjp(g):
        return tuple(np.take(g, np.arange(bounds[i], bounds[i + 1]), axis=axis) for i in range(len(tensors)))

    return record(Tensor(value), tensors, vjp)


def take(x: Operand, indices: np.ndarray, axis: int = 0) -> Tensor:
    """指定軸に沿って要素を取り出す（重複した添字の勾配は加算）"""
    x = as_tensor(x)
    indices = np.asarray(indices, dtype=np.int64)
    out = Tensor(np.take(x.value, indices, axis=axis))

    def vjp(g):
        full = np.zeros_like(x.value)
        np.add.at(np.moveaxis(full, axis, 0), indices, np.moveaxis(g, axis, 0))
        return (full,)

    return record(out, (x,), vjp)


def bias_add(x: Operand, b: Operand) -> Tensor:
    """(B, C, T) にチャネルごとのバイアス (C,) を加える"""
    x, b = as_tensor(x), as_tensor(b)
    if x.ndim != 3 or b.shape != (x.shape[1],):
        raise ShapeError("バイアスの形状がチャネル数と一致しません", expected=(x.shape[1] if x.ndim == 3 else None,),
                         actual=b.shape, module="neural-core")
    out = Tensor(x.value + b.value[None, :, None])
    return record(out, (x, b), lambda g: (g, g.sum(axis=(0, 2))))


def matmul(a: Operand, b: Operand) -> Tensor:
    """2次元行列積"""
    a, b = _operands(a, b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError("行列積の形状が一致しません", expected=(a.shape[-1],), actual=b.shape, module="neural-core")
    out = Tensor(a.value @ b.value)
    return record(out, (a, b), lambda g: (g @ b.value.T, a.value.T @ g))


# ---------------------------------------------------------------------------
# 畳み込み
# ---------------------------------------------------------------------------

def conv_output_length(length: int, kernel: int, stride: int, padding: int) -> int:
    """conv1d の出力長 floor((T + 2p - k) / s) + 1"""
    return (length + 2 * padding - kernel) // stride + 1


def conv_transpose_output_length(length: int, kernel: int, stride: int, padding: int,
                                 output_padding: int = 0) -> int:
    """conv1d_transpose の出力長 (T - 1)·s + k - 2p + output_padding"""
    return (length - 1) * stride + kernel - 2 * padding + output_padding


def _conv_forward(x: np.ndarray, w: np.ndarray, stride: int, padding: int) -> np.ndarray:
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding))) if padding else x
    windows = sliding_window_view(xp, w.shape[2], axis=2)[:, :, ::stride, :]
    return np.einsum('bctk,ock->bot', windows, w, optimize=True)


def _conv_transpose_forward(x: np.ndarray, w: np.ndarray, stride: int, padding: int,
                            output_padding: int) -> np.ndarray:
    batch, _, length = x.shape
    kernel = w.shape[2]
    out_len = conv_transpose_output_length(length, kernel, stride, padding, output_padding)
    full = np.zeros((batch, w.shape[1], (length - 1) * stride + kernel + output_padding), dtype=np.result_type(x, w))
    span = stride * (length - 1) + 1
    for j in range(kernel):
        full[:, :, j:j + span:stride] += np.einsum('bct,co->bot', x, w[:, :, j], optimize=True)
    return full[:, :, padding:padding + out_len]


def _check_conv_inputs(x: Tensor, w: Tensor, in_axis: int, stride: int, padding: int) -> None:
    if x.ndim != 3 or w.ndim != 3:
        raise ShapeError("畳み込みの入力は (B, C, T)、重みは3次元でなければなりません",
                         expected=3, actual=(x.ndim, w.ndim), module="neural-core")
    if x.shape[1] != w.shape[in_axis]:
        raise ShapeError("入力チャネル数が重みと一致しません", expected=w.shape[in_axis], actual=x.shape[1],
                         module="neural-core")
    if stride < 1 or padding < 0:
        raise ShapeError(f"不正なストライドまたはパディングです (s={stride}, p={padding})", module="neural-core")


def conv1d(x: Operand, w: Operand, stride: int = 1, padding: int = 0) -> Tensor:
    """
    1次元畳み込み（相互相関、カーネル反転なし）

    Args:
        x: (B, Cin, T) の入力
        w: (Cout, Cin, k) の重み
        stride: ストライド s
        padding: 両端のゼロパディング p

    Returns:
        (B, Cout, floor((T + 2p - k) / s) + 1) の出力

    Raises:
        ShapeError: 形状が一致しない、または T + 2p < k の場合
    """
    x, w = as_tensor(x), as_tensor(w)
    _check_conv_inputs(x, w, 1, stride, padding)
    length, kernel = x.shape[2], w.shape[2]
    if length + 2 * padding < kernel:
        raise ShapeError(f"入力長がカーネル幅より短いです (T={length}, p={padding}, k={kernel})",
                         module="neural-core")

    out = Tensor(_conv_forward(x.value, w.value, stride, padding))
    out_len = out.shape[2]

    def vjp(g):
        # 入力に対する随伴は同じカーネルの転置畳み込み
        op = length - conv_transpose_output_length(out_len, kernel, stride, padding)
        gx = _conv_transpose_forward(g, w.value, stride, padding, op)
        xp = np.pad(x.value, ((0, 0), (0, 0), (padding, padding))) if padding else x.value
        windows = sliding_window_view(xp, kernel, axis=2)[:, :, ::stride, :][:, :, :out_len]
        gw = np.einsum('bctk,bot->ock', windows, g, optimize=True)
        return gx, gw

    return record(out, (x, w), vjp)


def conv1d_transpose(x: Operand, w: Operand, stride: int = 1, padding: int = 0,
                     output_padding: int = 0) -> Tensor:
    """
    1次元転置畳み込み（分数ストライド畳み込み）

    同じ (k, s, p) の conv1d の入力に対する随伴です。

    Args:
        x: (B, Cin, T) の入力
        w: (Cin, Cout, k) の重み
        stride: ストライド s
        padding: 出力両端から取り除く長さ p
        output_padding: 出力末尾に追加する長さ（0 ≤ output_padding < s）

    Returns:
        (B, Cout, (T - 1)·s + k - 2p + output_padding) の出力

    Raises:
        ShapeError: 形状が一致しない、または出力長が1未満の場合
    """
    x, w = as_tensor(x), as_tensor(w)
    _check_conv_inputs(x, w, 0, stride, padding)
    length, kernel = x.shape[2], w.shape[2]
    if output_padding < 0 or output_padding >= stride:
        raise ShapeError(f"output_paddingは[0, s)の範囲でなければなりません ({output_padding})",
                         module="neural-core")
    out_len = conv_transpose_output_length(length, kernel, stride, padding, output_padding)
    if out_len < 1 or length < 1:
        raise ShapeError(f"転置畳み込みの出力長が正になりません (T={length}, k={kernel}, s={stride}, p={padding})",
                         module="neural-core")

    out = Tensor(_conv_transpose_forward(x.value, w.value, stride, padding, output_padding))

    def vjp(g):
        # 出力のうちパディングで捨てた位置の随伴は 0
        full = np.zeros((g.shape[0], g.shape[1], (length - 1) * stride + kernel + output_padding), dtype=g.dtype)
        full[:, :, padding:padding + out_len] = g
        windows = sliding_window_view(full, kernel, axis=2)[:, :, ::stride, :][:, :, :length]
        gx = np.einsum('botk,cok->bct', windows, w.value, optimize=True)
        gw = np.einsum('bct,botk->cok', x.value, windows, optimize=True)
        return gx, gw

    return record(out, (x, w), vjp)
