"""
勾配テープモジュール

numpy 配列を包む Tensor と、順伝播で実行された演算とその随伴（VJP）を記録する
GradientTape を定義します。テープはスレッドローカルなスタックで管理され、
有効なすべてのテープに演算が記録されます。
"""

import threading
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..utils.errors import ShapeError

_local = threading.local()


def _active_tapes() -> List["GradientTape"]:
    if not hasattr(_local, "tapes"):
        _local.tapes = []
    return _local.tapes


class Tensor:
    """勾配計算の対象となる numpy 配列のラッパー"""

    __slots__ = ("value", "requires_grad", "name", "__weakref__")

    def __init__(self, value, requires_grad: bool = False, name: Optional[str] = None):
        self.value = np.asarray(value)
        if not np.issubdtype(self.value.dtype, np.floating):
            self.value = self.value.astype(np.float64)
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.value.shape

    @property
    def dtype(self):
        return self.value.dtype

    @property
    def ndim(self) -> int:
        return self.value.ndim

    def item(self) -> float:
        return float(self.value.reshape(-1)[0]) if self.value.size == 1 else float("nan")

    def numpy(self) -> np.ndarray:
        return self.value

    def detach(self) -> "Tensor":
        """テープから切り離した同じ値の Tensor を返す"""
        return Tensor(self.value, requires_grad=False, name=self.name)

    def __repr__(self) -> str:
        label = f" name={self.name}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{label})"

    # 演算子は ops モジュールに委譲する
    def __add__(self, other):
        from .ops import add
        return add(self, other)

    def __radd__(self, other):
        from .ops import add
        return add(other, self)

    def __sub__(self, other):
        from .ops import sub
        return sub(self, other)

    def __rsub__(self, other):
        from .ops import sub
        return sub(other, self)

    def __mul__(self, other):
        from .ops import mul
        return mul(self, other)

    def __rmul__(self, other):
        from .ops import mul
        return mul(other, self)

    def __neg__(self):
        from .ops import neg
        return neg(self)


class GradientTape:
    """
    順伝播の演算を記録するテープ

    使用例:
        with GradientTape() as tape:
            loss = model_loss(params)
        grads = backward(tape, loss, params)
    """

    def __init__(self):
        self.records: List[Tuple[Tensor, Sequence[Tensor], Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]]] = []

    def __enter__(self) -> "GradientTape":
        _active_tapes().append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        tapes = _active_tapes()
        if tapes and tapes[-1] is self:
            tapes.pop()
        elif self in tapes:
            tapes.remove(self)

    def __len__(self) -> int:
        return len(self.records)


def is_recording() -> bool:
    return bool(_active_tapes())


def record(output: Tensor, inputs: Sequence[Tensor],
           vjp: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]) -> Tensor:
    """
    演算を有効なすべてのテープに記録する

    入力のいずれかが勾配を必要とする場合のみ記録し、出力も勾配を必要とするものとして印を付けます。

    Args:
        output: 演算の出力
        inputs: 演算の入力
        vjp: 出力の随伴から各入力の随伴を返す関数（勾配不要の入力は None でよい）

    Returns:
        output
    """
    tapes = _active_tapes()
    if tapes and any(t.requires_grad for t in inputs):
        output.requires_grad = True
        for tape in tapes:
            tape.records.append((output, inputs, vjp))
    return output


def backward(tape: GradientTape, loss: Tensor, params: Sequence[Tensor]) -> List[np.ndarray]:
    """
    テープを逆順に再生して、スカラー損失の各パラメータに対する勾配を計算する

    Args:
        tape: 順伝播を記録したテープ
        loss: スカラー損失
        params: 勾配を求めるパラメータ

    Returns:
        params と同じ順序の勾配配列（順伝播で使われなかったパラメータは 0）

    Raises:
        ShapeError: 損失がスカラーでない場合
    """
    if loss.value.size != 1:
        raise ShapeError("損失はスカラーでなければなりません", expected=(), actual=loss.shape,
                         module="neural-core")

    grads: Dict[int, np.ndarray] = {id(loss): np.ones_like(loss.value)}
    for output, inputs, vjp in reversed(tape.records):
        g = grads.pop(id(output), None)
        if g is None:
            continue
        for tensor, contribution in zip(inputs, vjp(g)):
            if contribution is None or not tensor.requires_grad:
                continue
            key = id(tensor)
            if key in grads:
                grads[key] = grads[key] + contribution
            else:
                grads[key] = contribution

    result = []
    for p in params:
        g = grads.get(id(p))
        result.append(np.zeros_like(p.value) if g is None else np.asarray(g, dtype=p.value.dtype).reshape(p.shape))
    return result
