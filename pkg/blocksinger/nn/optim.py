"""
最適化モジュール

RMSProp による更新と、クリティックの重みクリッピングを定義します。
"""

import logging
from typing import Dict, Mapping, Tuple

import numpy as np

from .tape import Tensor
from ..utils.errors import ShapeError, ValidationError

logger = logging.getLogger(__name__)


def rmsprop_step(param: np.ndarray, grad: np.ndarray, accumulator: np.ndarray, learning_rate: float,
                 rho: float = 0.9, epsilon: float = 1e-8) -> Tuple[np.ndarray, np.ndarray]:
    """
    RMSProp の1ステップ

    v ← ρ·v + (1 - ρ)·g²、θ ← θ - lr·g / (√v + ε)

    Args:
        param: パラメータ θ
        grad: 勾配 g
        accumulator: 二乗勾配の移動平均 v
        learning_rate: 学習率
        rho: 減衰率 ρ
        epsilon: ε

    Returns:
        (更新後の θ, 更新後の v)

    Raises:
        ShapeError: 形状が一致しない場合
    """
    if param.shape != grad.shape or param.shape != accumulator.shape:
        raise ShapeError("パラメータと勾配の形状が一致しません", expected=param.shape, actual=grad.shape,
                         module="neural-core")
    v = rho * accumulator + (1.0 - rho) * grad * grad
    updated = param - learning_rate * grad / (np.sqrt(v) + epsilon)
    return updated.astype(param.dtype), v.astype(accumulator.dtype)


class RMSProp:
    """名前付きパラメータに対する RMSProp（アキュムレータを保持する）"""

    def __init__(self, learning_rate: float, rho: float = 0.9, epsilon: float = 1e-8):
        self.learning_rate = learning_rate
        self.rho = rho
        self.epsilon = epsilon
        self.accumulators: Dict[str, np.ndarray] = {}

    def step(self, params: Mapping[str, Tensor], grads: Mapping[str, np.ndarray]) -> None:
        """
        勾配でパラメータを更新する（Tensor.value を置き換える）

        Args:
            params: パラメータ名 → Tensor
            grads: パラメータ名 → 勾配
        """
        for name, grad in grads.items():
            if name not in params:
                raise ShapeError(f"未知のパラメータの勾配です: {name}", module="neural-core")
            tensor = params[name]
            acc = self.accumulators.get(name)
            if acc is None:
                acc = np.zeros_like(tensor.value)
            tensor.value, self.accumulators[name] = rmsprop_step(
                tensor.value, np.asarray(grad, dtype=tensor.dtype), acc,
                self.learning_rate, self.rho, self.epsilon
            )

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: acc.copy() for name, acc in self.accumulators.items()}

    def load_state_dict(self, state: Mapping[str, np.ndarray]) -> None:
        self.accumulators = {name: np.array(acc) for name, acc in state.items()}


def clip_weights(params: Mapping[str, Tensor], clip: float) -> None:
    """
    すべての要素を [-clip, clip] に制限する（範囲内の要素は変更しない）

    Args:
        params: パラメータ名 → Tensor
        clip: クリップ値 c

    Raises:
        ValidationError: clip ≤ 0 の場合
    """
    if not clip > 0:
        raise ValidationError(f"クリップ値は正でなければなりません: {clip}", field="clip", value=clip,
                              module="neural-core")
    for tensor in params.values():
        tensor.value = np.clip(tensor.value, -clip, clip)
