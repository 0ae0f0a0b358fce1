"""
有限差分による勾配検査モジュール
"""

import logging
from typing import Callable, Dict, List, Mapping, Optional, Tuple

import numpy as np

from .tape import GradientTape, Tensor, backward
from ..utils.errors import ValidationError

logger = logging.getLogger(__name__)

ERROR_FLOOR = 1e-6


def relative_error(analytic: float, numeric: float, floor: float = ERROR_FLOOR) -> float:
    """|a - n| / max(|a|, |n|, floor)"""
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def numerical_derivative(loss_fn: Callable[[], Tensor], tensor: Tensor, index: Tuple[int, ...],
                         epsilon: float) -> float:
    """1座標の中心差分 (f(θ + ε) - f(θ - ε)) / 2ε"""
    original = tensor.value[index]
    try:
        tensor.value[index] = original + epsilon
        plus = loss_fn().item()
        tensor.value[index] = original - epsilon
        minus = loss_fn().item()
    finally:
        tensor.value[index] = original
    return (plus - minus) / (2.0 * epsilon)


def _sample_coordinates(params: Mapping[str, Tensor], max_coords: Optional[int],
                        seed: int) -> List[Tuple[str, Tuple[int, ...]]]:
    if max_coords is None:
        return [(name, idx) for name, t in params.items() for idx in np.ndindex(*t.shape)]
    names = list(params)
    sizes = np.array([params[n].value.size for n in names])
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    rng = np.random.default_rng(seed)
    flat = rng.choice(int(offsets[-1]), size=min(max_coords, int(offsets[-1])), replace=False)
    coords = []
    for f in np.sort(flat):
        k = int(np.searchsorted(offsets, f, side='right') - 1)
        coords.append((names[k], np.unravel_index(int(f - offsets[k]), params[names[k]].shape)))
    return coords


def check_gradients(loss_fn: Callable[[], Tensor], params: Mapping[str, Tensor], epsilon: float = 1e-5,
                    max_coords: Optional[int] = None, seed: int = 0) -> Dict[str, float]:
    """
    テープによる勾配と中心差分を比較する

    Args:
        loss_fn: パラメータの現在値からスカラー損失を計算する関数
        params: 検査するパラメータ（64bit）
        epsilon: 差分幅
        max_coords: 検査する座標数の上限（None は全座標）
        seed: 座標サンプリングの乱数シード

    Returns:
        パラメータ名 → 検査した座標での最大相対誤差

    Raises:
        ValidationError: 64bit でないパラメータがある場合
    """
    for name, t in params.items():
        if t.dtype != np.float64:
            raise ValidationError(f"勾配検査は64bitで行います: {name} は {t.dtype}", field=name,
                                  module="neural-core")
        t.requires_grad = True

    with GradientTape() as tape:
        loss = loss_fn()
    grads = dict(zip(params, backward(tape, loss, list(params.values()))))

    errors: Dict[str, float] = {}
    for name, index in _sample_coordinates(params, max_coords, seed):
        numeric = numerical_derivative(loss_fn, params[name], index, epsilon)
        err = relative_error(float(grads[name][index]), numeric)
        errors[name] = max(errors.get(name, 0.0), err)

    logger.debug(f"勾配検査: {len(errors)}パラメータ, 最大相対誤差 {max(errors.values(), default=0.0):.2e}")
    return errors
