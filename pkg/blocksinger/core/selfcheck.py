"""
勾配セルフチェックモジュール

畳み込み・転置畳み込み・ConvLSTM セル・生成器・クリティックについて、
テープで求めた勾配を中心差分（64bit）と比較します。
"""

import logging
from typing import Dict, List, Optional

import numpy as np
import pandas as pd

from .model import ModelDims, critic_forward, generator_forward, init_params
from ..config.models import CriticConfig, GeneratorConfig, ProbeConfig
from ..nn import ops
from ..nn.convlstm import ConvLSTMLayer, ConvLSTMState, convlstm_cell, init_convlstm
from ..nn.gradcheck import check_gradients
from ..nn.tape import Tensor

logger = logging.getLogger(__name__)

TINY_BLOCK = 8


def tiny_model_configs() -> Dict[str, object]:
    """勾配チェック用の2層の小さなモデル構成"""
    return {
        "generator": GeneratorConfig(encoder_channels=[4, 6], decoder_channels=[4, 4], n_noise=2),
        "critic": CriticConfig(encoder_channels=[4, 6]),
        "dims": ModelDims(n_phonemes=3, n_singers=2, feature_dim=5, n_noise=2),
    }


def _param(rng: np.random.Generator, *shape, scale: float = 0.5) -> Tensor:
    return Tensor(scale * rng.standard_normal(shape), requires_grad=True)


def _conv_case(rng: np.random.Generator):
    x, w = _param(rng, 2, 3, 9), _param(rng, 4, 3, 3)
    return {"x": x, "w": w}, lambda: ops.mean(ops.tanh(ops.conv1d(x, w, stride=2, padding=1)))


def _conv_transpose_case(rng: np.random.Generator):
    x, w = _param(rng, 2, 3, 5), _param(rng, 3, 4, 3)
    r = rng.standard_normal((2, 4, 10))
    return {"x": x, "w": w}, lambda: ops.sum(ops.mul(ops.tanh(ops.conv1d_transpose(x, w, 2, 1, 1)), r))


def _cell_case(rng: np.random.Generator, transposed: bool):
    layer = ConvLSTMLayer(name="cell", in_channels=3, hidden_channels=4, stride=2, transposed=transposed)
    values, _ = init_convlstm(layer, rng, np.float64)
    params = {n: Tensor(v, requires_grad=True) for n, v in values.items()}
    x_len, out_len = (5, 10) if transposed else (10, 5)
    params["x"] = _param(rng, 2, 3, x_len)
    params["h"] = Tensor(np.tanh(rng.standard_normal((2, 4, out_len))), requires_grad=True)
    params["c"] = _param(rng, 2, 4, out_len)
    r = rng.standard_normal((2, 4, out_len))

    def loss():
        state = convlstm_cell(params["x"], ConvLSTMState(params["h"], params["c"]), params, layer,
                              target_length=out_len if transposed else None)
        return ops.add(ops.sum(ops.mul(state.h, r)), ops.mean(state.c))

    return params, loss


def _model_cases(rng: np.random.Generator):
    configs = tiny_model_configs()
    model = init_params(int(rng.integers(1 << 31)), configs["generator"], configs["critic"], configs["dims"],
                        "float64")
    layout = configs["dims"].layout
    conditions = [rng.standard_normal((2, layout.n_channels, TINY_BLOCK)) for _ in range(2)]
    r = [rng.standard_normal((2, configs["dims"].feature_dim, TINY_BLOCK)) for _ in range(2)]

    def generator_loss():
        outputs, _ = generator_forward(model, conditions)
        return ops.add(ops.sum(ops.mul(outputs[0], r[0])), ops.sum(ops.mul(outputs[1], r[1])))

    features = rng.standard_normal((2, configs["dims"].feature_dim, TINY_BLOCK))
    static = rng.standard_normal((2, layout.n_static_channels, TINY_BLOCK))
    weights = np.array([1.0, -0.7])

    def critic_loss():
        return ops.sum(ops.mul(critic_forward(model, features, static), weights))

    return model.generator(), generator_loss, model.critic(), critic_loss


def run_gradcheck_suite(config: Optional[ProbeConfig] = None) -> pd.DataFrame:
    """
    勾配チェックを一通り実行する

    Args:
        config: 差分幅・許容誤差・生成器の抽出座標数

    Returns:
        check, max_rel_error, tolerance, passed 列の表
    """
    config = config or ProbeConfig()
    rng = np.random.default_rng(config.seed)
    eps, tol = config.fd_epsilon, config.fd_tolerance

    cases = [
        ("conv1d", *_conv_case(rng), None, tol),
        ("conv1d_transpose", *_conv_transpose_case(rng), None, tol),
        ("convlstm_cell", *_cell_case(rng, transposed=False), None, tol),
        ("convlstm_cell_transposed", *_cell_case(rng, transposed=True), None, tol),
    ]
    gen_params, gen_loss, critic_params, critic_loss = _model_cases(rng)
    cases.append(("critic", critic_params, critic_loss, None, tol))
    cases.append(("generator", gen_params, gen_loss, config.generator_coords, config.generator_tolerance))

    rows: List[Dict[str, object]] = []
    for name, params, loss_fn, coords, tolerance in cases:
        errors = check_gradients(loss_fn, params, epsilon=eps, max_coords=coords, seed=config.seed)
        worst = max(errors.values(), default=0.0)
        rows.append({"check": name, "max_rel_error": worst, "tolerance": tolerance, "passed": worst < tolerance})
        logger.debug(f"勾配チェック {name}: {worst:.2e} (許容 {tolerance:.0e})")
    table = pd.DataFrame(rows)
    logger.info(f"勾配チェック: {int(table['passed'].sum())}/{len(table)} 合格")
    return table
