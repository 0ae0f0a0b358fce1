"""
敵対的損失モジュール

WGAN のクリティック損失・生成器損失と、比較用の（飽和型）GAN 損失を定義します。
"""

from typing import Tuple

import numpy as np

from ..nn import ops
from ..nn.tape import GradientTape, Tensor, backward
from ..utils.errors import ValidationError

GAN_EPSILON = 1e-7


def _check_scores(scores: Tensor, name: str) -> Tensor:
    scores = ops.as_tensor(scores)
    if scores.value.size == 0:
        raise ValidationError(f"{name} が空です", field=name, module="training")
    return scores


def wgan_critic_loss(d_real, d_fake) -> Tensor:
    """
    クリティックが最小化する損失 -(mean(d_real) - mean(d_fake))

    Raises:
        ValidationError: 入力が空の場合
    """
    d_real = _check_scores(d_real, "d_real")
    d_fake = _check_scores(d_fake, "d_fake")
    return ops.sub(ops.mean(d_fake), ops.mean(d_real))


def wgan_generator_loss(d_fake) -> Tensor:
    """
    生成器が最小化する損失 -mean(d_fake)

    Raises:
        ValidationError: 入力が空の場合
    """
    return ops.neg(ops.mean(_check_scores(d_fake, "d_fake")))


def gan_losses(d_real, d_fake) -> Tuple[Tensor, Tensor]:
    """
    GAN の識別器損失と（飽和型の）生成器損失

    L_D = -mean(log d_real + log(1 - d_fake))、L_G = mean(log(1 - d_fake))。
    log(0) を避けるため確率を [ε, 1 - ε] に制限します。

    Args:
        d_real: 本物に対する識別器の確率
        d_fake: 生成物に対する識別器の確率

    Returns:
        (L_D, L_G)

    Raises:
        ValidationError: 入力が空、または [0, 1] の外の値を含む場合
    """
    d_real = _check_scores(d_real, "d_real")
    d_fake = _check_scores(d_fake, "d_fake")
    for name, t in (("d_real", d_real), ("d_fake", d_fake)):
        if np.any(t.value < 0) or np.any(t.value > 1) or not np.all(np.isfinite(t.value)):
            raise ValidationError(f"{name} は [0, 1] の確率でなければなりません", field=name, module="training")

    real = ops.clip(d_real, GAN_EPSILON, 1.0 - GAN_EPSILON)
    fake_complement = ops.clip(ops.sub(1.0, d_fake), GAN_EPSILON, 1.0 - GAN_EPSILON)
    loss_d = ops.neg(ops.add(ops.mean(ops.log(real)), ops.mean(ops.log(fake_complement))))
    return loss_d, gan_generator_loss(d_fake)


def gan_generator_loss(d_fake) -> Tensor:
    """飽和型の生成器損失 mean(log(1 - d_fake))"""
    d_fake = _check_scores(d_fake, "d_fake")
    return ops.mean(ops.log(ops.clip(ops.sub(1.0, d_fake), GAN_EPSILON, 1.0 - GAN_EPSILON)))


def reconstruction_loss(fake: Tensor, real) -> Tensor:
    """生成ブロックと本物ブロックの平均絶対誤差"""
    return ops.mean(ops.abs(ops.sub(fake, real)))


def generator_gradient_norm(logits: np.ndarray, mode: str = "gan") -> float:
    """
    生成器損失の、識別器のロジット（シグモイド前のスコア）に対する勾配ノルム

    gan モードでは d_fake = σ(logit) が 0 に近づくほど勾配が消失することを測るために使います。

    Args:
        logits: 生成物に対するロジット
        mode: "gan" または "wgan"

    Returns:
        勾配の L2 ノルム
    """
    x = Tensor(np.asarray(logits, dtype=np.float64), requires_grad=True)
    with GradientTape() as tape:
        if mode == "gan":
            loss = gan_generator_loss(ops.sigmoid(x))
        else:
            loss = wgan_generator_loss(x)
    grad, = backward(tape, loss, [x])
    return float(np.linalg.norm(grad))
