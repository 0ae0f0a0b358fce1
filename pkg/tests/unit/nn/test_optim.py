"""
RMSProp・重みクリッピング・勾配検査のユニットテスト
"""

import numpy as np
import pytest

from blocksinger.nn import ops
from blocksinger.nn.gradcheck import check_gradients, numerical_derivative, relative_error
from blocksinger.nn.optim import RMSProp, clip_weights, rmsprop_step
from blocksinger.nn.tape import Tensor
from blocksinger.utils.errors import ShapeError, ValidationError


class TestRMSProp:
    """RMSProp のテスト"""

    def test_hand_evaluated_step(self):
        """θ=1, g=1, v=0, ρ=0.9, lr=0.1 で v=0.1, θ≈0.6838 になることを確認"""
        theta, v = rmsprop_step(np.array([1.0]), np.array([1.0]), np.array([0.0]), 0.1, rho=0.9, epsilon=1e-8)
        assert v[0] == pytest.approx(0.1)
        assert theta[0] == pytest.approx(1.0 - 0.1 / np.sqrt(0.1), abs=1e-6)
        assert theta[0] == pytest.approx(0.6838, abs=1e-4)

    def test_zero_gradient_keeps_params(self):
        """勾配が 0 ならパラメータが変わらないことを確認"""
        param = np.array([0.5, -2.0])
        theta, _ = rmsprop_step(param, np.zeros(2), np.array([0.3, 0.1]), 0.1)
        np.testing.assert_array_equal(theta, param)

    def test_update_approaches_learning_rate(self):
        """一定の勾配を与え続けると更新幅が lr に近づくことを確認"""
        theta, v = np.array([0.0]), np.array([0.0])
        for _ in range(200):
            previous = theta.copy()
            theta, v = rmsprop_step(theta, np.array([0.7]), v, 0.01)
        assert abs(previous[0] - theta[0]) == pytest.approx(0.01, rel=1e-3)

    def test_shape_mismatch(self):
        """形状が一致しない場合に ShapeError になることを確認"""
        with pytest.raises(ShapeError):
            rmsprop_step(np.zeros(2), np.zeros(3), np.zeros(2), 0.1)

    def test_optimizer_state_round_trip(self):
        """アキュムレータの保存と復元で同じ更新になることを確認"""
        params = {"w": Tensor(np.array([1.0, 2.0]))}
        optimizer = RMSProp(0.05)
        optimizer.step(params, {"w": np.array([0.5, -0.5])})

        restored = RMSProp(0.05)
        restored.load_state_dict(optimizer.state_dict())
        twin = {"w": Tensor(params["w"].value.copy())}
        optimizer.step(params, {"w": np.array([0.1, 0.2])})
        restored.step(twin, {"w": np.array([0.1, 0.2])})
        np.testing.assert_array_equal(params["w"].value, twin["w"].value)

    def test_unknown_gradient(self):
        """未知のパラメータ名の勾配で ShapeError になることを確認"""
        with pytest.raises(ShapeError):
            RMSProp(0.1).step({"a": Tensor(np.zeros(1))}, {"b": np.zeros(1)})

    def test_keeps_dtype(self):
        """32bit のパラメータが 32bit のまま更新されることを確認"""
        params = {"w": Tensor(np.ones(3, dtype=np.float32))}
        RMSProp(0.1).step(params, {"w": np.ones(3)})
        assert params["w"].dtype == np.float32


class TestClipWeights:
    """重みクリッピングのテスト"""

    def test_hand_cases(self):
        """0.02 → 0.01、-0.5 → -0.01 になることを確認"""
        params = {"w": Tensor(np.array([0.02, -0.5, 0.004]))}
        clip_weights(params, 0.01)
        np.testing.assert_array_equal(params["w"].value, [0.01, -0.01, 0.004])

    def test_property_on_random_params(self, rng):
        """範囲内の要素は変わらず、すべての要素が [-c, c] に入ることを確認"""
        original = rng.standard_normal((50, 7)) * 0.02
        params = {"w": Tensor(original.copy())}
        clip_weights(params, 0.01)
        clipped = params["w"].value
        assert np.all(np.abs(clipped) <= 0.01)
        inside = np.abs(original) <= 0.01
        np.testing.assert_array_equal(clipped[inside], original[inside])

    @pytest.mark.parametrize("clip", [0.0, -0.1])
    def test_non_positive_clip(self, clip):
        """c ≤ 0 で ValidationError になることを確認"""
        with pytest.raises(ValidationError):
            clip_weights({"w": Tensor(np.zeros(1))}, clip)


class TestGradcheck:
    """勾配検査のテスト"""

    def test_relative_error_floor(self):
        """両方が非常に小さい場合は下限で割ることを確認"""
        assert relative_error(0.0, 0.0) == 0.0
        assert relative_error(1e-9, 0.0) == pytest.approx(1e-3)
        assert relative_error(2.0, 1.0) == pytest.approx(0.5)

    def test_numerical_derivative_restores_value(self):
        """差分計算の後にパラメータの値が元に戻ることを確認"""
        t = Tensor(np.array([1.5, -0.5]))
        d = numerical_derivative(lambda: ops.sum(ops.square(t)), t, (0,), 1e-5)
        assert d == pytest.approx(3.0, rel=1e-8)
        np.testing.assert_array_equal(t.value, [1.5, -0.5])

    def test_sum_gradient_is_ones(self, rng):
        """sum(x) の勾配検査がすべて合格することを確認"""
        x = Tensor(rng.standard_normal((3, 4)))
        errors = check_gradients(lambda: ops.sum(x), {"x": x})
        assert errors["x"] < 1e-8

    def test_pipeline_gradients(self, rng):
        """conv1d → tanh → mean の勾配が中心差分と一致することを確認"""
        x = Tensor(rng.standard_normal((2, 3, 10)))
        w = Tensor(rng.standard_normal((4, 3, 3)))
        errors = check_gradients(lambda: ops.mean(ops.tanh(ops.conv1d(x, w, 2, 1))), {"x": x, "w": w})
        assert max(errors.values()) < 1e-4

    def test_sampled_coordinates(self, rng):
        """max_coords を指定すると抽出した座標だけを検査することを確認"""
        a = Tensor(rng.standard_normal(20))
        b = Tensor(rng.standard_normal(20))
        errors = check_gradients(lambda: ops.sum(ops.mul(a, b)), {"a": a, "b": b}, max_coords=3, seed=1)
        assert 1 <= len(errors) <= 2

    def test_requires_float64(self):
        """32bit のパラメータで ValidationError になることを確認"""
        x = Tensor(np.ones(3, dtype=np.float32))
        with pytest.raises(ValidationError):
            check_gradients(lambda: ops.sum(x), {"x": x})
