"""
微分可能演算（ops, tape）のユニットテスト
"""

import itertools

import numpy as np
import pytest

from blocksinger.nn import ops
from blocksinger.nn.gradcheck import check_gradients
from blocksinger.nn.tape import GradientTape, Tensor, backward, is_recording
from blocksinger.utils.errors import ShapeError


def _conv_oracle(x, w, stride, padding):
    """二重ループによる conv1d の参照実装"""
    batch, c_in, length = x.shape
    c_out, _, kernel = w.shape
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding)))
    out_len = (length + 2 * padding - kernel) // stride + 1
    out = np.zeros((batch, c_out, out_len))
    for b, o, t in itertools.product(range(batch), range(c_out), range(out_len)):
        for c, j in itertools.product(range(c_in), range(kernel)):
            out[b, o, t] += xp[b, c, t * stride + j] * w[o, c, j]
    return out


def _conv_transpose_oracle(x, w, stride, padding, output_padding):
    """散布による conv1d_transpose の参照実装"""
    batch, c_in, length = x.shape
    _, c_out, kernel = w.shape
    full = np.zeros((batch, c_out, (length - 1) * stride + kernel + output_padding))
    for b, c, t, j in itertools.product(range(batch), range(c_in), range(length), range(kernel)):
        full[b, :, t * stride + j] += x[b, c, t] * w[c, :, j]
    out_len = (length - 1) * stride + kernel - 2 * padding + output_padding
    return full[:, :, padding:padding + out_len]


class TestConvShapes:
    """畳み込みの出力長のテスト"""

    @pytest.mark.parametrize("length,kernel,stride,padding", [
        (9, 3, 1, 1), (9, 3, 2, 1), (10, 3, 2, 1), (16, 5, 2, 2), (7, 1, 1, 0), (12, 3, 3, 0), (4, 3, 2, 1),
    ])
    def test_conv1d_output_length(self, rng, length, kernel, stride, padding):
        """conv1d の出力長が floor((T + 2p - k) / s) + 1 になることを確認"""
        x = rng.standard_normal((2, 3, length))
        w = rng.standard_normal((4, 3, kernel))
        out = ops.conv1d(x, w, stride, padding)
        assert out.shape == (2, 4, ops.conv_output_length(length, kernel, stride, padding))
        assert out.shape[2] == (length + 2 * padding - kernel) // stride + 1

    @pytest.mark.parametrize("length,kernel,stride,padding,output_padding", [
        (5, 3, 2, 1, 1), (5, 3, 2, 1, 0), (4, 3, 1, 1, 0), (3, 5, 2, 2, 1), (6, 3, 3, 1, 2),
    ])
    def test_conv1d_transpose_output_length(self, rng, length, kernel, stride, padding, output_padding):
        """転置畳み込みの出力長が (T - 1)·s + k - 2p + output_padding になることを確認"""
        x = rng.standard_normal((2, 3, length))
        w = rng.standard_normal((3, 4, kernel))
        out = ops.conv1d_transpose(x, w, stride, padding, output_padding)
        assert out.shape == (2, 4, (length - 1) * stride + kernel - 2 * padding + output_padding)

    def test_shape_law_sweep(self):
        """T∈[1..16], k∈{1,3,5}, s∈{1,2,3}, p∈{0,1} で形状則と長さの復元が成り立つことを確認"""
        for length, kernel, stride, padding in itertools.product(range(1, 17), (1, 3, 5), (1, 2, 3), (0, 1)):
            if length + 2 * padding < kernel:
                continue
            x = np.ones((1, 1, length))
            down = ops.conv1d(x, np.ones((1, 1, kernel)), stride, padding)
            assert down.shape[2] == (length + 2 * padding - kernel) // stride + 1
            output_padding = (length + 2 * padding - kernel) % stride
            up = ops.conv1d_transpose(down, np.ones((1, 1, kernel)), stride, padding, output_padding)
            assert up.shape[2] == length

    def test_stride_three_example(self):
        """T=6, k=3, s=3, p=0 で 6 → 2 → 6 となることを確認"""
        down = ops.conv1d(np.ones((1, 1, 6)), np.ones((1, 1, 3)), stride=3)
        assert down.shape == (1, 1, 2)
        up = ops.conv1d_transpose(np.ones((1, 1, 2)), np.ones((1, 1, 3)), stride=3)
        assert up.shape == (1, 1, 6)

    def test_identity_kernel(self, rng):
        """k=1 の単位カーネルで出力が入力と一致することを確認"""
        x = rng.standard_normal((2, 3, 7))
        np.testing.assert_array_equal(ops.conv1d(x, np.eye(3)[:, :, None]).value, x)
        np.testing.assert_array_equal(ops.conv1d_transpose(x, np.eye(3)[:, :, None]).value, x)

    def test_stride_two_halves_and_restores_length(self, rng):
        """ストライド2の畳み込みと転置畳み込みで長さが T → T/2 → T に戻ることを確認"""
        x = rng.standard_normal((1, 2, 16))
        down = ops.conv1d(x, rng.standard_normal((3, 2, 3)), 2, 1)
        up = ops.conv1d_transpose(down, rng.standard_normal((3, 2, 3)), 2, 1, 1)
        assert down.shape[2] == 8
        assert up.shape[2] == 16

    def test_input_shorter_than_kernel(self, rng):
        """入力長がカーネル幅に満たない場合に ShapeError になることを確認"""
        with pytest.raises(ShapeError):
            ops.conv1d(rng.standard_normal((1, 1, 2)), rng.standard_normal((1, 1, 5)))

    def test_channel_mismatch(self, rng):
        """入力チャネル数が重みと一致しない場合に ShapeError になることを確認"""
        with pytest.raises(ShapeError):
            ops.conv1d(rng.standard_normal((1, 2, 8)), rng.standard_normal((4, 3, 3)))
        with pytest.raises(ShapeError):
            ops.conv1d_transpose(rng.standard_normal((1, 2, 8)), rng.standard_normal((3, 4, 3)), 2, 1)

    def test_invalid_output_padding(self, rng):
        """output_padding が [0, s) の外の場合に ShapeError になることを確認"""
        with pytest.raises(ShapeError):
            ops.conv1d_transpose(rng.standard_normal((1, 2, 4)), rng.standard_normal((2, 2, 3)), 2, 1, 2)


class TestConvValues:
    """畳み込みの値のテスト"""

    @pytest.mark.parametrize("stride,padding", [(1, 0), (1, 1), (2, 1), (3, 2)])
    def test_conv1d_matches_loop(self, rng, stride, padding):
        """conv1d がループによる参照実装と一致することを確認"""
        x = rng.standard_normal((2, 3, 11))
        w = rng.standard_normal((4, 3, 3))
        np.testing.assert_allclose(ops.conv1d(x, w, stride, padding).value, _conv_oracle(x, w, stride, padding),
                                   atol=1e-12)

    @pytest.mark.parametrize("stride,padding,output_padding", [(1, 0, 0), (2, 1, 1), (2, 1, 0), (3, 1, 2)])
    def test_conv1d_transpose_matches_loop(self, rng, stride, padding, output_padding):
        """conv1d_transpose がループによる参照実装と一致することを確認"""
        x = rng.standard_normal((2, 3, 6))
        w = rng.standard_normal((3, 2, 3))
        np.testing.assert_allclose(ops.conv1d_transpose(x, w, stride, padding, output_padding).value,
                                   _conv_transpose_oracle(x, w, stride, padding, output_padding), atol=1e-12)

    def test_no_kernel_flip(self):
        """畳み込みが相互相関（カーネル反転なし）であることを確認"""
        x = np.arange(5, dtype=np.float64).reshape(1, 1, 5)
        w = np.array([1.0, 0.0, 0.0]).reshape(1, 1, 3)
        np.testing.assert_allclose(ops.conv1d(x, w).value[0, 0], [0.0, 1.0, 2.0])

    @pytest.mark.parametrize("length,stride,padding", [(9, 2, 1), (10, 2, 1), (16, 2, 1), (12, 3, 1), (8, 1, 1)])
    def test_transpose_is_adjoint(self, rng, length, stride, padding):
        """⟨conv(x), y⟩ = ⟨x, conv_transpose(y)⟩ が同じカーネルで成り立つことを確認"""
        kernel = 3
        x = rng.standard_normal((2, 3, length))
        w = rng.standard_normal((4, 3, kernel))
        out_len = ops.conv_output_length(length, kernel, stride, padding)
        y = rng.standard_normal((2, 4, out_len))
        output_padding = length - ops.conv_transpose_output_length(out_len, kernel, stride, padding)

        lhs = np.sum(ops.conv1d(x, w, stride, padding).value * y)
        rhs = np.sum(x * ops.conv1d_transpose(y, w, stride, padding, output_padding).value)
        assert lhs == pytest.approx(rhs, rel=1e-10)

    def test_adjoint_random_instances(self):
        """ランダムな100例で随伴の恒等式が 1e-10 以内で成り立つことを確認"""
        rng = np.random.default_rng(7)
        for _ in range(100):
            kernel = int(rng.choice([1, 3, 5]))
            stride = int(rng.integers(1, 4))
            padding = int(rng.integers(0, kernel // 2 + 1))
            length = int(rng.integers(max(1, kernel - 2 * padding), 17))
            c_in, c_out = int(rng.integers(1, 4)), int(rng.integers(1, 4))
            x = rng.standard_normal((1, c_in, length))
            w = rng.standard_normal((c_out, c_in, kernel))
            out_len = ops.conv_output_length(length, kernel, stride, padding)
            y = rng.standard_normal((1, c_out, out_len))
            output_padding = (length + 2 * padding - kernel) % stride

            lhs = np.sum(ops.conv1d(x, w, stride, padding).value * y)
            rhs = np.sum(x * ops.conv1d_transpose(y, w, stride, padding, output_padding).value)
            assert abs(lhs - rhs) < 1e-10 * max(1.0, abs(lhs))


class TestTape:
    """テープと逆伝播のテスト"""

    def test_recording_scope(self):
        """テープの外では記録されないことを確認"""
        a = Tensor(np.ones(3), requires_grad=True)
        assert not is_recording()
        with GradientTape() as tape:
            assert is_recording()
            ops.mul(a, 2.0)
        ops.mul(a, 3.0)
        assert len(tape) == 1
        assert not is_recording()

    def test_shared_input_gradients_accumulate(self):
        """同じ入力が複数回使われた場合に勾配が加算されることを確認"""
        a = Tensor(np.array([1.0, 2.0]), requires_grad=True)
        with GradientTape() as tape:
            loss = ops.sum(ops.add(ops.mul(a, a), a))
        grad, = backward(tape, loss, [a])
        np.testing.assert_allclose(grad, 2 * a.value + 1)

    def test_unused_parameter_has_zero_gradient(self):
        """順伝播で使われないパラメータの勾配が 0 であることを確認"""
        a = Tensor(np.ones(2), requires_grad=True)
        unused = Tensor(np.ones((3, 2)), requires_grad=True)
        with GradientTape() as tape:
            loss = ops.sum(a)
        grads = backward(tape, loss, [a, unused])
        np.testing.assert_array_equal(grads[1], np.zeros((3, 2)))

    def test_detach_stops_gradient(self):
        """detach した値を経由する勾配が流れないことを確認"""
        a = Tensor(np.array([3.0]), requires_grad=True)
        with GradientTape() as tape:
            loss = ops.sum(ops.mul(a, a.detach()))
        grad, = backward(tape, loss, [a])
        np.testing.assert_allclose(grad, [3.0])

    def test_non_scalar_loss(self):
        """スカラーでない損失で ShapeError になることを確認"""
        a = Tensor(np.ones(3), requires_grad=True)
        with GradientTape() as tape:
            out = ops.mul(a, 2.0)
        with pytest.raises(ShapeError):
            backward(tape, out, [a])

    def test_concat_shape_mismatch(self):
        """連結できない形状で ShapeError になることを確認"""
        with pytest.raises(ShapeError):
            ops.concat([np.ones((1, 2, 3)), np.ones((1, 2, 4))], axis=1)

    def test_sigmoid_is_stable(self):
        """大きな入力でもシグモイドが有限値になることを確認"""
        y = ops.sigmoid(np.array([-1000.0, 0.0, 1000.0])).value
        assert np.all(np.isfinite(y))
        np.testing.assert_allclose(y, [0.0, 0.5, 1.0], atol=1e-12)


def test_elementwise_gradients(rng):
    """要素ごとの演算と縮約の勾配が中心差分と一致することを確認"""
    a = Tensor(rng.standard_normal((3, 4)), requires_grad=True)
    b = Tensor(rng.uniform(0.5, 2.0, (3, 4)), requires_grad=True)
    bias = Tensor(rng.standard_normal(4), requires_grad=True)

    def loss():
        h = ops.tanh(ops.add(ops.mul(a, b), bias))
        h = ops.add(h, ops.sigmoid(ops.sub(a, b)))
        h = ops.add(h, ops.log(b))
        return ops.add(ops.mean(ops.square(h)), ops.sum(ops.mean(h, axis=0)))

    errors = check_gradients(loss, {"a": a, "b": b, "bias": bias})
    assert max(errors.values()) < 1e-4


def test_convolution_gradients(rng):
    """畳み込みと転置畳み込みの勾配が中心差分と一致することを確認"""
    x = Tensor(rng.standard_normal((2, 3, 9)), requires_grad=True)
    w = Tensor(rng.standard_normal((4, 3, 3)), requires_grad=True)
    wt = Tensor(rng.standard_normal((4, 2, 3)), requires_grad=True)
    r = rng.standard_normal((2, 2, 9))

    def loss():
        down = ops.tanh(ops.conv1d(x, w, 2, 1))
        up = ops.conv1d_transpose(down, wt, 2, 1, 0)
        return ops.sum(ops.mul(up, r))

    errors = check_gradients(loss, {"x": x, "w": w, "wt": wt})
    assert max(errors.values()) < 1e-4
