import numpy as np
import pytest

from shrinknet import tensor as T
from shrinknet.tensor import Tensor, concat, conv2d, avgpool, gap, gmp, elementwise

from oracles import central_diff, rel_err


def grad_check(build_loss, *leaves, eps=1e-4, tol=1e-4):
    """Compare autodiff grads of scalar build_loss() against central differences."""
    loss = build_loss()
    for leaf in leaves:
        leaf.grad = None
    loss.backward()
    for leaf in leaves:
        fd = central_diff(lambda: build_loss().item(), leaf.data, eps)
        assert leaf.grad is not None
        assert rel_err(leaf.grad, fd) < tol, f"grad mismatch for leaf {leaf.shape}"


class TestElementwise:
    def test_sigmoid_zero(self):
        assert elementwise("sigmoid", Tensor(0.0)).item() == pytest.approx(0.5)

    def test_relu_negative(self):
        assert elementwise("relu", Tensor(-3.0)).item() == 0.0

    def test_abs_value_and_grad(self, f64):
        x = Tensor(-2.5, requires_grad=True)
        y = x.abs()
        assert y.item() == 2.5
        y.backward()
        fd = central_diff(lambda: x.abs().item(), x.data)
        assert x.grad == pytest.approx(fd)
        assert x.grad == pytest.approx(-1.0)

    def test_shape_mismatch_names_shapes(self):
        with pytest.raises(ValueError, match=r"\(3,\).*\(4,\)"):
            Tensor(np.zeros(3)) + Tensor(np.zeros(4))

    @pytest.mark.parametrize("op", ["add", "sub", "mul", "div"])
    def test_binary_grads(self, f64, op):
        rng = np.random.default_rng(3)
        a = Tensor(rng.normal(size=(3, 4)) + 2.0, requires_grad=True)
        b = Tensor(rng.normal(size=(3, 4)) + 2.0, requires_grad=True)
        grad_check(lambda: elementwise(op, a, b).sum(), a, b)

    @pytest.mark.parametrize("op", ["sigmoid", "tanh", "exp"])
    def test_unary_grads(self, f64, op):
        rng = np.random.default_rng(4)
        x = Tensor(rng.normal(size=7), requires_grad=True)
        grad_check(lambda: elementwise(op, x).sum(), x)

    def test_log_grad(self, f64):
        x = Tensor(np.array([0.5, 1.0, 3.0]), requires_grad=True)
        grad_check(lambda: x.log().sum(), x)

    def test_scalar_broadcast(self, f64):
        x = Tensor(np.arange(6.0).reshape(2, 3), requires_grad=True)
        grad_check(lambda: (x * 3.0 + 1.0).sum(), x)


class TestBroadcast:
    def test_broadcast_grad_sums_over_axes(self, f64):
        rng = np.random.default_rng(5)
        a = Tensor(rng.normal(size=(4, 3)), requires_grad=True)
        b = Tensor(rng.normal(size=3), requires_grad=True)
        grad_check(lambda: ((a * b) ** 2).sum(), a, b)

    def test_keepdim_broadcast(self, f64):
        rng = np.random.default_rng(6)
        a = Tensor(rng.normal(size=(4, 3)), requires_grad=True)
        b = Tensor(rng.normal(size=(4, 1)), requires_grad=True)
        grad_check(lambda: (a / (b.abs() + 1.0)).sum(), a, b)


class TestMatmul:
    def test_identity(self):
        a = Tensor(np.array([[1.0, 2.0], [3.0, 4.0]]))
        out = Tensor(np.eye(2)) @ a
        np.testing.assert_allclose(out.data, a.data)

    def test_known_product(self):
        out = Tensor(np.array([[1.0, 2.0]])) @ Tensor(np.array([[3.0], [4.0]]))
        assert out.data[0, 0] == 11.0

    def test_inner_dim_mismatch(self):
        with pytest.raises(ValueError, match="inner dimensions"):
            Tensor(np.zeros((2, 3))) @ Tensor(np.zeros((4, 2)))

    def test_grad_finite_difference(self, f64):
        rng = np.random.default_rng(7)
        a = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
        b = Tensor(rng.normal(size=(4, 2)), requires_grad=True)
        grad_check(lambda: ((a @ b) ** 2).sum(), a, b)


class TestConv2d:
    def test_same_padding_shape(self):
        x = Tensor(np.random.default_rng(0).normal(size=(128, 2, 1)))
        k = Tensor(np.random.default_rng(1).normal(size=(3, 1, 1, 6)))
        out = conv2d(x, k, dilation=(2, 2), padding="same")
        assert out.shape == (128, 2, 6)

    def test_one_by_one_identity(self):
        x = Tensor(np.random.default_rng(2).normal(size=(5, 3, 1)))
        k = Tensor(np.ones((1, 1, 1, 1)))
        b = Tensor(np.zeros(1))
        out = conv2d(x, k, b)
        np.testing.assert_allclose(out.data, x.data, rtol=1e-6)

    def test_dilated_valid_hand_computed(self):
        x = Tensor(np.array([1.0, 2, 3, 4, 5]).reshape(5, 1, 1))
        k = Tensor(np.ones((3, 1, 1, 1)))
        out = conv2d(x, k, dilation=(2, 1), padding="valid")
        assert out.shape == (1, 1, 1)
        assert out.data[0, 0, 0] == pytest.approx(9.0)  # 1 + 3 + 5

    def test_valid_span_too_large(self):
        x = Tensor(np.zeros((4, 1, 1)))
        k = Tensor(np.zeros((3, 1, 1, 1)))
        with pytest.raises(ValueError, match="span"):
            conv2d(x, k, dilation=(2, 1), padding="valid")

    @pytest.mark.parametrize("stride,dilation,padding", [
        ((1, 1), (1, 1), "same"),
        ((2, 1), (1, 1), "same"),
        ((1, 1), (2, 2), "same"),
        ((1, 1), (1, 1), "valid"),
    ])
    def test_grads(self, f64, stride, dilation, padding):
        rng = np.random.default_rng(8)
        x = Tensor(rng.normal(size=(2, 9, 4, 3)), requires_grad=True)
        k = Tensor(rng.normal(size=(3, 3, 3, 2)), requires_grad=True)
        b = Tensor(rng.normal(size=2), requires_grad=True)
        grad_check(lambda: (conv2d(x, k, b, stride=stride, dilation=dilation,
                                   padding=padding) ** 2).sum(), x, k, b)


class TestPooling:
    def test_gap_mean(self):
        assert gap(Tensor(np.array([1.0, 2, 3, 6]))).item() == pytest.approx(3.0)

    def test_gmp_max(self):
        assert gmp(Tensor(np.array([1.0, 2, 3, 6]))).item() == pytest.approx(6.0)

    def test_avgpool_partial_window(self):
        x = Tensor(np.array([1.0, 2, 3, 4, 5]).reshape(5, 1, 1))
        out = avgpool(x, (2, 1), (2, 1))
        np.testing.assert_allclose(out.data.reshape(-1), [1.5, 3.5, 5.0])

    def test_gmp_tie_routes_to_first(self):
        x = Tensor(np.array([2.0, 5.0, 5.0, 1.0]), requires_grad=True)
        gmp(x).backward()
        np.testing.assert_array_equal(x.grad, [0, 1, 0, 0])

    def test_empty_input_errors(self):
        with pytest.raises(ValueError):
            gap(Tensor(np.zeros((0, 1, 1))))
        with pytest.raises(ValueError):
            gmp(Tensor(np.zeros((0, 1, 1))))

    def test_grads(self, f64):
        rng = np.random.default_rng(9)
        x = Tensor(rng.normal(size=(2, 7, 3, 4)), requires_grad=True)
        grad_check(lambda: (gap(x) ** 2).sum(), x)
        grad_check(lambda: (avgpool(x) ** 2).sum(), x)
        # keep values distinct so the argmax is stable under the FD probe
        x2 = Tensor(np.arange(2 * 5 * 1 * 3, dtype=np.float64).reshape(2, 5, 1, 3) * 0.37,
                    requires_grad=True)
        grad_check(lambda: (gmp(x2) ** 2).sum(), x2)


class TestStructural:
    def test_concat_axis2_shapes(self):
        a = Tensor(np.zeros((128, 2, 4)))
        b = Tensor(np.zeros((128, 2, 4)))
        assert concat([a, b], axis=1).shape == (128, 4, 4)

    def test_pad_channels_rule(self):
        x = Tensor(np.ones((128, 4, 5)))
        out = x.pad_channels(8)
        assert out.shape == (128, 4, 8)
        # 3 channels added: 1 low, 2 high
        assert np.all(out.data[..., 0] == 0)
        assert np.all(out.data[..., 1:6] == 1)
        assert np.all(out.data[..., 6:] == 0)

    def test_reshape_roundtrip(self):
        x = Tensor(np.random.default_rng(0).normal(size=(128, 4)))
        back = x.reshape(128, 4, 1).reshape(128, 4)
        np.testing.assert_array_equal(back.data, x.data)

    def test_reshape_count_mismatch(self):
        with pytest.raises(ValueError, match="reshape"):
            Tensor(np.zeros((3, 4))).reshape(5, 2)

    def test_concat_axis_mismatch(self):
        with pytest.raises(ValueError, match="concat"):
            concat([Tensor(np.zeros((3, 4))), Tensor(np.zeros((3, 5)))], axis=0)

    def test_grads(self, f64):
        rng = np.random.default_rng(10)
        a = Tensor(rng.normal(size=(3, 2, 2)), requires_grad=True)
        b = Tensor(rng.normal(size=(3, 2, 2)), requires_grad=True)
        grad_check(lambda: (concat([a, b], axis=2) ** 2).sum(), a, b)
        grad_check(lambda: (a.pad_channels(5) ** 2).sum(), a)
        grad_check(lambda: (a.reshape(12, 1) ** 2).sum(), a)


class TestBackward:
    def test_square_sum(self):
        w = Tensor(np.array([1.0, 2.0]), requires_grad=True)
        (w * w).sum().backward()
        np.testing.assert_allclose(w.grad, [2.0, 4.0])

    def test_sigmoid_at_zero(self):
        w = Tensor(0.0, requires_grad=True)
        w.sigmoid().backward()
        assert w.grad == pytest.approx(0.25)

    def test_non_scalar_rejected(self):
        with pytest.raises(ValueError, match="scalar"):
            (Tensor(np.zeros(3), requires_grad=True) * 1.0).backward()
        with pytest.raises(ValueError, match="scalar"):
            Tensor(np.zeros((2, 2)), requires_grad=True).sum(axis=0).backward()

    def test_accumulation_without_reset(self):
        w = Tensor(np.array([1.0, 2.0]), requires_grad=True)
        (w * w).sum().backward()
        (w * w).sum().backward()
        np.testing.assert_allclose(w.grad, [4.0, 8.0])

    def test_diamond_graph(self, f64):
        x = Tensor(np.array([1.5, -0.5]), requires_grad=True)
        grad_check(lambda: ((x.sigmoid() * x.tanh()) + x * x).sum(), x)


class TestDeterminism:
    def test_forward_and_grad_bit_identical(self):
        def run():
            rng = np.random.default_rng(42)
            x = Tensor(rng.normal(size=(4, 8, 2, 3)).astype(np.float32), requires_grad=True)
            k = Tensor(rng.normal(size=(3, 1, 3, 5)).astype(np.float32), requires_grad=True)
            out = conv2d(x, k).relu()
            loss = (out * out).sum()
            loss.backward()
            return out.data.copy(), x.grad.copy(), k.grad.copy()

        a, b = run(), run()
        for x, y in zip(a, b):
            assert x.tobytes() == y.tobytes()


class TestLstmOp:
    def test_grads_length8(self, f64):
        rng = np.random.default_rng(11)
        x = Tensor(rng.normal(size=(2, 8, 3)), requires_grad=True)
        wx = Tensor(rng.normal(size=(3, 16)) * 0.4, requires_grad=True)
        wh = Tensor(rng.normal(size=(4, 16)) * 0.4, requires_grad=True)
        b = Tensor(rng.normal(size=16) * 0.1, requires_grad=True)
        grad_check(lambda: (T.lstm(x, wx, wh, b) ** 2).sum(), x, wx, wh, b, tol=1e-4)

    def test_no_grad_mode(self):
        x = Tensor(np.zeros((2, 4, 3)), requires_grad=True)
        with T.no_grad():
            y = (x * 2.0).sum()
        assert y._backward is None and not y.requires_grad
