"""Tensor engine: op semantics, gradient checks, graph behaviour."""

import numpy as np
import pytest

from padeblur import autograd as ag
from padeblur.autograd import Tensor, finite_difference_check, no_grad
from padeblur.errors import ShapeError, UnsupportedOpError


def randt(rng, shape, grad=True):
    return Tensor(rng.standard_normal(shape), requires_grad=grad)


class TestElementwise:
    def test_add_broadcast_backward(self):
        """Gradient of a broadcast add reduces over the broadcast axes."""
        rng = np.random.default_rng(0)
        a = randt(rng, (4, 5))
        b = randt(rng, (1, 5))
        (a + b).sum().backward()
        assert a.grad.shape == (4, 5)
        assert b.grad.shape == (1, 5)
        np.testing.assert_allclose(b.grad, np.full((1, 5), 4.0))

    @pytest.mark.parametrize("op", [ag.relu, ag.sigmoid, ag.tanh, ag.exp,
                                    ag.absval])
    def test_unary_fd(self, op):
        rng = np.random.default_rng(1)
        x = randt(rng, (3, 7))
        err = finite_difference_check(op, [x], rng=rng)
        assert err < 1e-6

    def test_log_fd(self):
        rng = np.random.default_rng(2)
        x = Tensor(rng.uniform(0.2, 3.0, (4, 4)), requires_grad=True)
        assert finite_difference_check(ag.log, [x], rng=rng) < 1e-6

    def test_mul_fd(self):
        rng = np.random.default_rng(3)
        a, b = randt(rng, (2, 6)), randt(rng, (2, 6))
        assert finite_difference_check(lambda x, y: x * y, [a, b], rng=rng) < 1e-7

    def test_sigmoid_saturates_without_overflow(self):
        x = Tensor(np.array([-1e4, 0.0, 1e4]))
        y = ag.sigmoid(x)
        assert np.all(np.isfinite(y.data))
        np.testing.assert_allclose(y.data, [0.0, 0.5, 1.0], atol=1e-12)


class TestMatmul:
    def test_matmul_oracle(self):
        rng = np.random.default_rng(4)
        a, b = rng.standard_normal((3, 5)), rng.standard_normal((5, 2))
        y = ag.matmul(Tensor(a), Tensor(b))
        np.testing.assert_allclose(y.data, a @ b)

    def test_matmul_fd(self):
        rng = np.random.default_rng(5)
        a, b = randt(rng, (4, 6)), randt(rng, (6, 3))
        assert finite_difference_check(ag.matmul, [a, b], rng=rng) < 1e-7

    def test_matmul_associativity(self):
        """(AB)C == A(BC) — the reordering that linear attention relies on."""
        rng = np.random.default_rng(6)
        a = Tensor(rng.standard_normal((4, 30)))
        b = Tensor(rng.standard_normal((30, 5)))
        c = Tensor(rng.standard_normal((5, 7)))
        left = ag.matmul(ag.matmul(a, b), c)
        right = ag.matmul(a, ag.matmul(b, c))
        np.testing.assert_allclose(left.data, right.data, atol=1e-10)

    def test_matmul_shape_error(self):
        with pytest.raises(ShapeError):
            ag.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((4, 2))))


class TestSoftmax:
    def test_rows_sum_to_one(self):
        rng = np.random.default_rng(7)
        y = ag.softmax_axis(Tensor(rng.standard_normal((5, 9))), axis=1)
        np.testing.assert_allclose(y.data.sum(axis=1), np.ones(5), atol=1e-12)

    def test_shift_invariance(self):
        rng = np.random.default_rng(8)
        x = rng.standard_normal((4, 6))
        a = ag.softmax_axis(Tensor(x), axis=0)
        b = ag.softmax_axis(Tensor(x + 100.0), axis=0)
        np.testing.assert_allclose(a.data, b.data, atol=1e-12)

    def test_large_inputs_finite(self):
        y = ag.softmax_axis(Tensor(np.array([[1e4, -1e4, 0.0]])), axis=1)
        assert np.all(np.isfinite(y.data))

    @pytest.mark.parametrize("axis", [0, 1])
    def test_fd(self, axis):
        rng = np.random.default_rng(9)
        x = randt(rng, (5, 4))
        err = finite_difference_check(
            lambda t: ag.softmax_axis(t, axis=axis), [x], rng=rng)
        assert err < 1e-6


class TestShapeOps:
    def test_reshape_transpose_roundtrip(self):
        rng = np.random.default_rng(10)
        x = randt(rng, (3, 4, 5))
        y = ag.transpose(ag.transpose(x, (2, 0, 1)), (1, 2, 0))
        np.testing.assert_array_equal(y.data, x.data)
        y.sum().backward()
        np.testing.assert_allclose(x.grad, np.ones((3, 4, 5)))

    def test_concat_fd(self):
        rng = np.random.default_rng(11)
        a, b = randt(rng, (2, 3)), randt(rng, (2, 4))
        err = finite_difference_check(
            lambda x, y: ag.concat([x, y], axis=1), [a, b], rng=rng)
        assert err < 1e-8

    def test_crop2d_fd(self):
        rng = np.random.default_rng(12)
        x = randt(rng, (3, 8, 9))
        err = finite_difference_check(
            lambda t: ag.crop2d(t, 1, 5, 2, 7), [x], rng=rng)
        assert err < 1e-8

    def test_mean_matches_sum(self):
        rng = np.random.default_rng(13)
        x = randt(rng, (4, 6))
        m = x.mean()
        s = x.sum()
        np.testing.assert_allclose(m.data, s.data / 24.0)


class TestGraph:
    def test_grad_accumulates_over_fanout(self):
        """A tensor consumed twice receives the sum of both branch grads."""
        x = Tensor(np.array([2.0, 3.0]), requires_grad=True)
        y = (x * x) + x
        y.sum().backward()
        np.testing.assert_allclose(x.grad, 2 * x.data + 1)

    def test_no_grad_builds_no_graph(self):
        x = Tensor(np.ones(3), requires_grad=True)
        with no_grad():
            y = x * x
        assert not y.requires_grad

    def test_backward_needs_scalar(self):
        x = Tensor(np.ones((2, 2)), requires_grad=True)
        with pytest.raises(ShapeError):
            (x * x).backward()

    def test_fd_check_rejects_f32(self):
        x = Tensor(np.ones(3, np.float32), requires_grad=True)
        with pytest.raises(UnsupportedOpError):
            finite_difference_check(lambda t: t * t, [x])

    def test_chain_fd(self):
        """A small composite expression against numeric differentiation."""
        rng = np.random.default_rng(14)
        a, b = randt(rng, (3, 4)), randt(rng, (4, 3))
        def f(a, b):
            return ag.tanh(ag.matmul(a, b)) * ag.sigmoid(ag.matmul(a, b))
        assert finite_difference_check(f, [a, b], rng=rng) < 1e-6
