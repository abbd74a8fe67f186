import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from attnloco import tensor as T
from attnloco.errors import DimensionError
from attnloco.gradcheck import grad_check
from attnloco.nn import Adam, Linear, clip_grad_norm
from oracles import naive_conv2d

finite = st.floats(-3, 3, allow_nan=False, width=64)


def test_forward_values_match_numpy(rng):
    a, b = rng.standard_normal((3, 4)), rng.uniform(0.5, 2, (3, 4))
    with T.precision(np.float64):
        ta, tb = T.Tensor(a), T.Tensor(b)
        np.testing.assert_allclose((ta + tb).data, a + b)
        np.testing.assert_allclose((ta - tb).data, a - b)
        np.testing.assert_allclose((ta * tb).data, a * b)
        np.testing.assert_allclose((ta / tb).data, a / b)
        np.testing.assert_allclose(T.exp(ta).data, np.exp(a))
        np.testing.assert_allclose(T.log(tb).data, np.log(b))
        np.testing.assert_allclose(T.tanh(ta).data, np.tanh(a))
        np.testing.assert_allclose(T.elu(ta).data, np.where(a > 0, a, np.expm1(a)))
        np.testing.assert_allclose(T.clip(ta, -0.5, 0.5).data, np.clip(a, -0.5, 0.5))
        np.testing.assert_allclose(T.matmul(ta, T.Tensor(b.T)).data, a @ b.T)


def test_broadcast_gradient_is_reduced_to_operand_shape(rng):
    with T.precision(np.float64):
        x = T.Tensor(rng.standard_normal((4, 3)), requires_grad=True)
        bias = T.Tensor(rng.standard_normal(3), requires_grad=True)
        ((x + bias) * 2.0).sum().backward()
    assert bias.grad.shape == (3,)
    np.testing.assert_allclose(bias.grad, np.full(3, 8.0))
    np.testing.assert_allclose(x.grad, np.full((4, 3), 2.0))


def test_gradient_accumulates_over_reuse(rng):
    with T.precision(np.float64):
        x = T.Tensor(rng.standard_normal(5), requires_grad=True)
        (x * x + x).sum().backward()
    np.testing.assert_allclose(x.grad, 2 * x.data + 1)


def test_no_grad_records_nothing(rng):
    x = T.Tensor(rng.standard_normal(3), requires_grad=True)
    with T.no_grad():
        y = (x * 2.0).sum()
    assert not y.requires_grad


def test_precision_context_sets_dtype():
    with T.precision(np.float64):
        assert T.Tensor([1.0]).data.dtype == np.float64
    assert T.Tensor([1.0]).data.dtype == T.get_default_dtype()


@pytest.mark.parametrize("padding,stride,shape", [(0, 1, (7, 5)), (1, 1, (7, 5)), (2, 1, (6, 6)), (1, 2, (7, 5))])
def test_conv2d_matches_loop_reference(rng, padding, stride, shape):
    x = rng.standard_normal((2, 3, *shape))
    k = rng.standard_normal((4, 3, 3, 3))
    with T.precision(np.float64):
        out = T.conv2d(T.Tensor(x), T.Tensor(k), padding=padding, stride=stride).data
    np.testing.assert_allclose(out, naive_conv2d(x, k, padding, stride), atol=1e-12)


def test_conv2d_gradients(rng):
    x = rng.standard_normal((2, 2, 6, 5))
    k = rng.standard_normal((3, 2, 5, 5))
    up = rng.standard_normal((2, 3, 6, 5))
    assert grad_check(lambda t: (T.conv2d(t, T.Tensor(k), padding=2) * T.Tensor(up)).sum(), x) < 1e-6
    assert grad_check(lambda t: (T.conv2d(T.Tensor(x), t, padding=2) * T.Tensor(up)).sum(), k) < 1e-6


def test_conv_output_size_rejects_non_integral_extent():
    assert T.conv_output_size(26, 5, 0, 1) == 22
    with pytest.raises(DimensionError):
        T.conv_output_size(6, 3, 1, 2)
    with pytest.raises(DimensionError):
        T.conv_output_size(4, 5, 0, 1)


def test_matmul_shape_error_is_dimension_error():
    with pytest.raises(DimensionError):
        T.matmul(T.Tensor(np.ones((2, 3))), T.Tensor(np.ones((4, 2))))


@given(arrays(np.float64, (3, 5), elements=finite))
def test_softmax_rows_are_distributions(x):
    with T.precision(np.float64):
        p = T.softmax(T.Tensor(x), axis=-1).data
    assert (p >= 0).all()
    np.testing.assert_allclose(p.sum(axis=-1), 1.0, atol=1e-12)


@given(arrays(np.float64, (2, 4), elements=finite), st.floats(-5, 5))
def test_softmax_is_shift_invariant(x, c):
    with T.precision(np.float64):
        np.testing.assert_allclose(T.softmax(T.Tensor(x)).data, T.softmax(T.Tensor(x + c)).data, atol=1e-12)


@given(arrays(np.float64, (2, 3), elements=finite))
def test_gradient_of_sum_is_ones(x):
    with T.precision(np.float64):
        t = T.Tensor(x, requires_grad=True)
        t.sum().backward()
    np.testing.assert_array_equal(t.grad, np.ones_like(x))


@given(arrays(np.float64, (2, 3), elements=finite), arrays(np.float64, (2, 3), elements=finite))
def test_product_rule(a, b):
    with T.precision(np.float64):
        ta, tb = T.Tensor(a, requires_grad=True), T.Tensor(b, requires_grad=True)
        (ta * tb).sum().backward()
    np.testing.assert_array_equal(ta.grad, b)
    np.testing.assert_array_equal(tb.grad, a)


def test_clip_grad_norm_scales_to_limit(rng):
    p = T.Tensor(rng.standard_normal(10), requires_grad=True)
    p.grad = np.full(10, 3.0)
    norm = clip_grad_norm([p], 1.0)
    assert norm == pytest.approx(np.sqrt(90))
    assert np.linalg.norm(p.grad) == pytest.approx(1.0)


def test_adam_with_zero_learning_rate_leaves_weights(rng):
    layer = Linear(3, 2, rng)
    before = layer.state_dict()
    opt = Adam(layer.parameters(), lr=0.0)
    layer(T.Tensor(rng.standard_normal((4, 3)))).sum().backward()
    opt.step()
    for k, v in layer.state_dict().items():
        np.testing.assert_array_equal(v, before[k])


def test_adam_decreases_quadratic(rng):
    with T.precision(np.float64):
        w = T.Tensor(rng.standard_normal(4), requires_grad=True)
        opt = Adam([w], lr=0.05)
        for _ in range(300):
            w.grad = None
            (w * w).sum().backward()
            opt.step()
    assert np.abs(w.data).max() < 0.05
