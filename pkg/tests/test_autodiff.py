import numpy as np
import pytest
from numpy.testing import assert_allclose

from freqmask import autodiff as ad
from freqmask.autodiff import AdamState, ShapeError, Tensor, adam_step

from conftest import numeric_grad


def grad_of(fn, *arrays):
    ts = [Tensor(a, requires_grad=True) for a in arrays]
    out = fn(*ts)
    out.backward()
    return [t.grad for t in ts]


def check_op(fn, *arrays, rtol=1e-6, atol=1e-8):
    analytic = grad_of(fn, *arrays)
    for i, a in enumerate(arrays):
        def f(v, i=i):
            args = [Tensor(b) for b in arrays]
            args[i] = Tensor(v)
            return fn(*args).item()
        assert_allclose(analytic[i], numeric_grad(f, a), rtol=rtol, atol=atol)


def test_elementwise_ops_match_finite_differences(rng):
    a, b = rng.normal(size=(3, 4)), rng.normal(size=(3, 4))
    check_op(lambda x, y: ad.tsum(ad.mul(ad.add(x, y), ad.sub(x, y))), a, b)
    check_op(lambda x: ad.tsum(ad.exp(ad.mul(x, 0.3))), a)
    check_op(lambda x: ad.tsum(ad.sqrt(ad.add(ad.square(x), 1.0))), a)
    check_op(lambda x: ad.mean(ad.square(x)), a)


def test_broadcast_gradients_reduce_to_operand_shape(rng):
    a, b = rng.normal(size=(4, 3)), rng.normal(size=(3,))
    ga, gb = grad_of(lambda x, y: ad.tsum(ad.mul(x, y)), a, b)
    assert gb.shape == (3,)
    assert_allclose(gb, a.sum(axis=0))
    assert_allclose(ga, np.broadcast_to(b, (4, 3)))


def test_relu_abs_and_clamp(rng):
    a = rng.normal(size=20)
    a[np.abs(a) < 0.05] = 0.3  # keep away from kinks
    check_op(lambda x: ad.tsum(ad.mul(ad.relu(x), x)), a)
    check_op(lambda x: ad.tsum(ad.tabs(x)), a)
    (g,) = grad_of(lambda x: ad.tsum(ad.clamp_max(x, 0.0)), a)
    assert_allclose(g, (a < 0).astype(float))


def test_matmul_linear_and_reductions(rng):
    x, w, b = rng.normal(size=(5, 4)), rng.normal(size=(3, 4)), rng.normal(size=3)
    check_op(lambda x, w, b: ad.tsum(ad.square(ad.linear(x, w, b))), x, w, b)
    check_op(lambda x, m: ad.tsum(ad.tsum(ad.square(ad.matmul(x, m)), axis=0)), x, rng.normal(size=(4, 2)))


def test_conv2d_forward_against_direct_loop(rng):
    x, k, b = rng.normal(size=(2, 3, 6, 6)), rng.normal(size=(4, 3, 3, 3)), rng.normal(size=4)
    out = ad.conv2d(Tensor(x), Tensor(k), Tensor(b), padding=1).data
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    ref = np.zeros((2, 4, 6, 6))
    for n in range(2):
        for o in range(4):
            for i in range(6):
                for j in range(6):
                    ref[n, o, i, j] = np.sum(xp[n, :, i:i + 3, j:j + 3] * k[o]) + b[o]
    assert_allclose(out, ref, atol=1e-12)


def test_conv2d_and_maxpool_gradients(rng):
    x, k, b = rng.normal(size=(2, 2, 4, 4)), rng.normal(size=(3, 2, 3, 3)), rng.normal(size=3)
    check_op(lambda x, k, b: ad.tsum(ad.square(ad.conv2d(x, k, b, padding=1))), x, k, b)
    check_op(lambda x: ad.tsum(ad.square(ad.maxpool2(x))), rng.normal(size=(2, 2, 4, 4)))


def test_maxpool_ties_route_gradient_to_first_max():
    x = Tensor(np.ones((1, 1, 2, 2)), requires_grad=True)
    ad.tsum(ad.maxpool2(x)).backward()
    assert_allclose(x.grad[0, 0], [[1, 0], [0, 0]])


def test_cross_entropy_value_and_gradient(rng):
    logits, labels = rng.normal(size=(6, 4)), np.array([0, 3, 1, 2, 2, 0])
    ce = ad.cross_entropy_per_sample(Tensor(logits), labels).data
    p = np.exp(logits) / np.exp(logits).sum(axis=1, keepdims=True)
    assert_allclose(ce, -np.log(p[np.arange(6), labels]))
    check_op(lambda z: ad.cross_entropy(z, labels), logits)


def test_cross_entropy_is_stable_for_large_logits():
    ce = ad.cross_entropy_per_sample(Tensor([[1000.0, 0.0]]), [1]).data
    assert_allclose(ce, [1000.0])


def test_cross_entropy_rejects_bad_labels():
    with pytest.raises(ValueError):
        ad.cross_entropy(Tensor(np.zeros((2, 3))), [0, 3])


def test_backward_requires_scalar():
    with pytest.raises(ShapeError):
        Tensor(np.ones(3), requires_grad=True).backward()


def test_shared_subexpression_accumulates(rng):
    a = rng.normal(size=5)
    (g,) = grad_of(lambda x: ad.tsum(ad.mul(ad.exp(x), ad.exp(x))), a)
    assert_allclose(g, 2 * np.exp(2 * a))


def test_incompatible_shapes_raise():
    with pytest.raises(ShapeError):
        ad.add(Tensor(np.ones((2, 3))), Tensor(np.ones((4,))))


def test_adam_step_matches_closed_form():
    p = [np.array([1.0, -2.0])]
    g = [np.array([0.5, 0.25])]
    st = AdamState(lr=0.1)
    adam_step(p, g, st)
    # first step: m_hat = g, v_hat = g^2 -> update = lr * g / (|g| + eps)
    assert_allclose(p[0], [1.0 - 0.1 * 0.5 / (0.5 + 1e-8), -2.0 - 0.1 * 0.25 / (0.25 + 1e-8)])
    adam_step(p, g, st)
    assert st.t == 2
