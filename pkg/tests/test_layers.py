import numpy as np
import pytest

from intomo.neural import layers as L

from gradcheck import numeric_grad, rel_error


def test_delta_kernel_is_identity(rng):
    x = rng.standard_normal((2, 3, 5, 6))
    w = np.zeros((3, 3, 3, 3))
    for c in range(3):
        w[c, c, 1, 1] = 1.0
    out, _ = L.conv2d_forward(x, w, np.zeros(3))
    np.testing.assert_array_equal(out, x)


def test_one_by_one_hand_example():
    x = np.array([[[[1.0, 2.0], [3.0, 4.0]]]])
    out, _ = L.conv2d_forward(x, np.array([[[[2.0]]]]), np.array([1.0]))
    np.testing.assert_array_equal(out, [[[[3.0, 5.0], [7.0, 9.0]]]])


def test_conv_matches_direct_loops(rng):
    x = rng.standard_normal((2, 2, 4, 5))
    w = rng.standard_normal((3, 2, 3, 3))
    b = rng.standard_normal(3)
    out, _ = L.conv2d_forward(x, w, b)
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    ref = np.zeros_like(out)
    for n in range(2):
        for f in range(3):
            for i in range(4):
                for j in range(5):
                    ref[n, f, i, j] = np.sum(xp[n, :, i:i + 3, j:j + 3] * w[f]) + b[f]
    np.testing.assert_allclose(out, ref, rtol=1e-12, atol=1e-12)


def test_conv_channel_mismatch():
    with pytest.raises(ValueError):
        L.conv2d_forward(np.zeros((1, 2, 4, 4)), np.zeros((1, 3, 3, 3)), np.zeros(1))


@pytest.mark.parametrize("k", [3, 1])
def test_conv_gradients(rng, k):
    x = rng.standard_normal((2, 3, 5, 4))
    w = rng.standard_normal((4, 3, k, k))
    b = rng.standard_normal(4)
    out, cache = L.conv2d_forward(x, w, b)
    dout = rng.standard_normal(out.shape)
    dx, dw, db = L.conv2d_backward(dout, cache)
    f = lambda: L.conv2d_forward(x, w, b)[0]
    assert rel_error(dx, numeric_grad(f, x, dout)) < 1e-6
    assert rel_error(dw, numeric_grad(f, w, dout)) < 1e-6
    assert rel_error(db, numeric_grad(f, b, dout)) < 1e-6


def test_relu(rng):
    out, cache = L.relu_forward(np.array([-1.0, 2.0]))
    np.testing.assert_array_equal(out, [0.0, 2.0])
    x = rng.standard_normal((2, 2, 3, 3))
    x[np.abs(x) < 1e-3] = 0.5  # keep away from the kink
    dout = rng.standard_normal(x.shape)
    dx = L.relu_backward(dout, L.relu_forward(x)[1])
    assert rel_error(dx, numeric_grad(lambda: L.relu_forward(x)[0], x, dout)) < 1e-6


def test_batchnorm_train_normalizes(rng):
    # eps shrinks the variance by var / (var + eps); a wide input keeps that below 1e-6
    x = 3.0 + 20.0 * rng.standard_normal((4, 3, 5, 5))
    out, _, (rm, rv) = L.batchnorm_forward(x, np.ones(3), np.zeros(3), np.zeros(3), np.ones(3), True)
    np.testing.assert_allclose(out.mean(axis=(0, 2, 3)), 0.0, atol=1e-6)
    np.testing.assert_allclose(out.var(axis=(0, 2, 3)), 1.0, atol=1e-6)
    np.testing.assert_allclose(rm, 0.1 * x.mean(axis=(0, 2, 3)))
    np.testing.assert_allclose(rv, 0.9 + 0.1 * x.var(axis=(0, 2, 3)))


def test_batchnorm_infer_uses_running_stats(rng):
    x = rng.standard_normal((2, 2, 3, 3))
    rm, rv = np.array([0.5, -1.0]), np.array([2.0, 0.5])
    out, _, (nm, nv) = L.batchnorm_forward(x, np.ones(2), np.zeros(2), rm, rv, False)
    ref = (x - rm[None, :, None, None]) / np.sqrt(rv[None, :, None, None] + L.BN_EPS)
    np.testing.assert_allclose(out, ref)
    assert nm is rm and nv is rv


@pytest.mark.parametrize("train", [True, False])
def test_batchnorm_gradients(rng, train):
    x = rng.standard_normal((3, 2, 4, 4))
    gamma, beta = rng.standard_normal(2), rng.standard_normal(2)
    rm, rv = rng.standard_normal(2), rng.random(2) + 0.5
    out, cache, _ = L.batchnorm_forward(x, gamma, beta, rm, rv, train)
    dout = rng.standard_normal(out.shape)
    dx, dg, db = L.batchnorm_backward(dout, cache)
    f = lambda: L.batchnorm_forward(x, gamma, beta, rm, rv, train)[0]
    assert rel_error(dx, numeric_grad(f, x, dout)) < 1e-6
    assert rel_error(dg, numeric_grad(f, gamma, dout)) < 1e-6
    assert rel_error(db, numeric_grad(f, beta, dout)) < 1e-6


def test_pooling_examples_and_shapes():
    x = np.array([[[[1.0, 2.0], [3.0, 4.0]]]])
    assert L.avgpool2_forward(x)[0].item() == 2.5
    with pytest.raises(ValueError):
        L.avgpool2_forward(np.zeros((1, 1, 3, 4)))
    block = np.repeat(np.repeat(np.arange(6.0).reshape(1, 1, 2, 3), 2, 2), 2, 3)
    np.testing.assert_array_equal(L.avgunpool2_forward(L.avgpool2_forward(block)[0])[0], block)


def test_pool_unpool_concat_gradients(rng):
    x = rng.standard_normal((2, 2, 4, 6))
    dout = rng.standard_normal((2, 2, 2, 3))
    dx = L.avgpool2_backward(dout, L.avgpool2_forward(x)[1])
    assert rel_error(dx, numeric_grad(lambda: L.avgpool2_forward(x)[0], x, dout)) < 1e-6

    z = rng.standard_normal((2, 2, 2, 3))
    dout = rng.standard_normal((2, 2, 4, 6))
    dz = L.avgunpool2_backward(dout, L.avgunpool2_forward(z)[1])
    assert rel_error(dz, numeric_grad(lambda: L.avgunpool2_forward(z)[0], z, dout)) < 1e-6

    a, b = rng.standard_normal((1, 2, 3, 3)), rng.standard_normal((1, 3, 3, 3))
    out, cache = L.concat_forward(a, b)
    assert out.shape == (1, 5, 3, 3)
    dout = rng.standard_normal(out.shape)
    da, db = L.concat_backward(dout, cache)
    assert rel_error(da, numeric_grad(lambda: L.concat_forward(a, b)[0], a, dout)) < 1e-6
    assert rel_error(db, numeric_grad(lambda: L.concat_forward(a, b)[0], b, dout)) < 1e-6
