import numpy as np
import pytest

import gradcheck
from cosood.errors import (BatchTooSmall, GraphCycle, InvalidClassIndex, InvalidGeometry, NonFiniteGradient,
                           NonFiniteInput, ShapeMismatch)
from cosood.ndcore import (EVAL, BatchNormState, LayerSpec, Network, Tensor, backward, batchnorm_forward,
                           conv2d_forward, dense_forward, exp, get_default_dtype, l2_normalize, relu,
                           set_default_dtype, softmax, softmax_cross_entropy)


# -- trivial cases -------------------------------------------------------------

def test_add_and_sum_backward():
    a = Tensor([1.0, 2.0, 3.0], requires_grad=True)
    loss = (a + a).sum()
    backward(loss)
    assert loss.item() == 12.0
    np.testing.assert_array_equal(a.grad, [2.0, 2.0, 2.0])


def test_broadcast_gradient_is_reduced():
    a = Tensor(np.ones((3, 4)), requires_grad=True)
    b = Tensor(np.arange(4.0), requires_grad=True)
    backward((a * b).sum())
    np.testing.assert_array_equal(b.grad, [3.0, 3.0, 3.0, 3.0])
    np.testing.assert_array_equal(a.grad, np.tile(np.arange(4.0), (3, 1)))


def test_backward_accumulates_across_calls():
    a = Tensor([2.0], requires_grad=True)
    backward((a * a).sum())
    backward((a * a).sum())
    np.testing.assert_array_equal(a.grad, [8.0])


def test_backward_rejects_non_scalar_without_grad():
    a = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(ShapeMismatch):
        backward(a * a)


# -- oracle checks ----------------------------------------------------------------

def naive_conv(x, K, stride, pad):
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    B, C, H, W = xp.shape
    O, _, k, _ = K.shape
    Ho, Wo = (H - k) // stride + 1, (W - k) // stride + 1
    out = np.zeros((B, O, Ho, Wo))
    for b in range(B):
        for o in range(O):
            for i in range(Ho):
                for j in range(Wo):
                    out[b, o, i, j] = np.sum(xp[b, :, i * stride:i * stride + k, j * stride:j * stride + k] * K[o])
    return out


@pytest.mark.parametrize("stride,pad,size", [(1, 0, 5), (1, 1, 6), (2, 1, 7), (1, 2, 4)])
def test_conv_matches_naive_loops(backend, rng, stride, pad, size):
    x = rng.standard_normal((2, 3, size, size))
    K = rng.standard_normal((4, 3, 3 if pad < 2 else 5, 3 if pad < 2 else 5))
    out = conv2d_forward(Tensor(x), Tensor(K), stride, pad)
    np.testing.assert_allclose(out.data, naive_conv(x, K, stride, pad), rtol=1e-12, atol=1e-12)


def test_conv_backends_agree_on_gradients(rng):
    from cosood import _accel
    if not _accel.HAVE_NUMBA:
        pytest.skip("numba not installed")
    x0 = rng.standard_normal((2, 2, 7, 7))
    K0 = rng.standard_normal((3, 2, 3, 3))
    G = rng.standard_normal((2, 3, 4, 4))
    res = {}
    before = _accel.backend()
    try:
        for b in ("numpy", "numba"):
            _accel.set_backend(b)
            x, K = Tensor(x0, requires_grad=True), Tensor(K0, requires_grad=True)
            backward(conv2d_forward(x, K, stride=2, pad=1), G)
            res[b] = (x.grad, K.grad)
    finally:
        _accel.set_backend(before)
    for a, n in zip(res["numpy"], res["numba"]):
        np.testing.assert_allclose(a, n, rtol=1e-12, atol=1e-12)


def test_dense_matches_matmul(rng):
    x, W, b = rng.standard_normal((4, 3)), rng.standard_normal((5, 3)), rng.standard_normal(5)
    np.testing.assert_allclose(dense_forward(Tensor(x), Tensor(W), Tensor(b)).data, x @ W.T + b)


def test_batchnorm_train_normalizes_and_updates_running_stats(rng):
    x = 3.0 + 2.0 * rng.standard_normal((64, 4))
    st = BatchNormState.create(4)
    y = batchnorm_forward(Tensor(x), st).data
    np.testing.assert_allclose(y.mean(axis=0), 0.0, atol=1e-12)
    np.testing.assert_allclose(y.var(axis=0), x.var(axis=0) / (x.var(axis=0) + 1e-5), rtol=1e-12)
    np.testing.assert_allclose(st.running_mean, 0.1 * x.mean(axis=0))
    np.testing.assert_allclose(st.running_var, 0.9 + 0.1 * x.var(axis=0))


def test_batchnorm_eval_uses_running_stats(rng):
    st = BatchNormState.create(3)
    st.running_mean[:] = [1.0, 2.0, 3.0]
    st.running_var[:] = [4.0, 4.0, 4.0]
    st.mode = EVAL
    x = rng.standard_normal((1, 3))  # batch of one is fine in eval mode
    y = batchnorm_forward(Tensor(x), st).data
    np.testing.assert_allclose(y, (x - [1.0, 2.0, 3.0]) / np.sqrt(4.0 + 1e-5))


def test_batchnorm_4d_is_per_channel(rng):
    x = rng.standard_normal((3, 2, 4, 4)) * [[[[1.0]], [[5.0]]]]
    y = batchnorm_forward(Tensor(x), BatchNormState.create(2)).data
    np.testing.assert_allclose(y.mean(axis=(0, 2, 3)), 0.0, atol=1e-12)


def test_batchnorm_needs_two_samples_in_train_mode():
    with pytest.raises(BatchTooSmall):
        batchnorm_forward(Tensor(np.ones((1, 2))), BatchNormState.create(2))


def test_l2_normalize_unit_norm_and_zero_vector(rng):
    v = rng.standard_normal((5, 7))
    np.testing.assert_allclose(np.linalg.norm(l2_normalize(Tensor(v)).data, axis=1), 1.0, rtol=1e-12)
    z = Tensor(np.zeros((1, 3)), requires_grad=True)
    out = l2_normalize(z)
    backward(out.sum())
    assert np.all(out.data == 0) and np.all(np.isfinite(z.grad))


def test_softmax_cross_entropy_oracle(rng):
    z = rng.standard_normal((4, 3))
    y = np.array([0, 2, 1, 2])
    expected = -np.mean(np.log(np.exp(z)[np.arange(4), y] / np.exp(z).sum(axis=1)))
    assert softmax_cross_entropy(Tensor(z), y).item() == pytest.approx(expected, rel=1e-12)


def test_softmax_is_shift_stable():
    p = softmax(np.array([[1000.0, 1000.0, -1000.0]]))
    np.testing.assert_allclose(p, [[0.5, 0.5, 0.0]])


@pytest.mark.parametrize("name", sorted(gradcheck.CASES))
def test_finite_difference_gradients(name):
    build = gradcheck.CASES[name]
    for seed in range(3):
        assert gradcheck.check(*build(np.random.default_rng(seed))) < 1e-4


# -- failure modes ---------------------------------------------------------------

def test_exp_overflow_raises():
    with pytest.raises(NonFiniteInput):
        exp(Tensor([1000.0]))


def test_non_finite_input_rejected():
    with pytest.raises(NonFiniteInput):
        dense_forward(Tensor([[np.nan, 1.0]]), Tensor(np.ones((2, 2))))


def test_non_finite_gradient_names_the_parameter():
    w = Tensor([1.0], requires_grad=True, name="net.0.W")
    y = Tensor._from_op(w.data * 2, (w,), lambda g: (g * np.inf,))
    with pytest.raises(NonFiniteGradient, match="net.0.W"):
        backward(y.sum())


def test_graph_cycle_detected():
    a = Tensor([1.0], requires_grad=True)
    b = a * Tensor([2.0])
    a._parents = (b,)  # corrupt the graph on purpose
    with pytest.raises(GraphCycle):
        backward(b.sum())


def test_invalid_class_index():
    with pytest.raises(InvalidClassIndex):
        softmax_cross_entropy(Tensor(np.zeros((2, 3))), np.array([0, 3]))


@pytest.mark.parametrize("shape,K,stride,pad", [
    ((1, 1, 5, 5), (1, 1, 2, 2), 1, 0),   # even kernel
    ((1, 1, 6, 6), (1, 1, 3, 3), 2, 0),   # does not tile
    ((1, 1, 2, 2), (1, 1, 5, 5), 1, 0),   # kernel larger than input
])
def test_conv_geometry_errors(shape, K, stride, pad):
    with pytest.raises(InvalidGeometry):
        conv2d_forward(Tensor(np.ones(shape)), Tensor(np.ones(K)), stride, pad)


def test_conv_channel_mismatch():
    with pytest.raises(ShapeMismatch):
        conv2d_forward(Tensor(np.ones((1, 2, 5, 5))), Tensor(np.ones((1, 3, 3, 3))))


# -- network assembly and dtypes -----------------------------------------------

def test_network_shapes_and_nonnegative_features(rng):
    specs = [LayerSpec("conv2d", out=4), LayerSpec("batchnorm"), LayerSpec("relu"), LayerSpec("gap")]
    net = Network(specs, (3, 6, 6), rng)
    f = net(Tensor(rng.standard_normal((2, 3, 6, 6))))
    assert f.shape == (2, 4) and net.nonnegative_features and np.all(f.data >= 0)


def test_network_must_end_flat(rng):
    with pytest.raises(ShapeMismatch):
        Network([LayerSpec("conv2d", out=2)], (1, 4, 4), rng)


def test_float32_mode(rng):
    old = get_default_dtype()
    set_default_dtype(np.float32)
    try:
        # plain lists pick up the default dtype; float arrays keep their own
        x = Tensor(rng.standard_normal((3, 4)).tolist(), requires_grad=True)
        y = relu(dense_forward(x, Tensor(rng.standard_normal((2, 4)).tolist())))
        backward(y.sum())
        assert y.data.dtype == np.float32 and x.grad.dtype == np.float32
    finally:
        set_default_dtype(old)


@pytest.mark.parametrize("flag,expected", [("1", "numpy"), ("", "numba")])
def test_env_flag_selects_backend(flag, expected):
    import os
    import subprocess
    import sys

    from cosood import _accel
    if expected == "numba" and not _accel.HAVE_NUMBA:
        pytest.skip("numba not installed")
    env = dict(os.environ, COSOOD_DISABLE_NUMBA=flag)
    out = subprocess.run([sys.executable, "-c", "import cosood; print(cosood.backend())"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == expected
