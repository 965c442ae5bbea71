"""Differentiable layer operations on :class:`Tensor`."""
from dataclasses import dataclass

import numpy as np

from .. import kernels
from ..errors import BatchTooSmall, InvalidClassIndex, InvalidGeometry, ShapeMismatch
from .tensor import Tensor, as_tensor, check_finite, get_default_dtype

TRAIN = "train"
EVAL = "eval"


def dense_forward(x, W, b=None):
    """``out[n, i] = sum_j W[i, j] * x[n, j] + b[i]``."""
    x, W = as_tensor(x), as_tensor(W)
    if x.ndim != 2 or W.ndim != 2 or x.shape[1] != W.shape[1]:
        raise ShapeMismatch(f"dense: x {x.shape} incompatible with W {W.shape}")
    if b is not None:
        b = as_tensor(b)
        if b.shape != (W.shape[0],):
            raise ShapeMismatch(f"dense: bias {b.shape} does not match {W.shape[0]} outputs")
    check_finite(x.data, W.data, *(() if b is None else (b.data,)))

    out = x.data @ W.data.T
    if b is not None:
        out = out + b.data

    def bw(g):
        gx = g @ W.data
        gW = g.T @ x.data
        if b is None:
            return gx, gW
        return gx, gW, g.sum(axis=0)

    parents = (x, W) if b is None else (x, W, b)
    return Tensor._from_op(out, parents, bw)


def conv2d_forward(x, K, stride=1, pad=0):
    """Direct cross-correlation of (B, C, H, W) with kernels (O, C, k, k)."""
    x, K = as_tensor(x), as_tensor(K)
    if x.ndim != 4 or K.ndim != 4 or x.shape[1] != K.shape[1]:
        raise ShapeMismatch(f"conv2d: x {x.shape} incompatible with K {K.shape}")
    B, C, H, W = x.shape
    k = K.shape[2]
    if K.shape[3] != k or k % 2 == 0:
        raise InvalidGeometry(f"conv2d: kernel must be square with odd size, got {K.shape[2:]}")
    if stride < 1 or pad < 0 or H < 1 or W < 1:
        raise InvalidGeometry("conv2d: need stride >= 1, pad >= 0, H, W >= 1")
    span_h, span_w = H + 2 * pad - k, W + 2 * pad - k
    if span_h < 0 or span_w < 0 or span_h % stride or span_w % stride:
        raise InvalidGeometry(f"conv2d: ({H}x{W}, pad {pad}, k {k}) does not tile with stride {stride}")
    check_finite(x.data, K.data)
    Ho, Wo = span_h // stride + 1, span_w // stride + 1

    xp = np.pad(x.data, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x.data
    out = kernels.conv2d_forward(xp, K.data, stride, Ho, Wo)

    def bw(g):
        dxp = kernels.conv2d_backward_input(g, K.data, stride, xp.shape[2], xp.shape[3])
        dx = dxp[:, :, pad:pad + H, pad:pad + W] if pad else dxp
        dK = kernels.conv2d_backward_weight(g, xp, stride, k)
        return dx, dK

    return Tensor._from_op(out, (x, K), bw)


def relu(x):
    x = as_tensor(x)
    mask = x.data > 0
    return Tensor._from_op(np.where(mask, x.data, 0.0).astype(x.dtype), (x,), lambda g: (g * mask,))


@dataclass
class BatchNormState:
    """Per-feature affine parameters and running statistics.

    ``momentum`` is the weight of the current batch in the running update.
    """

    gamma: Tensor
    beta: Tensor
    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = 0.1
    epsilon: float = 1e-5
    mode: str = TRAIN

    @classmethod
    def create(cls, dim, momentum=0.1, epsilon=1e-5, dtype=None):
        dtype = dtype or get_default_dtype()
        return cls(
            gamma=Tensor(np.ones(dim, dtype=dtype), requires_grad=True),
            beta=Tensor(np.zeros(dim, dtype=dtype), requires_grad=True),
            running_mean=np.zeros(dim, dtype=dtype),
            running_var=np.ones(dim, dtype=dtype),
            momentum=momentum,
            epsilon=epsilon,
        )

    def __post_init__(self):
        if not 0.0 < self.momentum < 1.0:
            raise ValueError("batch-norm momentum must lie in (0, 1)")
        if self.epsilon <= 0:
            raise ValueError("batch-norm epsilon must be positive")
        if np.any(self.running_var < 0):
            raise ValueError("running variance must be non-negative")
        if self.mode not in (TRAIN, EVAL):
            raise ValueError(f"unknown batch-norm mode {self.mode!r}")

    @property
    def dim(self):
        return self.gamma.shape[0]


def batchnorm_forward(x, st):
    """Batch normalization over the batch axis (and spatial axes for 4-D input)."""
    x = as_tensor(x)
    if x.ndim not in (2, 4) or x.shape[1] != st.dim:
        raise ShapeMismatch(f"batchnorm: input {x.shape} does not match {st.dim} features")
    check_finite(x.data)
    axes = (0,) if x.ndim == 2 else (0, 2, 3)
    bshape = (1, -1) if x.ndim == 2 else (1, -1, 1, 1)
    gamma, beta = st.gamma, st.beta
    gam = gamma.data.reshape(bshape)

    if st.mode == EVAL:
        inv = 1.0 / np.sqrt(st.running_var + st.epsilon)
        xhat = (x.data - st.running_mean.reshape(bshape)) * inv.reshape(bshape)
        out = gam * xhat + beta.data.reshape(bshape)

        def bw_eval(g):
            return (g * gam * inv.reshape(bshape),
                    (g * xhat).sum(axis=axes),
                    g.sum(axis=axes))

        return Tensor._from_op(out, (x, gamma, beta), bw_eval)

    m = x.size // st.dim
    if x.shape[0] < 2:
        raise BatchTooSmall(f"batchnorm in train mode needs batch >= 2, got {x.shape[0]}")
    mean = x.data.mean(axis=axes)
    var = x.data.var(axis=axes)
    inv = 1.0 / np.sqrt(var + st.epsilon)
    xhat = (x.data - mean.reshape(bshape)) * inv.reshape(bshape)
    out = gam * xhat + beta.data.reshape(bshape)

    st.running_mean[...] = (1 - st.momentum) * st.running_mean + st.momentum * mean
    st.running_var[...] = (1 - st.momentum) * st.running_var + st.momentum * var

    def bw_train(g):
        dxhat = g * gam
        dx = (inv.reshape(bshape) / m) * (
            m * dxhat
            - dxhat.sum(axis=axes).reshape(bshape)
            - xhat * (dxhat * xhat).sum(axis=axes).reshape(bshape)
        )
        return dx, (g * xhat).sum(axis=axes), g.sum(axis=axes)

    return Tensor._from_op(out, (x, gamma, beta), bw_train)


def global_avg_pool(x):
    x = as_tensor(x)
    if x.ndim != 4 or x.shape[2] < 1 or x.shape[3] < 1:
        raise ShapeMismatch(f"global_avg_pool expects (B, C, H, W), got {x.shape}")
    H, W = x.shape[2], x.shape[3]
    out = x.data.mean(axis=(2, 3))

    def bw(g):
        return (np.broadcast_to(g[:, :, None, None] / (H * W), x.shape).copy(),)

    return Tensor._from_op(out, (x,), bw)


def l2_normalize(v, epsilon=1e-12):
    """``v / sqrt(|v|^2 + epsilon^2)`` along the last axis."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    v = as_tensor(v)
    check_finite(v.data)
    n = np.sqrt(np.sum(v.data * v.data, axis=-1, keepdims=True) + epsilon * epsilon)
    out = v.data / n

    def bw(g):
        return (g / n - out * np.sum(g * out, axis=-1, keepdims=True) / n,)

    return Tensor._from_op(out, (v,), bw)


def softmax(logits):
    """Row-wise softmax of a plain array, max-subtracted."""
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def softmax_cross_entropy(logits, targets):
    """Mean negative log-likelihood of ``targets`` under softmax(logits)."""
    logits = as_tensor(logits)
    targets = np.asarray(targets)
    if logits.ndim != 2 or targets.shape != (logits.shape[0],):
        raise ShapeMismatch(f"cross-entropy: logits {logits.shape} vs targets {targets.shape}")
    if targets.dtype.kind not in "iu":
        raise InvalidClassIndex("targets must be integer class indices")
    B, C = logits.shape
    if np.any(targets < 0) or np.any(targets >= C):
        raise InvalidClassIndex(f"targets must lie in [0, {C})")
    check_finite(logits.data)
    logp = log_softmax(logits.data)
    rows = np.arange(B)
    loss = -logp[rows, targets].mean()

    def bw(g):
        d = np.exp(logp)
        d[rows, targets] -= 1.0
        return (d * (g / B),)

    return Tensor._from_op(np.asarray(loss, dtype=logits.dtype), (logits,), bw)
