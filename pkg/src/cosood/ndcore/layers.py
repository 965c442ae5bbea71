"""Layer specifications and the feature-extractor stack built from them."""
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..errors import ShapeMismatch
from .ops import EVAL, TRAIN, BatchNormState, batchnorm_forward, conv2d_forward, dense_forward, global_avg_pool, relu
from .tensor import Tensor, get_default_dtype

KINDS = ("dense", "conv2d", "relu", "batchnorm", "gap")


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    out: Optional[int] = None  # dense: output width; conv2d: output channels
    bias: bool = True
    kernel: int = 3
    stride: int = 1
    pad: int = 1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.kind in ("dense", "conv2d") and (self.out is None or self.out < 1):
            raise ValueError(f"{self.kind} layer needs a positive 'out'")

    def to_dict(self):
        d = {"kind": self.kind}
        if self.kind == "dense":
            d.update(out=self.out, bias=self.bias)
        elif self.kind == "conv2d":
            d.update(out=self.out, kernel=self.kernel, stride=self.stride, pad=self.pad)
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def glorot_uniform(rng, shape, fan_in, fan_out, dtype=None):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype or get_default_dtype())


class Network:
    """Ordered layer stack mapping inputs to a flat feature vector ``f``.

    Shapes are propagated at construction, so an incompatible stack fails
    here rather than on the first batch.
    """

    def __init__(self, specs, input_shape, rng=None, dtype=None):
        self.specs = [s if isinstance(s, LayerSpec) else LayerSpec.from_dict(s) for s in specs]
        self.input_shape = tuple(int(n) for n in input_shape)
        dtype = dtype or get_default_dtype()
        rng = rng if rng is not None else np.random.default_rng(0)
        self.params = {}
        self.bn = {}
        shape = self.input_shape
        for i, spec in enumerate(self.specs):
            shape = self._build(i, spec, shape, rng, dtype)
        if len(shape) != 1:
            raise ShapeMismatch(f"network must end in a flat feature vector, got shape {shape}")
        self.feature_dim = shape[0]

    def _build(self, i, spec, shape, rng, dtype):
        pre = f"net.{i}"
        if spec.kind == "dense":
            if len(shape) != 1:
                raise ShapeMismatch(f"layer {i}: dense needs flat input, got {shape}")
            d_in = shape[0]
            self.params[f"{pre}.W"] = Tensor(glorot_uniform(rng, (spec.out, d_in), d_in, spec.out, dtype),
                                              requires_grad=True, name=f"{pre}.W")
            if spec.bias:
                self.params[f"{pre}.b"] = Tensor(np.zeros(spec.out, dtype=dtype), requires_grad=True, name=f"{pre}.b")
            return (spec.out,)
        if spec.kind == "conv2d":
            if len(shape) != 3:
                raise ShapeMismatch(f"layer {i}: conv2d needs (C, H, W) input, got {shape}")
            c, h, w = shape
            k = spec.kernel
            fan_in, fan_out = c * k * k, spec.out * k * k
            self.params[f"{pre}.K"] = Tensor(glorot_uniform(rng, (spec.out, c, k, k), fan_in, fan_out, dtype),
                                              requires_grad=True, name=f"{pre}.K")
            sh, sw = h + 2 * spec.pad - k, w + 2 * spec.pad - k
            if sh < 0 or sw < 0 or sh % spec.stride or sw % spec.stride:
                raise ShapeMismatch(f"layer {i}: conv2d geometry does not tile input {shape}")
            return (spec.out, sh // spec.stride + 1, sw // spec.stride + 1)
        if spec.kind == "batchnorm":
            st = BatchNormState.create(shape[0], dtype=dtype)
            st.gamma.name, st.beta.name = f"{pre}.gamma", f"{pre}.beta"
            self.bn[pre] = st
            self.params[f"{pre}.gamma"] = st.gamma
            self.params[f"{pre}.beta"] = st.beta
            return shape
        if spec.kind == "gap":
            if len(shape) != 3:
                raise ShapeMismatch(f"layer {i}: global average pooling needs (C, H, W) input, got {shape}")
            return (shape[0],)
        return shape  # relu

    @property
    def nonnegative_features(self):
        """True when ``f`` comes straight out of a ReLU (optionally followed by pooling)."""
        tail = [s.kind for s in self.specs]
        while tail and tail[-1] == "gap":
            tail.pop()
        return bool(tail) and tail[-1] == "relu"

    def set_mode(self, mode):
        for st in self.bn.values():
            st.mode = mode

    def train(self):
        self.set_mode(TRAIN)

    def eval(self):
        self.set_mode(EVAL)

    def buffers(self):
        out = {}
        for pre, st in self.bn.items():
            out[f"{pre}.running_mean"] = st.running_mean
            out[f"{pre}.running_var"] = st.running_var
        return out

    def forward(self, x):
        h = x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=next(iter(self.params.values())).dtype
                                                               if self.params else get_default_dtype()))
        if h.shape[1:] != self.input_shape:
            raise ShapeMismatch(f"network expects inputs of shape (B, {self.input_shape}), got {h.shape}")
        for i, spec in enumerate(self.specs):
            pre = f"net.{i}"
            if spec.kind == "dense":
                h = dense_forward(h, self.params[f"{pre}.W"], self.params.get(f"{pre}.b"))
            elif spec.kind == "conv2d":
                h = conv2d_forward(h, self.params[f"{pre}.K"], spec.stride, spec.pad)
            elif spec.kind == "relu":
                h = relu(h)
            elif spec.kind == "batchnorm":
                h = batchnorm_forward(h, self.bn[pre])
            else:
                h = global_avg_pool(h)
        return h

    __call__ = forward
