"""Output heads: standard softmax, scaled logits, and scaled cosine softmax.

Every head maps a feature batch ``f`` (B x D) to a :class:`HeadOutput`. For
cosine heads the class scores are cosines between ``f`` and the class-weight
rows, and the detection score is the largest cosine, not a softmax value.
"""
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from .errors import NonFiniteInput, ShapeMismatch
from .ndcore import (
    BatchNormState,
    Tensor,
    batchnorm_forward,
    dense_forward,
    exp,
    glorot_uniform,
    get_default_dtype,
    l2_normalize,
    softmax,
    softmax_cross_entropy,
)

DEFAULT_HIDDEN = 512


class HeadKind(str, Enum):
    STANDARD = "standard"
    SCALED_LOGIT = "scaled_logit"
    COSINE = "cosine"
    TWO_FC_COSINE = "two_fc_cosine"

    @property
    def is_cosine(self):
        return self in (HeadKind.COSINE, HeadKind.TWO_FC_COSINE)


@dataclass
class FixedScale:
    s: float

    def __post_init__(self):
        if not self.s > 0:
            raise ValueError(f"fixed scale must be positive, got {self.s}")


@dataclass
class PredictedScale:
    """Scale branch ``s = exp(BN(w_s . f + b_s))``."""

    w_s: Tensor  # (1, D)
    b_s: Tensor  # (1,)
    bn: BatchNormState

    @classmethod
    def create(cls, dim, dtype=None):
        dtype = dtype or get_default_dtype()
        bn = BatchNormState.create(1, dtype=dtype)
        bn.gamma.name, bn.beta.name = "head.bn.gamma", "head.bn.beta"
        return cls(
            w_s=Tensor(np.zeros((1, dim), dtype=dtype), requires_grad=True, name="head.w_s"),
            b_s=Tensor(np.zeros(1, dtype=dtype), requires_grad=True, name="head.b_s"),
            bn=bn,
        )


@dataclass
class HeadParams:
    kind: HeadKind
    W: Tensor
    b: Optional[Tensor] = None
    scale: object = None  # FixedScale | PredictedScale | None
    W1: Optional[Tensor] = None
    b1: Optional[Tensor] = None

    def __post_init__(self):
        self.kind = HeadKind(self.kind)
        if self.kind.is_cosine and self.b is not None:
            raise ValueError("cosine heads carry no class bias")
        if not self.kind.is_cosine and self.b is None:
            raise ValueError(f"{self.kind.value} head needs a class bias")
        if (self.W1 is not None) != (self.kind is HeadKind.TWO_FC_COSINE):
            raise ValueError("the extra FC layer is present iff the head is two_fc_cosine")
        if self.kind is HeadKind.STANDARD and self.scale is not None:
            raise ValueError("standard head has no scale")
        if self.kind is HeadKind.SCALED_LOGIT and not isinstance(self.scale, PredictedScale):
            raise ValueError("scaled_logit head needs a predicted scale")
        if self.kind.is_cosine and not isinstance(self.scale, (FixedScale, PredictedScale)):
            raise ValueError("cosine heads need a fixed or predicted scale")

    @property
    def num_classes(self):
        return self.W.shape[0]

    def parameters(self):
        """Trainable tensors keyed by stable names."""
        out = {"head.W": self.W}
        if self.b is not None:
            out["head.b"] = self.b
        if self.W1 is not None:
            out["head.W1"] = self.W1
            out["head.b1"] = self.b1
        if isinstance(self.scale, PredictedScale):
            out["head.w_s"] = self.scale.w_s
            out["head.b_s"] = self.scale.b_s
            out["head.bn.gamma"] = self.scale.bn.gamma
            out["head.bn.beta"] = self.scale.bn.beta
        return out

    def last_layer_names(self):
        """Parameters treated as the normalized last layer for weight-decay exemption."""
        names = ["head.W"]
        if isinstance(self.scale, PredictedScale):
            names += ["head.w_s", "head.b_s", "head.bn.gamma", "head.bn.beta"]
        return names

    def buffers(self):
        if isinstance(self.scale, PredictedScale):
            return {"head.bn.running_mean": self.scale.bn.running_mean,
                    "head.bn.running_var": self.scale.bn.running_var}
        return {}

    def set_mode(self, mode):
        if isinstance(self.scale, PredictedScale):
            self.scale.bn.mode = mode

    def scale_spec(self):
        if isinstance(self.scale, FixedScale):
            return float(self.scale.s)
        return "pred" if isinstance(self.scale, PredictedScale) else None


def create_head(kind, feature_dim, num_classes, scale="pred", rng=None, hidden=DEFAULT_HIDDEN, dtype=None):
    """Fresh head parameters; ``scale`` is ``"pred"`` or a positive number."""
    kind = HeadKind(kind)
    dtype = dtype or get_default_dtype()
    rng = rng if rng is not None else np.random.default_rng(0)
    W1 = b1 = None
    d = feature_dim
    if kind is HeadKind.TWO_FC_COSINE:
        W1 = Tensor(glorot_uniform(rng, (hidden, d), d, hidden, dtype), requires_grad=True, name="head.W1")
        b1 = Tensor(np.zeros(hidden, dtype=dtype), requires_grad=True, name="head.b1")
        d = hidden
    W = Tensor(glorot_uniform(rng, (num_classes, d), d, num_classes, dtype), requires_grad=True, name="head.W")
    b = None
    if not kind.is_cosine:
        b = Tensor(np.zeros(num_classes, dtype=dtype), requires_grad=True, name="head.b")
    if kind is HeadKind.STANDARD:
        sc = None
    elif kind is HeadKind.SCALED_LOGIT or scale == "pred":
        sc = PredictedScale.create(d, dtype)
    else:
        sc = FixedScale(float(scale))
    return HeadParams(kind=kind, W=W, b=b, scale=sc, W1=W1, b1=b1)


@dataclass
class HeadOutput:
    class_scores: Tensor  # cosines for cosine heads, logits otherwise
    scaled_logits: Tensor
    probabilities: np.ndarray
    scale: np.ndarray
    detection_score: np.ndarray

    @property
    def pred_class(self):
        # np.argmax breaks ties toward the lowest index
        return np.argmax(self.class_scores.data, axis=1)

    @property
    def pred_prob(self):
        return self.probabilities[np.arange(len(self.probabilities)), self.pred_class]


def _check_features(f, p, d):
    if f.ndim != 2 or f.shape[1] != d:
        raise ShapeMismatch(f"{p.kind.value} head expects features (B, {d}), got {f.shape}")


def _predict_scale(f, ps):
    z = dense_forward(f, ps.w_s, ps.b_s)
    s = exp(batchnorm_forward(z, ps.bn))
    if not np.all(s.data > 0):
        raise NonFiniteInput("predicted scale underflowed to zero")
    return s  # (B, 1)


def _scale_tensor(f, p):
    if isinstance(p.scale, PredictedScale):
        return _predict_scale(f, p.scale)
    B = f.shape[0]
    return Tensor(np.full((B, 1), p.scale.s, dtype=f.dtype))


def standard_head(f, p):
    f = f if isinstance(f, Tensor) else Tensor(f)
    _check_features(f, p, p.W.shape[1])
    logits = dense_forward(f, p.W, p.b)
    probs = softmax(logits.data)
    return HeadOutput(logits, logits, probs, np.ones(f.shape[0], dtype=f.dtype), probs.max(axis=1))


def scaled_logit_head(f, p):
    f = f if isinstance(f, Tensor) else Tensor(f)
    _check_features(f, p, p.W.shape[1])
    logits = dense_forward(f, p.W, p.b)
    s = _predict_scale(f, p.scale)
    scaled = logits * s
    probs = softmax(scaled.data)
    return HeadOutput(logits, scaled, probs, s.data[:, 0].copy(), probs.max(axis=1))


def cosine_head(f, p):
    f = f if isinstance(f, Tensor) else Tensor(f)
    _check_features(f, p, p.W.shape[1])
    cos = dense_forward(l2_normalize(f), l2_normalize(p.W))
    s = _scale_tensor(f, p)  # from the unnormalized f
    scaled = cos * s
    probs = softmax(scaled.data)
    return HeadOutput(cos, scaled, probs, s.data[:, 0].copy(), cos.data.max(axis=1))


def two_fc_cosine_head(f, p):
    f = f if isinstance(f, Tensor) else Tensor(f)
    _check_features(f, p, p.W1.shape[1])
    g = dense_forward(f, p.W1, p.b1)
    cos = dense_forward(l2_normalize(g), l2_normalize(p.W))
    s = _scale_tensor(g, p)
    scaled = cos * s
    probs = softmax(scaled.data)
    return HeadOutput(cos, scaled, probs, s.data[:, 0].copy(), cos.data.max(axis=1))


_DISPATCH = {
    HeadKind.STANDARD: standard_head,
    HeadKind.SCALED_LOGIT: scaled_logit_head,
    HeadKind.COSINE: cosine_head,
    HeadKind.TWO_FC_COSINE: two_fc_cosine_head,
}


def head_forward(f, p):
    return _DISPATCH[p.kind](f, p)


def head_loss(out, targets):
    return softmax_cross_entropy(out.scaled_logits, targets)
