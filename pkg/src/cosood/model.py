"""A feature network plus one output head, with named parameters and buffers."""
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .heads import DEFAULT_HIDDEN, HeadKind, create_head, head_forward
from .ndcore import EVAL, TRAIN, LayerSpec, Network, Tensor


@dataclass
class ModelSpec:
    layers: list
    head: HeadKind = HeadKind.COSINE
    scale: Optional[Union[str, float]] = "pred"
    hidden: int = DEFAULT_HIDDEN

    def __post_init__(self):
        self.layers = [s if isinstance(s, LayerSpec) else LayerSpec.from_dict(s) for s in self.layers]
        self.head = HeadKind(self.head)
        if self.head is HeadKind.STANDARD:
            self.scale = None
        elif self.head is HeadKind.SCALED_LOGIT:
            self.scale = "pred"
        elif self.scale != "pred":
            self.scale = float(self.scale)

    def to_dict(self):
        return {"layers": [s.to_dict() for s in self.layers], "head": self.head.value,
                "scale": self.scale, "hidden": self.hidden}

    @classmethod
    def from_dict(cls, d):
        return cls(layers=d["layers"], head=d["head"], scale=d.get("scale", "pred"),
                   hidden=d.get("hidden", DEFAULT_HIDDEN))


class Model:
    def __init__(self, spec, input_shape, num_classes, rng=None, dtype=None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.spec = spec
        self.num_classes = int(num_classes)
        self.net = Network(spec.layers, input_shape, rng, dtype)
        self.head = create_head(spec.head, self.net.feature_dim, num_classes, spec.scale, rng, spec.hidden, dtype)

    @property
    def kind(self):
        return self.head.kind

    @property
    def dtype(self):
        return self.head.W.dtype

    def parameters(self):
        out = dict(self.net.params)
        out.update(self.head.parameters())
        return out

    def buffers(self):
        out = self.net.buffers()
        out.update(self.head.buffers())
        return out

    def state(self):
        """Every parameter and buffer value keyed by name, in a stable order."""
        out = {k: t.data for k, t in self.parameters().items()}
        out.update(self.buffers())
        return out

    def load_state(self, values):
        own = self.state()
        if set(own) != set(values):
            missing = sorted(set(own) - set(values))
            extra = sorted(set(values) - set(own))
            raise KeyError(f"state mismatch; missing {missing}, unexpected {extra}")
        for name, arr in own.items():
            src = np.asarray(values[name])
            if src.shape != arr.shape:
                raise ValueError(f"{name}: shape {src.shape} != {arr.shape}")
            arr[...] = src

    def set_mode(self, mode):
        self.net.set_mode(mode)
        self.head.set_mode(mode)

    def train(self):
        self.set_mode(TRAIN)

    def eval(self):
        self.set_mode(EVAL)

    def features(self, x):
        f = self.net(x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=self.dtype)))
        if self.net.nonnegative_features and np.any(f.data < 0):
            raise AssertionError("ReLU features must be non-negative")
        return f

    def forward(self, x):
        return head_forward(self.features(x), self.head)

    __call__ = forward
