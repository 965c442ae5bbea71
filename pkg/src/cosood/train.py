"""SGD training with a step learning-rate schedule and selective weight decay."""
import logging
from dataclasses import asdict, dataclass

import numpy as np

from .data import rng_for
from .errors import DivergedLoss, EmptyDataset, NonFiniteGradient
from .heads import head_loss
from .model import Model, ModelSpec
from .ndcore import Tensor, backward

log = logging.getLogger(__name__)

_STREAM_INIT = 10
_STREAM_SHUFFLE = 11


@dataclass
class TrainConfig:
    epochs: int = 50
    batch_size: int = 64
    lr0: float = 0.1
    lr_drops: tuple = (0.5, 0.75)
    weight_decay: float = 5e-4
    momentum: float = 0.9
    decay_exempt: frozenset = frozenset()
    no_wd_last_layer: bool = False
    exempt_scale_branch: bool = False
    seed: int = 0

    def __post_init__(self):
        self.lr_drops = tuple(sorted(float(d) for d in self.lr_drops))
        self.decay_exempt = frozenset(self.decay_exempt)
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if not self.lr0 > 0:
            raise ValueError("lr0 must be positive")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be non-negative")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must lie in [0, 1)")
        if any(not 0 < d < 1 for d in self.lr_drops):
            raise ValueError("lr drops must be fractions in (0, 1)")

    def to_dict(self):
        d = asdict(self)
        d["lr_drops"] = list(self.lr_drops)
        d["decay_exempt"] = sorted(self.decay_exempt)
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def lr_at(cfg, step, total_steps):
    """Learning rate at ``step``: lr0 divided by 10 at each drop fraction passed."""
    frac = step / max(total_steps, 1)
    drops = sum(frac >= d for d in cfg.lr_drops)
    return cfg.lr0 / 10 ** drops


def sgd_step(params, grads, cfg, step_index, total_steps, velocity, exempt=None):
    """One momentum-SGD update in place.

    ``v <- momentum * v + g + wd * p`` and ``p <- p - lr * v``, with ``wd = 0``
    for names in ``exempt`` (defaults to ``cfg.decay_exempt``). All gradients
    are checked before anything is written.
    """
    exempt = cfg.decay_exempt if exempt is None else exempt
    for name, g in grads.items():
        if g is not None and not np.all(np.isfinite(g)):
            raise NonFiniteGradient(f"non-finite gradient for parameter {name}")
    lr = lr_at(cfg, step_index, total_steps)
    for name, p in params.items():
        g = grads.get(name)
        wd = 0.0 if name in exempt else cfg.weight_decay
        v = velocity.get(name)
        if v is None:
            v = velocity[name] = np.zeros_like(p.data)
        v *= cfg.momentum
        if g is not None:
            v += g
        if wd:
            v += wd * p.data
        p.data -= lr * v
    return params


@dataclass
class EpochLog:
    epoch: int
    loss: float
    accuracy: float
    lr: float
    mean_scale: float


def has_batchnorm(model):
    return bool(model.buffers())


def build_model(spec, input_shape, num_classes, seed, dtype=None):
    return Model(spec, input_shape, num_classes, rng_for(seed, _STREAM_INIT), dtype)


def exempt_names(model, cfg):
    """Parameter names trained without weight decay.

    With ``no_wd_last_layer`` a cosine head's class weights are exempted; the
    scale branch joins them only when ``exempt_scale_branch`` is also set,
    because an undecayed scale branch tends to run away (see README).
    """
    names = set(cfg.decay_exempt)
    if cfg.no_wd_last_layer and model.kind.is_cosine:
        if cfg.exempt_scale_branch:
            names.update(model.head.last_layer_names())
        else:
            names.add("head.W")
    return frozenset(names)


def train_model(spec, dataset, cfg, dtype=None):
    """Train a fresh model on ``dataset``; returns ``(model, checkpoint, epoch_logs)``."""
    from .checkpoint import checkpoint_from_model

    if dataset.labels is None or len(dataset) == 0:
        raise EmptyDataset("training needs a labelled, non-empty dataset")
    counts = np.bincount(dataset.labels, minlength=dataset.num_classes)
    if dataset.num_classes < 2 or np.any(counts == 0):
        raise EmptyDataset("training needs >= 2 classes with >= 1 sample each")

    spec = spec if isinstance(spec, ModelSpec) else ModelSpec.from_dict(spec)
    model = build_model(spec, dataset.sample_shape, dataset.num_classes, cfg.seed, dtype)
    x_all = dataset.features.astype(model.dtype)
    y_all = dataset.labels.astype(np.int64)
    n = len(dataset)
    bs = min(cfg.batch_size, n)
    need_two = has_batchnorm(model)

    batch_sizes = [min(bs, n - start) for start in range(0, n, bs)]
    if need_two and batch_sizes[-1] < 2:
        log.warning("dropping a trailing batch of size 1 each epoch (batch norm needs >= 2)")
        batch_sizes.pop()
    if not batch_sizes:
        raise EmptyDataset("no usable batch: batch norm needs at least 2 samples")
    steps_per_epoch = len(batch_sizes)
    total_steps = cfg.epochs * steps_per_epoch

    params = model.parameters()
    exempt = exempt_names(model, cfg)
    velocity = {}
    shuffle_rng = rng_for(cfg.seed, _STREAM_SHUFFLE)
    logs = []
    step = 0
    model.train()
    for epoch in range(cfg.epochs):
        order = shuffle_rng.permutation(n)
        loss_sum = 0.0
        correct = 0
        seen = 0
        scale_sum = 0.0
        for b, size in enumerate(batch_sizes):
            idx = order[b * bs:b * bs + size]
            out = model(Tensor(x_all[idx]))
            loss = head_loss(out, y_all[idx])
            if not np.isfinite(loss.item()):
                raise DivergedLoss(f"loss became {loss.item()} at epoch {epoch}, step {step}")
            for p in params.values():
                p.grad = None
            backward(loss)
            lr = lr_at(cfg, step, total_steps)
            sgd_step(params, {k: p.grad for k, p in params.items()}, cfg, step, total_steps, velocity, exempt)
            step += 1
            loss_sum += loss.item() * size
            correct += int(np.sum(out.pred_class == y_all[idx]))
            scale_sum += float(out.scale.sum())
            seen += size
        logs.append(EpochLog(epoch, loss_sum / seen, correct / seen, lr, scale_sum / seen))
        log.debug("epoch %d loss %.5f acc %.4f", epoch, logs[-1].loss, logs[-1].accuracy)
    model.eval()
    ckpt = checkpoint_from_model(model, cfg, final_epoch=cfg.epochs)
    return model, ckpt, logs


def predict(model, x, batch_size=1024):
    """Eval-mode forward pass over ``x`` in chunks; returns the list of head outputs."""
    model.eval()
    x = np.asarray(x, dtype=model.dtype)
    return [model(Tensor(x[i:i + batch_size])) for i in range(0, len(x), batch_size)]


def accuracy(model, dataset):
    outs = predict(model, dataset.features)
    pred = np.concatenate([o.pred_class for o in outs])
    return float(np.mean(pred == dataset.labels))
