"""Synthetic ID/OOD datasets and the binary dataset file format.

Random streams come from counter-based Philox generators keyed by
``(seed, stream)``, so every generator is reproducible across platforms and
the train/test splits of one spec never share a stream.
"""
import struct
from dataclasses import asdict, dataclass, field
from enum import IntEnum
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import BadMagic, InvalidParams, ShapeMismatch, VersionMismatch

MAGIC = b"COSOOD-DS\0"
FORMAT_VERSION = 1

_STREAM_FRAME = 0
_STREAM_SPLIT = {"train": 1, "test": 2}
_STREAM_SHIFT_DIR = 3
_STREAM_SHIFT_SAMPLES = 4
_STREAM_NOISE = 5


class Role(IntEnum):
    ID_TRAIN = 0
    ID_TEST = 1
    OOD = 2


@dataclass
class Dataset:
    features: np.ndarray
    labels: Optional[np.ndarray]
    role: Role
    name: str
    num_classes: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float32)
        self.role = Role(self.role)
        if self.features.ndim < 2 or len(self.features) < 1:
            raise InvalidParams("dataset needs at least one sample")
        if not np.all(np.isfinite(self.features)):
            raise InvalidParams("dataset features must be finite")
        if (self.labels is None) != (self.role is Role.OOD):
            raise InvalidParams("labels must be present iff the role is not OOD")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int32)
            if self.labels.shape != (len(self.features),):
                raise ShapeMismatch("one label per sample required")
            if self.num_classes <= 0:
                self.num_classes = int(self.labels.max()) + 1
            if self.labels.min() < 0 or self.labels.max() >= self.num_classes:
                raise ShapeMismatch(f"labels must lie in [0, {self.num_classes})")

    def __len__(self):
        return len(self.features)

    @property
    def sample_shape(self):
        return self.features.shape[1:]


@dataclass(frozen=True)
class BlobSpec:
    """Isotropic Gaussian blobs, one per class."""

    classes: int = 4
    dim: int = 8
    n_per_class: int = 200
    spread: float = 1.0
    seed: int = 0
    min_separation: float = 6.0

    def validate(self):
        if self.classes < 2 or self.dim < 2:
            raise InvalidParams("blobs need classes >= 2 and dim >= 2")
        if self.n_per_class < 1:
            raise InvalidParams("n_per_class must be >= 1")
        if self.spread < 0 or not np.isfinite(self.spread):
            raise InvalidParams("spread must be a finite non-negative number")
        if self.seed < 0:
            raise InvalidParams("seed must be non-negative")

    @property
    def mean_distance(self):
        return max(self.min_separation, 4.0 * self.spread)


def rng_for(seed, *stream):
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), *map(int, stream)])))


def blob_means(spec):
    """Class means with pairwise distance at least ``spec.mean_distance``."""
    spec.validate()
    rng = rng_for(spec.seed, _STREAM_FRAME)
    C, D, d = spec.classes, spec.dim, spec.mean_distance
    if C <= D:
        q, r = np.linalg.qr(rng.standard_normal((D, D)))
        q = q * np.sign(np.diag(r))
        return (d / np.sqrt(2.0)) * q[:, :C].T
    pts = rng.standard_normal((C, D))
    gaps = np.linalg.norm(pts[:, None] - pts[None], axis=-1)
    closest = gaps[~np.eye(C, dtype=bool)].min()
    return pts * (d / closest)


def gen_blobs(classes, dim, n_per_class, spread, seed, split="train", min_separation=6.0):
    spec = BlobSpec(classes, dim, n_per_class, float(spread), int(seed), min_separation)
    return blobs_from_spec(spec, split)


def blobs_from_spec(spec, split="train"):
    if split not in _STREAM_SPLIT:
        raise InvalidParams(f"split must be 'train' or 'test', got {split!r}")
    means = blob_means(spec)
    rng = rng_for(spec.seed, _STREAM_SPLIT[split])
    noise = rng.standard_normal((spec.classes, spec.n_per_class, spec.dim))
    x = means[:, None, :] + spec.spread * noise
    labels = np.repeat(np.arange(spec.classes), spec.n_per_class)
    role = Role.ID_TRAIN if split == "train" else Role.ID_TEST
    return Dataset(x.reshape(-1, spec.dim), labels, role, f"blobs-{split}", spec.classes,
                   meta={"generator": "blobs", "spec": asdict(spec), "split": split})


def _shift_directions(means, rng):
    C, D = means.shape
    if C < D:
        # unit directions orthogonal to the span of the class means
        q, _ = np.linalg.qr(np.concatenate([means.T, rng.standard_normal((D, D - C))], axis=1))
        basis = q[:, C:]
        u = rng.standard_normal((C, D - C)) @ basis.T
    else:
        u = rng.standard_normal((C, D))
    return u / np.linalg.norm(u, axis=1, keepdims=True)


def gen_shifted_ood(base, shift, seed, n_per_class=None):
    """Blobs whose means sit ``shift * spread`` away from the ID means."""
    if not shift > 0:
        raise InvalidParams("shift must be positive (shift 0 reproduces the ID distribution)")
    base.validate()
    if base.spread <= 0:
        raise InvalidParams("shifted OOD needs a positive base spread")
    means = blob_means(base)
    u = _shift_directions(means, rng_for(seed, _STREAM_SHIFT_DIR))
    centers = means + shift * base.spread * u
    n = n_per_class or base.n_per_class
    rng = rng_for(seed, _STREAM_SHIFT_SAMPLES)
    x = centers[:, None, :] + base.spread * rng.standard_normal((base.classes, n, base.dim))
    return Dataset(x.reshape(-1, base.dim), None, Role.OOD, f"shift-{shift:g}",
                   meta={"generator": "shifted", "base": asdict(base), "shift": shift, "seed": seed})


def feature_bounds(ds):
    """Per-feature (low, high) bounding box of a dataset."""
    flat = ds.features.reshape(len(ds), -1).astype(np.float64)
    return flat.min(axis=0), flat.max(axis=0)


def gen_noise_ood(kind, shape, n, seed, low, high):
    """Gaussian or uniform noise over the box ``[low, high]`` (per feature).

    Uniform noise fills the box; Gaussian noise is centred on it with a
    per-feature std of a quarter of the box width.
    """
    if n < 1:
        raise InvalidParams("n must be >= 1")
    shape = tuple(int(s) for s in shape)
    size = int(np.prod(shape))
    low = np.broadcast_to(np.asarray(low, dtype=np.float64).ravel(), (size,)) if np.ndim(low) else np.full(size, float(low))
    high = np.broadcast_to(np.asarray(high, dtype=np.float64).ravel(), (size,)) if np.ndim(high) else np.full(size, float(high))
    if np.any(high < low):
        raise InvalidParams("noise box needs high >= low")
    rng = rng_for(seed, _STREAM_NOISE)
    if kind == "uniform":
        x = low + (high - low) * rng.random((n, size))
    elif kind == "gaussian":
        x = 0.5 * (low + high) + 0.25 * (high - low) * rng.standard_normal((n, size))
    else:
        raise InvalidParams(f"noise kind must be 'gaussian' or 'uniform', got {kind!r}")
    x = x.reshape((n,) + shape).astype(np.float32)
    if kind == "uniform":
        # float32 rounding must not leave the box
        x = np.clip(x, low.astype(np.float32).reshape(shape), high.astype(np.float32).reshape(shape))
    return Dataset(x, None, Role.OOD, kind, meta={"generator": "noise", "kind": kind, "n": n, "seed": seed})


def write_dataset(ds, path):
    header = bytearray(MAGIC)
    header += struct.pack("<BB", FORMAT_VERSION, int(ds.role))
    header += struct.pack("<I", ds.features.ndim)
    header += struct.pack(f"<{ds.features.ndim}I", *ds.features.shape)
    header += struct.pack("<I", ds.num_classes if ds.labels is not None else 0)
    name = ds.name.encode("utf-8")
    header += struct.pack("<I", len(name)) + name
    body = ds.features.astype("<f4").tobytes()
    if ds.labels is not None:
        body += ds.labels.astype("<i4").tobytes()
    Path(path).write_bytes(bytes(header) + body)


def read_dataset(path):
    buf = Path(path).read_bytes()
    if buf[:len(MAGIC)] != MAGIC:
        raise BadMagic(f"{path}: not a cosood dataset file")
    pos = len(MAGIC)
    try:
        version, role = struct.unpack_from("<BB", buf, pos)
        pos += 2
        (rank,) = struct.unpack_from("<I", buf, pos)
        pos += 4
        shape = struct.unpack_from(f"<{rank}I", buf, pos)
        pos += 4 * rank
        (n_classes,) = struct.unpack_from("<I", buf, pos)
        pos += 4
        (name_len,) = struct.unpack_from("<I", buf, pos)
        pos += 4
    except struct.error as exc:
        raise ShapeMismatch(f"{path}: truncated header") from exc
    if version != FORMAT_VERSION:
        raise VersionMismatch(f"{path}: dataset version {version}, this build reads version {FORMAT_VERSION}")
    name = buf[pos:pos + name_len].decode("utf-8")
    pos += name_len
    n_feat = int(np.prod(shape))
    n_lab = shape[0] if n_classes else 0
    if len(buf) - pos != 4 * (n_feat + n_lab):
        raise ShapeMismatch(f"{path}: payload size does not match header extents {shape}")
    feats = np.frombuffer(buf, dtype="<f4", count=n_feat, offset=pos).reshape(shape).astype(np.float32)
    labels = None
    if n_classes:
        labels = np.frombuffer(buf, dtype="<i4", count=n_lab, offset=pos + 4 * n_feat).astype(np.int32)
        if labels.min() < 0 or labels.max() >= n_classes:
            raise ShapeMismatch(f"{path}: label outside [0, {n_classes})")
    try:
        return Dataset(feats, labels, Role(role), name, n_classes)
    except ValueError as exc:
        if isinstance(exc, ShapeMismatch):
            raise
        raise ShapeMismatch(f"{path}: {exc}") from exc
