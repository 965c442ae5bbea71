"""Versioned checkpoint files.

Layout: a UTF-8 text header terminated by ``end\\n``, then every tensor as
little-endian float64 in manifest order::

    COSOOD-CKPT
    version 1
    head cosine
    meta {...json...}
    param net.0.W 64,8
    ...
    end
"""
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CorruptCheckpoint, VersionMismatch
from .model import Model, ModelSpec

FORMAT_ID = "COSOOD-CKPT"
FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    head_kind: str
    values: dict  # name -> ndarray, parameters then buffers
    meta: dict = field(default_factory=dict)
    format_version: int = FORMAT_VERSION

    @property
    def seed(self):
        return self.meta.get("train", {}).get("seed")


def checkpoint_from_model(model, cfg=None, final_epoch=None, extra=None):
    meta = {
        "model": model.spec.to_dict(),
        "input_shape": list(model.net.input_shape),
        "num_classes": model.num_classes,
        "dtype": np.dtype(model.dtype).name,
    }
    if cfg is not None:
        meta["train"] = cfg.to_dict()
    if final_epoch is not None:
        meta["final_epoch"] = final_epoch
    if extra:
        meta.update(extra)
    values = {k: np.array(v, copy=True) for k, v in model.state().items()}
    return Checkpoint(model.kind.value, values, meta)


def model_from_checkpoint(ckpt):
    m = ckpt.meta
    model = Model(ModelSpec.from_dict(m["model"]), m["input_shape"], m["num_classes"],
                  dtype=np.dtype(m.get("dtype", "float64")).type)
    model.load_state(ckpt.values)
    model.eval()
    return model


def _dims(shape):
    return ",".join(str(d) for d in shape) if shape else "-"


def dumps(ckpt):
    lines = [FORMAT_ID, f"version {ckpt.format_version}", f"head {ckpt.head_kind}",
             "meta " + json.dumps(ckpt.meta, sort_keys=True, separators=(",", ":"))]
    for name, arr in ckpt.values.items():
        lines.append(f"param {name} {_dims(np.shape(arr))}")
    lines.append("end")
    header = ("\n".join(lines) + "\n").encode("utf-8")
    body = b"".join(np.ascontiguousarray(arr, dtype="<f8").tobytes() for arr in ckpt.values.values())
    return header + body


def loads(buf, source="<bytes>"):
    end = buf.find(b"\nend\n")
    if end < 0:
        raise CorruptCheckpoint(f"{source}: header terminator missing")
    try:
        lines = buf[:end].decode("utf-8").split("\n")
    except UnicodeDecodeError as exc:
        raise CorruptCheckpoint(f"{source}: header is not UTF-8") from exc
    if not lines or lines[0] != FORMAT_ID:
        raise CorruptCheckpoint(f"{source}: missing {FORMAT_ID} format id")
    try:
        version = int(lines[1].split(" ", 1)[1]) if lines[1].startswith("version ") else None
    except (IndexError, ValueError):
        version = None
    if version is None:
        raise CorruptCheckpoint(f"{source}: malformed version line")
    if version != FORMAT_VERSION:
        raise VersionMismatch(f"{source}: checkpoint version {version}, this build reads version {FORMAT_VERSION}")
    try:
        head = lines[2].split(" ", 1)[1]
        meta = json.loads(lines[3].split(" ", 1)[1])
        manifest = []
        for line in lines[4:]:
            tag, name, dims = line.split(" ")
            if tag != "param":
                raise ValueError(line)
            shape = () if dims == "-" else tuple(int(d) for d in dims.split(","))
            manifest.append((name, shape))
    except (IndexError, ValueError) as exc:
        raise CorruptCheckpoint(f"{source}: malformed header ({exc})") from exc

    body = buf[end + len(b"\nend\n"):]
    expected = 8 * sum(int(np.prod(s)) for _, s in manifest)
    if len(body) != expected:
        raise CorruptCheckpoint(f"{source}: payload has {len(body)} bytes, manifest needs {expected}")
    values = {}
    offset = 0
    dtype = np.dtype(meta.get("dtype", "float64"))
    for name, shape in manifest:
        count = int(np.prod(shape))
        arr = np.frombuffer(body, dtype="<f8", count=count, offset=offset).reshape(shape)
        values[name] = arr.astype(dtype)
        offset += 8 * count
    return Checkpoint(head, values, meta, version)


def save_checkpoint(ckpt, path):
    Path(path).write_bytes(dumps(ckpt))


def load_checkpoint(path):
    return loads(Path(path).read_bytes(), str(path))
