"""Experiment configuration: JSON documents validated into typed objects.

Validation errors are raised as :class:`ConfigError` whose message starts
with the dotted path of the offending field, e.g. ``train.epochs: ...``.
"""
import copy
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

from .data import BlobSpec
from .errors import ConfigError
from .heads import HeadKind
from .ndcore.layers import KINDS
from .train import TrainConfig

DEFAULT_NETWORK = [
    {"kind": "dense", "out": 128}, {"kind": "batchnorm"}, {"kind": "relu"},
    {"kind": "dense", "out": 128}, {"kind": "batchnorm"}, {"kind": "relu"},
]

DEFAULTS = {
    "dataset": {"kind": "blobs", "classes": 4, "dim": 8, "n_per_class": 200, "n_test_per_class": 200,
                "spread": 1.0, "min_separation": 15.0, "seed": 0},
    "network": DEFAULT_NETWORK,
    "head": {"kind": "cosine", "scale": "pred", "hidden": 512},
    "train": {"epochs": 50, "batch_size": 64, "lr0": 0.1, "lr_drops": [0.5, 0.75], "weight_decay": 5e-3,
              "momentum": 0.9, "no_wd_last_layer": True, "exempt_scale_branch": False, "decay_exempt": []},
    "ood": [{"kind": "uniform", "n": 800, "seed": 7}, {"kind": "shifted", "shift": 2.0, "seed": 8}],
    "seeds": [0],
    "out": "runs",
}


@dataclass
class ExperimentConfig:
    dataset: dict
    network: list
    head: dict
    train: dict
    ood: list
    seeds: list
    out: str
    raw: dict = field(default_factory=dict, repr=False)

    def train_config(self, seed, **overrides):
        t = dict(self.train)
        t.update(overrides)
        return TrainConfig(epochs=t["epochs"], batch_size=t["batch_size"], lr0=t["lr0"],
                           lr_drops=tuple(t["lr_drops"]), weight_decay=t["weight_decay"],
                           momentum=t["momentum"], decay_exempt=frozenset(t["decay_exempt"]),
                           no_wd_last_layer=t["no_wd_last_layer"],
                           exempt_scale_branch=t["exempt_scale_branch"], seed=seed)

    def blob_spec(self, split="train"):
        d = self.dataset
        spec = BlobSpec(d["classes"], d["dim"], d["n_per_class"], d["spread"], d["seed"], d["min_separation"])
        if split == "test":
            spec = replace(spec, n_per_class=d["n_test_per_class"])
        return spec

    def resolved(self):
        """The fully resolved config as a plain dict (embedded in reports)."""
        return {"dataset": self.dataset, "network": self.network, "head": self.head, "train": self.train,
                "ood": self.ood, "seeds": self.seeds}

    def with_overrides(self, seeds=None, out=None):
        c = copy.deepcopy(self)
        if seeds:
            c.seeds = [int(s) for s in seeds]
        if out is not None:
            c.out = str(out)
        return c


def _merge(base, over):
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _int(path, v, lo=None):
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(path, f"expected an integer, got {v!r}")
    if lo is not None and v < lo:
        raise ConfigError(path, f"must be >= {lo}, got {v}")
    return v


def _num(path, v, lo=None, strict=False):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(path, f"expected a number, got {v!r}")
    v = float(v)
    if lo is not None and (v <= lo if strict else v < lo):
        raise ConfigError(path, f"must be {'>' if strict else '>='} {lo}, got {v}")
    return v


def _bool(path, v):
    if not isinstance(v, bool):
        raise ConfigError(path, f"expected true/false, got {v!r}")
    return v


def _check_keys(path, d, allowed):
    if not isinstance(d, dict):
        raise ConfigError(path, f"expected an object, got {type(d).__name__}")
    extra = sorted(set(d) - set(allowed))
    if extra:
        raise ConfigError(f"{path}.{extra[0]}" if path else extra[0], "unknown field")


def _dataset(d):
    kind = d.get("kind", "blobs")
    if kind == "blobs":
        _check_keys("dataset", d, DEFAULTS["dataset"])
        return {
            "kind": "blobs",
            "classes": _int("dataset.classes", d["classes"], 2),
            "dim": _int("dataset.dim", d["dim"], 2),
            "n_per_class": _int("dataset.n_per_class", d["n_per_class"], 1),
            "n_test_per_class": _int("dataset.n_test_per_class", d["n_test_per_class"], 1),
            "spread": _num("dataset.spread", d["spread"], 0.0),
            "min_separation": _num("dataset.min_separation", d["min_separation"], 0.0, strict=True),
            "seed": _int("dataset.seed", d["seed"], 0),
        }
    if kind == "files":
        _check_keys("dataset", d, ("kind", "train", "test"))
        for k in ("train", "test"):
            if not isinstance(d.get(k), str):
                raise ConfigError(f"dataset.{k}", "expected a dataset file path")
        return {"kind": "files", "train": d["train"], "test": d["test"]}
    raise ConfigError("dataset.kind", f"expected 'blobs' or 'files', got {kind!r}")


def _network(layers):
    if not isinstance(layers, list) or not layers:
        raise ConfigError("network", "expected a non-empty list of layers")
    out = []
    for i, layer in enumerate(layers):
        p = f"network[{i}]"
        if not isinstance(layer, dict):
            raise ConfigError(p, "expected an object")
        kind = layer.get("kind")
        if kind not in KINDS:
            raise ConfigError(f"{p}.kind", f"expected one of {list(KINDS)}, got {kind!r}")
        _check_keys(p, layer, ("kind", "out", "bias", "kernel", "stride", "pad"))
        clean = {"kind": kind}
        if kind in ("dense", "conv2d"):
            clean["out"] = _int(f"{p}.out", layer.get("out"), 1)
        if kind == "dense" and "bias" in layer:
            clean["bias"] = _bool(f"{p}.bias", layer["bias"])
        if kind == "conv2d":
            clean["kernel"] = _int(f"{p}.kernel", layer.get("kernel", 3), 1)
            clean["stride"] = _int(f"{p}.stride", layer.get("stride", 1), 1)
            clean["pad"] = _int(f"{p}.pad", layer.get("pad", 1), 0)
        out.append(clean)
    return out


def _head(d):
    _check_keys("head", d, DEFAULTS["head"])
    try:
        kind = HeadKind(d["kind"]).value
    except ValueError:
        raise ConfigError("head.kind", f"expected one of {[k.value for k in HeadKind]}, got {d['kind']!r}") from None
    scale = d["scale"]
    if scale != "pred":
        scale = _num("head.scale", scale, 0.0, strict=True)
    return {"kind": kind, "scale": scale, "hidden": _int("head.hidden", d["hidden"], 1)}


def _train(d):
    _check_keys("train", d, DEFAULTS["train"])
    drops = d["lr_drops"]
    if not isinstance(drops, list):
        raise ConfigError("train.lr_drops", "expected a list of fractions")
    drops = [_num(f"train.lr_drops[{i}]", x) for i, x in enumerate(drops)]
    for i, x in enumerate(drops):
        if not 0 < x < 1:
            raise ConfigError(f"train.lr_drops[{i}]", f"must lie in (0, 1), got {x}")
    exempt = d["decay_exempt"]
    if not isinstance(exempt, list) or not all(isinstance(x, str) for x in exempt):
        raise ConfigError("train.decay_exempt", "expected a list of parameter names")
    momentum = _num("train.momentum", d["momentum"], 0.0)
    if momentum >= 1:
        raise ConfigError("train.momentum", f"must be < 1, got {momentum}")
    return {
        "epochs": _int("train.epochs", d["epochs"], 1),
        "batch_size": _int("train.batch_size", d["batch_size"], 1),
        "lr0": _num("train.lr0", d["lr0"], 0.0, strict=True),
        "lr_drops": drops,
        "weight_decay": _num("train.weight_decay", d["weight_decay"], 0.0),
        "momentum": momentum,
        "no_wd_last_layer": _bool("train.no_wd_last_layer", d["no_wd_last_layer"]),
        "exempt_scale_branch": _bool("train.exempt_scale_branch", d["exempt_scale_branch"]),
        "decay_exempt": sorted(exempt),
    }


def _ood(items):
    if not isinstance(items, list):
        raise ConfigError("ood", "expected a list of OOD set specs")
    out = []
    for i, o in enumerate(items):
        p = f"ood[{i}]"
        if not isinstance(o, dict):
            raise ConfigError(p, "expected an object")
        kind = o.get("kind")
        if kind in ("uniform", "gaussian"):
            _check_keys(p, o, ("kind", "n", "seed", "name"))
            c = {"kind": kind, "n": _int(f"{p}.n", o.get("n", 800), 1), "seed": _int(f"{p}.seed", o.get("seed", 0), 0)}
        elif kind == "shifted":
            _check_keys(p, o, ("kind", "shift", "seed", "n_per_class", "name"))
            c = {"kind": kind, "shift": _num(f"{p}.shift", o.get("shift"), 0.0, strict=True),
                 "seed": _int(f"{p}.seed", o.get("seed", 0), 0)}
            if "n_per_class" in o:
                c["n_per_class"] = _int(f"{p}.n_per_class", o["n_per_class"], 1)
        elif kind == "file":
            _check_keys(p, o, ("kind", "path", "name"))
            if not isinstance(o.get("path"), str):
                raise ConfigError(f"{p}.path", "expected a dataset file path")
            c = {"kind": "file", "path": o["path"]}
        else:
            raise ConfigError(f"{p}.kind", f"expected uniform, gaussian, shifted or file, got {kind!r}")
        if "name" in o:
            if not isinstance(o["name"], str) or not o["name"]:
                raise ConfigError(f"{p}.name", "expected a non-empty string")
            c["name"] = o["name"]
        out.append(c)
    names = [ood_name(c) for c in out]
    dup = sorted({n for n in names if names.count(n) > 1})
    if dup:
        raise ConfigError("ood", f"duplicate OOD set name {dup[0]!r}; set 'name' to disambiguate")
    return out


def ood_name(c):
    if "name" in c:
        return c["name"]
    if c["kind"] == "shifted":
        return f"shift{c['shift']:g}"
    if c["kind"] == "file":
        return Path(c["path"]).stem
    return c["kind"]


def parse_config(doc):
    """Validate a config document (dict) on top of the defaults."""
    if not isinstance(doc, dict):
        raise ConfigError("<root>", "expected a JSON object")
    _check_keys("", doc, DEFAULTS)
    merged = _merge(DEFAULTS, doc)
    if "network" in doc:
        merged["network"] = doc["network"]
    if "ood" in doc:
        merged["ood"] = doc["ood"]
    seeds = merged["seeds"]
    if not isinstance(seeds, list) or not seeds:
        raise ConfigError("seeds", "expected a non-empty list of integers")
    seeds = [_int(f"seeds[{i}]", s, 0) for i, s in enumerate(seeds)]
    if not isinstance(merged["out"], str):
        raise ConfigError("out", "expected a directory path")
    return ExperimentConfig(
        dataset=_dataset(merged["dataset"]),
        network=_network(merged["network"]),
        head=_head(merged["head"]),
        train=_train(merged["train"]),
        ood=_ood(merged["ood"]),
        seeds=seeds,
        out=merged["out"],
        raw=doc,
    )


def load_config(path):
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError("<root>", f"invalid JSON ({exc})") from exc
    return parse_config(doc)
