"""Experiment drivers shared by the CLI: data loading, multi-seed training,
evaluation, the ablation table and the scale sweep.

Every function here is deterministic given the config: each seed's job
draws only from its own keyed random streams, so running jobs on several
threads gives the same numbers as running them one after another.
"""
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .config import ood_name
from .data import blobs_from_spec, feature_bounds, gen_noise_ood, gen_shifted_ood, read_dataset
from .detect import aggregate_reports, compute_metrics, ensemble_scores, model_scores, score_set
from .model import ModelSpec
from .train import train_model

# (row, label, cosine, single_fc, scale, without_wd, head, scale_spec, no_wd_last_layer)
ABLATION_ROWS = (
    (1, "baseline", False, True, "none", False, "standard", "pred", False),
    (2, "scaled logit", False, True, "pred", False, "scaled_logit", "pred", False),
    (3, "cosine s=16", True, True, "16", False, "cosine", 16.0, False),
    (4, "cosine s=32", True, True, "32", False, "cosine", 32.0, False),
    (5, "cosine s=64", True, True, "64", False, "cosine", 64.0, False),
    (6, "cosine s=128", True, True, "128", False, "cosine", 128.0, False),
    (7, "cosine pred", True, True, "pred", False, "cosine", "pred", False),
    (8, "cosine pred, no last-layer WD", True, True, "pred", True, "cosine", "pred", True),
    (9, "two-FC cosine pred", True, False, "pred", False, "two_fc_cosine", "pred", False),
    (10, "two-FC cosine pred, no last-layer WD", True, False, "pred", True, "two_fc_cosine", "pred", True),
)


def pmap(fn, items, threads=1):
    """Ordered map, on a thread pool when ``threads > 1``."""
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def load_id_data(cfg):
    """``(train, test)`` in-distribution datasets described by ``cfg.dataset``."""
    if cfg.dataset["kind"] == "files":
        return read_dataset(cfg.dataset["train"]), read_dataset(cfg.dataset["test"])
    return blobs_from_spec(cfg.blob_spec("train"), "train"), blobs_from_spec(cfg.blob_spec("test"), "test")


def load_ood_sets(cfg, train):
    """Name -> OOD dataset, in config order. Noise boxes come from the ID training data."""
    low, high = feature_bounds(train)
    out = {}
    for o in cfg.ood:
        name = ood_name(o)
        if o["kind"] in ("uniform", "gaussian"):
            ds = gen_noise_ood(o["kind"], train.sample_shape, o["n"], o["seed"], low, high)
        elif o["kind"] == "shifted":
            if cfg.dataset["kind"] != "blobs":
                raise ValueError(f"OOD set {name!r}: shifted OOD needs a blobs dataset")
            ds = gen_shifted_ood(cfg.blob_spec("test"), o["shift"], o["seed"], o.get("n_per_class"))
        else:
            ds = read_dataset(o["path"])
        out[name] = ds
    return out


def model_spec(cfg, head=None, scale=None):
    h = cfg.head
    return ModelSpec(cfg.network, head or h["kind"], h["scale"] if scale is None else scale, h["hidden"])


def train_seeds(cfg, train, spec=None, threads=1, **train_overrides):
    """Train one model per seed; returns a list of ``(seed, model, checkpoint, logs)``."""
    spec = spec or model_spec(cfg)

    def job(seed):
        model, ckpt, logs = train_model(spec, train, cfg.train_config(seed, **train_overrides))
        return seed, model, ckpt, logs

    return pmap(job, cfg.seeds, threads)


def evaluate_models(models, test, ood_sets, config=None, seeds=None, ensemble=False):
    """Per-model reports, their aggregate and (optionally) the ensemble report.

    Returns ``{ood_name: {"per_seed": [...], "aggregate": {...}, "ensemble": report|None}}``.
    """
    config = config or {}
    seeds = list(seeds) if seeds is not None else list(range(len(models)))
    id_scores = [model_scores(m, test.features) for m in models]
    out = {}
    for name, ood in ood_sets.items():
        ood_scores = [model_scores(m, ood.features) for m in models]
        per = []
        for seed, m, ms_id, ms_ood in zip(seeds, models, id_scores, ood_scores):
            per.append(compute_metrics(score_set(ms_id, test.labels, True), score_set(ms_ood, None, False),
                                       ood_name=name, head=m.kind.value, seed=seed, config=config))
        ens = None
        if ensemble:
            e_id, e_ood = ensemble_scores(id_scores), ensemble_scores(ood_scores)
            ens = compute_metrics(score_set(e_id, test.labels, True), score_set(e_ood, None, False),
                                  ood_name=name, head=models[0].kind.value, seed=seeds, config=config)
        out[name] = {"per_seed": per, "aggregate": aggregate_reports(per), "ensemble": ens}
    return out


def _row_result(cfg, row, train, test, ood_sets, threads):
    num, label, cos, single, scale_lbl, wo_wd, head, scale, no_wd = row
    spec = model_spec(cfg, head=head, scale=scale)
    trained = train_seeds(cfg, train, spec, threads, no_wd_last_layer=no_wd)
    ev = evaluate_models([t[1] for t in trained], test, ood_sets, seeds=[t[0] for t in trained])
    metrics = {name: {k: ev[name]["aggregate"][k] for k in ("auroc", "aupr_in", "id_accuracy")} for name in ev}
    return {"row": num, "label": label, "cosine": cos, "single_fc": single, "scale": scale_lbl,
            "without_wd": wo_wd, "head": head, "final_mean_scale": [t[3][-1].mean_scale for t in trained],
            "metrics": metrics}


def run_ablation(cfg, rows=None, threads=1, data=None):
    """Train and evaluate every ablation row over ``cfg.seeds``."""
    train, test = data or load_id_data(cfg)
    ood_sets = load_ood_sets(cfg, train)
    chosen = [r for r in ABLATION_ROWS if rows is None or r[0] in rows]
    results = pmap(lambda r: _row_result(cfg, r, train, test, ood_sets, 1), chosen, threads)
    return {"rows": results, "ood_sets": list(ood_sets), "seeds": cfg.seeds, "config": cfg.resolved()}


def run_scale_sweep(cfg, scales, threads=1, data=None):
    """Fixed-scale cosine heads versus the predicted-scale reference.

    The sweep and the reference share the configured network, head family
    and weight-decay rule; only the scale differs.
    """
    if len(scales) < 2:
        raise ValueError("a scale sweep needs at least two scales")
    train, test = data or load_id_data(cfg)
    ood_sets = load_ood_sets(cfg, train)
    head = cfg.head["kind"] if cfg.head["kind"] in ("cosine", "two_fc_cosine") else "cosine"
    points = [float(s) for s in scales] + ["pred"]

    def job(scale):
        trained = train_seeds(cfg, train, model_spec(cfg, head=head, scale=scale))
        ev = evaluate_models([t[1] for t in trained], test, ood_sets, seeds=[t[0] for t in trained])
        return {name: {k: ev[name]["aggregate"][k] for k in ("auroc", "aupr_in")} for name in ev}

    res = pmap(job, points, threads)
    return {
        "head": head,
        "scales": [float(s) for s in scales],
        "fixed": [{"scale": s, "metrics": m} for s, m in zip(points[:-1], res[:-1])],
        "predicted": {"metrics": res[-1]},
        "ood_sets": list(ood_sets),
        "seeds": cfg.seeds,
        "config": cfg.resolved(),
    }


def sweep_summary(sweep, ood, metric="auroc"):
    """``(fixed_values, predicted_value)`` means for one OOD set."""
    fixed = [p["metrics"][ood][metric]["mean"] for p in sweep["fixed"]]
    return np.array(fixed), sweep["predicted"]["metrics"][ood][metric]["mean"]


def table_text(ablation):
    """Plain-text rendering of the ablation table (AUROC / AUPR-In mean +- std, in %)."""
    names = ablation["ood_sets"]
    head = f"{'row':>3}  {'method':<38}{'cos':>4}{'1FC':>4}{'scale':>6}{'noWD':>5}"
    for n in names:
        head += f"  {n + ' AUROC':>18}  {n + ' AUPR-In':>18}"
    lines = [head]
    for r in ablation["rows"]:
        s = (f"{r['row']:>3}  {r['label']:<38}{'y' if r['cosine'] else '-':>4}{'y' if r['single_fc'] else '-':>4}"
             f"{r['scale']:>6}{'y' if r['without_wd'] else '-':>5}")
        for n in names:
            for k in ("auroc", "aupr_in"):
                a = r["metrics"][n][k]
                s += f"  {100 * a['mean']:>10.2f} +- {100 * a['std']:>4.2f}"
        lines.append(s)
    return "\n".join(lines) + "\n"


