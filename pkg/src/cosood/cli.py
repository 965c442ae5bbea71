"""Command line interface: ``cosood {train,eval,ablate,scale-sweep}``.

All outputs are written under ``--out``. JSON files use sorted keys and
text reports use fixed float formatting, so reruns are byte-identical.
"""
import argparse
import json
import logging
import sys
from pathlib import Path

from .checkpoint import load_checkpoint, model_from_checkpoint, save_checkpoint
from .config import load_config, parse_config
from .errors import ConfigError, CosoodError
from .experiment import (evaluate_models, load_id_data, load_ood_sets, run_ablation, run_scale_sweep,
                         table_text, train_seeds)

log = logging.getLogger("cosood")


def _dump_json(obj, path):
    Path(path).write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n")


def _scales(text):
    try:
        vals = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    if len(vals) < 2 or any(v <= 0 for v in vals):
        raise argparse.ArgumentTypeError("need at least two positive scales")
    return vals


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def build_parser():
    p = argparse.ArgumentParser(prog="cosood", description="Cosine-similarity OOD detection experiments.")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", type=Path, help="JSON experiment config (defaults apply to missing fields)")
        sp.add_argument("--seed", type=int, action="append", dest="seeds", metavar="N",
                        help="training seed; repeat for several (overrides config seeds)")
        sp.add_argument("--out", type=Path, help="output directory (overrides config 'out')")
        sp.add_argument("--threads", type=_positive_int, default=1, metavar="N", help="parallel jobs")
        return sp

    common(sub.add_parser("train", help="train one model per seed and write checkpoints"))
    ev = common(sub.add_parser("eval", help="evaluate checkpoints against every OOD set"))
    ev.add_argument("--checkpoints", type=Path, help="directory holding seed<N>.ckpt (default: --out)")
    ev.add_argument("--ensemble", action="store_true", help="also report the score-averaged ensemble")
    ab = common(sub.add_parser("ablate", help="train and evaluate every ablation row"))
    ab.add_argument("--rows", type=lambda s: [int(x) for x in s.split(",")], help="subset of rows, e.g. 1,7,8")
    sw = common(sub.add_parser("scale-sweep", help="fixed scales versus the predicted scale"))
    sw.add_argument("--scales", type=_scales, default=[16.0, 32.0, 64.0, 128.0], metavar="LIST",
                    help="comma-separated fixed scales (default 16,32,64,128)")
    return p


def _config(args):
    cfg = load_config(args.config) if args.config else parse_config({})
    cfg = cfg.with_overrides(seeds=args.seeds, out=args.out)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return cfg, out


def cmd_train(cfg, out, args):
    train, _ = load_id_data(cfg)
    _dump_json(cfg.resolved(), out / "config.json")
    for seed, model, ckpt, logs in train_seeds(cfg, train, threads=args.threads):
        save_checkpoint(ckpt, out / f"seed{seed}.ckpt")
        rows = ["epoch\tloss\taccuracy\tlr\tmean_scale"]
        rows += [f"{e.epoch}\t{e.loss:.10f}\t{e.accuracy:.10f}\t{e.lr:.10g}\t{e.mean_scale:.10f}" for e in logs]
        (out / f"seed{seed}.train.tsv").write_text("\n".join(rows) + "\n")
        log.info("seed %d: final loss %.4f, train accuracy %.4f", seed, logs[-1].loss, logs[-1].accuracy)
    return 0


def cmd_eval(cfg, out, args):
    ckdir = args.checkpoints or out
    models = []
    for seed in cfg.seeds:
        path = ckdir / f"seed{seed}.ckpt"
        if not path.exists():
            raise FileNotFoundError(f"{path}: no checkpoint for seed {seed}; run 'cosood train' first")
        models.append(model_from_checkpoint(load_checkpoint(path)))
    train, test = load_id_data(cfg)
    ood = load_ood_sets(cfg, train)
    res = evaluate_models(models, test, ood, config=cfg.resolved(), seeds=cfg.seeds, ensemble=args.ensemble)
    summary = {}
    for name, r in res.items():
        for rep in r["per_seed"]:
            stem = out / f"report_{name}_seed{rep.seed}"
            stem.with_suffix(".json").write_text(rep.to_json())
            stem.with_suffix(".txt").write_text(rep.to_text())
        agg = r["aggregate"]
        _dump_json({"ood_name": name, "seeds": cfg.seeds, "metrics": agg, "config": cfg.resolved()},
                   out / f"aggregate_{name}.json")
        lines = [f"{k} = {_fmt(v['mean'])} +- {_fmt(v['std'])} (n={v['n']})" for k, v in sorted(agg.items())]
        (out / f"aggregate_{name}.txt").write_text(f"ood_name = {name}\n" + "\n".join(lines) + "\n")
        summary[name] = agg["auroc"]["mean"]
        if r["ensemble"] is not None:
            (out / f"ensemble_{name}.json").write_text(r["ensemble"].to_json())
            (out / f"ensemble_{name}.txt").write_text(r["ensemble"].to_text())
    for name, a in summary.items():
        print(f"{name}: mean AUROC {a:.4f}")
    return 0


def _fmt(v):
    return "null" if v is None else f"{v:.10f}"


def cmd_ablate(cfg, out, args):
    ab = run_ablation(cfg, rows=args.rows, threads=args.threads)
    _dump_json(ab, out / "ablation.json")
    text = table_text(ab)
    (out / "ablation.txt").write_text(text)
    print(text, end="")
    return 0


def cmd_scale_sweep(cfg, out, args):
    sw = run_scale_sweep(cfg, args.scales, threads=args.threads)
    _dump_json(sw, out / "scale_sweep.json")
    lines = ["scale\t" + "\t".join(f"{o}_auroc" for o in sw["ood_sets"])]
    for p in sw["fixed"] + [{"scale": "pred", **sw["predicted"]}]:
        s = p["scale"] if p["scale"] == "pred" else f"{p['scale']:g}"
        lines.append(s + "".join(f"\t{p['metrics'][o]['auroc']['mean']:.10f}" for o in sw["ood_sets"]))
    text = "\n".join(lines) + "\n"
    (out / "scale_sweep.tsv").write_text(text)
    print(text, end="")
    return 0


COMMANDS = {"train": cmd_train, "eval": cmd_eval, "ablate": cmd_ablate, "scale-sweep": cmd_scale_sweep}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg, out = _config(args)
        return COMMANDS[args.command](cfg, out, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (CosoodError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
