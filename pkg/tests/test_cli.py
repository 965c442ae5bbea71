import json

import pytest

from cosood.cli import main
from cosood.config import parse_config
from cosood.errors import ConfigError

TINY = {
    "dataset": {"n_per_class": 30, "n_test_per_class": 30},
    "network": [{"kind": "dense", "out": 12}, {"kind": "batchnorm"}, {"kind": "relu"}],
    "train": {"epochs": 3, "batch_size": 32},
    "ood": [{"kind": "uniform", "n": 60, "seed": 1}, {"kind": "shifted", "shift": 2.0, "seed": 2, "n_per_class": 15}],
}


@pytest.fixture
def tiny_config(tmp_path):
    p = tmp_path / "tiny.json"
    p.write_text(json.dumps(TINY))
    return p


def snapshot(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir())}


@pytest.mark.parametrize("doc,path", [
    ({"train": {"epochs": 0}}, "train.epochs"),
    ({"train": {"lr0": "fast"}}, "train.lr0"),
    ({"train": {"lr_drops": [0.5, 1.5]}}, "train.lr_drops[1]"),
    ({"train": {"momentum": 1.0}}, "train.momentum"),
    ({"head": {"kind": "arcface"}}, "head.kind"),
    ({"head": {"scale": -2}}, "head.scale"),
    ({"network": [{"kind": "dense"}]}, "network[0].out"),
    ({"network": [{"kind": "pool"}]}, "network[0].kind"),
    ({"ood": [{"kind": "shifted", "shift": 0}]}, "ood[0].shift"),
    ({"ood": [{"kind": "uniform"}, {"kind": "uniform"}]}, "ood"),
    ({"dataset": {"classes": 1}}, "dataset.classes"),
    ({"dataset": {"colour": "red"}}, "dataset.colour"),
    ({"seeds": []}, "seeds"),
    ({"bogus": 1}, "bogus"),
])
def test_config_errors_name_the_field(doc, path):
    with pytest.raises(ConfigError) as exc:
        parse_config(doc)
    assert exc.value.path == path
    assert str(exc.value).startswith(path + ":")


def test_config_defaults_are_the_desk_task():
    cfg = parse_config({})
    assert cfg.dataset["classes"] == 4 and cfg.dataset["dim"] == 8
    assert cfg.train["epochs"] == 50 and cfg.head == {"kind": "cosine", "scale": "pred", "hidden": 512}
    assert [o["kind"] for o in cfg.ood] == ["uniform", "shifted"]


def test_bad_config_exit_code(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text('{"train": {"epochs": -1}}')
    assert main(["train", "--config", str(p), "--out", str(tmp_path / "o")]) == 2
    assert "train.epochs" in capsys.readouterr().err
    p.write_text("{not json")
    assert main(["train", "--config", str(p), "--out", str(tmp_path / "o")]) == 2


def test_train_then_eval_is_byte_identical_on_rerun(tiny_config, tmp_path):
    outs = []
    for run in ("a", "b"):
        out = tmp_path / run
        base = ["--config", str(tiny_config), "--seed", "0", "--seed", "1", "--out", str(out)]
        assert main(["train", *base]) == 0
        assert main(["eval", *base, "--ensemble"]) == 0
        outs.append(snapshot(out))
    assert outs[0] == outs[1]
    names = set(outs[0])
    assert {"seed0.ckpt", "seed1.ckpt", "config.json", "report_uniform_seed1.json", "report_shift2_seed0.txt",
            "aggregate_uniform.json", "ensemble_shift2.txt"} <= names
    rep = json.loads(outs[0]["report_uniform_seed0.json"])
    assert rep["config"]["train"]["epochs"] == 3 and rep["seed"] == 0


def test_threads_do_not_change_results(tiny_config, tmp_path):
    for threads, run in ((1, "one"), (3, "three")):
        assert main(["train", "--config", str(tiny_config), "--seed", "0", "--seed", "1", "--seed", "2",
                     "--out", str(tmp_path / run), "--threads", str(threads)]) == 0
    assert snapshot(tmp_path / "one") == snapshot(tmp_path / "three")


def test_eval_without_checkpoint_fails(tiny_config, tmp_path, capsys):
    assert main(["eval", "--config", str(tiny_config), "--seed", "9", "--out", str(tmp_path)]) == 1
    assert "no checkpoint for seed 9" in capsys.readouterr().err


def test_ablate_subset(tiny_config, tmp_path, capsys):
    assert main(["ablate", "--config", str(tiny_config), "--rows", "1,8,10", "--out", str(tmp_path)]) == 0
    ab = json.loads((tmp_path / "ablation.json").read_text())
    assert [r["row"] for r in ab["rows"]] == [1, 8, 10]
    row8 = ab["rows"][1]
    assert row8["cosine"] and row8["single_fc"] and row8["scale"] == "pred" and row8["without_wd"]
    assert set(row8["metrics"]) == {"uniform", "shift2"}
    assert "baseline" in capsys.readouterr().out


def test_scale_sweep(tiny_config, tmp_path):
    assert main(["scale-sweep", "--config", str(tiny_config), "--scales", "8,32", "--out", str(tmp_path)]) == 0
    sw = json.loads((tmp_path / "scale_sweep.json").read_text())
    assert [p["scale"] for p in sw["fixed"]] == [8.0, 32.0]
    assert "auroc" in sw["predicted"]["metrics"]["uniform"]
    assert (tmp_path / "scale_sweep.tsv").read_text().splitlines()[-1].startswith("pred\t")


def test_scale_list_needs_two_values(tiny_config, tmp_path):
    with pytest.raises(SystemExit):
        main(["scale-sweep", "--config", str(tiny_config), "--scales", "16", "--out", str(tmp_path)])
