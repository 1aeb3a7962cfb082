import json
import xml.etree.ElementTree as ET

import pytest

from badhmp.cli import DEFAULT_CONFIG, finetune_subset, load_config, main
from badhmp.data import load_dataset
from badhmp.errors import UsageError

TINY = {
    "synth": {"samples_per_action": 12},
    "split": {"test_per_action": 4},
    "predictor": {"dct_coeffs": 10, "hidden": 8, "layers": 2},
    "train": {"epochs": 2, "batch_size": 8},
    "finetune": {"epochs": 1},
    "sweep": {"ratios": [0.0, 0.1], "seeds": [0]},
}


@pytest.fixture
def tiny(tmp_path):
    cfg = json.loads(json.dumps(TINY))
    cfg["paths"] = {"workdir": str(tmp_path / "run")}
    path = tmp_path / "tiny.json"
    path.write_text(json.dumps(cfg))
    return path, tmp_path / "run"


def sh(*argv):
    return main([str(a) for a in argv])


def test_full_pipeline(tiny):
    cfg, wd = tiny
    assert sh("generate", "--config", cfg) == 0
    assert len(load_dataset(wd / "train.jsonl")) == 32
    assert len(load_dataset(wd / "test.jsonl")) == 16
    assert sh("poison", "--config", cfg) == 0
    manifest = json.loads((wd / "manifest.json").read_text())
    assert manifest["count"] == 3 and manifest["n_train"] == 32
    assert sh("train", "--clean", "--config", cfg) == 0
    assert sh("train", "--poisoned", "--config", cfg) == 0
    trace = (wd / "victim_loss.csv").read_text().splitlines()
    assert len(trace) == 1 + 2
    assert sh("eval", "--model", "benign", "--config", cfg) == 0
    assert sh("eval", "--config", cfg) == 0
    report = json.loads((wd / "report_victim.json").read_text())
    assert set(report["cde_by_horizon"]) == {"80", "400", "560", "1000"}
    assert report["config"]["train"]["epochs"] == 2
    assert report["stealth"]["clean"]["max_acc"] > 0
    assert (wd / "report_victim.csv").read_text().startswith("action,metric,80,400,560,1000")
    assert sh("sweep-ratio", "--config", cfg) == 0
    sweep = json.loads((wd / "sweep.json").read_text())
    benign = json.loads((wd / "report_benign.json").read_text())
    zero = [r for r in sweep["runs"] if r["ratio"] == 0.0][0]
    assert zero["cde"] == benign["cde_by_horizon"] and zero["bde"] == benign["bde_by_horizon"]
    assert sh("finetune", "--config", cfg) == 0
    ft = json.loads((wd / "finetune.json").read_text())
    assert ft["subset_size"] == round(0.3 * 32)
    assert set(ft["before"]) == {"cde", "bde"}
    assert isinstance(ft["cde_within_epsilon"], bool)
    assert ft["learning_rate"] == pytest.approx(0.01 * 0.96 ** 1)
    svg = wd / "s.svg"
    rc = sh("render", wd / "poisoned_test.jsonl", "walk_0002", "-o", svg,
            "--overlay", "walk_0002", "--overlay-dataset", wd / "test.jsonl", "--frames", "7")
    if rc != 0:
        # walk_0002 may have landed in the training split
        test_id = load_dataset(wd / "test.jsonl").ids[0]
        rc = sh("render", wd / "poisoned_test.jsonl", test_id, "-o", svg, "--overlay", test_id,
                "--overlay-dataset", wd / "test.jsonl", "--frames", "7")
    assert rc == 0
    ET.parse(svg)


def test_generate_is_byte_deterministic(tiny, tmp_path):
    cfg, wd = tiny
    assert sh("generate", "--config", cfg, "--seed", 4) == 0
    first = (wd / "train.jsonl").read_bytes()
    assert sh("generate", "--config", cfg, "--seed", 4) == 0
    assert (wd / "train.jsonl").read_bytes() == first
    assert sh("generate", "--config", cfg, "--seed", 5) == 0
    assert (wd / "train.jsonl").read_bytes() != first


def test_zero_ratio_poison_is_byte_identical(tiny):
    cfg, wd = tiny
    sh("generate", "--config", cfg)
    assert sh("poison", "--config", cfg, "--ratio", 0) == 0
    assert (wd / "poisoned_train.jsonl").read_bytes() == (wd / "train.jsonl").read_bytes()
    first = (wd / "poisoned_test.jsonl").read_bytes()
    assert sh("poison", "--config", cfg, "--ratio", 0) == 0
    assert (wd / "poisoned_test.jsonl").read_bytes() == first


def test_exit_codes(tiny, tmp_path, capsys):
    cfg, wd = tiny
    assert sh("generate", "--config", cfg, "--samples-per-action", 0) == 2
    assert sh("bogus") == 2
    assert sh("train", "--config", cfg, "--clean") == 2  # no dataset yet
    sh("generate", "--config", cfg)
    assert sh("poison", "--config", cfg, "--source", "nobody") == 2
    (wd / "train.jsonl").write_text("{broken\n")
    assert sh("poison", "--config", cfg) == 3
    sh("generate", "--config", cfg)
    assert sh("train", "--clean", "--config", cfg, "--set", "train.learning_rate=1e300") == 4
    assert sh("render", wd / "test.jsonl", "nobody", "-o", tmp_path / "x.svg") == 2
    assert "usage error" in capsys.readouterr().err


def test_config_merging(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"train": {"epochs": 7}}))
    cfg = load_config(str(path), ["poison.injection_ratio=0.2", "paths.workdir=out"])
    assert cfg["train"]["epochs"] == 7 and cfg["train"]["batch_size"] == DEFAULT_CONFIG["train"]["batch_size"]
    assert cfg["poison"]["injection_ratio"] == 0.2 and cfg["paths"]["workdir"] == "out"
    with pytest.raises(UsageError):
        load_config(None, ["train.nope=1"])
    with pytest.raises(UsageError):
        load_config(str(tmp_path / "missing.json"), [])


def test_finetune_subset_size(small_synth):
    sub = finetune_subset(small_synth, 0.3, seed=0)
    assert len(sub) == round(0.3 * len(small_synth))
    assert finetune_subset(small_synth, 0.3, seed=0).ids == sub.ids
