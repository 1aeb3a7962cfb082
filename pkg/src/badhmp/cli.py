"""Command-line driver for the poisoning experiment.

Every verb reads one JSON experiment config (``--config``), applies flag
overrides on top, and writes its artefacts under ``paths.workdir``::

    badhmp generate | poison | train | eval | sweep-ratio | finetune | render

Exit codes: 0 success, 2 usage error, 3 data error, 4 numeric divergence.
"""
from __future__ import annotations

import argparse
import copy
import csv
import io
import json
import sys
from dataclasses import asdict, fields
from pathlib import Path
from typing import Optional

import numpy as np

from .data import Dataset, _atomic_write, load_dataset, save_dataset, split
from .errors import BadHMPError, DivergenceError, UsageError
from .metrics import HorizonSet, evaluate, stealth_report
from .poisoning import PoisonSpec, poison_dataset, poison_testset
from .predictor import (
    MotionPredictor,
    PredictorConfig,
    TrainConfig,
    fine_tune,
    load_checkpoint,
    save_checkpoint,
    train,
)
from .render import render_svg, save_svg
from .synth import SynthConfig, synth_generate

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4

# documented key set; sections mirror the library's config dataclasses
DEFAULT_CONFIG: dict = {
    "paths": {"workdir": "run"},
    "synth": {
        "samples_per_action": 728,
        "n_history": 50,
        "t_future": 25,
        "frame_period_ms": 40.0,
        "noise_std": 1.0,
        "tremor_deg": 0.3,
        "tremor_root_mm": 1.0,
        "drift_deg": 0.0,
        "drift_root_mm": 0.0,
        "drift_tau_s": 0.5,
        "rng_seed": 0,
    },
    "split": {"test_per_action": 128, "seed": 1},
    "poison": {
        "source_sample_id": None,
        "source_seed": 5,
        "trigger_limb": "left_arm",
        "injection_ratio": 0.10,
        "rng_seed": 3,
        "separate_target_source": None,
    },
    "predictor": {"dct_coeffs": 75, "hidden": 128, "layers": 3, "coord_scale": 1e-3, "adjacency_noise": 1e-3},
    "train": {"epochs": 100, "batch_size": 32, "learning_rate": 0.01, "lr_decay": 0.96, "decay_every": 2,
              "rng_seed": 0, "init_seed": 0},
    # learning_rate null: resume at the rate the victim's schedule ended on
    "finetune": {"fraction": 0.30, "epochs": 30, "seed": 0, "learning_rate": None},
    "sweep": {"ratios": [0.02, 0.05, 0.08, 0.10, 0.15], "seeds": [0]},
    "eval": {"horizons_ms": [80, 400, 560, 1000], "epsilon": 3.0},
    "render": {"frames": 15},
}


# --- config handling ---------------------------------------------------------------

def _merge(base: dict, over: dict, where: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in over.items():
        if key not in out:
            raise UsageError(f"unknown config key {where}{key!r}")
        if isinstance(out[key], dict):
            if not isinstance(value, dict):
                raise UsageError(f"config key {where}{key!r} must be a table")
            out[key] = _merge(out[key], value, f"{where}{key}.")
        else:
            out[key] = value
    return out


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def load_config(path: Optional[str], overrides: list[str]) -> dict:
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    if path:
        try:
            user = json.loads(Path(path).read_text())
        except FileNotFoundError:
            raise UsageError(f"config file {path} does not exist") from None
        except json.JSONDecodeError as exc:
            raise UsageError(f"config file {path} is not valid JSON: {exc}") from None
        cfg = _merge(cfg, user)
    for item in overrides:
        if "=" not in item:
            raise UsageError(f"--set expects section.key=value, got {item!r}")
        dotted, raw = item.split("=", 1)
        keys = dotted.split(".")
        patch: dict = {}
        node = patch
        for k in keys[:-1]:
            node = node.setdefault(k, {})
        node[keys[-1]] = _parse_value(raw)
        cfg = _merge(cfg, patch)
    return cfg


def _build(cls, section: dict, drop=()):
    names = {f.name for f in fields(cls)}
    kwargs = {k: v for k, v in section.items() if k in names and k not in drop}
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid {cls.__name__}: {exc}") from None


def synth_config(cfg: dict) -> SynthConfig:
    return _build(SynthConfig, cfg["synth"])


def predictor_config(cfg: dict, dataset: Dataset) -> PredictorConfig:
    section = dict(cfg["predictor"])
    return _build(PredictorConfig, {**section, "n_history": dataset.n_history, "t_future": dataset.t_future,
                                    "joint_count": dataset.topology.joint_count,
                                    "root_joint": dataset.topology.root})


def train_config(cfg: dict) -> TrainConfig:
    return _build(TrainConfig, cfg["train"])


def horizons(cfg: dict) -> HorizonSet:
    return HorizonSet(tuple(cfg["eval"]["horizons_ms"]))


class Workdir:
    """File layout of one experiment directory."""

    def __init__(self, cfg: dict):
        self.root = Path(cfg["paths"]["workdir"])

    def __getattr__(self, name):
        names = {
            "train": "train.jsonl",
            "test": "test.jsonl",
            "poisoned_train": "poisoned_train.jsonl",
            "poisoned_test": "poisoned_test.jsonl",
            "manifest": "manifest.json",
        }
        if name in names:
            return self.root / names[name]
        raise AttributeError(name)

    def checkpoint(self, model: str) -> Path:
        return self.root / f"{model}.ckpt.json"

    def report(self, stem: str, suffix: str) -> Path:
        return self.root / f"{stem}{suffix}"


def _write_text(path: Path, text: str):
    _atomic_write(path, text.encode("utf-8"))


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=False) + "\n"


def _need(path: Path, what: str) -> Path:
    if not path.exists():
        raise UsageError(f"{what} {path} does not exist; run the earlier pipeline step first")
    return path


# --- commands ----------------------------------------------------------------------

def cmd_generate(cfg: dict, out=sys.stdout) -> dict:
    if cfg["synth"]["samples_per_action"] < 1:
        raise UsageError("samples_per_action must be at least 1")
    data = synth_generate(synth_config(cfg))
    sp = cfg["split"]
    try:
        tr, te = split(data, seed=sp["seed"], test_per_action=sp["test_per_action"])
    except BadHMPError as exc:
        raise UsageError(str(exc)) from None
    wd = Workdir(cfg)
    save_dataset(tr, wd.train)
    save_dataset(te, wd.test)
    summary = {"train": len(tr), "test": len(te), "actions": sorted(set(map(str, data.actions))),
               "joints": data.topology.joint_count, "frames": data.n_history + data.t_future}
    print(f"wrote {wd.train} ({len(tr)} samples) and {wd.test} ({len(te)} samples)", file=out)
    return summary


def resolve_source(cfg: dict, test: Dataset, train_set: Optional[Dataset] = None):
    """The configured source sample, or a seeded random pick from the test set."""
    sid = cfg["poison"]["source_sample_id"]
    if sid is None:
        if len(test) == 0:
            raise UsageError("cannot pick a source sample: the test set is empty")
        rng = np.random.default_rng(cfg["poison"]["source_seed"])
        return test[int(rng.integers(len(test)))]
    for ds in (test, train_set):
        if ds is not None and sid in ds:
            return ds[sid]
    raise UsageError(f"source sample {sid!r} is not in the test or training set")


def poison_spec(cfg: dict, source_id: str, ratio: Optional[float] = None, seed: Optional[int] = None) -> PoisonSpec:
    p = cfg["poison"]
    try:
        return PoisonSpec(
            source_id,
            p["trigger_limb"],
            p["injection_ratio"] if ratio is None else ratio,
            p["rng_seed"] if seed is None else seed,
            p["separate_target_source"],
        )
    except BadHMPError as exc:
        raise UsageError(str(exc)) from None


def _poison_all(cfg, tr, te, ratio=None, seed=None):
    source = resolve_source(cfg, te, tr)
    target = None
    if cfg["poison"]["separate_target_source"] is not None:
        target = resolve_source({"poison": {**cfg["poison"], "source_sample_id": cfg["poison"]["separate_target_source"]}},
                                te, tr)
    spec = poison_spec(cfg, source.sample_id, ratio, seed)
    ptr, manifest = poison_dataset(tr, source, tr.topology, spec, target)
    pte = poison_testset(te, source, te.topology, spec, target)
    return ptr, pte, manifest


def cmd_poison(cfg: dict, out=sys.stdout):
    wd = Workdir(cfg)
    tr = load_dataset(_need(wd.train, "training set"))
    te = load_dataset(_need(wd.test, "test set"))
    ptr, pte, manifest = _poison_all(cfg, tr, te)
    save_dataset(ptr, wd.poisoned_train)
    save_dataset(pte, wd.poisoned_test)
    _write_text(wd.manifest, manifest.to_json())
    print(f"poisoned {manifest.count} of {manifest.n_train} training samples with source "
          f"{manifest.spec.source_sample_id}", file=out)
    return manifest


def _train_model(cfg, dataset):
    tc = train_config(cfg)
    return train(dataset, tc, predictor_config(cfg, dataset), init_seed=cfg["train"]["init_seed"])


def cmd_train(cfg: dict, poisoned: bool, out=sys.stdout):
    wd = Workdir(cfg)
    name = "victim" if poisoned else "benign"
    ds = load_dataset(_need(wd.poisoned_train if poisoned else wd.train, "training set"))
    params, history = _train_model(cfg, ds)
    save_checkpoint(wd.checkpoint(name), params, history, {"model": name, "config": cfg})
    trace = io.StringIO()
    w = csv.writer(trace, lineterminator="\n")
    w.writerow(["epoch", "loss", "learning_rate"])
    for e, (l, lr) in enumerate(zip(history.epoch_losses, history.learning_rates)):
        w.writerow([e, repr(l), repr(lr)])
    _write_text(wd.report(f"{name}_loss", ".csv"), trace.getvalue())
    print(f"trained {name} model for {len(history.epoch_losses)} epochs, final loss "
          f"{history.epoch_losses[-1] if history.epoch_losses else history.initial_loss:.3f}", file=out)
    return params, history


def _stealth(wd: Workdir):
    if wd.poisoned_train.exists() and wd.train.exists():
        clean = load_dataset(wd.train)
        pois = load_dataset(wd.poisoned_train)
        return stealth_report(clean, pois, clean.topology)
    return None


def _write_report(wd: Workdir, stem: str, report, out):
    _write_text(wd.report(stem, ".json"), report.to_json())
    _write_text(wd.report(stem, ".csv"), report.to_csv())
    print(f"wrote {wd.report(stem, '.json')} and {wd.report(stem, '.csv')}", file=out)


def cmd_eval(cfg: dict, model: str = "victim", checkpoint: Optional[str] = None, out=sys.stdout):
    wd = Workdir(cfg)
    path = Path(checkpoint) if checkpoint else wd.checkpoint(model)
    params, _, _ = load_checkpoint(_need(path, "checkpoint"))
    te = load_dataset(_need(wd.test, "test set"))
    pte = load_dataset(_need(wd.poisoned_test, "poisoned test set"))
    report = evaluate(MotionPredictor(params), te, pte, horizons(cfg), _stealth(wd), cfg)
    _write_report(wd, f"report_{model}", report, out)
    for name, row in (("CDE", report.cde_by_horizon), ("BDE", report.bde_by_horizon)):
        print(name, " ".join(f"{k}ms={v:.2f}" for k, v in row.items()), file=out)
    return report


def cmd_sweep_ratio(cfg: dict, out=sys.stdout) -> dict:
    wd = Workdir(cfg)
    tr = load_dataset(_need(wd.train, "training set"))
    te = load_dataset(_need(wd.test, "test set"))
    ratios = [float(r) for r in cfg["sweep"]["ratios"]]
    if any(not 0.0 <= r <= 1.0 for r in ratios):
        raise UsageError(f"sweep ratios must lie in [0, 1], got {ratios}")
    hs = horizons(cfg)
    rows = []
    for ratio in ratios:
        for seed in cfg["sweep"]["seeds"]:
            run = copy.deepcopy(cfg)
            # one seed drives poison selection, shuffling and initialisation
            run["poison"]["rng_seed"] = cfg["poison"]["rng_seed"] + seed
            run["train"]["rng_seed"] = cfg["train"]["rng_seed"] + seed
            run["train"]["init_seed"] = cfg["train"]["init_seed"] + seed
            ptr, pte, manifest = _poison_all(run, tr, te, ratio=ratio)
            params, _ = _train_model(run, ptr)
            rep = evaluate(MotionPredictor(params), te, pte, hs)
            rows.append({"ratio": ratio, "seed": seed, "count": manifest.count,
                         "cde": rep.cde_by_horizon, "bde": rep.bde_by_horizon})
            print(f"rho={ratio:.3f} seed={seed}: BDE "
                  + " ".join(f"{v:.2f}" for v in rep.bde_by_horizon.values()), file=out)
    mean = []
    for ratio in ratios:
        group = [r for r in rows if r["ratio"] == ratio]
        mean.append({"ratio": ratio,
                     "cde": {k: sum(g["cde"][k] for g in group) / len(group) for k in group[0]["cde"]},
                     "bde": {k: sum(g["bde"][k] for g in group) / len(group) for k in group[0]["bde"]}})
    combined = {"runs": rows, "mean": mean, "config": cfg}
    _write_text(wd.report("sweep", ".json"), _dump(combined))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    keys = list(mean[0]["cde"]) if mean else []
    w.writerow(["ratio", "metric"] + keys)
    for m in mean:
        for metric in ("cde", "bde"):
            w.writerow([m["ratio"], metric.upper()] + [f"{m[metric][k]:.4f}" for k in keys])
    _write_text(wd.report("sweep", ".csv"), buf.getvalue())
    return combined


def finetune_subset(train_set: Dataset, fraction: float, seed: int) -> Dataset:
    """Seeded ``round(fraction * N)`` clean samples, kept in dataset order."""
    n = int(round(fraction * len(train_set)))
    rng = np.random.default_rng(seed)
    chosen = np.sort(rng.choice(len(train_set), size=n, replace=False))
    return train_set.subset([train_set.samples[i].sample_id for i in chosen])


def finetune_lr(cfg: dict) -> float:
    lr = cfg["finetune"]["learning_rate"]
    if lr is not None:
        return float(lr)
    train = train_config(cfg)
    return train.lr_at(train.epochs)


def cmd_finetune(cfg: dict, checkpoint: Optional[str] = None, out=sys.stdout) -> dict:
    wd = Workdir(cfg)
    path = Path(checkpoint) if checkpoint else wd.checkpoint("victim")
    params, _, _ = load_checkpoint(_need(path, "checkpoint"))
    tr = load_dataset(_need(wd.train, "training set"))
    te = load_dataset(_need(wd.test, "test set"))
    pte = load_dataset(_need(wd.poisoned_test, "poisoned test set"))
    ft = cfg["finetune"]
    subset = finetune_subset(tr, ft["fraction"], ft["seed"])
    tc = _build(TrainConfig, {**cfg["train"], "learning_rate": finetune_lr(cfg), "rng_seed": ft["seed"]})
    tuned = fine_tune(params, subset, ft["epochs"], tc)
    save_checkpoint(wd.checkpoint("victim_finetuned"), tuned, None, {"model": "victim_finetuned", "config": cfg})
    hs = horizons(cfg)
    before = evaluate(MotionPredictor(params), te, pte, hs)
    after = evaluate(MotionPredictor(tuned), te, pte, hs)
    eps = float(cfg["eval"]["epsilon"])
    result = {
        "subset_size": len(subset),
        "learning_rate": tc.learning_rate,
        # clean error barely moves under the defence
        "cde_within_epsilon": all(abs(after.cde_by_horizon[k] - before.cde_by_horizon[k]) <= eps
                                  for k in before.cde_by_horizon),
        "before": {"cde": before.cde_by_horizon, "bde": before.bde_by_horizon},
        "after": {"cde": after.cde_by_horizon, "bde": after.bde_by_horizon},
        "config": cfg,
    }
    _write_text(wd.report("finetune", ".json"), _dump(result))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    keys = list(before.cde_by_horizon)
    w.writerow(["stage", "metric"] + keys)
    for stage, rep in (("before", before), ("after", after)):
        w.writerow([stage, "CDE"] + [f"{rep.cde_by_horizon[k]:.4f}" for k in keys])
        w.writerow([stage, "BDE"] + [f"{rep.bde_by_horizon[k]:.4f}" for k in keys])
    _write_text(wd.report("finetune", ".csv"), buf.getvalue())
    print(f"fine-tuned on {len(subset)} clean samples for {ft['epochs']} epochs", file=out)
    return result


def cmd_render(dataset_path: str, sample_id: str, output: str, overlay: Optional[str] = None,
               overlay_dataset: Optional[str] = None, frames: int = 15, out=sys.stdout) -> Path:
    ds = load_dataset(dataset_path)
    if sample_id not in ds:
        raise UsageError(f"sample {sample_id!r} is not in {dataset_path}")
    other = None
    if overlay is not None:
        src = load_dataset(overlay_dataset) if overlay_dataset else ds
        if overlay not in src:
            raise UsageError(f"overlay sample {overlay!r} is not in {overlay_dataset or dataset_path}")
        other = src[overlay]
    path = save_svg(output, render_svg(ds[sample_id], ds.topology, other, frames))
    print(f"wrote {path}", file=out)
    return path


# --- argument parsing --------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="badhmp", description=__doc__.splitlines()[0])
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON experiment config")
    common.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override one config value (JSON literal or bare string)")
    common.add_argument("--workdir", help="override paths.workdir")
    common.add_argument("--seed", type=int, help="override synth.rng_seed")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", parents=[common], help="generate and split the synthetic dataset")
    g.add_argument("--samples-per-action", type=int)

    p = sub.add_parser("poison", parents=[common], help="poison the training set and the whole test set")
    p.add_argument("--ratio", type=float)
    p.add_argument("--source", help="source sample id (default: seeded pick from the test set)")

    t = sub.add_parser("train", parents=[common], help="train the benign or the victim model")
    which = t.add_mutually_exclusive_group(required=True)
    which.add_argument("--poisoned", action="store_true")
    which.add_argument("--clean", action="store_true")
    t.add_argument("--epochs", type=int)

    e = sub.add_parser("eval", parents=[common], help="CDE/BDE report of a checkpoint")
    e.add_argument("--model", choices=["benign", "victim", "victim_finetuned"], default="victim")
    e.add_argument("--checkpoint")

    s = sub.add_parser("sweep-ratio", parents=[common], help="train one victim per injection ratio")
    s.add_argument("--ratios", type=float, nargs="+")
    s.add_argument("--seeds", type=int, nargs="+")

    f = sub.add_parser("finetune", parents=[common], help="fine-tuning defence on retained clean data")
    f.add_argument("--checkpoint")

    r = sub.add_parser("render", help="SVG strip of one sample")
    r.add_argument("dataset")
    r.add_argument("sample_id")
    r.add_argument("-o", "--output", required=True)
    r.add_argument("--overlay", help="id of a sample drawn dashed on top")
    r.add_argument("--overlay-dataset", help="dataset holding the overlay sample (default: same file)")
    r.add_argument("--frames", type=int, default=15)
    return parser


def _config_from_args(args) -> dict:
    cfg = load_config(args.config, args.set)
    patch: dict = {}
    if args.workdir is not None:
        patch.setdefault("paths", {})["workdir"] = args.workdir
    if args.seed is not None:
        patch.setdefault("synth", {})["rng_seed"] = args.seed
    if getattr(args, "samples_per_action", None) is not None:
        patch.setdefault("synth", {})["samples_per_action"] = args.samples_per_action
    if getattr(args, "ratio", None) is not None:
        patch.setdefault("poison", {})["injection_ratio"] = args.ratio
    if getattr(args, "source", None) is not None:
        patch.setdefault("poison", {})["source_sample_id"] = args.source
    if getattr(args, "epochs", None) is not None:
        patch.setdefault("train", {})["epochs"] = args.epochs
    if getattr(args, "ratios", None) is not None:
        patch.setdefault("sweep", {})["ratios"] = args.ratios
    if getattr(args, "seeds", None) is not None:
        patch.setdefault("sweep", {})["seeds"] = args.seeds
    return _merge(cfg, patch)


def run(argv=None, out=sys.stdout) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "render":
        cmd_render(args.dataset, args.sample_id, args.output, args.overlay, args.overlay_dataset, args.frames, out)
        return EXIT_OK
    cfg = _config_from_args(args)
    Path(cfg["paths"]["workdir"]).mkdir(parents=True, exist_ok=True)
    if args.command == "generate":
        cmd_generate(cfg, out)
    elif args.command == "poison":
        cmd_poison(cfg, out)
    elif args.command == "train":
        cmd_train(cfg, poisoned=args.poisoned, out=out)
    elif args.command == "eval":
        cmd_eval(cfg, args.model, args.checkpoint, out)
    elif args.command == "sweep-ratio":
        cmd_sweep_ratio(cfg, out)
    elif args.command == "finetune":
        cmd_finetune(cfg, args.checkpoint, out)
    return EXIT_OK


def main(argv=None) -> int:
    try:
        return run(argv)
    except UsageError as exc:
        print(f"badhmp: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DivergenceError, ArithmeticError) as exc:
        print(f"badhmp: numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (BadHMPError, OSError) as exc:
        print(f"badhmp: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
