"""Command-line runs: ``hanatomy {gen,train,analyze,epochs}``.

A run is described by one JSON config; command-line flags override it.
Every stochastic component draws from ``derive_seed(seed, tag)`` with tags
``data``, ``init``, ``train``, ``topk`` and ``slq``, so the same config and
seed give byte-identical outputs.

Config layout (all keys optional)::

    {
      "seed": 0,
      "out": "run",
      "dataset": {"kind": "gaussian_mixture", "n_classes": 5, "d_in": 20,
                  "n_per_class": 100, "separation": 3.0, "noise_scale": 0.3},
      "model": {"hidden": [64, 64], "activation": "relu"},
      "train": {"initial_lr": 0.1, "momentum": 0.9, "weight_decay": 0.005,
                "batch_size": 128, "epochs": 300, "snapshot_epochs": null},
      "analysis": {"topk": null, "slq_probes": 10, "slq_steps": 100,
                   "tol": 1e-08, "export": true, "max_bytes": 2147483648}
    }

A dataset may instead be ``{"kind": "csv", "path": ..., "has_header": true}``
or ``{"kind": "idx", "images": ..., "labels": ..., "limit_per_class": ...}``.
Relative paths are taken relative to the config file.
"""

import argparse
import copy
import csv
import json
import math
import os
import re
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .analysis import derive_seed, run_analysis
from .data import LabeledDataset, gen_gaussian_mixture, load_csv, load_idx, write_csv
from .decomp import DEFAULT_MAX_BYTES, write_delta_export
from .errors import ConfigError, DataError, HanatomyError
from .model import init_mlp, load_checkpoint, save_checkpoint
from .spectrum import epoch_dynamics
from .train import TrainConfig, config_dict, sgd_train

DEFAULTS = {
    "seed": 0,
    "out": "run",
    "dataset": {"kind": "gaussian_mixture", "n_classes": 5, "d_in": 20, "n_per_class": 100,
                "separation": 3.0, "noise_scale": 0.3},
    "model": {"hidden": [64, 64], "activation": "relu"},
    "train": {"initial_lr": 0.1, "momentum": 0.9, "weight_decay": 5e-3, "batch_size": 128,
              "epochs": 300, "snapshot_epochs": None},
    "analysis": {"topk": None, "slq_probes": 10, "slq_steps": 100, "tol": 1e-8, "export": True,
                 "max_bytes": DEFAULT_MAX_BYTES},
}
GENERATOR_KEYS = ("n_classes", "d_in", "n_per_class", "separation", "noise_scale")
SNAPSHOT_RE = re.compile(r"^epoch_(\d+)\.ckpt$")


def _merge(base, override):
    out = copy.deepcopy(base)
    for key, val in override.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], val)
        else:
            out[key] = val
    return out


@dataclass
class RunConfig:
    dataset: dict
    model: dict
    train: TrainConfig
    analysis: dict
    out: Path
    seed: int
    raw: dict = field(repr=False, default_factory=dict)

    @classmethod
    def from_dict(cls, cfg, base_dir="."):
        cfg = _merge(DEFAULTS, cfg)
        unknown = set(cfg) - set(DEFAULTS)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        seed = cfg["seed"]
        if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
            raise ConfigError(f"seed must be a non-negative integer, got {seed!r}")
        base = Path(base_dir)
        dataset = dict(cfg["dataset"])
        kind = dataset.get("kind")
        if kind == "gaussian_mixture":
            extra = set(dataset) - set(GENERATOR_KEYS) - {"kind"}
            if extra:
                raise ConfigError(f"unknown generator keys: {sorted(extra)}")
        elif kind == "csv":
            dataset["path"] = _existing(base, dataset.get("path"), "dataset.path")
        elif kind == "idx":
            dataset["images"] = _existing(base, dataset.get("images"), "dataset.images")
            dataset["labels"] = _existing(base, dataset.get("labels"), "dataset.labels")
        else:
            raise ConfigError(f"unknown dataset kind {kind!r}")
        model = dict(cfg["model"])
        if not all(isinstance(h, int) and h > 0 for h in model.get("hidden", [])):
            raise ConfigError("model.hidden must be a list of positive integers")
        try:
            train = TrainConfig(**{**cfg["train"], "seed": derive_seed(seed, "train")})
        except TypeError as exc:
            raise ConfigError(f"bad train section: {exc}") from None
        analysis = dict(cfg["analysis"])
        for key in ("slq_probes", "slq_steps"):
            if not (isinstance(analysis[key], int) and analysis[key] >= 1):
                raise ConfigError(f"analysis.{key} must be a positive integer")
        if analysis["topk"] is not None and not (isinstance(analysis["topk"], int) and analysis["topk"] >= 1):
            raise ConfigError("analysis.topk must be a positive integer or null")
        return cls(dataset, model, train, analysis, base / cfg["out"], seed, cfg)


def _existing(base, path, what):
    if not path:
        raise ConfigError(f"{what} is required")
    p = base / path
    if not p.exists():
        raise ConfigError(f"{what}: {p} does not exist")
    return p


def load_config(args):
    raw, base = {}, Path(".")
    if args.config:
        path = Path(args.config)
        try:
            raw = json.loads(path.read_text())
        except FileNotFoundError:
            raise ConfigError(f"config {path} does not exist") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path}: {exc}") from None
        base = path.parent
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    analysis = {k: getattr(args, k) for k in ("topk", "slq_probes", "slq_steps")
                if getattr(args, k, None) is not None}
    if getattr(args, "no_export", False):
        analysis["export"] = False
    if analysis:
        overrides["analysis"] = analysis
    cfg = RunConfig.from_dict(_merge(raw, overrides), base)
    if args.out is not None:
        cfg.out = Path(args.out)
    return cfg


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if isinstance(obj, Path):
        return str(obj)
    return obj


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


def resolve_dataset(cfg):
    """Dataset plus the metadata describing where it came from."""
    source = cfg.dataset
    if source["kind"] == "gaussian_mixture":
        params = {k: source[k] for k in GENERATOR_KEYS}
        data_seed = derive_seed(cfg.seed, "data")
        dataset = gen_gaussian_mixture(**params, seed=data_seed)
        meta = {"source": "gaussian_mixture", "seed": cfg.seed, "data_seed": data_seed,
                "params": params}
    elif source["kind"] == "csv":
        dataset = load_csv(source["path"], has_header=source.get("has_header", True),
                           n_classes=source.get("n_classes"))
        sidecar = Path(source["path"]).with_suffix(".json")
        meta = {"source": "csv", "path": Path(source["path"]).name}
        if sidecar.exists():
            meta["generated"] = json.loads(sidecar.read_text())
    else:
        dataset = load_idx(source["images"], source["labels"],
                           limit_per_class=source.get("limit_per_class"),
                           n_classes=source.get("n_classes"))
        meta = {"source": "idx", "images": Path(source["images"]).name,
                "labels": Path(source["labels"]).name}
    meta.update(n=dataset.n, n_classes=dataset.n_classes, d_in=dataset.n_features,
                class_counts=dataset.class_counts)
    return dataset, meta


def _match(dataset, model):
    if dataset.n_features != model.n_features:
        raise DataError(f"model expects {model.n_features} features, dataset has {dataset.n_features}")
    if dataset.n_classes > model.n_classes:
        raise DataError(f"dataset has {dataset.n_classes} classes, model only {model.n_classes}")
    if dataset.n_classes < model.n_classes:
        dataset = LabeledDataset(dataset.features, dataset.labels, model.n_classes)
    return dataset


def cmd_gen(cfg):
    if cfg.dataset["kind"] != "gaussian_mixture":
        raise ConfigError("gen needs a gaussian_mixture dataset")
    dataset, meta = resolve_dataset(cfg)
    cfg.out.mkdir(parents=True, exist_ok=True)
    write_csv(dataset, cfg.out / "dataset.csv")
    write_json(cfg.out / "dataset.json", meta)
    return [cfg.out / "dataset.csv", cfg.out / "dataset.json"]


def cmd_train(cfg):
    dataset, meta = resolve_dataset(cfg)
    sizes = (dataset.n_features, *cfg.model["hidden"], dataset.n_classes)
    model = init_mlp(sizes, cfg.model["activation"], seed=derive_seed(cfg.seed, "init"))
    trained, trace = sgd_train(model, dataset, cfg.train)
    snap_dir = cfg.out / "snapshots"
    snap_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for epoch, snap in sorted(trace.snapshots.items()):
        path = snap_dir / f"epoch_{epoch:04d}.ckpt"
        save_checkpoint(snap, path)
        written.append(path)
    save_checkpoint(trained, cfg.out / "model.ckpt")
    write_json(cfg.out / "trace.json", {
        "config": cfg.raw,
        "train": config_dict(cfg.train),
        "dataset": meta,
        "records": trace.records,
        "snapshot_epochs": sorted(trace.snapshots),
    })
    return written + [cfg.out / "model.ckpt", cfg.out / "trace.json"]


def cmd_analyze(cfg, checkpoint=None):
    checkpoint = Path(checkpoint) if checkpoint else cfg.out / "model.ckpt"
    model = load_checkpoint(checkpoint)
    dataset, meta = resolve_dataset(cfg)
    dataset = _match(dataset, model)
    a = cfg.analysis
    res = run_analysis(model, dataset, topk=a["topk"], slq_probes=a["slq_probes"],
                       slq_steps=a["slq_steps"], tol=a["tol"], seed=cfg.seed,
                       max_bytes=a["max_bytes"])
    out = cfg.out
    out.mkdir(parents=True, exist_ok=True)
    res.density.write_csv(out / "density.csv")
    with open(out / "scree.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["c", "G", "G12_gram", "G1_gram"])
        for c, g, g12, g1 in res.scree_rows():
            w.writerow([c, repr(float(g)), repr(float(g12)), repr(float(g1))])
    report = res.report.to_dict()
    report.update(
        topG_residuals=res.top.residuals,
        topG_converged=res.top.converged,
        slq={"probes": res.density.probes, "lanczos_steps": res.density.lanczos_steps,
             "sigma": res.density.smoothing_sigma, "integral": res.density.integral()},
    )
    write_json(out / "outliers.json", report)
    col = res.collinearity
    write_json(out / "geometry.json", {
        **res.geometry.to_dict(),
        "collinearity": {"min_abs_cosine": col.min_abs_cosine,
                         "max_ratio_error": col.max_ratio_error, "skipped": col.skipped},
        "model": {"layer_sizes": list(model.layer_sizes), "activation": model.activation,
                  "n_params": model.n_params, "train_loss": res.train_loss,
                  "train_accuracy": res.train_accuracy},
        "dataset": meta,
    })
    written = [out / n for n in ("density.csv", "scree.csv", "outliers.json", "geometry.json")]
    if a["export"]:
        write_delta_export(res.delta, out / "deltas.bin", out / "deltas.json")
        written += [out / "deltas.bin", out / "deltas.json"]
    return written


def find_snapshots(snap_dir):
    found = {}
    for name in os.listdir(snap_dir):
        m = SNAPSHOT_RE.match(name)
        if m:
            found[int(m.group(1))] = Path(snap_dir) / name
    return dict(sorted(found.items()))


def cmd_epochs(cfg, snapshots=None):
    snap_dir = Path(snapshots) if snapshots else cfg.out / "snapshots"
    if not snap_dir.is_dir():
        raise DataError(f"snapshot directory {snap_dir} does not exist")
    found = find_snapshots(snap_dir)
    missing = [e for e in cfg.train.snapshot_epochs if e not in found]
    if missing:
        raise DataError(f"missing snapshots for epochs {missing} in {snap_dir}")
    if len(found) < 2:
        raise DataError(f"need at least 2 snapshots in {snap_dir}, found {len(found)}")
    dataset, _ = resolve_dataset(cfg)
    models = {e: load_checkpoint(p) for e, p in found.items()}
    dataset = _match(dataset, next(iter(models.values())))
    table = epoch_dynamics(models, dataset, tol=cfg.analysis["tol"],
                           seed=derive_seed(cfg.seed, "topk"))
    cfg.out.mkdir(parents=True, exist_ok=True)
    write_json(cfg.out / "dynamics.json", table.to_dict())
    scalar = ["epoch", "score_by_class", "score_by_logit", "trace_ratio",
              "median_diag_norm", "median_center_norm"]
    C = len(table.rows[0]["top_g"])
    with open(cfg.out / "dynamics.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(scalar + [f"deviation_{c + 1}" for c in range(C)])
        for row in table.rows:
            w.writerow([row["epoch"]] + [repr(float(row[k])) for k in scalar[1:]]
                       + [repr(float(d)) for d in row["deviations"]])
    return [cfg.out / "dynamics.json", cfg.out / "dynamics.csv"]


def build_parser():
    parser = argparse.ArgumentParser(prog="hanatomy", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", metavar="PATH", help="JSON run config")
        p.add_argument("--seed", type=int, help="master seed (overrides config)")
        p.add_argument("--out", metavar="DIR", help="output directory (overrides config)")
        return p

    common(sub.add_parser("gen", help="write a Gaussian-mixture dataset as CSV"))
    common(sub.add_parser("train", help="train a model and write checkpoints and trace.json"))
    p = common(sub.add_parser("analyze", help="decompose G and compare outliers"))
    p.add_argument("--checkpoint", metavar="PATH", help="default: OUT/model.ckpt")
    p.add_argument("--topk", type=int)
    p.add_argument("--slq-probes", type=int)
    p.add_argument("--slq-steps", type=int)
    p.add_argument("--no-export", action="store_true", help="skip deltas.bin and deltas.json")
    p = common(sub.add_parser("epochs", help="cluster scores across training snapshots"))
    p.add_argument("--snapshots", metavar="DIR", help="default: OUT/snapshots")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args)
        if args.command == "gen":
            written = cmd_gen(cfg)
        elif args.command == "train":
            written = cmd_train(cfg)
        elif args.command == "analyze":
            written = cmd_analyze(cfg, args.checkpoint)
        else:
            written = cmd_epochs(cfg, args.snapshots)
    except ConfigError as exc:
        print(f"hanatomy: config error: {exc}", file=sys.stderr)
        return 2
    except (HanatomyError, OSError) as exc:
        print(f"hanatomy: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    for path in written:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
