"""Command-line entry point: ``python -m pointmatch <command>``.

Every command is driven by an INI config (sections ``dataset``,
``superpoints``, ``train``, ``run``, ``ablate``) plus a few overriding flags.
Unknown sections or keys are errors.
"""
from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import logging
import sys
from dataclasses import asdict, dataclass, field, fields, replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .model import load_checkpoint
from .superpoint import ClusterConfig, cached_superpoints
from .synth import DatasetSpec, WeakScheme, read_dataset, scene_path, weak_labels_for, write_dataset
from .trainer import (
    Ablation,
    TrainConfig,
    TrainItem,
    early_purity,
    evaluate,
    read_metrics_csv,
    run_training,
)

log = logging.getLogger("pointmatch")

ABLATION_VARIANTS = ("full", "no-consistency", "fixed-w:0", "fixed-w:1", "fixed-w:0.5", "fast-decay:16")


@dataclass(frozen=True)
class RunOptions:
    seed: int = 0
    scheme: str = "oneclick"
    data: str = ""
    checkpoint_every: int = 0

    def __post_init__(self):
        WeakScheme.parse(self.scheme)
        if self.checkpoint_every < 0:
            raise ValueError("checkpoint_every must be >= 0")


@dataclass(frozen=True)
class AblateOptions:
    schemes: tuple[str, ...] = ("oneclick", "ratio:0.01")
    seeds: tuple[int, ...] = (0, 1, 2)
    variants: tuple[str, ...] = ABLATION_VARIANTS

    def __post_init__(self):
        for s in self.schemes:
            WeakScheme.parse(s)
        for v in self.variants:
            Ablation.parse(v)
        if not self.seeds:
            raise ValueError("ablate needs at least one seed")


@dataclass(frozen=True)
class Config:
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    superpoints: ClusterConfig = field(default_factory=ClusterConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    run: RunOptions = field(default_factory=RunOptions)
    ablate: AblateOptions = field(default_factory=AblateOptions)

    @property
    def seed(self) -> int:
        return self.run.seed

    def dataset_spec(self) -> DatasetSpec:
        return replace(self.dataset, seed=self.seed)

    def train_config(self) -> TrainConfig:
        return replace(self.train, seed=self.seed)

    def to_ini(self) -> str:
        lines = []
        for section in SECTIONS:
            lines.append(f"[{section}]")
            obj = getattr(self, section)
            for f in fields(obj):
                if f.name in HIDDEN_KEYS.get(section, ()):
                    continue
                lines.append(f"{f.name} = {_render(getattr(obj, f.name))}")
            lines.append("")
        return "\n".join(lines)

    def digest(self) -> str:
        return hashlib.sha256(self.to_ini().encode()).hexdigest()


SECTIONS = {
    "dataset": DatasetSpec,
    "superpoints": ClusterConfig,
    "train": TrainConfig,
    "run": RunOptions,
    "ablate": AblateOptions,
}
# the root seed lives in [run] only
HIDDEN_KEYS = {"dataset": ("seed",), "train": ("seed",)}


def _render(v) -> str:
    if isinstance(v, tuple):
        return ", ".join(_render(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _coerce(default, raw: str, key: str):
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            return raw.lower() in ("1", "true", "yes", "on")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, Ablation):
            return Ablation.parse(raw)
        if isinstance(default, tuple):
            parts = [p.strip() for p in raw.strip("()[]").split(",") if p.strip()]
            kind = type(default[0]) if default else str
            return tuple(kind(p) for p in parts)
    except ValueError as exc:
        raise ValueError(f"bad value for {key}: {raw!r} ({exc})") from None
    return raw


def load_config(path=None, text: str | None = None) -> Config:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    if path is not None:
        if not Path(path).is_file():
            raise FileNotFoundError(f"config file not found: {path}")
        parser.read(path)
    elif text is not None:
        parser.read_string(text)
    cfg = Config()
    for section in parser.sections():
        if section not in SECTIONS:
            raise ValueError(f"unknown config section [{section}]")
        obj = getattr(cfg, section)
        known = {f.name for f in fields(obj)} - set(HIDDEN_KEYS.get(section, ()))
        updates = {}
        for key, raw in parser.items(section):
            if key not in known:
                raise ValueError(f"unknown config key [{section}] {key}")
            updates[key] = _coerce(getattr(obj, key), raw, f"[{section}] {key}")
        cfg = replace(cfg, **{section: replace(obj, **updates)})
    return cfg


def apply_overrides(cfg: Config, args) -> Config:
    run, train = cfg.run, cfg.train
    if getattr(args, "seed", None) is not None:
        run = replace(run, seed=args.seed)
    if getattr(args, "scheme", None) is not None:
        run = replace(run, scheme=args.scheme)
    if getattr(args, "data", None) is not None:
        run = replace(run, data=args.data)
    if getattr(args, "ablation", None) is not None:
        train = replace(train, ablation=Ablation.parse(":".join(args.ablation)))
    if getattr(args, "epochs", None) is not None:
        train = replace(train, epochs=args.epochs)
    return replace(cfg, run=run, train=train)


@dataclass
class RunManifest:
    command: str
    config_hash: str
    dataset: str
    seeds: list
    artifacts: dict = field(default_factory=dict)
    started: str = ""
    finished: str = ""

    def write(self, out_dir: Path) -> Path:
        self.finished = _now()
        self.dataset = str(Path(self.dataset).resolve()) if self.dataset else ""
        self.artifacts = {k: str(Path(v).resolve()) for k, v in self.artifacts.items()}
        missing = [p for p in [self.dataset, *self.artifacts.values()] if p and not Path(p).exists()]
        if missing:
            raise RuntimeError(f"manifest references missing paths: {missing}")
        path = out_dir / "run_manifest.json"
        path.write_text(json.dumps(asdict(self), indent=2) + "\n")
        return path


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _out_dir(path) -> Path:
    if path is None:
        raise ValueError("--out is required for this command")
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ValueError(f"cannot create output directory {out}: {exc.strerror}") from None
    return out


def _echo_config(cfg: Config, out: Path) -> Path:
    path = out / "config.ini"
    path.write_text(cfg.to_ini())
    return path


# ---------------------------------------------------------------------------
# commands

def cmd_gen(cfg: Config, out) -> Path:
    started = _now()
    out = _out_dir(out)
    manifest = write_dataset(out, cfg.dataset_spec())
    echo = _echo_config(cfg, out)
    RunManifest("gen", cfg.digest(), str(out), [cfg.seed],
                {"manifest": str(manifest), "config": str(echo)}, started).write(out)
    return out


def _dataset_dir(cfg: Config, out: Path) -> Path:
    if cfg.run.data:
        data = Path(cfg.run.data)
        if not (data / "manifest.txt").is_file():
            raise FileNotFoundError(f"missing dataset: no manifest.txt in {data}")
        return data
    data = out / "data"
    if not (data / "manifest.txt").is_file():
        write_dataset(data, cfg.dataset_spec())
    return data


def cmd_superpoints(cfg: Config, data) -> list:
    data = Path(data)
    train, _ = read_dataset(data)
    return [cached_superpoints(scene_path(data, "train", i), s.cloud, cfg.superpoints)
            for i, s in enumerate(train)]


def train_run(cfg: Config, out: Path):
    """Shared by ``train`` and ``ablate``: returns (final val report, history)."""
    started = _now()
    out.mkdir(parents=True, exist_ok=True)
    data = _dataset_dir(cfg, out)
    train, val = read_dataset(data)
    if not train:
        raise ValueError(f"dataset {data} has no training scenes")
    weak = weak_labels_for(train, cfg.run.scheme, cfg.seed)
    parts = cmd_superpoints(cfg, data)
    items = [TrainItem(s.cloud, w, p) for s, w, p in zip(train, weak, parts)]
    val_clouds = [s.cloud for s in val]
    tc = cfg.train_config()
    params, history = run_training(tc, items, val_clouds, out_dir=out,
                                   checkpoint_every=cfg.run.checkpoint_every)
    artifacts = {"metrics": str(out / "metrics.csv"), "checkpoint": str(out / "checkpoint.ckpt"),
                 "config": str(_echo_config(cfg, out))}
    report = None
    if val_clouds:
        report = evaluate(params, val_clouds, tc.k_feat)
        (out / "iou_report.txt").write_text(report.table())
        artifacts["iou_report"] = str(out / "iou_report.txt")
    RunManifest("train", cfg.digest(), str(data), [cfg.seed], artifacts, started).write(out)
    return report, history


def cmd_train(cfg: Config, out):
    report, history = train_run(cfg, _out_dir(out))
    tail = f" val mIoU {report.miou:.4f}" if report else ""
    print(f"trained {len(history)} epochs ({cfg.train.ablation}, {cfg.run.scheme}, seed {cfg.seed}){tail}")
    return report


def cmd_eval(cfg: Config, checkpoint, data, split: str = "val", out=None):
    if checkpoint is None:
        raise ValueError("--checkpoint is required")
    data = Path(data or cfg.run.data or "")
    if not (data / "manifest.txt").is_file():
        raise FileNotFoundError(f"missing dataset: no manifest.txt in {data}")
    params = load_checkpoint(checkpoint)
    train, val = read_dataset(data)
    clouds = [s.cloud for s in (val if split == "val" else train)]
    if not clouds:
        raise ValueError(f"no {split} scenes in {data}")
    report = evaluate(params, clouds, cfg.train.k_feat)
    print(report.table(), end="")
    if out is not None:
        (_out_dir(out) / f"iou_report_{split}.txt").write_text(report.table())
    return report


def _slug(text: str) -> str:
    return text.replace(":", "_")


def cmd_ablate(cfg: Config, out) -> list:
    """Every variant on every scheme over the same seeds; one row per pair."""
    started = _now()
    out = _out_dir(out)
    rows = []
    for scheme in cfg.ablate.schemes:
        for variant in cfg.ablate.variants:
            scores = []
            for seed in cfg.ablate.seeds:
                run_cfg = replace(cfg, run=replace(cfg.run, seed=seed, scheme=scheme,
                                                   data=cfg.run.data or str(out / f"data_seed{seed}")),
                                  train=replace(cfg.train, ablation=Ablation.parse(variant)))
                if not cfg.run.data and not (out / f"data_seed{seed}" / "manifest.txt").exists():
                    write_dataset(out / f"data_seed{seed}", run_cfg.dataset_spec())
                run_dir = out / _slug(scheme) / _slug(variant) / f"seed{seed}"
                report, _ = train_run(run_cfg, run_dir)
                scores.append(report.miou)
                log.info("%s %s seed %d: %.4f", scheme, variant, seed, report.miou)
            rows.append((variant, scheme, float(np.mean(scores)), scores))
    text = format_ablation(rows, cfg.ablate.seeds)
    (out / "ablation.tsv").write_text(text)
    echo = _echo_config(cfg, out)
    RunManifest("ablate", cfg.digest(), cfg.run.data or str(out), list(cfg.ablate.seeds),
                {"table": str(out / "ablation.tsv"), "config": str(echo)}, started).write(out)
    print(text, end="")
    return rows


def format_ablation(rows, seeds) -> str:
    head = "variant\tscheme\tmean_miou\t" + "\t".join(f"seed{s}" for s in seeds)
    body = [f"{v}\t{s}\t{m:.4f}\t" + "\t".join(f"{x:.4f}" for x in xs) for v, s, m, xs in rows]
    return "\n".join([head, *body]) + "\n"


def cmd_report(run_dir) -> str:
    run_dir = Path(run_dir)
    metrics = run_dir / "metrics.csv"
    if not metrics.is_file():
        raise FileNotFoundError(f"no metrics.csv in {run_dir}")
    history = read_metrics_csv(metrics)
    if not history:
        raise ValueError(f"{metrics} has no rows")
    last_val = [m for m in history if m.val_miou is not None]
    lines = [f"epochs\t{len(history)}",
             f"final_val_miou\t{last_val[-1].val_miou:.4f}" if last_val else "final_val_miou\t-",
             f"final_mask_rate\t{history[-1].mask_rate:.4f}",
             "", "early-stage pseudo-label purity (first quarter of training)",
             early_purity(history).table()]
    iou = run_dir / "iou_report.txt"
    if iou.is_file():
        lines += ["final validation IoU", iou.read_text()]
    text = "\n".join(lines)
    (run_dir / "report.txt").write_text(text)
    print(text, end="")
    return text


# ---------------------------------------------------------------------------
# argument parsing

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="INI config file")
    common.add_argument("--seed", type=int, metavar="N", help="root seed")
    common.add_argument("--out", metavar="DIR", help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    training = argparse.ArgumentParser(add_help=False)
    training.add_argument("--scheme", metavar="SCHEME", help="ratio:F | points:K | oneclick")
    training.add_argument("--ablation", nargs="+", metavar="VARIANT",
                          help="full | no-consistency | fixed-w:V | fast-decay:D")
    training.add_argument("--epochs", type=int, metavar="N")
    training.add_argument("--data", metavar="DIR", help="existing dataset directory")

    parser = argparse.ArgumentParser(prog="pointmatch",
                                     description="Synthetic weakly supervised point-cloud segmentation runs.")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("gen", parents=[common], help="write a synthetic dataset")
    sp = sub.add_parser("superpoints", parents=[common], help="build and cache super-points")
    sp.add_argument("--data", metavar="DIR", required=True)
    sub.add_parser("train", parents=[common, training], help="train one model")
    ev = sub.add_parser("eval", parents=[common], help="evaluate a checkpoint")
    ev.add_argument("--checkpoint", metavar="PATH", required=True)
    ev.add_argument("--data", metavar="DIR", required=True)
    ev.add_argument("--split", choices=("val", "train"), default="val")
    sub.add_parser("ablate", parents=[common, training], help="compare training variants")
    rp = sub.add_parser("report", parents=[common], help="summarize a training run")
    rp.add_argument("run_dir", nargs="?", help="run directory (defaults to --out)")
    return parser


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    cfg = apply_overrides(load_config(args.config), args)
    if args.command == "gen":
        cmd_gen(cfg, args.out)
    elif args.command == "superpoints":
        parts = cmd_superpoints(cfg, args.data)
        print(f"{len(parts)} partitions, {sum(p.num_groups for p in parts)} super-points")
    elif args.command == "train":
        cmd_train(cfg, args.out)
    elif args.command == "eval":
        cmd_eval(cfg, args.checkpoint, args.data, args.split, args.out)
    elif args.command == "ablate":
        cmd_ablate(cfg, args.out)
    elif args.command == "report":
        cmd_report(args.run_dir or args.out or ".")
    return 0


def main(argv=None) -> int:
    try:
        return run(argv)
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"pointmatch: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
