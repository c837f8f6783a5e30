"""Command-line front end.

Subcommands cover the whole pipeline: sample-natural, sample-osm,
rebalance, pretrain, probe, gradcheck, version.  Every command is
deterministic given the config file and seeds; reruns overwrite their
outputs byte-identically.  Diagnostics go to stderr, data to files and
stdout, and the exit code is 0 only when the command succeeds.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import PipelineConfig, default_config, load_config, snapshot_config
from .errors import ConfigError, ForgeError
from .geo_raster import load_raster
from .natural_sampler import sample_natural
from .osm_sampler import RuleTable, parse_osm, sample_manmade
from .probe_eval import ProbeConfig, evaluate_probe, extract_features, fit_probe
from .resampler import (
    DatasetManifest,
    load_manifest,
    merge_manifests,
    rebalance,
    save_manifest,
)
from .ssl_core import (
    gradient_check,
    init_model,
    load_checkpoint,
    manifest_patches,
    train_stage1,
    train_stage2,
)
from .ssl_core.train import IMAGE_SUFFIXES
from .taxonomy import MANMADE_CLASSES, NATURAL_CLASSES

_NATURAL_NAMES = tuple(c.name for c in NATURAL_CLASSES)
_MANMADE_NAMES = tuple(c.name for c in MANMADE_CLASSES)


def _resolve_workers(cfg: PipelineConfig) -> PipelineConfig:
    # env var wins over config; results are worker-count independent
    env = os.environ.get("TOV_FORGE_THREADS")
    if not env:
        return cfg
    try:
        workers = int(env)
    except ValueError:
        raise ConfigError(f"TOV_FORGE_THREADS must be an integer, got {env!r}") from None
    return replace(cfg, train=replace(cfg.train, workers=workers))


def _require(path, what: str) -> Path:
    if path is None:
        raise ConfigError(f"no {what} path configured")
    if not Path(path).exists():
        raise ConfigError(f"{what} path does not exist: {path}")
    return Path(path)


def _image_files(root: Path) -> list:
    return sorted(
        (p for p in root.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES),
        key=lambda p: p.name,
    )


def _load_raster_dir(root: Path) -> dict:
    return {p.stem: load_raster(p) for p in _image_files(root)}


def _print_counts(manifest: DatasetManifest) -> None:
    counts = manifest.counts()
    for cat in manifest.taxonomy():
        print(f"{cat.name}: {counts.get(cat.name, 0)}")
    print(f"total: {len(manifest)}")


def _write_manifest(manifest: DatasetManifest, cfg: PipelineConfig, name: str) -> Path:
    cfg.output.mkdir(parents=True, exist_ok=True)
    target = cfg.output / name
    save_manifest(manifest, target)
    snapshot_config(cfg, cfg.output)
    return target


def cmd_sample_natural(cfg: PipelineConfig, args) -> int:
    rasters_dir = _require(cfg.rasters, "rasters")
    landcover_dir = _require(cfg.landcover, "landcover")
    records = []
    for image_path in _image_files(rasters_dir):
        matches = [p for p in _image_files(landcover_dir) if p.stem == image_path.stem]
        if not matches:
            raise ConfigError(
                f"no land-cover raster for {image_path.stem!r} under {landcover_dir}"
            )
        image = load_raster(image_path)
        landcover = load_raster(matches[0])
        records.extend(
            sample_natural(
                image,
                landcover,
                cfg.segmentation,
                cfg.threshold,
                image_id=image_path.stem,
            )
        )
    manifest = DatasetManifest(
        id="natural",
        seed=cfg.resample_seed,
        records=tuple(records),
        taxonomy_names=_NATURAL_NAMES,
    )
    target = _write_manifest(manifest, cfg, "natural.jsonl")
    print(f"wrote {target}", file=sys.stderr)
    _print_counts(manifest)
    return 0


def cmd_sample_osm(cfg: PipelineConfig, args) -> int:
    rasters_dir = _require(cfg.rasters, "rasters")
    osm_path = _require(cfg.osm, "osm")
    if cfg.rules is not None:
        rules = RuleTable.load(_require(cfg.rules, "rules"))
    else:
        rules = RuleTable.default()
    doc = parse_osm(osm_path.read_text())
    records = []
    for image_path in _image_files(rasters_dir):
        records.extend(
            sample_manmade(
                load_raster(image_path),
                doc,
                rules,
                pad=cfg.pad,
                image_id=image_path.stem,
                sample_side=cfg.sample_side,
                min_side=cfg.osm_min_side,
            )
        )
    manifest = DatasetManifest(
        id="man-made",
        seed=cfg.resample_seed,
        records=tuple(records),
        taxonomy_names=_MANMADE_NAMES,
    )
    target = _write_manifest(manifest, cfg, "manmade.jsonl")
    print(f"wrote {target}", file=sys.stderr)
    _print_counts(manifest)
    return 0


def cmd_rebalance(cfg: PipelineConfig, args) -> int:
    nat_path = Path(args.natural) if args.natural else cfg.output / "natural.jsonl"
    man_path = Path(args.manmade) if args.manmade else cfg.output / "manmade.jsonl"
    nat = load_manifest(_require(nat_path, "natural manifest"))
    man = load_manifest(_require(man_path, "man-made manifest"))
    merged = merge_manifests(nat, man)
    # Balance over the classes this corpus actually produced.  The
    # samplers declare their full target legends, and small regions
    # rarely cover all of them; an absent class would pin the quota
    # at zero.
    counts = merged.counts()
    missing = [c.name for c in merged.taxonomy() if counts[c.name] == 0]
    if missing:
        print(f"dropping empty classes: {', '.join(missing)}", file=sys.stderr)
        keep = tuple(c.name for c in merged.taxonomy() if counts[c.name] > 0)
        merged = DatasetManifest(
            id=merged.id, seed=merged.seed, records=merged.records,
            taxonomy_names=keep,
        )
    balanced = rebalance(merged, cfg.resample_seed)
    for name, miss in sorted(balanced.shortfalls.items()):
        print(f"shortfall: {name} short by {miss}", file=sys.stderr)
    target = _write_manifest(balanced, cfg, "balanced.jsonl")
    print(f"wrote {target}", file=sys.stderr)
    _print_counts(balanced)
    return 0


def _stage2_data(cfg: PipelineConfig, manifest_path: Path):
    manifest = load_manifest(_require(manifest_path, "manifest"))
    rasters = _load_raster_dir(_require(cfg.rasters, "rasters"))
    return manifest, rasters


def cmd_pretrain(cfg: PipelineConfig, args) -> int:
    stages = ("1", "2") if args.stage == "both" else (args.stage,)
    if args.resume and args.stage == "both":
        raise ConfigError("--resume needs an explicit --stage 1 or 2")
    cfg.output.mkdir(parents=True, exist_ok=True)
    snapshot_config(cfg, cfg.output)
    manifest_path = Path(args.manifest) if args.manifest else cfg.output / "balanced.jsonl"

    result = None
    if "1" in stages:
        corpus = _require(cfg.corpus, "corpus")
        result = train_stage1(
            corpus,
            cfg.train,
            cfg.augment,
            out_dir=cfg.output,
            resume_from=Path(args.resume) if args.resume else None,
        )
        _report_stage(1, result)
    if "2" in stages:
        manifest, rasters = _stage2_data(cfg, manifest_path)
        if result is not None:
            encoder, head = result.encoder, result.head
        else:
            if args.resume:
                encoder = head = None  # restored inside train_stage2
            else:
                encoder, head, _ = load_checkpoint(cfg.output / "stage1.ckpt")
        result = train_stage2(
            encoder,
            head,
            manifest,
            rasters,
            cfg.train,
            cfg.augment,
            freeze_spec=cfg.freeze_spec,
            out_dir=cfg.output,
            resume_from=Path(args.resume) if args.resume else None,
        )
        _report_stage(2, result)
    return 0


def _report_stage(stage: int, result) -> None:
    hist = result.loss_history
    tail = f", last epoch loss {hist[-1]:.6f}" if hist else ""
    print(f"stage {stage} done: {len(hist)} epochs{tail}", file=sys.stderr)


def cmd_probe(cfg: PipelineConfig, args) -> int:
    ckpt = Path(args.checkpoint) if args.checkpoint else cfg.output / "stage2.ckpt"
    encoder, _, _ = load_checkpoint(_require(ckpt, "checkpoint"))
    manifest_path = Path(args.manifest) if args.manifest else cfg.output / "balanced.jsonl"
    manifest, rasters = _stage2_data(cfg, manifest_path)
    patches = manifest_patches(manifest, rasters)
    labels = np.array([rec.label.id for rec in manifest.records])
    features = extract_features(encoder, patches, side=cfg.augment.out_side)
    fit = fit_probe(features, labels, args.shots,
                    ProbeConfig(), seed=cfg.train.seed)
    result = evaluate_probe(fit, features, labels)
    lines = [f"shots: {args.shots}", f"overall accuracy: {result.oa:.6f}"]
    classes = sorted(set(int(c) for c in fit.classes))
    for c, acc in zip(classes, result.per_class_acc):
        shown = "n/a" if np.isnan(acc) else f"{acc:.6f}"
        lines.append(f"class {c}: {shown}")
    report = "\n".join(lines) + "\n"
    cfg.output.mkdir(parents=True, exist_ok=True)
    (cfg.output / "probe.txt").write_text(report)
    snapshot_config(cfg, cfg.output)
    sys.stdout.write(report)
    return 0


def cmd_gradcheck(cfg: PipelineConfig, args) -> int:
    encoder, head = init_model(
        cfg.train.in_channels,
        cfg.train.channels,
        cfg.train.d_h,
        cfg.train.d_hidden,
        cfg.train.d_z,
        seed=cfg.train.seed,
    )
    rng = np.random.default_rng(cfg.train.seed)
    batch = rng.normal(0.5, 0.2, (4, 3, 16, 16))
    report = gradient_check(
        encoder, head, batch, tau=cfg.train.tau, corrupt=args.corrupt
    )
    for line in report.lines():
        print(line)
    if not report.passed:
        print("gradient check FAILED", file=sys.stderr)
        return 1
    return 0


def cmd_version(cfg, args) -> int:
    print(__version__)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rsforge",
        description="Label-free pretraining corpus builder and trainer.",
    )
    parser.add_argument("-c", "--config", metavar="FILE",
                        help="pipeline config file (INI)")
    parser.add_argument("--set", metavar="SECTION.KEY=VALUE", action="append",
                        default=[], dest="overrides",
                        help="override one config value; repeatable")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("sample-natural",
                   help="propose windows on rasters, keep homogeneous ones")
    sub.add_parser("sample-osm",
                   help="cut windows around mapped man-made features")

    p = sub.add_parser("rebalance", help="merge manifests and even out classes")
    p.add_argument("--natural", metavar="FILE")
    p.add_argument("--manmade", metavar="FILE")

    p = sub.add_parser("pretrain", help="contrastive pretraining")
    p.add_argument("--stage", choices=("1", "2", "both"), default="both")
    p.add_argument("--resume", metavar="CKPT")
    p.add_argument("--manifest", metavar="FILE")

    p = sub.add_parser("probe", help="few-shot linear probe of a checkpoint")
    p.add_argument("checkpoint", nargs="?")
    p.add_argument("--shots", type=int, default=5)
    p.add_argument("--manifest", metavar="FILE")

    p = sub.add_parser("gradcheck", help="finite-difference gradient audit")
    p.add_argument("--corrupt", metavar="PARAM", help=argparse.SUPPRESS)

    sub.add_parser("version", help="print version and exit")
    return parser


_COMMANDS = {
    "sample-natural": cmd_sample_natural,
    "sample-osm": cmd_sample_osm,
    "rebalance": cmd_rebalance,
    "pretrain": cmd_pretrain,
    "probe": cmd_probe,
    "gradcheck": cmd_gradcheck,
    "version": cmd_version,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "version":
        return cmd_version(None, args)
    try:
        overrides = {}
        for item in args.overrides:
            key, sep, value = item.partition("=")
            if not sep:
                raise ConfigError(f"--set wants SECTION.KEY=VALUE, got {item!r}")
            overrides[key.strip()] = value.strip()
        if args.config:
            cfg = load_config(args.config, overrides)
        else:
            if overrides:
                raise ConfigError("--set requires --config")
            cfg = default_config(Path.cwd() / "out")
        cfg = _resolve_workers(cfg)
        return _COMMANDS[args.command](cfg, args)
    except ForgeError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
