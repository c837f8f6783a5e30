"""Pipeline configuration.

One INI-style text file drives every command: ``key = value`` lines
under ``[section]`` headers.  Command-line flags override file values,
and the effective configuration is serialized back into each output
directory so a run can be reproduced from its artifacts alone.
"""

from __future__ import annotations

import configparser
import io
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

from .errors import ConfigError
from .region_proposal import ProposalParams
from .ssl_core import AugmentationSpec, TrainConfig

# every key the file format accepts, with its section
_SCHEMA = {
    "segmentation": ("k", "min_size", "sigma", "min_side"),
    "sampling": ("threshold", "pad", "sample_side", "osm_min_side"),
    "resampling": ("seed",),
    "training": (
        "tau", "batch_size", "base_lr", "epochs", "schedule", "seed",
        "optimizer", "workers", "channels", "d_h", "d_hidden", "d_z",
        "freeze_spec",
    ),
    "augmentation": (
        "out_side", "crop_scale", "hflip_prob", "vflip_prob",
        "color_jitter", "blur_prob", "blur_sigma",
    ),
    "paths": ("rasters", "landcover", "osm", "rules", "corpus", "output"),
}


@dataclass(frozen=True)
class PipelineConfig:
    """Validated settings for one pipeline run."""

    segmentation: ProposalParams
    threshold: float
    pad: float
    sample_side: int
    osm_min_side: int
    resample_seed: int
    train: TrainConfig
    augment: AugmentationSpec
    freeze_spec: Union[int, str]
    rasters: Optional[Path]
    landcover: Optional[Path]
    osm: Optional[Path]
    rules: Optional[Path]
    corpus: Optional[Path]
    output: Path


def _floats(raw: str, n: int, where: str) -> tuple:
    parts = [p for p in raw.replace(",", " ").split() if p]
    if len(parts) != n:
        raise ConfigError(f"{where} wants {n} numbers, got {raw!r}")
    try:
        return tuple(float(p) for p in parts)
    except ValueError:
        raise ConfigError(f"{where}: not numeric: {raw!r}") from None


def _ints(raw: str, where: str) -> tuple:
    parts = [p for p in raw.replace(",", " ").split() if p]
    try:
        return tuple(int(p) for p in parts)
    except ValueError:
        raise ConfigError(f"{where}: not integers: {raw!r}") from None


class _Section:
    """One section's raw values with typed accessors."""

    def __init__(self, name: str, values: dict):
        self.name = name
        self.values = values

    def get(self, key: str, default):
        raw = self.values.get(key)
        if raw is None:
            return default
        where = f"[{self.name}] {key}"
        if isinstance(default, bool):  # not used yet; bools trip the int branch
            raise ConfigError(f"{where}: unsupported type")
        try:
            if isinstance(default, int):
                return int(raw)
            if isinstance(default, float):
                return float(raw)
        except ValueError:
            raise ConfigError(f"{where}: not numeric: {raw!r}") from None
        return raw


def _parse_freeze(raw: str) -> Union[int, str]:
    if raw in ("none", "all", "default"):
        return raw
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(
            f"[training] freeze_spec must be none/all/default or an integer, got {raw!r}"
        ) from None


def load_config(path, overrides: dict = None) -> PipelineConfig:
    """Read ``path`` and apply ``overrides`` ({"section.key": "value"}).

    Relative paths in [paths] are resolved against the config file's
    directory.  Unknown sections or keys are rejected; value ranges are
    validated by the owning parameter types.
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(path.read_text(), source=str(path))
    except configparser.Error as e:
        raise ConfigError(f"malformed config {path}: {e}") from None

    raw = {s: dict(parser.items(s)) for s in parser.sections()}
    for key, value in (overrides or {}).items():
        section, _, name = key.partition(".")
        if not name:
            raise ConfigError(f"override {key!r} is not of the form section.key=value")
        raw.setdefault(section, {})[name] = value

    for section, values in raw.items():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        for key in values:
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown key {key!r} in [{section}]")

    return _build(raw, base=path.parent)


def default_config(output: Path) -> PipelineConfig:
    """All defaults, writing under ``output``; used when no file is given."""
    return _build({"paths": {"output": str(output)}}, base=Path.cwd())


def _build(raw: dict, base: Path) -> PipelineConfig:
    seg = _Section("segmentation", raw.get("segmentation", {}))
    smp = _Section("sampling", raw.get("sampling", {}))
    res = _Section("resampling", raw.get("resampling", {}))
    trn = _Section("training", raw.get("training", {}))
    aug = _Section("augmentation", raw.get("augmentation", {}))
    pth = _Section("paths", raw.get("paths", {}))

    try:
        segmentation = ProposalParams(
            k=seg.get("k", 300.0),
            min_size=seg.get("min_size", 50),
            sigma=seg.get("sigma", 0.8),
            min_side=seg.get("min_side", 32),
        )
        channels = _ints(trn.get("channels", "16 32 64"), "[training] channels")
        train = TrainConfig(
            tau=trn.get("tau", 0.5),
            batch_size=trn.get("batch_size", 64),
            base_lr=trn.get("base_lr", 1e-3),
            epochs=trn.get("epochs", 50),
            schedule=trn.get("schedule", "cosine"),
            seed=trn.get("seed", 0),
            optimizer=trn.get("optimizer", "adam"),
            workers=trn.get("workers", os.cpu_count() or 1),
            channels=channels,
            d_h=trn.get("d_h", 64),
            d_hidden=trn.get("d_hidden", 64),
            d_z=trn.get("d_z", 32),
        )
        augment = AugmentationSpec(
            out_side=aug.get("out_side", 32),
            crop_scale=_floats(aug.get("crop_scale", "0.2 1.0"),
                               2, "[augmentation] crop_scale"),
            hflip_prob=aug.get("hflip_prob", 0.5),
            vflip_prob=aug.get("vflip_prob", 0.5),
            color_jitter=_floats(aug.get("color_jitter", "0.4 0.4 0.4"),
                                 3, "[augmentation] color_jitter"),
            blur_prob=aug.get("blur_prob", 0.5),
            blur_sigma=_floats(aug.get("blur_sigma", "0.1 2.0"),
                               2, "[augmentation] blur_sigma"),
        )
    except ConfigError:
        raise
    except Exception as e:  # range errors from the owning types
        raise ConfigError(str(e)) from None

    def maybe_path(key):
        value = pth.get(key, None)
        if value is None:
            return None
        p = Path(value)
        return p if p.is_absolute() else base / p

    output = maybe_path("output") or base / "out"
    return PipelineConfig(
        segmentation=segmentation,
        threshold=smp.get("threshold", 0.2),
        pad=smp.get("pad", 0.1),
        sample_side=smp.get("sample_side", 64),
        osm_min_side=smp.get("osm_min_side", 8),
        resample_seed=res.get("seed", 0),
        train=train,
        augment=augment,
        freeze_spec=_parse_freeze(trn.get("freeze_spec", "default")),
        rasters=maybe_path("rasters"),
        landcover=maybe_path("landcover"),
        osm=maybe_path("osm"),
        rules=maybe_path("rules"),
        corpus=maybe_path("corpus"),
        output=output,
    )


def serialize_config(cfg: PipelineConfig) -> str:
    """Effective settings as INI text; stable across identical configs."""
    p = configparser.ConfigParser(interpolation=None)
    seg, trn, aug = cfg.segmentation, cfg.train, cfg.augment
    p["segmentation"] = {
        "k": repr(seg.k), "min_size": str(seg.min_size),
        "sigma": repr(seg.sigma), "min_side": str(seg.min_side),
    }
    p["sampling"] = {
        "threshold": repr(cfg.threshold), "pad": repr(cfg.pad),
        "sample_side": str(cfg.sample_side),
        "osm_min_side": str(cfg.osm_min_side),
    }
    p["resampling"] = {"seed": str(cfg.resample_seed)}
    p["training"] = {
        "tau": repr(trn.tau), "batch_size": str(trn.batch_size),
        "base_lr": repr(trn.base_lr), "epochs": str(trn.epochs),
        "schedule": trn.schedule, "seed": str(trn.seed),
        "optimizer": trn.optimizer, "workers": str(trn.workers),
        "channels": " ".join(str(c) for c in trn.channels),
        "d_h": str(trn.d_h), "d_hidden": str(trn.d_hidden),
        "d_z": str(trn.d_z), "freeze_spec": str(cfg.freeze_spec),
    }
    p["augmentation"] = {
        "out_side": str(aug.out_side),
        "crop_scale": " ".join(repr(v) for v in aug.crop_scale),
        "hflip_prob": repr(aug.hflip_prob), "vflip_prob": repr(aug.vflip_prob),
        "color_jitter": " ".join(repr(v) for v in aug.color_jitter),
        "blur_prob": repr(aug.blur_prob),
        "blur_sigma": " ".join(repr(v) for v in aug.blur_sigma),
    }
    paths = {}
    for key in ("rasters", "landcover", "osm", "rules", "corpus", "output"):
        value = getattr(cfg, key)
        if value is not None:
            paths[key] = str(value)
    p["paths"] = paths
    buf = io.StringIO()
    p.write(buf)
    return buf.getvalue()


def snapshot_config(cfg: PipelineConfig, out_dir: Path) -> Path:
    """Write the effective config into ``out_dir`` for provenance."""
    out_dir.mkdir(parents=True, exist_ok=True)
    target = out_dir / "config.used.ini"
    target.write_text(serialize_config(cfg))
    return target
