"""Contrastive pretraining loop and the two-stage learning path.

Stage 1 trains encoder and head from scratch on a directory of general
images.  Stage 2 continues on remote-sensing patches with a frozen
prefix of encoder layers, so earlier knowledge is retained bitwise.

Determinism contract: every random quantity is derived from (seed,
epoch) or (seed, epoch, sample index), never from a shared mutable
generator, so worker parallelism and resume cannot change results.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from ..errors import (
    InsufficientDataError,
    ShapeMismatchError,
    UnreadableImageError,
)
from .augment import AugmentationSpec, augment_pair
from .checkpoint import load_checkpoint, save_checkpoint
from .loss import nt_xent
from .nn import (
    EncoderState,
    ProjectionHead,
    backward,
    forward,
    init_model,
    with_freeze,
)
from .optim import OptimizerState, cosine_lr

IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff"}


@dataclass(frozen=True)
class TrainConfig:
    tau: float = 0.5
    batch_size: int = 64
    base_lr: float = 1e-3
    epochs: int = 50
    schedule: str = "cosine"  # "cosine" or "constant"
    seed: int = 0
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    momentum: float = 0.9
    workers: int = 1
    in_channels: int = 3
    channels: tuple = (16, 32, 64)
    d_h: int = 64
    d_hidden: int = 64
    d_z: int = 32

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if self.batch_size < 2:
            raise ValueError(f"batch_size must be >= 2, got {self.batch_size}")
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if self.schedule not in ("cosine", "constant"):
            raise ValueError(f"unknown schedule {self.schedule!r}")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if not self.channels:
            raise ValueError("encoder needs at least one conv block")
        if self.workers < 1:
            raise ValueError(f"workers must be >= 1, got {self.workers}")


@dataclass
class TrainResult:
    encoder: EncoderState
    head: ProjectionHead
    loss_history: list = field(default_factory=list)  # per-epoch mean loss
    opt: OptimizerState | None = None
    step: int = 0
    epoch: int = 0


def make_optimizer(cfg: TrainConfig) -> OptimizerState:
    return OptimizerState(
        kind=cfg.optimizer, beta1=cfg.beta1, beta2=cfg.beta2,
        eps=cfg.eps, momentum=cfg.momentum,
    )


def load_image_dir(path) -> list:
    """All images under ``path`` (recursive), sorted by relative path."""
    root = Path(path)
    if not root.is_dir():
        raise UnreadableImageError(f"not a directory: {root}")
    files = sorted(
        (p for p in root.rglob("*") if p.suffix.lower() in IMAGE_SUFFIXES),
        key=lambda p: p.relative_to(root).as_posix(),
    )
    images = []
    for p in files:
        try:
            with Image.open(p) as im:
                images.append(np.asarray(im.convert("RGB")))
        except (UnidentifiedImageError, OSError) as e:
            raise UnreadableImageError(f"cannot decode {p}: {e}") from e
    return images


def manifest_patches(manifest, rasters) -> list:
    """Pixel windows of every manifest record, in record order.

    ``rasters`` maps image id to a GeoRaster, or is a callable doing so.
    """
    getter = rasters.__getitem__ if hasattr(rasters, "__getitem__") else rasters
    patches = []
    for rec in manifest.records:
        raster = getter(rec.image_id)
        window = raster.window(rec.window)
        if window.shape[2] != 3:
            raise ShapeMismatchError(
                f"record on {rec.image_id!r} has {window.shape[2]} bands, need 3"
            )
        patches.append(window)
    return patches


def _pair_batch(images, indices, spec, seed: int, epoch: int, workers: int):
    """Interleaved (2b, 3, side, side) view batch; rows (2i, 2i+1) pair up."""

    def views(idx):
        rng = np.random.default_rng((seed, epoch, int(idx)))
        return augment_pair(images[idx], spec, rng)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            pairs = list(pool.map(views, indices))
    else:
        pairs = [views(i) for i in indices]
    out = np.empty((2 * len(pairs),) + pairs[0][0].shape)
    for i, (v1, v2) in enumerate(pairs):
        out[2 * i] = v1
        out[2 * i + 1] = v2
    return out


def backward_step(enc, head, batch, cfg: TrainConfig, opt: OptimizerState, lr: float):
    """One optimization step on an interleaved view batch; returns the loss."""
    _, z, caches = forward(enc, head, batch)
    loss, dz = nt_xent(z, cfg.tau)
    grads = backward(enc, head, caches, dz)
    params = dict(enc.param_items() + head.param_items())
    opt.step(params, grads, lr, frozen=enc.frozen_param_names())
    return loss


def _train_loop(
    enc, head, images, cfg, spec, *,
    opt, stage, start_epoch=0, stop_at_epoch=None, out_dir=None, history=None,
):
    n = len(images)
    if n < cfg.batch_size:
        raise InsufficientDataError(
            f"{n} images < batch size {cfg.batch_size}"
        )
    steps_per_epoch = n // cfg.batch_size
    total_steps = cfg.epochs * steps_per_epoch
    step = start_epoch * steps_per_epoch
    end_epoch = cfg.epochs if stop_at_epoch is None else min(stop_at_epoch, cfg.epochs)

    history = list(history) if history else []
    for epoch in range(start_epoch, end_epoch):
        order = np.random.default_rng((cfg.seed, epoch)).permutation(n)
        losses = []
        for b in range(steps_per_epoch):
            idx = order[b * cfg.batch_size : (b + 1) * cfg.batch_size]
            batch = _pair_batch(images, idx, spec, cfg.seed, epoch, cfg.workers)
            if cfg.schedule == "cosine":
                lr = cosine_lr(cfg.base_lr, step, total_steps)
            else:
                lr = cfg.base_lr
            losses.append(backward_step(enc, head, batch, cfg, opt, lr))
            step += 1
        history.append(float(np.mean(losses)))
        if out_dir is not None:
            save_checkpoint(
                Path(out_dir) / f"stage{stage}.ckpt",
                enc, head, step=step, epoch=epoch + 1, stage=stage, opt=opt,
                meta={"loss_history": history},
            )
    return TrainResult(enc, head, history, opt, step, end_epoch)


def train_stage1(
    image_dir, cfg: TrainConfig, spec: AugmentationSpec, *,
    out_dir=None, resume_from=None, stop_at_epoch=None,
) -> TrainResult:
    """Stage 1: general visual pretraining from random init, all layers free."""
    images = load_image_dir(image_dir)
    history = None
    if resume_from is not None:
        enc, head, info = load_checkpoint(resume_from)
        opt, start_epoch = info["opt"], info["epoch"]
        history = info["meta"].get("loss_history")
        if opt is None:
            opt = make_optimizer(cfg)
    else:
        enc, head = init_model(
            cfg.in_channels, cfg.channels, cfg.d_h, cfg.d_hidden, cfg.d_z, seed=cfg.seed
        )
        opt, start_epoch = make_optimizer(cfg), 0
    return _train_loop(
        enc, head, images, cfg, spec,
        opt=opt, stage=1, start_epoch=start_epoch,
        stop_at_epoch=stop_at_epoch, out_dir=out_dir, history=history,
    )


def train_stage2(
    enc: EncoderState, head: ProjectionHead, manifest, rasters,
    cfg: TrainConfig, spec: AugmentationSpec, freeze_spec="default", *,
    out_dir=None, resume_from=None, stop_at_epoch=None,
) -> TrainResult:
    """Stage 2: continue on remote-sensing patches with a frozen prefix.

    The frozen prefix keeps its stage-1 weights bit-for-bit; a fresh
    optimizer trains only the remaining encoder layers and the head.
    """
    patches = manifest_patches(manifest, rasters)
    history = None
    if resume_from is not None:
        enc, head, info = load_checkpoint(resume_from)
        opt, start_epoch = info["opt"], info["epoch"]
        history = info["meta"].get("loss_history")
        if opt is None:
            opt = make_optimizer(cfg)
    else:
        enc = with_freeze(enc, freeze_spec)
        head = head.copy()
        opt, start_epoch = make_optimizer(cfg), 0
    return _train_loop(
        enc, head, patches, cfg, spec,
        opt=opt, stage=2, start_epoch=start_epoch,
        stop_at_epoch=stop_at_epoch, out_dir=out_dir, history=history,
    )


@dataclass
class GradCheckReport:
    per_param: dict  # name -> max relative error
    max_rel_err: float
    tolerance: float
    passed: bool

    def lines(self) -> list:
        out = [
            f"{name}: max rel err {err:.3e} {'ok' if err < self.tolerance else 'FAIL'}"
            for name, err in self.per_param.items()
        ]
        verdict = "PASS" if self.passed else "FAIL"
        out.append(f"overall: {self.max_rel_err:.3e} (< {self.tolerance:.0e}) {verdict}")
        return out


def gradient_check(
    enc: EncoderState, head: ProjectionHead, batch: np.ndarray, tau: float = 0.5,
    *, eps: float = 1e-6, tolerance: float = 1e-5, corrupt: str | None = None,
) -> GradCheckReport:
    """Analytic gradients vs central finite differences, every coordinate.

    The relative error uses a unit floor, |a - n| / max(1, |a|, |n|),
    so roundoff in near-zero gradients cannot dominate.  ``corrupt``
    names a parameter whose analytic gradient is deliberately spoiled;
    it exists so failure reporting can be exercised.
    """
    _, z, caches = forward(enc, head, batch)
    _, dz = nt_xent(z, tau)
    grads = backward(enc, head, caches, dz)
    if corrupt is not None:
        if corrupt not in grads:
            raise KeyError(f"no parameter named {corrupt!r}")
        grads[corrupt] = grads[corrupt] + 1.0

    def loss_now() -> float:
        _, z2, _ = forward(enc, head, batch)
        return nt_xent(z2, tau)[0]

    per_param = {}
    for name, arr in enc.param_items() + head.param_items():
        worst = 0.0
        flat = arr.reshape(-1)
        gflat = grads[name].reshape(-1)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + eps
            lp = loss_now()
            flat[i] = keep - eps
            lm = loss_now()
            flat[i] = keep
            numeric = (lp - lm) / (2 * eps)
            analytic = gflat[i]
            rel = abs(analytic - numeric) / max(1.0, abs(analytic), abs(numeric))
            if rel > worst:
                worst = rel
        per_param[name] = worst
    max_err = max(per_param.values())
    return GradCheckReport(per_param, max_err, tolerance, max_err < tolerance)
