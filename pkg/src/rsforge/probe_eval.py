"""Few-shot linear probing of frozen encoder features.

Features come from a deterministic center-crop/resize path with no
augmentation.  A softmax-linear classifier is fit on a seeded draw of
n-per-class shots by full-batch gradient descent; everything not drawn
as a shot becomes the evaluation split.  Overall accuracy (OA) is the
reported score.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    EmptyEvaluationError,
    InsufficientShotsError,
    LengthMismatchError,
    MissingCheckpointError,
)
from .ssl_core.augment import resize_bilinear, to_float_image
from .ssl_core.checkpoint import load_checkpoint
from .ssl_core.nn import EncoderState, encoder_forward


def _center_square(img: np.ndarray) -> np.ndarray:
    h, w = img.shape[:2]
    side = min(h, w)
    top = (h - side) // 2
    left = (w - side) // 2
    return img[top : top + side, left : left + side]


def extract_features(
    enc: EncoderState, samples, *, side: int = 32, batch_size: int = 256
) -> np.ndarray:
    """Deterministic (n, d_h) feature matrix; center crop + resize only."""
    prepared = np.empty((len(samples), 3, side, side))
    for i, img in enumerate(samples):
        arr = resize_bilinear(_center_square(to_float_image(img)), side)
        prepared[i] = arr.transpose(2, 0, 1)
    chunks = []
    for start in range(0, len(samples), batch_size):
        h, _ = encoder_forward(enc, prepared[start : start + batch_size])
        chunks.append(h)
    return np.concatenate(chunks, axis=0)


def _normalize_rows(x: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    return x / np.where(norms > 0, norms, 1.0)


@dataclass(frozen=True)
class ProbeConfig:
    lr: float = 1.0
    steps: int = 200

    def __post_init__(self):
        if self.lr <= 0 or self.steps < 1:
            raise ValueError("probe needs lr > 0 and steps >= 1")


@dataclass
class ProbeFit:
    w: np.ndarray  # (d, n_classes)
    b: np.ndarray
    classes: np.ndarray  # class ids, sorted
    shot_idx: np.ndarray
    eval_idx: np.ndarray
    loss_history: list
    n_per_class: int
    seed: int


@dataclass
class ProbeResult:
    oa: float
    per_class_acc: np.ndarray
    n_per_class: int
    seed: int


def _softmax_ce(xs, onehot, w, b):
    logits = xs @ w + b
    logits -= logits.max(axis=1, keepdims=True)
    e = np.exp(logits)
    p = e / e.sum(axis=1, keepdims=True)
    loss = float(-np.mean(np.log(np.clip((p * onehot).sum(axis=1), 1e-300, None))))
    g = (p - onehot) / xs.shape[0]
    return loss, xs.T @ g, g.sum(axis=0)


def fit_probe(
    features: np.ndarray,
    labels,
    n_per_class: int,
    cfg: ProbeConfig = ProbeConfig(),
    seed: int = 0,
) -> ProbeFit:
    """Train a zero-init softmax-linear probe on seeded per-class shots.

    Each gradient step must not increase the loss; the step size is
    halved until it does not, so the loss history is nonincreasing.
    """
    labels = np.asarray(labels)
    if len(labels) != features.shape[0]:
        raise LengthMismatchError(
            f"{features.shape[0]} feature rows vs {len(labels)} labels"
        )
    classes = np.unique(labels)
    shot_parts = []
    for c in classes:
        idx_c = np.flatnonzero(labels == c)
        if len(idx_c) < n_per_class:
            raise InsufficientShotsError(
                f"class {c} has {len(idx_c)} samples < {n_per_class} shots"
            )
        rng = np.random.default_rng((seed, int(c)))
        pick = np.sort(rng.choice(len(idx_c), size=n_per_class, replace=False))
        shot_parts.append(idx_c[pick])
    shot_idx = np.concatenate(shot_parts)
    eval_mask = np.ones(len(labels), dtype=bool)
    eval_mask[shot_idx] = False
    eval_idx = np.flatnonzero(eval_mask)

    xs = _normalize_rows(features[shot_idx])
    ys = np.searchsorted(classes, labels[shot_idx])
    onehot = np.eye(len(classes))[ys]
    w = np.zeros((features.shape[1], len(classes)))
    b = np.zeros(len(classes))

    loss, gw, gb = _softmax_ce(xs, onehot, w, b)
    history = [loss]
    lr = cfg.lr
    for _ in range(cfg.steps):
        while True:
            w_new = w - lr * gw
            b_new = b - lr * gb
            new_loss, gw_new, gb_new = _softmax_ce(xs, onehot, w_new, b_new)
            if new_loss <= loss or lr < 1e-12:
                break
            lr *= 0.5
        w, b, loss, gw, gb = w_new, b_new, new_loss, gw_new, gb_new
        history.append(loss)
    return ProbeFit(w, b, classes, shot_idx, eval_idx, history, n_per_class, seed)


def predict(fit: ProbeFit, features: np.ndarray) -> np.ndarray:
    logits = _normalize_rows(features) @ fit.w + fit.b
    return fit.classes[np.argmax(logits, axis=1)]


def overall_accuracy(preds, labels) -> float:
    preds = np.asarray(preds)
    labels = np.asarray(labels)
    if preds.shape[0] != labels.shape[0]:
        raise LengthMismatchError(f"{preds.shape[0]} predictions vs {labels.shape[0]} labels")
    if preds.shape[0] == 0:
        raise EmptyEvaluationError("no predictions to score")
    return float(np.count_nonzero(preds == labels)) / preds.shape[0]


def evaluate_probe(fit: ProbeFit, features: np.ndarray, labels) -> ProbeResult:
    """Score the probe on everything that was not drawn as a shot."""
    labels = np.asarray(labels)
    preds = predict(fit, features[fit.eval_idx])
    truth = labels[fit.eval_idx]
    oa = overall_accuracy(preds, truth)
    per_class = np.zeros(len(fit.classes))
    for k, c in enumerate(fit.classes):
        mask = truth == c
        per_class[k] = (
            float(np.count_nonzero(preds[mask] == c)) / np.count_nonzero(mask)
            if mask.any()
            else np.nan
        )
    return ProbeResult(oa, per_class, fit.n_per_class, fit.seed)


@dataclass
class CompareReport:
    rows: list = field(default_factory=list)  # dicts: init, shots, seed, oa

    def aggregate(self) -> dict:
        """(init, shots) -> (mean OA, std OA) over seeds."""
        groups: dict = {}
        for r in self.rows:
            groups.setdefault((r["init"], r["shots"]), []).append(r["oa"])
        return {
            key: (float(np.mean(v)), float(np.std(v))) for key, v in groups.items()
        }

    def to_csv(self) -> str:
        lines = ["init,shots,seed,oa"]
        lines.extend(
            f"{r['init']},{r['shots']},{r['seed']},{r['oa']:.6f}" for r in self.rows
        )
        return "\n".join(lines) + "\n"

    def table(self) -> str:
        agg = self.aggregate()
        width = max((len(k[0]) for k in agg), default=4)
        lines = [f"{'init':<{width}}  shots  mean OA   std"]
        for (init, shots), (mean, std) in sorted(agg.items()):
            lines.append(f"{init:<{width}}  {shots:>5}  {mean:7.4f}  {std:6.4f}")
        return "\n".join(lines)


def _resolve_encoder(init) -> EncoderState:
    if isinstance(init, EncoderState):
        return init
    path = Path(init)
    if not path.exists():
        raise MissingCheckpointError(f"no checkpoint at {path}")
    enc, _, _ = load_checkpoint(path)
    return enc


def compare_inits(
    samples,
    labels,
    inits: dict,
    shots,
    seeds,
    *,
    side: int = 32,
    probe_cfg: ProbeConfig = ProbeConfig(),
) -> CompareReport:
    """Probe OA of several pretrained inits on one labeled dataset.

    ``inits`` maps a display name to a checkpoint path or an
    EncoderState.  Every (init, shot count, seed) triple contributes
    one row.
    """
    report = CompareReport()
    for name, init in inits.items():
        enc = _resolve_encoder(init)
        feats = extract_features(enc, samples, side=side)
        for s in shots:
            for seed in seeds:
                fit = fit_probe(feats, labels, s, probe_cfg, seed)
                result = evaluate_probe(fit, feats, labels)
                report.rows.append(
                    {"init": name, "shots": s, "seed": seed, "oa": result.oa}
                )
    return report
