"""Minimal float64 convnet used as the contrastive encoder.

The encoder is B blocks of (3x3 same-padding conv + bias, ReLU, 2x2
average pool), then a global average pool and one linear embed layer.
The projection head is linear-ReLU-linear.  Everything is plain numpy
with hand-written backward passes; forward caches carry whatever the
backward needs.  All math runs in float64 so gradients can be checked
against central finite differences tightly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import (
    InvalidFreezeSpecError,
    NonFiniteActivationError,
    ShapeMismatchError,
)


@dataclass
class EncoderState:
    """Convnet parameters plus the per-layer frozen mask.

    Layers are indexed 0..B-1 for the conv blocks and B for the embed
    layer; ``frozen_mask`` has one flag per layer.
    """

    conv_w: list  # per block, shape (3, 3, c_in, c_out)
    conv_b: list  # per block, shape (c_out,)
    embed_w: np.ndarray  # (c_last, d_h)
    embed_b: np.ndarray  # (d_h,)
    frozen_mask: list = field(default_factory=list)

    def __post_init__(self):
        if not self.frozen_mask:
            self.frozen_mask = [False] * (len(self.conv_w) + 1)
        if len(self.frozen_mask) != len(self.conv_w) + 1:
            raise ShapeMismatchError("frozen_mask length must be num_blocks + 1")

    @property
    def num_blocks(self) -> int:
        return len(self.conv_w)

    @property
    def d_h(self) -> int:
        return self.embed_w.shape[1]

    def param_items(self) -> list:
        """(name, array) pairs in declaration order."""
        items = []
        for i, (w, b) in enumerate(zip(self.conv_w, self.conv_b)):
            items.append((f"conv{i}.w", w))
            items.append((f"conv{i}.b", b))
        items.append(("embed.w", self.embed_w))
        items.append(("embed.b", self.embed_b))
        return items

    def frozen_param_names(self) -> set:
        names = set()
        for i, frozen in enumerate(self.frozen_mask[:-1]):
            if frozen:
                names.update((f"conv{i}.w", f"conv{i}.b"))
        if self.frozen_mask[-1]:
            names.update(("embed.w", "embed.b"))
        return names

    def copy(self) -> "EncoderState":
        return EncoderState(
            conv_w=[w.copy() for w in self.conv_w],
            conv_b=[b.copy() for b in self.conv_b],
            embed_w=self.embed_w.copy(),
            embed_b=self.embed_b.copy(),
            frozen_mask=list(self.frozen_mask),
        )


@dataclass
class ProjectionHead:
    """Two linear layers with a ReLU between them."""

    w1: np.ndarray  # (d_h, d_hidden)
    b1: np.ndarray
    w2: np.ndarray  # (d_hidden, d_z)
    b2: np.ndarray

    def __post_init__(self):
        if self.w2.shape[1] < 2:
            raise ShapeMismatchError("projection output dim must be >= 2")

    @property
    def d_z(self) -> int:
        return self.w2.shape[1]

    def param_items(self) -> list:
        return [
            ("head.w1", self.w1),
            ("head.b1", self.b1),
            ("head.w2", self.w2),
            ("head.b2", self.b2),
        ]

    def copy(self) -> "ProjectionHead":
        return ProjectionHead(self.w1.copy(), self.b1.copy(), self.w2.copy(), self.b2.copy())


def init_model(
    in_channels: int = 3,
    channels=(16, 32, 64),
    d_h: int = 64,
    d_hidden: int = 64,
    d_z: int = 32,
    seed: int = 0,
):
    """He-style random init, deterministic in the seed."""
    rng = np.random.default_rng(seed)
    conv_w, conv_b = [], []
    c_in = in_channels
    for c_out in channels:
        scale = np.sqrt(2.0 / (9 * c_in))
        conv_w.append(rng.normal(0.0, scale, size=(3, 3, c_in, c_out)))
        conv_b.append(np.zeros(c_out))
        c_in = c_out
    embed_w = rng.normal(0.0, np.sqrt(1.0 / c_in), size=(c_in, d_h))
    embed_b = np.zeros(d_h)
    enc = EncoderState(conv_w, conv_b, embed_w, embed_b)
    head = ProjectionHead(
        w1=rng.normal(0.0, np.sqrt(2.0 / d_h), size=(d_h, d_hidden)),
        b1=np.zeros(d_hidden),
        w2=rng.normal(0.0, np.sqrt(1.0 / d_hidden), size=(d_hidden, d_z)),
        b2=np.zeros(d_z),
    )
    return enc, head


def _check_finite(x: np.ndarray, where: str) -> None:
    if not np.isfinite(x).all():
        raise NonFiniteActivationError(f"non-finite values after {where}")


def _conv3x3_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray):
    """Same-padding 3x3 convolution on NHWC input, one tensordot per tap."""
    n, h, wid, _ = x.shape
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
    y = np.tile(b, (n, h, wid, 1)).astype(np.float64)
    for dy in range(3):
        for dx in range(3):
            y += np.tensordot(xp[:, dy : dy + h, dx : dx + wid, :], w[dy, dx], axes=([3], [0]))
    return y, xp


def _conv3x3_backward(dy: np.ndarray, xp: np.ndarray, w: np.ndarray):
    n, h, wid, _ = dy.shape
    db = dy.sum(axis=(0, 1, 2))
    dw = np.empty_like(w)
    dxp = np.zeros_like(xp)
    for oy in range(3):
        for ox in range(3):
            patch = xp[:, oy : oy + h, ox : ox + wid, :]
            dw[oy, ox] = np.tensordot(patch, dy, axes=([0, 1, 2], [0, 1, 2]))
            dxp[:, oy : oy + h, ox : ox + wid, :] += np.tensordot(dy, w[oy, ox], axes=([3], [1]))
    return dxp[:, 1:-1, 1:-1, :], dw, db


def _avgpool2_forward(x: np.ndarray) -> np.ndarray:
    n, h, w, c = x.shape
    if h % 2 or w % 2:
        raise ShapeMismatchError(f"spatial dims must be even before pooling, got {h}x{w}")
    return 0.25 * (x[:, ::2, ::2] + x[:, 1::2, ::2] + x[:, ::2, 1::2] + x[:, 1::2, 1::2])


def _avgpool2_backward(dy: np.ndarray) -> np.ndarray:
    return 0.25 * np.repeat(np.repeat(dy, 2, axis=1), 2, axis=2)


def encoder_forward(enc: EncoderState, batch: np.ndarray):
    """Features h of a (n, 3, side, side) batch, plus the backward cache."""
    if batch.ndim != 4:
        raise ShapeMismatchError(f"batch must be 4-d, got shape {batch.shape}")
    if batch.shape[1] != enc.conv_w[0].shape[2]:
        raise ShapeMismatchError(
            f"batch has {batch.shape[1]} channels, encoder expects {enc.conv_w[0].shape[2]}"
        )
    _check_finite(batch, "input")
    x = np.ascontiguousarray(batch.transpose(0, 2, 3, 1)).astype(np.float64)

    cache = {"blocks": []}
    for i in range(enc.num_blocks):
        a, xp = _conv3x3_forward(x, enc.conv_w[i], enc.conv_b[i])
        r = np.maximum(a, 0.0)
        x = _avgpool2_forward(r)
        _check_finite(x, f"block {i}")
        cache["blocks"].append({"xp": xp, "relu_mask": a > 0.0})
    cache["gap_in_shape"] = x.shape
    pooled = x.mean(axis=(1, 2))  # (n, c_last)
    cache["pooled"] = pooled
    h = pooled @ enc.embed_w + enc.embed_b
    _check_finite(h, "embed")
    return h, cache


def encoder_backward(enc: EncoderState, cache: dict, dh: np.ndarray) -> dict:
    """Parameter gradients from dL/dh, named like ``param_items``."""
    grads = {}
    grads["embed.w"] = cache["pooled"].T @ dh
    grads["embed.b"] = dh.sum(axis=0)
    dpooled = dh @ enc.embed_w.T

    n, gh, gw, c = cache["gap_in_shape"]
    dx = np.broadcast_to(dpooled[:, None, None, :], (n, gh, gw, c)) / (gh * gw)
    for i in range(enc.num_blocks - 1, -1, -1):
        blk = cache["blocks"][i]
        dr = _avgpool2_backward(dx)
        da = dr * blk["relu_mask"]
        dx, dw, db = _conv3x3_backward(da, blk["xp"], enc.conv_w[i])
        grads[f"conv{i}.w"] = dw
        grads[f"conv{i}.b"] = db
    return grads


def head_forward(head: ProjectionHead, h: np.ndarray):
    a = h @ head.w1 + head.b1
    r = np.maximum(a, 0.0)
    z = r @ head.w2 + head.b2
    _check_finite(z, "projection head")
    return z, {"h": h, "relu_mask": a > 0.0, "r": r}


def head_backward(head: ProjectionHead, cache: dict, dz: np.ndarray):
    grads = {
        "head.w2": cache["r"].T @ dz,
        "head.b2": dz.sum(axis=0),
    }
    dr = dz @ head.w2.T
    da = dr * cache["relu_mask"]
    grads["head.w1"] = cache["h"].T @ da
    grads["head.b1"] = da.sum(axis=0)
    dh = da @ head.w1.T
    return grads, dh


def forward(enc: EncoderState, head: ProjectionHead, batch: np.ndarray):
    """Full forward: (features h, projections z, caches for backward)."""
    h, enc_cache = encoder_forward(enc, batch)
    z, head_cache = head_forward(head, h)
    return h, z, {"enc": enc_cache, "head": head_cache}


def backward(enc: EncoderState, head: ProjectionHead, caches: dict, dz: np.ndarray) -> dict:
    head_grads, dh = head_backward(head, caches["head"], dz)
    grads = encoder_backward(enc, caches["enc"], dh)
    grads.update(head_grads)
    return grads


def resolve_freeze_spec(spec, num_blocks: int) -> list:
    """Normalize a freeze request into a per-layer mask (B blocks + embed).

    Accepts None/"none" (nothing frozen), "all" (whole encoder), "default"
    (first ceil(2B/3) blocks), an integer prefix length in [0, B+1], or an
    explicit boolean mask which must be a prefix.
    """
    n_layers = num_blocks + 1
    if spec is None or spec == "none":
        return [False] * n_layers
    if spec == "all":
        return [True] * n_layers
    if spec == "default":
        k = -(-2 * num_blocks // 3)  # ceil(2B/3)
        return [i < k for i in range(n_layers)]
    if isinstance(spec, (int, np.integer)) and not isinstance(spec, bool):
        if not 0 <= spec <= n_layers:
            raise InvalidFreezeSpecError(
                f"freeze prefix {spec} out of range [0, {n_layers}]"
            )
        return [i < spec for i in range(n_layers)]
    if isinstance(spec, (list, tuple)):
        mask = [bool(v) for v in spec]
        if len(mask) != n_layers:
            raise InvalidFreezeSpecError(
                f"mask length {len(mask)} != layer count {n_layers}"
            )
        for i in range(1, n_layers):
            if mask[i] and not mask[i - 1]:
                raise InvalidFreezeSpecError("frozen layers must form a prefix")
        return mask
    raise InvalidFreezeSpecError(f"unrecognized freeze spec: {spec!r}")


def with_freeze(enc: EncoderState, spec) -> EncoderState:
    """Copy of the encoder with the frozen mask set from ``spec``."""
    out = enc.copy()
    out.frozen_mask = resolve_freeze_spec(spec, enc.num_blocks)
    return out
