"""Versioned binary checkpoints for encoder, head, and optimizer.

Layout: magic ``TOV1``, a little-endian u32 header length, a JSON header
(sorted keys), then every declared array as flat float64 little-endian
bytes in declaration order.  The header carries shapes, the block
structure, the frozen mask, optimizer scalars, RNG state, and step
counters, so a run can resume bit-exactly.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..errors import CheckpointFormatError, MissingCheckpointError
from .nn import EncoderState, ProjectionHead
from .optim import OptimizerState

MAGIC = b"TOV1"


def _declare(items) -> list:
    return [{"name": n, "shape": list(a.shape)} for n, a in items]


def save_checkpoint(
    path,
    enc: EncoderState,
    head: ProjectionHead,
    *,
    step: int = 0,
    epoch: int = 0,
    stage: int = 1,
    opt: OptimizerState | None = None,
    rng_state=None,
    meta: dict | None = None,
) -> None:
    params = enc.param_items() + head.param_items()
    opt_items = []
    opt_info = None
    if opt is not None:
        for name, _ in params:
            if name in opt.slots:
                for slot_name in sorted(opt.slots[name]):
                    opt_items.append((f"{name}/{slot_name}", opt.slots[name][slot_name]))
        opt_info = {
            "kind": opt.kind,
            "beta1": opt.beta1,
            "beta2": opt.beta2,
            "eps": opt.eps,
            "momentum": opt.momentum,
            "t": opt.t,
        }

    header = {
        "format": 1,
        "num_blocks": enc.num_blocks,
        "frozen_mask": [bool(f) for f in enc.frozen_mask],
        "params": _declare(params),
        "opt": opt_info,
        "opt_arrays": _declare(opt_items),
        "rng": rng_state,
        "step": int(step),
        "epoch": int(epoch),
        "stage": int(stage),
        "meta": meta or {},
    }
    head_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()

    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", len(head_bytes)))
        f.write(head_bytes)
        for _, arr in params + opt_items:
            f.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_checkpoint(path):
    """(encoder, head, info) from a checkpoint file.

    ``info`` carries step, epoch, stage, restored OptimizerState (or
    None), rng state, and the free-form meta dict.
    """
    p = Path(path)
    if not p.exists():
        raise MissingCheckpointError(f"no checkpoint at {p}")
    blob = p.read_bytes()
    if blob[:4] != MAGIC:
        raise CheckpointFormatError(f"{p}: bad magic {blob[:4]!r}")
    if len(blob) < 8:
        raise CheckpointFormatError(f"{p}: truncated header")
    (hlen,) = struct.unpack("<I", blob[4:8])
    try:
        header = json.loads(blob[8 : 8 + hlen].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointFormatError(f"{p}: unreadable header: {e}") from e
    if header.get("format") != 1:
        raise CheckpointFormatError(f"{p}: unsupported format {header.get('format')!r}")

    offset = 8 + hlen
    arrays = {}
    for decl in header["params"] + header["opt_arrays"]:
        shape = tuple(decl["shape"])
        count = int(np.prod(shape)) if shape else 1
        end = offset + 8 * count
        if end > len(blob):
            raise CheckpointFormatError(f"{p}: truncated at array {decl['name']!r}")
        arrays[decl["name"]] = (
            np.frombuffer(blob[offset:end], dtype="<f8").reshape(shape).copy()
        )
        offset = end

    nb = header["num_blocks"]
    try:
        enc = EncoderState(
            conv_w=[arrays[f"conv{i}.w"] for i in range(nb)],
            conv_b=[arrays[f"conv{i}.b"] for i in range(nb)],
            embed_w=arrays["embed.w"],
            embed_b=arrays["embed.b"],
            frozen_mask=[bool(f) for f in header["frozen_mask"]],
        )
        head = ProjectionHead(
            w1=arrays["head.w1"], b1=arrays["head.b1"],
            w2=arrays["head.w2"], b2=arrays["head.b2"],
        )
    except KeyError as e:
        raise CheckpointFormatError(f"{p}: missing parameter {e}") from e

    opt = None
    if header["opt"] is not None:
        o = header["opt"]
        opt = OptimizerState(
            kind=o["kind"], beta1=o["beta1"], beta2=o["beta2"],
            eps=o["eps"], momentum=o["momentum"], t=o["t"],
        )
        for decl in header["opt_arrays"]:
            pname, _, slot = decl["name"].rpartition("/")
            opt.slots.setdefault(pname, {})[slot] = arrays[decl["name"]]

    info = {
        "step": header["step"],
        "epoch": header["epoch"],
        "stage": header["stage"],
        "opt": opt,
        "rng": header["rng"],
        "meta": header["meta"],
    }
    return enc, head, info
