"""Optimizer updates, LR schedule, and checkpoint serialization."""

import math

import numpy as np
import pytest

from rsforge.errors import CheckpointFormatError, MissingCheckpointError
from rsforge.ssl_core import (
    OptimizerState,
    cosine_lr,
    init_model,
    load_checkpoint,
    save_checkpoint,
)


# ------------------------------------------------------------- schedule

def test_cosine_endpoints_and_midpoint():
    # anneals over steps 0..total-1; the final step reaches exactly 0
    assert cosine_lr(1.0, 0, 100) == pytest.approx(1.0)
    assert cosine_lr(1.0, 99, 100) == pytest.approx(0.0)
    assert cosine_lr(1.0, 200, 100) == pytest.approx(0.0)  # clamped
    assert cosine_lr(1.0, 50, 101) == pytest.approx(0.5)
    assert cosine_lr(0.3, 25, 101) == pytest.approx(
        0.3 * 0.5 * (1 + math.cos(math.pi * 0.25))
    )
    assert cosine_lr(0.7, 0, 1) == 0.7  # degenerate schedule stays flat


def test_cosine_monotone_nonincreasing():
    lrs = [cosine_lr(1.0, s, 64) for s in range(65)]
    assert all(a >= b for a, b in zip(lrs, lrs[1:]))


# ------------------------------------------------------------ optimizer

def test_sgd_momentum_reference():
    p = np.array([1.0, 2.0])
    opt = OptimizerState(kind="sgd", momentum=0.9)
    g = np.array([0.5, -0.5])
    opt.step({"p": p}, {"p": g}, lr=0.1)
    np.testing.assert_allclose(p, [1.0 - 0.05, 2.0 + 0.05])
    opt.step({"p": p}, {"p": g}, lr=0.1)
    # buffer = 0.9*g + g = 1.9g
    np.testing.assert_allclose(p, [0.95 - 0.1 * 0.95, 2.05 + 0.1 * 0.95])


def test_adam_reference_first_step():
    p = np.array([1.0])
    g = np.array([0.3])
    opt = OptimizerState(kind="adam", beta1=0.9, beta2=0.999, eps=1e-8)
    opt.step({"p": p}, {"p": g}, lr=0.01)
    # bias-corrected first step: m_hat = g, v_hat = g^2
    expect = 1.0 - 0.01 * 0.3 / (0.3 + 1e-8)
    np.testing.assert_allclose(p, [expect], atol=1e-15)
    assert opt.t == 1


def test_frozen_names_not_updated():
    p1 = np.array([1.0])
    p2 = np.array([1.0])
    opt = OptimizerState(kind="adam")
    opt.step({"a": p1, "b": p2}, {"a": np.array([1.0]), "b": np.array([1.0])},
             lr=0.1, frozen={"a"})
    assert p1[0] == 1.0
    assert p2[0] != 1.0
    assert "a" not in opt.slots


def test_unknown_kind_rejected():
    with pytest.raises(ValueError):
        OptimizerState(kind="lion")


# ----------------------------------------------------------- checkpoint

def roundtrip_model(tmp_path, opt=None, **meta_kw):
    enc, head = init_model(3, (4, 8), d_h=8, d_hidden=8, d_z=4, seed=1)
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, enc, head, step=17, epoch=3, stage=2, opt=opt, **meta_kw)
    return enc, head, path


def test_checkpoint_roundtrip_exact(tmp_path):
    enc, head, path = roundtrip_model(tmp_path, meta={"loss_history": [1.5, 1.25]})
    enc2, head2, info = load_checkpoint(path)
    for (n1, a1), (n2, a2) in zip(
        enc.param_items() + head.param_items(),
        enc2.param_items() + head2.param_items(),
    ):
        assert n1 == n2
        np.testing.assert_array_equal(a1, a2)
    assert info["step"] == 17 and info["epoch"] == 3 and info["stage"] == 2
    assert info["meta"]["loss_history"] == [1.5, 1.25]
    assert info["opt"] is None


def test_checkpoint_carries_frozen_mask(tmp_path):
    from rsforge.ssl_core import with_freeze
    enc, head = init_model(3, (4, 8), d_h=8, d_hidden=8, d_z=4, seed=1)
    frozen = with_freeze(enc, "default")
    path = tmp_path / "f.ckpt"
    save_checkpoint(path, frozen, head)
    enc2, _, _ = load_checkpoint(path)
    assert enc2.frozen_mask == frozen.frozen_mask


def test_checkpoint_roundtrips_optimizer(tmp_path):
    enc, head = init_model(3, (4, 8), d_h=8, d_hidden=8, d_z=4, seed=1)
    opt = OptimizerState(kind="adam")
    params = dict(enc.param_items() + head.param_items())
    grads = {n: np.ones_like(a) * 0.01 for n, a in params.items()}
    opt.step(params, grads, lr=1e-3)
    opt.step(params, grads, lr=1e-3)
    path = tmp_path / "o.ckpt"
    save_checkpoint(path, enc, head, opt=opt)
    _, _, info = load_checkpoint(path)
    opt2 = info["opt"]
    assert opt2.kind == "adam" and opt2.t == 2
    for name in params:
        np.testing.assert_array_equal(opt.slots[name]["m"], opt2.slots[name]["m"])
        np.testing.assert_array_equal(opt.slots[name]["v"], opt2.slots[name]["v"])


def test_save_is_byte_deterministic(tmp_path):
    enc, head = init_model(3, (4,), d_h=4, d_hidden=4, d_z=2, seed=9)
    a = tmp_path / "a.ckpt"
    b = tmp_path / "b.ckpt"
    save_checkpoint(a, enc, head, step=5)
    save_checkpoint(b, enc, head, step=5)
    assert a.read_bytes() == b.read_bytes()


def test_missing_and_corrupt_checkpoints(tmp_path):
    with pytest.raises(MissingCheckpointError):
        load_checkpoint(tmp_path / "absent.ckpt")
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"XXXX" + b"\x00" * 16)
    with pytest.raises(CheckpointFormatError):
        load_checkpoint(bad)
    _, _, good = roundtrip_model(tmp_path)
    truncated = tmp_path / "trunc.ckpt"
    truncated.write_bytes(good.read_bytes()[:-64])
    with pytest.raises(CheckpointFormatError):
        load_checkpoint(truncated)
