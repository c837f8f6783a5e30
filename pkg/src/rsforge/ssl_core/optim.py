"""Adam / momentum-SGD updates with a cosine-annealed learning rate.

Parameters are updated in place through named (name -> array) maps so
the same code drives encoder and head.  Frozen parameters are skipped
entirely: no moment update, no weight update, hence bitwise stability.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


def cosine_lr(base_lr: float, step: int, total_steps: int) -> float:
    """Annealed lr at ``step`` of ``total_steps``; starts at base, ends at 0."""
    if total_steps <= 1:
        return base_lr
    t = min(max(step, 0), total_steps - 1)
    return base_lr * 0.5 * (1.0 + math.cos(math.pi * t / (total_steps - 1)))


@dataclass
class OptimizerState:
    kind: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    momentum: float = 0.9
    t: int = 0
    slots: dict = field(default_factory=dict)  # name -> {"m": arr, "v": arr}

    def __post_init__(self):
        if self.kind not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer kind {self.kind!r}")

    def _slot(self, name: str, like: np.ndarray) -> dict:
        if name not in self.slots:
            if self.kind == "adam":
                self.slots[name] = {"m": np.zeros_like(like), "v": np.zeros_like(like)}
            else:
                self.slots[name] = {"m": np.zeros_like(like)}
        return self.slots[name]

    def step(self, params: dict, grads: dict, lr: float, frozen: set = frozenset()):
        """One update over ``params`` (name -> array, modified in place)."""
        self.t += 1
        for name, p in params.items():
            if name in frozen or name not in grads:
                continue
            g = grads[name]
            slot = self._slot(name, p)
            if self.kind == "adam":
                m, v = slot["m"], slot["v"]
                m *= self.beta1
                m += (1 - self.beta1) * g
                v *= self.beta2
                v += (1 - self.beta2) * g * g
                m_hat = m / (1 - self.beta1**self.t)
                v_hat = v / (1 - self.beta2**self.t)
                p -= lr * m_hat / (np.sqrt(v_hat) + self.eps)
            else:
                buf = slot["m"]
                buf *= self.momentum
                buf += g
                p -= lr * buf
