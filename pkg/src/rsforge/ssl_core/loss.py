"""Normalized-temperature cross entropy over paired views.

Rows (2i, 2i+1) of the projection matrix are the two views of sample i.
Every anchor treats its partner as the positive and all other 2n-2 rows
as negatives.  Similarity is cosine; the gradient is computed
analytically and returned alongside the loss.
"""

from __future__ import annotations

import numpy as np

from ..errors import ShapeMismatchError, ZeroNormEmbeddingError

ZERO_NORM_TOL = 1e-12


def nt_xent(z: np.ndarray, tau: float = 0.5):
    """Loss and dL/dz for a (2n, d) batch of paired projections.

    loss = mean_a of -ln( exp(sim(a, partner)/tau) / sum_{b != a} exp(sim(a, b)/tau) )
    """
    if tau <= 0:
        raise ValueError(f"temperature must be positive, got {tau}")
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 2:
        raise ShapeMismatchError(f"projections must be 2-d, got shape {z.shape}")
    m = z.shape[0]
    if m < 4 or m % 2:
        raise ShapeMismatchError(f"need an even row count >= 4, got {m}")

    norms = np.linalg.norm(z, axis=1)
    if np.any(norms < ZERO_NORM_TOL):
        bad = int(np.argmin(norms))
        raise ZeroNormEmbeddingError(f"row {bad} has norm {norms[bad]:.3e}")
    u = z / norms[:, None]

    logits = (u @ u.T) / tau
    np.fill_diagonal(logits, -np.inf)
    pos = np.arange(m) ^ 1  # partner index of each anchor

    row_max = logits.max(axis=1, keepdims=True)
    exp_shift = np.exp(logits - row_max)
    denom = exp_shift.sum(axis=1)
    # per-anchor loss: -logit[a, pos] + logsumexp(row)
    lse = row_max[:, 0] + np.log(denom)
    loss = float(np.mean(lse - logits[np.arange(m), pos]))

    # dL/dlogits = (softmax - onehot(pos)) / m; fold tau into the
    # similarity gradient.  sims are symmetric in u, hence the G + G^T.
    w = exp_shift / denom[:, None]
    g = w.copy()
    g[np.arange(m), pos] -= 1.0
    g /= m * tau
    du = (g + g.T) @ u
    # back through the row normalization u = z / ||z||
    proj = np.einsum("ij,ij->i", u, du)
    dz = (du - proj[:, None] * u) / norms[:, None]
    return loss, dz
