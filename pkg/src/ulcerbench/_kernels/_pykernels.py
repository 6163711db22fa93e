"""NumPy / pure-Python implementations of the hot kernels.

This is the fallback backend used when the compiled extension is not
available.  Both backends implement the same contract and produce the same
results (component labels identically, float reductions to within a few
ulps; summation order may differ).
"""

from __future__ import annotations

from collections import deque

import numpy as np

NAME = "python"

_OFFSETS4 = ((-1, 0), (1, 0), (0, -1), (0, 1))
_OFFSETS8 = _OFFSETS4 + ((-1, -1), (-1, 1), (1, -1), (1, 1))


def label_components(mask: np.ndarray, connectivity: int) -> tuple[np.ndarray, int]:
    """Label maximal connected regions of 1-pixels.

    Returns (labels, count) where labels is an int32 grid, 0 for background
    and 1..count for the regions, numbered by the raster-scan order of each
    region's first pixel.
    """
    if connectivity not in (4, 8):
        raise ValueError(f"connectivity must be 4 or 8, got {connectivity}")
    h, w = mask.shape
    offsets = _OFFSETS4 if connectivity == 4 else _OFFSETS8
    labels = np.zeros((h, w), dtype=np.int32)
    count = 0
    for y in range(h):
        row = mask[y]
        for x in range(w):
            if row[x] == 0 or labels[y, x] != 0:
                continue
            count += 1
            labels[y, x] = count
            queue = deque(((y, x),))
            while queue:
                cy, cx = queue.popleft()
                for dy, dx in offsets:
                    ny, nx = cy + dy, cx + dx
                    if 0 <= ny < h and 0 <= nx < w and mask[ny, nx] != 0 and labels[ny, nx] == 0:
                        labels[ny, nx] = count
                        queue.append((ny, nx))
    return labels, count


def overlap_sums(pred: np.ndarray, gt: np.ndarray) -> tuple[float, float, float]:
    """Single pass over the grids: (sum of p, sum of g, sum of p*g)."""
    gmask = gt != 0
    sum_p = float(pred.sum())
    sum_g = float(np.count_nonzero(gmask))
    sum_pg = float(pred[gmask].sum())
    return sum_p, sum_g, sum_pg


def focal_value_grad(
    pred: np.ndarray,
    gt: np.ndarray,
    alpha: float,
    gamma: float,
    delta: float,
    want_grad: bool,
) -> tuple[float, np.ndarray | None]:
    """Pixel-averaged binary focal loss and (optionally) d(loss)/d(pred).

    Per pixel, with q = clamp(p, delta, 1 - delta):

        term = g * alpha * (1-q)**gamma * ln(q)
             + (1-g) * (1-alpha) * q**gamma * ln(1-q)
        loss = -mean(term)

    The clamp contributes zero gradient: entries with p <= delta or
    p >= 1 - delta get gradient 0.
    """
    n = pred.size
    q = np.clip(pred, delta, 1.0 - delta)
    pos = gt != 0
    one_m_q = 1.0 - q
    log_q = np.log(q)
    log_1mq = np.log(one_m_q)
    pow_pos = one_m_q**gamma
    pow_neg = q**gamma
    term = np.where(pos, alpha * pow_pos * log_q, (1.0 - alpha) * pow_neg * log_1mq)
    value = -float(term.sum()) / n

    if not want_grad:
        return value, None

    if gamma == 0.0:
        dpos = alpha * (pow_pos / q)
        dneg = (1.0 - alpha) * (-pow_neg / one_m_q)
    else:
        dpos = alpha * (-gamma * one_m_q ** (gamma - 1.0) * log_q + pow_pos / q)
        dneg = (1.0 - alpha) * (gamma * q ** (gamma - 1.0) * log_1mq - pow_neg / one_m_q)
    dterm = np.where(pos, dpos, dneg)
    active = (pred > delta) & (pred < 1.0 - delta)
    grad = np.where(active, -dterm / n, 0.0)
    return value, grad
