"""Pure NumPy implementations of the hot kernels.

Used when the compiled extension is not built, or when ``CV2XSIM_PURE=1``.
"""

from __future__ import annotations

import numpy as np


def _canonical(x0, y0, x1, y1):
    swap = (x1 < x0) | ((x1 == x0) & (y1 < y0))
    ax = np.where(swap, x1, x0)
    ay = np.where(swap, y1, y0)
    bx = np.where(swap, x0, x1)
    by = np.where(swap, y0, y1)
    return ax, ay, bx, by


def _hits(ax, ay, bx, by, rects):
    """Broadcast Liang-Barsky test: segments along axis 0, rects along axis 1."""
    dx = (bx - ax)[:, None]
    dy = (by - ay)[:, None]
    ax = ax[:, None]
    ay = ay[:, None]
    xmin, ymin, xmax, ymax = (rects[None, :, k] for k in range(4))
    t0 = np.zeros(np.broadcast_shapes(dx.shape, xmin.shape))
    t1 = np.ones_like(t0)
    ok = np.ones(t0.shape, dtype=bool)
    for p, q in ((-dx, ax - xmin), (dx, xmax - ax), (-dy, ay - ymin), (dy, ymax - ay)):
        p = np.broadcast_to(p, t0.shape)
        q = np.broadcast_to(q, t0.shape)
        zero = p == 0.0
        ok &= ~(zero & (q < 0.0))
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(zero, 0.0, q / np.where(zero, 1.0, p))
        t0 = np.where(~zero & (p < 0.0), np.maximum(t0, t), t0)
        t1 = np.where(~zero & (p > 0.0), np.minimum(t1, t), t1)
    return ok & (t0 <= t1)


def segment_rect_hits(x0, y0, x1, y1, rects):
    rects = np.asarray(rects, dtype=float).reshape(-1, 4)
    if len(rects) == 0:
        return np.zeros(0, dtype=bool)
    ax, ay, bx, by = _canonical(*(np.array([v], dtype=float) for v in (x0, y0, x1, y1)))
    return _hits(ax, ay, bx, by, rects)[0]


def pair_block_counts(px, py, rects, owner):
    px = np.asarray(px, dtype=float)
    py = np.asarray(py, dtype=float)
    rects = np.asarray(rects, dtype=float).reshape(-1, 4)
    owner = np.asarray(owner)
    n = len(px)
    out = np.zeros((n, n), dtype=np.int32)
    if n < 2 or len(rects) == 0:
        return out
    i, j = np.triu_indices(n, k=1)
    ax, ay, bx, by = _canonical(px[i], py[i], px[j], py[j])
    hit = _hits(ax, ay, bx, by, rects)
    hit &= owner[None, :] != i[:, None]
    hit &= owner[None, :] != j[:, None]
    c = hit.sum(axis=1).astype(np.int32)
    out[i, j] = c
    out[j, i] = c
    return out


def candidate_scores(rssi, rsrp, t_first, n_t, width, rri, n_periods):
    window, n_sub = rssi.shape
    rows_r = rsrp.shape[0]
    n_start = n_sub - width + 1
    tt = t_first + np.arange(n_t)
    acc = np.zeros((n_t, n_start))
    for k in range(1, n_periods + 1):
        past = tt - rri * k
        valid = past >= 0
        rows = rssi[past % window]
        for c in range(width):
            acc += np.where(valid[:, None], rows[:, c:c + n_start], 0.0)
    avg = acc / n_periods / width

    past = tt - rri
    rows = rsrp[past % rows_r] * (past >= 0)[:, None]
    r_acc = np.zeros((n_t, n_start))
    nz = np.zeros((n_t, n_start))
    for c in range(width):
        v = rows[:, c:c + n_start]
        r_acc += np.where(v > 0.0, v, 0.0)
        nz += v > 0.0
    with np.errstate(invalid="ignore", divide="ignore"):
        res = np.where(nz > 0, r_acc / np.maximum(nz, 1), 0.0)
    return avg.ravel(), res.ravel()


def rx_power_grid(tx_idx, tx_mw, start, width, gain, n_sub):
    n = gain.shape[0]
    out = np.zeros((n, n_sub))
    for e in range(len(tx_idx)):
        share = tx_mw[e] / width[e]
        col = share * gain[tx_idx[e]]
        for c in range(start[e], start[e] + width[e]):
            out[:, c] += col
    return out
