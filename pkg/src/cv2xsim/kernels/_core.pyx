# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops. Semantics mirror ``_fallback`` exactly."""

import numpy as np
cimport numpy as cnp

cnp.import_array()


cdef inline bint _seg_hits(double x0, double y0, double x1, double y1,
                           double xmin, double ymin, double xmax, double ymax) noexcept nogil:
    # Liang-Barsky clip, boundary inclusive
    cdef double t0 = 0.0, t1 = 1.0, t
    cdef double dx = x1 - x0, dy = y1 - y0
    cdef double p[4]
    cdef double q[4]
    cdef int k
    p[0] = -dx; q[0] = x0 - xmin
    p[1] = dx;  q[1] = xmax - x0
    p[2] = -dy; q[2] = y0 - ymin
    p[3] = dy;  q[3] = ymax - y0
    for k in range(4):
        if p[k] == 0.0:
            if q[k] < 0.0:
                return False
        else:
            t = q[k] / p[k]
            if p[k] < 0.0:
                if t > t0:
                    t0 = t
            else:
                if t < t1:
                    t1 = t
            if t0 > t1:
                return False
    return True


def segment_rect_hits(double x0, double y0, double x1, double y1, double[:, :] rects):
    cdef Py_ssize_t m = rects.shape[0], k
    cdef double ax, ay, bx, by
    out = np.zeros(m, dtype=np.bool_)
    cdef cnp.npy_bool[:] o = out
    # canonical endpoint order keeps the test symmetric under swapping
    if (x1 < x0) or (x1 == x0 and y1 < y0):
        ax, ay, bx, by = x1, y1, x0, y0
    else:
        ax, ay, bx, by = x0, y0, x1, y1
    for k in range(m):
        o[k] = _seg_hits(ax, ay, bx, by, rects[k, 0], rects[k, 1], rects[k, 2], rects[k, 3])
    return out


def pair_block_counts(double[:] px, double[:] py, double[:, :] rects, long[:] owner):
    cdef Py_ssize_t n = px.shape[0], m = rects.shape[0], i, j, k
    cdef double ax, ay, bx, by
    cdef int c
    out = np.zeros((n, n), dtype=np.int32)
    cdef int[:, :] o = out
    with nogil:
        for i in range(n):
            for j in range(i + 1, n):
                if (px[j] < px[i]) or (px[j] == px[i] and py[j] < py[i]):
                    ax = px[j]; ay = py[j]; bx = px[i]; by = py[i]
                else:
                    ax = px[i]; ay = py[i]; bx = px[j]; by = py[j]
                c = 0
                for k in range(m):
                    if owner[k] == i or owner[k] == j:
                        continue
                    if _seg_hits(ax, ay, bx, by, rects[k, 0], rects[k, 1], rects[k, 2], rects[k, 3]):
                        c += 1
                o[i, j] = c
                o[j, i] = c
    return out


def candidate_scores(double[:, :] rssi, double[:, :] rsrp, long t_first, long n_t,
                     long width, long rri, long n_periods):
    cdef Py_ssize_t n_sub = rssi.shape[1]
    cdef Py_ssize_t window = rssi.shape[0], rows_r = rsrp.shape[0]
    cdef Py_ssize_t n_start = n_sub - width + 1
    cdef Py_ssize_t a, s, k, c, tt, row, nz
    cdef double acc, r_acc, v
    avg = np.zeros(n_t * n_start, dtype=np.float64)
    res = np.zeros(n_t * n_start, dtype=np.float64)
    cdef double[:] av = avg
    cdef double[:] rv = res
    with nogil:
        for a in range(n_t):
            tt = t_first + a
            for s in range(n_start):
                acc = 0.0
                for k in range(1, n_periods + 1):
                    if tt - rri * k < 0:
                        continue
                    row = (tt - rri * k) % window
                    for c in range(s, s + width):
                        acc = acc + rssi[row, c]
                av[a * n_start + s] = acc / n_periods / width
                row = (tt - rri) % rows_r
                r_acc = 0.0
                nz = 0
                if tt - rri >= 0:
                    for c in range(s, s + width):
                        v = rsrp[row, c]
                        if v > 0.0:
                            r_acc = r_acc + v
                            nz += 1
                if nz > 0:
                    rv[a * n_start + s] = r_acc / nz
    return avg, res


def rx_power_grid(long[:] tx_idx, double[:] tx_mw, long[:] start, long[:] width,
                  double[:, :] gain, long n_sub):
    cdef Py_ssize_t n = gain.shape[0], e, r, c
    cdef double share
    out = np.zeros((n, n_sub), dtype=np.float64)
    cdef double[:, :] o = out
    with nogil:
        for e in range(tx_idx.shape[0]):
            share = tx_mw[e] / width[e]
            for r in range(n):
                for c in range(start[e], start[e] + width[e]):
                    o[r, c] += share * gain[tx_idx[e], r]
    return out
