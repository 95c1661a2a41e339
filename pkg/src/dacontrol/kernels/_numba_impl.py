"""Numba-jitted implementations of the hot kernels.

Each output element is accumulated by a sequential inner loop, so results
are bit-identical whether or not the outer prange is parallelized.
"""

from __future__ import annotations

import numpy as np
from numba import njit, prange

from ._shared import DEN_FLOOR, GAUSS_WINDOW, INV_SQRT_2PI, mixture_table_2d

__all__ = [
    "mixture_table_1d",
    "mixture_table_2d",
    "estimation_terms_1d",
    "estimation_terms_2d",
]


@njit(parallel=True, cache=True)
def mixture_table_1d(y_nodes, centers, masses, values):
    n_y = y_nodes.shape[0]
    nq = centers.shape[0]
    table = np.empty(n_y)
    for i in prange(n_y):
        y = y_nodes[i]
        num = 0.0
        den = 0.0
        for q in range(nq):
            t = y - centers[q]
            if -GAUSS_WINDOW <= t <= GAUSS_WINDOW:
                k = masses[q] * np.exp(-0.5 * t * t) * INV_SQRT_2PI
                den += k
                num += k * values[q]
        table[i] = num / den if den >= DEN_FLOOR else 0.0
    return table


@njit(parallel=True, cache=True)
def estimation_terms_1d(x1, y0, dy, table):
    n_y = table.shape[0]
    nq = x1.shape[0]
    s = np.empty(nq)
    ds = np.empty(nq)
    scale = INV_SQRT_2PI * dy
    for q in prange(nq):
        c = x1[q]
        j_lo = int(np.ceil((c - GAUSS_WINDOW - y0) / dy))
        j_hi = int(np.floor((c + GAUSS_WINDOW - y0) / dy)) + 1
        if j_lo < 0:
            j_lo = 0
        if j_hi > n_y:
            j_hi = n_y
        acc_s = 0.0
        acc_ds = 0.0
        for j in range(j_lo, j_hi):
            t = y0 + dy * j - c
            if -GAUSS_WINDOW <= t <= GAUSS_WINDOW:
                k = np.exp(-0.5 * t * t) * scale
                r = c - table[j]
                kr = k * r
                acc_s += kr * r
                acc_ds += kr * (t * r + 2.0)
        s[q] = acc_s
        ds[q] = acc_ds
    return s, ds


@njit(parallel=True, cache=True)
def estimation_terms_2d(x1, u2, y1_0, dy1, y3_0, dy3, table):
    n1, n3 = table.shape
    nq = x1.shape[0]
    s = np.empty(nq)
    dsx1 = np.empty(nq)
    dsu2 = np.empty(nq)
    scale = dy1 * dy3 * INV_SQRT_2PI * INV_SQRT_2PI
    for q in prange(nq):
        cx = x1[q]
        cu = u2[q]
        i_lo = max(int(np.ceil((cx - GAUSS_WINDOW - y1_0) / dy1)), 0)
        i_hi = min(int(np.floor((cx + GAUSS_WINDOW - y1_0) / dy1)) + 1, n1)
        j_lo = max(int(np.ceil((cu - GAUSS_WINDOW - y3_0) / dy3)), 0)
        j_hi = min(int(np.floor((cu + GAUSS_WINDOW - y3_0) / dy3)) + 1, n3)
        # Precompute the y3 kernel row once per q.
        nw = j_hi - j_lo
        k3 = np.empty(max(nw, 0))
        t3 = np.empty(max(nw, 0))
        for j in range(j_lo, j_hi):
            t = y3_0 + dy3 * j - cu
            t3[j - j_lo] = t
            k3[j - j_lo] = np.exp(-0.5 * t * t) if -GAUSS_WINDOW <= t <= GAUSS_WINDOW else 0.0
        acc_s = 0.0
        acc_dx = 0.0
        acc_du = 0.0
        for i in range(i_lo, i_hi):
            t1 = y1_0 + dy1 * i - cx
            if not (-GAUSS_WINDOW <= t1 <= GAUSS_WINDOW):
                continue
            k1 = np.exp(-0.5 * t1 * t1)
            row_s = 0.0
            row_dx = 0.0
            row_du = 0.0
            for j in range(j_lo, j_hi):
                k = k1 * k3[j - j_lo]
                if k == 0.0:
                    continue
                r = cx - table[i, j]
                kr = k * r
                kr2 = kr * r
                row_s += kr2
                row_dx += kr2 * t1 + 2.0 * kr
                row_du += kr2 * t3[j - j_lo]
            acc_s += row_s
            acc_dx += row_dx
            acc_du += row_du
        s[q] = scale * acc_s
        dsx1[q] = scale * acc_dx
        dsu2[q] = scale * acc_du
    return s, dsx1, dsu2
