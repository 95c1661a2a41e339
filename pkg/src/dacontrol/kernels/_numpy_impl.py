"""Pure-numpy implementations of the hot kernels.

Fallback path used when numba is unavailable or disabled via
DACONTROL_NO_NUMBA=1.  Semantics match the numba kernels; only summation
order differs (vectorized pairwise vs sequential), so results agree to
roundoff, not bit-for-bit.
"""

from __future__ import annotations

import numpy as np

from ._shared import DEN_FLOOR, GAUSS_WINDOW, INV_SQRT_2PI, kernel_matrix, mixture_table_2d

__all__ = [
    "mixture_table_1d",
    "mixture_table_2d",
    "estimation_terms_1d",
    "estimation_terms_2d",
]

# Rough cap on scratch elements per chunk (~32 MB of float64).
_CHUNK_ELEMS = 4_000_000


def mixture_table_1d(
    y_nodes: np.ndarray,
    centers: np.ndarray,
    masses: np.ndarray,
    values: np.ndarray,
) -> np.ndarray:
    """table[i] = sum_q m_q v_q K(y_i - c_q) / sum_q m_q K(y_i - c_q); 0 if unreachable."""
    n_y = y_nodes.shape[0]
    q = centers.shape[0]
    mv = masses * values
    table = np.empty(n_y)
    rows = max(1, _CHUNK_ELEMS // max(q, 1))
    for lo in range(0, n_y, rows):
        hi = min(lo + rows, n_y)
        k = kernel_matrix(y_nodes[lo:hi], centers)
        num = k @ mv
        den = k @ masses
        reachable = den >= DEN_FLOOR
        table[lo:hi] = np.where(reachable, num / np.where(reachable, den, 1.0), 0.0)
    return table


def estimation_terms_1d(
    x1: np.ndarray,
    y0: float,
    dy: float,
    table: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Squared estimation error against a tabulated 1-D estimator, and its x1-derivative.

    S[q]  = sum_j dy K(y_j - x1_q) (x1_q - g_j)^2
    dS[q] = sum_j dy K(y_j - x1_q) [ (y_j - x1_q) (x1_q - g_j)^2 + 2 (x1_q - g_j) ]

    with y_j = y0 + j*dy the nodes of `table`.
    """
    n_y = table.shape[0]
    y_nodes = y0 + dy * np.arange(n_y)
    s = np.empty(x1.shape[0])
    ds = np.empty(x1.shape[0])
    rows = max(1, _CHUNK_ELEMS // n_y)
    for lo in range(0, x1.shape[0], rows):
        hi = min(lo + rows, x1.shape[0])
        t = y_nodes[None, :] - x1[lo:hi, None]
        k = np.where(np.abs(t) <= GAUSS_WINDOW, np.exp(-0.5 * t * t) * (INV_SQRT_2PI * dy), 0.0)
        r = x1[lo:hi, None] - table[None, :]
        kr = k * r
        s[lo:hi] = np.einsum("ij,ij->i", kr, r)
        ds[lo:hi] = np.einsum("ij,ij->i", kr, t * r + 2.0)
    return s, ds


def estimation_terms_2d(
    x1: np.ndarray,
    u2: np.ndarray,
    y1_0: float,
    dy1: float,
    y3_0: float,
    dy3: float,
    table: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """2-D analogue of estimation_terms_1d against a (n1, n3) estimator table.

    S[q]     = sum_ij dy1 dy3 K(y1_i - x1_q) K(y3_j - u2_q) (x1_q - g_ij)^2
    dSx1[q]  = sum_ij ... [ (y1_i - x1_q) (x1_q - g_ij)^2 + 2 (x1_q - g_ij) ]
    dSu2[q]  = sum_ij ... (y3_j - u2_q) (x1_q - g_ij)^2
    """
    n1, n3 = table.shape
    y1 = y1_0 + dy1 * np.arange(n1)
    y3 = y3_0 + dy3 * np.arange(n3)
    nq = x1.shape[0]
    s = np.empty(nq)
    dsx1 = np.empty(nq)
    dsu2 = np.empty(nq)
    rows = max(1, _CHUNK_ELEMS // (n1 * n3))
    scale = dy1 * dy3 * INV_SQRT_2PI * INV_SQRT_2PI
    for lo in range(0, nq, rows):
        hi = min(lo + rows, nq)
        t1 = y1[None, :] - x1[lo:hi, None]
        t3 = y3[None, :] - u2[lo:hi, None]
        k1 = np.where(np.abs(t1) <= GAUSS_WINDOW, np.exp(-0.5 * t1 * t1), 0.0)
        k3 = np.where(np.abs(t3) <= GAUSS_WINDOW, np.exp(-0.5 * t3 * t3), 0.0)
        w = scale * k1[:, :, None] * k3[:, None, :]
        r = x1[lo:hi, None, None] - table[None, :, :]
        wr = w * r
        wr2 = wr * r
        s[lo:hi] = wr2.sum(axis=(1, 2))
        dsx1[lo:hi] = np.einsum("qij,qi->q", wr2, t1) + 2.0 * wr.sum(axis=(1, 2))
        dsu2[lo:hi] = np.einsum("qij,qj->q", wr2, t3)
    return s, dsx1, dsu2
