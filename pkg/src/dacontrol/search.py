"""Scalar minimization helpers."""

from __future__ import annotations

from typing import Callable

_INV_PHI = 0.6180339887498949  # (sqrt(5) - 1) / 2


def golden_section_min(
    f: Callable[[float], float],
    lo: float,
    hi: float,
    tol: float = 1e-10,
    max_iters: int = 200,
) -> tuple[float, float]:
    """Minimize a unimodal scalar function on [lo, hi]; returns (x*, f(x*))."""
    a, b = float(lo), float(hi)
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iters):
        if b - a <= tol * (1.0 + abs(a) + abs(b)):
            break
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            fd = f(d)
    x = c if fc < fd else d
    return x, min(fc, fd)
