"""Deterministic discretization of Gaussian variables and numerical expectation.

A `QuadratureGrid` carries uniformly spaced nodes on
[mean - c*sigma, mean + c*sigma] together with one probability mass per
node.  The mass of a node is the exact Gaussian probability of its cell
(cells are bounded by the midpoints between adjacent nodes, and by the
interval endpoints on the outside), so the weights sum to the Gaussian
mass inside the truncated interval up to floating-point rounding.  The
truncation deficit is deliberately kept: renormalizing the weights to 1
would silently distort variances.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import ndtr

from .errors import InvalidParameterError, NumericError

__all__ = ["QuadratureGrid", "build_grid", "expect", "gaussian_pdf"]

_SQRT_2PI = np.sqrt(2.0 * np.pi)


@dataclass(frozen=True)
class QuadratureGrid:
    """Uniform node grid plus per-node probability masses for N(mean, std_dev^2)."""

    nodes: np.ndarray
    weights: np.ndarray
    mean: float
    std_dev: float
    truncation: float

    @property
    def n(self) -> int:
        return self.nodes.shape[0]

    @property
    def spacing(self) -> float:
        return float(self.nodes[1] - self.nodes[0])

    @property
    def lo(self) -> float:
        return float(self.nodes[0])

    @property
    def hi(self) -> float:
        return float(self.nodes[-1])


def build_grid(mean: float, std_dev: float, truncation: float, n: int) -> QuadratureGrid:
    """Build a uniform grid over [mean - c*sigma, mean + c*sigma] with cell masses.

    Parameters
    ----------
    mean, std_dev : parameters of the underlying Gaussian (std_dev > 0).
    truncation : half-width of the grid in standard deviations (> 0).
    n : number of nodes, >= 2.  Nodes include both interval endpoints.
    """
    if not np.isfinite(mean):
        raise InvalidParameterError(f"mean must be finite, got {mean}")
    if not (std_dev > 0.0 and np.isfinite(std_dev)):
        raise InvalidParameterError(f"std_dev must be positive, got {std_dev}")
    if not (truncation > 0.0 and np.isfinite(truncation)):
        raise InvalidParameterError(f"truncation must be positive, got {truncation}")
    if not isinstance(n, (int, np.integer)) or n < 2:
        raise InvalidParameterError(f"n must be an integer >= 2, got {n!r}")

    half = truncation * std_dev
    nodes = np.linspace(mean - half, mean + half, int(n))

    # Cell edges: interval endpoints outside, midpoints between nodes inside.
    edges = np.empty(n + 1)
    edges[0] = nodes[0]
    edges[-1] = nodes[-1]
    edges[1:-1] = 0.5 * (nodes[:-1] + nodes[1:])
    z = (edges - mean) / std_dev
    weights = np.diff(ndtr(z))

    return QuadratureGrid(
        nodes=nodes,
        weights=weights,
        mean=float(mean),
        std_dev=float(std_dev),
        truncation=float(truncation),
    )


def expect(grid: QuadratureGrid, f: Callable[[np.ndarray], np.ndarray]) -> float:
    """Return sum_i w_i * f(node_i).

    `f` may be vectorized over the node array or accept scalars.  Non-finite
    values of f on the grid raise NumericError.
    """
    try:
        vals = np.asarray(f(grid.nodes), dtype=float)
    except (TypeError, ValueError):
        vals = np.array([float(f(x)) for x in grid.nodes])
    if vals.shape != grid.nodes.shape:
        vals = np.broadcast_to(vals, grid.nodes.shape)
    if not np.all(np.isfinite(vals)):
        raise NumericError("integrand is non-finite on the quadrature grid")
    return float(np.dot(grid.weights, vals))


def gaussian_pdf(x, mean: float, std_dev: float):
    """Gaussian density exp(-(x-mean)^2 / (2 sigma^2)) / (sigma sqrt(2 pi))."""
    if not (std_dev > 0.0):
        raise InvalidParameterError(f"std_dev must be positive, got {std_dev}")
    x = np.asarray(x, dtype=float)
    z = (x - mean) / std_dev
    out = np.exp(-0.5 * z * z) / (std_dev * _SQRT_2PI)
    return float(out) if out.ndim == 0 else out
