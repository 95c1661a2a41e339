"""Two-stage quadratic control benchmark with a nonclassical information pattern.

State x0 ~ N(0, sigma^2).  A first controller acts through the state map
f1(x0) = x0 + u1 at quadratic control cost k^2 u1^2; a second controller
observes y = x1 + w (w ~ N(0, 1)) and pays the squared estimation error
(x1 - g2(y))^2.  Only the first controller is randomized during annealing;
g2 is recomputed each cycle as the conditional mean E[X1 | y], tabulated
on a fixed y-grid.  The estimation-error integral is evaluated on that
same grid (weights dy * phi(y_j - x1)), which makes the tabulated g2 the
exact minimizer of the discretized cost.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import kernels
from .engine import ControlProblem, LocalModel, RandomizedController
from .errors import InvalidParameterError
from .quadrature import QuadratureGrid, build_grid
from .search import golden_section_min

__all__ = [
    "WceParams",
    "WceState",
    "TabulatedEstimator",
    "WitsenhausenProblem",
    "best_affine_cost",
    "count_steps",
    "evaluate_mapping",
    "MappingEvaluation",
]


@dataclass(frozen=True)
class WceParams:
    """Problem constants: control-cost weight k and state std sigma_x0 (noise std is 1)."""

    k: float
    sigma_x0: float = 5.0

    def __post_init__(self):
        if not (self.k > 0.0 and np.isfinite(self.k)):
            raise InvalidParameterError(f"k must be positive, got {self.k}")
        if not (self.sigma_x0 > 0.0 and np.isfinite(self.sigma_x0)):
            raise InvalidParameterError(f"sigma_x0 must be positive, got {self.sigma_x0}")


@dataclass
class TabulatedEstimator:
    """Estimator tabulated on uniform nodes; evaluated with clamped linear interpolation."""

    nodes: np.ndarray
    values: np.ndarray

    @property
    def spacing(self) -> float:
        return float(self.nodes[1] - self.nodes[0])

    def evaluate(self, y) -> np.ndarray:
        return np.interp(y, self.nodes, self.values)

    __call__ = evaluate


@dataclass
class WceState:
    """Grids and the tabulated second controller."""

    x0_grid: QuadratureGrid
    w_grid: QuadratureGrid
    y_grid: np.ndarray
    g2_table: TabulatedEstimator


def _uniform_nodes(half_span: float, spacing: float) -> np.ndarray:
    n = int(round(2.0 * half_span / spacing)) + 1
    return np.linspace(-half_span, half_span, max(n, 3))


class WitsenhausenProblem(ControlProblem):
    """Problem plugin driving the annealing engine on the two-stage benchmark."""

    def __init__(
        self,
        params: WceParams,
        x0_n: int = 1001,
        truncation: float = 5.0,
        w_n: int = 101,
        symmetric: bool = False,
    ):
        self.params = params
        self.symmetric = symmetric
        x0_grid = build_grid(0.0, params.sigma_x0, truncation, x0_n)
        w_grid = build_grid(0.0, 1.0, truncation, w_n)
        # y covers the state range plus the noise range, at the x0 resolution.
        half = truncation * params.sigma_x0 + truncation
        y_nodes = _uniform_nodes(half, x0_grid.spacing)
        self.state = WceState(
            x0_grid=x0_grid,
            w_grid=w_grid,
            y_grid=y_nodes,
            g2_table=TabulatedEstimator(y_nodes, np.zeros_like(y_nodes)),
        )
        self.grid = x0_grid

    # -- engine protocol ---------------------------------------------------

    def initial_model(self) -> LocalModel:
        return LocalModel(0.0, 0.0)

    def _state_map(self, params: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """u1 and x1 = x0 + u1 for every (node, model) pair, shape (n, M)."""
        x = self.grid.nodes[:, None]
        u1 = params[:, 0][None, :] * x + params[:, 1][None, :]
        return u1, x + u1

    def update_dependents(self, controller: RandomizedController) -> None:
        """Retabulate g2(y) = E[X1 | y] under the current randomized controller."""
        _, x1 = self._state_map(controller.param_matrix())
        mass = controller.grid.weights[:, None] * controller.assoc
        table = kernels.mixture_table_1d(
            self.state.y_grid, x1.ravel(), mass.ravel(), x1.ravel()
        )
        if self.symmetric:
            table = 0.5 * (table - table[::-1])
        self.state.g2_table.values = table

    # Spec-facing name for the dependent-controller update.
    update_g2 = update_dependents

    def _estimation_terms(self, x1: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        tab = self.state.g2_table
        s, ds = kernels.estimation_terms_1d(
            x1.ravel(), float(tab.nodes[0]), tab.spacing, tab.values
        )
        return s.reshape(x1.shape), ds.reshape(x1.shape)

    def cost_matrix(self, controller: RandomizedController, params: Optional[np.ndarray] = None) -> np.ndarray:
        p = controller.param_matrix() if params is None else np.asarray(params, dtype=float)
        u1, x1 = self._state_map(p)
        s, _ = self._estimation_terms(x1)
        return self.params.k**2 * u1 * u1 + s

    def parameter_gradients(self, controller: RandomizedController) -> np.ndarray:
        u1, x1 = self._state_map(controller.param_matrix())
        _, ds = self._estimation_terms(x1)
        inner = 2.0 * self.params.k**2 * u1 + ds
        mass = controller.grid.weights[:, None] * controller.assoc
        weighted = mass * inner
        grad_slope = (weighted * self.grid.nodes[:, None]).sum(axis=0)
        grad_intercept = weighted.sum(axis=0)
        return np.column_stack([grad_slope, grad_intercept])

    def descent_metric(self, controller: RandomizedController) -> np.ndarray:
        """Gauss-Newton curvature scale per model: 2 (k^2 + 1) E_m[(x,1)(x,1)^T].

        E_m is the association-mass-weighted moment of each model's region;
        a small floor keeps the metric well conditioned for mass-starved
        models.
        """
        mass = controller.grid.weights[:, None] * controller.assoc
        x = self.grid.nodes
        m0 = mass.sum(axis=0)
        m1 = x @ mass
        m2 = (x * x) @ mass
        floor = 1e-9
        scale = 2.0 * (self.params.k**2 + 1.0)
        metric = np.empty((controller.model_count, 2, 2))
        metric[:, 0, 0] = scale * (m2 + floor * self.params.sigma_x0**2)
        metric[:, 0, 1] = metric[:, 1, 0] = scale * m1
        metric[:, 1, 1] = scale * (m0 + floor)
        return metric

    def baseline_cost(self) -> float:
        return best_affine_cost(self.params)[1]


def best_affine_cost(params: WceParams, search_range: tuple[float, float] = (0.0, 1.5)) -> tuple[float, float]:
    """Best linear state map f1(x0) = c x0: minimizer c* and its cost.

    For linear f1 the observation is jointly Gaussian with the state, so the
    optimal second controller is linear and the estimation error is exact:
    J(c) = k^2 (c - 1)^2 sigma^2 + c^2 sigma^2 / (c^2 sigma^2 + 1).
    """
    k2 = params.k**2
    var = params.sigma_x0**2

    def cost(c: float) -> float:
        p = c * c * var
        return k2 * (c - 1.0) ** 2 * var + p / (p + 1.0)

    return golden_section_min(cost, search_range[0], search_range[1])


def count_steps(controller: RandomizedController) -> float:
    """Number of model-assignment runs of the quenched map over positive x0.

    A run that extends across the origin counts as half a step, matching the
    convention that an x.5-step map has a step straddling the origin; a map
    consisting of one single run (one active model everywhere) counts as 1.
    """
    assign = np.argmax(controller.assoc, axis=1)
    x = controller.grid.nodes
    boundaries = np.flatnonzero(np.diff(assign)) + 1
    starts = np.concatenate([[0], boundaries])
    ends = np.concatenate([boundaries, [assign.shape[0]]])

    count = 0.0
    positive_runs = 0
    straddles = False
    for lo, hi in zip(starts, ends):
        seg = x[lo:hi]
        if seg[-1] > 0.0:
            positive_runs += 1
            if seg[0] < 0.0:
                straddles = True
                count += 0.5
            else:
                count += 1.0
    if straddles and positive_runs == 1:
        count += 0.5  # a single all-covering run is one step, not half
    return count


@dataclass
class MappingEvaluation:
    """Cost of a fixed state map under the exact conditional-mean second controller."""

    cost: float
    control_term: float
    estimation_term: float
    g2_table: TabulatedEstimator
    x0_nodes: np.ndarray
    x1: np.ndarray


def evaluate_mapping(
    params: WceParams,
    f1: Callable[[np.ndarray], np.ndarray],
    x0_n: int = 1001,
    truncation: float = 5.0,
) -> MappingEvaluation:
    """Evaluate a deterministic state map f1 with its optimal second controller.

    Independent of the annealing machinery except for the shared kernels:
    x1 = f1(x0) on the grid, g2 tabulated as E[X1 | y], and the cost split
    into k^2 E[u1^2] and E[(x1 - g2(y))^2].
    """
    x0_grid = build_grid(0.0, params.sigma_x0, truncation, x0_n)
    y_nodes = _uniform_nodes(truncation * params.sigma_x0 + truncation, x0_grid.spacing)
    x1 = np.asarray(f1(x0_grid.nodes), dtype=float)
    if x1.shape != x0_grid.nodes.shape:
        raise InvalidParameterError("f1 must return one value per grid node")
    if not np.all(np.isfinite(x1)):
        raise InvalidParameterError("f1 is non-finite on the evaluation grid")

    table = kernels.mixture_table_1d(y_nodes, x1, x0_grid.weights, x1)
    s, _ = kernels.estimation_terms_1d(x1, float(y_nodes[0]), float(y_nodes[1] - y_nodes[0]), table)
    u1 = x1 - x0_grid.nodes
    control = float(x0_grid.weights @ (params.k**2 * u1 * u1))
    estimation = float(x0_grid.weights @ s)
    return MappingEvaluation(
        cost=control + estimation,
        control_term=control,
        estimation_term=estimation,
        g2_table=TabulatedEstimator(y_nodes, table),
        x0_nodes=x0_grid.nodes,
        x1=x1,
    )
