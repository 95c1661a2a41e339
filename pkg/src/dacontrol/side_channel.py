"""Side-channel variant: a second first-stage controller feeds a noisy link.

Both first-stage controllers observe x0 and share one partition: each
cell carries a pair of affine models (u1 for the state map, u2 for the
side channel).  The second stage observes (x1 + w1, u2 + w2) and pays the
squared error against its 2-D conditional-mean estimator g3.  The power
used on the side channel, E[u2^2], is priced into the optimized cost by a
Lagrange multiplier; sweeping the multiplier hits a target power level.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from . import kernels
from .engine import AnnealTrace, ControlProblem, LocalModel, RandomizedController, Schedule, anneal
from .errors import InvalidParameterError, UnreachableTargetError
from .quadrature import QuadratureGrid, build_grid
from .search import golden_section_min

__all__ = [
    "SideChannelParams",
    "PairedLocalModel",
    "TabulatedEstimator2D",
    "SideChannelState",
    "SideChannelProblem",
    "best_affine_lagrangian_cost",
    "best_affine_cost_at_power",
    "sweep_lambda",
    "SweepResult",
    "DEFAULT_LAMBDA_LADDER",
]

DEFAULT_LAMBDA_LADDER = (0.0, 0.01, 0.03, 0.1, 0.3, 1.0, 3.0, 10.0, 100.0)


@dataclass(frozen=True)
class SideChannelParams:
    """Control weight k, state std sigma_x0, and power multiplier lam (lambda)."""

    k: float
    sigma_x0: float = 5.0
    lam: float = 0.0

    def __post_init__(self):
        if not (self.k > 0.0 and np.isfinite(self.k)):
            raise InvalidParameterError(f"k must be positive, got {self.k}")
        if not (self.sigma_x0 > 0.0 and np.isfinite(self.sigma_x0)):
            raise InvalidParameterError(f"sigma_x0 must be positive, got {self.sigma_x0}")
        if not (self.lam >= 0.0 and np.isfinite(self.lam)):
            raise InvalidParameterError(f"lambda must be nonnegative, got {self.lam}")


@dataclass(frozen=True)
class PairedLocalModel:
    """One partition cell's pair of affine models: state map and side channel."""

    g1_model: LocalModel
    g2_model: LocalModel

    def to_vector(self) -> np.ndarray:
        return np.array(
            [
                self.g1_model.slope,
                self.g1_model.intercept,
                self.g2_model.slope,
                self.g2_model.intercept,
            ]
        )

    @classmethod
    def from_vector(cls, vec: np.ndarray) -> "PairedLocalModel":
        return cls(
            g1_model=LocalModel(float(vec[0]), float(vec[1])),
            g2_model=LocalModel(float(vec[2]), float(vec[3])),
        )


@dataclass
class TabulatedEstimator2D:
    """2-D estimator tabulated on a uniform grid; bilinear evaluation, clamped."""

    y1_nodes: np.ndarray
    y3_nodes: np.ndarray
    values: np.ndarray  # shape (len(y1_nodes), len(y3_nodes))

    def evaluate(self, y1, y3) -> np.ndarray:
        y1 = np.asarray(y1, dtype=float)
        y3 = np.asarray(y3, dtype=float)
        n1, n3 = self.values.shape
        d1 = self.y1_nodes[1] - self.y1_nodes[0]
        d3 = self.y3_nodes[1] - self.y3_nodes[0]
        t1 = np.clip((y1 - self.y1_nodes[0]) / d1, 0.0, n1 - 1.0)
        t3 = np.clip((y3 - self.y3_nodes[0]) / d3, 0.0, n3 - 1.0)
        i = np.minimum(t1.astype(int), n1 - 2)
        j = np.minimum(t3.astype(int), n3 - 2)
        f1 = t1 - i
        f3 = t3 - j
        g = self.values
        out = (
            (1 - f1) * (1 - f3) * g[i, j]
            + f1 * (1 - f3) * g[i + 1, j]
            + (1 - f1) * f3 * g[i, j + 1]
            + f1 * f3 * g[i + 1, j + 1]
        )
        return out

    __call__ = evaluate


@dataclass
class SideChannelState:
    x0_grid: QuadratureGrid
    w1_grid: QuadratureGrid
    w2_grid: QuadratureGrid
    y1_grid: np.ndarray
    y3_grid: np.ndarray
    g3_table: TabulatedEstimator2D


class SideChannelProblem(ControlProblem):
    """Problem plugin for the side-channel variant.

    The y3 grid tracks the side channel's output range: its span is
    refreshed once per temperature to cover max |u2| plus the noise-kernel
    window, so the estimator table never clips reachable observations.
    """

    def __init__(
        self,
        params: SideChannelParams,
        x0_n: int = 501,
        truncation: float = 5.0,
        w_n: int = 101,
        y2d_n: int = 201,
        symmetric: bool = False,
    ):
        self.params = params
        self.symmetric = symmetric
        self.y2d_n = int(y2d_n)
        x0_grid = build_grid(0.0, params.sigma_x0, truncation, x0_n)
        y1_half = truncation * params.sigma_x0 + truncation
        y1_nodes = np.linspace(-y1_half, y1_half, self.y2d_n)
        y3_nodes = np.linspace(-kernels.GAUSS_WINDOW, kernels.GAUSS_WINDOW, self.y2d_n)
        self.state = SideChannelState(
            x0_grid=x0_grid,
            w1_grid=build_grid(0.0, 1.0, truncation, w_n),
            w2_grid=build_grid(0.0, 1.0, truncation, w_n),
            y1_grid=y1_nodes,
            y3_grid=y3_nodes,
            g3_table=TabulatedEstimator2D(y1_nodes, y3_nodes, np.zeros((self.y2d_n, self.y2d_n))),
        )
        self.grid = x0_grid

    # -- engine protocol ---------------------------------------------------

    def initial_model(self) -> PairedLocalModel:
        return PairedLocalModel(LocalModel(0.0, 0.0), LocalModel(0.0, 0.0))

    def _controller_outputs(self, params: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """u1, u2 and x1 for every (node, model) pair, each shape (n, M)."""
        x = self.grid.nodes[:, None]
        u1 = params[:, 0][None, :] * x + params[:, 1][None, :]
        u2 = params[:, 2][None, :] * x + params[:, 3][None, :]
        return u1, u2, x + u1

    def on_temperature_start(self, controller: RandomizedController) -> None:
        """Re-span the y3 grid to the current side-channel output range."""
        _, u2, _ = self._controller_outputs(controller.param_matrix())
        half = max(float(np.max(np.abs(u2))), 1.0) + kernels.GAUSS_WINDOW
        self.state.y3_grid = np.linspace(-half, half, self.y2d_n)
        self.state.g3_table.y3_nodes = self.state.y3_grid

    def update_dependents(self, controller: RandomizedController) -> None:
        """Retabulate g3(y1, y3) = E[X1 | y1, y3] under the current controller."""
        _, u2, x1 = self._controller_outputs(controller.param_matrix())
        mass = controller.grid.weights[:, None] * controller.assoc
        table = kernels.mixture_table_2d(
            self.state.y1_grid,
            self.state.y3_grid,
            x1.ravel(),
            u2.ravel(),
            mass.ravel(),
            x1.ravel(),
        )
        if self.symmetric:
            table = 0.5 * (table - table[::-1, ::-1])
        self.state.g3_table.values = table

    # Spec-facing name for the dependent-controller update.
    update_g3 = update_dependents

    def _estimation_terms(self, x1: np.ndarray, u2: np.ndarray):
        st = self.state
        s, dsx1, dsu2 = kernels.estimation_terms_2d(
            x1.ravel(),
            u2.ravel(),
            float(st.y1_grid[0]),
            float(st.y1_grid[1] - st.y1_grid[0]),
            float(st.y3_grid[0]),
            float(st.y3_grid[1] - st.y3_grid[0]),
            st.g3_table.values,
        )
        return s.reshape(x1.shape), dsx1.reshape(x1.shape), dsu2.reshape(x1.shape)

    def cost_matrix(self, controller: RandomizedController, params: Optional[np.ndarray] = None) -> np.ndarray:
        p = controller.param_matrix() if params is None else np.asarray(params, dtype=float)
        u1, u2, x1 = self._controller_outputs(p)
        s, _, _ = self._estimation_terms(x1, u2)
        return self.params.k**2 * u1 * u1 + self.params.lam * u2 * u2 + s

    def parameter_gradients(self, controller: RandomizedController) -> np.ndarray:
        u1, u2, x1 = self._controller_outputs(controller.param_matrix())
        _, dsx1, dsu2 = self._estimation_terms(x1, u2)
        inner1 = 2.0 * self.params.k**2 * u1 + dsx1
        inner2 = 2.0 * self.params.lam * u2 + dsu2
        mass = controller.grid.weights[:, None] * controller.assoc
        x = self.grid.nodes[:, None]
        return np.column_stack(
            [
                (mass * inner1 * x).sum(axis=0),
                (mass * inner1).sum(axis=0),
                (mass * inner2 * x).sum(axis=0),
                (mass * inner2).sum(axis=0),
            ]
        )

    def descent_metric(self, controller: RandomizedController) -> np.ndarray:
        """Block-diagonal Gauss-Newton scale: one (x,1) moment block per sub-model."""
        mass = controller.grid.weights[:, None] * controller.assoc
        x = self.grid.nodes
        m0 = mass.sum(axis=0)
        m1 = x @ mass
        m2 = (x * x) @ mass
        floor = 1e-9
        var = self.params.sigma_x0**2
        metric = np.zeros((controller.model_count, 4, 4))
        for block, weight in ((0, 2.0 * (self.params.k**2 + 1.0)), (2, 2.0 * (self.params.lam + 1.0))):
            metric[:, block, block] = weight * (m2 + floor * var)
            metric[:, block, block + 1] = metric[:, block + 1, block] = weight * m1
            metric[:, block + 1, block + 1] = weight * (m0 + floor)
        return metric

    def baseline_cost(self) -> float:
        return best_affine_lagrangian_cost(self.params)[2]

    # -- problem-specific reporting -----------------------------------------

    def snr_of(self, controller: RandomizedController) -> float:
        """Side-channel power E[u2^2] under the (possibly randomized) controller."""
        _, u2, _ = self._controller_outputs(controller.param_matrix())
        mass = controller.grid.weights[:, None] * controller.assoc
        return float(np.sum(mass * u2 * u2))

    def control_cost(self, controller: RandomizedController) -> float:
        """Unpriced cost E[k^2 u1^2 + x2^2]: the Lagrangian minus lam * power."""
        return self.expected_cost(controller) - self.params.lam * self.snr_of(controller)


def best_affine_lagrangian_cost(params: SideChannelParams) -> tuple[float, float, float]:
    """Best affine strategy (u1 = c1 x0, u2 = c2 x0) for the priced cost.

    With affine maps everything is jointly Gaussian: writing P = sigma^2 (1+c1)^2
    and b = sigma^2 c2^2, the estimation error is P / (P + b + 1), so

        J(c1, c2) = k^2 c1^2 sigma^2 + lam b + P / (P + b + 1).

    Returns (c1*, c2*, J*).
    """
    var = params.sigma_x0**2
    k2 = params.k**2

    def inner(c1: float) -> tuple[float, float]:
        p = var * (1.0 + c1) ** 2

        def cost_c2(c2: float) -> float:
            b = var * c2 * c2
            return k2 * c1 * c1 * var + params.lam * b + p / (p + b + 1.0)

        return golden_section_min(cost_c2, 0.0, 3.0)

    def outer(c1: float) -> float:
        return inner(c1)[1]

    c1_star, j_star = golden_section_min(outer, -1.0, 0.5)
    c2_star = inner(c1_star)[0]
    return c1_star, c2_star, j_star


def best_affine_cost_at_power(k: float, sigma_x0: float, b_snr: float) -> tuple[float, float]:
    """Best affine strategy using exactly power b_snr on the side channel.

    Returns (c1*, J*) for the unpriced cost; the side-channel gain is pinned
    by c2 = sqrt(b_snr) / sigma.
    """
    var = sigma_x0**2

    def cost(c1: float) -> float:
        p = var * (1.0 + c1) ** 2
        return k**2 * c1 * c1 * var + p / (p + b_snr + 1.0)

    return golden_section_min(cost, -1.0, 0.5)


@dataclass
class SweepResult:
    lam: float
    problem: SideChannelProblem
    controller: RandomizedController
    trace: AnnealTrace
    achieved_b_snr: float
    cost: float  # unpriced cost E[k^2 u1^2 + x2^2] after quench
    lagrangian_cost: float
    evaluations: list  # (lam, achieved_b_snr, cost) in evaluation order
    warning: Optional[str] = None


def sweep_lambda(
    base_params: SideChannelParams,
    schedule: Schedule,
    target_b_snr: float,
    tol: float,
    ladder: tuple = DEFAULT_LAMBDA_LADDER,
    max_bisect: int = 8,
    problem_kwargs: Optional[dict] = None,
    on_evaluation: Optional[Callable[[float, float, float], None]] = None,
) -> SweepResult:
    """Find the multiplier whose annealed solution hits a target side-channel power.

    Achieved power is non-increasing in the multiplier, so the log-spaced
    ladder is searched by bisection on its indices (first anneal at the
    ladder midpoint), then the bracketing pair is refined by continuous
    bisection.  Each evaluation is a full annealing run.  If the scan
    reveals non-monotone behaviour the closest ladder point is returned
    with a warning; a target above the power achieved at lambda = 0 raises
    UnreachableTargetError naming the achievable range.
    """
    if target_b_snr < 0.0:
        raise InvalidParameterError(f"target_b_snr must be nonnegative, got {target_b_snr}")
    if not tol > 0.0:
        raise InvalidParameterError(f"tol must be positive, got {tol}")
    kwargs = problem_kwargs or {}
    cache: dict[float, tuple] = {}
    order: list[float] = []

    def run(lam: float):
        if lam not in cache:
            problem = SideChannelProblem(replace(base_params, lam=lam), **kwargs)
            controller, trace = anneal(problem, schedule)
            problem.update_dependents(controller)
            achieved = problem.snr_of(controller)
            lagrangian = problem.expected_cost(controller)
            cost = lagrangian - lam * achieved
            cache[lam] = (problem, controller, trace, achieved, cost, lagrangian)
            order.append(lam)
            if on_evaluation is not None:
                on_evaluation(lam, achieved, cost)
        return cache[lam]

    def result_for(lam: float, warning: Optional[str] = None) -> SweepResult:
        problem, controller, trace, achieved, cost, lagrangian = cache[lam]
        return SweepResult(
            lam=lam,
            problem=problem,
            controller=controller,
            trace=trace,
            achieved_b_snr=achieved,
            cost=cost,
            lagrangian_cost=lagrangian,
            evaluations=[(l, cache[l][3], cache[l][4]) for l in order],
            warning=warning,
        )

    def closest(warning: Optional[str]) -> SweepResult:
        best = min(cache, key=lambda l: abs(cache[l][3] - target_b_snr))
        return result_for(best, warning)

    # Bisection over ladder indices (power decreases along the ladder).
    lo, hi = 0, len(ladder) - 1
    while hi - lo > 1:
        mid = (lo + hi) // 2
        achieved = run(ladder[mid])[3]
        if abs(achieved - target_b_snr) <= tol:
            return result_for(ladder[mid])
        if achieved > target_b_snr:
            lo = mid
        else:
            hi = mid

    b_lo = run(ladder[lo])[3]
    if abs(b_lo - target_b_snr) <= tol:
        return result_for(ladder[lo])
    b_hi = run(ladder[hi])[3]
    if abs(b_hi - target_b_snr) <= tol:
        return result_for(ladder[hi])
    if lo == 0 and b_lo < target_b_snr:
        raise UnreachableTargetError(
            f"target_b_snr={target_b_snr:.4g} is unreachable: achievable range is "
            f"[0, {b_lo:.4g}] (power at lambda=0)"
        )
    if b_lo < b_hi:
        return closest(
            f"achieved power is non-monotone across the ladder near lambda in "
            f"[{ladder[lo]:.4g}, {ladder[hi]:.4g}]"
        )

    # Continuous bisection inside the bracketing pair.
    lam_a, lam_b = float(ladder[lo]), float(ladder[hi])
    for _ in range(max_bisect):
        lam_mid = 0.5 * (lam_a + lam_b)
        achieved = run(lam_mid)[3]
        if abs(achieved - target_b_snr) <= tol:
            return result_for(lam_mid)
        if achieved > target_b_snr:
            lam_a = lam_mid
        else:
            lam_b = lam_mid
    return closest(
        f"bisection budget exhausted before reaching |b_snr - {target_b_snr:.4g}| <= {tol:.4g}"
    )
