"""Deterministic-annealing optimizer over randomized piecewise controllers.

The engine is problem-agnostic: a `ControlProblem` plugin supplies the
per-node association costs of its randomized controller's local models,
recomputes any dependent (non-randomized) controllers, and exposes the
gradient of the expected cost with respect to the local-model parameters.
The engine owns the annealing schedule: Gibbs association updates,
entropy/free-energy accounting, model duplication and merging, and the
zero-temperature quench.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .errors import InvalidParameterError, NumericError
from .quadrature import QuadratureGrid

__all__ = [
    "LocalModel",
    "RandomizedController",
    "Schedule",
    "TraceRecord",
    "AnnealTrace",
    "ControlProblem",
    "gibbs_update",
    "log_partition",
    "entropy",
    "free_energy",
    "duplicate_and_perturb",
    "merge_models",
    "finite_difference_gradients",
    "optimize_at_temperature",
    "quench",
    "anneal",
]

ARMIJO_C1 = 1e-4
MAX_BACKTRACKS = 60


@dataclass(frozen=True)
class LocalModel:
    """One affine local controller model u = slope * x + intercept."""

    slope: float
    intercept: float

    def to_vector(self) -> np.ndarray:
        return np.array([self.slope, self.intercept])

    @classmethod
    def from_vector(cls, vec: np.ndarray) -> "LocalModel":
        return cls(float(vec[0]), float(vec[1]))


@dataclass
class RandomizedController:
    """A set of local models plus association probabilities p(m | x) over a grid.

    `assoc` has one row per grid node and one column per model; every row
    sums to 1.  Model objects must expose `to_vector()`/`from_vector()`.
    """

    models: list
    assoc: np.ndarray
    grid: QuadratureGrid

    @property
    def model_count(self) -> int:
        return len(self.models)

    def param_matrix(self) -> np.ndarray:
        return np.stack([np.asarray(m.to_vector(), dtype=float) for m in self.models])

    def set_params(self, params: np.ndarray) -> None:
        cls = type(self.models[0])
        self.models = [cls.from_vector(row) for row in params]

    def model_masses(self) -> np.ndarray:
        """Total association probability mass per model."""
        return self.grid.weights @ self.assoc

    def copy(self) -> "RandomizedController":
        return RandomizedController(list(self.models), self.assoc.copy(), self.grid)

    def validate(self, atol: float = 1e-12) -> None:
        if self.assoc.shape != (self.grid.n, len(self.models)):
            raise InvalidParameterError(
                f"assoc shape {self.assoc.shape} does not match "
                f"(nodes, models) = ({self.grid.n}, {len(self.models)})"
            )
        if np.any(self.assoc < -atol) or np.any(self.assoc > 1 + atol):
            raise InvalidParameterError("association probabilities outside [0, 1]")
        if np.max(np.abs(self.assoc.sum(axis=1) - 1.0)) > atol:
            raise InvalidParameterError("association rows do not sum to 1")


@dataclass
class Schedule:
    """Annealing schedule and inner-loop budgets.

    `t_init=None` resolves to 5x the problem's best-affine baseline cost and
    `t_min=None` to 1e-4 * t_init, so the high-temperature phase starts with
    genuinely near-uniform associations regardless of the cost scale.
    """

    t_init: Optional[float] = None
    alpha: float = 0.95
    t_min: Optional[float] = None
    perturb_eps: float = 1e-2
    merge_tol: float = 1e-3
    inner_tol: float = 1e-7
    param_tol: float = 1e-5
    min_inner_iters: int = 8
    max_inner_iters: int = 200
    max_models: int = 64
    rng_seed: int = 0

    def validate(self) -> None:
        if not (0.0 < self.alpha < 1.0):
            raise InvalidParameterError(f"alpha must be in (0, 1), got {self.alpha}")
        for name in ("perturb_eps", "merge_tol", "inner_tol", "param_tol"):
            if not (getattr(self, name) > 0.0):
                raise InvalidParameterError(f"{name} must be positive")
        if self.min_inner_iters < 1:
            raise InvalidParameterError("min_inner_iters must be a positive integer")
        if self.max_inner_iters < 1:
            raise InvalidParameterError("max_inner_iters must be a positive integer")
        if self.max_models < 1:
            raise InvalidParameterError("max_models must be a positive integer")
        if self.t_init is not None and self.t_min is not None:
            if not (self.t_init > self.t_min > 0.0):
                raise InvalidParameterError(
                    f"need t_init > t_min > 0, got t_init={self.t_init}, t_min={self.t_min}"
                )

    def resolved(self, baseline_cost: float) -> "Schedule":
        """Return a schedule with concrete temperatures."""
        t_init = self.t_init if self.t_init is not None else 5.0 * baseline_cost
        t_min = self.t_min if self.t_min is not None else 1e-4 * t_init
        out = replace(self, t_init=t_init, t_min=t_min)
        out.validate()
        return out


@dataclass(frozen=True)
class TraceRecord:
    temperature: float
    cost: float
    entropy: float
    free_energy: float
    model_count: int


@dataclass
class AnnealTrace:
    """Per-temperature record of the annealing run."""

    records: list = field(default_factory=list)
    inner_free_energy: list = field(default_factory=list)  # per record, when verbose
    warnings: list = field(default_factory=list)

    @property
    def temperatures(self) -> np.ndarray:
        return np.array([r.temperature for r in self.records])


class ControlProblem(ABC):
    """Interface a control problem exposes to the annealing engine.

    A plugin randomizes exactly one controller (the one whose local models
    the engine manipulates); any dependent controllers are recomputed to
    their conditional-expectation optimum by `update_dependents`.
    """

    grid: QuadratureGrid
    gradient_mode: str = "analytic"  # or "finite-difference"

    @abstractmethod
    def initial_model(self):
        """Model the annealing starts from (single-model controller)."""

    @abstractmethod
    def update_dependents(self, controller: RandomizedController) -> None:
        """Recompute dependent (non-randomized) controllers in place."""

    @abstractmethod
    def cost_matrix(self, controller: RandomizedController, params: Optional[np.ndarray] = None) -> np.ndarray:
        """Association costs, shape (nodes, models).

        `params` overrides the controller's model parameters without
        touching it (used by the line search); dependent controllers are
        held fixed either way.
        """

    @abstractmethod
    def baseline_cost(self) -> float:
        """Cost of the best affine controller; sets the temperature scale."""

    def parameter_gradients(self, controller: RandomizedController) -> np.ndarray:
        """Gradient of the expected cost w.r.t. model parameters, shape (M, P).

        Association probabilities and dependent controllers are held fixed.
        Plugins with gradient_mode == "finite-difference" rely on the
        engine's central-difference fallback instead.
        """
        raise NotImplementedError

    def descent_metric(self, controller: RandomizedController) -> Optional[np.ndarray]:
        """Per-model SPD curvature scale, shape (M, P, P), or None for identity.

        Used to precondition the gradient direction; plain gradient steps
        are hopelessly stiff here (slope vs intercept curvature differs by
        the input second moment), which both slows convergence and stalls
        the symmetry-breaking growth of freshly duplicated models.
        """
        return None

    def on_temperature_start(self, controller: RandomizedController) -> None:
        """Hook called once per temperature (e.g. to refresh dynamic grids)."""

    def association_cost(self, controller: RandomizedController, node_index: int, model_index: int) -> float:
        """Cost of associating one grid node with one local model."""
        return float(self.cost_matrix(controller)[node_index, model_index])

    def expected_cost(self, controller: RandomizedController) -> float:
        """Randomized expected cost sum_x w_x sum_m p(m|x) cost(x, m)."""
        mass = controller.grid.weights[:, None] * controller.assoc
        return float(np.sum(mass * self.cost_matrix(controller)))


def gibbs_update(costs: np.ndarray, temperature: float, grid: Optional[QuadratureGrid] = None) -> np.ndarray:
    """Optimal association probabilities exp(-cost/T) row-normalized.

    Computed with per-row max subtraction, so no overflow/underflow occurs
    at any positive temperature; each row sums to 1 to machine precision.
    """
    if not temperature > 0.0:
        raise InvalidParameterError(f"temperature must be positive, got {temperature}")
    costs = np.asarray(costs, dtype=float)
    if not np.all(np.isfinite(costs)):
        raise NumericError("association costs contain non-finite values")
    if grid is not None and costs.shape[0] != grid.n:
        raise InvalidParameterError(
            f"cost matrix has {costs.shape[0]} rows for a grid of {grid.n} nodes"
        )
    shifted = costs - costs.min(axis=1, keepdims=True)
    p = np.exp(-shifted / temperature)
    p /= p.sum(axis=1, keepdims=True)
    return p


def log_partition(costs: np.ndarray, temperature: float) -> np.ndarray:
    """Per-node ln sum_m exp(-cost/T), evaluated stably."""
    low = costs.min(axis=1)
    shifted = costs - low[:, None]
    return -low / temperature + np.log(np.exp(-shifted / temperature).sum(axis=1))


def entropy(controller: RandomizedController) -> float:
    """Grid-weighted conditional entropy of the associations (natural log, 0 ln 0 = 0)."""
    p = controller.assoc
    plogp = np.where(p > 0.0, p * np.log(np.where(p > 0.0, p, 1.0)), 0.0)
    h = -float(controller.grid.weights @ plogp.sum(axis=1))
    return max(h, 0.0)


def free_energy(cost: float, entropy_value: float, temperature: float) -> float:
    """Annealing objective: expected cost minus temperature times entropy."""
    return cost - temperature * entropy_value


def duplicate_and_perturb(
    controller: RandomizedController,
    eps: float,
    rng: np.random.Generator,
    max_models: Optional[int] = None,
) -> RandomizedController:
    """Append a perturbed copy of every model, splitting association mass in half.

    Each copied parameter p receives an independent uniform perturbation in
    +/- eps * (|p| + eps); the originals are untouched.  If doubling would
    exceed `max_models` the controller is returned unchanged (the generator
    is not advanced, keeping the draw sequence a pure function of the
    accepted duplications).
    """
    m = controller.model_count
    if max_models is not None and 2 * m > max_models:
        return controller
    params = controller.param_matrix()
    delta = rng.uniform(-1.0, 1.0, size=params.shape) * eps * (np.abs(params) + eps)
    cls = type(controller.models[0])
    copies = [cls.from_vector(row) for row in params + delta]
    half = controller.assoc * 0.5
    return RandomizedController(
        models=list(controller.models) + copies,
        assoc=np.hstack([half, half]),
        grid=controller.grid,
    )


def merge_models(controller: RandomizedController, tol: float) -> RandomizedController:
    """Coalesce models whose parameters agree within `tol` (max-norm).

    The merge relation is closed transitively; each group keeps the
    association-mass-weighted average of its parameters and the sum of its
    association columns, so row sums are preserved exactly.
    """
    m = controller.model_count
    if m <= 1:
        return controller
    params = controller.param_matrix()
    dist = np.abs(params[:, None, :] - params[None, :, :]).max(axis=2)
    adjacent = dist < tol

    group_of = np.full(m, -1, dtype=int)
    groups: list[list[int]] = []
    for i in range(m):
        if group_of[i] >= 0:
            continue
        stack = [i]
        group_of[i] = len(groups)
        members = []
        while stack:
            j = stack.pop()
            members.append(j)
            for k in range(m):
                if group_of[k] < 0 and adjacent[j, k]:
                    group_of[k] = len(groups)
                    stack.append(k)
        groups.append(sorted(members))
    if len(groups) == m:
        return controller

    masses = controller.model_masses()
    cls = type(controller.models[0])
    new_models = []
    new_cols = np.empty((controller.assoc.shape[0], len(groups)))
    for gi, members in enumerate(groups):
        w = masses[members]
        total = w.sum()
        if total > 0.0:
            avg = (w[:, None] * params[members]).sum(axis=0) / total
        else:
            avg = params[members].mean(axis=0)
        new_models.append(cls.from_vector(avg))
        new_cols[:, gi] = controller.assoc[:, members].sum(axis=1)
    return RandomizedController(models=new_models, assoc=new_cols, grid=controller.grid)


def finite_difference_gradients(
    problem: ControlProblem,
    controller: RandomizedController,
    step: float = 1e-5,
) -> np.ndarray:
    """Central-difference gradient of the expected cost w.r.t. model parameters.

    Dependent controllers and association probabilities are held fixed;
    this serves both as the fallback for plugins without analytic
    gradients and as the independent oracle in the property tests.
    """
    mass = controller.grid.weights[:, None] * controller.assoc
    params = controller.param_matrix()
    grads = np.empty_like(params)
    for m in range(params.shape[0]):
        for p in range(params.shape[1]):
            hi = params.copy()
            lo = params.copy()
            hi[m, p] += step
            lo[m, p] -= step
            j_hi = float(np.sum(mass * problem.cost_matrix(controller, params=hi)))
            j_lo = float(np.sum(mass * problem.cost_matrix(controller, params=lo)))
            grads[m, p] = (j_hi - j_lo) / (2.0 * step)
    return grads


def _gradients(problem: ControlProblem, controller: RandomizedController) -> np.ndarray:
    if problem.gradient_mode == "finite-difference":
        return finite_difference_gradients(problem, controller)
    return problem.parameter_gradients(controller)


def _descend_parameters(
    problem: ControlProblem,
    controller: RandomizedController,
    costs: np.ndarray,
    step_hint: float,
) -> tuple[float, float]:
    """One gradient step with backtracking (Armijo) line search on the cost term.

    Associations and dependent controllers stay fixed, so any decrease in
    the cost term is a decrease in the free energy.  Returns the next
    warm-start step size and the largest parameter movement taken.
    """
    grads = _gradients(problem, controller)
    metric = problem.descent_metric(controller)
    if metric is None:
        direction = grads
    else:
        direction = np.stack([np.linalg.solve(metric[m], grads[m]) for m in range(grads.shape[0])])
    slope = float(np.sum(grads * direction))  # directional derivative along -direction
    if slope <= 1e-24:
        return step_hint, 0.0
    mass = controller.grid.weights[:, None] * controller.assoc
    j_cur = float(np.sum(mass * costs))
    params = controller.param_matrix()
    s = step_hint
    for _ in range(MAX_BACKTRACKS):
        if s * slope < 1e-15 * max(1.0, abs(j_cur)):
            break  # expected decrease is below roundoff; a step would be a no-op
        trial = params - s * direction
        j_trial = float(np.sum(mass * problem.cost_matrix(controller, params=trial)))
        if j_trial <= j_cur - ARMIJO_C1 * s * slope:
            controller.set_params(trial)
            return min(s * 2.0, 4.0), s * float(np.max(np.abs(direction)))
        s *= 0.5
    # No acceptable step: leave parameters alone, restart the search lower.
    return max(step_hint * 0.25, 0.25), 0.0


@dataclass
class TemperatureResult:
    controller: RandomizedController
    cost: float
    entropy: float
    free_energy: float
    converged: bool
    cycles: int
    inner_free_energy: list
    step_hint: float


def optimize_at_temperature(
    problem: ControlProblem,
    controller: RandomizedController,
    temperature: float,
    schedule: Schedule,
    step_hint: float = 1.0,
) -> TemperatureResult:
    """Coordinate-descent cycles on one temperature until the free energy settles.

    Each cycle refreshes the dependent controllers, recomputes association
    costs, applies the exact Gibbs association update, measures (J, H, F),
    and (unless converged) takes one line-searched gradient step on the
    model parameters.  Every stage is an exact descent step on the same
    discretized free energy, so the measured F sequence is non-increasing
    up to roundoff.

    Convergence requires the free energy to settle AND the last parameter
    step to be small: after a duplication the free-energy signal of a
    growing instability is quadratically small, so stopping on F alone
    would cut phase transitions short while the split models are still
    separating.
    """
    if not temperature > 0.0:
        raise InvalidParameterError(f"temperature must be positive, got {temperature}")
    problem.on_temperature_start(controller)
    inner_f: list[float] = []
    cost = ent = f_val = np.nan
    converged = False
    cycles = 0
    param_move = np.inf
    for cycles in range(1, schedule.max_inner_iters + 1):
        problem.update_dependents(controller)
        costs = problem.cost_matrix(controller)
        controller.assoc = gibbs_update(costs, temperature)
        mass = controller.grid.weights[:, None] * controller.assoc
        cost = float(np.sum(mass * costs))
        ent = entropy(controller)
        f_new = free_energy(cost, ent, temperature)
        inner_f.append(f_new)
        settled = (
            cycles >= schedule.min_inner_iters
            and abs(f_new - f_val) <= schedule.inner_tol * max(1.0, abs(f_new))
            and param_move <= schedule.param_tol
        )
        if settled:
            f_val = f_new
            converged = True
            break
        f_val = f_new
        step_hint, param_move = _descend_parameters(problem, controller, costs, step_hint)
    return TemperatureResult(
        controller=controller,
        cost=cost,
        entropy=ent,
        free_energy=f_val,
        converged=converged,
        cycles=cycles,
        inner_free_energy=inner_f,
        step_hint=step_hint,
    )


def quench(
    problem: ControlProblem,
    controller: RandomizedController,
    schedule: Schedule,
) -> tuple[RandomizedController, float]:
    """Zero-temperature iteration: hard-assign nodes to their cheapest model.

    Alternates {argmin assignment, dependent update, line-searched gradient
    step} until the cost stops decreasing.  Ties go to the lowest model
    index.  Models left with no assigned node are dropped.
    """
    problem.on_temperature_start(controller)
    n = controller.grid.n
    j_prev = None
    step_hint = 1.0
    cost_value = np.nan
    for _ in range(schedule.max_inner_iters):
        problem.update_dependents(controller)
        costs = problem.cost_matrix(controller)
        assign = np.argmin(costs, axis=1)
        one_hot = np.zeros_like(costs)
        one_hot[np.arange(n), assign] = 1.0
        controller.assoc = one_hot
        cost_value = float(controller.grid.weights @ costs[np.arange(n), assign])
        if j_prev is not None and (j_prev - cost_value) <= schedule.inner_tol * max(1.0, abs(cost_value)):
            break
        j_prev = cost_value
        step_hint, _ = _descend_parameters(problem, controller, costs, step_hint)

    used = np.unique(np.argmax(controller.assoc, axis=1))
    if used.shape[0] < controller.model_count:
        controller = RandomizedController(
            models=[controller.models[i] for i in used],
            assoc=controller.assoc[:, used],
            grid=controller.grid,
        )
    return controller, cost_value


def anneal(
    problem: ControlProblem,
    schedule: Schedule,
    verbose: bool = False,
    on_record: Optional[Callable[[TraceRecord, RandomizedController], None]] = None,
) -> tuple[RandomizedController, AnnealTrace]:
    """Full annealing run: cool geometrically from t_init to t_min, then quench.

    Starts from a single-model controller.  At every temperature the inner
    optimization runs to tolerance, the trace records (T, J, H, F, M),
    near-identical models are merged, and every surviving model is
    duplicated and perturbed to probe for phase transitions.  On reaching
    t_min the controller is merged once more and quenched to a
    deterministic mapping.  Runs are bit-reproducible for a fixed schedule.
    """
    schedule.validate()
    sched = schedule.resolved(problem.baseline_cost())
    rng = np.random.default_rng(sched.rng_seed)

    controller = RandomizedController(
        models=[problem.initial_model()],
        assoc=np.ones((problem.grid.n, 1)),
        grid=problem.grid,
    )
    trace = AnnealTrace()
    temperature = sched.t_init
    cap_warned = False
    while True:
        result = optimize_at_temperature(problem, controller, temperature, sched)
        controller = result.controller
        record = TraceRecord(
            temperature=temperature,
            cost=result.cost,
            entropy=result.entropy,
            free_energy=result.free_energy,
            model_count=controller.model_count,
        )
        trace.records.append(record)
        if verbose:
            trace.inner_free_energy.append(list(result.inner_free_energy))
        if not result.converged:
            trace.warnings.append(
                f"inner loop hit max_inner_iters={sched.max_inner_iters} at T={temperature:.6g}"
            )
        if on_record is not None:
            on_record(record, controller)

        controller = merge_models(controller, sched.merge_tol)
        if temperature <= sched.t_min:
            break
        grown = duplicate_and_perturb(controller, sched.perturb_eps, rng, sched.max_models)
        if grown is controller and not cap_warned:
            trace.warnings.append(f"model cap max_models={sched.max_models} reached; duplication skipped")
            cap_warned = True
        controller = grown
        temperature *= sched.alpha

    controller, _ = quench(problem, controller, sched)
    return controller, trace
