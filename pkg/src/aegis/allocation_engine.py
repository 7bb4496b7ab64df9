"""Constrained Sortino-ratio maximization over a training window.

Given a matrix of daily simple returns, find long-only weights summing to one,
each at most `cap`, that maximize annualized excess return over downside
deviation (epsilon-guarded). Solved with SLSQP from a small set of
deterministic starting points; the best feasible iterate wins, so the result
never scores below the initial guess. The solver consumes a central-difference
gradient: the objective has min(0, .) kinks where forward differences misbehave.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .errors import DataError, InfeasibleError, ParameterError

logger = logging.getLogger(__name__)

DEFAULT_RISK_FREE = 0.04
DEFAULT_CAP = 0.05
DEFAULT_TRADING_DAYS = 252
DEFAULT_EPSILON = 1e-9
DEFAULT_MAX_ITER = 200
DEFAULT_FTOL = 1e-9
GRADIENT_STEP = 1e-6


@dataclass
class AllocationProblem:
    """One optimization instance: training returns plus the constraint set."""

    asset_returns: np.ndarray  # T x N daily simple returns, col order = tickers
    tickers: list[str]
    risk_free_annual: float = DEFAULT_RISK_FREE
    cap: float = DEFAULT_CAP
    trading_days: int = DEFAULT_TRADING_DAYS
    epsilon: float = DEFAULT_EPSILON

    def __post_init__(self) -> None:
        # C layout is part of the contract: BLAS picks kernels by memory order,
        # so an F-ordered view of the same values can shift the objective in
        # the last bits and steer the solver to a different local optimum.
        self.asset_returns = np.ascontiguousarray(self.asset_returns, dtype=float)
        if self.asset_returns.ndim != 2:
            raise DataError("asset_returns must be a T x N matrix")
        if self.asset_returns.shape[1] != len(self.tickers):
            raise DataError(
                f"{self.asset_returns.shape[1]} return columns vs {len(self.tickers)} tickers"
            )
        if self.asset_returns.shape[0] < 1:
            raise DataError("empty training window")
        if self.risk_free_annual < 0:
            raise ParameterError("risk_free_annual must be >= 0")
        if not 0 < self.cap <= 1:
            raise ParameterError(f"cap must be in (0, 1], got {self.cap}")
        if self.epsilon <= 0:
            raise ParameterError("epsilon must be positive")

    @property
    def asset_count(self) -> int:
        return len(self.tickers)


@dataclass
class WeightVector:
    weights: dict[str, float]
    objective_value: float
    converged: bool
    iterations: int
    effective_cap: float = DEFAULT_CAP
    start_label: str = "uniform"

    def as_array(self, tickers: list[str]) -> np.ndarray:
        return np.array([self.weights.get(t, 0.0) for t in tickers])


def downside_deviation(
    port_returns: np.ndarray,
    rf_annual: float,
    periods_per_year: int,
) -> float:
    """Annualized root-mean-square shortfall below the per-period hurdle.

    Uses the population mean (divide by T, not T-1): the shortfall series is a
    transform of the data, not a sample whose mean is being estimated.
    """
    arr = np.asarray(port_returns, dtype=float)
    if arr.size == 0:
        raise DataError("empty return series")
    hurdle = rf_annual / periods_per_year
    shortfall = np.minimum(arr - hurdle, 0.0)
    return float(math.sqrt((shortfall * shortfall).mean()) * math.sqrt(periods_per_year))


def sortino_objective(weights: np.ndarray, problem: AllocationProblem) -> float:
    """Annualized excess return over (downside deviation + epsilon)."""
    w = np.asarray(weights, dtype=float)
    port = problem.asset_returns @ w
    ann_return = port.mean() * problem.trading_days
    dd = downside_deviation(port, problem.risk_free_annual, problem.trading_days)
    return float((ann_return - problem.risk_free_annual) / (dd + problem.epsilon))


def _batch_objective(points: np.ndarray, problem: AllocationProblem) -> np.ndarray:
    """sortino_objective evaluated at each row of `points` in one matrix pass."""
    ports = problem.asset_returns @ points.T  # T x K
    ann = ports.mean(axis=0) * problem.trading_days
    hurdle = problem.risk_free_annual / problem.trading_days
    shortfall = np.minimum(ports - hurdle, 0.0)
    dd = np.sqrt((shortfall * shortfall).mean(axis=0)) * math.sqrt(problem.trading_days)
    return (ann - problem.risk_free_annual) / (dd + problem.epsilon)


def objective_gradient(
    weights: np.ndarray,
    problem: AllocationProblem,
    step: float = GRADIENT_STEP,
) -> np.ndarray:
    """Central-difference gradient of sortino_objective, batched for speed.

    This is the gradient the solver itself runs on, so tests can compare it
    against an independent straight-line implementation.
    """
    w = np.asarray(weights, dtype=float)
    n = w.size
    bumps = np.vstack([w + step * np.eye(n), w - step * np.eye(n)])
    values = _batch_objective(bumps, problem)
    return (values[:n] - values[n:]) / (2.0 * step)


def project_capped_simplex(x: np.ndarray, cap: float) -> np.ndarray:
    """Euclidean projection onto {w : sum w = 1, 0 <= w <= cap}.

    Solves sum(clip(x - tau, 0, cap)) = 1 for tau by bisection; the map is
    monotone in tau so this is exact to machine precision.
    """
    arr = np.asarray(x, dtype=float)
    n = arr.size
    if n * cap < 1.0 - 1e-12:
        raise InfeasibleError(f"cap {cap} x {n} assets cannot reach a fully invested budget")
    lo = float(arr.min()) - 1.0
    hi = float(arr.max())
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        total = np.clip(arr - mid, 0.0, cap).sum()
        if total > 1.0:
            lo = mid
        else:
            hi = mid
    out = np.clip(arr - hi, 0.0, cap)
    residual = 1.0 - out.sum()
    if residual != 0.0:
        interior = (out > 0.0) & (out < cap)
        slots = interior if interior.any() else np.ones(n, dtype=bool)
        out[slots] += residual / slots.sum()
        out = np.clip(out, 0.0, cap)
    return out


def _starting_points(problem: AllocationProblem, cap: float, initial) -> list[tuple[str, np.ndarray]]:
    n = problem.asset_count
    starts: list[tuple[str, np.ndarray]] = []
    if initial is not None:
        starts.append(("caller", project_capped_simplex(np.asarray(initial, float), cap)))
    uniform = np.full(n, 1.0 / n)
    starts.append(("uniform", project_capped_simplex(uniform, cap)))
    # Bang-bang start: load the cap onto the best in-sample means first. Catches
    # optima pinned to the box corners that a uniform start can stall short of.
    means = problem.asset_returns.mean(axis=0)
    order = sorted(range(n), key=lambda i: (-means[i], problem.tickers[i]))
    greedy = np.zeros(n)
    budget = 1.0
    for idx in order:
        take = min(cap, budget)
        greedy[idx] = take
        budget -= take
        if budget <= 0:
            break
    starts.append(("greedy-mean", project_capped_simplex(greedy, cap)))
    if n <= 4:
        for idx in range(n):
            corner = np.full(n, (1.0 - cap) / (n - 1)) if n > 1 else np.array([1.0])
            corner[idx] = cap
            starts.append((f"corner-{problem.tickers[idx]}", project_capped_simplex(corner, cap)))
    return starts


def optimize(
    problem: AllocationProblem,
    initial: np.ndarray | None = None,
    relax_cap: bool = False,
    maxiter: int = DEFAULT_MAX_ITER,
    ftol: float = DEFAULT_FTOL,
) -> WeightVector:
    """Maximize the Sortino objective under budget, long-only, and cap bounds.

    An infeasible cap (cap x assets < 1) raises unless relax_cap is set, in
    which case the cap is lifted to 1/assets. Every candidate solution is
    projected back onto the constraint set before scoring, and the best-scoring
    point across starting guesses (including the guesses themselves) is
    returned, so the reported objective never falls below the initial point's.
    """
    n = problem.asset_count
    cap = problem.cap
    if n * cap < 1.0 - 1e-12:
        if not relax_cap:
            raise InfeasibleError(
                f"cap {cap} over {n} assets cannot sum to 1; "
                "pass relax_cap to lift the cap to 1/assets"
            )
        cap = max(cap, 1.0 / n)

    bounds = [(0.0, cap)] * n
    constraints = [{
        "type": "eq",
        "fun": lambda w: w.sum() - 1.0,
        "jac": lambda w: np.ones_like(w),
    }]

    best: tuple[float, np.ndarray, bool, int, str] | None = None
    for label, x0 in _starting_points(problem, cap, initial):
        baseline = sortino_objective(x0, problem)
        if best is None or baseline > best[0]:
            best = (baseline, x0, True, 0, f"{label}-start")
        result = minimize(
            lambda w: -sortino_objective(w, problem),
            x0,
            jac=lambda w: -objective_gradient(w, problem),
            method="SLSQP",
            bounds=bounds,
            constraints=constraints,
            options={"maxiter": maxiter, "ftol": ftol},
        )
        candidate = project_capped_simplex(result.x, cap)
        value = sortino_objective(candidate, problem)
        if value > best[0]:
            best = (value, candidate, bool(result.success), int(result.nit), label)
        if not result.success:
            logger.debug("solver start %s did not converge: %s", label, result.message)

    value, point, converged, iterations, label = best
    weights = {t: float(point[i]) for i, t in enumerate(problem.tickers)}
    return WeightVector(
        weights=weights,
        objective_value=float(value),
        converged=converged,
        iterations=iterations,
        effective_cap=cap,
        start_label=label,
    )
