"""Outer interior-point Newton loop over the barrier Lagrangian.

Each iteration linearizes at the current strictly interior iterate, solves
the banded subproblem by stagewise elimination, damps the step to stay
interior, shrinks the barrier weights, and tests the termination criterion.
"""

from __future__ import annotations

import json
import math
import time
import warnings
from dataclasses import asdict, dataclass

import numpy as np

from .curve import CurveProblem, ForwardCurve, eval_W
from .dpqp import DPSolution, IndefiniteModelError, dp_solve
from .linearize import BarrierWeights, build_model, default_free_mask


class InfeasibleSeedError(RuntimeError):
    """Seed violates a strict inequality required by an enabled barrier."""


@dataclass(frozen=True)
class SolverParams:
    """Interior-point settings; defaults follow the reference configuration."""

    mu_pos0: float = 1e-1
    mu_spread0: float = 1e1
    mu_pos_min: float = 1e-10
    mu_spread_min: float = 1e-10
    mu_pos_max: float = 1e-6
    mu_spread_max: float = 1e-6
    eps_max: float = 1e-8
    dlnw_max: float = 1e-2
    w_zero: float = 1e-9
    n_min: int = 5
    n_max: int = 60
    beta: float = 0.9
    shrink_floor: float = 1e-2    # barrier shrink factor at a full step
    shrink_power: float = 1.0     # nonlinearity of the shrink response
    positivity_enabled: bool = True
    spread_barrier_enabled: bool = True
    strict_paper_step: bool = False   # always damp by beta, even interior steps
    balanced_spread_barrier: bool = False  # mu_spread0 = n/(2m) * mu_pos0
    f_seed: float = 0.04          # per-year level of the default curve seed

    def __post_init__(self):
        if not 0.0 < self.beta < 1.0:
            raise ValueError("beta must lie in (0, 1)")
        if not 0.0 < self.shrink_floor < 1.0:
            raise ValueError("shrink_floor must lie in (0, 1)")
        if self.shrink_power <= 0.0:
            raise ValueError("shrink_power must be positive")
        if self.mu_pos_min > self.mu_pos_max or self.mu_spread_min > self.mu_spread_max:
            raise ValueError("barrier floors must not exceed caps")
        if not 0 <= self.n_min < self.n_max:
            raise ValueError("need 0 <= n_min < n_max")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "SolverParams":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown solver parameters: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_json_file(cls, path) -> "SolverParams":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class SolverState:
    """Current iterate: iteration count, curve, log prices, barriers, multipliers."""

    s: int
    f: np.ndarray
    rho: np.ndarray
    barriers: BarrierWeights
    lam: np.ndarray


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    w: float
    eps: float
    mu_pos: float
    mu_spread: float
    alpha: float
    dlnw: float


@dataclass
class SolveReport:
    termination: str  # converged | straight_line | max_iterations
    iterations: int
    trace: list[IterationRecord]
    final_w: float
    final_eps: float
    final_rho: np.ndarray
    final_residuals: np.ndarray
    ridge: float
    dp_counters: dict
    wall_time: float

    @property
    def alarm(self) -> bool:
        return self.termination == "max_iterations"

    def to_dict(self) -> dict:
        def safe(x: float):
            return float(x) if math.isfinite(x) else None

        return {
            "termination": self.termination,
            "alarm": self.alarm,
            "iterations": self.iterations,
            "final_w": safe(self.final_w),
            "final_eps": safe(self.final_eps),
            "final_rho": [safe(x) for x in self.final_rho],
            "final_residuals": [safe(x) for x in self.final_residuals],
            "ridge": safe(self.ridge),
            "dp_counters": {k: int(v) for k, v in self.dp_counters.items()},
            "wall_time": safe(self.wall_time),
            "trace": [
                {
                    "iteration": rec.iteration,
                    "w": safe(rec.w),
                    "eps": safe(rec.eps),
                    "mu_pos": safe(rec.mu_pos),
                    "mu_spread": safe(rec.mu_spread),
                    "alpha": safe(rec.alpha),
                    "dlnw": safe(rec.dlnw),
                }
                for rec in self.trace
            ],
        }


@dataclass
class SolveResult:
    curve: ForwardCurve
    rho: np.ndarray
    report: SolveReport


def seed_default(problem: CurveProblem, params: SolverParams | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Constant curve at f_seed, log prices at the interval midpoints."""
    params = params or SolverParams()
    f0 = np.full(problem.n, params.f_seed)
    rho0 = np.array([b.midpoint for b in problem.bounds])
    return f0, rho0


def seed_random(
    problem: CurveProblem,
    rng: np.random.Generator,
    params: SolverParams | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Log prices drawn uniformly inside their intervals (frozen ones stay put)."""
    params = params or SolverParams()
    f0 = np.full(problem.n, params.f_seed)
    rho_b, rho_a = problem.rho_bounds_arrays()
    x = rng.uniform(size=problem.m)
    rho0 = rho_b + x * (rho_a - rho_b)
    return f0, rho0


def barrier_shrink_factor(alpha: float, floor: float, power: float) -> float:
    """Multiplier applied to barrier weights after a step of length alpha.

    Equals 1 at alpha = 0 and decays monotonically to ``floor`` at alpha = 1.
    """
    return (1.0 - floor) * (1.0 - alpha) ** power + floor


def update_barriers(weights: BarrierWeights, alpha: float, params: SolverParams) -> BarrierWeights:
    """Shrink both barrier weights, flooring active ones (disabled stay 0)."""
    psi = barrier_shrink_factor(alpha, params.shrink_floor, params.shrink_power)
    mu_pos = max(psi * weights.mu_pos, params.mu_pos_min) if weights.mu_pos > 0 else 0.0
    mu_spread = max(psi * weights.mu_spread, params.mu_spread_min) if weights.mu_spread > 0 else 0.0
    return BarrierWeights(mu_pos, mu_spread)


def step_length(
    f: np.ndarray,
    delta: np.ndarray,
    rho: np.ndarray,
    sigma: np.ndarray,
    rho_b: np.ndarray,
    rho_a: np.ndarray,
    free: np.ndarray,
    params: SolverParams,
) -> float:
    """Fraction of the Newton step that keeps the iterate strictly interior.

    If the full step violates some inequality, take beta times the largest
    feasible fraction. A fully interior step is taken undamped when it keeps
    a (1-beta) margin to every boundary; otherwise it is damped by beta
    (always damped under strict_paper_step).
    """
    beta = params.beta
    alpha_max = 1.0
    violated = False
    if params.positivity_enabled:
        f_hat = f + delta
        bad = f_hat <= 0.0
        if bad.any():
            violated = True
            alpha_max = min(alpha_max, float(np.min(-f[bad] / delta[bad])))
    if free.any():
        rho_f, sig_f = rho[free], sigma[free]
        rho_hat = rho_f + sig_f
        low = rho_hat <= rho_b[free]
        high = rho_hat >= rho_a[free]
        if low.any():
            violated = True
            alpha_max = min(alpha_max, float(np.min((rho_b[free][low] - rho_f[low]) / sig_f[low])))
        if high.any():
            violated = True
            alpha_max = min(alpha_max, float(np.min((rho_a[free][high] - rho_f[high]) / sig_f[high])))
    if violated:
        return beta * alpha_max
    if params.strict_paper_step:
        return beta
    margin = 1.0 - beta
    with_margin = True
    if params.positivity_enabled:
        with_margin &= bool(np.all(f + delta >= margin * f))
    if free.any():
        rho_f, sig_f = rho[free], sigma[free]
        with_margin &= bool(np.all((rho_a[free] - rho_f) - sig_f >= margin * (rho_a[free] - rho_f)))
        with_margin &= bool(np.all((rho_f + sig_f) - rho_b[free] >= margin * (rho_f - rho_b[free])))
    return 1.0 if with_margin else beta


def check_termination(
    n_it: int,
    w: float,
    eps: float,
    weights: BarrierWeights,
    dlnw: float,
    dlnw_prev: float,
    params: SolverParams,
) -> str | None:
    """Termination decision after iteration n_it (None = keep going)."""
    if (
        n_it > params.n_min
        and weights.mu_pos < params.mu_pos_max
        and weights.mu_spread < params.mu_spread_max
        and eps < params.eps_max
    ):
        if w < params.w_zero:
            return "straight_line"
        if abs(dlnw) < params.dlnw_max and abs(dlnw_prev) < params.dlnw_max:
            return "converged"
    if n_it >= params.n_max:
        return "max_iterations"
    return None


# Diagonal shifts tried when elimination hits a nonpositive pivot. The first
# retry is the fixed documented value; later ones scale with the Hessian
# because the second-difference stencil on a daily grid reaches ~1e8, where an
# absolute 1e-12 sits below the rounding floor of the elimination.
_RIDGE_LADDER = (0.0, 1e-12, ("rel", 1e-12), ("rel", 1e-9), ("rel", 1e-6))


def _log_diff(w_now: float, w_prev: float) -> float:
    if w_now <= 0.0 or w_prev <= 0.0:
        return math.inf
    return math.log(w_now) - math.log(w_prev)


def solve_curve(
    problem: CurveProblem,
    params: SolverParams | None = None,
    seed: tuple[np.ndarray, np.ndarray] | None = None,
) -> SolveResult:
    """Fit the forward curve to the problem's price constraints.

    Raises InfeasibleSeedError if the seed violates an enabled strict
    inequality, and propagates elimination failures that survive the ridge
    retries.
    """
    params = params or SolverParams()
    free = default_free_mask(problem, params.spread_barrier_enabled)
    f, rho = seed if seed is not None else seed_default(problem, params)
    f = np.array(f, dtype=np.float64)
    rho = np.array(rho, dtype=np.float64)
    if f.shape != (problem.n,) or rho.shape != (problem.m,):
        raise ValueError("seed shapes do not match the problem")

    rho_b, rho_a = problem.rho_bounds_arrays()
    if params.positivity_enabled and np.any(f <= 0.0):
        raise InfeasibleSeedError("positivity barrier enabled but seed has f <= 0")
    if free.any() and (np.any(rho[free] <= rho_b[free]) or np.any(rho[free] >= rho_a[free])):
        raise InfeasibleSeedError("seed log prices must lie strictly inside their intervals")

    mu_pos = params.mu_pos0 if params.positivity_enabled else 0.0
    if free.any():
        if params.balanced_spread_barrier:
            mu_spread = problem.n / (2.0 * problem.m) * params.mu_pos0
        else:
            mu_spread = params.mu_spread0
    else:
        mu_spread = 0.0
    weights = BarrierWeights(mu_pos, mu_spread)

    state = SolverState(s=0, f=f, rho=rho, barriers=weights, lam=np.zeros(problem.m))
    trace: list[IterationRecord] = []
    counters: dict[str, int] = {}
    ridge = 0.0
    ridge_level = 0
    warned_ridge = False
    w_prev = eval_W(ForwardCurve(problem.grid, state.f), problem.weights)
    dlnw_prev = math.inf
    termination = "max_iterations"
    t0 = time.perf_counter()

    for s in range(1, params.n_max + 1):
        solution: DPSolution | None = None
        while solution is None:
            model = build_model(problem, state.f, state.rho, state.barriers, free=free, ridge=ridge)
            try:
                solution = dp_solve(model)
            except IndefiniteModelError:
                ridge_level += 1
                if ridge_level >= len(_RIDGE_LADDER):
                    raise
                step = _RIDGE_LADDER[ridge_level]
                if isinstance(step, tuple):
                    ridge = step[1] * float(np.max(model.qband[0]))
                else:
                    ridge = step
                if not warned_ridge:
                    warnings.warn(
                        f"singular step Hessian; retrying with diagonal ridge {ridge:.3g}",
                        RuntimeWarning,
                        stacklevel=2,
                    )
                    warned_ridge = True

        alpha = step_length(state.f, solution.delta, state.rho, solution.sigma,
                            rho_b, rho_a, free, params)
        state.s = s
        state.f = state.f + alpha * solution.delta
        state.rho = state.rho + alpha * solution.sigma
        state.barriers = update_barriers(state.barriers, alpha, params)
        state.lam = solution.lam

        for key, value in solution.workspace.counters.items():
            counters[key] = counters.get(key, 0) + value

        w_now = eval_W(ForwardCurve(problem.grid, state.f), problem.weights)
        residuals = problem.residuals(state.f, state.rho)
        eps = float(np.max(np.abs(residuals))) if residuals.size else 0.0
        dlnw = _log_diff(w_now, w_prev)
        trace.append(IterationRecord(s, w_now, eps, state.barriers.mu_pos,
                                     state.barriers.mu_spread, alpha, dlnw))

        reason = check_termination(s, w_now, eps, state.barriers, dlnw, dlnw_prev, params)
        w_prev = w_now
        dlnw_prev = dlnw
        if reason is not None:
            termination = reason
            break

    if termination == "max_iterations":
        warnings.warn("iteration limit reached without meeting the termination criterion",
                      RuntimeWarning, stacklevel=2)

    report = SolveReport(
        termination=termination,
        iterations=len(trace),
        trace=trace,
        final_w=trace[-1].w if trace else w_prev,
        final_eps=trace[-1].eps if trace else math.inf,
        final_rho=state.rho.copy(),
        final_residuals=problem.residuals(state.f, state.rho),
        ridge=ridge,
        dp_counters=counters,
        wall_time=time.perf_counter() - t0,
    )
    return SolveResult(ForwardCurve(problem.grid, state.f), state.rho, report)
