"""The discrete forward-rate curve: daily grid, smoothness measure, pricing.

The curve is the vector f_r of instantaneous forward rates per grid stage;
a flow at stage R is worth exp(-sum_{r<R} f_r xi_r). The smoothness measure
is a weighted sum of squared first differences (weight gamma, units yr^3)
and squared second differences (weight phi, units yr^5).
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from datetime import date, timedelta

import numpy as np

from .market import CashFlowSchedule, MarketDataError


@dataclass(frozen=True)
class CurveGrid:
    """Time grid with stage lengths xi_r (years) starting at the origin date."""

    xi: np.ndarray
    origin: date

    def __post_init__(self):
        xi = np.asarray(self.xi, dtype=np.float64)
        object.__setattr__(self, "xi", xi)
        if xi.ndim != 1 or xi.size < 1:
            raise ValueError("grid needs at least one stage")
        if np.any(xi <= 0):
            raise ValueError("all stage lengths must be positive")

    @property
    def n(self) -> int:
        return int(self.xi.size)

    def stage_start_times(self) -> np.ndarray:
        """Elapsed years at the start of each stage."""
        return np.concatenate(([0.0], np.cumsum(self.xi)[:-1]))


@dataclass
class ForwardCurve:
    grid: CurveGrid
    f: np.ndarray  # per-year rates, one per stage

    def __post_init__(self):
        self.f = np.asarray(self.f, dtype=np.float64)
        if self.f.shape != (self.grid.n,):
            raise ValueError(f"forward vector must have length {self.grid.n}")


@dataclass(frozen=True)
class SmoothnessWeights:
    """gamma (yr^3) weighs first differences, phi (yr^5) second differences."""

    gamma: float
    phi: float

    def __post_init__(self):
        if self.gamma < 0 or self.phi < 0:
            raise ValueError("gamma and phi must be >= 0")
        if self.gamma + self.phi <= 0:
            raise ValueError("at least one of gamma, phi must be positive")

    @property
    def sqrt_ratio(self) -> float:
        """sqrt(gamma/phi) in 1/yr; inf at the pure first-difference end."""
        if self.phi == 0:
            return float("inf")
        return float(np.sqrt(self.gamma / self.phi))


@dataclass(frozen=True)
class ConstraintResidual:
    """Log-price consistency residual and the coupon sum v_j it involves."""

    value: float
    v_j: float


def daily_grid(origin: date, n: int, basis: float = 365.0) -> CurveGrid:
    """Uniform grid of n one-day stages, each 1/basis years long."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return CurveGrid(np.full(n, 1.0 / basis), origin)


def map_dates_to_stages(
    bond_id: str,
    flows: list[tuple[date, float]],
    origin: date,
) -> CashFlowSchedule:
    """Index cash-flow dates on the daily grid: R = 1 + days since origin."""
    stages = []
    alphas = []
    for pay_date, amount in flows:
        offset = (pay_date - origin).days
        if offset < 0:
            raise MarketDataError(f"{bond_id}: payment {pay_date} precedes grid origin {origin}")
        stages.append(1 + offset)
        alphas.append(amount)
    return CashFlowSchedule(bond_id, np.array(stages, dtype=np.int64), np.array(alphas))


def grid_for_schedules(schedules: list[CashFlowSchedule], origin: date, basis: float = 365.0,
                       n: int | None = None) -> CurveGrid:
    """Daily grid covering every schedule (n = max last stage unless extended)."""
    if not schedules and n is None:
        raise ValueError("need at least one schedule or an explicit n")
    needed = max((s.last_stage for s in schedules), default=1)
    if n is None:
        n = needed
    elif n < needed:
        raise ValueError(f"grid n={n} does not cover last cash flow at stage {needed}")
    return daily_grid(origin, n, basis)


def eval_W(curve: ForwardCurve, w: SmoothnessWeights) -> float:
    """Smoothness measure: the smaller, the smoother (0 for a flat curve)."""
    f = curve.f
    xi = curve.grid.xi
    n = f.size
    if n < 2:
        return 0.0
    slope = np.diff(f) / xi[:-1]
    total = 0.5 * w.gamma * float(np.sum(slope**2 * xi[:-1]))
    if n >= 3 and w.phi != 0.0:
        curvature = 2.0 / (xi[:-2] + xi[1:-1]) * (slope[1:] - slope[:-1])
        total += 0.5 * w.phi * float(np.sum(curvature**2 * xi[1:-1]))
    return total


def _cumulative_exponent(curve: ForwardCurve) -> np.ndarray:
    """S[k] = sum of f_r xi_r over stages 1..k, with S[0] = 0."""
    return np.concatenate(([0.0], np.cumsum(curve.f * curve.grid.xi)))


def price_from_curve(curve: ForwardCurve, sched: CashFlowSchedule, nominal: float) -> float:
    """Discount the schedule off the curve: each flow through stages 1..R-1."""
    if sched.last_stage > curve.grid.n:
        raise ValueError(
            f"{sched.bond_id}: cash flow at stage {sched.last_stage} beyond grid n={curve.grid.n}; "
            "extend the grid or extrapolate the curve first"
        )
    cum = _cumulative_exponent(curve)
    return nominal * float(np.sum(sched.alphas * np.exp(-cum[sched.stages - 1])))


def constraint_residual(curve: ForwardCurve, rho_j: float, sched: CashFlowSchedule) -> ConstraintResidual:
    """Residual of the log-price consistency equation for one bond.

    value = rho_j + sum_{r < R_last} f_r xi_r - ln(v_j); zero exactly when
    the curve reprices the bond at N exp(rho_j).
    """
    if sched.last_stage > curve.grid.n:
        raise ValueError(f"{sched.bond_id}: schedule extends beyond the grid")
    cum = _cumulative_exponent(curve)
    head = cum[sched.last_stage - 1]
    v_j = float(np.sum(sched.alphas * np.exp(head - cum[sched.stages - 1])))
    return ConstraintResidual(rho_j + head - np.log(v_j), v_j)


@dataclass(frozen=True)
class CurveProblem:
    """One day's fitting problem: grid, constraining schedules, bounds, weights."""

    grid: CurveGrid
    schedules: list[CashFlowSchedule]
    bounds: list  # list[LogPriceBounds], aligned with schedules
    weights: SmoothnessWeights

    def __post_init__(self):
        if len(self.schedules) != len(self.bounds):
            raise ValueError("schedules and bounds must align")
        for s in self.schedules:
            if s.last_stage > self.grid.n:
                raise ValueError(f"{s.bond_id}: schedule beyond grid (stage {s.last_stage} > n={self.grid.n})")

    @property
    def n(self) -> int:
        return self.grid.n

    @property
    def m(self) -> int:
        return len(self.schedules)

    def rho_bounds_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        rho_b = np.array([b.rho_b for b in self.bounds])
        rho_a = np.array([b.rho_a for b in self.bounds])
        return rho_b, rho_a

    def residuals(self, f: np.ndarray, rho: np.ndarray) -> np.ndarray:
        """Consistency residual per bond at the iterate (f, rho)."""
        curve = ForwardCurve(self.grid, f)
        return np.array([
            constraint_residual(curve, rho[j], sched).value
            for j, sched in enumerate(self.schedules)
        ])


def stage_dates(grid: CurveGrid) -> list[date]:
    """Calendar date at the start of each stage (daily grids step one day)."""
    starts = grid.stage_start_times()
    basis = 1.0 / grid.xi[0] if grid.xi.size else 365.0
    return [grid.origin + timedelta(days=round(t * basis)) for t in starts]


def export_curve_csv(curve: ForwardCurve) -> str:
    """Curve table `stage,date,t_years,f_per_year` with 12 significant digits."""
    out = io.StringIO()
    out.write("stage,date,t_years,f_per_year\n")
    dates = stage_dates(curve.grid)
    starts = curve.grid.stage_start_times()
    for r in range(curve.grid.n):
        out.write(f"{r + 1},{dates[r].isoformat()},{starts[r]:.12g},{curve.f[r]:.12g}\n")
    return out.getvalue()
