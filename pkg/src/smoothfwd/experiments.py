"""Experiment harness: day problems, scenario suites, LOO sweeps, extrapolation.

Everything here reduces to assembling CurveProblem instances from the bond
and quote tables and running the interior-point solver over grids of
smoothness weights and spreads, collecting delimited output rows.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from datetime import date

import numpy as np

from .curve import (
    CurveGrid,
    CurveProblem,
    ForwardCurve,
    SmoothnessWeights,
    grid_for_schedules,
    map_dates_to_stages,
    price_from_curve,
)
from .market import (
    BondSpec,
    MarketDataError,
    QuoteRow,
    add_business_days,
    coupon_schedule,
    log_price_bounds,
    price_from_quote,
)
from .solver import SolverParams, SolveResult, solve_curve

DF_WEIGHTS = SmoothnessWeights(gamma=1.0, phi=0.0)
AD_WEIGHTS = SmoothnessWeights(gamma=0.0, phi=1.0)


@dataclass(frozen=True)
class ScenarioSpec:
    """One curve-fitting configuration for a given trade date."""

    trade_date: date
    weights: SmoothnessWeights
    spread_default: float = 0.0
    spread_overrides: dict = field(default_factory=dict)
    positivity: bool = True
    extrapolation: str = "constant"  # constant | w

    def spread_for(self, bond_id: str) -> float:
        return self.spread_overrides.get(bond_id, self.spread_default)


@dataclass(frozen=True)
class LOOResult:
    trade_date: date
    bond_id: str
    sqrt_ratio: float
    spread: float
    extrapolation: str
    predicted_price: float | None
    market_price: float
    rel_error: float | None
    status: str  # converged | straight_line | max_iterations | error


@dataclass
class DayMarket:
    """Per-day constraining set: quoted bonds with schedules, prices, bounds."""

    trade_date: date
    settlement: date
    bond_ids: list[str]
    schedules: list
    prices: list[float]
    bounds: list
    nominal: float


def build_day_market(
    bonds: list[BondSpec],
    quotes: list[QuoteRow],
    trade_date: date,
    spread_for,
    policy: str = "symmetric",
    settlement_lag: int = 0,
) -> DayMarket:
    """Assemble schedules, prices and log-price bounds for one trade date.

    ``spread_for`` maps a bond id to its spread. Bonds without a quote that
    day are excluded; bonds are kept in maturity order.
    """
    quote_map = {q.bond_id: q for q in quotes if q.trade_date == trade_date}
    if not quote_map:
        raise MarketDataError(f"no quotes on {trade_date}")
    settlement = add_business_days(trade_date, settlement_lag)
    quoted = sorted((b for b in bonds if b.bond_id in quote_map), key=lambda b: b.maturity)
    if not quoted:
        raise MarketDataError(f"no quoted bonds on {trade_date}")
    nominal = quoted[0].nominal
    ids, schedules, prices, bounds = [], [], [], []
    for bond in quoted:
        flows = coupon_schedule(bond, settlement)
        price = price_from_quote(bond, quote_map[bond.bond_id], settlement)
        ids.append(bond.bond_id)
        schedules.append(map_dates_to_stages(bond.bond_id, flows, settlement))
        prices.append(price)
        bounds.append(log_price_bounds(price, bond.nominal, spread_for(bond.bond_id), policy))
    return DayMarket(trade_date, settlement, ids, schedules, prices, bounds, nominal)


def problem_from_market(
    market: DayMarket,
    weights: SmoothnessWeights,
    basis: float = 365.0,
    exclude: str | None = None,
    n_override: int | None = None,
) -> CurveProblem:
    """CurveProblem over the day's bonds, optionally leaving one out."""
    keep = [i for i, b in enumerate(market.bond_ids) if b != exclude]
    if exclude is not None and len(keep) == len(market.bond_ids):
        raise MarketDataError(f"bond {exclude!r} not in the constraining set")
    schedules = [market.schedules[i] for i in keep]
    bounds = [market.bounds[i] for i in keep]
    grid = grid_for_schedules(schedules, market.settlement, basis, n=n_override)
    return CurveProblem(grid, schedules, bounds, weights)


def run_scenario(
    bonds: list[BondSpec],
    quotes: list[QuoteRow],
    spec: ScenarioSpec,
    params: SolverParams | None = None,
    policy: str = "symmetric",
    basis: float = 365.0,
    settlement_lag: int = 0,
) -> tuple[CurveProblem, SolveResult, DayMarket]:
    """Build and solve one scenario end to end."""
    params = params or SolverParams()
    if not spec.positivity:
        params = replace(params, positivity_enabled=False)
    market = build_day_market(bonds, quotes, spec.trade_date, spec.spread_for,
                              policy, settlement_lag)
    problem = problem_from_market(market, spec.weights, basis)
    result = solve_curve(problem, params)
    return problem, result, market


def weight_grid(sqrt_ratios: list[float]) -> list[tuple[float, SmoothnessWeights]]:
    """Smoothness weights spanning the family by sqrt(gamma/phi).

    Ratios up to 1/yr vary gamma at phi = 1 yr^5; beyond 1/yr vary phi at
    gamma = 1 yr^3, with infinity mapping to the pure first-difference end.
    """
    out = []
    for s in sqrt_ratios:
        if s < 0:
            raise ValueError("sqrt ratio must be >= 0")
        if math.isinf(s):
            out.append((s, SmoothnessWeights(1.0, 0.0)))
        elif s <= 1.0:
            out.append((s, SmoothnessWeights(s * s, 1.0)))
        else:
            out.append((s, SmoothnessWeights(1.0, 1.0 / (s * s))))
    return out


def extrapolate(
    curve: ForwardCurve,
    mode: str,
    target_stage: int,
    problem: CurveProblem | None = None,
    params: SolverParams | None = None,
) -> ForwardCurve:
    """Extend the curve past its grid to target_stage.

    ``constant`` holds the last rate; ``w`` re-solves on the extended grid
    with unchanged constraints so the smoothness measure shapes the tail.
    """
    n = curve.grid.n
    if target_stage <= n:
        raise ValueError(f"target_stage {target_stage} must exceed the grid size {n}")
    if mode == "constant":
        xi_ext = np.concatenate([curve.grid.xi, np.full(target_stage - n, curve.grid.xi[-1])])
        f_ext = np.concatenate([curve.f, np.full(target_stage - n, curve.f[-1])])
        return ForwardCurve(CurveGrid(xi_ext, curve.grid.origin), f_ext)
    if mode == "w":
        if problem is None:
            raise ValueError("w-generated extrapolation needs the fitting problem")
        xi_ext = np.concatenate([problem.grid.xi, np.full(target_stage - problem.n, problem.grid.xi[-1])])
        extended = CurveProblem(CurveGrid(xi_ext, problem.grid.origin),
                                problem.schedules, problem.bounds, problem.weights)
        return solve_curve(extended, params).curve
    raise ValueError(f"unknown extrapolation mode {mode!r}")


def _loo_cell(payload):
    """One leave-one-out cell; module-level so the parallel map can pickle it."""
    (market, bond_idx, sqrt_ratio, weights, spread, mode, params, basis) = payload
    bond_id = market.bond_ids[bond_idx]
    market_price = market.prices[bond_idx]
    left_out = market.schedules[bond_idx]
    try:
        full_n = max(s.last_stage for s in market.schedules)
        reduced_n = max(s.last_stage for i, s in enumerate(market.schedules) if i != bond_idx)
        needs_tail = left_out.last_stage > reduced_n
        if needs_tail and mode == "w":
            problem = problem_from_market(market, weights, basis, exclude=bond_id, n_override=full_n)
        else:
            problem = problem_from_market(market, weights, basis, exclude=bond_id)
        result = solve_curve(problem, params)
        curve = result.curve
        if left_out.last_stage > curve.grid.n:
            curve = extrapolate(curve, "constant", left_out.last_stage)
        predicted = price_from_curve(curve, left_out, market.nominal)
        status = result.report.termination
        rel = (predicted - market_price) / market_price
    except Exception:
        return LOOResult(market.trade_date, bond_id, sqrt_ratio, spread, mode,
                         None, market_price, None, "error")
    return LOOResult(market.trade_date, bond_id, sqrt_ratio, spread, mode,
                     predicted, market_price, rel, status)


def run_loo(
    bonds: list[BondSpec],
    quotes: list[QuoteRow],
    dates: list[date],
    sqrt_ratios: list[float],
    spreads: list[float],
    extrapolation: str = "constant",
    params: SolverParams | None = None,
    policy: str = "symmetric",
    basis: float = 365.0,
    settlement_lag: int = 0,
    jobs: int = 1,
) -> list[LOOResult]:
    """Leave-one-out prediction errors over dates x bonds x weights x spreads."""
    params = params or SolverParams()
    grid = weight_grid(sqrt_ratios)
    tasks = []
    for trade_date in dates:
        for spread in spreads:
            market = build_day_market(bonds, quotes, trade_date, lambda _b: spread,
                                      policy, settlement_lag)
            if len(market.bond_ids) < 2:
                raise MarketDataError(f"need at least 2 quoted bonds on {trade_date}")
            for s, weights in grid:
                for idx in range(len(market.bond_ids)):
                    tasks.append((market, idx, s, weights, spread, extrapolation, params, basis))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_loo_cell, tasks, chunksize=4))
    else:
        results = [_loo_cell(t) for t in tasks]
    return results


def aggregate_loo(results: list[LOOResult]) -> list[dict]:
    """Mean absolute and signed relative error per (bond, ratio, spread, mode)."""
    cells: dict[tuple, list[LOOResult]] = {}
    for r in results:
        cells.setdefault((r.bond_id, r.sqrt_ratio, r.spread, r.extrapolation), []).append(r)
    rows = []
    for (bond_id, s, spread, mode), items in sorted(
        cells.items(), key=lambda kv: (kv[0][0], kv[0][1], kv[0][2], kv[0][3])
    ):
        errors = [r.rel_error for r in items if r.rel_error is not None]
        rows.append({
            "bond": bond_id,
            "sqrt_gamma_over_phi": s,
            "spread": spread,
            "extrapolation": mode,
            "mean_abs_rel_error": float(np.mean(np.abs(errors))) if errors else None,
            "mean_rel_error": float(np.mean(errors)) if errors else None,
            "n_cells": len(items),
            "n_failed": sum(1 for r in items if r.rel_error is None),
        })
    return rows


def format_float(x: float | None) -> str:
    if x is None:
        return ""
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.12g}"


def loo_rows_csv(results: list[LOOResult]) -> str:
    lines = ["date,bond,sqrt_gamma_over_phi,spread,extrapolation,rel_error,status"]
    for r in results:
        lines.append(",".join([
            r.trade_date.isoformat(),
            r.bond_id,
            format_float(r.sqrt_ratio),
            format_float(r.spread),
            r.extrapolation,
            format_float(r.rel_error),
            r.status,
        ]))
    return "\n".join(lines) + "\n"


def loo_aggregates_csv(rows: list[dict]) -> str:
    lines = ["bond,sqrt_gamma_over_phi,spread,extrapolation,mean_abs_rel_error,mean_rel_error,n_cells,n_failed"]
    for row in rows:
        lines.append(",".join([
            row["bond"],
            format_float(row["sqrt_gamma_over_phi"]),
            format_float(row["spread"]),
            row["extrapolation"],
            format_float(row["mean_abs_rel_error"]),
            format_float(row["mean_rel_error"]),
            str(row["n_cells"]),
            str(row["n_failed"]),
        ]))
    return "\n".join(lines) + "\n"


def convergence_rows(result: SolveResult, trade_date: date) -> list[dict]:
    return [
        {
            "date": trade_date.isoformat(),
            "iteration": rec.iteration,
            "w": rec.w,
            "eps": rec.eps,
            "mu_pos": rec.mu_pos,
            "mu_spread": rec.mu_spread,
            "alpha": rec.alpha,
        }
        for rec in result.report.trace
    ]


def convergence_csv(rows: list[dict]) -> str:
    lines = ["date,iteration,W,eps,mu_pos,mu_spread,alpha"]
    for row in rows:
        lines.append(",".join([
            row["date"],
            str(row["iteration"]),
            format_float(row["w"]),
            format_float(row["eps"]),
            format_float(row["mu_pos"]),
            format_float(row["mu_spread"]),
            format_float(row["alpha"]),
        ]))
    return "\n".join(lines) + "\n"
