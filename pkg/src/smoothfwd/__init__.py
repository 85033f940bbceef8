"""Positive maximum-smoothness forward-rate curves from coupon-bond quotes."""

from .curve import (
    ConstraintResidual,
    CurveGrid,
    CurveProblem,
    ForwardCurve,
    SmoothnessWeights,
    constraint_residual,
    daily_grid,
    eval_W,
    export_curve_csv,
    grid_for_schedules,
    map_dates_to_stages,
    price_from_curve,
)
from .dpqp import (
    DegenerateConstraintsError,
    DPSolution,
    DPWorkspace,
    IndefiniteModelError,
    backward_pass,
    bandwidth,
    dp_solve,
    forward_pass,
    solve_multipliers,
)
from .experiments import (
    AD_WEIGHTS,
    DF_WEIGHTS,
    LOOResult,
    ScenarioSpec,
    aggregate_loo,
    build_day_market,
    extrapolate,
    problem_from_market,
    run_loo,
    run_scenario,
    weight_grid,
)
from .linearize import (
    BarrierWeights,
    InfeasibleIterateError,
    QuadraticModel,
    build_model,
    eval_Z,
)
from .market import (
    BondSpec,
    CashFlowSchedule,
    LogPriceBounds,
    MarketDataError,
    MaturedInstrumentError,
    ParseError,
    QuoteRow,
    coupon_schedule,
    daycount_30e360,
    log_price_bounds,
    parse_bond_table,
    parse_quote_table,
    price_from_quote,
    serialize_bond_table,
    serialize_quote_table,
)
from .solver import (
    InfeasibleSeedError,
    SolveReport,
    SolveResult,
    SolverParams,
    SolverState,
    check_termination,
    seed_default,
    seed_random,
    solve_curve,
    step_length,
    update_barriers,
)

__version__ = "0.1.0"
