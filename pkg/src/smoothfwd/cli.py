"""Command-line interface: build-curve, convergence, loo, scenario."""

from __future__ import annotations

import argparse
import json
import sys
from datetime import date
from pathlib import Path

from . import experiments, plots
from .curve import SmoothnessWeights, export_curve_csv
from .market import DEFAULT_NOMINAL, parse_bond_table, parse_quote_table
from .solver import SolverParams


def _load_tables(args):
    bonds = parse_bond_table(Path(args.bonds).read_text(), nominal=args.nominal)
    quotes = parse_quote_table(Path(args.quotes).read_text(), known_ids={b.bond_id for b in bonds})
    return bonds, quotes


def _load_params(args) -> SolverParams:
    if args.params:
        params = SolverParams.from_json_file(args.params)
    else:
        params = SolverParams()
    overrides = {}
    if args.strict_paper_step:
        overrides["strict_paper_step"] = True
    if getattr(args, "no_positivity", False):
        overrides["positivity_enabled"] = False
    if overrides:
        params = SolverParams.from_dict({**params.to_dict(), **overrides})
    return params


def _parse_overrides(items) -> dict:
    overrides = {}
    for item in items or []:
        if "=" not in item:
            raise SystemExit(f"--spread-override expects BOND=VALUE, got {item!r}")
        bond_id, value = item.rsplit("=", 1)
        overrides[bond_id.strip()] = float(value)
    return overrides


def _parse_date(text: str) -> date:
    return date.fromisoformat(text)


def _parse_ratio_list(text: str) -> list[float]:
    return [float("inf") if t.strip().lower() in ("inf", "infinity") else float(t)
            for t in text.split(",") if t.strip()]


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--bonds", required=True, help="bond table CSV (id,maturity,coupon_pct)")
    parser.add_argument("--quotes", required=True, help="quote table CSV (date,bond_id,rate_pct)")
    parser.add_argument("--out", default="out", help="output directory")
    parser.add_argument("--params", help="JSON file with solver parameters")
    parser.add_argument("--nominal", type=float, default=DEFAULT_NOMINAL)
    parser.add_argument("--spread-policy", choices=["symmetric", "bid-anchored"],
                        default="symmetric")
    parser.add_argument("--day-year-basis", type=float, choices=[365, 360], default=365,
                        help="days per year for grid stage lengths")
    parser.add_argument("--settlement-lag", type=int, default=0,
                        help="settlement offset in weekdays (default T+0)")
    parser.add_argument("--strict-paper-step", action="store_true",
                        help="always damp steps by beta, even fully interior ones")
    parser.add_argument("--no-plot", action="store_true", help="skip PNG figure rendering")


def _add_fit_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--date", required=True, type=_parse_date, help="trade date (yyyy-mm-dd)")
    parser.add_argument("--gamma", type=float, default=1.0, help="first-difference weight (yr^3)")
    parser.add_argument("--phi", type=float, default=0.0, help="second-difference weight (yr^5)")
    parser.add_argument("--spread", type=float, default=0.01, help="log-price spread")
    parser.add_argument("--spread-override", action="append", metavar="BOND=VAL",
                        help="per-bond spread override (repeatable)")
    parser.add_argument("--no-positivity", action="store_true")
    parser.add_argument("--extrapolation", choices=["constant", "w"], default="constant")


def cmd_build_curve(args) -> int:
    bonds, quotes = _load_tables(args)
    params = _load_params(args)
    spec = experiments.ScenarioSpec(
        trade_date=args.date,
        weights=SmoothnessWeights(args.gamma, args.phi),
        spread_default=args.spread,
        spread_overrides=_parse_overrides(args.spread_override),
        positivity=not args.no_positivity,
        extrapolation=args.extrapolation,
    )
    problem, result, market = experiments.run_scenario(
        bonds, quotes, spec, params, args.spread_policy, args.day_year_basis, args.settlement_lag
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "curve.csv").write_text(export_curve_csv(result.curve))
    report = result.report.to_dict()
    report["date"] = args.date.isoformat()
    report["bonds"] = market.bond_ids
    (out / "report.json").write_text(json.dumps(report, indent=2) + "\n")
    if not args.no_plot:
        plots.plot_curve(result.curve, out / "curve.png", problem.schedules,
                         title=f"{args.date} gamma={args.gamma:g} phi={args.phi:g} spread={args.spread:g}")
    print(f"{args.date}: {result.report.termination} after {result.report.iterations} iterations, "
          f"W={result.report.final_w:.6g}, eps={result.report.final_eps:.3g}")
    return 0 if result.report.termination in ("converged", "straight_line") else 2


def cmd_convergence(args) -> int:
    bonds, quotes = _load_tables(args)
    params = _load_params(args)
    dates = args.dates or sorted({q.trade_date for q in quotes})
    rows = []
    worst = 0
    for trade_date in dates:
        spec = experiments.ScenarioSpec(
            trade_date=trade_date,
            weights=SmoothnessWeights(args.gamma, args.phi),
            spread_default=args.spread,
            positivity=not args.no_positivity,
        )
        _, result, _ = experiments.run_scenario(
            bonds, quotes, spec, params, args.spread_policy, args.day_year_basis,
            args.settlement_lag
        )
        rows.extend(experiments.convergence_rows(result, trade_date))
        if result.report.termination == "max_iterations":
            worst = 2
        print(f"{trade_date}: {result.report.termination} in {result.report.iterations} iterations")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "convergence.csv").write_text(experiments.convergence_csv(rows))
    if not args.no_plot:
        plots.plot_convergence(rows, out / "convergence.png")
    return worst


def cmd_loo(args) -> int:
    bonds, quotes = _load_tables(args)
    params = _load_params(args)
    dates = args.dates or sorted({q.trade_date for q in quotes})
    results = experiments.run_loo(
        bonds, quotes, dates,
        sqrt_ratios=args.sqrt_ratio_grid,
        spreads=args.spread_grid,
        extrapolation=args.extrapolation,
        params=params,
        policy=args.spread_policy,
        basis=args.day_year_basis,
        settlement_lag=args.settlement_lag,
        jobs=args.jobs,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "loo.csv").write_text(experiments.loo_rows_csv(results))
    aggregates = experiments.aggregate_loo(results)
    (out / "loo_aggregates.csv").write_text(experiments.loo_aggregates_csv(aggregates))
    if not args.no_plot:
        plots.plot_loo_aggregates(aggregates, out / "loo.png")
    failed = sum(1 for r in results if r.status == "error")
    print(f"{len(results)} cells ({failed} failed) -> {out / 'loo.csv'}")
    return 0 if failed == 0 else 2


def cmd_scenario(args) -> int:
    bonds, quotes = _load_tables(args)
    params = _load_params(args)
    overrides = {b.strip(): 0.0 for b in args.tight_bonds.split(",") if b.strip()}
    patterns = [
        ("zero_spread", 0.0, {}),
        ("mixed_spread", args.loose_spread, overrides),
        ("uniform_spread", args.spread, {}),
    ]
    measures = [("df", experiments.DF_WEIGHTS), ("ad", experiments.AD_WEIGHTS)]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    lines = ["pattern,measure,positivity,termination,iterations,W,eps,min_f,max_f"]
    named_curves = []
    worst = 0
    for pattern, spread, spread_overrides in patterns:
        for measure, weights in measures:
            for positivity in (True, False):
                spec = experiments.ScenarioSpec(
                    trade_date=args.date, weights=weights, spread_default=spread,
                    spread_overrides=spread_overrides, positivity=positivity,
                )
                problem, result, _ = experiments.run_scenario(
                    bonds, quotes, spec, params, args.spread_policy,
                    args.day_year_basis, args.settlement_lag
                )
                label = f"{pattern}_{measure}_{'pos' if positivity else 'nopos'}"
                (out / f"curve_{label}.csv").write_text(export_curve_csv(result.curve))
                named_curves.append((label, result.curve))
                rep = result.report
                lines.append(",".join([
                    pattern, measure, "on" if positivity else "off", rep.termination,
                    str(rep.iterations),
                    experiments.format_float(rep.final_w),
                    experiments.format_float(rep.final_eps),
                    experiments.format_float(float(result.curve.f.min())),
                    experiments.format_float(float(result.curve.f.max())),
                ]))
                if rep.termination == "max_iterations":
                    worst = 2
                print(f"{label}: {rep.termination}, min_f={result.curve.f.min():.4g}")
    (out / "scenario_summary.csv").write_text("\n".join(lines) + "\n")
    if not args.no_plot:
        plots.plot_scenario_grid(named_curves, out / "scenario.png")
    return worst


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="smoothfwd",
        description="Positive maximum-smoothness forward-rate curves from coupon-bond quotes.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_build = sub.add_parser("build-curve", help="fit one curve and export it")
    _add_common(p_build)
    _add_fit_flags(p_build)
    p_build.set_defaults(func=cmd_build_curve)

    p_conv = sub.add_parser("convergence", help="per-iteration objective traces")
    _add_common(p_conv)
    p_conv.add_argument("--dates", type=lambda t: [_parse_date(x) for x in t.split(",")],
                        help="comma-separated trade dates (default: every quoted date)")
    p_conv.add_argument("--gamma", type=float, default=1.0)
    p_conv.add_argument("--phi", type=float, default=0.0)
    p_conv.add_argument("--spread", type=float, default=0.01)
    p_conv.add_argument("--no-positivity", action="store_true")
    p_conv.set_defaults(func=cmd_convergence)

    p_loo = sub.add_parser("loo", help="leave-one-out prediction-error sweep")
    _add_common(p_loo)
    p_loo.add_argument("--dates", type=lambda t: [_parse_date(x) for x in t.split(",")],
                       help="comma-separated trade dates (default: every quoted date)")
    p_loo.add_argument("--sqrt-ratio-grid", type=_parse_ratio_list, default=[0.0, 0.5, 1.0, 2.0, float("inf")],
                       help="comma-separated sqrt(gamma/phi) values, e.g. 0,0.5,1,2,inf")
    p_loo.add_argument("--spread-grid", type=lambda t: [float(x) for x in t.split(",")],
                       default=[0.0, 0.005, 0.01])
    p_loo.add_argument("--extrapolation", choices=["constant", "w"], default="constant")
    p_loo.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    p_loo.set_defaults(func=cmd_loo)

    p_scen = sub.add_parser("scenario", help="spread/positivity scenario suite for one date")
    _add_common(p_scen)
    p_scen.add_argument("--date", required=True, type=_parse_date)
    p_scen.add_argument("--spread", type=float, default=0.01,
                        help="uniform spread for the third pattern")
    p_scen.add_argument("--loose-spread", type=float, default=0.05,
                        help="spread on non-tight bonds in the mixed pattern")
    p_scen.add_argument("--tight-bonds", default="SO 1043,SO 1034",
                        help="comma-separated bonds pinned to zero spread in the mixed pattern")
    p_scen.set_defaults(func=cmd_scenario)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
