"""Bond descriptions, daily quote tables and their conversion to log-price bounds.

Quoted rates are turned into dirty prices with the ISMA 30E/360 convention;
prices are then mapped to an admissible log-price interval [rho_b, rho_a]
whose width is the configured spread.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from datetime import date, timedelta

import numpy as np

DEFAULT_NOMINAL = 40_000_000.0  # SEK


class MarketDataError(ValueError):
    """Invalid market data (bad bond, quote or date)."""


class ParseError(MarketDataError):
    """Malformed CSV input; carries the offending line number."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class MaturedInstrumentError(MarketDataError):
    """Settlement on or after maturity: no cash flows remain."""


@dataclass(frozen=True)
class BondSpec:
    """Static description of an annual-coupon bullet bond."""

    bond_id: str
    maturity: date
    coupon_rate: float  # percent per annum
    nominal: float = DEFAULT_NOMINAL

    def __post_init__(self):
        if self.coupon_rate < 0:
            raise MarketDataError(f"{self.bond_id}: coupon_rate must be >= 0")
        if self.nominal <= 0:
            raise MarketDataError(f"{self.bond_id}: nominal must be > 0")


@dataclass(frozen=True)
class QuoteRow:
    """One (trade date, bond) quoted rate in percent per annum."""

    trade_date: date
    bond_id: str
    quoted_rate: float

    def __post_init__(self):
        if not math.isfinite(self.quoted_rate):
            raise MarketDataError(f"{self.bond_id}: quoted rate must be finite")


@dataclass(frozen=True)
class LogPriceBounds:
    """Admissible log-price interval ln(P_bid/N) <= rho <= ln(P_ask/N)."""

    rho_b: float
    rho_a: float

    def __post_init__(self):
        if self.rho_b > self.rho_a:
            raise MarketDataError("rho_b must not exceed rho_a")

    @property
    def spread(self) -> float:
        return self.rho_a - self.rho_b

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.rho_a + self.rho_b)


@dataclass(frozen=True)
class CashFlowSchedule:
    """A bond's cash flows mapped onto the curve grid.

    ``stages`` are 1-based grid indices R_i (a flow at stage R is discounted
    through stages 1..R-1); ``alphas`` are flows normalized by the nominal,
    with the final entry carrying principal plus last coupon (1 + c/100).
    """

    bond_id: str
    stages: np.ndarray  # int64, strictly increasing
    alphas: np.ndarray  # float64, > 0

    def __post_init__(self):
        stages = np.asarray(self.stages, dtype=np.int64)
        alphas = np.asarray(self.alphas, dtype=np.float64)
        object.__setattr__(self, "stages", stages)
        object.__setattr__(self, "alphas", alphas)
        if stages.shape != alphas.shape or stages.ndim != 1 or stages.size == 0:
            raise MarketDataError(f"{self.bond_id}: schedule arrays must be 1-d, nonempty, same length")
        if np.any(np.diff(stages) <= 0):
            raise MarketDataError(f"{self.bond_id}: stages must be strictly increasing")
        if stages[0] < 1:
            raise MarketDataError(f"{self.bond_id}: stages are 1-based")
        if np.any(alphas <= 0):
            raise MarketDataError(f"{self.bond_id}: all normalized flows must be positive")

    @property
    def n_payments(self) -> int:
        return int(self.stages.size)

    @property
    def last_stage(self) -> int:
        return int(self.stages[-1])


def daycount_30e360(d1: date, d2: date) -> float:
    """ISMA 30E/360 year fraction between two dates (signed).

    Day 31 is clamped to 30 on both ends.
    """
    day1 = min(d1.day, 30)
    day2 = min(d2.day, 30)
    return (d2.year - d1.year) + (30 * (d2.month - d1.month) + (day2 - day1)) / 360.0


def _years_earlier(d: date, k: int) -> date:
    # Feb 29 anniversaries clamp to Feb 28 in non-leap years.
    try:
        return d.replace(year=d.year - k)
    except ValueError:
        return d.replace(year=d.year - k, day=28)


def add_business_days(d: date, k: int) -> date:
    """Step k weekdays forward (no holiday calendar)."""
    step = 0
    while step < k:
        d += timedelta(days=1)
        if d.weekday() < 5:
            step += 1
    return d


def coupon_schedule(bond: BondSpec, settlement: date) -> list[tuple[date, float]]:
    """Remaining cash-flow dates and nominal-normalized amounts.

    Coupon dates are whole-year anniversaries of the maturity; only dates
    strictly after settlement remain. The final flow is 1 + c/100.
    """
    if settlement >= bond.maturity:
        raise MaturedInstrumentError(
            f"{bond.bond_id}: matured instrument (settlement {settlement} >= maturity {bond.maturity})"
        )
    coupon = bond.coupon_rate / 100.0
    flows: list[tuple[date, float]] = []
    k = 0
    while True:
        pay_date = _years_earlier(bond.maturity, k)
        if pay_date <= settlement:
            break
        flows.append((pay_date, coupon if k > 0 else 1.0 + coupon))
        k += 1
    flows.reverse()
    return flows


def price_from_quote(bond: BondSpec, quote: QuoteRow, settlement: date) -> float:
    """Dirty price implied by a quoted annually-compounded rate.

    P = sum_i (c/100 + [i==last]) * N / (1 + r/100)^dT_i with dT_i the
    ISMA 30E/360 year fraction from settlement to the payment date.
    """
    if quote.quoted_rate <= -100.0:
        raise MarketDataError(f"{bond.bond_id}: quoted rate must exceed -100%")
    flows = coupon_schedule(bond, settlement)
    base = 1.0 + quote.quoted_rate / 100.0
    price = 0.0
    for pay_date, amount in flows:
        dt = daycount_30e360(settlement, pay_date)
        price += amount * bond.nominal / base**dt
    return price


def log_price_bounds(
    price: float,
    nominal: float,
    spread: float,
    policy: str = "symmetric",
) -> LogPriceBounds:
    """Bid/ask log-price interval around a single quoted price.

    ``symmetric`` centers the interval on ln(P/N); ``bid-anchored`` puts the
    quote at the bid.
    """
    if price <= 0:
        raise MarketDataError("price must be positive")
    if spread < 0:
        raise MarketDataError("spread must be >= 0")
    rho_mid = math.log(price / nominal)
    if policy == "symmetric":
        return LogPriceBounds(rho_mid - 0.5 * spread, rho_mid + 0.5 * spread)
    if policy == "bid-anchored":
        return LogPriceBounds(rho_mid, rho_mid + spread)
    raise MarketDataError(f"unknown spread policy {policy!r}")


def _parse_date_iso(text: str, line_no: int) -> date:
    try:
        return date.fromisoformat(text.strip())
    except ValueError:
        raise ParseError(line_no, f"expected yyyy-mm-dd date, got {text!r}") from None


def _parse_date_flexible(text: str, line_no: int) -> date:
    text = text.strip()
    parts = text.split("/")
    if len(parts) == 3:
        try:
            d, m, y = (int(p) for p in parts)
            return date(y, m, d)
        except ValueError:
            raise ParseError(line_no, f"invalid dd/mm/yyyy date {text!r}") from None
    return _parse_date_iso(text, line_no)


def _parse_float(text: str, line_no: int, what: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ParseError(line_no, f"invalid {what} {text!r}") from None
    if not math.isfinite(value):
        raise ParseError(line_no, f"{what} must be finite, got {text!r}")
    return value


def parse_bond_table(text: str, nominal: float = DEFAULT_NOMINAL) -> list[BondSpec]:
    """Parse a `id,maturity,coupon_pct` CSV (maturity dd/mm/yyyy or ISO)."""
    reader = csv.reader(io.StringIO(text))
    bonds: list[BondSpec] = []
    seen: set[str] = set()
    for line_no, row in enumerate(reader, start=1):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if line_no == 1 and [c.strip().lower() for c in row] == ["id", "maturity", "coupon_pct"]:
            continue
        if len(row) != 3:
            raise ParseError(line_no, f"expected 3 columns, got {len(row)}")
        bond_id = row[0].strip()
        if not bond_id:
            raise ParseError(line_no, "empty bond id")
        if bond_id in seen:
            raise ParseError(line_no, f"duplicate bond id {bond_id!r}")
        seen.add(bond_id)
        maturity = _parse_date_flexible(row[1], line_no)
        coupon = _parse_float(row[2], line_no, "coupon")
        if coupon < 0:
            raise ParseError(line_no, "coupon must be >= 0")
        bonds.append(BondSpec(bond_id, maturity, coupon, nominal))
    return bonds


def parse_quote_table(text: str, known_ids: set[str] | None = None) -> list[QuoteRow]:
    """Parse a `date,bond_id,rate_pct` CSV (ISO dates).

    When ``known_ids`` is given, quotes for unknown bonds are rejected.
    Duplicate (date, bond) pairs are an error.
    """
    reader = csv.reader(io.StringIO(text))
    rows: list[QuoteRow] = []
    seen: set[tuple[date, str]] = set()
    for line_no, row in enumerate(reader, start=1):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if line_no == 1 and [c.strip().lower() for c in row] == ["date", "bond_id", "rate_pct"]:
            continue
        if len(row) != 3:
            raise ParseError(line_no, f"expected 3 columns, got {len(row)}")
        trade_date = _parse_date_iso(row[0], line_no)
        bond_id = row[1].strip()
        if not bond_id:
            raise ParseError(line_no, "empty bond id")
        if known_ids is not None and bond_id not in known_ids:
            raise ParseError(line_no, f"unknown bond id {bond_id!r}")
        key = (trade_date, bond_id)
        if key in seen:
            raise ParseError(line_no, f"duplicate quote for {bond_id!r} on {trade_date}")
        seen.add(key)
        rate = _parse_float(row[2], line_no, "rate")
        rows.append(QuoteRow(trade_date, bond_id, rate))
    return rows


def serialize_bond_table(bonds: list[BondSpec]) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["id", "maturity", "coupon_pct"])
    for b in bonds:
        writer.writerow([b.bond_id, f"{b.maturity.day:02d}/{b.maturity.month:02d}/{b.maturity.year:04d}", f"{b.coupon_rate:g}"])
    return out.getvalue()


def serialize_quote_table(rows: list[QuoteRow]) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["date", "bond_id", "rate_pct"])
    for q in rows:
        writer.writerow([q.trade_date.isoformat(), q.bond_id, f"{q.quoted_rate:g}"])
    return out.getvalue()
