"""Performance and risk metrics over monthly backtest output.

Ratio conventions: monthly means annualize by 12, standard deviations by
sqrt(12), and downside deviation uses the population mean with hurdle rf/12.
Zero-dispersion denominators yield signed infinities (or 0 for 0/0) and the
assembled report carries an explicit flag next to each ratio instead of a
fabricated large number.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

from .allocation_engine import downside_deviation
from .errors import DataError, DomainError

if TYPE_CHECKING:  # circular at runtime: backtest_engine assembles reports via us
    from .backtest_engine import BacktestResult

MONTHS_PER_YEAR = 12
DEFAULT_OUTLIER_CUTOFF = 10.0


def cagr(v_initial: float, v_final: float, years: float) -> float:
    """Compound annual growth rate between two portfolio values."""
    if v_initial <= 0:
        raise DomainError(f"initial value must be positive, got {v_initial}")
    if years <= 0:
        raise DomainError(f"years must be positive, got {years}")
    if v_final <= 0:
        raise DomainError(f"terminal value must be positive, got {v_final} (ruin is reported separately)")
    return (v_final / v_initial) ** (1.0 / years) - 1.0


def _ratio(excess: float, denom: float) -> float:
    if denom > 0:
        return excess / denom
    if excess == 0:
        return 0.0
    return math.inf if excess > 0 else -math.inf


def sharpe(monthly_returns: np.ndarray, rf_annual: float) -> float:
    """Annualized excess return over annualized volatility of monthly returns.

    Zero volatility returns a signed infinity; pair with sharpe_flagged when
    presenting.
    """
    arr = np.asarray(monthly_returns, dtype=float)
    if arr.size < 2:
        raise DataError(f"need at least 2 monthly returns, got {arr.size}")
    ann_mean = arr.mean() * MONTHS_PER_YEAR
    ann_std = arr.std(ddof=1) * math.sqrt(MONTHS_PER_YEAR)
    return _ratio(ann_mean - rf_annual, float(ann_std))


def sharpe_flagged(monthly_returns: np.ndarray) -> bool:
    arr = np.asarray(monthly_returns, dtype=float)
    return arr.size < 2 or float(arr.std(ddof=1)) == 0.0


def sortino_annual(monthly_returns: np.ndarray, rf_annual: float) -> float:
    """Annualized excess return over annualized downside deviation (monthly hurdle).

    A series with no below-hurdle months has zero downside deviation: the
    ratio degenerates to a signed infinity, or 0 when the excess is also zero.
    """
    arr = np.asarray(monthly_returns, dtype=float)
    if arr.size < 1:
        raise DataError("empty monthly return series")
    ann_mean = arr.mean() * MONTHS_PER_YEAR
    dd = downside_deviation(arr, rf_annual, MONTHS_PER_YEAR)
    return _ratio(ann_mean - rf_annual, dd)


def sortino_flagged(monthly_returns: np.ndarray, rf_annual: float) -> bool:
    arr = np.asarray(monthly_returns, dtype=float)
    return arr.size < 1 or downside_deviation(arr, rf_annual, MONTHS_PER_YEAR) == 0.0


def max_drawdown(equity: np.ndarray) -> float:
    """Worst peak-to-trough decline of an equity curve; 0 for a monotone rise."""
    arr = np.asarray(equity, dtype=float)
    if arr.size == 0:
        raise DataError("empty equity curve")
    if (arr <= 0).any():
        raise DataError("equity values must be positive")
    peaks = np.maximum.accumulate(arr)
    return float(((arr - peaks) / peaks).min())


def underwater(equity: np.ndarray) -> np.ndarray:
    """Drawdown at every point: distance below the running high-water mark."""
    arr = np.asarray(equity, dtype=float)
    if arr.size == 0:
        raise DataError("empty equity curve")
    peaks = np.maximum.accumulate(arr)
    return (arr - peaks) / peaks


def calmar(cagr_value: float, mdd: float) -> float:
    """CAGR over absolute maximum drawdown; flagged sentinel when mdd is zero."""
    if mdd > 0:
        raise DomainError(f"max drawdown must be <= 0, got {mdd}")
    return _ratio(cagr_value, abs(mdd))


def calmar_flagged(mdd: float) -> bool:
    return mdd == 0.0


@dataclass(frozen=True)
class AnnualRow:
    """One calendar year of the performance table."""

    year: int
    months: int
    basket_size: int
    gross: float
    friction_cost: float
    net: float
    avg_monthly: float
    ann_vol: float
    sortino: float
    sortino_flagged: bool
    win_rate: float
    max_drawdown: float


@dataclass
class MetricsReport:
    cagr: float
    ann_vol: float
    sharpe: float
    sharpe_flagged: bool
    sortino: float
    sortino_flagged: bool
    max_drawdown: float
    calmar: float
    calmar_flagged: bool
    monthly_win_rate: float
    total_gross_return: float
    total_net_return: float
    total_friction_cost: float
    friction_impact: float
    years: float
    n_periods: int
    final_equity: float
    annual_table: list[AnnualRow] = field(default_factory=list)
    avg_annual_sortino: float = 0.0
    outlier_adjusted_sortino: float = 0.0
    outlier_excluded_years: list[int] = field(default_factory=list)
    outlier_cutoff: float = DEFAULT_OUTLIER_CUTOFF


def _compound(returns: np.ndarray) -> float:
    total = 1.0
    for r in returns:
        total *= 1.0 + r
    return total - 1.0


def annual_summaries(
    result: "BacktestResult",
    rf_annual: float = 0.04,
    outlier_cutoff: float = DEFAULT_OUTLIER_CUTOFF,
) -> tuple[list[AnnualRow], float, float, list[int]]:
    """Per-calendar-year table plus average and outlier-trimmed annual Sortino.

    Periods are bucketed by the year their test window starts. The trimmed
    mean drops every annual Sortino above the cutoff (and any zero-downside
    sentinel year); the excluded years are returned so reports can print them.
    """
    buckets: dict[int, list] = {}
    for record in result.periods:
        year = record.period[2].year
        buckets.setdefault(year, []).append(record)

    rows: list[AnnualRow] = []
    for year in sorted(buckets):
        records = buckets[year]
        net = np.array([r.net_return for r in records])
        gross = np.array([r.gross_return for r in records])
        friction = float(sum(r.friction_cost for r in records))
        equity = np.concatenate([[1.0], np.cumprod(1.0 + net)])
        sizes = [r.basket.size for r in records if r.basket is not None]
        rows.append(
            AnnualRow(
                year=year,
                months=len(records),
                basket_size=max(sizes) if sizes else 0,
                gross=_compound(gross),
                friction_cost=friction,
                net=_compound(net),
                avg_monthly=float(net.mean()),
                ann_vol=float(net.std(ddof=1) * math.sqrt(MONTHS_PER_YEAR)) if net.size >= 2 else 0.0,
                sortino=sortino_annual(net, rf_annual),
                sortino_flagged=sortino_flagged(net, rf_annual),
                win_rate=float((net > 0).mean()),
                max_drawdown=max_drawdown(equity),
            )
        )

    pairs = [(row.year, row.sortino) for row in rows]
    finite = [s for _, s in pairs if math.isfinite(s)]
    avg = float(np.mean(finite)) if finite else 0.0
    trimmed, excluded = outlier_adjusted(pairs, outlier_cutoff)
    return rows, avg, trimmed, excluded


def outlier_adjusted(
    pairs: list[tuple[int, float]],
    cutoff: float = DEFAULT_OUTLIER_CUTOFF,
) -> tuple[float, list[int]]:
    """Trimmed mean of annual Sortinos: drop sentinel years and values above the cutoff.

    Takes (year, sortino) pairs; returns the mean of the surviving values and
    the sorted list of excluded years. Everything above the cutoff goes, even
    values that are merely large rather than degenerate, so the rule needs no
    judgment calls.
    """
    kept = [s for _, s in pairs if math.isfinite(s) and s <= cutoff]
    excluded = sorted(y for y, s in pairs if not math.isfinite(s) or s > cutoff)
    trimmed = float(np.mean(kept)) if kept else 0.0
    return trimmed, excluded


def compute_report(
    result: "BacktestResult",
    rf_annual: float = 0.04,
    outlier_cutoff: float = DEFAULT_OUTLIER_CUTOFF,
) -> MetricsReport:
    """Assemble the full evaluation suite from a finished backtest."""
    if not result.periods:
        raise DataError("backtest produced no periods")
    net = np.array([r.net_return for r in result.periods])
    gross = np.array([r.gross_return for r in result.periods])
    equity = np.array([v for _, v in result.equity_curve])
    years = len(net) / MONTHS_PER_YEAR
    growth = cagr(equity[0], equity[-1], years)
    mdd = max_drawdown(equity)
    rows, avg_sortino, trimmed_sortino, excluded = annual_summaries(
        result, rf_annual=rf_annual, outlier_cutoff=outlier_cutoff
    )
    return MetricsReport(
        cagr=growth,
        ann_vol=float(net.std(ddof=1) * math.sqrt(MONTHS_PER_YEAR)) if net.size >= 2 else 0.0,
        sharpe=sharpe(net, rf_annual) if net.size >= 2 else 0.0,
        sharpe_flagged=sharpe_flagged(net),
        sortino=sortino_annual(net, rf_annual),
        sortino_flagged=sortino_flagged(net, rf_annual),
        max_drawdown=mdd,
        calmar=calmar(growth, mdd),
        calmar_flagged=calmar_flagged(mdd),
        monthly_win_rate=float((net > 0).mean()),
        total_gross_return=_compound(gross),
        total_net_return=_compound(net),
        total_friction_cost=float(sum(r.friction_cost for r in result.periods)),
        friction_impact=_compound(gross) - _compound(net),
        years=years,
        n_periods=len(net),
        final_equity=float(equity[-1]),
        annual_table=rows,
        avg_annual_sortino=avg_sortino,
        outlier_adjusted_sortino=trimmed_sortino,
        outlier_excluded_years=excluded,
        outlier_cutoff=outlier_cutoff,
    )
