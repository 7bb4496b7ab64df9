"""Nested walk-forward simulation.

Outer cycle: at the first rebalance of each calendar year (and at run start)
the basket is rebuilt from scratch: sector-leader anchors, momentum gate,
greedy diversifier selection, all on the trailing selection window. Inner
cycle: at every rebalance the allocator re-optimizes over the basket members
still trading, trained on the trailing allocation window, and the weights are
held through the test period. Every window is a positional slice ending at the
rebalance row, so no value after a period's test_end can influence that
period; the mutation test in the acceptance suite checks this bit-for-bit.

Friction is proportional to turnover (including the initial all-cash
deployment, turnover exactly 1), and net return is gross minus friction by
construction. Cash earns nothing. An asset that stops trading mid-period
realizes its return to its final print and sits in cash until the next
rebalance, after which it simply never re-enters a candidate window.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from datetime import date as dt_date

import numpy as np
import pandas as pd

from . import metrics as metrics_mod
from .allocation_engine import AllocationProblem, WeightVector, optimize
from .errors import ConfigError, DataError, EmptyPanelError, SelectionError
from .immunisation import Basket, momentum_gate, select_diversifiers
from .market_data import AssetMeta, PricePanel, ReturnsPanel, log_returns
from .signal_engine import score_panel, select_anchors

logger = logging.getLogger(__name__)

TRADING_DAYS_PER_MONTH = 21


@dataclass
class BacktestConfig:
    selection_lookback_months: int = 12
    allocation_lookback_months: int = 3
    rebalance_frequency_months: int = 1
    skip_days: int = 21
    target_basket_size: int = 50
    diversifier_count: int = 47
    friction_bps: float = 10.0
    rf_annual: float = 0.04
    cap: float = 0.05
    start_date: dt_date | None = None
    end_date: dt_date | None = None
    relax_cap: bool = False
    min_points: int = 20
    trading_days_per_month: int = TRADING_DAYS_PER_MONTH
    epsilon: float = 1e-9
    solver_maxiter: int = 200
    solver_ftol: float = 1e-9
    outlier_sortino_cutoff: float = 10.0

    def validate(self) -> None:
        if self.diversifier_count + 3 != self.target_basket_size:
            raise ConfigError(
                f"diversifier_count {self.diversifier_count} + 3 anchors != "
                f"target_basket_size {self.target_basket_size}"
            )
        if self.friction_bps < 0:
            raise ConfigError("friction_bps must be >= 0")
        if self.selection_lookback_months < 1 or self.allocation_lookback_months < 1:
            raise ConfigError("lookbacks must be >= 1 month")
        if self.rebalance_frequency_months < 1:
            raise ConfigError("rebalance frequency must be >= 1 month")
        if self.skip_days < 0:
            raise ConfigError("skip_days must be >= 0")
        if self.skip_days >= self.selection_lookback_months * self.trading_days_per_month:
            raise ConfigError("skip_days consumes the whole selection window")
        if not 0 < self.cap <= 1:
            raise ConfigError(f"cap must be in (0, 1], got {self.cap}")

    @property
    def selection_days(self) -> int:
        return self.selection_lookback_months * self.trading_days_per_month

    @property
    def allocation_days(self) -> int:
        return self.allocation_lookback_months * self.trading_days_per_month

    @property
    def friction_rate(self) -> float:
        return self.friction_bps / 10_000.0


@dataclass
class PeriodRecord:
    period: tuple[pd.Timestamp, pd.Timestamp, pd.Timestamp, pd.Timestamp]
    weights: WeightVector | None
    gross_return: float
    turnover: float
    friction_cost: float
    net_return: float
    basket: Basket | None
    cash_period: bool = False
    delistings: list[str] = field(default_factory=list)
    diagnostic: str = ""

    @property
    def test_start(self) -> pd.Timestamp:
        return self.period[2]

    @property
    def test_end(self) -> pd.Timestamp:
        return self.period[3]

    @property
    def weight_map(self) -> dict[str, float]:
        return self.weights.weights if self.weights is not None else {}


@dataclass
class BacktestResult:
    strategy: str
    periods: list[PeriodRecord]
    equity_curve: list[tuple[pd.Timestamp, float]]
    weights_history: list[tuple[pd.Timestamp, dict[str, float]]]
    annual_summaries: list[metrics_mod.AnnualRow]
    warnings: list[str]


def turnover(prev: dict[str, float] | WeightVector, new: dict[str, float] | WeightVector) -> float:
    """Sum of absolute weight changes over the union of tickers (missing = 0)."""
    pw = prev.weights if isinstance(prev, WeightVector) else prev
    nw = new.weights if isinstance(new, WeightVector) else new
    tickers = sorted(set(pw) | set(nw))  # fixed order: float sums must not depend on hash seed
    return float(sum(abs(nw.get(t, 0.0) - pw.get(t, 0.0)) for t in tickers))


def handle_delisting(
    basket: Basket | None,
    weights: WeightVector | dict[str, float],
    panel: PricePanel,
    period: tuple[pd.Timestamp, pd.Timestamp],
) -> tuple[dict[str, float], float, list[str]]:
    """Realize one test period's gross return under the delisting rule.

    Each position earns the simple return from the period's first trading day
    to its own last available price within the period; a position with no
    further prices contributes zero (cash from day one). Returns the surviving
    weights (delisted names dropped to cash), the portfolio gross return, and
    the names that stopped trading.
    """
    weight_map = weights.weights if isinstance(weights, WeightVector) else weights
    test_start, test_end = period
    frame = panel.frame
    gross = 0.0
    survivors: dict[str, float] = {}
    delisted: list[str] = []
    for ticker in sorted(weight_map):
        w = weight_map[ticker]
        if w == 0.0:
            continue
        col = frame[ticker]
        start_price = col.loc[test_start] if test_start in col.index else np.nan
        window = col.loc[(col.index > test_start) & (col.index <= test_end)].dropna()
        if np.isnan(start_price) or window.empty:
            delisted.append(ticker)
            continue  # contributes 0: cash from day one
        end_price = float(window.iloc[-1])
        gross += w * (end_price / float(start_price) - 1.0)
        if window.index[-1] < test_end or pd.isna(col.loc[test_end]):
            delisted.append(ticker)
        else:
            survivors[ticker] = w
    return survivors, gross, delisted


@dataclass
class RebalanceContext:
    """Everything a strategy may look at when setting weights: data up to and
    including the rebalance row, never beyond."""

    config: BacktestConfig
    panel: PricePanel
    returns: ReturnsPanel
    position: int
    date: pd.Timestamp
    is_selection_date: bool

    def selection_returns(self) -> ReturnsPanel:
        """Trailing selection window of log-returns ending at the rebalance row."""
        days = self.config.selection_days
        frame = self.returns.frame.iloc[self.position - days + 1 : self.position + 1]
        return ReturnsPanel(frame=frame, active_windows=self.returns.active_windows)

    def training_prices(self, tickers: list[str]) -> pd.DataFrame:
        """Trailing allocation window of prices (allocation_days + 1 rows)."""
        days = self.config.allocation_days
        return self.panel.frame[tickers].iloc[self.position - days : self.position + 1]


class Strategy:
    """Weight provider interface for the walk-forward loop."""

    label = "abstract"

    def weights_for(self, ctx: RebalanceContext) -> tuple[WeightVector | None, Basket | None, str]:
        """Return (weights, basket, diagnostic); None weights puts the period in cash."""
        raise NotImplementedError


class AegisStrategy(Strategy):
    """Annual basket reselection plus per-rebalance downside-risk optimization."""

    label = "aegis"

    def __init__(self, config: BacktestConfig, sectors: dict[str, str]):
        self.config = config
        self.sectors = sectors
        self.basket: Basket | None = None

    def _reselect(self, ctx: RebalanceContext) -> str:
        window = ctx.selection_returns()
        cfg = self.config
        try:
            anchors = select_anchors(window, self.sectors, cfg.selection_days, cfg.skip_days)
        except (SelectionError, DataError) as exc:
            self.basket = None
            return f"selection failed: {exc}"
        scores = score_panel(window, cfg.selection_days, cfg.skip_days)
        anchor_set = set(anchors.anchor_tickers)
        pool = [scores[t] for t in sorted(scores) if t not in anchor_set]
        gated = momentum_gate(pool)
        self.basket = select_diversifiers(
            anchors.anchor_tickers, gated, window, cfg.target_basket_size
        )
        return ""

    def weights_for(self, ctx: RebalanceContext) -> tuple[WeightVector | None, Basket | None, str]:
        diag = ""
        if ctx.is_selection_date or self.basket is None:
            diag = self._reselect(ctx)
        if self.basket is None:
            return None, None, diag or "no basket"
        cfg = self.config
        prices = ctx.training_prices(self.basket.members)
        live = [t for t in self.basket.members if not prices[t].isna().any()]
        if not live:
            return None, self.basket, "no basket member has a complete training window"
        train = prices[live].to_numpy()
        rets = train[1:] / train[:-1] - 1.0
        problem = AllocationProblem(
            asset_returns=rets,
            tickers=live,
            risk_free_annual=cfg.rf_annual,
            cap=cfg.cap,
            trading_days=252,
            epsilon=cfg.epsilon,
        )
        vec = optimize(
            problem,
            relax_cap=cfg.relax_cap,
            maxiter=cfg.solver_maxiter,
            ftol=cfg.solver_ftol,
        )
        return vec, self.basket, diag


def _clip_panel(panel: PricePanel, start: dt_date | None, end: dt_date | None) -> PricePanel:
    frame = panel.frame
    if start is not None:
        frame = frame.loc[frame.index >= pd.Timestamp(start)]
    if end is not None:
        frame = frame.loc[frame.index <= pd.Timestamp(end)]
    if frame.empty:
        raise EmptyPanelError("no panel rows inside the configured date range")
    windows: dict[str, tuple[pd.Timestamp, pd.Timestamp]] = {}
    keep: list[str] = []
    for ticker in frame.columns:
        col = frame[ticker]
        first, last = col.first_valid_index(), col.last_valid_index()
        if first is None:
            continue
        keep.append(ticker)
        windows[ticker] = (first, last)
    if not keep:
        raise EmptyPanelError("no asset has data inside the configured date range")
    return PricePanel(frame=frame[keep], active_windows=windows)


def _rebalance_positions(dates: pd.DatetimeIndex, config: BacktestConfig) -> list[int]:
    month_starts: list[int] = []
    prev_key = None
    for i, ts in enumerate(dates):
        key = (ts.year, ts.month)
        if key != prev_key:
            month_starts.append(i)
            prev_key = key
    warm = max(config.selection_days, config.allocation_days)
    eligible = [p for p in month_starts if p >= warm]
    return eligible[:: config.rebalance_frequency_months]


def run_strategy(config: BacktestConfig, panel: PricePanel, strategy: Strategy) -> BacktestResult:
    """Drive any weight strategy through the walk-forward protocol."""
    config.validate()
    clipped = _clip_panel(panel, config.start_date, config.end_date)
    returns = log_returns(clipped)
    dates = clipped.frame.index
    rebalances = _rebalance_positions(dates, config)
    if not rebalances or rebalances[-1] >= len(dates) - 1:
        rebalances = rebalances[:-1] if rebalances and rebalances[-1] >= len(dates) - 1 else rebalances
    if not rebalances:
        raise DataError(
            "panel too short: no rebalance date clears the selection warm-up"
        )

    warnings: list[str] = []
    periods: list[PeriodRecord] = []
    weights_history: list[tuple[pd.Timestamp, dict[str, float]]] = []
    equity_curve: list[tuple[pd.Timestamp, float]] = [(dates[rebalances[0]], 1.0)]
    equity = 1.0
    prev_weights: dict[str, float] = {}
    prev_year: int | None = None
    friction_rate = config.friction_rate

    for k, p in enumerate(rebalances):
        q = rebalances[k + 1] if k + 1 < len(rebalances) else len(dates) - 1
        if q <= p:
            continue
        ts, te = dates[p], dates[q]
        is_selection = prev_year is None or ts.year != prev_year
        prev_year = ts.year
        ctx = RebalanceContext(
            config=config,
            panel=clipped,
            returns=returns,
            position=p,
            date=ts,
            is_selection_date=is_selection,
        )
        vec, basket, diag = strategy.weights_for(ctx)
        if diag:
            warnings.append(f"{ts.date()}: {diag}")
            logger.info("%s: %s", ts.date(), diag)
        target = vec.weights if vec is not None else {}
        turn = turnover(prev_weights, target)
        friction = friction_rate * turn
        _, gross, delisted = handle_delisting(basket, target, clipped, (ts, te))
        net = gross - friction
        equity = equity * (1.0 + net)
        train_start = dates[p - config.allocation_days]
        periods.append(
            PeriodRecord(
                period=(train_start, ts, ts, te),
                weights=vec,
                gross_return=gross,
                turnover=turn,
                friction_cost=friction,
                net_return=net,
                basket=basket,
                cash_period=vec is None,
                delistings=delisted,
                diagnostic=diag,
            )
        )
        equity_curve.append((te, equity))
        weights_history.append((ts, dict(target)))
        prev_weights = target

    if not periods:
        raise DataError("no test periods produced; check dates and rebalance frequency")

    result = BacktestResult(
        strategy=strategy.label,
        periods=periods,
        equity_curve=equity_curve,
        weights_history=weights_history,
        annual_summaries=[],
        warnings=warnings,
    )
    result.annual_summaries = metrics_mod.annual_summaries(
        result, rf_annual=config.rf_annual, outlier_cutoff=config.outlier_sortino_cutoff
    )[0]
    return result


def run(config: BacktestConfig, panel: PricePanel, meta: dict[str, AssetMeta]) -> BacktestResult:
    """Full pipeline run: annual selection, monthly optimization, walk-forward."""
    sectors = {t: m.sector for t, m in meta.items()}
    return run_strategy(config, panel, AegisStrategy(config, sectors))
