"""Momentum scoring and anchor selection.

Scores assets over a trailing window of daily log-returns: cumulative return
with the most recent month skipped (classic 12-1 momentum, so short-term
reversals don't pollute the trend), annualized volatility over the full
window, and their ratio as a volatility-adjusted momentum score. Anchor
selection then picks sector leaders by raw cumulative return and keeps the
three leaders with the best ratio.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .errors import DataError, ParameterError, SelectionError
from .market_data import ReturnsPanel

logger = logging.getLogger(__name__)

TRADING_DAYS_PER_YEAR = 252
DEFAULT_SKIP_DAYS = 21


@dataclass(frozen=True)
class MomentumScore:
    ticker: str
    cum_return: float
    realized_vol: float
    vam: float
    window: tuple[pd.Timestamp, pd.Timestamp] | None = None
    skip_days: int = DEFAULT_SKIP_DAYS


@dataclass(frozen=True)
class AnchorSelection:
    """Three anchors plus the full sector-leader table they were drawn from."""

    anchors: tuple[MomentumScore, MomentumScore, MomentumScore]
    sector_leaders: dict[str, MomentumScore]

    @property
    def anchor_tickers(self) -> tuple[str, str, str]:
        return tuple(s.ticker for s in self.anchors)


def cum_return(returns: np.ndarray, lookback_days: int, skip_days: int) -> float:
    """Sum of log-returns over the window, excluding the most recent skip_days.

    The series is ordered oldest to newest and its last lookback_days entries
    form the window; equals ln(P_skip / P_lookback) by telescoping.
    """
    if skip_days < 0:
        raise ParameterError(f"skip_days must be >= 0, got {skip_days}")
    if lookback_days <= skip_days:
        raise ParameterError(
            f"lookback_days ({lookback_days}) must exceed skip_days ({skip_days})"
        )
    arr = np.asarray(returns, dtype=float)
    if arr.size < lookback_days:
        raise DataError(f"need {lookback_days} returns, got {arr.size}")
    window = arr[arr.size - lookback_days : arr.size - skip_days]
    return float(window.sum())


def realized_vol(returns: np.ndarray, lookback_days: int) -> float:
    """Annualized sample standard deviation over the last lookback_days returns."""
    arr = np.asarray(returns, dtype=float)
    if lookback_days < 2:
        raise DataError(f"need at least 2 observations, got {lookback_days}")
    if arr.size < lookback_days:
        raise DataError(f"need {lookback_days} returns, got {arr.size}")
    window = arr[arr.size - lookback_days :]
    return float(window.std(ddof=1) * math.sqrt(TRADING_DAYS_PER_YEAR))


def vam_score(
    returns: np.ndarray,
    lookback_days: int,
    skip_days: int,
    ticker: str = "",
    window: tuple[pd.Timestamp, pd.Timestamp] | None = None,
) -> MomentumScore:
    """Volatility-adjusted momentum: cumulative return over realized volatility.

    Zero volatility cannot be ranked by division, so: flat series score 0,
    and a drifting series with zero dispersion gets a signed infinity so it
    sorts beyond every finite score.
    """
    cum = cum_return(returns, lookback_days, skip_days)
    vol = realized_vol(returns, lookback_days)
    if vol > 0:
        vam = cum / vol
    elif cum == 0:
        vam = 0.0
    else:
        vam = math.inf if cum > 0 else -math.inf
    return MomentumScore(
        ticker=ticker,
        cum_return=cum,
        realized_vol=vol,
        vam=vam,
        window=window,
        skip_days=skip_days,
    )


def score_panel(
    panel: ReturnsPanel,
    lookback_days: int,
    skip_days: int,
) -> dict[str, MomentumScore]:
    """Score every asset with a complete trailing window in the panel.

    Assets missing any return in the last lookback_days rows (not yet listed,
    already delisted, or too young) are skipped rather than scored on partial
    data.
    """
    frame = panel.frame
    if frame.shape[0] < lookback_days:
        raise DataError(
            f"panel has {frame.shape[0]} rows, selection window needs {lookback_days}"
        )
    tail = frame.iloc[frame.shape[0] - lookback_days :]
    window = (tail.index[0], tail.index[-1])
    scores: dict[str, MomentumScore] = {}
    for ticker in frame.columns:
        col = tail[ticker].to_numpy()
        if np.isnan(col).any():
            continue
        scores[ticker] = vam_score(col, lookback_days, skip_days, ticker=ticker, window=window)
    return scores


def _vam_sort_key(score: MomentumScore) -> tuple[float, str]:
    # -vam ranks descending; ticker breaks exact ties deterministically
    return (-score.vam, score.ticker)


def select_anchors(
    panel: ReturnsPanel,
    sectors: dict[str, str],
    lookback_days: int,
    skip_days: int,
) -> AnchorSelection:
    """Pick the anchor triad: one leader per sector by raw cumulative return,
    then the three leaders with the highest volatility-adjusted score.

    Leadership uses cumulative return, not the adjusted score, so a high-beta
    name that out-ran its sector stays the leader even when a quieter name has
    the better ratio. Ties break lexicographically by ticker.
    """
    scores = score_panel(panel, lookback_days, skip_days)
    by_sector: dict[str, list[MomentumScore]] = {}
    for ticker, score in scores.items():
        sector = sectors.get(ticker)
        if sector is None:
            logger.warning("no sector for %s; excluded from anchor selection", ticker)
            continue
        by_sector.setdefault(sector, []).append(score)

    if len(by_sector) < 3:
        raise SelectionError(
            f"anchor selection needs >= 3 sectors with scoreable assets, found {len(by_sector)}"
        )

    leaders: dict[str, MomentumScore] = {}
    for sector in sorted(by_sector):
        members = by_sector[sector]
        leaders[sector] = min(members, key=lambda s: (-s.cum_return, s.ticker))

    ranked = sorted(leaders.values(), key=_vam_sort_key)
    anchors = tuple(ranked[:3])
    return AnchorSelection(anchors=anchors, sector_leaders=leaders)
