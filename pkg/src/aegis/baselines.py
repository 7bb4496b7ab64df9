"""Comparison strategies run under the identical walk-forward protocol.

Three reference books: plain cross-sectional momentum (rank by trailing
cumulative return, hold the top fraction equal-weighted), a two-asset
stock/bond inverse-volatility book, and a naive equal-weight book. Each one
plugs into the same loop, friction model, and metrics as the main strategy,
so comparisons differ only in how weights are chosen.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .allocation_engine import WeightVector
from .backtest_engine import RebalanceContext, Strategy
from .errors import ConfigError, DataError
from .market_data import ReturnsPanel
from .signal_engine import cum_return

logger = logging.getLogger(__name__)

DEFAULT_CSM_TOP_FRACTION = 0.10
DEFAULT_RP_VOL_LOOKBACK_MONTHS = 3
LEG_WEIGHT_CAP = 0.99

BASELINE_KINDS = ("csm", "risk_parity", "equal_weight")


@dataclass
class BaselineConfig:
    kind: str = "csm"
    csm_top_fraction: float = DEFAULT_CSM_TOP_FRACTION
    rp_vol_lookback_months: int = DEFAULT_RP_VOL_LOOKBACK_MONTHS
    stock_proxy: str = "SPXPROXY"
    bond_proxy: str = "AGGPROXY"

    def validate(self) -> None:
        if self.kind not in BASELINE_KINDS:
            raise ConfigError(
                f"unknown baseline {self.kind!r}; expected one of {', '.join(BASELINE_KINDS)}"
            )
        if not 0 < self.csm_top_fraction <= 1:
            raise ConfigError(f"csm_top_fraction must be in (0, 1], got {self.csm_top_fraction}")
        if self.rp_vol_lookback_months < 1:
            raise ConfigError("rp_vol_lookback_months must be >= 1")


def _complete_columns(returns: ReturnsPanel) -> list[str]:
    frame = returns.frame
    return [t for t in frame.columns if not frame[t].isna().to_numpy().any()]


def csm_weights(
    returns: ReturnsPanel,
    top_fraction: float = DEFAULT_CSM_TOP_FRACTION,
    skip_days: int = 21,
) -> WeightVector | None:
    """Equal weights over the top fraction of assets by skip-adjusted cumulative return.

    Only assets with a complete return window are ranked. Ties at the cutoff
    break lexicographically, so the selected set is deterministic. Returns
    None when no asset qualifies (the period sits in cash).
    """
    if not 0 < top_fraction <= 1:
        raise ConfigError(f"top_fraction must be in (0, 1], got {top_fraction}")
    candidates = _complete_columns(returns)
    if not candidates:
        return None
    window = len(returns.frame.index)
    scores = {
        t: cum_return(returns.frame[t].to_numpy(), window, skip_days) for t in candidates
    }
    count = max(1, math.floor(len(candidates) * top_fraction))
    ranked = sorted(scores, key=lambda t: (-scores[t], t))
    chosen = ranked[:count]
    w = 1.0 / count
    return WeightVector(
        weights={t: w for t in chosen},
        objective_value=0.0,
        converged=True,
        iterations=0,
        effective_cap=1.0,
        start_label="csm",
    )


def risk_parity_weights(
    stock_proxy: pd.Series,
    bond_proxy: pd.Series,
    lookback_days: int,
    labels: tuple[str, str] = ("STOCK", "BOND"),
) -> WeightVector:
    """Two-leg inverse-volatility weights over the trailing look-back.

    A leg whose volatility is zero (or small enough that its raw share exceeds
    the cap) is held at 0.99 with the remaining 0.01 in the other leg, keeping
    the book fully invested without a division blow-up.
    """
    legs = []
    for series, label in ((stock_proxy, labels[0]), (bond_proxy, labels[1])):
        values = series.dropna().to_numpy(dtype=float)
        if values.size < lookback_days:
            raise DataError(
                f"{label}: {values.size} returns < look-back {lookback_days}"
            )
        window = values[-lookback_days:]
        legs.append(float(np.std(window, ddof=1)))
    vol_s, vol_b = legs
    if vol_s == 0.0 and vol_b == 0.0:
        share_s = 0.5
    elif vol_s == 0.0:
        share_s = LEG_WEIGHT_CAP
    elif vol_b == 0.0:
        share_s = 1.0 - LEG_WEIGHT_CAP
    else:
        share_s = (1.0 / vol_s) / (1.0 / vol_s + 1.0 / vol_b)
        share_s = min(max(share_s, 1.0 - LEG_WEIGHT_CAP), LEG_WEIGHT_CAP)
    return WeightVector(
        weights={labels[0]: share_s, labels[1]: 1.0 - share_s},
        objective_value=0.0,
        converged=True,
        iterations=0,
        effective_cap=LEG_WEIGHT_CAP,
        start_label="risk-parity",
    )


def equal_weights(returns: ReturnsPanel) -> WeightVector | None:
    """1/N over every asset with a complete return window; None if there are none."""
    candidates = _complete_columns(returns)
    if not candidates:
        return None
    w = 1.0 / len(candidates)
    return WeightVector(
        weights={t: w for t in candidates},
        objective_value=0.0,
        converged=True,
        iterations=0,
        effective_cap=1.0,
        start_label="equal-weight",
    )


class CsmStrategy(Strategy):
    label = "csm"

    def __init__(self, baseline: BaselineConfig):
        baseline.validate()
        self.baseline = baseline

    def weights_for(self, ctx: RebalanceContext) -> tuple[WeightVector | None, None, str]:
        vec = csm_weights(
            ctx.selection_returns(),
            top_fraction=self.baseline.csm_top_fraction,
            skip_days=ctx.config.skip_days,
        )
        diag = "" if vec is not None else "no asset has a complete ranking window"
        return vec, None, diag


class RiskParityStrategy(Strategy):
    label = "risk_parity"

    def __init__(self, baseline: BaselineConfig):
        baseline.validate()
        self.baseline = baseline

    def weights_for(self, ctx: RebalanceContext) -> tuple[WeightVector | None, None, str]:
        frame = ctx.returns.frame
        missing = [
            c for c in (self.baseline.stock_proxy, self.baseline.bond_proxy)
            if c not in frame.columns
        ]
        if missing:
            raise DataError(f"risk-parity proxy column missing: {', '.join(missing)}")
        lookback = self.baseline.rp_vol_lookback_months * ctx.config.trading_days_per_month
        window = frame.iloc[: ctx.position + 1]
        vec = risk_parity_weights(
            window[self.baseline.stock_proxy],
            window[self.baseline.bond_proxy],
            lookback,
            labels=(self.baseline.stock_proxy, self.baseline.bond_proxy),
        )
        return vec, None, ""


class EqualWeightStrategy(Strategy):
    label = "equal_weight"

    def weights_for(self, ctx: RebalanceContext) -> tuple[WeightVector | None, None, str]:
        vec = equal_weights(ctx.selection_returns())
        diag = "" if vec is not None else "no asset has a complete window"
        return vec, None, diag


def make_strategy(kind: str, baseline: BaselineConfig | None = None) -> Strategy:
    """Instantiate a baseline strategy by name."""
    cfg = baseline if baseline is not None else BaselineConfig(kind=kind)
    cfg.kind = kind
    cfg.validate()
    if kind == "csm":
        return CsmStrategy(cfg)
    if kind == "risk_parity":
        return RiskParityStrategy(cfg)
    return EqualWeightStrategy()
