"""Deterministic synthetic market generator for tests and demo runs.

Builds a business-day panel of positive prices from a one-factor-per-sector
model: every asset loads on a market factor and its sector factor plus an
idiosyncratic leg. The same seed always yields the same panel bit for bit
(``numpy.random.default_rng`` with a fixed seed, fixed calendar), which the
end-to-end determinism checks rely on.

The cast includes the awkward cases a backtest must survive: a stock/bond
proxy pair for the two-leg baseline, a handful of assets that list late, and
one name (DECAYCO) that bleeds out and stops trading halfway through the
panel, exercising the delisting path.
"""

from __future__ import annotations

import csv
import math
import os
from datetime import date

import numpy as np
import pandas as pd

from .errors import ParameterError
from .market_data import AssetMeta, PricePanel

SECTORS = (
    "ENERGY", "FINANCE", "HEALTH", "INDUSTRIALS", "MATERIALS",
    "MEDIA", "RETAIL", "TECH", "TRANSPORT", "UTILITIES",
)
STOCK_PROXY = "SPXPROXY"
BOND_PROXY = "AGGPROXY"
DEAD_STOCK = "DECAYCO"
DEFAULT_SEED = 7
DEFAULT_START = date(2018, 1, 2)
TRADING_DAYS_PER_YEAR = 252


def synthetic_market(
    n_assets: int = 200,
    years: int = 5,
    seed: int = DEFAULT_SEED,
    start: date = DEFAULT_START,
) -> tuple[PricePanel, dict[str, AssetMeta]]:
    """Generate an n-asset, n-year panel plus matching metadata.

    The asset count includes the two index proxies and the decaying name, so
    the returned frame has exactly ``n_assets`` columns.
    """
    if n_assets < 20:
        raise ParameterError("need at least 20 assets for a meaningful fixture")
    if years < 1:
        raise ParameterError("years must be >= 1")
    n_days = years * TRADING_DAYS_PER_YEAR
    dates = pd.bdate_range(start=pd.Timestamp(start), periods=n_days)
    rng = np.random.default_rng(seed)

    n_regular = n_assets - 3
    sectors = [SECTORS[i % len(SECTORS)] for i in range(n_regular)]
    tickers = [f"{sectors[i][:3]}{i:03d}" for i in range(n_regular)]

    market = rng.normal(0.06 / n_days * years, 0.12 / math.sqrt(TRADING_DAYS_PER_YEAR), n_days)
    sector_paths = {
        name: rng.normal(
            rng.uniform(-0.02, 0.08) / TRADING_DAYS_PER_YEAR,
            rng.uniform(0.06, 0.16) / math.sqrt(TRADING_DAYS_PER_YEAR),
            n_days,
        )
        for name in SECTORS
    }

    beta_mkt = rng.uniform(0.4, 1.4, n_regular)
    beta_sec = rng.uniform(0.3, 1.0, n_regular)
    drift = rng.uniform(-0.10, 0.26, n_regular) / TRADING_DAYS_PER_YEAR
    idio = rng.uniform(0.10, 0.40, n_regular) / math.sqrt(TRADING_DAYS_PER_YEAR)
    log_p0 = rng.uniform(2.3, 5.8, n_regular)

    shocks = rng.standard_normal((n_days, n_regular))
    sector_mat = np.column_stack([sector_paths[s] for s in sectors])
    log_rets = (
        drift[None, :]
        + market[:, None] * beta_mkt[None, :]
        + sector_mat * beta_sec[None, :]
        + shocks * idio[None, :]
    )
    log_prices = log_p0[None, :] + np.cumsum(log_rets, axis=0)
    prices = np.exp(log_prices)

    # Late listings: the last few regular names have no prices before their
    # debut, spread across the second year so they enter candidate pools only
    # after accruing a full selection window.
    n_ipo = min(6, n_regular // 25)
    for j in range(n_ipo):
        col = n_regular - 1 - j
        debut = TRADING_DAYS_PER_YEAR + 40 * (j + 1)
        if debut < n_days - 40:
            prices[:debut, col] = np.nan

    frame = pd.DataFrame(prices, index=dates, columns=tickers)

    # Dead stock: healthy drift for the first stretch, then a steady bleed
    # into a final print at mid-panel and nothing afterwards.
    last_print = n_days // 2
    decay_start = last_print - 90
    dead = np.full(n_days, np.nan)
    healthy = 4.0 + np.cumsum(
        rng.normal(0.18 / TRADING_DAYS_PER_YEAR, 0.018, decay_start)
    )
    dead[:decay_start] = np.exp(healthy)
    bleed = healthy[-1] + np.cumsum(
        rng.normal(-0.020, 0.010, last_print - decay_start + 1)
    )
    dead[decay_start : last_print + 1] = np.exp(bleed)
    frame[DEAD_STOCK] = dead

    frame[STOCK_PROXY] = np.exp(
        3.2 + np.cumsum(market + rng.normal(0.0, 0.002, n_days))
    )
    frame[BOND_PROXY] = np.exp(
        2.0
        + np.cumsum(
            rng.normal(
                0.03 / TRADING_DAYS_PER_YEAR,
                0.045 / math.sqrt(TRADING_DAYS_PER_YEAR),
                n_days,
            )
        )
    )

    frame = frame.round(6)

    windows: dict[str, tuple[pd.Timestamp, pd.Timestamp]] = {}
    meta: dict[str, AssetMeta] = {}
    all_sectors = sectors + [SECTORS[0], "PROXY", "PROXY"]
    for name, sector in zip(list(tickers) + [DEAD_STOCK, STOCK_PROXY, BOND_PROXY], all_sectors):
        col = frame[name]
        first, last = col.first_valid_index(), col.last_valid_index()
        windows[name] = (first, last)
        meta[name] = AssetMeta(
            ticker=name,
            sector=sector,
            shares_outstanding=float(round(rng.uniform(5e7, 4e9))),
            iwf=float(round(rng.uniform(0.55, 1.0), 2)),
            advt=float(round(rng.uniform(1e9, 9e10))),
            index_tags=frozenset({"SYNTH"}),
            active_window=(first, last),
        )

    panel = PricePanel(frame=frame, active_windows=windows)
    panel.validate()
    return panel, meta


def write_market_csvs(
    panel: PricePanel,
    meta: dict[str, AssetMeta],
    out_dir: str,
) -> tuple[str, str]:
    """Write prices.csv and meta.csv in the ingest formats; returns both paths."""
    os.makedirs(out_dir, exist_ok=True)
    prices_path = os.path.join(out_dir, "prices.csv")
    meta_path = os.path.join(out_dir, "meta.csv")

    with open(prices_path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["date"] + panel.tickers)
        for stamp, row in panel.frame.iterrows():
            cells = [stamp.date().isoformat()]
            for value in row.to_numpy():
                cells.append("" if np.isnan(value) else repr(float(value)))
            writer.writerow(cells)

    with open(meta_path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow([
            "ticker", "sector", "shares_outstanding", "iwf", "advt",
            "index_tags", "first_date", "last_date",
        ])
        for ticker in panel.tickers:
            m = meta[ticker]
            first, last = m.active_window if m.active_window else (None, None)
            writer.writerow([
                m.ticker,
                m.sector,
                repr(m.shares_outstanding),
                repr(m.iwf),
                repr(m.advt),
                "|".join(sorted(m.index_tags)),
                first.date().isoformat() if first is not None else "",
                last.date().isoformat() if last is not None else "",
            ])

    return prices_path, meta_path


def seed_fixtures(
    out_dir: str,
    n_assets: int = 200,
    years: int = 5,
    seed: int = DEFAULT_SEED,
) -> tuple[str, str]:
    """Generate the default fixture market and write its CSVs under out_dir."""
    panel, meta = synthetic_market(n_assets=n_assets, years=years, seed=seed)
    return write_market_csvs(panel, meta, out_dir)
