"""Shared helpers for the test suite: tiny panel builders and slow reference
implementations used as independent oracles.

The oracles deliberately avoid the library's own code paths (plain loops,
np.corrcoef, grid search) so a bug in the engine cannot hide in its tests.
"""

from __future__ import annotations

import csv
import itertools
import math

import numpy as np
import pandas as pd

from aegis.allocation_engine import AllocationProblem
from aegis.market_data import PricePanel, ReturnsPanel


def bd_index(n: int, start: str = "2020-01-02") -> pd.DatetimeIndex:
    return pd.bdate_range(start=start, periods=n)


def returns_panel(cols: dict[str, np.ndarray], start: str = "2020-01-02") -> ReturnsPanel:
    """ReturnsPanel from raw arrays; every asset active over the full span."""
    lengths = {len(v) for v in cols.values()}
    assert len(lengths) == 1, "columns must share a length"
    idx = bd_index(lengths.pop(), start)
    frame = pd.DataFrame({k: np.asarray(v, dtype=float) for k, v in cols.items()}, index=idx)
    windows = {t: (idx[0], idx[-1]) for t in frame.columns}
    return ReturnsPanel(frame=frame, active_windows=windows)


def price_panel(cols: dict[str, np.ndarray], start: str = "2020-01-02") -> PricePanel:
    lengths = {len(v) for v in cols.values()}
    assert len(lengths) == 1, "columns must share a length"
    idx = bd_index(lengths.pop(), start)
    frame = pd.DataFrame({k: np.asarray(v, dtype=float) for k, v in cols.items()}, index=idx)
    windows = {}
    for t in frame.columns:
        col = frame[t]
        windows[t] = (col.first_valid_index(), col.last_valid_index())
    panel = PricePanel(frame=frame, active_windows=windows)
    panel.validate()
    return panel


def write_price_csv(path, dates, cols: dict[str, list]) -> str:
    """Write a raw price CSV exactly as given; None cells become empty."""
    path = str(path)
    tickers = list(cols)
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["date"] + tickers)
        for i, d in enumerate(dates):
            row = [d if isinstance(d, str) else d.strftime("%Y-%m-%d")]
            for t in tickers:
                v = cols[t][i]
                row.append("" if v is None or (isinstance(v, float) and math.isnan(v)) else repr(v))
            writer.writerow(row)
    return path


# ---------------------------------------------------------------- oracles


def oracle_sortino(weights: np.ndarray, rets: np.ndarray, rf: float, days: int, eps: float) -> float:
    """Straight-line Sortino objective: explicit loops, no shared code."""
    port = [float(np.dot(rets[t], weights)) for t in range(rets.shape[0])]
    mean = sum(port) / len(port)
    ann = mean * days
    hurdle = rf / days
    sq = 0.0
    for r in port:
        short = min(r - hurdle, 0.0)
        sq += short * short
    dd = math.sqrt(sq / len(port)) * math.sqrt(days)
    return (ann - rf) / (dd + eps)


def grid_points(n: int, step: float = 0.01):
    """All weight vectors on the step-grid of the n-simplex."""
    units = int(round(1.0 / step))
    for combo in itertools.combinations(range(units + n - 1), n - 1):
        parts = []
        prev = -1
        for c in combo:
            parts.append(c - prev - 1)
            prev = c
        parts.append(units + n - 2 - prev)
        yield np.array(parts, dtype=float) * step


def grid_best(problem: AllocationProblem, step: float = 0.01) -> tuple[np.ndarray, float]:
    """Exhaustive grid maximum of the Sortino objective (cap ignored: use for
    relaxed problems with few assets only)."""
    best_w, best_v = None, -math.inf
    for w in grid_points(problem.asset_count, step):
        v = oracle_sortino(
            w, problem.asset_returns, problem.risk_free_annual,
            problem.trading_days, problem.epsilon,
        )
        if v > best_v:
            best_v, best_w = v, w
    return best_w, best_v


def oracle_greedy(anchors, pool, frame: pd.DataFrame, target_size: int):
    """Reference greedy diversifier fill using np.corrcoef and explicit loops.

    pool: list of (ticker, vam) pairs. Returns the admitted tickers in order.
    Ties break exactly as documented: (rho_max, -vam, ticker).
    """
    members = list(anchors)
    vam = dict(pool)
    remaining = sorted(vam)
    chosen = []
    while remaining and len(members) < target_size:
        best = None
        for t in remaining:
            worst = 0.0
            for m in members:
                sub = frame[[t, m]].dropna()
                rho = abs(float(np.corrcoef(sub[t], sub[m])[0, 1]))
                worst = max(worst, rho)
            key = (worst, -vam[t], t)
            if best is None or key < best[0]:
                best = (key, t)
        chosen.append(best[1])
        members.append(best[1])
        remaining.remove(best[1])
    return chosen
