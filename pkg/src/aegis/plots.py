"""Figure rendering for the command-line report path.

The engine itself never touches matplotlib; these helpers turn finished
results into PNG files next to the delimited artifacts. Rendering uses the
Agg backend with pinned dpi and a blank Software tag so identical inputs
produce identical bytes.
"""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg", force=True)

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402

from .backtest_engine import BacktestResult  # noqa: E402
from .metrics import underwater  # noqa: E402
from .reporting import SweepCell, monthly_histogram  # noqa: E402

DPI = 120
_SAVE_KWARGS = {"dpi": DPI, "metadata": {"Software": None}}


def _save(fig, path: str) -> None:
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KWARGS)
    plt.close(fig)


def render_equity(path: str, curve: list[tuple[pd.Timestamp, float]], label: str) -> None:
    dates = [stamp for stamp, _ in curve]
    values = [value for _, value in curve]
    fig, ax = plt.subplots(figsize=(9, 4.5))
    ax.plot(dates, values, lw=1.4, color="#1a6091", label=label)
    ax.set_ylabel("growth of 1 unit")
    ax.set_title("Equity curve (net of friction)")
    ax.grid(alpha=0.3)
    ax.legend(loc="upper left")
    _save(fig, path)


def render_drawdown(path: str, curve: list[tuple[pd.Timestamp, float]]) -> None:
    dates = [stamp for stamp, _ in curve]
    values = np.array([value for _, value in curve])
    depths = underwater(values)
    fig, ax = plt.subplots(figsize=(9, 3.5))
    ax.fill_between(dates, depths, 0.0, color="#a63228", alpha=0.55)
    ax.set_ylabel("decline from peak")
    ax.set_title("Underwater curve")
    ax.grid(alpha=0.3)
    _save(fig, path)


def render_histogram(path: str, net_returns: list[float]) -> None:
    edges, counts = monthly_histogram(net_returns)
    widths = np.diff(edges)
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.bar(edges[:-1], counts, width=widths, align="edge",
           color="#2d7a4f", edgecolor="white", linewidth=0.5)
    ax.set_xlabel("monthly net return")
    ax.set_ylabel("months")
    ax.set_title("Distribution of monthly net returns")
    ax.grid(alpha=0.3, axis="y")
    _save(fig, path)


def render_backtest_figures(out_dir: str, result: BacktestResult) -> dict[str, str]:
    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "equity_png": os.path.join(out_dir, "equity.png"),
        "drawdown_png": os.path.join(out_dir, "drawdown.png"),
        "histogram_png": os.path.join(out_dir, "monthly_histogram.png"),
    }
    render_equity(paths["equity_png"], result.equity_curve, result.strategy)
    render_drawdown(paths["drawdown_png"], result.equity_curve)
    render_histogram(paths["histogram_png"], [p.net_return for p in result.periods])
    return paths


def render_compare(path: str, curves: dict[str, list[tuple[pd.Timestamp, float]]]) -> None:
    fig, ax = plt.subplots(figsize=(9, 4.5))
    for label in sorted(curves):
        points = curves[label]
        ax.plot([s for s, _ in points], [v for _, v in points], lw=1.3, label=label)
    ax.set_ylabel("growth of 1 unit")
    ax.set_title("Strategy comparison (net of friction)")
    ax.grid(alpha=0.3)
    ax.legend(loc="upper left")
    _save(fig, path)


def render_sweep(path: str, cells: list[SweepCell]) -> None:
    """CAGR heatmap over the look-back by basket-size grid; failed cells hatched."""
    lookbacks = sorted({c.lookback_months for c in cells})
    counts = sorted({c.diversifier_count for c in cells})
    grid = np.full((len(lookbacks), len(counts)), np.nan)
    for cell in cells:
        i = lookbacks.index(cell.lookback_months)
        j = counts.index(cell.diversifier_count)
        if cell.status == "ok" and cell.cagr is not None:
            grid[i, j] = cell.cagr
    fig, ax = plt.subplots(figsize=(1.6 * len(counts) + 2.5, 1.1 * len(lookbacks) + 1.5))
    masked = np.ma.masked_invalid(grid)
    image = ax.imshow(masked, cmap="RdYlGn", aspect="auto")
    ax.set_xticks(range(len(counts)), [str(c) for c in counts])
    ax.set_yticks(range(len(lookbacks)), [f"{m}m" for m in lookbacks])
    ax.set_xlabel("diversifier count")
    ax.set_ylabel("allocation look-back")
    ax.set_title("CAGR across the parameter grid")
    for i in range(len(lookbacks)):
        for j in range(len(counts)):
            if np.isnan(grid[i, j]):
                ax.text(j, i, "failed", ha="center", va="center", fontsize=9)
            else:
                ax.text(j, i, f"{grid[i, j]:.2%}", ha="center", va="center", fontsize=9)
    fig.colorbar(image, ax=ax, shrink=0.85)
    _save(fig, path)
