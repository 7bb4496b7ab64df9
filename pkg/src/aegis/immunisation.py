"""Diversifier selection: the momentum gate and greedy minimax-correlation loop.

Starting from the three anchors, candidates that passed the momentum gate are
admitted one at a time: each iteration computes every candidate's worst-case
absolute correlation against the current basket and admits the candidate whose
worst case is smallest. Greedy, not globally optimal; the selection log keeps
each pick's score so the construction can be audited offline.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, UndefinedCorrelationError
from .market_data import ReturnsPanel
from .signal_engine import MomentumScore

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CorrelationMatrix:
    tickers: list[str]
    rho: np.ndarray

    def validate(self) -> None:
        n = len(self.tickers)
        if self.rho.shape != (n, n):
            raise DataError(f"correlation matrix shape {self.rho.shape} != ({n},{n})")
        if not np.allclose(self.rho, self.rho.T, atol=1e-12):
            raise DataError("correlation matrix not symmetric")
        if np.abs(self.rho).max(initial=0.0) > 1.0 + 1e-12:
            raise DataError("correlation entry outside [-1, 1]")


@dataclass
class Basket:
    """Selection result: anchors plus diversifiers in admission order."""

    anchors: tuple[str, str, str]
    diversifiers: list[str]
    target_size: int
    selection_log: list[tuple[str, float]] = field(default_factory=list)
    underfilled: bool = False

    @property
    def members(self) -> list[str]:
        return list(self.anchors) + self.diversifiers

    @property
    def size(self) -> int:
        return len(self.anchors) + len(self.diversifiers)


def pearson(x: np.ndarray, y: np.ndarray) -> float:
    """Pearson product-moment correlation of two equal-length series."""
    xa = np.asarray(x, dtype=float)
    ya = np.asarray(y, dtype=float)
    if xa.shape != ya.shape or xa.ndim != 1:
        raise DataError(f"series shapes differ: {xa.shape} vs {ya.shape}")
    if xa.size < 2:
        raise DataError(f"need at least 2 observations, got {xa.size}")
    xd = xa - xa.mean()
    yd = ya - ya.mean()
    denom = np.sqrt((xd * xd).sum() * (yd * yd).sum())
    if denom == 0:
        raise UndefinedCorrelationError("constant series has no defined correlation")
    rho = float((xd * yd).sum() / denom)
    if abs(rho) > 1.0 + 1e-12:
        raise DataError(f"correlation {rho} outside [-1, 1]")
    return max(-1.0, min(1.0, rho))


def momentum_gate(candidates: list[MomentumScore]) -> list[MomentumScore]:
    """Keep candidates with strictly positive cumulative return, order preserved."""
    return [c for c in candidates if c.cum_return > 0]


def correlation_matrix(panel: ReturnsPanel, tickers: list[str]) -> CorrelationMatrix:
    """Pairwise Pearson correlations over the panel's rows.

    Rows where any requested column is missing are dropped first, so every
    pair is measured on the same spine of dates. Constant columns carry no
    correlation information and get 0 against everything, with a warning.
    """
    missing = [t for t in tickers if t not in panel.frame.columns]
    if missing:
        raise DataError(f"tickers absent from returns panel: {', '.join(missing)}")
    sub = panel.frame[tickers].dropna(axis=0, how="any")
    if sub.shape[0] < 2:
        raise DataError("fewer than 2 complete rows for correlation")
    # C layout keeps the gemm below bit-stable: pandas hands back an F-ordered
    # view when the frame sits in one block, and BLAS results shift in the
    # last bits with operand order, which would leak into greedy tie-breaks.
    values = np.ascontiguousarray(sub.to_numpy())
    centered = values - values.mean(axis=0)
    norms = np.sqrt((centered * centered).sum(axis=0))
    flat = norms == 0
    if flat.any():
        flat_names = [t for t, is_flat in zip(tickers, flat) if is_flat]
        logger.warning(
            "constant return series treated as zero-correlation: %s",
            ", ".join(flat_names),
        )
    safe = np.where(flat, 1.0, norms)
    unit = centered / safe
    rho = unit.T @ unit
    rho[flat, :] = 0.0
    rho[:, flat] = 0.0
    np.fill_diagonal(rho, 1.0)
    rho = np.clip((rho + rho.T) / 2.0, -1.0, 1.0)
    out = CorrelationMatrix(tickers=list(tickers), rho=rho)
    out.validate()
    return out


def select_diversifiers(
    anchors: tuple[str, str, str],
    pool: list[MomentumScore],
    returns: ReturnsPanel,
    target_size: int,
) -> Basket:
    """Fill the basket greedily by lowest worst-case |correlation| to members.

    Stops at target_size or when the pool runs out, whichever comes first; an
    under-filled basket is flagged rather than treated as an error. Ties on
    the correlation score go to the higher momentum score, then to the ticker.
    """
    if len(set(anchors)) != 3:
        raise DataError("exactly 3 distinct anchors required")
    pool_tickers = [c.ticker for c in pool]
    if len(set(pool_tickers)) != len(pool_tickers):
        raise DataError("duplicate tickers in candidate pool")
    overlap = set(anchors) & set(pool_tickers)
    if overlap:
        raise DataError(f"pool overlaps anchors: {', '.join(sorted(overlap))}")
    if target_size < 3:
        raise DataError(f"target_size must be >= 3, got {target_size}")

    ordered = sorted(pool, key=lambda c: c.ticker)
    tickers = list(anchors) + [c.ticker for c in ordered]
    corr = correlation_matrix(returns, tickers)
    abs_rho = np.abs(corr.rho)
    vam = {c.ticker: c.vam for c in ordered}
    index = {t: i for i, t in enumerate(tickers)}

    member_idx = [index[a] for a in anchors]
    remaining = [c.ticker for c in ordered]
    basket = Basket(anchors=tuple(anchors), diversifiers=[], target_size=target_size)

    while remaining and basket.size < target_size:
        best_ticker = None
        best_key: tuple[float, float, str] | None = None
        best_rho = 0.0
        for ticker in remaining:
            rho_max = float(abs_rho[index[ticker], member_idx].max())
            key = (rho_max, -vam[ticker], ticker)
            if best_key is None or key < best_key:
                best_key = key
                best_ticker = ticker
                best_rho = rho_max
        remaining.remove(best_ticker)
        member_idx.append(index[best_ticker])
        basket.diversifiers.append(best_ticker)
        basket.selection_log.append((best_ticker, best_rho))

    if basket.size < target_size:
        basket.underfilled = True
        logger.warning(
            "pool exhausted: basket holds %d of %d members", basket.size, target_size
        )
    return basket
