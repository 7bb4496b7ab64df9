"""Index eligibility and weighting protocols.

Covers the S&P-style rules (cap bands, float-adjusted liquidity, financial
viability, IWF cap weighting), the NASDAQ two-stage weight capping, and Dow
price weighting with divisor continuity across splits. All operations are
pure functions over plain records; nothing here touches the price panel.
"""

from __future__ import annotations

import csv
import enum
import logging
from dataclasses import dataclass

import numpy as np

from .errors import (
    DataError,
    DomainError,
    EligibilityError,
    InfeasibleError,
    ParseError,
)

logger = logging.getLogger(__name__)

LARGE_CAP_FLOOR = 22.7e9
MID_CAP_FLOOR = 8.0e9
SMALL_CAP_FLOOR = 1.2e9

FALR_FLOOR = 0.75
MONTHLY_VOLUME_FLOOR = 250_000
IWF_FLOOR = 0.10

SINGLE_WEIGHT_CAP = 0.24
GROUP_THRESHOLD = 0.045
GROUP_LIMIT = 0.48

_TOL = 1e-12


class CapBand(enum.Enum):
    LARGE_CAP = "LargeCap"
    MID_CAP = "MidCap"
    SMALL_CAP = "SmallCap"
    INELIGIBLE = "Ineligible"


@dataclass(frozen=True)
class EligibilityRecord:
    """Everything the index rules need to know about one company.

    quarterly_net_income is ordered oldest to newest (most recent last);
    monthly_volumes likewise covers the six most recent months.
    """

    ticker: str
    unadjusted_cap: float
    falr: float
    iwf: float
    monthly_volumes: tuple[float, ...]
    quarterly_net_income: tuple[float, ...]


@dataclass(frozen=True)
class IndexWeights:
    weights: dict[str, float]
    divisor: float

    def validate(self) -> None:
        total = sum(self.weights.values())
        if abs(total - 1.0) > 1e-9:
            raise DomainError(f"weights sum to {total}, expected 1")
        if any(w < 0 for w in self.weights.values()):
            raise DomainError("negative weight")


def unadjusted_market_cap(price: float, shares_outstanding: float) -> float:
    """Unadjusted market capitalisation: price times total shares outstanding."""
    if price < 0 or shares_outstanding < 0:
        raise DomainError("price and shares outstanding must be non-negative")
    return price * shares_outstanding


def float_adjusted_liquidity(advt: float, float_market_cap: float) -> float:
    """Annual dollar volume traded relative to float-adjusted market cap."""
    if float_market_cap <= 0:
        raise DomainError("float market cap must be positive")
    if advt < 0:
        raise DomainError("dollar volume must be non-negative")
    return advt / float_market_cap


def classify_cap_band(unadjusted_cap: float) -> CapBand:
    """Map an unadjusted market cap to its size band. Bands partition [0, inf)."""
    if unadjusted_cap < 0:
        raise DomainError(f"negative market cap: {unadjusted_cap}")
    if unadjusted_cap >= LARGE_CAP_FLOOR:
        return CapBand.LARGE_CAP
    if unadjusted_cap >= MID_CAP_FLOOR:
        return CapBand.MID_CAP
    if unadjusted_cap >= SMALL_CAP_FLOOR:
        return CapBand.SMALL_CAP
    return CapBand.INELIGIBLE


def passes_liquidity(rec: EligibilityRecord) -> bool:
    """Liquidity screen: FALR at least 0.75 and every recent month at least 250k shares."""
    if len(rec.monthly_volumes) != 6:
        raise DataError(f"{rec.ticker}: expected 6 monthly volumes, got {len(rec.monthly_volumes)}")
    if rec.falr < FALR_FLOOR:
        return False
    return all(v >= MONTHLY_VOLUME_FLOOR for v in rec.monthly_volumes)


def passes_viability(rec: EligibilityRecord, grandfathered: bool = False) -> bool:
    """Earnings screen: latest quarter profitable and trailing four quarters sum positive.

    Incumbents kept under a grandfathering provision bypass the screen.
    """
    if grandfathered:
        return True
    if len(rec.quarterly_net_income) != 4:
        raise DataError(
            f"{rec.ticker}: expected 4 quarterly net income values, "
            f"got {len(rec.quarterly_net_income)}"
        )
    latest = rec.quarterly_net_income[-1]
    return latest > 0 and sum(rec.quarterly_net_income) > 0


def sp_weights(
    records: list[tuple[str, float, float, float]],
    divisor: float,
) -> IndexWeights:
    """Float-adjusted cap weights from (ticker, price, shares, iwf) records.

    Raw weight is price * shares * iwf / divisor; the returned weights are
    normalized to sum to one, the divisor retained for index-level values.
    """
    if divisor <= 0:
        raise DomainError(f"divisor must be positive, got {divisor}")
    if not records:
        raise DataError("no records")
    raw: dict[str, float] = {}
    for ticker, price, shares, iwf in records:
        if iwf < IWF_FLOOR:
            raise EligibilityError(f"{ticker}: IWF {iwf} below the {IWF_FLOOR} eligibility floor")
        if price < 0 or shares < 0:
            raise DomainError(f"{ticker}: negative price or share count")
        if ticker in raw:
            raise DataError(f"duplicate ticker {ticker}")
        raw[ticker] = price * shares * iwf / divisor
    total = sum(raw.values())
    if total <= 0:
        raise DomainError("all raw weights are zero")
    out = IndexWeights(weights={t: v / total for t, v in raw.items()}, divisor=divisor)
    out.validate()
    return out


def _group_sum(values: np.ndarray) -> float:
    return float(values[values > GROUP_THRESHOLD].sum())


def _cap_proportional(sorted_w: np.ndarray, cap: float) -> np.ndarray:
    """Cap a descending weight vector, pushing excess proportionally onto the rest.

    Iterates because redistribution can lift a weight over the cap; at the
    fixpoint the capped names are exactly the largest originals, so rank order
    survives.
    """
    v = sorted_w.copy()
    if not (v > cap + _TOL).any():
        return v
    capped = np.zeros(v.size, dtype=bool)
    for _ in range(v.size + 1):
        over = (~capped) & (v > cap + 1e-15)
        if not over.any():
            break
        capped |= over
        budget = 1.0 - cap * capped.sum()
        free = ~capped
        v[capped] = cap
        if not free.any():
            if abs(budget) > 1e-9:
                raise InfeasibleError("cap smaller than 1/n")
            break
        scale = budget / sorted_w[free].sum()
        v[free] = sorted_w[free] * scale
    return v


def _scale_with_clip(head: np.ndarray, lo: float, hi: float, total: float) -> np.ndarray | None:
    """Find v = clip(a*w, lo, hi) with sum(v) == total, or None if no scale works.

    head is sorted descending, so at any scale the hi-clipped names form a
    prefix and the lo-clipped names a suffix; enumerate the two break counts.
    """
    m = head.size
    if m == 0:
        return np.empty(0) if abs(total) <= _TOL else None
    if not (m * lo - 1e-9 <= total <= m * hi + 1e-9):
        return None
    for at_hi in range(m + 1):
        for at_lo in range(m - at_hi + 1):
            mid = slice(at_hi, m - at_lo)
            mid_w = head[mid]
            mid_mass = total - at_hi * hi - at_lo * lo
            if mid_w.size == 0:
                if abs(mid_mass) > 1e-9:
                    continue
                scale = 0.0
            else:
                if mid_w.sum() <= 0:
                    continue
                if mid_mass < -1e-12:
                    continue
                scale = mid_mass / mid_w.sum()
            v = np.clip(scale * head, lo, hi)
            v[:at_hi] = hi
            if at_lo:
                v[m - at_lo:] = lo
            consistent = (
                all(scale * head[i] >= hi - 1e-9 for i in range(at_hi))
                and all(scale * head[i] <= lo + 1e-9 for i in range(m - at_lo, m))
                and all(lo - 1e-9 <= scale * w <= hi + 1e-9 for w in mid_w)
            )
            if not consistent:
                continue
            err = total - v.sum()
            if abs(err) > 1e-9:
                continue
            if mid_w.size:
                v[mid] = v[mid] + err * (mid_w / mid_w.sum())
            return v
    return None


def _fill_tail(tail: np.ndarray, total: float, cap: float) -> np.ndarray | None:
    """Assign v = min(cap, b*w) summing to total; spill equally onto zero weights
    only once every positive weight is pinned at the cap."""
    t = tail.size
    if total < -_TOL or total > cap * t + 1e-9:
        return None
    if t == 0:
        return np.empty(0)
    v = np.zeros(t)
    positive = tail > 0
    npos = int(positive.sum())
    pos_w = tail[:npos]  # descending order puts zeros last
    if total <= cap * npos + 1e-15:
        for clipped in range(npos + 1):
            rest = pos_w[clipped:]
            mass = total - cap * clipped
            if rest.size == 0:
                if abs(mass) > 1e-9:
                    continue
                b = 0.0
            else:
                if mass < -1e-12:
                    continue
                b = mass / rest.sum()
            if clipped and b * pos_w[clipped - 1] < cap - 1e-9:
                continue
            if rest.size and b * rest[0] > cap + 1e-9:
                continue
            v[:clipped] = cap
            v[clipped:npos] = b * pos_w[clipped:]
            err = total - v.sum()
            if rest.size and rest.sum() > 0:
                v[clipped:npos] += err * (rest / rest.sum())
            return v
        return None
    v[:npos] = cap
    spill = total - cap * npos
    zeros = t - npos
    if zeros == 0:
        return None
    v[npos:] = spill / zeros
    return v


def nasdaq_cap(weights: dict[str, float]) -> dict[str, float]:
    """Apply the two-stage weight caps: 24% per name, 48% for names above 4.5%.

    Stage one caps single names and redistributes proportionally to a fixpoint.
    If the heavyweight group (names above 4.5%) then exceeds 48%, the vector is
    rebuilt as a two-tier assignment: a head holding at most 48% and a tail
    pinned at or below the 4.5% threshold, each scaled from the original
    weights so rank order survives. The operation is a projection: output
    vectors already satisfying both caps come back unchanged.
    """
    tickers = list(weights)
    if not tickers:
        raise DomainError("empty weight vector")
    w = np.array([weights[t] for t in tickers], dtype=float)
    if (w < -_TOL).any():
        raise DomainError("negative input weight")
    if abs(w.sum() - 1.0) > 1e-9:
        raise DomainError(f"input weights sum to {w.sum()}, expected 1")
    n = w.size
    if n * SINGLE_WEIGHT_CAP < 1.0 - _TOL:
        raise InfeasibleError(
            f"{n} assets cannot sum to 1 under a {SINGLE_WEIGHT_CAP:.0%} single-name cap"
        )

    no_single_breach = not (w > SINGLE_WEIGHT_CAP + 1e-15).any()
    if no_single_breach and _group_sum(w) <= GROUP_LIMIT + 1e-12:
        return dict(weights)

    order = sorted(range(n), key=lambda i: (-w[i], tickers[i]))
    ws = w[order]

    capped = _cap_proportional(ws, SINGLE_WEIGHT_CAP)
    if _group_sum(capped) <= GROUP_LIMIT + 1e-12:
        out_sorted = capped
    else:
        out_sorted = None
        for m in range(min(10, n), -1, -1):
            head_mass = min(GROUP_LIMIT, SINGLE_WEIGHT_CAP * m)
            tail_mass = 1.0 - head_mass
            head = _scale_with_clip(ws[:m], GROUP_THRESHOLD, SINGLE_WEIGHT_CAP, head_mass)
            if head is None:
                continue
            tail = _fill_tail(ws[m:], tail_mass, GROUP_THRESHOLD)
            if tail is None:
                continue
            out_sorted = np.concatenate([head, tail])
            break
        if out_sorted is None:
            raise InfeasibleError(
                f"no assignment over {n} assets satisfies the 24%/48% caps"
            )

    if (out_sorted > SINGLE_WEIGHT_CAP + 1e-9).any() or abs(out_sorted.sum() - 1.0) > 1e-9:
        raise InfeasibleError("cap repair failed to satisfy its own constraints")

    result = np.empty(n)
    result[order] = out_sorted
    return {t: float(result[i]) for i, t in enumerate(tickers)}


def nasdaq_rank_eligible(rank: int, incumbent: bool) -> bool:
    """Annual reconstitution rule: top 75 enter outright, ranks 76-100 only stay
    if already members. Committee discretion beyond that is not modeled."""
    if rank < 1:
        raise DomainError(f"rank must be >= 1, got {rank}")
    if rank <= 75:
        return True
    return rank <= 100 and incumbent


def dow_value(prices: list[float], divisor: float) -> float:
    """Price-weighted index level: sum of component prices over the divisor."""
    if divisor <= 0:
        raise DomainError(f"divisor must be positive, got {divisor}")
    if not prices:
        logger.warning("dow_value called with no component prices")
        return 0.0
    return sum(prices) / divisor


def dow_split_adjust(
    prices_before: list[float],
    prices_after: list[float],
    divisor_before: float,
) -> float:
    """New divisor preserving the index level across a split or substitution."""
    if len(prices_before) != len(prices_after):
        raise DomainError("component lists must have the same length")
    if divisor_before <= 0:
        raise DomainError(f"divisor must be positive, got {divisor_before}")
    sum_before = sum(prices_before)
    sum_after = sum(prices_after)
    if sum_after <= 0:
        raise DomainError("zero price sum after split")
    if sum_before <= 0:
        raise DomainError("zero price sum before split")
    return divisor_before * sum_after / sum_before


def read_financials_csv(path: str) -> dict[str, tuple[tuple[float, ...], tuple[float, ...]]]:
    """Read the quarterly-financials CSV: per ticker, four quarterly net income
    values (oldest first) and six monthly share volumes (oldest first)."""
    expected = (
        ["ticker"]
        + [f"q{i}_ni" for i in range(1, 5)]
        + [f"m{i}_vol" for i in range(1, 7)]
    )
    out: dict[str, tuple[tuple[float, ...], tuple[float, ...]]] = {}
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty file", line=1, path=path) from None
        if [c.strip().lower() for c in header] != expected:
            raise ParseError(f"header must be {','.join(expected)}", line=1, path=path)
        for line_no, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != len(expected):
                raise ParseError(
                    f"expected {len(expected)} columns, found {len(row)}",
                    line=line_no, path=path,
                )
            ticker = row[0].strip().upper()
            try:
                values = [float(cell) for cell in row[1:]]
            except ValueError as exc:
                raise ParseError(f"bad numeric field ({exc})", line=line_no, path=path) from None
            out[ticker] = (tuple(values[:4]), tuple(values[4:]))
    return out


def build_eligibility_record(
    ticker: str,
    price: float,
    shares_outstanding: float,
    iwf: float,
    advt: float,
    quarterly_net_income: tuple[float, ...],
    monthly_volumes: tuple[float, ...],
) -> EligibilityRecord:
    """Assemble an EligibilityRecord, deriving cap and FALR from the raw fields."""
    cap = unadjusted_market_cap(price, shares_outstanding)
    float_cap = cap * iwf
    falr = float_adjusted_liquidity(advt, float_cap) if float_cap > 0 else 0.0
    return EligibilityRecord(
        ticker=ticker,
        unadjusted_cap=cap,
        falr=falr,
        iwf=iwf,
        monthly_volumes=tuple(monthly_volumes),
        quarterly_net_income=tuple(quarterly_net_income),
    )
