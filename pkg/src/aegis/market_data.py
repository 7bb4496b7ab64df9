"""Price history ingestion, alignment, and return computation.

The data layer works on a single shape: a date-indexed price matrix with one
column per ticker, wrapped in :class:`PricePanel` together with each asset's
active window (first to last valid price). Everything downstream (signals,
correlation, allocation, backtest) consumes these panels. Prices outside an
asset's active window do not exist: an asset that has not listed yet, or that
has delisted, simply has no value on those rows. Gaps strictly inside the
window are forward filled, never backfilled.
"""

from __future__ import annotations

import csv
import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import date

import numpy as np
import pandas as pd

from .errors import DataError, EmptyPanelError, FetchError, ParseError

logger = logging.getLogger(__name__)

DEFAULT_MIN_POINTS = 20
DEFAULT_FETCH_WORKERS = 20


def normalize_ticker(raw: str) -> str:
    """Uppercase a ticker and rewrite class-share dots as dashes (BRK.B -> BRK-B)."""
    cleaned = raw.strip()
    if not cleaned:
        raise DataError("empty ticker")
    return cleaned.upper().replace(".", "-")


@dataclass(frozen=True)
class AssetMeta:
    """Static per-ticker facts used by eligibility rules and sector grouping."""

    ticker: str
    sector: str
    shares_outstanding: float
    iwf: float
    advt: float
    index_tags: frozenset[str]
    active_window: tuple[pd.Timestamp, pd.Timestamp] | None = None


def read_metadata_csv(path: str) -> dict[str, AssetMeta]:
    """Read the asset metadata CSV (one row per ticker, pipe-separated index tags)."""
    expected = [
        "ticker", "sector", "shares_outstanding", "iwf", "advt",
        "index_tags", "first_date", "last_date",
    ]
    out: dict[str, AssetMeta] = {}
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
            ticker = normalize_ticker(row[0])
            if ticker in out:
                raise ParseError(f"duplicate ticker {ticker}", line=line_no, path=path)
            try:
                shares = float(row[2])
                iwf = float(row[3])
                advt = float(row[4])
            except ValueError as exc:
                raise ParseError(f"bad numeric field ({exc})", line=line_no, path=path) from None
            if shares < 0 or advt < 0 or not 0.0 <= iwf <= 1.0:
                raise DataError(f"{path}: out-of-range metadata for {ticker} on line {line_no}")
            tags = frozenset(t.strip() for t in row[5].split("|") if t.strip())
            window = None
            if row[6].strip() and row[7].strip():
                window = (
                    _parse_iso_date(row[6], line_no, path),
                    _parse_iso_date(row[7], line_no, path),
                )
            out[ticker] = AssetMeta(
                ticker=ticker,
                sector=row[1].strip(),
                shares_outstanding=shares,
                iwf=iwf,
                advt=advt,
                index_tags=tags,
                active_window=window,
            )
    if not out:
        raise EmptyPanelError(f"{path}: no metadata rows")
    return out


@dataclass
class PricePanel:
    """Aligned date-by-ticker matrix of adjusted close prices.

    frame: float matrix indexed by pd.DatetimeIndex, one column per ticker.
        NaN marks dates where the asset has no price (outside its window, or
        a gap that has not been filled yet).
    active_windows: per ticker (first_valid, last_valid) timestamps.
    rejections: tickers dropped at ingest, with the reason.
    """

    frame: pd.DataFrame
    active_windows: dict[str, tuple[pd.Timestamp, pd.Timestamp]]
    rejections: dict[str, str] = field(default_factory=dict)

    @property
    def dates(self) -> pd.DatetimeIndex:
        return self.frame.index

    @property
    def tickers(self) -> list[str]:
        return list(self.frame.columns)

    def window_mask(self) -> pd.DataFrame:
        """Boolean frame, True where a date falls inside the column's active window."""
        idx = self.frame.index
        cols = {}
        for ticker in self.frame.columns:
            first, last = self.active_windows[ticker]
            cols[ticker] = (idx >= first) & (idx <= last)
        return pd.DataFrame(cols, index=idx, columns=self.frame.columns)

    def validate(self) -> None:
        """Check the panel invariants, raising DataError on the first violation."""
        idx = self.frame.index
        if idx.has_duplicates:
            raise DataError("duplicate dates in panel index")
        if not idx.is_monotonic_increasing:
            raise DataError("panel dates not sorted ascending")
        mask = self.window_mask()
        inside = self.frame.where(mask)
        if ((inside <= 0) | np.isinf(inside)).any().any():
            raise DataError("non-positive or non-finite price inside an active window")
        outside = self.frame.where(~mask)
        if outside.notna().any().any():
            bad = outside.notna().any()
            ticker = bad[bad].index[0]
            raise DataError(f"price outside active window for {ticker}")

    def subset(self, tickers: list[str]) -> "PricePanel":
        missing = [t for t in tickers if t not in self.frame.columns]
        if missing:
            raise DataError(f"unknown tickers: {', '.join(missing)}")
        return PricePanel(
            frame=self.frame[tickers].copy(),
            active_windows={t: self.active_windows[t] for t in tickers},
        )


@dataclass
class ReturnsPanel:
    """Daily log-returns aligned to the source panel's dates.

    The first date of each asset's window has no return; entries outside the
    window are NaN like the price panel.
    """

    frame: pd.DataFrame
    active_windows: dict[str, tuple[pd.Timestamp, pd.Timestamp]]

    @property
    def dates(self) -> pd.DatetimeIndex:
        return self.frame.index

    @property
    def tickers(self) -> list[str]:
        return list(self.frame.columns)


def _parse_iso_date(text: str, line_no: int, path: str) -> pd.Timestamp:
    try:
        parsed = date.fromisoformat(text.strip())
    except ValueError as exc:
        raise ParseError(f"bad date {text!r} ({exc})", line=line_no, path=path) from None
    return pd.Timestamp(parsed)


def ingest_csv(path: str, min_points: int = DEFAULT_MIN_POINTS) -> PricePanel:
    """Read a price CSV (date column + one column per ticker) into a PricePanel.

    Assets with fewer than ``min_points`` valid prices are dropped and listed
    in the panel's rejection report. Dates are sorted ascending; a duplicated
    date row is a hard parse error since it would make the row order ambiguous.
    """
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty file", line=1, path=path) from None
        if not header or header[0].strip().lower() != "date":
            raise ParseError("first column must be 'date'", line=1, path=path)
        raw_tickers = [normalize_ticker(c) for c in header[1:]]
        if len(set(raw_tickers)) != len(raw_tickers):
            raise ParseError("duplicate ticker column after normalization", line=1, path=path)
        if not raw_tickers:
            raise ParseError("no ticker columns", line=1, path=path)

        dates: list[pd.Timestamp] = []
        rows: list[list[float]] = []
        seen: dict[pd.Timestamp, int] = {}
        for line_no, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != len(raw_tickers) + 1:
                raise ParseError(
                    f"expected {len(raw_tickers) + 1} columns, found {len(row)}",
                    line=line_no,
                    path=path,
                )
            stamp = _parse_iso_date(row[0], line_no, path)
            if stamp in seen:
                raise ParseError(f"duplicate date {row[0].strip()}", line=line_no, path=path)
            seen[stamp] = line_no
            values = []
            for col_idx, cell in enumerate(row[1:]):
                cell = cell.strip()
                if not cell:
                    values.append(np.nan)
                    continue
                try:
                    price = float(cell)
                except ValueError:
                    raise ParseError(
                        f"non-numeric price {cell!r} in column {raw_tickers[col_idx]}",
                        line=line_no,
                        path=path,
                    ) from None
                if not np.isfinite(price) or price <= 0:
                    raise DataError(
                        f"{path}: non-positive price {price} for {raw_tickers[col_idx]} "
                        f"on {row[0].strip()}"
                    )
                values.append(price)
            dates.append(stamp)
            rows.append(values)

    if not rows:
        raise EmptyPanelError(f"{path}: no data rows")

    frame = pd.DataFrame(rows, index=pd.DatetimeIndex(dates), columns=raw_tickers, dtype=float)
    frame.sort_index(inplace=True)

    rejections: dict[str, str] = {}
    windows: dict[str, tuple[pd.Timestamp, pd.Timestamp]] = {}
    keep: list[str] = []
    for ticker in raw_tickers:
        col = frame[ticker]
        valid = col.notna()
        count = int(valid.sum())
        if count < min_points:
            rejections[ticker] = f"{count} valid prices < min_points={min_points}"
            continue
        keep.append(ticker)
        windows[ticker] = (col.first_valid_index(), col.last_valid_index())

    if rejections:
        logger.info("ingest %s: rejected %d tickers: %s", path, len(rejections), sorted(rejections))
    if not keep:
        raise EmptyPanelError(f"{path}: all {len(raw_tickers)} assets rejected")

    panel = PricePanel(frame=frame[keep], active_windows=windows, rejections=rejections)
    panel.validate()
    return panel


def align_and_fill(
    panels: list[PricePanel],
    analysis_window: tuple[pd.Timestamp, pd.Timestamp] | None = None,
) -> PricePanel:
    """Outer-join panels on the date index and forward-fill inside active windows.

    Without an analysis window the result keeps every union date; an asset
    contributes values only inside its own window (no backfill before an IPO,
    nothing after a delisting). With an analysis window the result is clipped
    to it and any row where some asset is still missing is dropped, so the
    caller gets a dense matrix over exactly that span; if nothing survives the
    inputs were disjoint and an EmptyPanelError is raised.
    """
    if not panels:
        raise EmptyPanelError("no panels to align")
    frames = []
    windows: dict[str, tuple[pd.Timestamp, pd.Timestamp]] = {}
    for panel in panels:
        overlap = set(panel.frame.columns) & set(windows)
        if overlap:
            raise DataError(f"duplicate ticker across panels: {', '.join(sorted(overlap))}")
        frames.append(panel.frame)
        windows.update(panel.active_windows)

    merged = pd.concat(frames, axis=1, join="outer").sort_index()
    idx = merged.index
    for ticker in merged.columns:
        first, last = windows[ticker]
        mask = (idx >= first) & (idx <= last)
        filled = merged[ticker].where(mask).ffill()
        filled[~mask] = np.nan
        merged[ticker] = filled

    if analysis_window is not None:
        start, end = analysis_window
        merged = merged.loc[(idx >= start) & (idx <= end)]
        complete = merged.notna().all(axis=1)
        dropped = int((~complete).sum())
        if dropped:
            logger.info("align: dropped %d incomplete rows inside analysis window", dropped)
        merged = merged.loc[complete]
        if merged.empty:
            raise EmptyPanelError("no complete rows inside the analysis window")
        windows = {t: (merged.index[0], merged.index[-1]) for t in merged.columns}

    if merged.empty or merged.shape[1] == 0:
        raise EmptyPanelError("aligned panel is empty")

    out = PricePanel(frame=merged, active_windows=windows)
    out.validate()
    return out


def log_returns(panel: PricePanel) -> ReturnsPanel:
    """Daily log-returns ln(P_t / P_{t-1}) per asset, within each active window."""
    mask = panel.window_mask()
    inside = panel.frame.where(mask)
    bad = inside <= 0
    if bad.any().any():
        col = bad.any()
        ticker = col[col].index[0]
        when = bad[ticker][bad[ticker]].index[0]
        raise DataError(f"non-positive price for {ticker} on {when.date()}")
    gaps = mask & inside.isna()
    if gaps.any().any():
        col = gaps.any()
        ticker = col[col].index[0]
        raise DataError(f"gap inside active window for {ticker}; run align_and_fill first")
    rets = np.log(inside).diff()
    rets[~mask] = np.nan
    return ReturnsPanel(frame=rets, active_windows=dict(panel.active_windows))


class PanelFetcher:
    """Interface for remote price sources. Implementations fetch one ticker."""

    def fetch(self, ticker: str, start: date, end: date) -> PricePanel:
        raise NotImplementedError


class CsvPanelFetcher(PanelFetcher):
    """File-backed fetcher serving single-ticker slices of one price CSV.

    Stands in for a live quote API in tests and offline runs; loads the file
    once, lazily, guarded for concurrent use by the fetch pool.
    """

    def __init__(self, path: str, min_points: int = 1):
        self._path = path
        self._min_points = min_points
        self._lock = threading.Lock()
        self._panel: PricePanel | None = None

    def _load(self) -> PricePanel:
        with self._lock:
            if self._panel is None:
                self._panel = ingest_csv(self._path, min_points=self._min_points)
        return self._panel

    def fetch(self, ticker: str, start: date, end: date) -> PricePanel:
        panel = self._load()
        name = normalize_ticker(ticker)
        if name not in panel.frame.columns:
            raise DataError(f"{name}: not present in {self._path}")
        col = panel.frame[name]
        clipped = col.loc[(col.index >= pd.Timestamp(start)) & (col.index <= pd.Timestamp(end))]
        valid = clipped.dropna()
        if valid.empty:
            raise DataError(f"{name}: no prices in requested range")
        frame = clipped.to_frame()
        return PricePanel(
            frame=frame,
            active_windows={name: (valid.index[0], valid.index[-1])},
        )


@dataclass
class FetchOutcome:
    """Per-ticker panels in request order plus failures that did not abort the batch."""

    panels: list[PricePanel]
    failures: dict[str, str]


def fetch_remote(
    tickers: list[str],
    date_range: tuple[date, date],
    fetcher: PanelFetcher,
    workers: int = DEFAULT_FETCH_WORKERS,
) -> FetchOutcome:
    """Fetch tickers through a bounded worker pool.

    At most ``workers`` requests run at once. Individual failures are recorded
    and skipped; the batch only fails (FetchError) when every ticker fails.
    Results are merged in request order, so the outcome does not depend on
    completion order.
    """
    if not tickers:
        return FetchOutcome(panels=[], failures={})
    start, end = date_range
    results: dict[str, PricePanel] = {}
    failures: dict[str, str] = {}
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        futures = {t: pool.submit(fetcher.fetch, t, start, end) for t in tickers}
        for ticker, future in futures.items():
            try:
                results[ticker] = future.result()
            except Exception as exc:  # per-ticker isolation: any failure is recorded
                failures[ticker] = str(exc)
                logger.warning("fetch failed for %s: %s", ticker, exc)
    if not results:
        raise FetchError(failures)
    return FetchOutcome(panels=[results[t] for t in tickers if t in results], failures=failures)
