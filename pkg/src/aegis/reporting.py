"""Report artifacts: JSON summary, delimited tables, and their readers.

Every writer here is deterministic: floats are serialized with ``repr`` (the
shortest round-tripping form), JSON keys are sorted, and nothing volatile
(wall-clock, hostnames) reaches the files, so rerunning on identical inputs
yields byte-identical artifacts. The manifest's elapsed-time field exists on
the in-memory object only for logging.

Non-finite metric values are written as empty cells (CSV) or null (JSON);
their companion ``*_flagged`` booleans say why a number is absent.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np
import pandas as pd

from .backtest_engine import BacktestResult
from .errors import DataError, ParseError
from .metrics import AnnualRow, MetricsReport, underwater

SCHEMA_VERSION = 1

PERIOD_COLUMNS = [
    "train_start", "train_end", "test_start", "test_end", "cash_period",
    "basket_size", "n_positions", "gross_return", "turnover",
    "friction_cost", "net_return", "delistings", "diagnostic",
]
ANNUAL_COLUMNS = [
    "year", "months", "basket_size", "gross_return", "friction_cost",
    "net_return", "avg_monthly_net", "annualized_vol", "sortino",
    "sortino_flagged", "win_rate", "max_drawdown",
]
SWEEP_COLUMNS = [
    "lookback_months", "diversifier_count", "status", "cagr",
    "max_drawdown", "avg_vol", "error",
]


@dataclass
class RunManifest:
    """Reproducibility envelope embedded in every report."""

    config_snapshot: dict[str, object]
    data_fingerprints: dict[str, str]
    engine_version: str
    warnings: list[str] = field(default_factory=list)
    duration_seconds: float = 0.0  # in-memory only, never serialized

    def to_json_dict(self) -> dict[str, object]:
        return {
            "config": dict(sorted(self.config_snapshot.items())),
            "data_fingerprints": dict(sorted(self.data_fingerprints.items())),
            "engine_version": self.engine_version,
            "warnings": list(self.warnings),
        }


def file_fingerprint(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _fmt(value) -> str:
    """One cell: shortest round-tripping float form, empty for absent values."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    number = float(value)
    if math.isnan(number):
        return ""
    return repr(number)


def _json_safe(value):
    if isinstance(value, dict):
        return {str(k): _json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    if isinstance(value, bool):
        return value
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        number = float(value)
        return number if math.isfinite(number) else None
    if isinstance(value, pd.Timestamp):
        return value.date().isoformat()
    return value


def metrics_to_dict(report: MetricsReport) -> dict[str, object]:
    return {
        "cagr": report.cagr,
        "annualized_vol": report.ann_vol,
        "sharpe": report.sharpe,
        "sharpe_flagged": report.sharpe_flagged,
        "sortino": report.sortino,
        "sortino_flagged": report.sortino_flagged,
        "max_drawdown": report.max_drawdown,
        "calmar": report.calmar,
        "calmar_flagged": report.calmar_flagged,
        "monthly_win_rate": report.monthly_win_rate,
        "total_gross_return": report.total_gross_return,
        "total_net_return": report.total_net_return,
        "total_friction_cost": report.total_friction_cost,
        "friction_impact": report.friction_impact,
        "years": report.years,
        "n_periods": report.n_periods,
        "final_equity": report.final_equity,
        "avg_annual_sortino": report.avg_annual_sortino,
        "outlier_adjusted_sortino": report.outlier_adjusted_sortino,
        "outlier_excluded_years": list(report.outlier_excluded_years),
        "outlier_cutoff": report.outlier_cutoff,
    }


def _annual_row_dict(row: AnnualRow) -> dict[str, object]:
    return {
        "year": row.year,
        "months": row.months,
        "basket_size": row.basket_size,
        "gross_return": row.gross,
        "friction_cost": row.friction_cost,
        "net_return": row.net,
        "avg_monthly_net": row.avg_monthly,
        "annualized_vol": row.ann_vol,
        "sortino": row.sortino,
        "sortino_flagged": row.sortino_flagged,
        "win_rate": row.win_rate,
        "max_drawdown": row.max_drawdown,
    }


def build_report_dict(
    result: BacktestResult,
    report: MetricsReport,
    manifest: RunManifest,
) -> dict[str, object]:
    data = {
        "schema_version": SCHEMA_VERSION,
        "strategy": result.strategy,
        "manifest": manifest.to_json_dict(),
        "metrics": metrics_to_dict(report),
        "annual_table": [_annual_row_dict(r) for r in report.annual_table],
        "period_count": len(result.periods),
        "first_test_start": result.periods[0].test_start,
        "last_test_end": result.periods[-1].test_end,
    }
    return _json_safe(data)


def validate_report(data: dict) -> None:
    """Schema gate for report.json; raises DataError on the first violation."""
    if not isinstance(data, dict):
        raise DataError("report must be a JSON object")
    if data.get("schema_version") != SCHEMA_VERSION:
        raise DataError(
            f"schema_version {data.get('schema_version')!r} != {SCHEMA_VERSION}"
        )
    for key in ("strategy", "manifest", "metrics", "annual_table", "period_count"):
        if key not in data:
            raise DataError(f"report missing key {key!r}")
    manifest = data["manifest"]
    for key in ("config", "data_fingerprints", "engine_version", "warnings"):
        if key not in manifest:
            raise DataError(f"manifest missing key {key!r}")
    metrics = data["metrics"]
    for key in metrics:
        value = metrics[key]
        if isinstance(value, float) and not math.isfinite(value):
            raise DataError(f"non-finite metric {key} leaked into report")
    for key in ("cagr", "max_drawdown", "n_periods", "final_equity"):
        if key not in metrics:
            raise DataError(f"metrics missing key {key!r}")
    if not isinstance(data["annual_table"], list):
        raise DataError("annual_table must be a list")


def write_report_json(path: str, data: dict) -> None:
    validate_report(data)
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(data, handle, sort_keys=True, indent=2, allow_nan=False)
        handle.write("\n")


def read_report_json(path: str) -> dict:
    with open(path, encoding="utf-8") as handle:
        data = json.load(handle)
    validate_report(data)
    return data


def _write_rows(path: str, header: list[str], rows: Iterable[list[str]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        writer.writerows(rows)


def write_periods_csv(path: str, result: BacktestResult) -> None:
    rows = []
    for record in result.periods:
        train_start, train_end, test_start, test_end = record.period
        weights = record.weight_map
        rows.append([
            train_start.date().isoformat(),
            train_end.date().isoformat(),
            test_start.date().isoformat(),
            test_end.date().isoformat(),
            _fmt(record.cash_period),
            str(record.basket.size if record.basket is not None else 0),
            str(sum(1 for w in weights.values() if w > 0)),
            _fmt(record.gross_return),
            _fmt(record.turnover),
            _fmt(record.friction_cost),
            _fmt(record.net_return),
            "|".join(record.delistings),
            record.diagnostic,
        ])
    _write_rows(path, PERIOD_COLUMNS, rows)


def read_periods_csv(path: str) -> list[dict[str, object]]:
    out: list[dict[str, object]] = []
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header != PERIOD_COLUMNS:
            raise ParseError(f"header must be {','.join(PERIOD_COLUMNS)}", line=1, path=path)
        for line_no, row in enumerate(reader, start=2):
            if len(row) != len(PERIOD_COLUMNS):
                raise ParseError(
                    f"expected {len(PERIOD_COLUMNS)} columns, found {len(row)}",
                    line=line_no, path=path,
                )
            rec = dict(zip(PERIOD_COLUMNS, row))
            for key in ("gross_return", "turnover", "friction_cost", "net_return"):
                rec[key] = float(rec[key])  # type: ignore[arg-type]
            rec["cash_period"] = rec["cash_period"] == "true"
            rec["basket_size"] = int(rec["basket_size"])  # type: ignore[arg-type]
            rec["n_positions"] = int(rec["n_positions"])  # type: ignore[arg-type]
            out.append(rec)
    return out


def write_series_csv(path: str, name: str, points: list[tuple[pd.Timestamp, float]]) -> None:
    rows = [[stamp.date().isoformat(), _fmt(value)] for stamp, value in points]
    _write_rows(path, ["date", name], rows)


def read_series_csv(path: str) -> list[tuple[pd.Timestamp, float]]:
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if not header or len(header) != 2 or header[0] != "date":
            raise ParseError("expected a date,value header", line=1, path=path)
        out = []
        for line_no, row in enumerate(reader, start=2):
            if len(row) != 2:
                raise ParseError(f"expected 2 columns, found {len(row)}", line=line_no, path=path)
            try:
                out.append((pd.Timestamp(row[0]), float(row[1])))
            except ValueError as exc:
                raise ParseError(str(exc), line=line_no, path=path) from None
    return out


def monthly_histogram(net_returns: list[float], bin_width: float = 0.01):
    """Fixed-width bins aligned to the bin width, covering the sample range."""
    if not net_returns:
        raise DataError("no returns to bin")
    arr = np.asarray(net_returns, dtype=float)
    lo = math.floor(arr.min() / bin_width) * bin_width
    hi = math.ceil(arr.max() / bin_width) * bin_width
    if hi <= lo:
        hi = lo + bin_width
    n_bins = int(round((hi - lo) / bin_width))
    edges = lo + bin_width * np.arange(n_bins + 1)
    counts, _ = np.histogram(arr, bins=edges)
    return edges, counts


def write_histogram_csv(path: str, net_returns: list[float]) -> None:
    edges, counts = monthly_histogram(net_returns)
    rows = [
        [_fmt(edges[i]), _fmt(edges[i + 1]), str(int(counts[i]))]
        for i in range(len(counts))
    ]
    _write_rows(path, ["bin_left", "bin_right", "count"], rows)


def read_histogram_csv(path: str) -> list[tuple[float, float, int]]:
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header != ["bin_left", "bin_right", "count"]:
            raise ParseError("expected bin_left,bin_right,count header", line=1, path=path)
        out = []
        for line_no, row in enumerate(reader, start=2):
            try:
                out.append((float(row[0]), float(row[1]), int(row[2])))
            except (ValueError, IndexError) as exc:
                raise ParseError(str(exc), line=line_no, path=path) from None
    return out


def write_annual_csv(path: str, rows: list[AnnualRow]) -> None:
    table = []
    for row in rows:
        d = _annual_row_dict(row)
        table.append([_fmt(d[c]) if not isinstance(d[c], str) else d[c] for c in ANNUAL_COLUMNS])
    _write_rows(path, ANNUAL_COLUMNS, table)


def read_annual_csv(path: str) -> list[dict[str, object]]:
    out: list[dict[str, object]] = []
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header != ANNUAL_COLUMNS:
            raise ParseError(f"header must be {','.join(ANNUAL_COLUMNS)}", line=1, path=path)
        for line_no, row in enumerate(reader, start=2):
            if len(row) != len(ANNUAL_COLUMNS):
                raise ParseError(
                    f"expected {len(ANNUAL_COLUMNS)} columns, found {len(row)}",
                    line=line_no, path=path,
                )
            rec = dict(zip(ANNUAL_COLUMNS, row))
            rec["year"] = int(rec["year"])  # type: ignore[arg-type]
            rec["months"] = int(rec["months"])  # type: ignore[arg-type]
            rec["basket_size"] = int(rec["basket_size"])  # type: ignore[arg-type]
            rec["sortino_flagged"] = rec["sortino_flagged"] == "true"
            for key in ("gross_return", "friction_cost", "net_return", "avg_monthly_net",
                        "annualized_vol", "win_rate", "max_drawdown"):
                rec[key] = float(rec[key])  # type: ignore[arg-type]
            rec["sortino"] = float(rec["sortino"]) if rec["sortino"] != "" else None
            out.append(rec)
    return out


@dataclass
class SweepCell:
    lookback_months: int
    diversifier_count: int
    status: str  # "ok" | "failed"
    cagr: float | None = None
    max_drawdown: float | None = None
    avg_vol: float | None = None
    error: str = ""


def write_sweep_csv(path: str, cells: list[SweepCell]) -> None:
    rows = []
    for cell in sorted(cells, key=lambda c: (c.lookback_months, c.diversifier_count)):
        rows.append([
            str(cell.lookback_months),
            str(cell.diversifier_count),
            cell.status,
            _fmt(cell.cagr),
            _fmt(cell.max_drawdown),
            _fmt(cell.avg_vol),
            cell.error,
        ])
    _write_rows(path, SWEEP_COLUMNS, rows)


def read_sweep_csv(path: str) -> list[SweepCell]:
    out: list[SweepCell] = []
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header != SWEEP_COLUMNS:
            raise ParseError(f"header must be {','.join(SWEEP_COLUMNS)}", line=1, path=path)
        for line_no, row in enumerate(reader, start=2):
            if len(row) != len(SWEEP_COLUMNS):
                raise ParseError(
                    f"expected {len(SWEEP_COLUMNS)} columns, found {len(row)}",
                    line=line_no, path=path,
                )
            out.append(SweepCell(
                lookback_months=int(row[0]),
                diversifier_count=int(row[1]),
                status=row[2],
                cagr=float(row[3]) if row[3] else None,
                max_drawdown=float(row[4]) if row[4] else None,
                avg_vol=float(row[5]) if row[5] else None,
                error=row[6],
            ))
    return out


def write_wide_csv(
    path: str,
    columns: dict[str, list[tuple[pd.Timestamp, float]]],
) -> None:
    """Aligned multi-series table: date column plus one column per label.

    Series are outer-joined on dates; a series missing a date gets an empty
    cell. Used for strategy comparison curves.
    """
    if not columns:
        raise DataError("no series to write")
    labels = sorted(columns)
    merged: dict[pd.Timestamp, dict[str, float]] = {}
    for label in labels:
        for stamp, value in columns[label]:
            merged.setdefault(stamp, {})[label] = value
    rows = []
    for stamp in sorted(merged):
        row = [stamp.date().isoformat()]
        for label in labels:
            row.append(_fmt(merged[stamp].get(label)))
        rows.append(row)
    _write_rows(path, ["date"] + labels, rows)


def read_wide_csv(path: str) -> dict[str, list[tuple[pd.Timestamp, float]]]:
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if not header or header[0] != "date" or len(header) < 2:
            raise ParseError("expected date plus at least one series column", line=1, path=path)
        labels = header[1:]
        out: dict[str, list[tuple[pd.Timestamp, float]]] = {label: [] for label in labels}
        for line_no, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise ParseError(
                    f"expected {len(header)} columns, found {len(row)}",
                    line=line_no, path=path,
                )
            stamp = pd.Timestamp(row[0])
            for label, cell in zip(labels, row[1:]):
                if cell:
                    out[label].append((stamp, float(cell)))
    return out


def write_backtest_artifacts(
    out_dir: str,
    result: BacktestResult,
    report: MetricsReport,
    manifest: RunManifest,
) -> dict[str, str]:
    """Emit the full artifact set for one run; returns artifact name -> path."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "report": os.path.join(out_dir, "report.json"),
        "periods": os.path.join(out_dir, "periods.csv"),
        "equity_curve": os.path.join(out_dir, "equity_curve.csv"),
        "drawdown": os.path.join(out_dir, "drawdown.csv"),
        "monthly_histogram": os.path.join(out_dir, "monthly_histogram.csv"),
        "annual_table": os.path.join(out_dir, "annual_table.csv"),
    }
    write_report_json(paths["report"], build_report_dict(result, report, manifest))
    write_periods_csv(paths["periods"], result)
    write_series_csv(paths["equity_curve"], "equity", result.equity_curve)

    equity_values = np.array([v for _, v in result.equity_curve])
    depths = underwater(equity_values)
    drawdown_points = [
        (stamp, float(dd)) for (stamp, _), dd in zip(result.equity_curve, depths)
    ]
    write_series_csv(paths["drawdown"], "drawdown", drawdown_points)

    write_histogram_csv(
        paths["monthly_histogram"], [p.net_return for p in result.periods]
    )
    write_annual_csv(paths["annual_table"], report.annual_table)
    return paths
