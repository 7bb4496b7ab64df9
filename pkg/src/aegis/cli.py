"""Command-line entry point: backtest, parameter sweep, strategy comparison.

Each command loads settings (file, environment, flags), ingests the price and
metadata CSVs, drives the engine, and writes artifacts plus rendered figures
into the output directory. Failures surface as a single structured JSON line
on stderr and a nonzero exit, so callers can script against the tool.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace

from . import __version__
from . import backtest_engine, baselines, fixtures, metrics, reporting
from .config import RunSettings, config_snapshot, load_settings
from .errors import AegisError, ConfigError
from .market_data import ingest_csv, read_metadata_csv

logger = logging.getLogger(__name__)

DEFAULT_LOOKBACKS = "3,6,12"
DEFAULT_DIVERSIFIERS = "22,47,72"
DEFAULT_STRATEGIES = "aegis,csm,risk_parity,equal_weight"
STRATEGY_NAMES = ("aegis",) + baselines.BASELINE_KINDS


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="aegis",
        description="Momentum basket construction and walk-forward backtesting.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="key=value config file")
        p.add_argument("--prices", help="price panel CSV (date column + one per ticker)")
        p.add_argument("--meta", help="asset metadata CSV")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--relax-cap", action="store_true",
                       help="widen the per-asset cap to 1/N when N*cap < 1")
        p.add_argument("--seed-fixtures", metavar="DIR",
                       help="generate the synthetic fixture market in DIR and run on it")

    p_back = sub.add_parser("backtest", help="run one walk-forward backtest")
    add_common(p_back)
    p_back.add_argument("--strategy", default="aegis", choices=STRATEGY_NAMES)

    p_sweep = sub.add_parser("sweep", help="grid of backtests over look-back x basket size")
    add_common(p_sweep)
    p_sweep.add_argument("--lookbacks", default=DEFAULT_LOOKBACKS,
                         help="comma-separated allocation look-backs in months")
    p_sweep.add_argument("--diversifiers", default=DEFAULT_DIVERSIFIERS,
                         help="comma-separated diversifier counts")
    p_sweep.add_argument("--workers", type=int, default=3, help="parallel sweep cells")

    p_cmp = sub.add_parser("compare", help="run several strategies on identical data")
    add_common(p_cmp)
    p_cmp.add_argument("--strategies", default=DEFAULT_STRATEGIES,
                       help="comma-separated strategy names (>= 2)")
    return parser


def _emit_error(exc: Exception) -> None:
    payload = {"error": type(exc).__name__, "message": str(exc)}
    print(json.dumps(payload, sort_keys=True), file=sys.stderr)


def _load_inputs(args) -> tuple[RunSettings, object, dict, dict[str, str]]:
    overrides: dict[str, str] = {}
    if args.relax_cap:
        overrides["relax_cap"] = "true"
    settings = load_settings(path=args.config, overrides=overrides)

    prices_path, meta_path = args.prices, args.meta
    if args.seed_fixtures:
        if prices_path or meta_path:
            raise ConfigError("--seed-fixtures replaces --prices/--meta; pass one or the other")
        prices_path, meta_path = fixtures.seed_fixtures(args.seed_fixtures)
        logger.info("seeded fixture market at %s", args.seed_fixtures)
    if not prices_path or not meta_path:
        raise ConfigError("--prices and --meta are required (or use --seed-fixtures)")

    panel = ingest_csv(prices_path, min_points=settings.backtest.min_points)
    meta = read_metadata_csv(meta_path)
    fingerprints = {
        "prices": reporting.file_fingerprint(prices_path),
        "meta": reporting.file_fingerprint(meta_path),
    }
    if args.config:
        fingerprints["config"] = reporting.file_fingerprint(args.config)
    return settings, panel, meta, fingerprints


def _make_strategy(name: str, settings: RunSettings, meta) -> backtest_engine.Strategy:
    if name == "aegis":
        sectors = {t: m.sector for t, m in meta.items()}
        return backtest_engine.AegisStrategy(settings.backtest, sectors)
    return baselines.make_strategy(name, replace(settings.baseline))


def _run_one(settings: RunSettings, panel, meta, name: str) -> backtest_engine.BacktestResult:
    strategy = _make_strategy(name, settings, meta)
    return backtest_engine.run_strategy(settings.backtest, panel, strategy)


def _manifest(settings, fingerprints, warnings, started) -> reporting.RunManifest:
    return reporting.RunManifest(
        config_snapshot=config_snapshot(settings),
        data_fingerprints=fingerprints,
        engine_version=__version__,
        warnings=warnings,
        duration_seconds=time.monotonic() - started,
    )


def _cmd_backtest(args) -> int:
    started = time.monotonic()
    settings, panel, meta, fingerprints = _load_inputs(args)
    result = _run_one(settings, panel, meta, args.strategy)
    report = metrics.compute_report(
        result,
        rf_annual=settings.backtest.rf_annual,
        outlier_cutoff=settings.backtest.outlier_sortino_cutoff,
    )
    manifest = _manifest(settings, fingerprints, result.warnings, started)
    paths = reporting.write_backtest_artifacts(args.out, result, report, manifest)

    from . import plots

    paths.update(plots.render_backtest_figures(args.out, result))
    logger.info("backtest finished in %.1fs", manifest.duration_seconds)
    print(f"strategy        {result.strategy}")
    print(f"periods         {report.n_periods}")
    print(f"final equity    {report.final_equity:.4f}")
    print(f"cagr            {report.cagr:.4%}")
    print(f"max drawdown    {report.max_drawdown:.4%}")
    print(f"artifacts       {args.out}")
    for name in sorted(paths):
        print(f"  {name}: {paths[name]}")
    return 0


def _parse_int_list(text: str, flag: str) -> list[int]:
    try:
        values = [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise ConfigError(f"{flag} must be comma-separated integers, got {text!r}") from None
    if not values:
        raise ConfigError(f"{flag} must name at least one value")
    return values


def _cmd_sweep(args) -> int:
    started = time.monotonic()
    settings, panel, meta, fingerprints = _load_inputs(args)
    lookbacks = _parse_int_list(args.lookbacks, "--lookbacks")
    diversifiers = _parse_int_list(args.diversifiers, "--diversifiers")

    def run_cell(cell: tuple[int, int]) -> reporting.SweepCell:
        lookback, count = cell
        cell_config = replace(
            settings.backtest,
            allocation_lookback_months=lookback,
            diversifier_count=count,
            target_basket_size=count + 3,
        )
        cell_settings = RunSettings(backtest=cell_config, baseline=settings.baseline)
        try:
            result = _run_one(cell_settings, panel, meta, "aegis")
            report = metrics.compute_report(result, rf_annual=cell_config.rf_annual)
            vols = [r.ann_vol for r in report.annual_table if r.months >= 2]
            avg_vol = sum(vols) / len(vols) if vols else report.ann_vol
            return reporting.SweepCell(
                lookback_months=lookback,
                diversifier_count=count,
                status="ok",
                cagr=report.cagr,
                max_drawdown=report.max_drawdown,
                avg_vol=avg_vol,
            )
        except AegisError as exc:
            logger.warning("sweep cell (%dm, %d) failed: %s", lookback, count, exc)
            return reporting.SweepCell(
                lookback_months=lookback,
                diversifier_count=count,
                status="failed",
                error=f"{type(exc).__name__}: {exc}",
            )

    grid = [(lb, dc) for lb in lookbacks for dc in diversifiers]
    with ThreadPoolExecutor(max_workers=max(1, args.workers)) as pool:
        cells = list(pool.map(run_cell, grid))

    os.makedirs(args.out, exist_ok=True)
    sweep_path = os.path.join(args.out, "sweep.csv")
    reporting.write_sweep_csv(sweep_path, cells)
    _write_manifest_json(args.out, _manifest(settings, fingerprints, [], started))

    from . import plots

    plots.render_sweep(os.path.join(args.out, "sweep.png"), cells)
    logger.info("sweep finished in %.1fs", time.monotonic() - started)
    ok = sum(1 for c in cells if c.status == "ok")
    print(f"cells           {len(cells)} ({ok} ok, {len(cells) - ok} failed)")
    print(f"matrix          {sweep_path}")
    return 0


def _cmd_compare(args) -> int:
    started = time.monotonic()
    settings, panel, meta, fingerprints = _load_inputs(args)
    names = [part.strip() for part in args.strategies.split(",") if part.strip()]
    if len(names) < 2:
        raise ConfigError("compare needs at least 2 strategies")
    unknown = sorted(set(names) - set(STRATEGY_NAMES))
    if unknown:
        raise ConfigError(
            f"unknown strategies: {', '.join(unknown)}; valid: {', '.join(STRATEGY_NAMES)}"
        )

    labels: list[str] = []
    for name in names:
        label, n = name, 1
        while label in labels:
            n += 1
            label = f"{name}_{n}"
        labels.append(label)

    curves: dict[str, list] = {}
    annual: dict[str, dict[int, float]] = {}
    for name, label in zip(names, labels):
        result = _run_one(settings, panel, meta, name)
        curves[label] = result.equity_curve
        annual[label] = {row.year: row.net for row in result.annual_summaries}

    os.makedirs(args.out, exist_ok=True)
    equity_path = os.path.join(args.out, "compare_equity.csv")
    reporting.write_wide_csv(equity_path, curves)

    years = sorted({year for rows in annual.values() for year in rows})
    annual_path = os.path.join(args.out, "compare_annual.csv")
    _write_compare_annual(annual_path, labels, years, annual)
    _write_manifest_json(args.out, _manifest(settings, fingerprints, [], started))

    from . import plots

    plots.render_compare(os.path.join(args.out, "compare.png"), curves)
    logger.info("compare finished in %.1fs", time.monotonic() - started)
    print(f"strategies      {', '.join(labels)}")
    print(f"equity curves   {equity_path}")
    print(f"annual table    {annual_path}")
    return 0


def _write_manifest_json(out_dir: str, manifest: reporting.RunManifest) -> None:
    path = os.path.join(out_dir, "manifest.json")
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(manifest.to_json_dict(), handle, sort_keys=True, indent=2, allow_nan=False)
        handle.write("\n")


def _write_compare_annual(
    path: str,
    labels: list[str],
    years: list[int],
    annual: dict[str, dict[int, float]],
) -> None:
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["year"] + labels)
        for year in years:
            row = [str(year)]
            for label in labels:
                value = annual[label].get(year)
                row.append("" if value is None else repr(float(value)))
            writer.writerow(row)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    handlers = {"backtest": _cmd_backtest, "sweep": _cmd_sweep, "compare": _cmd_compare}
    try:
        return handlers[args.command](args)
    except AegisError as exc:
        _emit_error(exc)
        return 1
    except OSError as exc:
        _emit_error(exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
