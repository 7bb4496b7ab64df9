"""Flat key=value configuration with environment overrides.

A config file is plain text: one ``key = value`` per line, ``#`` comments,
blank lines ignored. Keys mirror the backtest and baseline settings fields.
Any key can also be supplied as an environment variable with an ``AEGIS_``
prefix (``AEGIS_CAP=0.04``), which wins over the file. Unknown keys are hard
errors so typos cannot silently run with defaults.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, fields
from datetime import date

from .backtest_engine import BacktestConfig
from .baselines import BaselineConfig
from .errors import ConfigError

ENV_PREFIX = "AEGIS_"

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}

_INT_KEYS = {
    "selection_lookback_months", "allocation_lookback_months",
    "rebalance_frequency_months", "skip_days", "target_basket_size",
    "diversifier_count", "min_points", "trading_days_per_month",
    "solver_maxiter", "rp_vol_lookback_months",
}
_FLOAT_KEYS = {
    "friction_bps", "rf_annual", "cap", "epsilon", "solver_ftol",
    "outlier_sortino_cutoff", "csm_top_fraction",
}
_BOOL_KEYS = {"relax_cap"}
_DATE_KEYS = {"start_date", "end_date"}
_STR_KEYS = {"baseline_kind", "stock_proxy", "bond_proxy"}

_BACKTEST_FIELDS = {f.name for f in fields(BacktestConfig)}
_BASELINE_FIELDS = {f.name for f in fields(BaselineConfig)}

VALID_KEYS = _INT_KEYS | _FLOAT_KEYS | _BOOL_KEYS | _DATE_KEYS | _STR_KEYS


@dataclass
class RunSettings:
    backtest: BacktestConfig
    baseline: BaselineConfig


def parse_kv_text(text: str, source: str = "<config>") -> dict[str, str]:
    """Parse key=value lines into a string map; later duplicates win."""
    out: dict[str, str] = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{source}: line {line_no}: expected key=value, got {line!r}")
        key, value = line.split("=", 1)
        key = key.strip().lower()
        if not key:
            raise ConfigError(f"{source}: line {line_no}: empty key")
        out[key] = value.strip()
    return out


def _coerce(key: str, value: str, source: str):
    try:
        if key in _INT_KEYS:
            return int(value)
        if key in _FLOAT_KEYS:
            return float(value)
        if key in _BOOL_KEYS:
            low = value.lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError(f"not a boolean: {value!r}")
        if key in _DATE_KEYS:
            return date.fromisoformat(value) if value else None
        return value
    except ValueError as exc:
        raise ConfigError(f"{source}: bad value for {key}: {exc}") from None


def load_settings(
    path: str | None = None,
    env: dict[str, str] | None = None,
    overrides: dict[str, str] | None = None,
) -> RunSettings:
    """Assemble settings from file, then environment, then explicit overrides."""
    environ = os.environ if env is None else env
    raw: dict[str, tuple[str, str]] = {}

    if path is not None:
        try:
            with open(path, encoding="utf-8") as handle:
                text = handle.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc.strerror}") from None
        for key, value in parse_kv_text(text, source=path).items():
            raw[key] = (value, path)

    for key in sorted(VALID_KEYS):
        env_key = ENV_PREFIX + key.upper()
        if env_key in environ:
            raw[key] = (environ[env_key], f"${env_key}")

    if overrides:
        for key, value in overrides.items():
            raw[key.lower()] = (str(value), "<override>")

    unknown = sorted(set(raw) - VALID_KEYS)
    if unknown:
        raise ConfigError(
            f"unknown config keys: {', '.join(unknown)}; "
            f"valid keys: {', '.join(sorted(VALID_KEYS))}"
        )

    backtest_kwargs = {}
    baseline_kwargs = {}
    for key, (value, source) in raw.items():
        coerced = _coerce(key, value, source)
        if key == "baseline_kind":
            baseline_kwargs["kind"] = coerced
        elif key in _BASELINE_FIELDS and key not in _BACKTEST_FIELDS:
            baseline_kwargs[key] = coerced
        else:
            backtest_kwargs[key] = coerced

    backtest = BacktestConfig(**backtest_kwargs)
    backtest.validate()
    baseline = BaselineConfig(**baseline_kwargs)
    baseline.validate()
    return RunSettings(backtest=backtest, baseline=baseline)


def config_snapshot(settings: RunSettings) -> dict[str, object]:
    """Flat, JSON-ready view of every setting, for embedding in reports."""
    snap: dict[str, object] = {}
    for f in fields(settings.backtest):
        value = getattr(settings.backtest, f.name)
        snap[f.name] = value.isoformat() if isinstance(value, date) else value
    for f in fields(settings.baseline):
        key = "baseline_kind" if f.name == "kind" else f.name
        snap[key] = getattr(settings.baseline, f.name)
    return snap
