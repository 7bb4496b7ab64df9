"""Momentum basket construction with correlation-aware diversification,
downside-risk-optimized allocation, and a walk-forward backtester."""

__version__ = "0.1.0"

from .allocation_engine import AllocationProblem, WeightVector, optimize
from .backtest_engine import BacktestConfig, BacktestResult, run, run_strategy
from .errors import (
    AegisError,
    ConfigError,
    DataError,
    DomainError,
    EligibilityError,
    EmptyPanelError,
    FetchError,
    InfeasibleError,
    ParameterError,
    ParseError,
    SelectionError,
    UndefinedCorrelationError,
)
from .market_data import (
    AssetMeta,
    PricePanel,
    ReturnsPanel,
    align_and_fill,
    ingest_csv,
    log_returns,
    read_metadata_csv,
)
from .metrics import MetricsReport, compute_report

__all__ = [
    "__version__",
    "AegisError",
    "AllocationProblem",
    "AssetMeta",
    "BacktestConfig",
    "BacktestResult",
    "ConfigError",
    "DataError",
    "DomainError",
    "EligibilityError",
    "EmptyPanelError",
    "FetchError",
    "InfeasibleError",
    "MetricsReport",
    "ParameterError",
    "ParseError",
    "PricePanel",
    "ReturnsPanel",
    "SelectionError",
    "UndefinedCorrelationError",
    "WeightVector",
    "align_and_fill",
    "compute_report",
    "ingest_csv",
    "log_returns",
    "optimize",
    "read_metadata_csv",
    "run",
    "run_strategy",
]
