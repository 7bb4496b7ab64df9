import pytest

from aegis import fixtures
from aegis.backtest_engine import BacktestConfig, run


@pytest.fixture(scope="session")
def small_market():
    """40-asset, 3-year market shared by module tests. Treat as read-only."""
    return fixtures.synthetic_market(n_assets=40, years=3, seed=11)


@pytest.fixture(scope="session")
def small_config():
    # 15-name basket keeps cap * size >= 1 out of reach, so relax_cap is on
    return BacktestConfig(target_basket_size=15, diversifier_count=12, relax_cap=True)


@pytest.fixture(scope="session")
def small_result(small_market, small_config):
    panel, meta = small_market
    return run(small_config, panel, meta)


@pytest.fixture(scope="session")
def small_csv_dir(tmp_path_factory, small_market):
    panel, meta = small_market
    out = tmp_path_factory.mktemp("small_market")
    prices_path, meta_path = fixtures.write_market_csvs(panel, meta, str(out))
    return {"dir": str(out), "prices": prices_path, "meta": meta_path}


@pytest.fixture(scope="session")
def big_market():
    """Full-size 200-asset, 5-year market for acceptance and CLI tests."""
    return fixtures.synthetic_market(n_assets=200, years=5, seed=7)


@pytest.fixture(scope="session")
def big_csv_dir(tmp_path_factory, big_market):
    panel, meta = big_market
    out = tmp_path_factory.mktemp("market")
    prices_path, meta_path = fixtures.write_market_csvs(panel, meta, str(out))
    return {"dir": str(out), "prices": prices_path, "meta": meta_path}
