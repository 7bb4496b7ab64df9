import numpy as np
import pandas as pd
import pytest

from aegis.errors import ParameterError
from aegis.fixtures import (
    BOND_PROXY,
    DEAD_STOCK,
    SECTORS,
    STOCK_PROXY,
    synthetic_market,
    write_market_csvs,
)
from aegis.market_data import ingest_csv, read_metadata_csv


class TestSyntheticMarket:
    def test_shape_and_composition(self, small_market):
        panel, meta = small_market
        assert panel.frame.shape == (3 * 252, 40)
        assert set(panel.tickers) == set(meta)
        for special in (STOCK_PROXY, BOND_PROXY, DEAD_STOCK):
            assert special in panel.tickers

    def test_same_seed_reproduces_bit_for_bit(self):
        a, _ = synthetic_market(n_assets=25, years=1, seed=3)
        b, _ = synthetic_market(n_assets=25, years=1, seed=3)
        pd.testing.assert_frame_equal(a.frame, b.frame)

    def test_different_seeds_differ(self):
        a, _ = synthetic_market(n_assets=25, years=1, seed=3)
        b, _ = synthetic_market(n_assets=25, years=1, seed=4)
        assert not a.frame.equals(b.frame)

    def test_prices_positive_where_present(self, small_market):
        panel, _ = small_market
        values = panel.frame.to_numpy()
        assert np.all(np.isnan(values) | (values > 0))

    def test_business_day_calendar(self, small_market):
        panel, _ = small_market
        assert panel.frame.index.is_monotonic_increasing
        assert all(stamp.dayofweek < 5 for stamp in panel.frame.index)

    def test_dead_stock_dies_mid_panel(self, small_market):
        panel, _ = small_market
        col = panel.frame[DEAD_STOCK]
        last = col.last_valid_index()
        assert last < panel.frame.index[-1]
        # roughly the midpoint, and silent afterwards
        position = panel.frame.index.get_loc(last)
        assert abs(position - len(col) // 2) <= 1
        assert col.loc[col.index > last].isna().all()

    def test_dead_stock_bleeds_into_the_grave(self, small_market):
        panel, _ = small_market
        col = panel.frame[DEAD_STOCK].dropna()
        assert col.iloc[-1] < col.iloc[-90] * 0.5

    def test_late_listings_have_nan_heads(self, small_market):
        panel, _ = small_market
        heads = {
            t: panel.frame[t].first_valid_index() for t in panel.tickers
        }
        late = [t for t, first in heads.items() if first != panel.frame.index[0]]
        # DECAYCO starts on day one; only IPO names start late
        assert DEAD_STOCK not in late
        assert len(late) >= 1
        for t in late:
            head = panel.frame[t].loc[panel.frame.index < heads[t]]
            assert head.isna().all()

    def test_proxies_span_the_full_panel(self, small_market):
        panel, _ = small_market
        for proxy in (STOCK_PROXY, BOND_PROXY):
            assert not panel.frame[proxy].isna().any()

    def test_bond_proxy_is_the_quiet_leg(self, small_market):
        panel, _ = small_market
        stock_vol = np.diff(np.log(panel.frame[STOCK_PROXY].to_numpy())).std()
        bond_vol = np.diff(np.log(panel.frame[BOND_PROXY].to_numpy())).std()
        assert bond_vol < stock_vol / 2

    def test_sectors_cover_at_least_three(self, small_market):
        _, meta = small_market
        sectors = {m.sector for m in meta.values() if m.sector in SECTORS}
        assert len(sectors) >= 3

    def test_active_windows_match_prices(self, small_market):
        panel, meta = small_market
        for ticker, m in meta.items():
            first, last = m.active_window
            col = panel.frame[ticker]
            assert first == col.first_valid_index()
            assert last == col.last_valid_index()

    def test_bad_parameters(self):
        with pytest.raises(ParameterError):
            synthetic_market(n_assets=10)
        with pytest.raises(ParameterError):
            synthetic_market(n_assets=30, years=0)


class TestCsvRoundTrip:
    def test_write_then_ingest_reproduces_panel(self, small_market, small_csv_dir):
        panel, meta = small_market
        back = ingest_csv(small_csv_dir["prices"], min_points=1)
        assert back.tickers == panel.tickers
        pd.testing.assert_frame_equal(back.frame, panel.frame, check_freq=False)

    def test_metadata_survives_round_trip(self, small_market, small_csv_dir):
        _, meta = small_market
        back = read_metadata_csv(small_csv_dir["meta"])
        assert set(back) == set(meta)
        for ticker, m in meta.items():
            b = back[ticker]
            assert b.sector == m.sector
            assert b.shares_outstanding == m.shares_outstanding
            assert b.iwf == m.iwf
            assert b.advt == m.advt
            assert b.active_window == m.active_window

    def test_writes_go_under_the_given_directory(self, small_market, tmp_path):
        panel, meta = small_market
        prices, meta_path = write_market_csvs(panel, meta, str(tmp_path / "x"))
        assert prices.startswith(str(tmp_path / "x"))
        assert meta_path.startswith(str(tmp_path / "x"))
