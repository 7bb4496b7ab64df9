import math
from datetime import date

import numpy as np
import pandas as pd
import pytest

from _utils import bd_index, price_panel, write_price_csv
from aegis.errors import (
    DataError,
    EmptyPanelError,
    FetchError,
    ParseError,
)
from aegis.market_data import (
    CsvPanelFetcher,
    align_and_fill,
    fetch_remote,
    ingest_csv,
    log_returns,
    normalize_ticker,
    read_metadata_csv,
)


def test_normalize_class_share_dot():
    assert normalize_ticker("BRK.B") == "BRK-B"
    assert normalize_ticker("  brk.b ") == "BRK-B"
    assert normalize_ticker("msft") == "MSFT"


def test_normalize_rejects_empty():
    with pytest.raises(DataError):
        normalize_ticker("   ")


def test_min_points_boundary(tmp_path):
    # SPARSE has exactly 19 valid prices, FULL has 25
    dates = bd_index(25)
    sparse = [100.0 + i for i in range(25)]
    for i in range(6):
        sparse[i] = None
    panel = ingest_csv(
        write_price_csv(tmp_path / "p.csv", dates, {"FULL": [50.0] * 25, "SPARSE": sparse}),
        min_points=20,
    )
    assert panel.tickers == ["FULL"]
    assert "SPARSE" in panel.rejections
    assert "19" in panel.rejections["SPARSE"]

    panel20 = ingest_csv(
        write_price_csv(tmp_path / "p20.csv", dates, {"SPARSE": [None] * 5 + [7.0] * 20}),
        min_points=20,
    )
    assert panel20.tickers == ["SPARSE"]


def test_duplicate_date_is_parse_error(tmp_path):
    path = tmp_path / "dup.csv"
    path.write_text("date,AAA\n2020-01-06,10\n2020-01-07,11\n2020-01-06,12\n")
    with pytest.raises(ParseError, match="2020-01-06"):
        ingest_csv(str(path), min_points=1)


def test_unsorted_dates_are_sorted(tmp_path):
    path = tmp_path / "rev.csv"
    path.write_text("date,AAA\n2020-01-08,12\n2020-01-06,10\n2020-01-07,11\n")
    panel = ingest_csv(str(path), min_points=1)
    assert list(panel.frame["AAA"]) == [10.0, 11.0, 12.0]


def test_ingest_rejects_bad_cells(tmp_path):
    bad_num = tmp_path / "badnum.csv"
    bad_num.write_text("date,AAA\n2020-01-06,abc\n")
    with pytest.raises(ParseError, match="AAA"):
        ingest_csv(str(bad_num), min_points=1)

    neg = tmp_path / "neg.csv"
    neg.write_text("date,AAA\n2020-01-06,-5\n")
    with pytest.raises(DataError):
        ingest_csv(str(neg), min_points=1)

    empty = tmp_path / "empty.csv"
    empty.write_text("")
    with pytest.raises(ParseError):
        ingest_csv(str(empty), min_points=1)

    no_date = tmp_path / "nodate.csv"
    no_date.write_text("ticker,AAA\n2020-01-06,10\n")
    with pytest.raises(ParseError):
        ingest_csv(str(no_date), min_points=1)


def test_all_rejected_is_empty_panel(tmp_path):
    path = write_price_csv(tmp_path / "thin.csv", bd_index(3), {"AAA": [1.0, 2.0, 3.0]})
    with pytest.raises(EmptyPanelError):
        ingest_csv(path, min_points=10)


def test_gap_fills_with_prior_price(tmp_path):
    dates = bd_index(5)
    path = write_price_csv(
        tmp_path / "gap.csv", dates, {"AAA": [10.0, None, 11.0, 12.0, 13.0]}
    )
    raw = ingest_csv(path, min_points=1)
    assert np.isnan(raw.frame["AAA"].iloc[1])  # ingest preserves the hole
    filled = align_and_fill([raw])
    assert filled.frame["AAA"].iloc[1] == 10.0


def test_ipo_head_not_backfilled(tmp_path):
    dates = bd_index(6)
    path = write_price_csv(
        tmp_path / "ipo.csv", dates,
        {"OLD": [5.0] * 6, "NEW": [None, None, None, None, 20.0, 21.0]},
    )
    filled = align_and_fill([ingest_csv(path, min_points=1)])
    assert filled.frame["NEW"].iloc[:4].isna().all()
    assert filled.frame["NEW"].iloc[4] == 20.0


def test_no_fill_after_delisting(tmp_path):
    dates = bd_index(6)
    path = write_price_csv(
        tmp_path / "dead.csv", dates,
        {"OLD": [5.0] * 6, "GONE": [8.0, 8.5, 9.0, None, None, None]},
    )
    filled = align_and_fill([ingest_csv(path, min_points=1)])
    assert filled.frame["GONE"].iloc[3:].isna().all()


def test_align_outer_join_and_idempotence(tmp_path):
    a = ingest_csv(
        write_price_csv(tmp_path / "a.csv", bd_index(4), {"AAA": [1.0, 2.0, 3.0, 4.0]}),
        min_points=1,
    )
    b = ingest_csv(
        write_price_csv(
            tmp_path / "b.csv", bd_index(4, start="2020-01-06"), {"BBB": [9.0, 9.0, 9.0, 9.0]}
        ),
        min_points=1,
    )
    merged = align_and_fill([a, b])
    assert set(merged.tickers) == {"AAA", "BBB"}
    assert len(merged.dates) == 6  # union of the two spans
    again = align_and_fill([merged])
    pd.testing.assert_frame_equal(again.frame, merged.frame)


def test_align_duplicate_ticker_across_panels(tmp_path):
    a = ingest_csv(write_price_csv(tmp_path / "a.csv", bd_index(3), {"AAA": [1.0, 2.0, 3.0]}), min_points=1)
    b = ingest_csv(write_price_csv(tmp_path / "b.csv", bd_index(3), {"AAA": [4.0, 5.0, 6.0]}), min_points=1)
    with pytest.raises(DataError, match="AAA"):
        align_and_fill([a, b])


def test_align_analysis_window_drops_incomplete_rows(tmp_path):
    dates = bd_index(6)
    path = write_price_csv(
        tmp_path / "w.csv", dates,
        {"AAA": [1.0] * 6, "BBB": [None, None, 2.0, 2.0, 2.0, 2.0]},
    )
    panel = ingest_csv(path, min_points=1)
    clipped = align_and_fill([panel], analysis_window=(dates[0], dates[-1]))
    assert clipped.dates[0] == dates[2]  # rows before BBB lists are dropped
    assert not clipped.frame.isna().any().any()
    with pytest.raises(EmptyPanelError):
        align_and_fill(
            [panel],
            analysis_window=(pd.Timestamp("2030-01-01"), pd.Timestamp("2030-02-01")),
        )


def test_log_returns_flat_and_e_fold():
    flat = price_panel({"AAA": [100.0, 100.0]})
    rets = log_returns(flat)
    assert rets.frame["AAA"].iloc[1] == 0.0

    efold = price_panel({"AAA": [100.0, 100.0 * math.e]})
    assert log_returns(efold).frame["AAA"].iloc[1] == pytest.approx(1.0, abs=1e-12)


def test_log_returns_up_down():
    panel = price_panel({"AAA": [100.0, 110.0, 99.0]})
    col = log_returns(panel).frame["AAA"]
    assert np.isnan(col.iloc[0])  # no prior price to difference against
    assert col.iloc[1] == pytest.approx(math.log(1.1), abs=1e-12)
    assert col.iloc[2] == pytest.approx(math.log(0.9), abs=1e-12)


def test_log_returns_round_trip():
    rng = np.random.default_rng(3)
    prices = 50.0 * np.exp(np.cumsum(rng.normal(0, 0.02, size=300)))
    panel = price_panel({"AAA": prices})
    rets = log_returns(panel).frame["AAA"].to_numpy()[1:]
    rebuilt = prices[0] * np.exp(np.cumsum(rets))
    np.testing.assert_allclose(rebuilt, prices[1:], rtol=0, atol=1e-12 * prices.max())


def test_log_returns_requires_filled_panel():
    prices = np.array([10.0, np.nan, 11.0])
    panel = price_panel({"AAA": prices})
    with pytest.raises(DataError, match="align_and_fill"):
        log_returns(panel)


def test_metadata_round_trip(tmp_path):
    path = tmp_path / "meta.csv"
    path.write_text(
        "ticker,sector,shares_outstanding,iwf,advt,index_tags,first_date,last_date\n"
        "brk.b,FINANCE,1.5e9,0.99,2.5e8,SP500|DOW,2018-01-02,2022-12-30\n"
        "XYZ,TECH,2e8,1.0,1e7,,,\n"
    )
    meta = read_metadata_csv(str(path))
    assert set(meta) == {"BRK-B", "XYZ"}
    rec = meta["BRK-B"]
    assert rec.sector == "FINANCE"
    assert rec.index_tags == frozenset({"SP500", "DOW"})
    assert rec.active_window == (pd.Timestamp("2018-01-02"), pd.Timestamp("2022-12-30"))
    assert meta["XYZ"].active_window is None
    assert meta["XYZ"].index_tags == frozenset()


def test_metadata_rejects_bad_rows(tmp_path):
    bad_iwf = tmp_path / "m1.csv"
    bad_iwf.write_text(
        "ticker,sector,shares_outstanding,iwf,advt,index_tags,first_date,last_date\n"
        "AAA,TECH,1e9,1.5,1e7,,,\n"
    )
    with pytest.raises(DataError):
        read_metadata_csv(str(bad_iwf))

    dup = tmp_path / "m2.csv"
    dup.write_text(
        "ticker,sector,shares_outstanding,iwf,advt,index_tags,first_date,last_date\n"
        "AAA,TECH,1e9,1.0,1e7,,,\nAAA,TECH,1e9,1.0,1e7,,,\n"
    )
    with pytest.raises(ParseError, match="duplicate"):
        read_metadata_csv(str(dup))


def _fetch_fixture(tmp_path):
    dates = bd_index(30)
    cols = {
        "AAA": [100.0 + i for i in range(30)],
        "BBB": [50.0 + 0.5 * i for i in range(30)],
    }
    return write_price_csv(tmp_path / "remote.csv", dates, cols), dates


def test_fetch_partial_failure(tmp_path):
    path, dates = _fetch_fixture(tmp_path)
    fetcher = CsvPanelFetcher(path)
    out = fetch_remote(
        ["AAA", "BBB", "ZZZ"], (date(2020, 1, 2), date(2020, 3, 1)), fetcher
    )
    assert len(out.panels) == 2
    assert list(out.failures) == ["ZZZ"]
    # request order, not completion order
    assert out.panels[0].tickers == ["AAA"]
    assert out.panels[1].tickers == ["BBB"]


def test_fetch_worker_count_irrelevant(tmp_path):
    path, _ = _fetch_fixture(tmp_path)
    window = (date(2020, 1, 2), date(2020, 3, 1))
    tickers = ["BBB", "AAA"]
    serial = fetch_remote(tickers, window, CsvPanelFetcher(path), workers=1)
    wide = fetch_remote(tickers, window, CsvPanelFetcher(path), workers=20)
    assert [p.tickers for p in serial.panels] == [p.tickers for p in wide.panels]
    for a, b in zip(serial.panels, wide.panels):
        pd.testing.assert_frame_equal(a.frame, b.frame)


def test_fetch_empty_and_total_failure(tmp_path):
    path, _ = _fetch_fixture(tmp_path)
    fetcher = CsvPanelFetcher(path)
    out = fetch_remote([], (date(2020, 1, 2), date(2020, 3, 1)), fetcher)
    assert out.panels == [] and out.failures == {}
    with pytest.raises(FetchError) as exc:
        fetch_remote(["NOPE", "NADA"], (date(2020, 1, 2), date(2020, 3, 1)), fetcher)
    assert set(exc.value.failures) == {"NOPE", "NADA"}


def test_panel_subset(tmp_path):
    path, _ = _fetch_fixture(tmp_path)
    panel = ingest_csv(path, min_points=1)
    sub = panel.subset(["BBB"])
    assert sub.tickers == ["BBB"]
    with pytest.raises(DataError):
        panel.subset(["MISSING"])
