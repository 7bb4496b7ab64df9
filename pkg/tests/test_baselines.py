import numpy as np
import pandas as pd
import pytest

from _utils import returns_panel
from aegis.backtest_engine import BacktestConfig, run_strategy
from aegis.baselines import (
    BaselineConfig,
    csm_weights,
    equal_weights,
    make_strategy,
    risk_parity_weights,
)
from aegis.errors import ConfigError, DataError
from aegis.signal_engine import cum_return


def _drift_panel(drifts: dict[str, float], days=120, seed=1, noise=0.004):
    rng = np.random.default_rng(seed)
    cols = {t: rng.normal(d, noise, size=days) for t, d in drifts.items()}
    return returns_panel(cols)


class TestCsmWeights:
    def test_ten_assets_top_decile_is_single_winner(self):
        drifts = {f"T{i}": -0.002 + 0.0005 * i for i in range(10)}
        panel = _drift_panel(drifts, seed=2)
        vec = csm_weights(panel, top_fraction=0.10, skip_days=21)
        assert len(vec.weights) == 1
        winner = next(iter(vec.weights))
        scores = {
            t: cum_return(panel.frame[t].to_numpy(), 120, 21) for t in panel.tickers
        }
        assert winner == max(scores, key=lambda t: (scores[t], t))
        assert vec.weights[winner] == 1.0

    def test_count_floors_but_never_to_zero(self):
        panel = _drift_panel({f"T{i}": 0.001 for i in range(7)}, seed=3)
        vec = csm_weights(panel, top_fraction=0.10)
        assert len(vec.weights) == 1  # floor(0.7) lifted to 1

    def test_matches_argsort_oracle(self):
        drifts = {f"T{i:02d}": float(np.sin(i)) * 0.002 for i in range(20)}
        panel = _drift_panel(drifts, seed=4)
        vec = csm_weights(panel, top_fraction=0.10, skip_days=21)
        scores = {
            t: cum_return(panel.frame[t].to_numpy(), 120, 21) for t in panel.tickers
        }
        want = sorted(scores, key=lambda t: (-scores[t], t))[:2]
        assert sorted(vec.weights) == sorted(want)
        for w in vec.weights.values():
            assert w == pytest.approx(0.5)

    def test_boundary_tie_breaks_lexicographically(self):
        rng = np.random.default_rng(5)
        shared = rng.normal(0.001, 0.01, size=90)
        cols = {"AAA": shared.copy(), "BBB": shared.copy()}
        for i in range(8):
            cols[f"Z{i}"] = rng.normal(-0.002, 0.01, size=90)
        panel = returns_panel(cols)
        vec = csm_weights(panel, top_fraction=0.10)
        assert list(vec.weights) == ["AAA"]

    def test_return_scaling_invariance(self):
        drifts = {f"T{i:02d}": float(np.cos(i)) * 0.001 for i in range(12)}
        panel = _drift_panel(drifts, seed=6)
        base = csm_weights(panel, top_fraction=0.25)
        scaled = returns_panel({t: 3.0 * panel.frame[t].to_numpy() for t in panel.tickers})
        again = csm_weights(scaled, top_fraction=0.25)
        assert sorted(base.weights) == sorted(again.weights)

    def test_incomplete_columns_are_not_ranked(self):
        rng = np.random.default_rng(7)
        good = rng.normal(0.0, 0.01, 90)
        holed = rng.normal(0.05, 0.01, 90)  # absurdly strong but unrankable
        holed[3] = np.nan
        panel = returns_panel({"GOOD": good, "HOLED": holed})
        vec = csm_weights(panel, top_fraction=0.5)
        assert "HOLED" not in vec.weights

    def test_no_candidates_means_cash(self):
        holed = np.full(60, np.nan)
        panel = returns_panel({"A": holed})
        assert csm_weights(panel) is None

    def test_bad_fraction(self):
        panel = _drift_panel({"A": 0.001}, seed=8)
        with pytest.raises(ConfigError):
            csm_weights(panel, top_fraction=0.0)

    def test_fully_invested_long_only(self):
        drifts = {f"T{i:02d}": float(np.sin(2 * i)) * 0.002 for i in range(30)}
        panel = _drift_panel(drifts, seed=9)
        vec = csm_weights(panel, top_fraction=0.3)
        assert sum(vec.weights.values()) == pytest.approx(1.0, abs=1e-12)
        assert all(w > 0 for w in vec.weights.values())


def _series(values):
    return pd.Series(np.asarray(values, dtype=float), index=pd.RangeIndex(len(values)))


class TestRiskParityWeights:
    def test_equal_vols_split_evenly(self):
        rng = np.random.default_rng(10)
        stock = rng.normal(0, 0.01, size=63)
        bond = rng.permutation(stock)  # identical sample vol, different path
        vec = risk_parity_weights(_series(stock), _series(bond), 63, labels=("S", "B"))
        assert vec.weights["S"] == pytest.approx(0.5, abs=1e-12)
        assert vec.weights["B"] == pytest.approx(0.5, abs=1e-12)

    def test_double_stock_vol_gives_third(self):
        rng = np.random.default_rng(11)
        base = rng.normal(0, 0.01, size=63)
        base = base - base.mean()
        vec = risk_parity_weights(_series(2.0 * base), _series(base), 63, labels=("S", "B"))
        assert vec.weights["S"] == pytest.approx(1 / 3, abs=1e-12)
        assert vec.weights["B"] == pytest.approx(2 / 3, abs=1e-12)

    def test_zero_bond_vol_hits_the_cap(self):
        rng = np.random.default_rng(12)
        stock = rng.normal(0, 0.01, size=63)
        bond = np.zeros(63)
        vec = risk_parity_weights(_series(stock), _series(bond), 63, labels=("S", "B"))
        assert vec.weights["S"] == pytest.approx(0.01, abs=1e-15)
        assert vec.weights["B"] == pytest.approx(0.99, abs=1e-15)

    def test_near_zero_bond_vol_clamps(self):
        rng = np.random.default_rng(13)
        stock = rng.normal(0, 0.02, size=63)
        bond = rng.normal(0, 1e-7, size=63)
        vec = risk_parity_weights(_series(stock), _series(bond), 63, labels=("S", "B"))
        assert vec.weights["B"] == pytest.approx(0.99, abs=1e-12)

    def test_both_legs_flat_split_evenly(self):
        vec = risk_parity_weights(_series(np.zeros(63)), _series(np.zeros(63)), 63)
        assert vec.weights["STOCK"] == 0.5

    def test_leg_exchange_swaps_weights(self):
        rng = np.random.default_rng(14)
        a = rng.normal(0, 0.015, size=63)
        b = rng.normal(0, 0.006, size=63)
        fwd = risk_parity_weights(_series(a), _series(b), 63, labels=("S", "B"))
        rev = risk_parity_weights(_series(b), _series(a), 63, labels=("B", "S"))
        assert fwd.weights["S"] == pytest.approx(rev.weights["S"], abs=1e-12)
        assert fwd.weights["B"] == pytest.approx(rev.weights["B"], abs=1e-12)

    def test_fully_invested(self):
        rng = np.random.default_rng(15)
        for _ in range(20):
            a = rng.normal(0, rng.uniform(0.001, 0.05), size=63)
            b = rng.normal(0, rng.uniform(0.001, 0.05), size=63)
            vec = risk_parity_weights(_series(a), _series(b), 63)
            assert sum(vec.weights.values()) == pytest.approx(1.0, abs=1e-12)
            assert all(0.01 - 1e-12 <= w <= 0.99 + 1e-12 for w in vec.weights.values())

    def test_short_history_rejected(self):
        with pytest.raises(DataError, match="STOCK"):
            risk_parity_weights(_series(np.zeros(10)), _series(np.zeros(63)), 63)


class TestEqualWeights:
    def test_uniform_over_complete_columns(self):
        rng = np.random.default_rng(16)
        cols = {f"T{i}": rng.normal(0, 0.01, 60) for i in range(5)}
        cols["HOLED"] = rng.normal(0, 0.01, 60)
        cols["HOLED"][0] = np.nan
        vec = equal_weights(returns_panel(cols))
        assert len(vec.weights) == 5
        for w in vec.weights.values():
            assert w == pytest.approx(0.2, abs=1e-15)


class TestStrategies:
    def test_make_strategy_kinds(self):
        assert make_strategy("csm").label == "csm"
        assert make_strategy("risk_parity").label == "risk_parity"
        assert make_strategy("equal_weight").label == "equal_weight"
        with pytest.raises(ConfigError):
            make_strategy("nope")

    def test_csm_full_run(self, small_market):
        panel, _ = small_market
        config = BacktestConfig(target_basket_size=15, diversifier_count=12)
        result = run_strategy(config, panel, make_strategy("csm"))
        assert result.strategy == "csm"
        for record in result.periods:
            if record.cash_period:
                continue
            total = sum(record.weight_map.values())
            assert total == pytest.approx(1.0, abs=1e-9)
            assert all(w >= 0 for w in record.weight_map.values())

    def test_risk_parity_full_run(self, small_market):
        panel, _ = small_market
        config = BacktestConfig(target_basket_size=15, diversifier_count=12)
        result = run_strategy(config, panel, make_strategy("risk_parity"))
        for record in result.periods:
            book = set(record.weight_map)
            assert book == {"SPXPROXY", "AGGPROXY"}

    def test_risk_parity_missing_proxy_names_it(self, small_market):
        panel, _ = small_market
        pruned = panel.subset([t for t in panel.tickers if t != "AGGPROXY"])
        config = BacktestConfig(target_basket_size=15, diversifier_count=12)
        with pytest.raises(DataError, match="AGGPROXY"):
            run_strategy(config, pruned, make_strategy("risk_parity"))

    def test_baseline_config_validation(self):
        with pytest.raises(ConfigError):
            BaselineConfig(kind="momentum").validate()
        with pytest.raises(ConfigError):
            BaselineConfig(csm_top_fraction=1.5).validate()
        with pytest.raises(ConfigError):
            BaselineConfig(rp_vol_lookback_months=0).validate()
        BaselineConfig().validate()
