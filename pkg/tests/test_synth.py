"""Generator tests: determinism, the extraction oracle property, intensity
ratios, law recovery from generated output, and the bounce trade model."""

import numpy as np
import pytest

from lobflow.core import (
    KIND_CANCEL,
    KIND_LIMIT,
    KIND_MARKET,
    SIDE_ASK,
    SIDE_BID,
    flows_equal,
)
from lobflow.distfit import fit_gamma_mle, fit_weibull_mle
from lobflow.errors import ConfigError
from lobflow.flow import extract_session
from lobflow.ingest import load_session, write_snapshots, write_trades
from lobflow.replay import replay_and_verify
from lobflow.synth import (
    BounceConfig,
    ConstantSizes,
    ExponentialGaps,
    GammaQueue,
    GammaSizes,
    GenConfig,
    PowerLawSizes,
    RegimeConfig,
    WeibullGaps,
    generate,
    generate_bounce_trades,
    mean_gap,
    random_walk_mid,
    sample_sizes,
)

from oracles import brute_acf, discrete_powerlaw_pmf


def small_config(seed: int, **kw) -> GenConfig:
    base = dict(seed=seed, duration=30.0)
    base.update(kw)
    return GenConfig(**base)


class TestDeterminism:
    def test_same_seed_byte_identical(self):
        a = generate(small_config(123))
        b = generate(small_config(123))
        arr_a, arr_b = a.data.snapshots.arrays, b.data.snapshots.arrays
        for name in ("ts", "bt", "bq", "at", "aq"):
            assert np.array_equal(getattr(arr_a, name), getattr(arr_b, name))
        assert flows_equal(a.flow, b.flow)
        assert tuple(a.data.trades) == tuple(b.data.trades)
        assert a.stats == b.stats

    def test_different_seed_differs(self):
        a = generate(small_config(1))
        b = generate(small_config(2))
        assert not np.array_equal(
            a.data.snapshots.arrays.ts, b.data.snapshots.arrays.ts
        )

    def test_result_unpacks_as_pair(self):
        res = generate(small_config(5))
        data, flow = res
        assert data is res.data and flow is res.flow
        assert set(res.stats) == {"events", "trades", "conversions", "truncated"}
        assert not res.stats["truncated"]


class TestOracleProperty:
    def test_extraction_recovers_truth_across_configs(self):
        rng = np.random.default_rng(2024)
        for trial in range(10):
            lam = rng.uniform(10.0, 80.0, 3)
            cfg = GenConfig(
                seed=int(rng.integers(0, 2**31)),
                duration=float(rng.uniform(20.0, 60.0)),
                tick_size=float(rng.choice([0.005, 0.01, 0.02])),
                initial_mid=200.0,
                limit_intensity=float(lam[0] + 20.0),
                cancel_intensity=float(lam[1]),
                market_intensity=float(lam[2] * 0.4),
                size_law=PowerLawSizes(alpha=float(rng.uniform(1.2, 2.5))),
                queue_law=GammaQueue(shape=2.0, scale=float(rng.uniform(10, 60))),
                spread_close_mult=float(rng.uniform(1.0, 3.0)),
            )
            data, truth = generate(cfg)
            flow, report = extract_session(data.snapshots, data.trades)
            assert flows_equal(truth, flow), f"trial {trial} diverged"
            assert report.match_rate == 1.0
            assert report.unmatched == ()

    def test_truth_flow_replays_exactly(self):
        data, truth = generate(small_config(77))
        out = replay_and_verify(None, truth, data.snapshots)
        assert out.match_fraction == 1.0
        assert out.mismatches == ()

    def test_books_never_crossed_or_empty(self):
        data, _ = generate(small_config(31))
        arr = data.snapshots.arrays
        assert np.all(arr.bq[:, 0] > 0) and np.all(arr.aq[:, 0] > 0)
        assert np.all(arr.at[:, 0] > arr.bt[:, 0])
        occ_b = (arr.bq > 0).sum(axis=1)
        occ_a = (arr.aq > 0).sum(axis=1)
        assert occ_b.max() <= arr.levels and occ_a.max() <= arr.levels

    def test_one_event_per_snapshot(self):
        data, truth = generate(small_config(8))
        arr = data.snapshots.arrays
        assert arr.n == len(truth) + 1
        assert np.array_equal(arr.ts[1:], truth.ts)
        assert np.all(np.diff(arr.ts) >= 1)

    def test_every_market_event_has_a_trade(self):
        data, truth = generate(small_config(90))
        markets = np.nonzero(truth.kind == KIND_MARKET)[0]
        assert len(data.trades) == markets.size
        for ev_idx, trade in zip(markets, data.trades):
            assert trade.ts == int(truth.ts[ev_idx])
            assert trade.size == int(truth.size[ev_idx])
            want = "A" if truth.side[ev_idx] == SIDE_BID else "B"
            assert trade.aggressor == want
            assert trade.on_book

    def test_regime_switching_stays_exact_and_speeds_up(self):
        quiet = generate(small_config(55))
        busy = generate(
            small_config(55, regime=RegimeConfig(factor=4.0, mean_hold=3.0))
        )
        data, truth = busy.data, busy.flow
        flow, report = extract_session(data.snapshots, data.trades)
        assert flows_equal(truth, flow)
        assert report.match_rate == 1.0
        assert busy.stats["events"] > quiet.stats["events"]

    def test_csv_round_trip(self, tmp_path):
        data, truth = generate(small_config(12, duration=10.0))
        sp = tmp_path / "snapshots.csv"
        tp = tmp_path / "trades.csv"
        write_snapshots(str(sp), data.snapshots, tick_size=data.instrument.tick_size)
        write_trades(str(tp), data.trades, tick_size=data.instrument.tick_size)
        loaded = load_session(str(sp), str(tp), data.instrument)
        flow, report = extract_session(loaded.snapshots, loaded.trades)
        assert flows_equal(truth, flow)
        assert report.match_rate == 1.0


class TestIntensityAndLaws:
    def test_market_ratio_tracks_intensities(self):
        cfg = GenConfig(
            seed=404,
            duration=900.0,
            limit_intensity=60.0,
            cancel_intensity=30.0,
            market_intensity=10.0,
        )
        _, truth = generate(cfg)
        n_c = int(np.sum(truth.kind == KIND_CANCEL))
        n_m = int(np.sum(truth.kind == KIND_MARKET))
        p = 10.0 / (10.0 + 30.0)
        sigma = np.sqrt(p * (1 - p) / (n_c + n_m))
        assert abs(n_m / (n_c + n_m) - p) < 3 * sigma

    def test_sides_balanced(self):
        _, truth = generate(small_config(606, duration=300.0))
        n = len(truth)
        n_bid = int(np.sum(truth.side == SIDE_BID))
        sigma = np.sqrt(0.25 / n)
        assert abs(n_bid / n - 0.5) < 4 * sigma

    def test_weibull_gap_recovery_large(self):
        # modulation off so emitted gaps are draws from the law itself
        cfg = GenConfig(
            seed=99,
            duration=12000.0,
            interarrival_law=WeibullGaps(k=0.7, lam=0.01),
            spread_close_mult=1.0,
        )
        _, truth = generate(cfg)
        assert len(truth) > 800_000
        gaps = np.diff(truth.ts).astype(np.float64) / 1e9
        fit = fit_weibull_mle(gaps)
        assert abs(fit.k - 0.7) / 0.7 < 0.03
        assert abs(fit.lam - 0.01) / 0.01 < 0.03

    def test_exponential_gap_recovery(self):
        cfg = GenConfig(seed=100, duration=600.0, spread_close_mult=1.0)
        data, truth = generate(cfg)
        gaps = np.diff(truth.ts).astype(np.float64) / 1e9
        rate = 1.0 / gaps.mean()
        total = cfg.total_intensity
        assert abs(rate - total) / total < 0.02

    def test_queue_sizes_track_gamma_targets(self):
        # steady-state queues sit near (slightly above) the target law, and
        # the fitted shape responds monotonically to the configured one
        fitted = {}
        for shp in (0.6, 2.0, 5.0):
            cfg = GenConfig(
                seed=11, duration=400.0, queue_law=GammaQueue(shape=shp, scale=40.0)
            )
            data, _ = generate(cfg)
            arr = data.snapshots.arrays
            q = np.concatenate(
                [arr.bq[arr.bq > 0], arr.aq[arr.aq > 0]]
            ).astype(np.float64)
            fitted[shp] = fit_gamma_mle(q)
        assert fitted[0.6].shape < fitted[2.0].shape < fitted[5.0].shape
        for shp, fit in fitted.items():
            assert shp * 0.8 < fit.shape < shp + 1.0
        assert fitted[2.0].shape > 1.0


class TestSamplers:
    def test_power_law_sizes_match_pmf(self):
        law = PowerLawSizes(alpha=1.5, max_size=50, round_boost=4.0)
        rng = np.random.default_rng(7)
        draws = sample_sizes(law, 200_000, rng)
        assert draws.min() >= 1 and draws.max() <= 50
        counts = np.bincount(draws, minlength=51)[1:]
        pmf = discrete_powerlaw_pmf(1.5, 50, boost=4.0)
        np.testing.assert_allclose(counts / draws.size, pmf, atol=0.004)
        # round-number boost visible: 10 outdraws 9 despite smaller raw weight
        assert counts[9] > counts[8]

    def test_constant_sizes(self):
        rng = np.random.default_rng(0)
        assert np.all(sample_sizes(ConstantSizes(7), 100, rng) == 7)

    def test_gamma_sizes_floor_one(self):
        rng = np.random.default_rng(0)
        draws = sample_sizes(GammaSizes(shape=0.3, scale=0.5), 10_000, rng)
        assert draws.min() == 1

    def test_mean_gap_values(self):
        assert mean_gap(ExponentialGaps(rate=50.0)) == pytest.approx(0.02)
        assert mean_gap(ExponentialGaps(), base_rate=100.0) == pytest.approx(0.01)
        # k=1 reduces to exponential with scale lam
        assert mean_gap(WeibullGaps(k=1.0, lam=0.25)) == pytest.approx(0.25)


class TestConfigValidation:
    def test_rejects_bad_values(self):
        good = dict(seed=1, duration=10.0)
        with pytest.raises(ConfigError):
            GenConfig(**good, limit_intensity=-1.0)
        with pytest.raises(ConfigError):
            GenConfig(seed=1, duration=0.0)
        with pytest.raises(ConfigError):
            GenConfig(seed=1, duration=50_000.0)
        with pytest.raises(ConfigError):
            GenConfig(**good, spread_close_mult=0.5)
        with pytest.raises(ConfigError):
            GenConfig(**good, initial_mid=170.0012)
        with pytest.raises(ConfigError):
            GenConfig(**good, levels=1)

    def test_rejects_inconsistent_exponential_rate(self):
        with pytest.raises(ConfigError, match="inconsistent"):
            GenConfig(seed=1, duration=10.0, interarrival_law=ExponentialGaps(rate=55.0))
        # matching the total intensity is accepted
        GenConfig(seed=1, duration=10.0, interarrival_law=ExponentialGaps(rate=100.0))

    def test_zero_intensities_yield_empty_session(self):
        cfg = GenConfig(
            seed=7,
            duration=10.0,
            limit_intensity=0.0,
            cancel_intensity=0.0,
            market_intensity=0.0,
        )
        data, flow = generate(cfg)
        assert len(flow) == 0
        assert len(data.trades) == 0
        assert data.snapshots.arrays.n == 1
        # an explicit gap rate contradicts zero intensity
        with pytest.raises(ConfigError, match="inconsistent"):
            GenConfig(
                seed=7,
                duration=10.0,
                limit_intensity=0.0,
                cancel_intensity=0.0,
                market_intensity=0.0,
                interarrival_law=ExponentialGaps(rate=5.0),
            )

    def test_law_validation(self):
        with pytest.raises(ConfigError):
            PowerLawSizes(alpha=0.0)
        with pytest.raises(ConfigError):
            PowerLawSizes(max_size=1)
        with pytest.raises(ConfigError):
            ConstantSizes(0)
        with pytest.raises(ConfigError):
            GammaSizes(shape=-1.0)
        with pytest.raises(ConfigError):
            WeibullGaps(k=0.0, lam=1.0)
        with pytest.raises(ConfigError):
            ExponentialGaps(rate=-5.0)
        with pytest.raises(ConfigError):
            GammaQueue(scale=0.0)
        with pytest.raises(ConfigError):
            RegimeConfig(factor=0.5)


class TestBounceTrades:
    def test_flip_one_lag1_near_minus_half(self):
        prices = generate_bounce_trades(
            BounceConfig(seed=3, n=100_000, flip=1.0, spread=0.01, mid_sigma=0.0005)
        )
        r = np.diff(prices)
        acf1 = brute_acf(r, 1)[0]
        assert abs(acf1 - (-0.5)) < 0.05

    def test_lag1_is_minus_half_flip(self):
        # analytic: resampling the side w.p. q makes lag-1 acf exactly -q/2
        for flip, seed in ((0.5, 4), (0.2, 5)):
            prices = generate_bounce_trades(
                BounceConfig(seed=seed, n=100_000, flip=flip, spread=0.01)
            )
            acf1 = brute_acf(np.diff(prices), 1)[0]
            assert abs(acf1 - (-flip / 2)) < 0.02
            assert -0.5 < acf1 < 0.0

    def test_flip_half_fast_mid_within_band_of_zero(self):
        # when the mid's step size dwarfs the spread, the bounce share of
        # return variance vanishes and the lag-1 acf is statistically zero
        prices = generate_bounce_trades(
            BounceConfig(seed=6, n=100_000, flip=0.5, spread=0.01, mid_sigma=0.1)
        )
        acf1 = brute_acf(np.diff(prices), 1)[0]
        assert abs(acf1) < 1.96 / np.sqrt(prices.size - 1)

    def test_zero_vol_full_flip_prices_pin_to_quotes(self):
        cfg = BounceConfig(seed=9, n=20_000, flip=1.0, spread=0.02, mid_sigma=0.0)
        prices = generate_bounce_trades(cfg)
        assert set(np.unique(prices)) == {170.0 - 0.01, 170.0 + 0.01}
        moves = np.diff(prices)
        moves = moves[moves != 0.0]
        np.testing.assert_allclose(np.abs(moves), 0.02)

    def test_flip_zero_is_pure_random_walk(self):
        prices = generate_bounce_trades(
            BounceConfig(seed=10, n=20_000, flip=0.0, spread=0.01, mid_sigma=0.001)
        )
        acf = brute_acf(np.diff(prices), 20)
        band = 3 * 1.96 / np.sqrt(prices.size - 1)
        assert np.all(np.abs(acf) < band)

    def test_bounce_config_validation(self):
        with pytest.raises(ConfigError):
            BounceConfig(seed=1, n=1)
        with pytest.raises(ConfigError):
            BounceConfig(seed=1, n=10, flip=1.5)
        with pytest.raises(ConfigError):
            BounceConfig(seed=1, n=10, spread=0.0)

    def test_random_walk_mid_grid(self):
        series = random_walk_mid(seed=2, n=1000, dt=0.5, sigma=0.01)
        assert len(series) == 1000
        assert np.all(np.diff(series.ts) == 500_000_000)
        with pytest.raises(ConfigError):
            random_walk_mid(seed=2, n=1)
