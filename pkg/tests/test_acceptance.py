"""Acceptance battery: eleven end-to-end criteria, one test each.

Each test prints a single `ACCEPTANCE nn <name>: PASS (...)` line with the
measured values when it succeeds; `pytest -v` therefore shows one pass/fail
line per criterion. Tolerances are stated inline next to each assertion.
"""

import json
import os
import time
from dataclasses import replace
from types import SimpleNamespace

import jsonschema
import numpy as np
import pytest

from lobflow.cli import main
from lobflow.core import (
    NS_PER_SEC,
    FlowSeq,
    MidSeries,
    bundled_instruments,
    flows_equal,
    log_returns,
)
from lobflow.distfit import fit_gamma_mle, fit_powerlaw_loglog, fit_weibull_mle
from lobflow.flow import extract_session
from lobflow.metrics import acf, excitation, long_range_dependence, queue_gamma, signature
from lobflow.replay import replay_and_verify
from lobflow.synth import (
    BounceConfig,
    GammaSizes,
    GenConfig,
    RegimeConfig,
    WeibullGaps,
    generate,
    generate_bounce_trades,
    random_walk_mid,
)

from oracles import gaussian_corr_for_abs_corr, gaussian_series_with_acf


def report(number: int, name: str, detail: str) -> None:
    print(f"ACCEPTANCE {number:02d} {name}: PASS ({detail})")


def make_flow(kind, side, n_ts_step=1000):
    n = len(kind)
    return FlowSeq(
        ts=np.arange(n, dtype=np.int64) * n_ts_step,
        kind=np.asarray(kind, dtype=np.int8),
        side=np.asarray(side, dtype=np.int8),
        tick=np.full(n, 34000, dtype=np.int64),
        size=np.ones(n, dtype=np.int64),
        level=np.ones(n, dtype=np.int64),
        tick_size=0.005,
    )


# 1. ------------------------------------------------------------------------

def oracle_config(i: int) -> GenConfig:
    """50 deterministic variations, each landing near 1e5 events: defaults,
    higher intensities, gamma sizes, heavy-tailed gaps, regime switching."""
    family = i % 5
    if family == 0:
        return GenConfig(seed=i, duration=800.0)
    if family == 1:
        return GenConfig(seed=i, duration=550.0, limit_intensity=80.0,
                         cancel_intensity=40.0, market_intensity=15.0)
    if family == 2:
        return GenConfig(seed=i, duration=720.0, size_law=GammaSizes(shape=1.5, scale=8.0))
    if family == 3:
        return GenConfig(seed=i, duration=750.0,
                         interarrival_law=WeibullGaps(k=0.7, lam=0.008))
    return GenConfig(seed=i, duration=350.0,
                     regime=RegimeConfig(factor=4.0, mean_hold=30.0))


def test_01_extraction_oracle():
    start = time.perf_counter()
    total_events = 0
    for i in range(50):
        data, truth = generate(oracle_config(i))
        assert 50_000 < len(truth) < 200_000, f"config {i} off the ~1e5 scale"
        extracted, match = extract_session(data)
        assert flows_equal(extracted, truth), f"config {i}: flow differs from truth"
        assert match.match_rate == 1.0, f"config {i}: match_rate {match.match_rate}"
        outcome = replay_and_verify(None, extracted, data.snapshots)
        assert outcome.match_fraction == 1.0, f"config {i}: replay {outcome.match_fraction}"
        total_events += len(truth)
    elapsed = time.perf_counter() - start
    assert elapsed < 60.0, f"budget exceeded: {elapsed:.1f}s"
    report(1, "extraction-oracle",
           f"50 configs, {total_events} events, all exact, {elapsed:.1f}s")


# 2. ------------------------------------------------------------------------

def test_02_trade_matching_under_jitter():
    data, _ = generate(GenConfig(seed=100, duration=800.0))
    trades = list(data.trades)
    assert len(trades) >= 1000
    # every 100th print moves 25ms: beyond the +-10ms window
    jittered = [
        replace(t, ts=t.ts + 25_000_000) if i % 100 == 0 else t
        for i, t in enumerate(trades)
    ]
    jittered.sort(key=lambda t: t.ts)
    session = SimpleNamespace(snapshots=data.snapshots, trades=tuple(jittered))
    _, match = extract_session(session)
    assert len(match.unmatched) > 0
    assert 0.985 <= match.match_rate <= 1.0, f"match_rate {match.match_rate}"
    report(2, "trade-matching-jitter",
           f"{len(trades)} trades, 1% jittered, match_rate {match.match_rate:.4f}")


# 3. ------------------------------------------------------------------------

def test_03_weibull_recovery():
    rng = np.random.default_rng(3)
    results = []
    for k, lam in ((0.6, 0.8), (1.0, 1.0), (1.5, 2.0)):
        u = rng.random(1_000_000)
        samples = lam * (-np.log1p(-u)) ** (1.0 / k)  # inverse CDF
        fit = fit_weibull_mle(samples)
        assert abs(fit.k - k) / k <= 0.03, f"k: {fit.k} vs {k}"
        assert abs(fit.lam - lam) / lam <= 0.03, f"lam: {fit.lam} vs {lam}"
        results.append(f"({fit.k:.3f},{fit.lam:.3f})")
    report(3, "weibull-recovery", "k,lam within 3%: " + " ".join(results))


# 4. ------------------------------------------------------------------------

def test_04_gamma_recovery():
    rng = np.random.default_rng(4)
    scale = 1.3
    results = []
    for shape in (0.8, 1.0, 2.5):
        samples = rng.gamma(shape, scale, 1_000_000)
        fit = fit_gamma_mle(samples)
        assert abs(fit.shape - shape) / shape <= 0.02, f"shape: {fit.shape} vs {shape}"
        assert abs(fit.scale - scale) / scale <= 0.02, f"scale: {fit.scale} vs {scale}"
        results.append(f"{fit.shape:.3f}")
    data, _ = generate(GenConfig(seed=41, duration=900.0))  # queue target shape 2.0
    fitted = [queue_gamma(data, side, 1).fit.shape for side in ("B", "A")]
    assert all(s > 1.0 for s in fitted), f"session queue shapes {fitted}"
    report(4, "gamma-recovery",
           f"shapes within 2%: {' '.join(results)}; session queues "
           f"B {fitted[0]:.2f} / A {fitted[1]:.2f} > 1")


# 5. ------------------------------------------------------------------------

def test_05_powerlaw_fitter():
    k = np.arange(1, 41, dtype=np.float64)
    c, alpha = 2.5, 0.7
    y = c * k ** -alpha
    fit = fit_powerlaw_loglog(k, y)
    assert abs(fit.c - c) <= 1e-9 and abs(fit.alpha - alpha) <= 1e-9
    assert abs(fit.r2 - 1.0) <= 1e-9

    rng = np.random.default_rng(5)
    noisy = y * (1.0 + 0.01 * rng.standard_normal(k.size))
    nf = fit_powerlaw_loglog(k, noisy)
    assert abs(nf.alpha - alpha) <= 0.02, f"alpha {nf.alpha}"
    assert nf.r2 > 0.99, f"r2 {nf.r2}"
    report(5, "powerlaw-fitter",
           f"exact to 1e-9, r2=1; 1% noise: alpha {nf.alpha:.4f}, r2 {nf.r2:.5f}")


# 6. ------------------------------------------------------------------------

def test_06_long_range_dependence():
    start = time.perf_counter()
    L = 20_000
    k = np.arange(1, L + 1, dtype=np.float64)
    g = np.array([gaussian_corr_for_abs_corr(a) for a in 0.5 * k ** -0.3])
    g *= 1.0 - k / (L + 1)  # Bartlett taper keeps the embedding nonnegative
    n = 2 ** 17
    r = gaussian_series_with_acf(g, n, seed=1234)
    mids = MidSeries(ts=np.arange(n, dtype=np.int64) * NS_PER_SEC,
                     mid=np.exp(np.cumsum(r * 1e-4)) * 170.0)
    res = long_range_dependence(mids, dt=1.0, max_lag=100)
    elapsed = time.perf_counter() - start
    assert 0.25 <= res.fit.alpha <= 0.35, f"alpha {res.fit.alpha}"
    assert res.fit.alpha < 1.0
    assert elapsed < 30.0, f"budget exceeded: {elapsed:.1f}s"
    report(6, "long-range-dependence",
           f"alpha {res.fit.alpha:.4f} in [0.25, 0.35], r2 {res.fit.r2:.3f}, "
           f"n=2^17, {elapsed:.1f}s")


# 7. ------------------------------------------------------------------------

def test_07_bid_ask_bounce():
    prices = generate_bounce_trades(BounceConfig(seed=7, n=200_000, flip=1.0))
    rho1 = acf(np.diff(prices), 1).rho[0]
    assert abs(rho1 - (-0.5)) <= 0.05, f"lag-1 {rho1}"

    walk = random_walk_mid(seed=77, n=100_000, dt=1.0, sigma=0.01)
    res = acf(log_returns(walk, 1.0), 50)
    worst = float(np.max(np.abs(res.rho)))
    assert worst < 3.0 * res.conf_band, f"worst |rho| {worst} vs band {res.conf_band}"
    report(7, "bid-ask-bounce",
           f"flip=1 lag-1 {rho1:.4f} ~ -0.5; walk worst |rho| {worst:.4f} "
           f"< {3 * res.conf_band:.4f}")


# 8. ------------------------------------------------------------------------

def test_08_signature_flatness():
    walk = random_walk_mid(seed=8, n=100_000, dt=1.0, sigma=0.01)
    res = signature(SimpleNamespace(snapshots=walk))
    ratio = float(np.max(res.sigma2) / np.min(res.sigma2))
    assert ratio < 1.25, f"max/min {ratio}"
    report(8, "signature-flatness", f"max/min sigma2 ratio {ratio:.3f} < 1.25")


# 9. ------------------------------------------------------------------------

def test_09_excitation_calibration():
    rng = np.random.default_rng(9)
    n = 1_000_000
    flow = make_flow(rng.integers(0, 3, n), rng.integers(0, 2, n))
    res = excitation(flow, mask_mm=False)
    dev = float(np.max(np.abs(res.excitation - 1.0)))
    assert np.all((res.excitation >= 0.95) & (res.excitation <= 1.05)), f"dev {dev}"

    # deterministic 2-cycle: ask-side limits alternating with bid-side limits
    cyc = excitation(make_flow([0, 0] * 500, [1, 0] * 500), mask_mm=False)
    i, j = cyc.labels.index("La"), cyc.labels.index("Lb")
    assert cyc.transition[i, j] == 1.0 and cyc.transition[j, i] == 1.0
    assert cyc.excitation[i, j] == 2.0 and cyc.excitation[j, i] == 2.0
    report(9, "excitation-calibration",
           f"iid 1e6: all entries within {dev:.4f} of 1; 2-cycle exact (T=1, E=2)")


# 10. -----------------------------------------------------------------------

def test_10_report_contract(tmp_path):
    gen = tmp_path / "gen.json"
    gen.write_text(json.dumps({"seed": 11, "duration": 240.0, "symbol": "SYNTH"}))
    spec = tmp_path / "inst.json"
    spec.write_text(json.dumps({"symbol": "SYNTH", "tick_size": 0.005, "levels": 5}))
    synth_dir = str(tmp_path / "s")
    assert main(["synth", "--spec", str(gen), "--out", synth_dir]) == 0
    snapshots = os.path.join(synth_dir, "snapshots.csv")
    trades = os.path.join(synth_dir, "trades.csv")

    probe = str(tmp_path / "probe")
    assert main(["metrics", "--snapshots", snapshots, "--trades", trades,
                 "--spec", str(spec), "--out", probe, "--inline-extract",
                 "--metrics", "flow,spread"]) == 0
    got = json.load(open(os.path.join(probe, "report.json")))["metrics"]
    ratio = got["flow"]["market_ratio"]
    spread_ticks = got["spread"]["mean_spread_ticks"]

    ranges = tmp_path / "ranges.json"
    ranges.write_text(json.dumps({
        "flow.market_ratio": [ratio - 0.02, ratio + 0.02],
        "spread.mean_spread_ticks": [spread_ticks - 0.1, spread_ticks + 0.1],
    }))
    out_ok = str(tmp_path / "ok")
    rc = main(["metrics", "--snapshots", snapshots, "--trades", trades,
               "--spec", str(spec), "--out", out_ok, "--inline-extract",
               "--metrics", "flow,spread", "--ranges", str(ranges)])
    assert rc == 0
    payload = json.load(open(os.path.join(out_ok, "report.json")))
    schema_path = os.path.join(os.path.dirname(__file__), os.pardir,
                               "docs", "report.schema.json")
    jsonschema.validate(payload, json.load(open(schema_path)))
    assert all(c["passed"] for c in payload["checks"].values())

    ranges.write_text(json.dumps({
        "flow.market_ratio": [ratio - 0.02, ratio + 0.02],
        "spread.mean_spread_ticks": [spread_ticks + 1.0, spread_ticks + 2.0],
    }))
    out_bad = str(tmp_path / "bad")
    rc = main(["metrics", "--snapshots", snapshots, "--trades", trades,
               "--spec", str(spec), "--out", out_bad, "--inline-extract",
               "--metrics", "flow,spread", "--ranges", str(ranges)])
    assert rc == 1
    failed = json.load(open(os.path.join(out_bad, "report.json")))["checks"]
    assert failed["spread.mean_spread_ticks"]["passed"] is False
    assert failed["flow.market_ratio"]["passed"] is True
    report(10, "report-contract",
           "schema-valid, exit 0 with consistent ranges, exit 1 naming "
           "spread.mean_spread_ticks when perturbed")


# 11. -----------------------------------------------------------------------

def test_11_shipped_instrument_constants():
    specs = bundled_instruments()
    expected = {
        "FGBS": (0.005, 1.004),
        "FGBM": (0.01, 1.005),
        "FGBL": (0.01, 1.018),
        "FGBX": (0.02, 1.355),
    }
    assert set(specs) == set(expected)
    for symbol, (tick, mean_spread) in expected.items():
        assert specs[symbol].tick_size == tick, symbol
        assert specs[symbol].references["mean_spread_ticks"] == mean_spread, symbol
    report(11, "shipped-instrument-constants",
           "FGBS/FGBM/FGBL/FGBX tick sizes and mean-spread references exact")
