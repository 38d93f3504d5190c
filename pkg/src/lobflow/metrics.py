"""Stylized-fact metrics over a session's book, trades, and event flow.

Every function here is a pure computation on (SessionData, FlowSeq) slices;
build_report runs the full battery and evaluates optional reference ranges.
Conventions shared across metrics:

- Autocorrelations use the biased (1/n) covariance denominator, which keeps
  |rho| <= 1 and the sequence positive semidefinite.
- Averages over irregular snapshots are time-weighted: snapshot i carries
  weight ts[i+1] - ts[i] (the interval it was in force), so the last
  snapshot, whose dwell is unobserved, carries none.
- Calendar sampling is last-observation-carried-forward on fixed grids
  anchored at the first observation.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from datetime import date
from typing import Iterable, Mapping, Sequence

import numpy as np

from .core import (
    KIND_CANCEL,
    KIND_LIMIT,
    KIND_MARKET,
    NS_PER_DAY,
    NS_PER_SEC,
    SIDE_BID,
    BookArrays,
    FlowSeq,
    MidSeries,
    log_returns,
    mid_series,
    sample_locf,
)
from .ingest import SessionData
from .distfit import (
    GammaFit,
    ModelSelection,
    PowerLawFit,
    WeibullFit,
    fit_gamma_mle,
    fit_powerlaw_loglog,
    fit_weibull_mle,
    select_model,
)
from .errors import (
    ConfigError,
    DegenerateSample,
    EmptyFlow,
    TooShort,
    ZeroVariance,
)

__all__ = [
    "AcfResult",
    "ReturnAcfReport",
    "LrdResult",
    "CorrDistribution",
    "QueueGammaResult",
    "FlowStats",
    "WindowActivity",
    "InterarrivalResult",
    "ExcitationResult",
    "SignatureResult",
    "SpreadStats",
    "VolLiquidityResult",
    "ShapeProfile",
    "IntradayProfile",
    "RealismReport",
    "acf",
    "return_acf_report",
    "long_range_dependence",
    "volume_volatility",
    "queue_gamma",
    "flow_stats",
    "window_activity",
    "interarrival_fit",
    "summarize_weibull_fits",
    "excitation",
    "signature",
    "spread_stats",
    "vol_liquidity_ratio",
    "book_shape",
    "intraday_profile",
    "build_report",
    "to_jsonable",
    "ReportConfig",
    "EVENT_CLASSES",
    "REPORT_METRICS",
]

EVENT_CLASSES = ("Ca", "Cb", "La", "Lb", "Ma", "Mb")

# every metric build_report knows how to run, in report order
REPORT_METRICS = (
    "return_acf",
    "long_range_dependence",
    "volume_volatility",
    "queue_gamma_bid",
    "queue_gamma_ask",
    "flow",
    "window_activity",
    "interarrival_calendar",
    "interarrival_event",
    "excitation",
    "signature",
    "spread",
    "vol_liquidity_ratio",
    "book_shape",
    "intraday",
)

_PERCENTILES = (5, 25, 50, 75, 95)


def _as_mid_series(data) -> MidSeries:
    if isinstance(data, MidSeries):
        return data
    snaps = getattr(data, "snapshots", data)
    if isinstance(snaps, MidSeries):
        return snaps
    return mid_series(snaps)


def _arrays_of(data) -> BookArrays:
    snaps = data.snapshots if hasattr(data, "snapshots") else data
    return snaps.arrays if hasattr(snaps, "arrays") else snaps


# ---------------------------------------------------------------------------
# autocorrelation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AcfResult:
    lags: np.ndarray
    rho: np.ndarray
    conf_band: float
    n: int


def acf(series, max_lag: int) -> AcfResult:
    """Sample autocorrelation at lags 1..max_lag, biased 1/n denominator."""
    x = np.asarray(series, dtype=np.float64).ravel()
    n = x.size
    if max_lag < 1:
        raise ConfigError("max_lag must be >= 1")
    if n < max_lag + 2:
        raise TooShort(f"need >= {max_lag + 2} observations for lag {max_lag}, have {n}")
    x = x - x.mean()
    c0 = float(np.dot(x, x)) / n
    if c0 == 0.0:
        raise ZeroVariance("constant series has no autocorrelation")
    nfft = 1 << int(math.ceil(math.log2(2 * n - 1)))
    f = np.fft.rfft(x, nfft)
    ac = np.fft.irfft(f * np.conj(f), nfft)[: max_lag + 1]
    rho = ac[1:] / ac[0]
    return AcfResult(
        lags=np.arange(1, max_lag + 1, dtype=np.int64),
        rho=rho,
        conf_band=1.96 / math.sqrt(n),
        n=n,
    )


@dataclass(frozen=True)
class ReturnAcfReport:
    """Mid log-return ACF per sampling scheme. `tick` is computed on
    consecutive distinct-mid changes; by_dt keys are '1s'-style labels."""

    tick: AcfResult | None
    by_dt: dict
    skipped: tuple


def _dt_label(dt: float) -> str:
    if dt >= 60 and dt % 60 == 0:
        return f"{int(dt) // 60}min"
    return f"{dt:g}s"


def return_acf_report(data, dts: Sequence[float] = (1.0, 10.0, 60.0),
                      max_lag: int = 20) -> ReturnAcfReport:
    """ACF of mid log returns, tick-by-tick plus each calendar dt.

    Sampling schemes a session is too short for are skipped and recorded
    (with a warning), not fatal.
    """
    mids = _as_mid_series(data)
    skipped: list[tuple[str, str]] = []
    tick_res = None
    try:
        tick_res = acf(log_returns(mids, "tick"), max_lag)
    except (TooShort, ZeroVariance) as exc:
        skipped.append(("tick", str(exc)))
        warnings.warn(f"tick-by-tick ACF skipped: {exc}", stacklevel=2)
    by_dt: dict[str, AcfResult] = {}
    for dt in dts:
        label = _dt_label(dt)
        try:
            by_dt[label] = acf(log_returns(mids, dt), max_lag)
        except (TooShort, ZeroVariance) as exc:
            skipped.append((label, str(exc)))
            warnings.warn(f"ACF at dt={label} skipped: {exc}", stacklevel=2)
    return ReturnAcfReport(tick=tick_res, by_dt=by_dt, skipped=tuple(skipped))


@dataclass(frozen=True)
class LrdResult:
    """Power-law decay of the |return| autocorrelation; alpha < 1 is the
    long-range-dependence regime."""

    fit: PowerLawFit
    excluded_lags: int
    max_lag: int
    dt: float


def long_range_dependence(data, dt: float = 1.0, max_lag: int = 100) -> LrdResult:
    """Fit rho_k ~ c * k**-alpha to the ACF of absolute mid returns.

    Nonpositive ACF values cannot enter a log-log fit; they are excluded
    and counted.
    """
    mids = _as_mid_series(data)
    returns = np.abs(log_returns(mids, dt))
    res = acf(returns, max_lag)
    pos = res.rho > 0
    if int(pos.sum()) < 3:
        raise DegenerateSample(
            f"only {int(pos.sum())} positive ACF values over lags 1..{max_lag}"
        )
    fit = fit_powerlaw_loglog(res.lags[pos].astype(np.float64), res.rho[pos])
    return LrdResult(fit=fit, excluded_lags=int((~pos).sum()), max_lag=max_lag, dt=dt)


# ---------------------------------------------------------------------------
# volume-volatility coupling
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CorrDistribution:
    per_window_corr: tuple
    mean: float
    median: float
    window: float
    dt: float
    mode: str
    skipped: int = 0


def _trade_arrays(data) -> tuple[np.ndarray, np.ndarray]:
    trades = getattr(data, "trades", ())
    ts = np.asarray([t.ts for t in trades], dtype=np.int64)
    sz = np.asarray([t.size for t in trades], dtype=np.float64)
    return ts, sz


def volume_volatility(data, dt: float = 60.0, window_mult: int = 100,
                      mode: str = "across_windows") -> CorrDistribution:
    """Correlation between per-window return volatility and traded volume.

    Window length tau = window_mult * dt. Default mode computes, for each
    session day, one Pearson correlation across that day's (sigma, volume)
    window pairs. mode="within_window" instead correlates |sub-return|
    against sub-interval volume inside each window, one value per window.
    """
    if mode not in ("across_windows", "within_window"):
        raise ConfigError(f"unknown mode {mode!r}")
    if window_mult < 2:
        raise ConfigError("window_mult must be >= 2")
    mids = _as_mid_series(data)
    if len(mids) < 2:
        raise TooShort("need at least two mid observations")
    dt_ns = int(round(dt * NS_PER_SEC))
    win_ns = dt_ns * window_mult
    t0 = int(mids.ts[0])
    span = int(mids.ts[-1]) - t0
    n_win = span // win_ns
    if n_win < (2 if mode == "across_windows" else 1):
        raise TooShort(
            f"session spans {n_win} complete windows of {window_mult * dt:g}s"
        )
    tr_ts, tr_sz = _trade_arrays(data)
    sigmas = np.empty(n_win)
    volumes = np.empty(n_win)
    corrs: list[float] = []
    skipped = 0
    win_day = np.empty(n_win, dtype=np.int64)
    for w in range(n_win):
        start = t0 + w * win_ns
        grid = start + dt_ns * np.arange(window_mult + 1, dtype=np.int64)
        sampled = sample_locf(mids, grid)
        r = np.diff(np.log(sampled))
        lo = np.searchsorted(tr_ts, start, side="left")
        hi = np.searchsorted(tr_ts, start + win_ns, side="left")
        if mode == "within_window":
            v = np.histogram(tr_ts[lo:hi], bins=grid, weights=tr_sz[lo:hi])[0]
            a, b = np.abs(r), v
            if a.std() == 0 or b.std() == 0:
                skipped += 1
                continue
            corrs.append(float(np.corrcoef(a, b)[0, 1]))
        else:
            sigmas[w] = float(np.std(r, ddof=1))
            volumes[w] = float(tr_sz[lo:hi].sum())
            win_day[w] = start // NS_PER_DAY
    if mode == "across_windows":
        for day in np.unique(win_day):
            sel = win_day == day
            if int(sel.sum()) < 2:
                skipped += 1
                continue
            s, v = sigmas[sel], volumes[sel]
            if s.std() == 0 or v.std() == 0:
                skipped += 1
                continue
            corrs.append(float(np.corrcoef(s, v)[0, 1]))
    if not corrs:
        raise TooShort("no window grouping produced a defined correlation")
    arr = np.asarray(corrs)
    return CorrDistribution(
        per_window_corr=tuple(float(c) for c in arr),
        mean=float(arr.mean()),
        median=float(np.median(arr)),
        window=window_mult * dt,
        dt=dt,
        mode=mode,
        skipped=skipped,
    )


# ---------------------------------------------------------------------------
# queue sizes and flow composition
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class QueueGammaResult:
    fit: GammaFit
    hist_counts: np.ndarray
    hist_edges: np.ndarray
    side: str
    level: int
    n: int
    vacant: int


def queue_gamma(data, side: str = "B", level: int = 1, bins: int = 50) -> QueueGammaResult:
    """Gamma fit of the resting quantity at one book level (event-weighted:
    one sample per snapshot). Vacant-level snapshots are excluded, counted."""
    if side not in ("B", "A"):
        raise ConfigError(f"side must be 'B' or 'A', got {side!r}")
    arr = _arrays_of(data)
    if arr.n < 100:
        raise TooShort(f"need >= 100 snapshots, have {arr.n}")
    if not 1 <= level <= arr.levels:
        raise ConfigError(f"level must be in 1..{arr.levels}")
    col = (arr.bq if side == "B" else arr.aq)[:, level - 1]
    sample = col[col > 0].astype(np.float64)
    vacant = int(arr.n - sample.size)
    fit = fit_gamma_mle(sample)
    counts, edges = np.histogram(sample, bins=bins)
    return QueueGammaResult(
        fit=fit, hist_counts=counts, hist_edges=edges,
        side=side, level=level, n=int(sample.size), vacant=vacant,
    )


@dataclass(frozen=True)
class FlowStats:
    market_ratio: float
    size_powerlaw: PowerLawFit
    round_number_peaks: tuple
    n_events: int
    n_cancel: int
    n_market: int


def flow_stats(flow: FlowSeq) -> FlowStats:
    """Liquidity-consumption ratio, size power law, round-number peaks.

    market_ratio = markets / (markets + cancels). The size histogram over
    all events is fitted in log-log space; round_number_peaks lists the
    multiples of 10 whose frequency exceeds both neighbors'.
    """
    n = len(flow)
    if n == 0:
        raise EmptyFlow("empty flow")
    kind = np.asarray(flow.kind)
    n_cancel = int(np.sum(kind == KIND_CANCEL))
    n_market = int(np.sum(kind == KIND_MARKET))
    if n_cancel + n_market == 0:
        raise EmptyFlow("no cancel or market events; market_ratio undefined")
    sizes = np.asarray(flow.size)
    uniq, counts = np.unique(sizes, return_counts=True)
    freq = counts / n
    fit = fit_powerlaw_loglog(uniq.astype(np.float64), freq)
    freq_of = dict(zip(uniq.tolist(), freq.tolist()))
    peaks = []
    for s in range(10, int(uniq.max()) + 1, 10):
        f = freq_of.get(s, 0.0)
        if f > freq_of.get(s - 1, 0.0) and f > freq_of.get(s + 1, 0.0) and f > 0:
            peaks.append(s)
    return FlowStats(
        market_ratio=n_market / (n_cancel + n_market),
        size_powerlaw=fit,
        round_number_peaks=tuple(peaks),
        n_events=n,
        n_cancel=n_cancel,
        n_market=n_market,
    )


@dataclass(frozen=True)
class WindowActivity:
    counts: np.ndarray
    volumes: np.ndarray
    count_selection: ModelSelection
    volume_selection: ModelSelection
    window: float
    n_windows: int
    zero_windows: int


def window_activity(flow: FlowSeq, window: float = 300.0) -> WindowActivity:
    """Event counts and summed sizes per aligned window, with a
    Gamma-vs-LogNormal model selection for each.

    Windows sit on the absolute grid of `window` seconds (anchored at
    midnight); partial windows at either end are dropped. Zero-activity
    windows cannot enter the positive-support fits; they are dropped from
    the fit and counted.
    """
    if len(flow) == 0:
        raise EmptyFlow("empty flow")
    w_ns = int(round(window * NS_PER_SEC))
    ts = np.asarray(flow.ts)
    first_aligned = ((int(ts[0]) + w_ns - 1) // w_ns) * w_ns
    n_win = (int(ts[-1]) - first_aligned) // w_ns
    if n_win < 10:
        raise TooShort(f"need >= 10 complete windows of {window:g}s, have {n_win}")
    edges = first_aligned + w_ns * np.arange(n_win + 1, dtype=np.int64)
    # half-open [edge, next_edge) assignment, unlike histogram's closed last bin
    idx = np.searchsorted(ts, edges, side="left")
    counts = np.diff(idx).astype(np.float64)
    size_cum = np.concatenate(([0.0], np.cumsum(np.asarray(flow.size, dtype=np.float64))))
    volumes = size_cum[idx[1:]] - size_cum[idx[:-1]]
    zero_windows = int(np.sum(counts == 0))
    families = ("gamma", "lognormal")
    count_sel = select_model(counts[counts > 0], families)
    volume_sel = select_model(volumes[volumes > 0], families)
    return WindowActivity(
        counts=counts, volumes=volumes,
        count_selection=count_sel, volume_selection=volume_sel,
        window=window, n_windows=int(n_win), zero_windows=zero_windows,
    )


# ---------------------------------------------------------------------------
# interarrival times
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class InterarrivalResult:
    fit: WeibullFit
    time_type: str
    n_gaps: int
    zeros_replaced: int


def interarrival_fit(flow: FlowSeq, time_type: str = "calendar") -> InterarrivalResult:
    """Weibull fit of gaps between consecutive market events.

    time_type "calendar" measures gaps in seconds; "event" measures them
    in event counts (positions in the flow). Zero calendar gaps are
    replaced by half the timestamp resolution (0.5ns) before fitting.
    """
    if time_type not in ("calendar", "event"):
        raise ConfigError(f"time_type must be 'calendar' or 'event', got {time_type!r}")
    kind = np.asarray(flow.kind)
    m_idx = np.nonzero(kind == KIND_MARKET)[0]
    if m_idx.size < 101:
        raise TooShort(f"need >= 100 market-event gaps, have {max(m_idx.size - 1, 0)}")
    zeros_replaced = 0
    if time_type == "calendar":
        gaps = np.diff(np.asarray(flow.ts)[m_idx]).astype(np.float64) / NS_PER_SEC
        zero = gaps == 0.0
        zeros_replaced = int(zero.sum())
        if zeros_replaced:
            gaps[zero] = 0.5 / NS_PER_SEC
    else:
        gaps = np.diff(m_idx).astype(np.float64)
    fit = fit_weibull_mle(gaps)
    return InterarrivalResult(
        fit=fit, time_type=time_type, n_gaps=int(gaps.size),
        zeros_replaced=zeros_replaced,
    )


def summarize_weibull_fits(fits: Sequence[WeibullFit]) -> dict:
    """Cross-session parameter summary for a collection of Weibull fits."""
    if not fits:
        raise TooShort("no fits to summarize")
    k = np.asarray([f.k for f in fits])
    lam = np.asarray([f.lam for f in fits])
    return {
        "n_sessions": len(fits),
        "k_mean": float(k.mean()),
        "k_median": float(np.median(k)),
        "k_min": float(k.min()),
        "k_max": float(k.max()),
        "lam_mean": float(lam.mean()),
        "lam_median": float(np.median(lam)),
        "lam_min": float(lam.min()),
        "lam_max": float(lam.max()),
    }


# ---------------------------------------------------------------------------
# event cross-excitation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExcitationResult:
    """Conditional next-event structure over the six event classes.

    transition[i, j] = P(next = j | current = i); marginals are class
    frequencies over the whole flow; excitation = transition / marginal
    (> 1 means class i makes class j more likely than its base rate).
    Masked or undefined entries are NaN.
    """

    labels: tuple
    transition: np.ndarray
    excitation: np.ndarray
    marginals: np.ndarray
    mm_diagonal_masked: bool
    n: int


def _class_indices(flow: FlowSeq) -> np.ndarray:
    kind = np.asarray(flow.kind, dtype=np.int64)
    side = np.asarray(flow.side, dtype=np.int64)
    kgroup = np.empty_like(kind)
    kgroup[kind == KIND_CANCEL] = 0
    kgroup[kind == KIND_LIMIT] = 1
    kgroup[kind == KIND_MARKET] = 2
    return kgroup * 2 + (side == SIDE_BID)


def excitation(flow: FlowSeq, mask_mm: bool = True) -> ExcitationResult:
    """Transition and excitation matrices over consecutive event pairs."""
    n = len(flow)
    if n < 2:
        raise EmptyFlow(f"need >= 2 events for transitions, have {n}")
    cls = _class_indices(flow)
    pair_counts = np.bincount(cls[:-1] * 6 + cls[1:], minlength=36).reshape(6, 6)
    row_sums = pair_counts.sum(axis=1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        transition = pair_counts / row_sums
    marginals = np.bincount(cls, minlength=6) / n
    with np.errstate(invalid="ignore", divide="ignore"):
        exc = np.where(marginals[None, :] > 0, transition / marginals[None, :], np.nan)
    if mask_mm:
        exc[4, 4] = np.nan
        exc[5, 5] = np.nan
    return ExcitationResult(
        labels=EVENT_CLASSES,
        transition=transition,
        excitation=exc,
        marginals=marginals,
        mm_diagonal_masked=mask_mm,
        n=n,
    )


# ---------------------------------------------------------------------------
# signature plot
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SignatureResult:
    lags: np.ndarray
    sigma2: np.ndarray
    normalized: np.ndarray


def signature(data, lags: Sequence[float] | None = None) -> SignatureResult:
    """Variance of mid increments over lag h, divided by h, per lag.

    Default lags are the geometric grid 1s * 2**j, j = 0..7. For each h the
    mid is sampled on an h-step grid (LOCF); sigma2 = Var(increments,
    ddof=1) / h. A flat profile is the diffusive (random-walk) signature.
    """
    mids = _as_mid_series(data)
    if lags is None:
        lags = [float(2 ** j) for j in range(8)]
    lags = sorted(float(h) for h in lags)
    if not lags or lags[0] <= 0:
        raise ConfigError("lags must be positive durations in seconds")
    span_ns = int(mids.ts[-1] - mids.ts[0]) if len(mids) else 0
    if span_ns < 10 * int(round(lags[-1] * NS_PER_SEC)):
        raise TooShort(
            f"series spans {span_ns / NS_PER_SEC:.1f}s; need >= 10x the "
            f"largest lag ({lags[-1]:g}s)"
        )
    out = np.empty(len(lags))
    for i, h in enumerate(lags):
        h_ns = int(round(h * NS_PER_SEC))
        grid = np.arange(int(mids.ts[0]), int(mids.ts[-1]) + 1, h_ns, dtype=np.int64)
        inc = np.diff(sample_locf(mids, grid))
        out[i] = float(np.var(inc, ddof=1)) / h
    return SignatureResult(
        lags=np.asarray(lags), sigma2=out, normalized=out / out.max()
    )


# ---------------------------------------------------------------------------
# spread statistics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SpreadStats:
    frequency: dict
    duration_calendar: dict
    duration_event: dict
    mean_spread_ticks: float
    # raw episode lengths per spread value; ns ints so sums stay exact
    episodes_ns: dict
    episodes_events: dict


def _percentile_summary(values: np.ndarray) -> dict:
    pct = np.percentile(values, _PERCENTILES)
    keys = ("p5", "p25", "median", "p75", "p95")
    return {k: float(v) for k, v in zip(keys, pct)}


def spread_stats(data) -> SpreadStats:
    """Time-weighted spread distribution and dwell-time episodes.

    The spread in force during [ts[i], ts[i+1]) is snapshot i's; the final
    snapshot has no observed dwell and carries no weight. Episodes are
    maximal runs of constant spread; their calendar lengths sum to the full
    observed span and their event lengths to n-1 by construction.
    """
    arr = _arrays_of(data)
    two_sided = (arr.bq[:, 0] > 0) & (arr.aq[:, 0] > 0)
    ts = arr.ts[two_sided]
    if ts.size < 2:
        raise TooShort("need >= 2 two-sided snapshots")
    sp = (arr.at[two_sided, 0] - arr.bt[two_sided, 0]).astype(np.int64)
    w = np.diff(ts).astype(np.float64)
    s_i = sp[:-1]
    total = w.sum()
    frequency: dict[int, float] = {}
    for v in np.unique(s_i):
        frequency[int(v)] = float(w[s_i == v].sum() / total)
    mean_spread = float((s_i * w).sum() / total)

    changes = np.flatnonzero(np.diff(s_i) != 0)
    starts = np.concatenate(([0], changes + 1))
    ends = np.concatenate((changes, [s_i.size - 1]))
    cal: dict[int, list] = {}
    evt: dict[int, list] = {}
    for a, b in zip(starts, ends):
        v = int(s_i[a])
        cal.setdefault(v, []).append(int(ts[b + 1] - ts[a]))
        evt.setdefault(v, []).append(int(b - a + 1))
    duration_calendar = {
        v: _percentile_summary(np.asarray(d, dtype=np.float64) / NS_PER_SEC)
        for v, d in cal.items()
    }
    duration_event = {
        v: _percentile_summary(np.asarray(d, dtype=np.float64)) for v, d in evt.items()
    }
    return SpreadStats(
        frequency=frequency,
        duration_calendar=duration_calendar,
        duration_event=duration_event,
        mean_spread_ticks=mean_spread,
        episodes_ns={v: tuple(d) for v, d in cal.items()},
        episodes_events={v: tuple(d) for v, d in evt.items()},
    )


# ---------------------------------------------------------------------------
# volatility per unit traded liquidity
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class VolLiquidityResult:
    ratios: tuple
    summary: dict
    skipped_zero_volume: int
    window: float
    dt: float


def vol_liquidity_ratio(data, window: float = 3600.0, dt: float = 60.0) -> VolLiquidityResult:
    """Per-window sigma / sqrt(traded volume * tick_size).

    One ratio per complete window; sigma is the standard deviation of dt
    returns inside the window. Windows with zero traded volume are skipped
    and counted.
    """
    m = window / dt
    if abs(m - round(m)) > 1e-9 or round(m) < 2:
        raise ConfigError("window must be an integer multiple (>= 2) of dt")
    m = int(round(m))
    mids = _as_mid_series(data)
    if len(mids) < 2:
        raise TooShort("need at least two mid observations")
    tick_size = data.instrument.tick_size if hasattr(data, "instrument") else None
    if tick_size is None:
        raise ConfigError("vol_liquidity_ratio needs SessionData with an instrument")
    dt_ns = int(round(dt * NS_PER_SEC))
    win_ns = dt_ns * m
    t0 = int(mids.ts[0])
    n_win = (int(mids.ts[-1]) - t0) // win_ns
    if n_win < 1:
        raise TooShort(f"no complete {window:g}s window in the session")
    tr_ts, tr_sz = _trade_arrays(data)
    ratios = []
    skipped = 0
    for wdx in range(n_win):
        start = t0 + wdx * win_ns
        grid = start + dt_ns * np.arange(m + 1, dtype=np.int64)
        r = np.diff(np.log(sample_locf(mids, grid)))
        lo = np.searchsorted(tr_ts, start, side="left")
        hi = np.searchsorted(tr_ts, start + win_ns, side="left")
        vol = float(tr_sz[lo:hi].sum())
        if vol == 0.0:
            skipped += 1
            continue
        ratios.append(float(np.std(r, ddof=1)) / math.sqrt(vol * tick_size))
    if not ratios:
        raise TooShort("every window had zero traded volume")
    arr = np.asarray(ratios)
    summary = _percentile_summary(arr)
    summary["mean"] = float(arr.mean())
    return VolLiquidityResult(
        ratios=tuple(float(x) for x in arr),
        summary=summary,
        skipped_zero_volume=skipped,
        window=window,
        dt=dt,
    )


# ---------------------------------------------------------------------------
# book shape and intraday activity
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ShapeProfile:
    bid_avg: np.ndarray
    ask_avg: np.ndarray


def book_shape(data) -> ShapeProfile:
    """Time-weighted mean resting quantity per depth level per side.

    Snapshot i is weighted by its dwell ts[i+1] - ts[i]; the final
    snapshot's dwell is unobserved and carries no weight.
    """
    arr = _arrays_of(data)
    if arr.n < 2:
        raise TooShort("need >= 2 snapshots")
    w = np.diff(arr.ts).astype(np.float64)
    total = w.sum()
    bid = (arr.bq[:-1].astype(np.float64) * w[:, None]).sum(axis=0) / total
    ask = (arr.aq[:-1].astype(np.float64) * w[:, None]).sum(axis=0) / total
    return ShapeProfile(bid_avg=bid, ask_avg=ask)


@dataclass(frozen=True)
class IntradayProfile:
    bucket_start: np.ndarray
    norm_count: np.ndarray
    norm_volume: np.ndarray
    bucket: float


def intraday_profile(flow: FlowSeq, bucket: float = 900.0) -> IntradayProfile:
    """Activity share per bucket on the absolute `bucket`-second grid.

    Buckets run from the first event's bucket through the last event's,
    interior zero-activity buckets included; counts and summed sizes are
    each normalized to total 1.
    """
    if len(flow) == 0:
        raise EmptyFlow("empty flow")
    b_ns = int(round(bucket * NS_PER_SEC))
    ts = np.asarray(flow.ts)
    first = (int(ts[0]) // b_ns) * b_ns
    last = (int(ts[-1]) // b_ns) * b_ns
    edges = np.arange(first, last + 2 * b_ns, b_ns, dtype=np.int64)
    counts = np.histogram(ts, bins=edges)[0].astype(np.float64)
    volumes = np.histogram(ts, bins=edges, weights=np.asarray(flow.size, dtype=np.float64))[0]
    return IntradayProfile(
        bucket_start=edges[:-1],
        norm_count=counts / counts.sum(),
        norm_volume=volumes / volumes.sum(),
        bucket=bucket,
    )


# ---------------------------------------------------------------------------
# report assembly
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ReportConfig:
    """Knobs and reference ranges for build_report.

    ranges maps a dotted path into the metrics tree (e.g.
    "spread.mean_spread_ticks", "interarrival_calendar.fit.k",
    "flow.size_fit.alpha") to an inclusive [lo, hi] pair.
    """

    acf_dts: tuple = (1.0, 10.0, 60.0)
    acf_max_lag: int = 20
    lrd_dt: float = 1.0
    lrd_max_lag: int = 100
    volvol_dt: float = 60.0
    volvol_window_mult: int = 100
    volvol_mode: str = "across_windows"
    activity_window: float = 300.0
    ratio_window: float = 3600.0
    ratio_dt: float = 60.0
    intraday_bucket: float = 900.0
    signature_lags: tuple | None = None
    queue_level: int = 1
    ranges: Mapping[str, Sequence[float]] = field(default_factory=dict)


@dataclass
class RealismReport:
    instrument: str
    date: date
    metrics: dict
    errors: dict
    reference_checks: dict
    versions: dict

    @property
    def all_checks_pass(self) -> bool:
        return all(c["passed"] for c in self.reference_checks.values())

    def to_json_dict(self) -> dict:
        """Serializable report body. Failed metrics appear inside `metrics`
        as {"error": message}; the checks dict is emitted under "checks"."""
        metrics = {k: to_jsonable(v) for k, v in self.metrics.items()}
        for name, message in self.errors.items():
            metrics[name] = {"error": message}
        return {
            "instrument": self.instrument,
            "date": self.date.isoformat(),
            "metrics": metrics,
            "checks": to_jsonable(self.reference_checks),
            "versions": dict(self.versions),
        }


def to_jsonable(obj):
    """Recursively convert metric results to JSON-encodable structures.

    NaN (used for masked/undefined matrix entries) becomes None, so absent
    values serialize as JSON null rather than a non-standard token.
    """
    if obj is None or isinstance(obj, (bool, int, str)):
        return obj
    if isinstance(obj, float):
        return None if math.isnan(obj) else obj
    if isinstance(obj, (np.bool_, np.integer)):
        return obj.item()
    if isinstance(obj, np.floating):
        v = float(obj)
        return None if math.isnan(v) else v
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, date):
        return obj.isoformat()
    if hasattr(obj, "__dataclass_fields__"):
        return {k: to_jsonable(getattr(obj, k)) for k in obj.__dataclass_fields__}
    if isinstance(obj, Mapping):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    return obj


def _resolve_path(tree, path: str):
    node = tree
    for part in path.split("."):
        if isinstance(node, Mapping):
            if part not in node:
                raise KeyError(path)
            node = node[part]
        elif hasattr(node, "__dataclass_fields__") and part in node.__dataclass_fields__:
            node = getattr(node, part)
        else:
            raise KeyError(path)
    return node


def build_report(data: SessionData, flow: FlowSeq,
                 config: ReportConfig | None = None,
                 select: Iterable[str] | None = None) -> RealismReport:
    """Run the full metric battery and evaluate configured range checks.

    `select` restricts the run to the named metrics (see REPORT_METRICS);
    None runs everything. Individual metric failures are recorded under
    errors, never fatal. A range check fails (passed=false) when its value
    is outside [lo, hi] or its path cannot be resolved (e.g. the metric
    errored out or was not selected).
    """
    cfg = config or ReportConfig()
    chosen = None if select is None else frozenset(select)
    if chosen is not None:
        unknown = chosen - set(REPORT_METRICS)
        if unknown:
            raise ConfigError(
                f"unknown metrics {sorted(unknown)}; valid names: {', '.join(REPORT_METRICS)}"
            )
    metrics: dict[str, object] = {}
    errors: dict[str, str] = {}

    def run(name, fn, *args, **kw):
        if chosen is not None and name not in chosen:
            return
        try:
            metrics[name] = fn(*args, **kw)
        except Exception as exc:  # recorded, not fatal, per report contract
            errors[name] = f"{type(exc).__name__}: {exc}"

    run("return_acf", return_acf_report, data, cfg.acf_dts, cfg.acf_max_lag)
    run("long_range_dependence", long_range_dependence, data, cfg.lrd_dt, cfg.lrd_max_lag)
    run("volume_volatility", volume_volatility, data, cfg.volvol_dt,
        cfg.volvol_window_mult, cfg.volvol_mode)
    run("queue_gamma_bid", queue_gamma, data, "B", cfg.queue_level)
    run("queue_gamma_ask", queue_gamma, data, "A", cfg.queue_level)
    run("flow", flow_stats, flow)
    run("window_activity", window_activity, flow, cfg.activity_window)
    run("interarrival_calendar", interarrival_fit, flow, "calendar")
    run("interarrival_event", interarrival_fit, flow, "event")
    run("excitation", excitation, flow)
    run("signature", signature, data, cfg.signature_lags)
    run("spread", spread_stats, data)
    run("vol_liquidity_ratio", vol_liquidity_ratio, data, cfg.ratio_window, cfg.ratio_dt)
    run("book_shape", book_shape, data)
    run("intraday", intraday_profile, flow, cfg.intraday_bucket)

    checks: dict[str, dict] = {}
    for path, bounds in cfg.ranges.items():
        lo, hi = float(bounds[0]), float(bounds[1])
        entry: dict[str, object] = {"lo": lo, "hi": hi}
        try:
            value = float(_resolve_path(metrics, path))
            entry["value"] = value
            entry["passed"] = bool(lo <= value <= hi)
        except (KeyError, TypeError, ValueError) as exc:
            entry["value"] = None
            entry["passed"] = False
            entry["reason"] = f"unresolvable: {exc}"
        checks[path] = entry

    import lobflow

    return RealismReport(
        instrument=data.instrument.symbol,
        date=data.session_date,
        metrics=metrics,
        errors=errors,
        reference_checks=checks,
        versions={"lobflow": lobflow.__version__, "numpy": np.__version__},
    )
