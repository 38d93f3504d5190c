"""Seeded synthetic market sessions with exact ground-truth order flow.

The generator runs an event-driven book simulation: every step draws one
event (limit placement, cancel, or market order), applies it to a book that
never holds more than `levels` prices per side, and emits the truncated
snapshot. Because each snapshot pair differs by exactly one event and no
price ever scrolls in or out of the visible window, the emitted stream can
be reconstructed losslessly, which makes the generator the oracle for the
extraction and replay code paths.

Determinism contract: all randomness is pre-drawn from one
numpy.random.default_rng(seed) in a fixed order (interarrival gaps, event
type, side, placement, level choice, queue targets, order sizes, initial
queues, regime switch times), so a fixed config is byte-reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Union

import numpy as np

from .core import (
    NS_PER_DAY,
    NS_PER_SEC,
    FlowSeq,
    BookArrays,
    InstrumentSpec,
    MidSeries,
    SnapshotSeq,
    Trade,
    price_to_ticks,
    ts_to_date,
)
from .errors import ConfigError
from .ingest import SessionData, TradeSeq
from . import _kernels

__all__ = [
    "PowerLawSizes",
    "ConstantSizes",
    "GammaSizes",
    "ExponentialGaps",
    "WeibullGaps",
    "GammaQueue",
    "RegimeConfig",
    "GenConfig",
    "GenResult",
    "genconfig_from_dict",
    "genconfig_from_json",
    "generate",
    "sample_sizes",
    "sample_gaps",
    "mean_gap",
    "BounceConfig",
    "generate_bounce_trades",
    "random_walk_mid",
]


# ---------------------------------------------------------------------------
# parameter laws
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PowerLawSizes:
    """Discrete order sizes on 1..max_size with P(s) proportional to
    s**-alpha, with extra mass on multiples of 10 (round-number clustering)."""

    alpha: float = 1.6
    max_size: int = 500
    round_boost: float = 3.0

    def __post_init__(self) -> None:
        if not self.alpha > 0:
            raise ConfigError("size power-law alpha must be positive")
        if self.max_size < 2:
            raise ConfigError("size power-law max_size must be >= 2")
        if not self.round_boost >= 1.0:
            raise ConfigError("size round_boost must be >= 1")

    def pmf(self) -> np.ndarray:
        s = np.arange(1, self.max_size + 1, dtype=np.float64)
        w = s ** -self.alpha
        w[9::10] *= self.round_boost
        return w / w.sum()


@dataclass(frozen=True)
class ConstantSizes:
    size: int = 1

    def __post_init__(self) -> None:
        if self.size < 1:
            raise ConfigError("constant size must be >= 1")


@dataclass(frozen=True)
class GammaSizes:
    """Gamma-distributed sizes, rounded to integers >= 1."""

    shape: float = 2.0
    scale: float = 10.0

    def __post_init__(self) -> None:
        if not (self.shape > 0 and self.scale > 0):
            raise ConfigError("gamma size shape and scale must be positive")


SizeLaw = Union[PowerLawSizes, ConstantSizes, GammaSizes]


@dataclass(frozen=True)
class ExponentialGaps:
    """Exponential interarrival times. `rate` is events per second; leave it
    None to derive the rate from the configured intensities (their sum)."""

    rate: float | None = None

    def __post_init__(self) -> None:
        if self.rate is not None and not self.rate > 0:
            raise ConfigError("interarrival rate must be positive")


@dataclass(frozen=True)
class WeibullGaps:
    """Weibull interarrival times with shape k and scale lam (seconds)."""

    k: float
    lam: float

    def __post_init__(self) -> None:
        if not (self.k > 0 and self.lam > 0):
            raise ConfigError("weibull gap shape and scale must be positive")


GapLaw = Union[ExponentialGaps, WeibullGaps]


@dataclass(frozen=True)
class GammaQueue:
    """Target resting-queue size per price level: Gamma(shape, scale)."""

    shape: float = 2.0
    scale: float = 40.0

    def __post_init__(self) -> None:
        if not (self.shape > 0 and self.scale > 0):
            raise ConfigError("queue target shape and scale must be positive")


@dataclass(frozen=True)
class RegimeConfig:
    """Two-state activity switching. State 0 runs at the base intensities,
    state 1 multiplies them all by `factor`; holding times in each state
    are exponential with mean `mean_hold` seconds. factor 1 disables it."""

    factor: float = 1.0
    mean_hold: float = 60.0

    def __post_init__(self) -> None:
        if not self.factor >= 1.0:
            raise ConfigError("regime factor must be >= 1")
        if not self.mean_hold > 0:
            raise ConfigError("regime mean_hold must be positive")


# ---------------------------------------------------------------------------
# samplers (shared with tests; vectorized inverse-CDF for the discrete law)
# ---------------------------------------------------------------------------

def sample_sizes(law: SizeLaw, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw n integer order sizes (>= 1) from the configured law."""
    if isinstance(law, ConstantSizes):
        return np.full(n, law.size, dtype=np.int64)
    if isinstance(law, GammaSizes):
        draws = np.rint(rng.gamma(law.shape, law.scale, n)).astype(np.int64)
        return np.maximum(draws, 1)
    if isinstance(law, PowerLawSizes):
        cdf = np.cumsum(law.pmf())
        idx = np.searchsorted(cdf, rng.random(n), side="right")
        return (np.minimum(idx, law.max_size - 1) + 1).astype(np.int64)
    raise ConfigError(f"unknown size law {type(law).__name__}")


def sample_gaps(law: GapLaw, n: int, rng: np.random.Generator,
                base_rate: float | None = None) -> np.ndarray:
    """Draw n interarrival gaps in seconds from the configured law."""
    if isinstance(law, ExponentialGaps):
        rate = law.rate if law.rate is not None else base_rate
        if rate is None or not rate > 0:
            raise ConfigError("exponential gaps need a positive rate")
        return rng.exponential(1.0 / rate, n)
    if isinstance(law, WeibullGaps):
        return law.lam * rng.weibull(law.k, n)
    raise ConfigError(f"unknown interarrival law {type(law).__name__}")


def mean_gap(law: GapLaw, base_rate: float | None = None) -> float:
    """Expected gap in seconds under the law."""
    if isinstance(law, ExponentialGaps):
        rate = law.rate if law.rate is not None else base_rate
        if rate is None or not rate > 0:
            raise ConfigError("exponential gaps need a positive rate")
        return 1.0 / rate
    if isinstance(law, WeibullGaps):
        return law.lam * math.gamma(1.0 + 1.0 / law.k)
    raise ConfigError(f"unknown interarrival law {type(law).__name__}")


# ---------------------------------------------------------------------------
# session generator
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GenConfig:
    """Full parameterization of one synthetic session.

    Intensities are events per second and set the relative frequency of the
    three event kinds. The interarrival law sets the clock; when the spread
    exceeds one tick, limit intensity is multiplied by spread_close_mult
    (and placements prefer in-spread prices), and the regime factor scales
    everything, both by shortening the drawn gaps proportionally.
    """

    seed: int
    duration: float
    tick_size: float = 0.005
    initial_mid: float = 170.0
    levels: int = 5
    limit_intensity: float = 60.0
    cancel_intensity: float = 30.0
    market_intensity: float = 10.0
    size_law: SizeLaw = field(default_factory=PowerLawSizes)
    interarrival_law: GapLaw = field(default_factory=ExponentialGaps)
    queue_law: GammaQueue = field(default_factory=GammaQueue)
    spread_close_mult: float = 2.0
    regime: RegimeConfig = field(default_factory=RegimeConfig)
    symbol: str = "SYNTH"
    epoch_day: int = 20_000

    def __post_init__(self) -> None:
        if self.levels < 2:
            raise ConfigError("levels must be >= 2")
        if not self.tick_size > 0:
            raise ConfigError("tick_size must be positive")
        for name in ("limit_intensity", "cancel_intensity", "market_intensity"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        # all-zero intensities are allowed: the session is just empty
        if not self.duration > 0:
            raise ConfigError("duration must be positive")
        window_s = (18 - 9) * 3600
        if self.duration > window_s:
            raise ConfigError(f"duration exceeds the {window_s}s trading window")
        if not self.spread_close_mult >= 1.0:
            raise ConfigError("spread_close_mult must be >= 1")
        try:
            mid_tick = price_to_ticks(self.initial_mid, self.tick_size)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if mid_tick < self.levels + 10:
            raise ConfigError("initial_mid too close to zero for the book depth")
        if isinstance(self.interarrival_law, ExponentialGaps):
            rate = self.interarrival_law.rate
            total = self.total_intensity
            if rate is not None and abs(rate - total) > 1e-9 * total:
                raise ConfigError(
                    f"exponential gap rate {rate} inconsistent with total "
                    f"intensity {total}; omit rate to derive it"
                )

    @property
    def total_intensity(self) -> float:
        return self.limit_intensity + self.cancel_intensity + self.market_intensity


_SIZE_LAWS = {"powerlaw": PowerLawSizes, "constant": ConstantSizes, "gamma": GammaSizes}
_GAP_LAWS = {"exponential": ExponentialGaps, "weibull": WeibullGaps}


def _law_from_dict(raw, table: dict, what: str):
    if not isinstance(raw, dict):
        raise ConfigError(f'{what} must be an object with a "type" key')
    kind = raw.get("type")
    cls = table.get(kind)
    if cls is None:
        raise ConfigError(f"unknown {what} type {kind!r}; expected one of {sorted(table)}")
    try:
        return cls(**{k: v for k, v in raw.items() if k != "type"})
    except TypeError as exc:
        raise ConfigError(f"bad {what} parameters: {exc}") from exc


def _sub_from_dict(raw, cls, what: str):
    if not isinstance(raw, dict):
        raise ConfigError(f"{what} must be an object")
    try:
        return cls(**raw)
    except TypeError as exc:
        raise ConfigError(f"bad {what} parameters: {exc}") from exc


def genconfig_from_dict(raw: dict) -> GenConfig:
    """Build a GenConfig from plain JSON data. The nested laws are objects
    carrying a "type" key (size: powerlaw|constant|gamma; interarrival:
    exponential|weibull); queue_law and regime take their fields directly.
    Unknown keys raise ConfigError rather than being ignored."""
    import dataclasses

    if not isinstance(raw, dict):
        raise ConfigError("generator config must be a JSON object")
    known = {f.name for f in dataclasses.fields(GenConfig)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown generator keys {sorted(unknown)}")
    kwargs = dict(raw)
    if "size_law" in kwargs:
        kwargs["size_law"] = _law_from_dict(kwargs["size_law"], _SIZE_LAWS, "size_law")
    if "interarrival_law" in kwargs:
        kwargs["interarrival_law"] = _law_from_dict(
            kwargs["interarrival_law"], _GAP_LAWS, "interarrival_law"
        )
    if "queue_law" in kwargs:
        kwargs["queue_law"] = _sub_from_dict(kwargs["queue_law"], GammaQueue, "queue_law")
    if "regime" in kwargs:
        kwargs["regime"] = _sub_from_dict(kwargs["regime"], RegimeConfig, "regime")
    try:
        return GenConfig(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"bad generator config: {exc}") from exc


def genconfig_from_json(path: str) -> GenConfig:
    import json

    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read generator config {path}: {exc}") from exc
    return genconfig_from_dict(raw)


@dataclass
class GenResult:
    """Generator output; unpacks as (data, flow) for pipeline use."""

    data: SessionData
    flow: FlowSeq
    stats: dict

    def __iter__(self) -> Iterator:
        return iter((self.data, self.flow))


_AGGRESSOR_OF_RESTING = ("A", "B")  # resting bid consumed by ask aggressor


def _empty_session(config: GenConfig, rng: np.random.Generator, mid_tick: int) -> GenResult:
    """Zero total intensity: the initial book stands alone, nothing arrives."""
    L = config.levels
    offs = np.arange(L, dtype=np.int64)
    init_q = np.maximum(
        np.rint(rng.gamma(config.queue_law.shape, config.queue_law.scale, 2 * L)), 1
    ).astype(np.int64)
    ts0 = config.epoch_day * NS_PER_DAY + 9 * 3600 * NS_PER_SEC
    arrays = BookArrays(
        ts=np.array([ts0], dtype=np.int64),
        bt=(mid_tick - 1 - offs)[None, :].copy(),
        bq=init_q[:L][None, :].copy(),
        at=(mid_tick + 1 + offs)[None, :].copy(),
        aq=init_q[L:][None, :].copy(),
        tick_size=config.tick_size,
    )
    empty_i64 = np.empty(0, dtype=np.int64)
    flow = FlowSeq(
        ts=empty_i64, kind=np.empty(0, dtype=np.int8), side=np.empty(0, dtype=np.int8),
        tick=empty_i64, size=empty_i64, level=empty_i64, tick_size=config.tick_size,
    )
    data = SessionData(
        snapshots=SnapshotSeq(arrays),
        trades=TradeSeq(()),
        instrument=InstrumentSpec(symbol=config.symbol, tick_size=config.tick_size, levels=L),
        session_date=ts_to_date(ts0),
    )
    stats = {"events": 0, "trades": 0, "conversions": 0, "truncated": False}
    return GenResult(data=data, flow=flow, stats=stats)


def generate(config: GenConfig) -> GenResult:
    """Simulate one session; returns the data and its exact event history.

    The returned flow is ground truth in the extraction sense: running the
    snapshot/trade outputs back through extract_session reproduces it
    event for event, and replaying it from the first snapshot reproduces
    every snapshot exactly.
    """
    rng = np.random.default_rng(config.seed)
    L = config.levels
    mid_tick = price_to_ticks(config.initial_mid, config.tick_size)

    base_rate = config.total_intensity
    if base_rate == 0.0:
        return _empty_session(config, rng, mid_tick)
    gap_mean = mean_gap(config.interarrival_law, base_rate)
    m_cap = config.spread_close_mult * config.regime.factor
    n_max = int(config.duration / gap_mean * m_cap * 1.15) + 1024

    gaps = sample_gaps(config.interarrival_law, n_max, rng, base_rate)
    u_type = rng.random(n_max)
    u_side = rng.random(n_max)
    u_act = rng.random(n_max)
    u_level = rng.random(n_max)
    q_targets = rng.gamma(config.queue_law.shape, config.queue_law.scale, n_max)
    law_sizes = sample_sizes(config.size_law, n_max, rng)
    init_q = np.maximum(
        np.rint(rng.gamma(config.queue_law.shape, config.queue_law.scale, 2 * L)), 1
    ).astype(np.int64)

    ts0 = config.epoch_day * NS_PER_DAY + 9 * 3600 * NS_PER_SEC
    end_ts = ts0 + int(round(config.duration * NS_PER_SEC))
    if config.regime.factor > 1.0:
        n_sw = int(config.duration / config.regime.mean_hold * 3) + 16
        holds = rng.exponential(config.regime.mean_hold, n_sw)
        sw_times = (ts0 + np.cumsum(holds) * NS_PER_SEC).astype(np.int64)
    else:
        sw_times = np.empty(0, dtype=np.int64)

    offs = np.arange(L, dtype=np.int64)
    bt0 = mid_tick - 1 - offs
    at0 = mid_tick + 1 + offs
    bq0 = init_q[:L].copy()
    aq0 = init_q[L:].copy()

    (
        n_ev, n_tr, conversions,
        sn_ts, sbt, sbq, sat, saq,
        ev_kind, ev_side, ev_tick, ev_size, ev_level, tr_ev,
    ) = _kernels.gen_session(
        np.int64(ts0), np.int64(end_ts), L,
        bt0, bq0, at0, aq0,
        float(config.limit_intensity), float(config.cancel_intensity),
        float(config.market_intensity), float(config.spread_close_mult),
        gaps, u_type, u_side, u_act, u_level,
        q_targets, law_sizes,
        sw_times, float(config.regime.factor),
    )

    rows = n_ev + 1
    arrays = BookArrays(
        ts=np.ascontiguousarray(sn_ts[:rows]),
        bt=np.ascontiguousarray(sbt[:rows]),
        bq=np.ascontiguousarray(sbq[:rows]),
        at=np.ascontiguousarray(sat[:rows]),
        aq=np.ascontiguousarray(saq[:rows]),
        tick_size=config.tick_size,
    )
    flow = FlowSeq(
        ts=np.ascontiguousarray(sn_ts[1:rows]),
        kind=ev_kind[:n_ev].astype(np.int8),
        side=ev_side[:n_ev].astype(np.int8),
        tick=np.ascontiguousarray(ev_tick[:n_ev]),
        size=np.ascontiguousarray(ev_size[:n_ev]),
        level=np.ascontiguousarray(ev_level[:n_ev]),
        tick_size=config.tick_size,
    )

    te = tr_ev[:n_tr]
    tr_ts = sn_ts[te + 1].tolist()
    tr_px = (ev_tick[te] * config.tick_size).tolist()
    tr_sz = ev_size[te].tolist()
    tr_sd = ev_side[te].tolist()
    trades = TradeSeq(
        Trade(ts=t, price=p, size=s, aggressor=_AGGRESSOR_OF_RESTING[sd], on_book=True)
        for t, p, s, sd in zip(tr_ts, tr_px, tr_sz, tr_sd)
    )

    instrument = InstrumentSpec(
        symbol=config.symbol, tick_size=config.tick_size, levels=L
    )
    data = SessionData(
        snapshots=SnapshotSeq(arrays),
        trades=trades,
        instrument=instrument,
        session_date=ts_to_date(ts0),
    )
    stats = {
        "events": int(n_ev),
        "trades": int(n_tr),
        "conversions": int(conversions),
        "truncated": bool(n_ev == n_max),
    }
    return GenResult(data=data, flow=flow, stats=stats)


# ---------------------------------------------------------------------------
# bid-ask bounce trade series
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BounceConfig:
    """Trade prices bouncing between bid and ask around a random-walk mid.

    Each trade resamples its side uniformly with probability `flip` and
    keeps the previous side otherwise. The lag-1 autocorrelation of price
    changes is exactly -flip/2 when the mid is still: -0.5 for flip 1
    (independent sides) down to 0 as flip -> 0.
    """

    seed: int
    n: int
    flip: float = 1.0
    spread: float = 0.01
    mid_sigma: float = 0.0
    mid_start: float = 170.0

    def __post_init__(self) -> None:
        if self.n < 2:
            raise ConfigError("need at least two trades")
        if not 0.0 <= self.flip <= 1.0:
            raise ConfigError("flip must be in [0, 1]")
        if not self.spread > 0:
            raise ConfigError("spread must be positive")
        if self.mid_sigma < 0:
            raise ConfigError("mid_sigma must be >= 0")


def generate_bounce_trades(config: BounceConfig) -> np.ndarray:
    """Trade-price series under the bounce model; see BounceConfig."""
    rng = np.random.default_rng(config.seed)
    n = config.n
    if config.mid_sigma > 0:
        mid = config.mid_start + np.cumsum(rng.normal(0.0, config.mid_sigma, n))
    else:
        mid = np.full(n, config.mid_start)
    draws = rng.integers(0, 2, n) * 2 - 1
    resample = rng.random(n) < config.flip
    resample[0] = True
    src = np.where(resample, np.arange(n), 0)
    np.maximum.accumulate(src, out=src)
    side = draws[src]
    return mid + side * (config.spread * 0.5)


def random_walk_mid(seed: int, n: int, dt: float = 1.0, sigma: float = 0.01,
                    start: float = 170.0, start_ts: int = 0) -> MidSeries:
    """Gaussian random-walk mid sampled on a regular calendar grid."""
    if n < 2:
        raise ConfigError("need at least two observations")
    if not (dt > 0 and sigma > 0):
        raise ConfigError("dt and sigma must be positive")
    rng = np.random.default_rng(seed)
    ts = start_ts + (np.arange(n, dtype=np.int64) * int(round(dt * NS_PER_SEC)))
    mid = start + np.cumsum(rng.normal(0.0, sigma, n))
    return MidSeries(ts=ts, mid=mid)
