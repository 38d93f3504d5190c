"""Core types for L2 book data and labeled order flow.

Prices are held internally as integer tick counts so that book comparisons
are exact; price-unit floats are derived views (ticks * tick_size). Book
levels are stored best-first: bids by descending tick, asks by ascending
tick. Timestamps are integer nanoseconds on the exchange clock.

Two representations coexist:

* object level: BookSnapshot / FlowEvent / Trade, immutable dataclasses,
  convenient for fixtures and single-update reasoning;
* column level: BookArrays / SnapshotSeq / FlowSeq, numpy int64 columns,
  what the bulk pipeline actually moves around. SnapshotSeq and FlowSeq are
  ordinary sequences whose elements materialize lazily, so APIs that promise
  "sequence of BookSnapshot" hold for both representations.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import date, timedelta
from enum import Enum
from typing import Iterator, Mapping, Sequence

import numpy as np

from .errors import ConfigError, EmptySide, NonPositiveSpread, TooShort

NS_PER_SEC = 1_000_000_000
NS_PER_DAY = 86_400 * NS_PER_SEC

# Integer codes used by the column representation and the compiled kernels.
KIND_LIMIT, KIND_CANCEL, KIND_MARKET = 0, 1, 2
SIDE_BID, SIDE_ASK = 0, 1


class EventKind(str, Enum):
    LIMIT = "L"
    CANCEL = "C"
    MARKET = "M"


class Side(str, Enum):
    BID = "B"
    ASK = "A"


_KIND_BY_CODE = (EventKind.LIMIT, EventKind.CANCEL, EventKind.MARKET)
_SIDE_BY_CODE = (Side.BID, Side.ASK)
_CODE_BY_KIND = {EventKind.LIMIT: KIND_LIMIT, EventKind.CANCEL: KIND_CANCEL, EventKind.MARKET: KIND_MARKET}
_CODE_BY_SIDE = {Side.BID: SIDE_BID, Side.ASK: SIDE_ASK}


# ---------------------------------------------------------------------------
# price grid helpers
# ---------------------------------------------------------------------------

def price_to_ticks(price: float, tick_size: float) -> int:
    """Convert a price to its integer tick count.

    The price must sit on the tick grid within 1e-9 relative tolerance.
    """
    ticks = round(price / tick_size)
    if abs(ticks * tick_size - price) > 1e-9 * max(1.0, abs(price)):
        raise ValueError(f"price {price!r} is not a multiple of tick size {tick_size!r}")
    return int(ticks)


def price_decimals(tick_size: float) -> int:
    """Number of decimal places needed to print prices on this grid exactly."""
    for d in range(13):
        scaled = tick_size * 10**d
        if abs(scaled - round(scaled)) <= 1e-9 * max(1.0, scaled):
            return d
    raise ValueError(f"tick size {tick_size!r} has no short decimal form")


def parse_time_of_day_ns(text: str) -> int:
    """Parse 'HH:MM:SS' (seconds optional) into nanoseconds since midnight."""
    parts = text.strip().split(":")
    if len(parts) not in (2, 3) or not all(p.isdigit() for p in parts):
        raise ConfigError(f"bad time of day: {text!r}")
    h, m = int(parts[0]), int(parts[1])
    s = int(parts[2]) if len(parts) == 3 else 0
    if not (0 <= h < 24 and 0 <= m < 60 and 0 <= s < 60):
        raise ConfigError(f"bad time of day: {text!r}")
    return ((h * 60 + m) * 60 + s) * NS_PER_SEC


def ts_to_date(ts_ns: int) -> date:
    return date(1970, 1, 1) + timedelta(days=int(ts_ns) // NS_PER_DAY)


# ---------------------------------------------------------------------------
# instrument description
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class InstrumentSpec:
    """Static facts about one instrument's book feed.

    session_start/session_end are inclusive time-of-day bounds in ns since
    midnight on the exchange clock. `references` carries optional published
    reference values (e.g. a long-run mean spread in ticks) that report
    checks may draw ranges around; it imposes nothing by itself.
    """

    symbol: str
    tick_size: float
    levels: int = 5
    session_start: int = 9 * 3600 * NS_PER_SEC
    session_end: int = 18 * 3600 * NS_PER_SEC
    references: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.tick_size <= 0:
            raise ConfigError("tick_size must be positive")
        if self.levels < 1:
            raise ConfigError("levels must be >= 1")
        if not 0 <= self.session_start < self.session_end <= NS_PER_DAY:
            raise ConfigError("session bounds must satisfy 0 <= start < end <= 24h")

    @classmethod
    def from_json(cls, path: str) -> "InstrumentSpec":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                raw = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read instrument spec {path}: {exc}") from exc
        return cls.from_dict(raw)

    @classmethod
    def from_dict(cls, raw: dict) -> "InstrumentSpec":
        try:
            return cls(
                symbol=str(raw["symbol"]),
                tick_size=float(raw["tick_size"]),
                levels=int(raw.get("levels", 5)),
                session_start=parse_time_of_day_ns(raw.get("session_start", "09:00:00")),
                session_end=parse_time_of_day_ns(raw.get("session_end", "18:00:00")),
                references=dict(raw.get("references", {})),
            )
        except KeyError as exc:
            raise ConfigError(f"instrument spec missing key {exc}") from exc
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad instrument spec: {exc}") from exc


def bundled_instruments() -> dict[str, InstrumentSpec]:
    """Load the instrument presets shipped with the package, keyed by symbol."""
    from importlib import resources

    out: dict[str, InstrumentSpec] = {}
    for entry in resources.files("lobflow.specs").iterdir():
        if entry.name.endswith(".json"):
            spec = InstrumentSpec.from_dict(json.loads(entry.read_text(encoding="utf-8")))
            out[spec.symbol] = spec
    return out


# ---------------------------------------------------------------------------
# snapshots
# ---------------------------------------------------------------------------

@dataclass(frozen=True, slots=True)
class BookSnapshot:
    """One L2 view: up to `levels` aggregate (tick, qty) pairs per side.

    bids descend in tick, asks ascend; both best-first. Quantities are
    positive integers. An empty tuple is a legitimately empty side.
    """

    ts: int
    bids: tuple[tuple[int, int], ...]
    asks: tuple[tuple[int, int], ...]
    tick_size: float

    @classmethod
    def from_prices(
        cls,
        ts: int,
        bids: Sequence[tuple[float, int]],
        asks: Sequence[tuple[float, int]],
        tick_size: float,
    ) -> "BookSnapshot":
        """Build from price-unit levels, validating grid and book shape."""
        b = tuple((price_to_ticks(p, tick_size), int(q)) for p, q in bids)
        a = tuple((price_to_ticks(p, tick_size), int(q)) for p, q in asks)
        snap = cls(ts=int(ts), bids=b, asks=a, tick_size=tick_size)
        validate_snapshot(snap)
        return snap

    @property
    def best_bid_ticks(self) -> int | None:
        return self.bids[0][0] if self.bids else None

    @property
    def best_ask_ticks(self) -> int | None:
        return self.asks[0][0] if self.asks else None

    @property
    def best_bid(self) -> float | None:
        return self.bids[0][0] * self.tick_size if self.bids else None

    @property
    def best_ask(self) -> float | None:
        return self.asks[0][0] * self.tick_size if self.asks else None

    def bid_prices(self) -> tuple[tuple[float, int], ...]:
        return tuple((t * self.tick_size, q) for t, q in self.bids)

    def ask_prices(self) -> tuple[tuple[float, int], ...]:
        return tuple((t * self.tick_size, q) for t, q in self.asks)


def validate_snapshot(snap: BookSnapshot) -> None:
    """Raise if levels are unsorted, nonpositive, duplicated, or crossed."""
    prev = None
    for t, q in snap.bids:
        if q <= 0:
            raise ValueError(f"bid qty {q} at tick {t} must be positive")
        if prev is not None and t >= prev:
            raise ValueError("bid ticks must strictly descend")
        prev = t
    prev = None
    for t, q in snap.asks:
        if q <= 0:
            raise ValueError(f"ask qty {q} at tick {t} must be positive")
        if prev is not None and t <= prev:
            raise ValueError("ask ticks must strictly ascend")
        prev = t
    if snap.bids and snap.asks and snap.bids[0][0] >= snap.asks[0][0]:
        raise NonPositiveSpread(
            f"crossed book at ts {snap.ts}: bid {snap.bids[0][0]} >= ask {snap.asks[0][0]} ticks"
        )


@dataclass
class BookArrays:
    """Column form of a snapshot stream.

    bt/bq/at/aq are int64 arrays of shape (n, levels); empty slots hold 0 in
    the qty column (the tick column is meaningless there). Levels are
    compacted toward column 0 and sorted best-first, same as BookSnapshot.
    """

    ts: np.ndarray
    bt: np.ndarray
    bq: np.ndarray
    at: np.ndarray
    aq: np.ndarray
    tick_size: float

    @property
    def n(self) -> int:
        return int(self.ts.shape[0])

    def __len__(self) -> int:
        return self.n

    @property
    def levels(self) -> int:
        return int(self.bt.shape[1])

    def snapshot(self, i: int) -> BookSnapshot:
        bq = self.bq[i]
        aq = self.aq[i]
        nb = int(np.count_nonzero(bq))
        na = int(np.count_nonzero(aq))
        bids = tuple((int(self.bt[i, j]), int(bq[j])) for j in range(nb))
        asks = tuple((int(self.at[i, j]), int(aq[j])) for j in range(na))
        return BookSnapshot(ts=int(self.ts[i]), bids=bids, asks=asks, tick_size=self.tick_size)

    @classmethod
    def from_snapshots(cls, snaps: Sequence[BookSnapshot], levels: int | None = None) -> "BookArrays":
        if isinstance(snaps, SnapshotSeq):
            return snaps.arrays
        n = len(snaps)
        if n == 0:
            raise TooShort("need at least one snapshot")
        if levels is None:
            levels = max(1, max((max(len(s.bids), len(s.asks)) for s in snaps), default=1))
        ts = np.empty(n, dtype=np.int64)
        bt = np.zeros((n, levels), dtype=np.int64)
        bq = np.zeros((n, levels), dtype=np.int64)
        at = np.zeros((n, levels), dtype=np.int64)
        aq = np.zeros((n, levels), dtype=np.int64)
        tick_size = snaps[0].tick_size
        for i, s in enumerate(snaps):
            ts[i] = s.ts
            for j, (t, q) in enumerate(s.bids):
                bt[i, j] = t
                bq[i, j] = q
            for j, (t, q) in enumerate(s.asks):
                at[i, j] = t
                aq[i, j] = q
        return cls(ts=ts, bt=bt, bq=bq, at=at, aq=aq, tick_size=tick_size)


class SnapshotSeq(Sequence):
    """Sequence of BookSnapshot backed by BookArrays; items materialize lazily."""

    def __init__(self, arrays: BookArrays, stats: object | None = None):
        self.arrays = arrays
        self.stats = stats

    def __len__(self) -> int:
        return self.arrays.n

    def __getitem__(self, i):
        if isinstance(i, slice):
            return [self.arrays.snapshot(j) for j in range(*i.indices(len(self)))]
        if i < 0:
            i += len(self)
        if not 0 <= i < len(self):
            raise IndexError(i)
        return self.arrays.snapshot(i)

    def __iter__(self) -> Iterator[BookSnapshot]:
        for i in range(len(self)):
            yield self.arrays.snapshot(i)


def as_book_arrays(snaps: Sequence[BookSnapshot]) -> BookArrays:
    if isinstance(snaps, SnapshotSeq):
        return snaps.arrays
    if isinstance(snaps, BookArrays):
        return snaps
    return BookArrays.from_snapshots(snaps)


# ---------------------------------------------------------------------------
# trades and flow events
# ---------------------------------------------------------------------------

@dataclass(frozen=True, slots=True)
class Trade:
    """One print. `aggressor` is the aggressing side ('B'/'A') or None when
    the feed did not flag it. Off-book prints carry on_book=False and are
    dropped at ingest."""

    ts: int
    price: float
    size: int
    aggressor: str | None = None
    on_book: bool = True


@dataclass(frozen=True, slots=True)
class FlowEvent:
    """One reconstructed order-flow event.

    level is the 1-based depth of the affected price (in the book after the
    event for limits, before it for cancels/markets). A negative level marks
    a spread-improving limit and equals minus the tick distance from the
    previous best of the same side. level is never 0.
    """

    seq: int
    ts: int
    kind: EventKind
    side: Side
    price: float
    size: int
    level: int


class FlowSeq(Sequence):
    """Sequence of FlowEvent backed by int64/int8 columns.

    seq is implicit: event i has seq == i. kind/side use the module codes.
    """

    __slots__ = ("ts", "kind", "side", "tick", "size", "level", "tick_size")

    def __init__(self, ts, kind, side, tick, size, level, tick_size: float):
        self.ts = np.asarray(ts, dtype=np.int64)
        self.kind = np.asarray(kind, dtype=np.int8)
        self.side = np.asarray(side, dtype=np.int8)
        self.tick = np.asarray(tick, dtype=np.int64)
        self.size = np.asarray(size, dtype=np.int64)
        self.level = np.asarray(level, dtype=np.int64)
        self.tick_size = tick_size

    def __len__(self) -> int:
        return int(self.ts.shape[0])

    def __getitem__(self, i):
        if isinstance(i, slice):
            return [self[j] for j in range(*i.indices(len(self)))]
        if i < 0:
            i += len(self)
        if not 0 <= i < len(self):
            raise IndexError(i)
        return FlowEvent(
            seq=i,
            ts=int(self.ts[i]),
            kind=_KIND_BY_CODE[self.kind[i]],
            side=_SIDE_BY_CODE[self.side[i]],
            price=int(self.tick[i]) * self.tick_size,
            size=int(self.size[i]),
            level=int(self.level[i]),
        )

    def __iter__(self) -> Iterator[FlowEvent]:
        for i in range(len(self)):
            yield self[i]

    @classmethod
    def from_events(cls, events: Sequence[FlowEvent], tick_size: float) -> "FlowSeq":
        n = len(events)
        ts = np.empty(n, dtype=np.int64)
        kind = np.empty(n, dtype=np.int8)
        side = np.empty(n, dtype=np.int8)
        tick = np.empty(n, dtype=np.int64)
        size = np.empty(n, dtype=np.int64)
        level = np.empty(n, dtype=np.int64)
        for i, e in enumerate(events):
            ts[i] = e.ts
            kind[i] = _CODE_BY_KIND[e.kind]
            side[i] = _CODE_BY_SIDE[e.side]
            tick[i] = price_to_ticks(e.price, tick_size)
            size[i] = e.size
            level[i] = e.level
        return cls(ts, kind, side, tick, size, level, tick_size)


def flows_equal(a: Sequence[FlowEvent], b: Sequence[FlowEvent]) -> bool:
    """Event-for-event equality; column-level compare when both sides allow it."""
    if len(a) != len(b):
        return False
    if isinstance(a, FlowSeq) and isinstance(b, FlowSeq):
        return (
            a.tick_size == b.tick_size
            and bool(np.array_equal(a.ts, b.ts))
            and bool(np.array_equal(a.kind, b.kind))
            and bool(np.array_equal(a.side, b.side))
            and bool(np.array_equal(a.tick, b.tick))
            and bool(np.array_equal(a.size, b.size))
            and bool(np.array_equal(a.level, b.level))
        )
    return all(x == y for x, y in zip(a, b))


# ---------------------------------------------------------------------------
# mid series and returns
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MidSeries:
    """Mid prices (price units) at strictly increasing timestamps."""

    ts: np.ndarray
    mid: np.ndarray

    def __post_init__(self):
        if self.ts.shape != self.mid.shape:
            raise ValueError("ts and mid must have equal length")

    def __len__(self) -> int:
        return int(self.ts.shape[0])


def mid_price(snap: BookSnapshot) -> float:
    if not snap.bids or not snap.asks:
        raise EmptySide(f"mid undefined at ts {snap.ts}: one-sided book")
    return (snap.bids[0][0] + snap.asks[0][0]) * 0.5 * snap.tick_size


def spread_ticks(snap: BookSnapshot, spec: InstrumentSpec | None = None) -> int:
    """Best-ask minus best-bid in integer ticks. Exact by construction."""
    if not snap.bids or not snap.asks:
        raise EmptySide(f"spread undefined at ts {snap.ts}: one-sided book")
    s = snap.asks[0][0] - snap.bids[0][0]
    if s <= 0:
        raise NonPositiveSpread(f"spread {s} ticks at ts {snap.ts}")
    return int(s)


def mid_series(snapshots: Sequence[BookSnapshot]) -> MidSeries:
    """Mid at every two-sided snapshot; one-sided snapshots are skipped."""
    if isinstance(snapshots, (SnapshotSeq, BookArrays)):
        arr = snapshots.arrays if isinstance(snapshots, SnapshotSeq) else snapshots
        ok = (arr.bq[:, 0] > 0) & (arr.aq[:, 0] > 0)
        ts = arr.ts[ok]
        mid = (arr.bt[ok, 0] + arr.at[ok, 0]) * (0.5 * arr.tick_size)
        return MidSeries(ts=ts, mid=mid.astype(np.float64))
    ts_list = []
    mid_list = []
    for s in snapshots:
        if s.bids and s.asks:
            ts_list.append(s.ts)
            mid_list.append((s.bids[0][0] + s.asks[0][0]) * 0.5 * s.tick_size)
    return MidSeries(ts=np.asarray(ts_list, dtype=np.int64), mid=np.asarray(mid_list, dtype=np.float64))


def sample_locf(series: MidSeries, grid_ts: np.ndarray) -> np.ndarray:
    """Sample the series on grid timestamps, carrying the last value forward.

    Every grid point must be >= the first series timestamp.
    """
    idx = np.searchsorted(series.ts, grid_ts, side="right") - 1
    if np.any(idx < 0):
        raise ValueError("grid point precedes first observation")
    return series.mid[idx]


def log_returns(series: MidSeries, dt: float | str) -> np.ndarray:
    """Log returns of the mid.

    dt is either a positive duration in seconds (calendar sampling on a
    fixed grid anchored at the first observation, last value carried
    forward) or the string "tick" / "tick-by-tick" (returns between
    consecutive distinct mids).
    """
    if len(series) < 2:
        raise TooShort(f"need >= 2 mid observations, have {len(series)}")
    if isinstance(dt, str):
        if dt not in ("tick", "tick-by-tick"):
            raise ConfigError(f"unknown sampling mode {dt!r}")
        changed = np.empty(len(series), dtype=bool)
        changed[0] = True
        np.not_equal(series.mid[1:], series.mid[:-1], out=changed[1:])
        distinct = series.mid[changed]
        if distinct.shape[0] < 2:
            raise TooShort("mid never changed; no tick returns")
        return np.diff(np.log(distinct))
    if not dt > 0:
        raise ConfigError("dt must be positive")
    dt_ns = int(round(dt * NS_PER_SEC))
    span = int(series.ts[-1] - series.ts[0])
    n_grid = span // dt_ns + 1
    if n_grid < 2:
        raise TooShort(f"series span {span / NS_PER_SEC:.3f}s is under one dt step")
    grid = series.ts[0] + dt_ns * np.arange(n_grid, dtype=np.int64)
    sampled = sample_locf(series, grid)
    return np.diff(np.log(sampled))
