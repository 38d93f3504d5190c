"""CSV loading and writing for snapshot streams and prints.

Snapshot files carry one row per book update:

    ts_ns,bp1..bpL,bq1..bqL,ap1..apL,aqL..aqL

with prices in price units (empty field = vacant level) and integer
quantities. Trade files carry:

    ts_ns,price,size,aggressor,onbook

with aggressor one of B/A/U (U = unflagged) and onbook 0/1.

Loading filters rows to the instrument's session hours (inclusive bounds,
time of day on the exchange clock), collapses identical consecutive rows,
keeps the last row when several share a timestamp, and validates book
shape. In strict mode the first bad row raises ParseError with its 1-based
data row number; otherwise bad rows are dropped and counted.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from datetime import date
from typing import Sequence

import numpy as np
import pandas as pd

from .core import (
    NS_PER_DAY,
    BookArrays,
    InstrumentSpec,
    SnapshotSeq,
    Trade,
    as_book_arrays,
    price_decimals,
    ts_to_date,
)
from .errors import EmptyFile, ParseError


@dataclass(frozen=True)
class LoadStats:
    """Accounting for one loaded file; retained + dropped sum to rows read."""

    rows_read: int
    retained: int
    dropped_out_of_session: int = 0
    dropped_duplicate: int = 0
    superseded_same_ts: int = 0
    dropped_bad: int = 0
    dropped_off_book: int = 0
    bad_rows: tuple[tuple[int, str], ...] = field(default_factory=tuple)


class TradeSeq(tuple):
    """Immutable sequence of Trade with the loader's accounting attached."""

    stats: LoadStats | None

    def __new__(cls, trades, stats=None):
        self = super().__new__(cls, trades)
        self.stats = stats
        return self


@dataclass(frozen=True)
class SessionData:
    """One instrument-session of cleaned inputs, ready for extraction."""

    snapshots: SnapshotSeq
    trades: TradeSeq
    instrument: InstrumentSpec
    session_date: date


def _session_mask(ts: np.ndarray, spec: InstrumentSpec) -> np.ndarray:
    tod = ts % NS_PER_DAY
    return (tod >= spec.session_start) & (tod <= spec.session_end)


def _validate_rows(bt, bq, at, aq) -> list[tuple[int, str]]:
    """Book-shape violations as (row, reason); row indexes into the arrays."""
    bad: dict[int, str] = {}

    def flag(mask: np.ndarray, reason: str) -> None:
        for i in np.nonzero(mask)[0]:
            bad.setdefault(int(i), reason)

    for name, T, Q, sign in (("bid", bt, bq, 1), ("ask", at, aq, -1)):
        occ = Q > 0
        flag((Q < 0).any(axis=1), f"negative {name} quantity")
        flag((occ & (T <= 0)).any(axis=1), f"nonpositive {name} price")
        flag((occ[:, 1:] & ~occ[:, :-1]).any(axis=1), f"gap in {name} levels")
        both = occ[:, 1:] & occ[:, :-1]
        ordered = (T[:, :-1] - T[:, 1:]) * sign
        flag((both & (ordered <= 0)).any(axis=1), f"{name} levels out of order")
    crossed = (bq[:, 0] > 0) & (aq[:, 0] > 0) & (bt[:, 0] >= at[:, 0])
    flag(crossed, "crossed or locked book")
    return sorted(bad.items())


def _locate_bad_cell(path: str, cols: Sequence[str]) -> ParseError | None:
    """Diagnostic pass after a typed read fails: re-read as strings and find
    the first cell that does not parse as a number, so the error names its
    row. Returns None when nothing can be pinned down (e.g. ragged rows)."""
    try:
        raw = pd.read_csv(path, dtype=str)
    except Exception:
        return None
    first: tuple[int, str, str] | None = None
    for c in cols:
        if c not in raw.columns:
            continue
        col = raw[c]
        bad = col.notna() & pd.to_numeric(col, errors="coerce").isna()
        if bool(bad.any()):
            i = int(np.nonzero(bad.to_numpy())[0][0])
            if first is None or i < first[0]:
                first = (i, c, str(col.iloc[i]))
    if first is None:
        return None
    i, c, value = first
    return ParseError(i + 1, f"bad {c} value {value!r}")


def load_snapshots(path: str, spec: InstrumentSpec, strict: bool = True) -> SnapshotSeq:
    """Load a snapshot CSV into a SnapshotSeq (stats attached as .stats)."""
    L = spec.levels
    cols = (
        ["ts_ns"]
        + [f"bp{k}" for k in range(1, L + 1)]
        + [f"bq{k}" for k in range(1, L + 1)]
        + [f"ap{k}" for k in range(1, L + 1)]
        + [f"aq{k}" for k in range(1, L + 1)]
    )
    # ts_ns must come in as int64: nanosecond stamps overflow float64's
    # 53-bit mantissa and would silently lose precision
    dtypes = {c: np.float64 for c in cols}
    dtypes["ts_ns"] = np.int64
    try:
        df = pd.read_csv(path, dtype=dtypes)
    except (OSError, pd.errors.ParserError, ValueError) as exc:
        if type(exc) is ValueError:  # dtype conversion: pin down the row
            located = _locate_bad_cell(path, cols)
            if located is not None:
                raise located from exc
        raise ParseError(0, f"cannot read {path}: {exc}") from exc
    if df.shape[0] == 0:
        raise EmptyFile(f"{path} has no data rows")
    missing = [c for c in cols if c not in df.columns]
    if missing:
        raise ParseError(0, f"{path} lacks columns {missing}")
    rows_read = int(df.shape[0])

    ts = df["ts_ns"].to_numpy()
    if not bool(np.all(np.diff(ts) >= 0)):
        i = int(np.nonzero(np.diff(ts) < 0)[0][0]) + 1
        raise ParseError(i + 1, "timestamps decrease")

    def block(prefix: str) -> tuple[np.ndarray, np.ndarray]:
        P = df[[f"{prefix}p{k}" for k in range(1, L + 1)]].to_numpy()
        Q = df[[f"{prefix}q{k}" for k in range(1, L + 1)]].to_numpy()
        return P, Q

    bp, bq_f = block("b")
    ap, aq_f = block("a")

    bad: dict[int, str] = {}

    def to_ticks(P: np.ndarray, Q: np.ndarray, name: str) -> tuple[np.ndarray, np.ndarray]:
        """Empty price/qty cells mean a vacant level; both must agree."""
        p_nan = np.isnan(P)
        q_nan = np.isnan(Q)
        for i in np.nonzero((p_nan != q_nan).any(axis=1))[0]:
            bad.setdefault(int(i), f"half-empty {name} level")
        ticks_f = np.where(p_nan, 0.0, P) / spec.tick_size
        ticks = np.rint(ticks_f).astype(np.int64)
        off = ~p_nan & (np.abs(ticks - ticks_f) > 1e-6 * np.maximum(1.0, np.abs(ticks_f)))
        for i in np.nonzero(off.any(axis=1))[0]:
            bad.setdefault(int(i), f"{name} price off the tick grid")
        q = np.where(q_nan, 0.0, Q)
        frac = np.abs(q - np.rint(q)) > 1e-9
        for i in np.nonzero(frac.any(axis=1))[0]:
            bad.setdefault(int(i), f"non-integer {name} quantity")
        qi = np.rint(q).astype(np.int64)
        for i in np.nonzero((~q_nan & (qi <= 0)).any(axis=1))[0]:
            bad.setdefault(int(i), f"nonpositive {name} quantity")
        ticks[qi <= 0] = 0
        qi[qi <= 0] = 0
        return ticks, qi

    bt, bq = to_ticks(bp, bq_f, "bid")
    at, aq = to_ticks(ap, aq_f, "ask")
    for i, reason in _validate_rows(bt, bq, at, aq):
        bad.setdefault(i, reason)

    bad_rows = tuple(sorted(bad.items()))
    if bad_rows and strict:
        i, reason = bad_rows[0]
        raise ParseError(i + 1, reason)
    ok = np.ones(rows_read, dtype=bool)
    for i, _ in bad_rows:
        ok[i] = False
    n_bad = int((~ok).sum())

    in_session = _session_mask(ts, spec)
    n_out = int((ok & ~in_session).sum())
    keep = ok & in_session
    ts, bt, bq, at, aq = ts[keep], bt[keep], bq[keep], at[keep], aq[keep]

    # same timestamp: the later row supersedes the earlier ones
    superseded = 0
    if ts.shape[0] > 1:
        last = np.empty(ts.shape[0], dtype=bool)
        last[-1] = True
        np.not_equal(ts[1:], ts[:-1], out=last[:-1])
        superseded = int((~last).sum())
        ts, bt, bq, at, aq = ts[last], bt[last], bq[last], at[last], aq[last]

    # identical consecutive rows collapse to the first
    dups = 0
    if ts.shape[0] > 1:
        same = (
            (bt[1:] == bt[:-1]).all(axis=1)
            & (bq[1:] == bq[:-1]).all(axis=1)
            & (at[1:] == at[:-1]).all(axis=1)
            & (aq[1:] == aq[:-1]).all(axis=1)
        )
        keep2 = np.empty(ts.shape[0], dtype=bool)
        keep2[0] = True
        keep2[1:] = ~same
        dups = int(same.sum())
        ts, bt, bq, at, aq = ts[keep2], bt[keep2], bq[keep2], at[keep2], aq[keep2]

    if ts.shape[0] == 0:
        raise EmptyFile(f"{path}: no rows inside session hours")
    stats = LoadStats(
        rows_read=rows_read,
        retained=int(ts.shape[0]),
        dropped_out_of_session=n_out,
        dropped_duplicate=dups,
        superseded_same_ts=superseded,
        dropped_bad=n_bad,
        bad_rows=bad_rows,
    )
    arrays = BookArrays(ts=ts, bt=bt, bq=bq, at=at, aq=aq, tick_size=spec.tick_size)
    return SnapshotSeq(arrays, stats=stats)


_AGGRESSOR = {"B": "B", "A": "A", "U": None, "": None}


def load_trades(path: str, spec: InstrumentSpec, strict: bool = True) -> TradeSeq:
    """Load a trade CSV; off-book prints and out-of-session rows are dropped."""
    try:
        df = pd.read_csv(
            path,
            dtype={"ts_ns": np.int64, "price": np.float64, "size": np.float64},
            keep_default_na=False,
        )
    except (OSError, pd.errors.ParserError, ValueError) as exc:
        if type(exc) is ValueError:
            located = _locate_bad_cell(path, ("ts_ns", "price", "size"))
            if located is not None:
                raise located from exc
        raise ParseError(0, f"cannot read {path}: {exc}") from exc
    for c in ("ts_ns", "price", "size", "aggressor", "onbook"):
        if c not in df.columns:
            raise ParseError(0, f"{path} lacks column {c}")
    rows_read = int(df.shape[0])

    ts = df["ts_ns"].to_numpy()
    price = df["price"].to_numpy()
    size_f = df["size"].to_numpy()
    agg_raw = df["aggressor"].astype(str).str.strip().str.upper().to_numpy()
    onbook_raw = df["onbook"].to_numpy()

    bad: dict[int, str] = {}
    ticks_f = price / spec.tick_size
    ticks = np.rint(ticks_f).astype(np.int64)
    off_grid = np.abs(ticks - ticks_f) > 1e-6 * np.maximum(1.0, np.abs(ticks_f))
    for i in np.nonzero(off_grid | (price <= 0))[0]:
        bad.setdefault(int(i), "price off the tick grid")
    size = np.rint(size_f).astype(np.int64)
    for i in np.nonzero((np.abs(size - size_f) > 1e-9) | (size <= 0))[0]:
        bad.setdefault(int(i), "size must be a positive integer")
    for i in np.nonzero(~np.isin(agg_raw, list(_AGGRESSOR)))[0]:
        bad.setdefault(int(i), f"bad aggressor flag {agg_raw[i]!r}")
    onbook_str = np.asarray([str(v).strip() for v in onbook_raw])
    for i in np.nonzero(~np.isin(onbook_str, ["0", "1"]))[0]:
        bad.setdefault(int(i), f"bad onbook flag {onbook_raw[i]!r}")

    bad_rows = tuple(sorted(bad.items()))
    if bad_rows and strict:
        i, reason = bad_rows[0]
        raise ParseError(i + 1, reason)
    ok = np.ones(rows_read, dtype=bool)
    for i, _ in bad_rows:
        ok[i] = False

    in_session = _session_mask(ts, spec)
    on_book = onbook_str == "1"
    n_out = int((ok & ~in_session).sum())
    n_off = int((ok & in_session & ~on_book).sum())
    keep = ok & in_session & on_book

    trades = tuple(
        Trade(
            ts=int(ts[i]),
            price=float(ticks[i] * spec.tick_size),
            size=int(size[i]),
            aggressor=_AGGRESSOR[agg_raw[i]],
            on_book=True,
        )
        for i in np.nonzero(keep)[0]
    )
    stats = LoadStats(
        rows_read=rows_read,
        retained=len(trades),
        dropped_out_of_session=n_out,
        dropped_bad=int((~ok).sum()),
        dropped_off_book=n_off,
        bad_rows=bad_rows,
    )
    return TradeSeq(trades, stats=stats)


def load_session(
    snapshot_path: str,
    trade_path: str | None,
    spec: InstrumentSpec,
    strict: bool = True,
) -> SessionData:
    snapshots = load_snapshots(snapshot_path, spec, strict=strict)
    if trade_path is not None and os.path.exists(trade_path):
        trades = load_trades(trade_path, spec, strict=strict)
    else:
        trades = TradeSeq((), stats=None)
    return SessionData(
        snapshots=snapshots,
        trades=trades,
        instrument=spec,
        session_date=ts_to_date(int(snapshots.arrays.ts[0])),
    )


# ---------------------------------------------------------------------------
# writers
# ---------------------------------------------------------------------------

def write_snapshots(path: str, snapshots, tick_size: float | None = None) -> int:
    """Write a snapshot stream; returns the number of rows written."""
    arr = as_book_arrays(snapshots)
    if tick_size is None:
        tick_size = arr.tick_size
    L = arr.levels
    dec = price_decimals(tick_size)
    header = (
        "ts_ns,"
        + ",".join(f"bp{k}" for k in range(1, L + 1))
        + ","
        + ",".join(f"bq{k}" for k in range(1, L + 1))
        + ","
        + ",".join(f"ap{k}" for k in range(1, L + 1))
        + ","
        + ",".join(f"aq{k}" for k in range(1, L + 1))
    )
    ts = arr.ts.tolist()
    blocks = [arr.bt.tolist(), arr.bq.tolist(), arr.at.tolist(), arr.aq.tolist()]
    lines = [header]
    for i in range(arr.n):
        bt, bq, at, aq = blocks[0][i], blocks[1][i], blocks[2][i], blocks[3][i]
        bp = [f"{t * tick_size:.{dec}f}" if q > 0 else "" for t, q in zip(bt, bq)]
        ap = [f"{t * tick_size:.{dec}f}" if q > 0 else "" for t, q in zip(at, aq)]
        bqs = [str(q) if q > 0 else "" for q in bq]
        aqs = [str(q) if q > 0 else "" for q in aq]
        lines.append(f"{ts[i]}," + ",".join(bp + bqs + ap + aqs))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    return arr.n


def write_trades(path: str, trades, tick_size: float) -> int:
    dec = price_decimals(tick_size)
    lines = ["ts_ns,price,size,aggressor,onbook"]
    for t in trades:
        agg = t.aggressor if t.aggressor in ("B", "A") else "U"
        lines.append(f"{t.ts},{t.price:.{dec}f},{t.size},{agg},{1 if t.on_book else 0}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    return len(lines) - 1
