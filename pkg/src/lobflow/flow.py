"""Reconstruct labeled order flow from consecutive L2 snapshots plus prints.

Labeling convention, applied independently to each consecutive pair:

* quantities are netted per price and side; a vanished price is a change
  to zero, a new price a change from zero
* negative net change -> Cancel, positive -> Limit, size = |change|
* within one update Cancels are emitted before Limits; inside each group
  bids come first, and each side runs from the touch toward the interior
  (bids by descending price, asks ascending). Removing liquidity first
  keeps every intermediate book uncrossed under replay.
* level: Cancels carry the 1-based depth of their price in the earlier
  snapshot; Limits the depth in the later one. A Limit that improves on
  the previous best of its own side instead carries a negative level:
  minus the improvement in ticks.
* a Cancel with a matching print (same size, same price, consistent side)
  within the matching window is relabeled Market, keeping its level.

Event timestamps equal the timestamp of the later snapshot of their pair,
which is what lets the replayer re-associate events with snapshots.

Two lanes produce identical output: classify_update / diff_by_price work
on BookSnapshot pairs and re-apply their own events as a self-check;
extract_session runs a vectorized pass over the column arrays and falls
back to the object lane for any pair it cannot label.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .core import (
    KIND_CANCEL,
    KIND_LIMIT,
    KIND_MARKET,
    NS_PER_SEC,
    SIDE_ASK,
    SIDE_BID,
    BookArrays,
    BookSnapshot,
    EventKind,
    FlowEvent,
    FlowSeq,
    Side,
    Trade,
    as_book_arrays,
    price_to_ticks,
)
from .errors import BadCancel, BadMarket, InconsistentUpdate
from .replay import apply_event

DEFAULT_MATCH_WINDOW = 0.010  # seconds, either direction


@dataclass(frozen=True)
class PriceDiff:
    """Net quantity change at one price between two consecutive snapshots."""

    side: Side
    price: float
    qty_delta: int


@dataclass(frozen=True)
class MatchReport:
    """Outcome of matching prints against provisional Cancels."""

    matched: int
    unmatched: tuple[Trade, ...]
    match_rate: float
    window: float
    skipped_off_book: int = 0

    @property
    def no_trades(self) -> bool:
        return self.matched == 0 and not self.unmatched


def diff_by_price(prev: BookSnapshot, nxt: BookSnapshot) -> list[PriceDiff]:
    """Per-price net changes, bids first, each side touch-to-interior."""
    out: list[PriceDiff] = []
    for side, a, b, reverse in (
        (Side.BID, prev.bids, nxt.bids, True),
        (Side.ASK, prev.asks, nxt.asks, False),
    ):
        qa = {t: q for t, q in a}
        qb = {t: q for t, q in b}
        for t in sorted(set(qa) | set(qb), reverse=reverse):
            d = qb.get(t, 0) - qa.get(t, 0)
            if d != 0:
                out.append(PriceDiff(side=side, price=t * prev.tick_size, qty_delta=d))
    return out


def _depth_of(levels: tuple[tuple[int, int], ...], tick: int) -> int | None:
    for j, (t, _q) in enumerate(levels):
        if t == tick:
            return j + 1
    return None


def classify_update(
    prev: BookSnapshot,
    nxt: BookSnapshot,
    *,
    seq_start: int = 0,
    idx: int | None = None,
) -> list[FlowEvent]:
    """Label the transition prev -> nxt as Limit/Cancel events.

    The emitted events are re-applied to prev and must reproduce nxt
    exactly, else InconsistentUpdate (idx names the offending pair in the
    message when given).
    """
    where = f"update {idx}" if idx is not None else "update"
    tick_size = prev.tick_size
    cancels: list[FlowEvent] = []
    limits: list[FlowEvent] = []
    for d in diff_by_price(prev, nxt):
        tick = price_to_ticks(d.price, tick_size)
        prev_side = prev.bids if d.side is Side.BID else prev.asks
        next_side = nxt.bids if d.side is Side.BID else nxt.asks
        if d.qty_delta < 0:
            level = _depth_of(prev_side, tick)
            if level is None:
                raise InconsistentUpdate(idx, f"{where}: drained price {d.price} absent before")
            cancels.append(
                FlowEvent(0, nxt.ts, EventKind.CANCEL, d.side, d.price, -d.qty_delta, level)
            )
        else:
            if prev_side and (tick > prev_side[0][0] if d.side is Side.BID else tick < prev_side[0][0]):
                level = -abs(tick - prev_side[0][0])
            else:
                level = _depth_of(next_side, tick)
                if level is None:
                    raise InconsistentUpdate(idx, f"{where}: added price {d.price} absent after")
            limits.append(
                FlowEvent(0, nxt.ts, EventKind.LIMIT, d.side, d.price, d.qty_delta, level)
            )
    events = [replace(e, seq=seq_start + i) for i, e in enumerate(cancels + limits)]
    book = prev
    try:
        for e in events:
            book = apply_event(book, e, levels=None)
    except (BadCancel, BadMarket) as exc:
        raise InconsistentUpdate(idx, f"{where}: {exc}") from exc
    if book.bids != nxt.bids or book.asks != nxt.asks:
        raise InconsistentUpdate(idx, f"{where}: replayed book does not reproduce the later snapshot")
    return events


# ---------------------------------------------------------------------------
# trade matching
# ---------------------------------------------------------------------------

_RESTING_BY_AGGRESSOR = {"B": SIDE_ASK, "A": SIDE_BID}


def match_trades(
    flow: Sequence[FlowEvent],
    trades: Sequence[Trade],
    window: float = DEFAULT_MATCH_WINDOW,
) -> tuple[Sequence[FlowEvent], MatchReport]:
    """Relabel Cancels that line up with prints as Markets.

    A print matches a Cancel of equal size and price within `window`
    seconds either way; when the print carries an aggressor flag the
    Cancel must sit on the resting side (the opposite one). Prints are
    processed in time order, each taking the closest unclaimed candidate
    (ties to the earlier event); each Cancel matches at most once.
    """
    win_ns = int(round(window * NS_PER_SEC))
    is_seq = isinstance(flow, FlowSeq)
    if is_seq:
        kind_col = flow.kind
        side_col = flow.side
        ts_col = flow.ts
        size_col = flow.size
        price_col = flow.tick
    else:
        kind_col = np.array([0 if e.kind is EventKind.LIMIT else (1 if e.kind is EventKind.CANCEL else 2) for e in flow], dtype=np.int8)
        side_col = np.array([SIDE_BID if e.side is Side.BID else SIDE_ASK for e in flow], dtype=np.int8)
        ts_col = np.array([e.ts for e in flow], dtype=np.int64)
        size_col = np.array([e.size for e in flow], dtype=np.int64)
        price_col = np.array([e.price for e in flow], dtype=np.float64)

    # candidate index: (side, price, size) -> parallel (ts list, event idx list)
    # price keys are integer ticks when the grid is known, else prices rounded
    # to 9 dp so that derived floats and parsed literals collide reliably
    def price_key(p: float):
        if is_seq:
            return price_to_ticks(p, flow.tick_size)
        return round(p, 9)

    store: dict[tuple, tuple[list, list]] = {}
    for i in np.nonzero(kind_col == KIND_CANCEL)[0]:
        pk = int(price_col[i]) if is_seq else round(float(price_col[i]), 9)
        key = (int(side_col[i]), pk, int(size_col[i]))
        slot = store.get(key)
        if slot is None:
            store[key] = ([int(ts_col[i])], [int(i)])
        else:
            slot[0].append(int(ts_col[i]))
            slot[1].append(int(i))

    used: set[int] = set()
    matched_idx: list[int] = []
    unmatched: list[Trade] = []
    matched = 0
    skipped = 0
    for tr in sorted((t for t in trades), key=lambda t: t.ts):
        if not tr.on_book:
            skipped += 1
            continue
        try:
            pk = price_key(tr.price)
        except ValueError:
            unmatched.append(tr)
            continue
        sides = (
            (_RESTING_BY_AGGRESSOR[tr.aggressor],)
            if tr.aggressor in _RESTING_BY_AGGRESSOR
            else (SIDE_BID, SIDE_ASK)
        )
        best = None  # (abs_dt, ts, idx)
        for s in sides:
            slot = store.get((s, pk, tr.size))
            if slot is None:
                continue
            ts_list, idx_list = slot
            lo = bisect.bisect_left(ts_list, tr.ts - win_ns)
            j = lo
            while j < len(ts_list) and ts_list[j] <= tr.ts + win_ns:
                if idx_list[j] not in used:
                    cand = (abs(ts_list[j] - tr.ts), ts_list[j], idx_list[j])
                    if best is None or cand < best:
                        best = cand
                j += 1
        if best is None:
            unmatched.append(tr)
        else:
            used.add(best[2])
            matched_idx.append(best[2])
            matched += 1

    n_considered = matched + len(unmatched)
    rate = 1.0 if n_considered == 0 else matched / n_considered
    report = MatchReport(
        matched=matched,
        unmatched=tuple(unmatched),
        match_rate=rate,
        window=window,
        skipped_off_book=skipped,
    )
    if not matched_idx:
        return flow, report
    if is_seq:
        kind = flow.kind.copy()
        kind[np.asarray(matched_idx, dtype=np.int64)] = KIND_MARKET
        out: Sequence[FlowEvent] = FlowSeq(
            flow.ts, kind, flow.side, flow.tick, flow.size, flow.level, flow.tick_size
        )
    else:
        hit = set(matched_idx)
        out = [
            replace(e, kind=EventKind.MARKET) if i in hit else e
            for i, e in enumerate(flow)
        ]
    return out, report


# ---------------------------------------------------------------------------
# whole-session extraction (vectorized)
# ---------------------------------------------------------------------------

_PAIR_SHIFT = 42  # ticks fit well under 2**42; pair index goes in the high bits


def _side_diffs(T: np.ndarray, Q: np.ndarray, side_code: int):
    """All per-price net changes for one side across every consecutive pair.

    Returns (pair, tick, delta, local, Tp, Qp, Tn, Qn) where `local` maps
    each diff to its row in the gathered prev/next level blocks.
    """
    changed = ((T[1:] != T[:-1]) | (Q[1:] != Q[:-1])).any(axis=1)
    rows = np.nonzero(changed)[0]
    if rows.size == 0:
        z = np.zeros(0, dtype=np.int64)
        return z, z, z, z, None, None, None, None
    Tp, Qp = T[rows], Q[rows]
    Tn, Qn = T[rows + 1], Q[rows + 1]
    TT = np.concatenate([Tp, Tn], axis=1)
    QQ = np.concatenate([-Qp, Qn], axis=1)
    TT = np.where(QQ == 0, 0, TT)  # empty slots collapse onto the 0 sentinel
    order = np.argsort(TT, axis=1, kind="stable")
    TTs = np.take_along_axis(TT, order, axis=1)
    QQs = np.take_along_axis(QQ, order, axis=1)
    key = (np.arange(rows.size, dtype=np.int64)[:, None] << _PAIR_SHIFT) + TTs
    key = key.ravel()
    q = QQs.ravel()
    starts = np.empty(key.size, dtype=bool)
    starts[0] = True
    np.not_equal(key[1:], key[:-1], out=starts[1:])
    gstart = np.nonzero(starts)[0]
    delta = np.add.reduceat(q, gstart)
    gkey = key[gstart]
    tick = gkey & ((np.int64(1) << _PAIR_SHIFT) - 1)
    local = gkey >> _PAIR_SHIFT
    keep = (delta != 0) & (tick != 0)
    return rows[local[keep]], tick[keep], delta[keep], local[keep], Tp, Qp, Tn, Qn


def _classify_side(pair, tick, delta, local, Tp, Qp, Tn, Qn, side_code):
    """Kind/size/level per diff; returns also the pairs it could not label."""
    k = tick.shape[0]
    kind = np.where(delta < 0, KIND_CANCEL, KIND_LIMIT).astype(np.int8)
    size = np.abs(delta)
    level = np.zeros(k, dtype=np.int64)
    bad_pairs: set[int] = set()

    is_c = kind == KIND_CANCEL
    if is_c.any():
        Tg, Qg = Tp[local[is_c]], Qp[local[is_c]]
        hit = (Tg == tick[is_c, None]) & (Qg > 0)
        found = hit.any(axis=1)
        level[is_c] = hit.argmax(axis=1) + 1
        for p in pair[is_c][~found]:
            bad_pairs.add(int(p))

    is_l = ~is_c
    if is_l.any():
        lt = tick[is_l]
        pbt = Tp[local[is_l], 0]
        pbq = Qp[local[is_l], 0]
        better = (lt > pbt) if side_code == SIDE_BID else (lt < pbt)
        improving = (pbq > 0) & better
        lev = np.zeros(lt.shape[0], dtype=np.int64)
        lev[improving] = -np.abs(lt[improving] - pbt[improving])
        rest = ~improving
        if rest.any():
            Tg, Qg = Tn[local[is_l][rest]], Qn[local[is_l][rest]]
            hit = (Tg == lt[rest, None]) & (Qg > 0)
            found = hit.any(axis=1)
            lev[rest] = hit.argmax(axis=1) + 1
            for p in pair[is_l][rest][~found]:
                bad_pairs.add(int(p))
        level[is_l] = lev

    side = np.full(k, side_code, dtype=np.int8)
    return kind, side, size, level, bad_pairs


def _empty_flow(tick_size: float) -> FlowSeq:
    z64 = np.zeros(0, np.int64)
    z8 = np.zeros(0, np.int8)
    return FlowSeq(z64, z8, z8, z64.copy(), z64.copy(), z64.copy(), tick_size)


def _classify_all(arr: BookArrays) -> FlowSeq:
    """Vectorized labeling of every consecutive pair in a snapshot stream."""
    if arr.n < 2:
        return _empty_flow(arr.tick_size)

    parts = []
    bad_pairs: set[int] = set()
    for side_code, T, Q in ((SIDE_BID, arr.bt, arr.bq), (SIDE_ASK, arr.at, arr.aq)):
        pair, tick, delta, local, Tp, Qp, Tn, Qn = _side_diffs(T, Q, side_code)
        if pair.size == 0:
            continue
        kind, side, size, level, bad = _classify_side(
            pair, tick, delta, local, Tp, Qp, Tn, Qn, side_code
        )
        bad_pairs |= bad
        parts.append((pair, tick, kind, side, size, level))

    if not parts:
        return _empty_flow(arr.tick_size)
    pair = np.concatenate([p[0] for p in parts])
    tick = np.concatenate([p[1] for p in parts])
    kind = np.concatenate([p[2] for p in parts])
    side = np.concatenate([p[3] for p in parts])
    size = np.concatenate([p[4] for p in parts])
    level = np.concatenate([p[5] for p in parts])

    if bad_pairs:
        # relabel the offending pairs through the object lane, which either
        # produces a consistent labeling or raises with the pair index
        keep = ~np.isin(pair, np.fromiter(bad_pairs, dtype=np.int64, count=len(bad_pairs)))
        pair, tick, kind, side, size, level = (
            pair[keep], tick[keep], kind[keep], side[keep], size[keep], level[keep],
        )
        extra = {"pair": [], "tick": [], "kind": [], "side": [], "size": [], "level": []}
        for p in sorted(bad_pairs):
            events = classify_update(arr.snapshot(p), arr.snapshot(p + 1), idx=p)
            for e in events:
                extra["pair"].append(p)
                extra["tick"].append(price_to_ticks(e.price, arr.tick_size))
                extra["kind"].append(0 if e.kind is EventKind.LIMIT else 1)
                extra["side"].append(SIDE_BID if e.side is Side.BID else SIDE_ASK)
                extra["size"].append(e.size)
                extra["level"].append(e.level)
        if extra["pair"]:
            pair = np.concatenate([pair, np.asarray(extra["pair"], dtype=np.int64)])
            tick = np.concatenate([tick, np.asarray(extra["tick"], dtype=np.int64)])
            kind = np.concatenate([kind, np.asarray(extra["kind"], dtype=np.int8)])
            side = np.concatenate([side, np.asarray(extra["side"], dtype=np.int8)])
            size = np.concatenate([size, np.asarray(extra["size"], dtype=np.int64)])
            level = np.concatenate([level, np.asarray(extra["level"], dtype=np.int64)])

    interior = np.where(side == SIDE_BID, -tick, tick)
    group = (kind == KIND_LIMIT).astype(np.int8)  # cancels first
    order = np.lexsort((interior, side, group, pair))
    return FlowSeq(
        ts=arr.ts[pair[order] + 1],
        kind=kind[order],
        side=side[order],
        tick=tick[order],
        size=size[order],
        level=level[order],
        tick_size=arr.tick_size,
    )


def extract_session(
    snapshots,
    trades: Sequence[Trade] = (),
    window: float = DEFAULT_MATCH_WINDOW,
) -> tuple[FlowSeq, MatchReport]:
    """Full pipeline: label every snapshot transition, then relabel Cancels
    matched by prints as Markets.

    `snapshots` may be a SessionData-like object carrying .snapshots and
    .trades, any sequence of BookSnapshot, or BookArrays. Snapshot
    timestamps must be strictly increasing (deduplication is the loader's
    job); violations raise ValueError.
    """
    if hasattr(snapshots, "snapshots") and hasattr(snapshots, "trades"):
        trades = snapshots.trades
        snapshots = snapshots.snapshots
    arr = as_book_arrays(snapshots)
    if arr.n >= 2 and not bool(np.all(arr.ts[1:] > arr.ts[:-1])):
        i = int(np.nonzero(arr.ts[1:] <= arr.ts[:-1])[0][0]) + 1
        raise ValueError(f"snapshot timestamps not strictly increasing at row {i}")
    temp = _classify_all(arr)
    return match_trades(temp, trades, window=window)


# ---------------------------------------------------------------------------
# flow files
# ---------------------------------------------------------------------------

_FLOW_HEADER = "seq,ts_ns,kind,side,price,size,level"
_KIND_LETTER = np.array(["L", "C", "M"])
_SIDE_LETTER = np.array(["B", "A"])


def write_flow_csv(path: str, flow: FlowSeq) -> int:
    """Write `seq,ts_ns,kind,side,price,size,level`; returns rows written."""
    from .core import price_decimals

    dec = price_decimals(flow.tick_size)
    ts = flow.ts.tolist()
    kind = _KIND_LETTER[flow.kind].tolist()
    side = _SIDE_LETTER[flow.side].tolist()
    tick = flow.tick.tolist()
    size = flow.size.tolist()
    level = flow.level.tolist()
    tick_size = flow.tick_size
    lines = [_FLOW_HEADER]
    lines.extend(
        f"{i},{ts[i]},{kind[i]},{side[i]},{tick[i] * tick_size:.{dec}f},{size[i]},{level[i]}"
        for i in range(len(ts))
    )
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    return len(ts)


def read_flow_csv(path: str, tick_size: float) -> FlowSeq:
    """Read a flow CSV back into columns; seq must be 0..n-1 in order."""
    import pandas as pd

    from .errors import ParseError

    try:
        df = pd.read_csv(
            path,
            dtype={
                "seq": np.int64, "ts_ns": np.int64, "kind": str, "side": str,
                "price": np.float64, "size": np.int64, "level": np.int64,
            },
        )
    except (OSError, ValueError) as exc:
        raise ParseError(0, f"cannot read {path}: {exc}") from exc
    for c in ("seq", "ts_ns", "kind", "side", "price", "size", "level"):
        if c not in df.columns:
            raise ParseError(0, f"{path} lacks column {c}")
    seq = df["seq"].to_numpy()
    if not bool(np.all(seq == np.arange(seq.shape[0]))):
        raise ParseError(0, f"{path}: seq must run 0..n-1")
    kind_raw = df["kind"].to_numpy()
    side_raw = df["side"].to_numpy()
    kind = np.select(
        [kind_raw == "L", kind_raw == "C", kind_raw == "M"], [0, 1, 2], default=-1
    ).astype(np.int8)
    side = np.select([side_raw == "B", side_raw == "A"], [0, 1], default=-1).astype(np.int8)
    if (kind < 0).any():
        i = int(np.nonzero(kind < 0)[0][0])
        raise ParseError(i + 1, f"bad kind {kind_raw[i]!r}")
    if (side < 0).any():
        i = int(np.nonzero(side < 0)[0][0])
        raise ParseError(i + 1, f"bad side {side_raw[i]!r}")
    price = df["price"].to_numpy()
    ticks_f = price / tick_size
    tick = np.rint(ticks_f).astype(np.int64)
    off = np.abs(tick - ticks_f) > 1e-6 * np.maximum(1.0, np.abs(ticks_f))
    if off.any():
        i = int(np.nonzero(off)[0][0])
        raise ParseError(i + 1, f"price {price[i]!r} off the tick grid")
    return FlowSeq(
        ts=df["ts_ns"].to_numpy(),
        kind=kind,
        side=side,
        tick=tick,
        size=df["size"].to_numpy(),
        level=df["level"].to_numpy(),
        tick_size=tick_size,
    )
