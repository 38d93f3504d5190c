"""Deterministic replay: drive a book forward from labeled events and check
it against the recorded snapshots, tick-exact.

The replayed book is an L2 view: at most `levels` prices per side are kept,
and a level pushed beyond the visible window by an insertion is gone for
good (the feed never showed what lies deeper). Limits that would land
entirely below the visible window are no-ops for the same reason.

Two lanes compute the same thing: a plain-Python lane over BookSnapshot
(the reference), and a compiled lane over the column arrays used for bulk
sessions. replay_and_verify picks automatically; a test pins them equal.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import (
    KIND_CANCEL,
    KIND_LIMIT,
    KIND_MARKET,
    SIDE_BID,
    BookArrays,
    BookSnapshot,
    EventKind,
    FlowEvent,
    FlowSeq,
    Side,
    SnapshotSeq,
    price_to_ticks,
)
from .errors import BadCancel, BadMarket


@dataclass(frozen=True)
class Mismatch:
    """One price whose replayed quantity disagrees with the recorded snapshot."""

    snapshot_idx: int
    side: Side
    price: float
    expected_qty: int
    got_qty: int


@dataclass(frozen=True)
class ReplayOutcome:
    checked: int
    match_fraction: float
    mismatches: tuple[Mismatch, ...]

    @property
    def ok(self) -> bool:
        return self.match_fraction == 1.0


def _apply_to_side(levels_list: list, event: FlowEvent, tick: int, is_bid: bool, cap: int | None):
    """Mutate one side (list of [tick, qty], best first). cap = visible depth."""
    n = len(levels_list)
    if event.kind is EventKind.LIMIT:
        j = 0
        if is_bid:
            while j < n and levels_list[j][0] > tick:
                j += 1
        else:
            while j < n and levels_list[j][0] < tick:
                j += 1
        if j < n and levels_list[j][0] == tick:
            levels_list[j][1] += event.size
            return
        if cap is not None and j >= cap:
            return  # lands below the visible window
        levels_list.insert(j, [tick, event.size])
        if cap is not None and len(levels_list) > cap:
            del levels_list[cap:]
        return
    if event.kind is EventKind.CANCEL:
        for j in range(n):
            if levels_list[j][0] == tick:
                if event.size > levels_list[j][1]:
                    raise BadCancel(
                        f"event {event.seq}: cancel {event.size} exceeds {levels_list[j][1]} resting at price {event.price}"
                    )
                levels_list[j][1] -= event.size
                if levels_list[j][1] == 0:
                    del levels_list[j]
                return
        raise BadCancel(f"event {event.seq}: cancel at absent price {event.price}")
    # market: must consume the prevailing best of its side
    if n == 0:
        raise BadMarket(f"event {event.seq}: market on an empty side")
    if levels_list[0][0] != tick:
        raise BadMarket(
            f"event {event.seq}: market at price {event.price} but best is {levels_list[0][0]} ticks"
        )
    if event.size > levels_list[0][1]:
        raise BadMarket(
            f"event {event.seq}: market {event.size} exceeds {levels_list[0][1]} at the best"
        )
    levels_list[0][1] -= event.size
    if levels_list[0][1] == 0:
        del levels_list[0]


def apply_event(book: BookSnapshot, event: FlowEvent, levels: int | None = None) -> BookSnapshot:
    """Return the book after one event. `levels` caps the visible depth;
    None means unbounded (useful for single-update reasoning)."""
    tick = price_to_ticks(event.price, book.tick_size)
    bids = [list(lv) for lv in book.bids]
    asks = [list(lv) for lv in book.asks]
    side_list = bids if event.side is Side.BID else asks
    _apply_to_side(side_list, event, tick, event.side is Side.BID, levels)
    return BookSnapshot(
        ts=event.ts,
        bids=tuple((t, q) for t, q in bids),
        asks=tuple((t, q) for t, q in asks),
        tick_size=book.tick_size,
    )


def _compare_side(idx: int, side: Side, got: list, want, tick_size: float, out: list):
    """Record differing quantities between replayed side and recorded side."""
    want_map = {t: q for t, q in want}
    got_map = {t: q for t, q in got}
    ticks = set(want_map) | set(got_map)
    reverse = side is Side.BID
    for t in sorted(ticks, reverse=reverse):
        w = want_map.get(t, 0)
        g = got_map.get(t, 0)
        if w != g:
            out.append(Mismatch(idx, side, t * tick_size, w, g))


def _replay_objects(
    initial: BookSnapshot,
    flow: Sequence[FlowEvent],
    snapshots: Sequence[BookSnapshot],
    levels: int | None,
) -> ReplayOutcome:
    bids = [list(lv) for lv in initial.bids]
    asks = [list(lv) for lv in initial.asks]
    tick_size = initial.tick_size
    mismatches: list[Mismatch] = []
    bad = 0
    e = 0
    ne = len(flow)
    checked = 0
    for i in range(1, len(snapshots)):
        snap = snapshots[i]
        while e < ne and flow[e].ts <= snap.ts:
            ev = flow[e]
            tick = price_to_ticks(ev.price, tick_size)
            side_list = bids if ev.side is Side.BID else asks
            _apply_to_side(side_list, ev, tick, ev.side is Side.BID, levels)
            e += 1
        checked += 1
        before = len(mismatches)
        _compare_side(i, Side.BID, bids, snap.bids, tick_size, mismatches)
        _compare_side(i, Side.ASK, asks, snap.asks, tick_size, mismatches)
        if len(mismatches) > before:
            bad += 1
    frac = 1.0 if checked == 0 else 1.0 - bad / checked
    return ReplayOutcome(checked=checked, match_fraction=frac, mismatches=tuple(mismatches))


def _replay_arrays(arr: BookArrays, flow: FlowSeq) -> ReplayOutcome:
    from . import _kernels

    cap = 4096
    while True:
        (
            status,
            err_ev,
            checked,
            bad,
            n_mis,
            mis_snap,
            mis_side,
            mis_tick,
            mis_want,
            mis_got,
        ) = _kernels.replay_verify(
            arr.ts, arr.bt, arr.bq, arr.at, arr.aq,
            flow.ts, flow.kind.astype(np.int64), flow.side.astype(np.int64),
            flow.tick, flow.size, cap,
        )
        if status == 1:
            ev = flow[int(err_ev)]
            raise BadCancel(f"event {err_ev}: bad cancel of {ev.size} at price {ev.price}")
        if status == 2:
            ev = flow[int(err_ev)]
            raise BadMarket(f"event {err_ev}: market at price {ev.price} not executable at the best")
        if n_mis <= cap:
            break
        cap = int(n_mis)  # deterministic rerun with an exact buffer
    ts = arr.tick_size
    mismatches = tuple(
        Mismatch(
            int(mis_snap[i]),
            Side.BID if mis_side[i] == SIDE_BID else Side.ASK,
            int(mis_tick[i]) * ts,
            int(mis_want[i]),
            int(mis_got[i]),
        )
        for i in range(min(int(n_mis), cap))
    )
    frac = 1.0 if checked == 0 else 1.0 - int(bad) / int(checked)
    return ReplayOutcome(checked=int(checked), match_fraction=frac, mismatches=mismatches)


def replay_and_verify(
    initial: BookSnapshot | None,
    flow: Sequence[FlowEvent],
    snapshots: Sequence[BookSnapshot],
    levels: int | None = None,
) -> ReplayOutcome:
    """Replay `flow` from `initial` (default: the first snapshot) and compare
    the book to every later snapshot, exact in integer ticks.

    Events are attributed to snapshots by timestamp: everything with
    ts <= snapshot.ts is applied before that snapshot is checked. The book
    is never resynchronized, so one wrong event keeps affecting later
    comparisons; match_fraction is the fraction of compared snapshots that
    agreed exactly.
    """
    if len(snapshots) == 0:
        return ReplayOutcome(checked=0, match_fraction=1.0, mismatches=())
    # compiled lane for the column representation
    if isinstance(snapshots, (SnapshotSeq, BookArrays)) and isinstance(flow, FlowSeq) and initial is None:
        arr = snapshots.arrays if isinstance(snapshots, SnapshotSeq) else snapshots
        return _replay_arrays(arr, flow)
    if isinstance(snapshots, (SnapshotSeq, BookArrays)):
        snapshots = list(snapshots) if isinstance(snapshots, SnapshotSeq) else [
            snapshots.snapshot(i) for i in range(snapshots.n)
        ]
    if initial is None:
        initial = snapshots[0]
    if levels is None:
        levels = max((max(len(s.bids), len(s.asks)) for s in snapshots), default=0) or None
    return _replay_objects(initial, flow, snapshots, levels)
