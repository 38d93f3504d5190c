"""Random but feed-plausible L2 sessions, built directly at the object level.

The builder keeps an unbounded book internally and emits snapshots truncated
to the visible depth, so the emitted stream shows the same scroll-in /
scroll-out artifacts a depth-limited feed does. One structural mutation per
step, one snapshot per step; timestamps advance by more than twice the trade
matching window so trade-to-event association is unambiguous.
"""

from __future__ import annotations

import numpy as np

from lobflow.core import NS_PER_DAY, NS_PER_SEC, BookSnapshot, Trade, validate_snapshot

_EPOCH_DAY = 20_000  # arbitrary session date


class BuiltSession:
    def __init__(self, snapshots, trades, tick_size, levels):
        self.snapshots = snapshots
        self.trades = trades
        self.tick_size = tick_size
        self.levels = levels


def build_session(
    seed: int,
    n_steps: int = 400,
    levels: int = 5,
    tick_size: float = 0.005,
    with_trades: bool = True,
    mid_tick: int = 34_000,
) -> BuiltSession:
    rng = np.random.default_rng(seed)
    bids: dict[int, int] = {mid_tick - 1 - k: int(rng.integers(5, 60)) for k in range(levels)}
    asks: dict[int, int] = {mid_tick + 1 + k: int(rng.integers(5, 60)) for k in range(levels)}
    ts = _EPOCH_DAY * NS_PER_DAY + 9 * 3600 * NS_PER_SEC

    def emit(at_ts: int) -> BookSnapshot:
        b = tuple((t, bids[t]) for t in sorted(bids, reverse=True)[:levels])
        a = tuple((t, asks[t]) for t in sorted(asks)[:levels])
        snap = BookSnapshot(ts=at_ts, bids=b, asks=a, tick_size=tick_size)
        validate_snapshot(snap)
        return snap

    snaps = [emit(ts)]
    trades: list[Trade] = []
    for _ in range(n_steps):
        ts += int(rng.integers(25, 60)) * 1_000_000  # 25..59 ms
        u = rng.random()
        if u < 0.45:
            # limit: anywhere from nine ticks behind the touch up to one
            # tick inside the spread, never crossing
            if rng.random() < 0.5:
                hi = min(asks) - 1
                t = int(rng.integers(hi - 9, hi + 1))
                bids[t] = bids.get(t, 0) + int(rng.integers(1, 30))
            else:
                lo = max(bids) + 1
                t = int(rng.integers(lo, lo + 10))
                asks[t] = asks.get(t, 0) + int(rng.integers(1, 30))
        elif u < 0.80:
            # cancel a random resting price, partially or fully, but never
            # empty a side completely
            side = bids if rng.random() < 0.5 else asks
            t = int(rng.choice(sorted(side)))
            q = side[t]
            full = rng.random() < 0.5 and len(side) > 1
            if full:
                del side[t]
            elif q > 1:
                side[t] = q - int(rng.integers(1, q))
        else:
            # market at the best of one side, sometimes flagged, sometimes not
            resting_bid = rng.random() < 0.5
            side = bids if resting_bid else asks
            t = max(side) if resting_bid else min(side)
            q = side[t]
            if len(side) == 1 and q == 1:
                size = 0  # would empty the side; skip this step
            elif rng.random() < 0.4 and len(side) > 1:
                size = q
            else:
                # partial unless the queue is a single lot on a deep side
                size = int(rng.integers(1, q)) if q > 1 else q
            if size > 0:
                if size == q:
                    del side[t]
                else:
                    side[t] = q - size
                if with_trades:
                    aggressor = None if rng.random() < 0.2 else ("A" if resting_bid else "B")
                    trades.append(
                        Trade(ts=ts, price=t * tick_size, size=size, aggressor=aggressor)
                    )
        snaps.append(emit(ts))
    return BuiltSession(snaps, trades, tick_size, levels)
