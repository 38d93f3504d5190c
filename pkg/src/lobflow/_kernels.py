"""Compiled hot loops (numba). Everything here works on plain int64 arrays;
the public modules own validation, types, and error reporting.

Book state inside a kernel is a fixed-width pair of arrays per side holding
the visible levels best-first, plus an occupancy count. Inserts and removals
shift elements manually; widths are small (typically 5) so shifting beats
any clever structure.
"""

from __future__ import annotations

import numpy as np
from numba import njit

# kind codes, mirrored from core (kept literal here: kernels cannot import it)
_L, _C, _M = 0, 1, 2


@njit(cache=True)
def _side_insert(T, Q, n, cap, tick, size, is_bid):
    """Add size at tick; returns the new occupancy. Insertions past the
    visible window are no-ops, and an insert into a full side evicts the
    worst level (an L2 feed would have scrolled it out)."""
    j = 0
    if is_bid:
        while j < n and T[j] > tick:
            j += 1
    else:
        while j < n and T[j] < tick:
            j += 1
    if j < n and T[j] == tick:
        Q[j] += size
        return n
    if j >= cap:
        return n
    last = n if n < cap else cap - 1
    k = last
    while k > j:
        T[k] = T[k - 1]
        Q[k] = Q[k - 1]
        k -= 1
    T[j] = tick
    Q[j] = size
    return n + 1 if n < cap else cap


@njit(cache=True)
def _side_remove_at(T, Q, n, j):
    k = j
    while k < n - 1:
        T[k] = T[k + 1]
        Q[k] = Q[k + 1]
        k += 1
    T[n - 1] = 0
    Q[n - 1] = 0
    return n - 1


@njit(cache=True)
def _side_cancel(T, Q, n, tick, size):
    """Remove size at tick; -1 if the price is absent or size oversized."""
    for j in range(n):
        if T[j] == tick:
            if size > Q[j]:
                return -1
            Q[j] -= size
            if Q[j] == 0:
                return _side_remove_at(T, Q, n, j)
            return n
    return -1


@njit(cache=True)
def _side_market(T, Q, n, tick, size):
    """Consume size at the best; -1 unless tick is the best and size fits."""
    if n == 0 or T[0] != tick or size > Q[0]:
        return -1
    Q[0] -= size
    if Q[0] == 0:
        return _side_remove_at(T, Q, n, 0)
    return n


@njit(cache=True)
def _compare_side(
    i, side_code, T, Q, n, RT, RQ, rn,
    pos, cap, mis_snap, mis_side, mis_tick, mis_want, mis_got, is_bid,
):
    """Merge-walk replayed side vs recorded side, logging differing
    quantities (absent price = qty 0). Returns how many differed."""
    a = 0
    b = 0
    added = 0
    while a < n or b < rn:
        if a < n and b < rn and T[a] == RT[b]:
            t = T[a]
            g = Q[a]
            w = RQ[b]
            a += 1
            b += 1
        elif b >= rn or (
            a < n and ((is_bid and T[a] > RT[b]) or ((not is_bid) and T[a] < RT[b]))
        ):
            t = T[a]
            g = Q[a]
            w = 0
            a += 1
        else:
            t = RT[b]
            g = 0
            w = RQ[b]
            b += 1
        if g != w:
            k = pos + added
            if k < cap:
                mis_snap[k] = i
                mis_side[k] = side_code
                mis_tick[k] = t
                mis_want[k] = w
                mis_got[k] = g
            added += 1
    return added


@njit(cache=True)
def gen_session(
    ts0, end_ts, L,
    bt0, bq0, at0, aq0,
    lam_l, lam_c, lam_m, spread_mult,
    gaps, u_type, u_side, u_act, u_level,
    q_targets, law_sizes,
    sw_times, regime_factor,
):
    """Event-driven book simulation. One event per step, one snapshot per
    event; all randomness comes pre-drawn in the input blocks, so output is
    a pure function of them.

    Truth labels are computed here from the simulation's own state (not by
    diffing snapshots): limits get their post-insert depth, or minus the
    tick improvement when they beat the side's previous best; cancels get
    their pre-removal depth; markets are always depth 1 at the touch.

    Rules that keep the emitted stream lossless under L2 truncation: at
    most L prices per side (placements needing a free slot fall back to
    joining an existing queue), market size capped at the best queue, and
    removals never empty a side (last-lot removals become limit joins,
    counted in `conversions`).
    """
    n_max = gaps.shape[0]
    WBT = np.zeros(L, np.int64)
    WBQ = np.zeros(L, np.int64)
    WAT = np.zeros(L, np.int64)
    WAQ = np.zeros(L, np.int64)
    nb = 0
    na = 0
    for j in range(L):
        if bq0[j] > 0:
            WBT[nb] = bt0[j]
            WBQ[nb] = bq0[j]
            nb += 1
        if aq0[j] > 0:
            WAT[na] = at0[j]
            WAQ[na] = aq0[j]
            na += 1
    sn_ts = np.empty(n_max + 1, np.int64)
    SBT = np.zeros((n_max + 1, L), np.int64)
    SBQ = np.zeros((n_max + 1, L), np.int64)
    SAT = np.zeros((n_max + 1, L), np.int64)
    SAQ = np.zeros((n_max + 1, L), np.int64)
    ev_kind = np.empty(n_max, np.int64)
    ev_side = np.empty(n_max, np.int64)
    ev_tick = np.empty(n_max, np.int64)
    ev_size = np.empty(n_max, np.int64)
    ev_level = np.empty(n_max, np.int64)
    tr_ev = np.empty(n_max, np.int64)
    sn_ts[0] = ts0
    for j in range(L):
        SBT[0, j] = WBT[j]
        SBQ[0, j] = WBQ[j]
        SAT[0, j] = WAT[j]
        SAQ[0, j] = WAQ[j]
    base_total = lam_l + lam_c + lam_m
    ts = ts0
    state = 0
    swp = 0
    n_sw = sw_times.shape[0]
    n_tr = 0
    conversions = 0
    i = 0
    while i < n_max:
        while swp < n_sw and ts >= sw_times[swp]:
            state = 1 - state
            swp += 1
        fac = regime_factor if state == 1 else 1.0
        spread = WAT[0] - WBT[0]
        boost = spread_mult if spread > 1 else 1.0
        w_l = lam_l * boost
        total = w_l + lam_c + lam_m
        m = (total / base_total) * fac
        dt = np.int64(gaps[i] / m * 1e9)
        if dt < 1:
            dt = 1
        if ts + dt > end_ts:
            break
        ts = ts + dt

        u = u_type[i] * total
        bid_side = u_side[i] < 0.5
        if bid_side:
            T, Q, n = WBT, WBQ, nb
        else:
            T, Q, n = WAT, WAQ, na
        target = np.int64(q_targets[i] + 0.5)
        if target < 1:
            target = 1

        if u < w_l:
            kind = 0
        elif u < w_l + lam_c:
            kind = 1
        else:
            kind = 2

        if kind == 1:
            # cancel: uniform level; prunes the queue down to a fresh target
            # when it sits above one, else draws from the size law (capped by
            # the queue). A removal that would empty the side becomes a join.
            j = np.int64(u_level[i] * n)
            if j >= n:
                j = n - 1
            q = Q[j]
            if target < q:
                size = q - target
            else:
                size = law_sizes[i]
                if size > q:
                    size = q
            if size == q and n == 1:
                if q > 1:
                    size = q - 1
                else:
                    kind = 0
                    conversions += 1
        elif kind == 2:
            # market: consumes the best of its side only
            j = 0
            q = Q[0]
            size = law_sizes[i]
            if size > q:
                size = q
            if size == q and n == 1:
                if q > 1:
                    size = q - 1
                else:
                    kind = 0
                    conversions += 1

        if kind == 0:
            if spread > 1 and n < L:
                imp = 1
                if spread > 2 and u_act[i] < 0.3:
                    imp = 2
                tick = WBT[0] + imp if bid_side else WAT[0] - imp
                k = n
                while k > 0:
                    T[k] = T[k - 1]
                    Q[k] = Q[k - 1]
                    k -= 1
                T[0] = tick
                Q[0] = target
                n += 1
                size = target
                level = -imp
            elif n < L and u_act[i] < 0.35:
                tick = T[n - 1] - 1 if bid_side else T[n - 1] + 1
                T[n] = tick
                Q[n] = target
                n += 1
                size = target
                level = n
            else:
                j = np.int64(u_level[i] * n)
                if j >= n:
                    j = n - 1
                tick = T[j]
                size = target - Q[j]
                if size < 1:
                    size = 1
                Q[j] += size
                level = j + 1
        else:
            tick = T[j]
            level = j + 1
            if size == Q[j]:
                k = j
                while k < n - 1:
                    T[k] = T[k + 1]
                    Q[k] = Q[k + 1]
                    k += 1
                T[n - 1] = 0
                Q[n - 1] = 0
                n -= 1
            else:
                Q[j] -= size
            if kind == 2:
                tr_ev[n_tr] = i
                n_tr += 1

        if bid_side:
            nb = n
        else:
            na = n
        ev_kind[i] = kind
        ev_side[i] = 0 if bid_side else 1
        ev_tick[i] = tick
        ev_size[i] = size
        ev_level[i] = level
        sn_ts[i + 1] = ts
        for jj in range(L):
            SBT[i + 1, jj] = WBT[jj]
            SBQ[i + 1, jj] = WBQ[jj]
            SAT[i + 1, jj] = WAT[jj]
            SAQ[i + 1, jj] = WAQ[jj]
        i += 1
    return (
        i, n_tr, conversions,
        sn_ts, SBT, SBQ, SAT, SAQ,
        ev_kind, ev_side, ev_tick, ev_size, ev_level, tr_ev,
    )


@njit(cache=True)
def replay_verify(ts, bt, bq, at, aq, ev_ts, ev_kind, ev_side, ev_tick, ev_size, cap):
    """Replay events over the first snapshot and compare to every later one.

    Events are applied while ev_ts <= snapshot ts. Returns
    (status, err_event, checked, bad_snapshots, total_mismatches, 5 buffers);
    status 1 = impossible cancel, 2 = impossible market, err_event is the
    offending event index. Buffers hold the first `cap` mismatching prices;
    if total exceeds cap the caller reruns with an exact buffer.
    """
    n = ts.shape[0]
    L = bt.shape[1]
    ne = ev_ts.shape[0]
    WBT = np.zeros(L, np.int64)
    WBQ = np.zeros(L, np.int64)
    WAT = np.zeros(L, np.int64)
    WAQ = np.zeros(L, np.int64)
    nb = 0
    na = 0
    for j in range(L):
        if bq[0, j] > 0:
            WBT[nb] = bt[0, j]
            WBQ[nb] = bq[0, j]
            nb += 1
        if aq[0, j] > 0:
            WAT[na] = at[0, j]
            WAQ[na] = aq[0, j]
            na += 1
    mis_snap = np.zeros(cap, np.int64)
    mis_side = np.zeros(cap, np.int64)
    mis_tick = np.zeros(cap, np.int64)
    mis_want = np.zeros(cap, np.int64)
    mis_got = np.zeros(cap, np.int64)
    e = 0
    checked = 0
    bad = 0
    total = 0
    status = 0
    err_ev = -1
    for i in range(1, n):
        ti = ts[i]
        while e < ne and ev_ts[e] <= ti:
            k = ev_kind[e]
            tk = ev_tick[e]
            sz = ev_size[e]
            if ev_side[e] == 0:
                if k == _L:
                    nb = _side_insert(WBT, WBQ, nb, L, tk, sz, True)
                elif k == _C:
                    r = _side_cancel(WBT, WBQ, nb, tk, sz)
                    if r < 0:
                        status = 1
                        err_ev = e
                        break
                    nb = r
                else:
                    r = _side_market(WBT, WBQ, nb, tk, sz)
                    if r < 0:
                        status = 2
                        err_ev = e
                        break
                    nb = r
            else:
                if k == _L:
                    na = _side_insert(WAT, WAQ, na, L, tk, sz, False)
                elif k == _C:
                    r = _side_cancel(WAT, WAQ, na, tk, sz)
                    if r < 0:
                        status = 1
                        err_ev = e
                        break
                    na = r
                else:
                    r = _side_market(WAT, WAQ, na, tk, sz)
                    if r < 0:
                        status = 2
                        err_ev = e
                        break
                    na = r
            e += 1
        if status != 0:
            break
        rb = 0
        while rb < L and bq[i, rb] > 0:
            rb += 1
        ra = 0
        while ra < L and aq[i, ra] > 0:
            ra += 1
        d = _compare_side(
            i, 0, WBT, WBQ, nb, bt[i], bq[i], rb,
            total, cap, mis_snap, mis_side, mis_tick, mis_want, mis_got, True,
        )
        total += d
        row_bad = d
        d = _compare_side(
            i, 1, WAT, WAQ, na, at[i], aq[i], ra,
            total, cap, mis_snap, mis_side, mis_tick, mis_want, mis_got, False,
        )
        total += d
        row_bad += d
        checked += 1
        if row_bad > 0:
            bad += 1
    return status, err_ev, checked, bad, total, mis_snap, mis_side, mis_tick, mis_want, mis_got
