"""Compiled time-stepped simulation core.

Flat-array implementation of the per-step event loop: chained-hash LRU
caches with doubly-linked recency lists, splitmix64 substreams per node, and
a three-pass stable counting sort that orders each step's arrivals by
(receiver, sender, message id, send sequence).

Semantics must match ``gossipsim.engine.run_reference`` exactly, including
random-draw consumption; ``tests/test_engine.py`` asserts trace equality
between the two backends. Keep them in sync when changing either.
"""

from __future__ import annotations

import numpy as np
from numba import njit

U64 = np.uint64
_GOLDEN = U64(0x9E3779B97F4A7C15)
_MIX_A = U64(0xBF58476D1CE4E5B9)
_MIX_B = U64(0x94D049BB133111EB)
_SALT = U64(0xD1B54A32D192ED03)
_S30 = U64(30)
_S27 = U64(27)
_S31 = U64(31)
_S11 = U64(11)
_ONE = U64(1)
_INV_2_53 = 1.0 / 9007199254740992.0

KIND_FP = 0
KIND_PB = 1
KIND_DDF = 2

OK = 0
ERR_NON_EDGE = 1
ERR_LIVE_TTL_AT_DRAIN = 2


@njit(cache=True, inline="always")
def _mixfin(x):
    z = (x ^ (x >> _S30)) * _MIX_A
    z = (z ^ (z >> _S27)) * _MIX_B
    return z ^ (z >> _S31)


@njit(cache=True, inline="always")
def _derive2(seed, tag, sub):
    s = _mixfin(seed + _GOLDEN)
    s = _mixfin(s ^ ((tag + _ONE) * _SALT))
    return _mixfin(s ^ ((sub + _ONE) * _SALT))


@njit(cache=True, inline="always")
def _u01(states, v):
    s = states[v] + _GOLDEN
    states[v] = s
    return np.float64(_mixfin(s) >> _S11) * _INV_2_53


@njit(cache=True, inline="always")
def _slot_of(indptr, indices, v, u):
    lo = indptr[v]
    hi = indptr[v + 1] - 1
    while lo <= hi:
        mid = (lo + hi) // 2
        x = np.int64(indices[mid])
        if x == u:
            return mid
        if x < u:
            lo = mid + 1
        else:
            hi = mid - 1
    return np.int64(-1)


@njit(cache=True, inline="always")
def _cache_lookup_touch(v, m, bucket_head, chain_next, slot_msg,
                        lru_prev, lru_next, lru_head, lru_tail, bmask):
    b = np.int64(_mixfin(U64(m)) & bmask)
    s = np.int64(bucket_head[v, b])
    while s != -1:
        if slot_msg[v, s] == m:
            if lru_head[v] != s:
                p = lru_prev[v, s]
                nx = lru_next[v, s]
                if p != -1:
                    lru_next[v, p] = nx
                if nx != -1:
                    lru_prev[v, nx] = p
                if lru_tail[v] == s:
                    lru_tail[v] = p
                lru_prev[v, s] = -1
                lru_next[v, s] = lru_head[v]
                lru_prev[v, lru_head[v]] = np.int32(s)
                lru_head[v] = np.int32(s)
            return True
        s = np.int64(chain_next[v, s])
    return False


@njit(cache=True, inline="always")
def _cache_insert(v, m, capacity, cache_size, bucket_head, chain_next,
                  slot_msg, lru_prev, lru_next, lru_head, lru_tail, bmask):
    # Caller guarantees m is not present.
    if cache_size[v] < capacity:
        s = np.int64(cache_size[v])
        cache_size[v] += 1
    else:
        s = np.int64(lru_tail[v])
        old = slot_msg[v, s]
        ob = np.int64(_mixfin(U64(old)) & bmask)
        c = np.int64(bucket_head[v, ob])
        if c == s:
            bucket_head[v, ob] = chain_next[v, s]
        else:
            while np.int64(chain_next[v, c]) != s:
                c = np.int64(chain_next[v, c])
            chain_next[v, c] = chain_next[v, s]
        p = lru_prev[v, s]
        lru_tail[v] = p
        if p != -1:
            lru_next[v, p] = -1
        else:
            lru_head[v] = -1
    slot_msg[v, s] = m
    b = np.int64(_mixfin(U64(m)) & bmask)
    chain_next[v, s] = bucket_head[v, b]
    bucket_head[v, b] = np.int32(s)
    lru_prev[v, s] = -1
    lru_next[v, s] = lru_head[v]
    if lru_head[v] != -1:
        lru_prev[v, lru_head[v]] = np.int32(s)
    lru_head[v] = np.int32(s)
    if lru_tail[v] == -1:
        lru_tail[v] = np.int32(s)


@njit(cache=True)
def _grow_i32(arr, needed):
    if needed <= arr.shape[0]:
        return arr
    cap = arr.shape[0]
    while cap < needed:
        cap *= 2
    out = np.empty(cap, np.int32)
    out[:arr.shape[0]] = arr
    return out


@njit(cache=True)
def _grow_i64(arr, needed):
    if needed <= arr.shape[0]:
        return arr
    cap = arr.shape[0]
    while cap < needed:
        cap *= 2
    out = np.empty(cap, np.int64)
    out[:arr.shape[0]] = arr
    return out


@njit(cache=True)
def _grow_u8(arr, needed):
    if needed <= arr.shape[0]:
        return arr
    cap = arr.shape[0]
    while cap < needed:
        cap *= 2
    out = np.empty(cap, np.uint8)
    out[:arr.shape[0]] = arr
    return out


@njit(cache=True)
def _grow_received(received, needed, n):
    if needed <= received.shape[0]:
        return received
    cap = received.shape[0]
    while cap < needed:
        cap *= 2
    out = np.zeros((cap, n), np.uint8)
    out[:received.shape[0], :] = received
    return out


@njit(cache=True)
def _counting_pass(key, lo_count, src_a, src_b, src_c, src_d, src_e,
                   dst_a, dst_b, dst_c, dst_d, dst_e, m):
    counts = np.zeros(lo_count + 1, np.int64)
    for i in range(m):
        counts[key[i] + 1] += 1
    for k in range(1, lo_count + 1):
        counts[k] += counts[k - 1]
    for i in range(m):
        pos = counts[key[i]]
        counts[key[i]] += 1
        dst_a[pos] = src_a[i]
        dst_b[pos] = src_b[i]
        dst_c[pos] = src_c[i]
        dst_d[pos] = src_d[i]
        dst_e[pos] = src_e[i]


@njit(cache=True)
def run_kernel(indptr, indices, kind, scalar_param, prob_by_degree,
               initial_ttl, cache_capacity, total_steps, mean_interval,
               exclude_sender, count_expired, free_rider, preload_degrees,
               single_message, single_origin, seed, record,
               tag_generation, tag_forward):
    n = indptr.shape[0] - 1
    nnz = indices.shape[0]
    horizon = total_steps - initial_ttl

    # Per-node substreams.
    fwd_state = np.empty(n, np.uint64)
    gen_state = np.empty(n, np.uint64)
    for v in range(n):
        fwd_state[v] = _derive2(seed, U64(tag_forward), U64(v))
        gen_state[v] = _derive2(seed, U64(tag_generation), U64(v))

    # Piggybacked degree knowledge, aligned with the csr slots of each node.
    known = np.empty(nnz, np.uint8)
    known[:] = 1 if preload_degrees else 0

    # Generation schedule (next due step per node; -1 = no more generations).
    next_gen = np.full(n, -1, np.int64)
    if single_message == 0:
        for v in range(n):
            first = np.int64(np.floor(
                -mean_interval * np.log(1.0 - _u01(gen_state, v)) + 0.5))
            if first < horizon:
                next_gen[v] = first

    # LRU cache arrays.
    cap = np.int64(cache_capacity)
    nbuckets = np.int64(4)
    while nbuckets < 2 * cap:
        nbuckets *= 2
    bmask = U64(nbuckets - 1)
    bucket_head = np.full((n, nbuckets), -1, np.int32)
    chain_next = np.full((n, cap), -1, np.int32)
    slot_msg = np.full((n, cap), -1, np.int64)
    lru_prev = np.full((n, cap), -1, np.int32)
    lru_next = np.full((n, cap), -1, np.int32)
    lru_head = np.full(n, -1, np.int32)
    lru_tail = np.full(n, -1, np.int32)
    cache_size = np.zeros(n, np.int32)

    # Message bookkeeping.
    msg_cap = np.int64(256)
    origins = np.empty(msg_cap, np.int32)
    created = np.empty(msg_cap, np.int32)
    recv_count = np.zeros(msg_cap, np.int32)
    hop_sum = np.zeros(msg_cap, np.int64)
    received = np.zeros((msg_cap, n), np.uint8)
    msg_count = np.int64(0)

    # Arrival buffers: cur_* sorted by (receiver, sender, msg, seq).
    buf_cap = np.int64(1024)
    cur_snd = np.empty(buf_cap, np.int32)
    cur_rcv = np.empty(buf_cap, np.int32)
    cur_msg = np.empty(buf_cap, np.int64)
    cur_ttl = np.empty(buf_cap, np.int32)
    cur_hops = np.empty(buf_cap, np.int32)
    cur_len = np.int64(0)
    nxt_snd = np.empty(buf_cap, np.int32)
    nxt_rcv = np.empty(buf_cap, np.int32)
    nxt_msg = np.empty(buf_cap, np.int64)
    nxt_ttl = np.empty(buf_cap, np.int32)
    nxt_hops = np.empty(buf_cap, np.int32)
    nxt_len = np.int64(0)

    # Optional delivery records.
    rec_cap = np.int64(1024 if record else 1)
    rec_msg = np.empty(rec_cap, np.int64)
    rec_rcv = np.empty(rec_cap, np.int32)
    rec_hops = np.empty(rec_cap, np.int32)
    rec_step = np.empty(rec_cap, np.int32)
    rec_first = np.empty(rec_cap, np.uint8)
    rec_len = np.int64(0)

    total_sends = np.int64(0)
    status = OK

    for t in range(total_steps + 1):
        i = np.int64(0)
        for v in range(n):
            # --- arrivals addressed to v (sorted: sender asc, msg asc) ---
            while i < cur_len and np.int64(cur_rcv[i]) == v:
                snd = np.int64(cur_snd[i])
                m = cur_msg[i]
                ttl = np.int64(cur_ttl[i])
                hops = np.int64(cur_hops[i])
                i += 1

                slot = _slot_of(indptr, indices, v, snd)
                if slot < 0:
                    status = ERR_NON_EDGE
                    continue
                known[slot] = 1
                if t == total_steps and ttl > 0:
                    status = ERR_LIVE_TTL_AT_DRAIN

                hit = _cache_lookup_touch(v, m, bucket_head, chain_next,
                                          slot_msg, lru_prev, lru_next,
                                          lru_head, lru_tail, bmask)
                if hit:
                    if record:
                        rec_msg = _grow_i64(rec_msg, rec_len + 1)
                        rec_rcv = _grow_i32(rec_rcv, rec_len + 1)
                        rec_hops = _grow_i32(rec_hops, rec_len + 1)
                        rec_step = _grow_i32(rec_step, rec_len + 1)
                        rec_first = _grow_u8(rec_first, rec_len + 1)
                        rec_msg[rec_len] = m
                        rec_rcv[rec_len] = v
                        rec_hops[rec_len] = hops
                        rec_step[rec_len] = t
                        rec_first[rec_len] = 0
                        rec_len += 1
                    continue

                counted = True
                cached = True
                if ttl == 0 and count_expired == 0:
                    counted = False
                    cached = False

                first = np.uint8(0)
                if counted:
                    if received[m, v] == 0:
                        received[m, v] = 1
                        recv_count[m] += 1
                        hop_sum[m] += hops
                        first = np.uint8(1)
                if record:
                    rec_msg = _grow_i64(rec_msg, rec_len + 1)
                    rec_rcv = _grow_i32(rec_rcv, rec_len + 1)
                    rec_hops = _grow_i32(rec_hops, rec_len + 1)
                    rec_step = _grow_i32(rec_step, rec_len + 1)
                    rec_first = _grow_u8(rec_first, rec_len + 1)
                    rec_msg[rec_len] = m
                    rec_rcv[rec_len] = v
                    rec_hops[rec_len] = hops
                    rec_step[rec_len] = t
                    rec_first[rec_len] = first
                    rec_len += 1
                if cached:
                    _cache_insert(v, m, cap, cache_size, bucket_head,
                                  chain_next, slot_msg, lru_prev, lru_next,
                                  lru_head, lru_tail, bmask)
                if ttl <= 0:
                    continue
                if free_rider[v] == 1 and np.int64(origins[m]) != v:
                    continue

                # forward with decremented ttl
                deg_v = indptr[v + 1] - indptr[v]
                nxt_snd = _grow_i32(nxt_snd, nxt_len + deg_v)
                nxt_rcv = _grow_i32(nxt_rcv, nxt_len + deg_v)
                nxt_msg = _grow_i64(nxt_msg, nxt_len + deg_v)
                nxt_ttl = _grow_i32(nxt_ttl, nxt_len + deg_v)
                nxt_hops = _grow_i32(nxt_hops, nxt_len + deg_v)
                excl = snd if exclude_sender == 1 else np.int64(-1)
                if kind == KIND_PB:
                    go = _u01(fwd_state, v) < scalar_param
                    if go:
                        for j in range(indptr[v], indptr[v + 1]):
                            w = np.int64(indices[j])
                            if w == excl:
                                continue
                            nxt_snd[nxt_len] = v
                            nxt_rcv[nxt_len] = w
                            nxt_msg[nxt_len] = m
                            nxt_ttl[nxt_len] = ttl - 1
                            nxt_hops[nxt_len] = hops + 1
                            nxt_len += 1
                            total_sends += 1
                else:
                    for j in range(indptr[v], indptr[v + 1]):
                        w = np.int64(indices[j])
                        if w == excl:
                            continue
                        u = _u01(fwd_state, v)
                        if kind == KIND_FP:
                            sel = u < scalar_param
                        else:
                            if known[j] == 0:
                                sel = True
                            else:
                                wd = indptr[w + 1] - indptr[w]
                                sel = u < prob_by_degree[wd]
                        if sel:
                            nxt_snd[nxt_len] = v
                            nxt_rcv[nxt_len] = w
                            nxt_msg[nxt_len] = m
                            nxt_ttl[nxt_len] = ttl - 1
                            nxt_hops[nxt_len] = hops + 1
                            nxt_len += 1
                            total_sends += 1

            # --- generation at v (arrivals first, then generate) ---
            generate = False
            if single_message == 1:
                generate = t == 0 and v == np.int64(single_origin)
            elif t < horizon and next_gen[v] == t:
                generate = True
            if generate:
                m = msg_count
                msg_count += 1
                origins = _grow_i32(origins, msg_count)
                created = _grow_i32(created, msg_count)
                recv_count = _grow_i32(recv_count, msg_count)
                hop_sum = _grow_i64(hop_sum, msg_count)
                received = _grow_received(received, msg_count, n)
                origins[m] = v
                created[m] = t
                recv_count[m] = 0
                hop_sum[m] = 0
                received[m, v] = 1
                _cache_insert(v, m, cap, cache_size, bucket_head, chain_next,
                              slot_msg, lru_prev, lru_next, lru_head,
                              lru_tail, bmask)
                deg_v = indptr[v + 1] - indptr[v]
                nxt_snd = _grow_i32(nxt_snd, nxt_len + deg_v)
                nxt_rcv = _grow_i32(nxt_rcv, nxt_len + deg_v)
                nxt_msg = _grow_i64(nxt_msg, nxt_len + deg_v)
                nxt_ttl = _grow_i32(nxt_ttl, nxt_len + deg_v)
                nxt_hops = _grow_i32(nxt_hops, nxt_len + deg_v)
                if kind == KIND_PB:
                    # first transmission: unconditional broadcast, no draw
                    for j in range(indptr[v], indptr[v + 1]):
                        w = np.int64(indices[j])
                        nxt_snd[nxt_len] = v
                        nxt_rcv[nxt_len] = w
                        nxt_msg[nxt_len] = m
                        nxt_ttl[nxt_len] = initial_ttl
                        nxt_hops[nxt_len] = 1
                        nxt_len += 1
                        total_sends += 1
                else:
                    for j in range(indptr[v], indptr[v + 1]):
                        w = np.int64(indices[j])
                        u = _u01(fwd_state, v)
                        if kind == KIND_FP:
                            sel = u < scalar_param
                        else:
                            if known[j] == 0:
                                sel = True
                            else:
                                wd = indptr[w + 1] - indptr[w]
                                sel = u < prob_by_degree[wd]
                        if sel:
                            nxt_snd[nxt_len] = v
                            nxt_rcv[nxt_len] = w
                            nxt_msg[nxt_len] = m
                            nxt_ttl[nxt_len] = initial_ttl
                            nxt_hops[nxt_len] = 1
                            nxt_len += 1
                            total_sends += 1
                if single_message == 0:
                    gap = np.int64(np.floor(
                        -mean_interval * np.log(1.0 - _u01(gen_state, v)) + 0.5))
                    if gap < 1:
                        gap = np.int64(1)
                    nxt_due = t + gap
                    next_gen[v] = nxt_due if nxt_due < horizon else np.int64(-1)

        # --- sort next step's arrivals by (receiver, sender, msg, seq) ---
        m_pend = nxt_len
        if m_pend > 0:
            t1_snd = np.empty(m_pend, np.int32)
            t1_rcv = np.empty(m_pend, np.int32)
            t1_msg = np.empty(m_pend, np.int64)
            t1_ttl = np.empty(m_pend, np.int32)
            t1_hops = np.empty(m_pend, np.int32)
            t2_snd = np.empty(m_pend, np.int32)
            t2_rcv = np.empty(m_pend, np.int32)
            t2_msg = np.empty(m_pend, np.int64)
            t2_ttl = np.empty(m_pend, np.int32)
            t2_hops = np.empty(m_pend, np.int32)
            cur_snd = _grow_i32(cur_snd, m_pend)
            cur_rcv = _grow_i32(cur_rcv, m_pend)
            cur_msg = _grow_i64(cur_msg, m_pend)
            cur_ttl = _grow_i32(cur_ttl, m_pend)
            cur_hops = _grow_i32(cur_hops, m_pend)
            # stable LSD passes: msg, then sender, then receiver
            _counting_pass(nxt_msg, msg_count,
                           nxt_snd, nxt_rcv, nxt_msg, nxt_ttl, nxt_hops,
                           t1_snd, t1_rcv, t1_msg, t1_ttl, t1_hops, m_pend)
            _counting_pass(t1_snd.astype(np.int64), np.int64(n),
                           t1_snd, t1_rcv, t1_msg, t1_ttl, t1_hops,
                           t2_snd, t2_rcv, t2_msg, t2_ttl, t2_hops, m_pend)
            _counting_pass(t2_rcv.astype(np.int64), np.int64(n),
                           t2_snd, t2_rcv, t2_msg, t2_ttl, t2_hops,
                           cur_snd, cur_rcv, cur_msg, cur_ttl, cur_hops, m_pend)
        cur_len = m_pend
        nxt_len = np.int64(0)

    return (origins[:msg_count].copy(), created[:msg_count].copy(),
            recv_count[:msg_count].copy(), hop_sum[:msg_count].copy(),
            total_sends,
            rec_msg[:rec_len].copy(), rec_rcv[:rec_len].copy(),
            rec_hops[:rec_len].copy(), rec_step[:rec_len].copy(),
            rec_first[:rec_len].copy(), status)
