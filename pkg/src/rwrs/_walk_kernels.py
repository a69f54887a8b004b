"""Compiled inner loops for lattice walks.

Every kernel takes a ``numpy.random.Generator`` for one chunk of replicas and
processes the replicas sequentially, so the output is a pure function of the
generator state.  Steps of the simple walk consume one uniform each; the lazy
walk uses the same uniform for the hold decision and the direction.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

_JIT = dict(cache=True, nogil=True, error_model="numpy")
_HOT = dict(nogil=True, error_model="numpy", inline="always")


@njit(**_JIT)
def pow2_at_least(k):
    c = 16
    while c < k:
        c *= 2
    return c


# --------------------------------------------------------------------------
# open-addressing site table
#
# A site is stored as one packed int64 word when d * bits fits in 62 bits
# (bits covers coordinates in [-n, n]), otherwise as d raw coordinates.
# --------------------------------------------------------------------------

@njit(**_JIT)
def table_layout(n, d):
    """(capacity, key words, bits per coordinate, coordinate offset)."""
    cap = pow2_at_least(2 * (n + 1))
    bits = 1
    while (1 << bits) < 2 * n + 3:
        bits += 1
    kw = 1 if d * bits <= 62 else d
    return cap, kw, bits, n + 1


@njit(**_HOT)
def make_key(x, d, kw, bits, off, key):
    if kw == 1:
        k = np.int64(0)
        for i in range(d):
            k = (k << bits) | (x[i] + off)
        key[0] = k
    else:
        for i in range(d):
            key[i] = x[i]


@njit(**_HOT)
def _slot(key, kw, mask):
    if kw == 1:
        h = key[0] * np.int64(-7046029254386353131)
        h ^= h >> 32
        return h & mask
    h = np.int64(0)
    for i in range(kw):
        h = (h + key[i]) * np.int64(-7046029254386353131)
        h ^= h >> 29
    h = h * np.int64(-4658895280553007687)
    h ^= h >> 32
    return h & mask


@njit(**_HOT)
def _insert_packed(keys, counts, used, state, key, mask):
    i = _slot(key, 1, mask)
    k = key[0]
    while True:
        c = counts[i]
        if c == 0:
            keys[i, 0] = k
            counts[i] = 1
            used[state[0]] = i
            state[0] += 1
            return 1
        if keys[i, 0] == k:
            counts[i] = c + 1
            return c + 1
        i = (i + 1) & mask


@njit(**_HOT)
def _insert_wide(keys, counts, used, state, key, kw, mask):
    i = _slot(key, kw, mask)
    while True:
        c = counts[i]
        if c == 0:
            for j in range(kw):
                keys[i, j] = key[j]
            counts[i] = 1
            used[state[0]] = i
            state[0] += 1
            return 1
        same = True
        for j in range(kw):
            if keys[i, j] != key[j]:
                same = False
                break
        if same:
            counts[i] = c + 1
            return c + 1
        i = (i + 1) & mask


@njit(**_HOT)
def table_insert(keys, counts, used, state, x, d, kw, bits, off, key, mask):
    """Increment the local time at ``x`` and return it.

    ``state[0]`` is the number of occupied slots, listed in ``used``.
    """
    make_key(x, d, kw, bits, off, key)
    if kw == 1:
        return _insert_packed(keys, counts, used, state, key, mask)
    return _insert_wide(keys, counts, used, state, key, kw, mask)


@njit(**_JIT)
def table_clear(counts, used, n_used):
    for k in range(n_used):
        counts[used[k]] = 0


# --------------------------------------------------------------------------
# steps
# --------------------------------------------------------------------------

@njit(**_JIT)
def step(rng, x, d, lazy):
    u = rng.random()
    if lazy:
        if u < 0.5:
            return
        u = 2.0 * u - 1.0
    k = int(u * 2 * d)
    if k >= 2 * d:
        k = 2 * d - 1
    if k & 1:
        x[k >> 1] -= 1
    else:
        x[k >> 1] += 1


@njit(**_JIT)
def jump(rng, x, d, lazy, m):
    """Advance ``x`` by the exact law of ``m`` walk steps."""
    moves = rng.binomial(m, 0.5) if lazy else m
    remaining = moves
    for i in range(d):
        if i == d - 1:
            k = remaining
        else:
            k = rng.binomial(remaining, 1.0 / (d - i)) if remaining > 0 else 0
        remaining -= k
        if k > 0:
            plus = rng.binomial(k, 0.5)
            x[i] += 2 * plus - k


@njit(**_JIT)
def is_origin(x, d):
    for i in range(d):
        if x[i] != 0:
            return False
    return True


@njit(**_JIT)
def sup_norm(x, d):
    m = 0
    for i in range(d):
        a = abs(x[i])
        if a > m:
            m = a
    return m


# --------------------------------------------------------------------------
# region visits with skip-ahead
# --------------------------------------------------------------------------

@njit(**_JIT)
def _region_state(x, d, lo, hi, shape, mask):
    """(l1 distance to bounding box, membership)."""
    dist = 0
    for i in range(d):
        if x[i] < lo[i]:
            dist += lo[i] - x[i]
        elif x[i] > hi[i]:
            dist += x[i] - hi[i]
    if dist > 0:
        return dist, False
    idx = 0
    stride = 1
    for i in range(d):
        idx += (x[i] - lo[i]) * stride
        stride *= shape[i]
    return 0, mask[idx]


@njit(**_JIT)
def visits_kernel(rng, reps, d, lazy, lo, hi, mask, horizon, radius, kmax,
                  roulette, nrec):
    """Visits to a finite region up to ``min(horizon, exit, kmax)``.

    Returns per replica the visit count (time 0 included), the first time
    t >= 1 in the region (-1 if none), a stop flag (0 exit, 1 horizon, 2 kmax,
    3 killed), the weighted visit count and the weight carried at the first
    visit after time 0 (0 if none); and summed over replicas, for
    j < nrec, the weight carried at visit j + 1 (s1), its square (s2) and the
    number of replicas that made that visit (hits).  ``s1[j] / reps``
    estimates P(at least j + 1 visits).  While the region is out of reach the walk jumps ``dist - 1``
    steps at once, which cannot skip a visit.  Exit from the ball of
    sup-radius ``radius`` (< 0 disables it) is checked at the observed times.

    With ``roulette = D0 > 0`` a walk crossing l1-distance ``D0 * 2**j`` from
    the region for the first time survives with probability 1/2 and doubles
    its weight, so weighted visit counts stay unbiased while walks that wander
    off are pruned.  Without roulette all weights are 1.
    """
    shape = hi - lo + 1
    counts = np.zeros(reps, np.int64)
    first = np.full(reps, -1, np.int64)
    flags = np.zeros(reps, np.int8)
    wsum = np.zeros(reps)
    fweight = np.zeros(reps)
    s1 = np.zeros(nrec)
    s2 = np.zeros(nrec)
    hits = np.zeros(nrec, np.int64)
    x = np.zeros(d, np.int64)
    for r in range(reps):
        for i in range(d):
            x[i] = 0
        t = 0
        weight = 1.0
        level = roulette
        dist, inside = _region_state(x, d, lo, hi, shape, mask)
        c = 0
        ws = 0.0
        if inside:
            if nrec > 0:
                s1[0] += 1.0
                s2[0] += 1.0
                hits[0] += 1
            c = 1
            ws = 1.0
        f = -1
        flag = 1
        while True:
            if kmax > 0 and c >= kmax:
                flag = 2
                break
            if t >= horizon:
                flag = 1
                break
            if dist >= 3:
                m = dist - 1
                if m > horizon - t:
                    m = horizon - t
                jump(rng, x, d, lazy, m)
                t += m
            else:
                step(rng, x, d, lazy)
                t += 1
            if radius >= 0 and sup_norm(x, d) > radius:
                flag = 0
                break
            dist, inside = _region_state(x, d, lo, hi, shape, mask)
            if roulette > 0 and dist >= level:
                while dist >= level:
                    level *= 2
                    if rng.random() < 0.5:
                        weight *= 2.0
                    else:
                        weight = 0.0
                        break
                if weight == 0.0:
                    flag = 3
                    break
            if inside:
                if c < nrec:
                    s1[c] += weight
                    s2[c] += weight * weight
                    hits[c] += 1
                c += 1
                ws += weight
                if f < 0:
                    f = t
                    fweight[r] = weight
        counts[r] = c
        first[r] = f
        flags[r] = flag
        wsum[r] = ws
    return counts, first, flags, wsum, fweight, s1, s2, hits


# --------------------------------------------------------------------------
# local-time histograms
# --------------------------------------------------------------------------

@njit(**_JIT)
def _grow(a, size):
    if size <= a.shape[0]:
        return a
    b = np.empty(max(size, 2 * a.shape[0]), a.dtype)
    b[: a.shape[0]] = a
    return b


@njit(**_JIT)
def _append_histogram(counts, used, n_used, hist, vals, mults, pos):
    """Append the (local time, number of sites) pairs of one path."""
    maxl = 0
    for k in range(n_used):
        c = counts[used[k]]
        if c > maxl:
            maxl = c
    hist = _grow(hist, maxl + 1)
    for v in range(maxl + 1):
        hist[v] = 0
    for k in range(n_used):
        hist[counts[used[k]]] += 1
    distinct = 0
    for v in range(1, maxl + 1):
        if hist[v] > 0:
            distinct += 1
    vals = _grow(vals, pos + distinct)
    mults = _grow(mults, pos + distinct)
    for v in range(1, maxl + 1):
        if hist[v] > 0:
            vals[pos] = v
            mults[pos] = hist[v]
            pos += 1
    return hist, vals, mults, pos, maxl


@njit(**_JIT)
def histogram_kernel(rng, reps, n, d, lazy):
    """Simulate ``reps`` paths of ``n`` steps and summarise their local times.

    Returns ragged (values, multiplicities, offsets) plus per-path
    self-intersection sum(l^2), max local time and range size.
    """
    cap, kw, bits, off = table_layout(n, d)
    mask = cap - 1
    keys = np.empty((cap, kw), np.int64)
    key = np.empty(kw, np.int64)
    state = np.zeros(1, np.int64)
    tcounts = np.zeros(cap, np.int64)
    used = np.empty(n + 1, np.int64)
    hist = np.zeros(64, np.int64)
    vals = np.empty(16 * reps + 16, np.int64)
    mults = np.empty(16 * reps + 16, np.int64)
    offsets = np.zeros(reps + 1, np.int64)
    sumsq = np.zeros(reps, np.int64)
    maxl = np.zeros(reps, np.int64)
    rng_size = np.zeros(reps, np.int64)
    x = np.zeros(d, np.int64)
    pos = 0
    for r in range(reps):
        for i in range(d):
            x[i] = 0
        state[0] = 0
        c = table_insert(keys, tcounts, used, state, x, d, kw, bits, off, key, mask)
        ss = 1
        for t in range(n):
            step(rng, x, d, lazy)
            c = table_insert(keys, tcounts, used, state, x, d, kw, bits, off, key, mask)
            ss += 2 * c - 1
        hist, vals, mults, pos, ml = _append_histogram(tcounts, used, state[0], hist, vals, mults, pos)
        offsets[r + 1] = pos
        sumsq[r] = ss
        maxl[r] = ml
        rng_size[r] = state[0]
        table_clear(tcounts, used, state[0])
    return vals[:pos].copy(), mults[:pos].copy(), offsets, sumsq, maxl, rng_size


# --------------------------------------------------------------------------
# trap proposal: Doob transform toward the origin inside a box
# --------------------------------------------------------------------------

@njit(**_JIT)
def _box_index(x, d, R):
    side = 2 * R + 1
    idx = 0
    stride = 1
    for i in range(d):
        v = x[i] + R
        if v < 0 or v >= side:
            return -1
        idx += v * stride
        stride *= side
    return idx


@njit(**_JIT)
def _harmonic_value(x, d, R, hbox):
    if is_origin(x, d):
        return 1.0
    idx = _box_index(x, d, R)
    if idx < 0:
        return 0.0
    return hbox[idx]


@njit(**_JIT)
def _move_weights(x, d, lazy, R, hbox, w):
    """Fill ``w`` with p(move) * H(target); returns their sum.

    Moves 0..2d-1 are the unit steps (+e_i, -e_i); move 2d is the hold of the
    lazy walk.
    """
    z = 0.0
    base = (0.5 if lazy else 1.0) / (2 * d)
    for k in range(2 * d):
        i = k >> 1
        delta = -1 if k & 1 else 1
        x[i] += delta
        hv = _harmonic_value(x, d, R, hbox)
        x[i] -= delta
        w[k] = base * hv
        z += w[k]
    if lazy:
        w[2 * d] = 0.5 * _harmonic_value(x, d, R, hbox)
        z += w[2 * d]
    return z


@njit(**_JIT)
def _apply_move(x, d, k):
    if k < 2 * d:
        if k & 1:
            x[k >> 1] -= 1
        else:
            x[k >> 1] += 1


@njit(**_JIT)
def _free_move(u, d, lazy):
    if lazy:
        if u < 0.5:
            return 2 * d
        u = 2.0 * u - 1.0
    k = int(u * 2 * d)
    if k >= 2 * d:
        k = 2 * d - 1
    return k


@njit(**_JIT)
def trap_kernel(rng, reps, n, d, lazy, R, hbox, comp_k, comp_logw):
    """Paths from a mixture proposal that forces returns to the origin.

    Component ``c`` drives the walk by the Doob transform of the box-killed
    hitting probability ``hbox`` until ``comp_k[c]`` returns to the origin
    have happened (``comp_k[c] == 0`` is the unmodified walk), then lets it
    run free.  Returns per path the log likelihood ratio
    ``log dP/dQ_mix``, the sampled component, the number of returns and the
    local-time histogram in ragged form.
    """
    ncomp = comp_k.shape[0]
    kmax = 0
    for c in range(ncomp):
        if comp_k[c] > kmax:
            kmax = comp_k[c]
    cum_w = np.empty(ncomp)
    acc = 0.0
    for c in range(ncomp):
        acc += math.exp(comp_logw[c])
        cum_w[c] = acc
    cap, kw, bits, off = table_layout(n, d)
    mask = cap - 1
    keys = np.empty((cap, kw), np.int64)
    key = np.empty(kw, np.int64)
    state = np.zeros(1, np.int64)
    tcounts = np.zeros(cap, np.int64)
    used = np.empty(n + 1, np.int64)
    hist = np.zeros(64, np.int64)
    vals = np.empty(16 * reps + 16, np.int64)
    mults = np.empty(16 * reps + 16, np.int64)
    offsets = np.zeros(reps + 1, np.int64)
    log_w = np.zeros(reps)
    comp = np.zeros(reps, np.int64)
    nret = np.zeros(reps, np.int64)
    l_at = np.empty(kmax + 1)
    w = np.empty(2 * d + 1)
    x = np.zeros(d, np.int64)
    nmoves = 2 * d + 1 if lazy else 2 * d
    p_move = np.full(2 * d + 1, (0.5 if lazy else 1.0) / (2 * d))
    p_move[2 * d] = 0.5
    pos = 0
    for r in range(reps):
        u = rng.random() * acc
        c_s = 0
        while c_s < ncomp - 1 and u >= cum_w[c_s]:
            c_s += 1
        target = comp_k[c_s]
        for i in range(d):
            x[i] = 0
        state[0] = 0
        cnt = table_insert(keys, tcounts, used, state, x, d, kw, bits, off, key, mask)
        returns = 0
        log_l = 0.0
        alive = True
        tracking = kmax > 0
        for t in range(n):
            trapped = returns < target
            if tracking or trapped:
                z = _move_weights(x, d, lazy, R, hbox, w)
                u = rng.random()
                if trapped:
                    s = u * z
                    k = 0
                    run = w[0]
                    while k < nmoves - 1 and s >= run:
                        k += 1
                        run += w[k]
                    # never pick a forbidden move through rounding
                    while w[k] <= 0.0:
                        k -= 1
                else:
                    k = _free_move(u, d, lazy)
                if tracking:
                    if w[k] > 0.0:
                        log_l += math.log(w[k] / (z * p_move[k]))
                    else:
                        # every still-running trap component assigns this path zero density
                        alive = False
                        tracking = False
                        for j in range(returns + 1, kmax + 1):
                            l_at[j] = -np.inf
                _apply_move(x, d, k)
            else:
                step(rng, x, d, lazy)
            cnt = table_insert(keys, tcounts, used, state, x, d, kw, bits, off, key, mask)
            if is_origin(x, d):
                returns += 1
                if tracking:
                    l_at[returns] = log_l
                    if returns >= kmax:
                        tracking = False
        # mixture density ratio q_mix / p on the log scale
        m = -np.inf
        for c in range(ncomp):
            kc = comp_k[c]
            if kc == 0:
                lr = 0.0
            elif returns >= kc:
                lr = l_at[kc]
            else:
                lr = log_l if alive else -np.inf
            v = comp_logw[c] + lr
            if v > m:
                m = v
        s = 0.0
        for c in range(ncomp):
            kc = comp_k[c]
            if kc == 0:
                lr = 0.0
            elif returns >= kc:
                lr = l_at[kc]
            else:
                lr = log_l if alive else -np.inf
            v = comp_logw[c] + lr
            if v > -np.inf:
                s += math.exp(v - m)
        log_w[r] = -(m + math.log(s))
        comp[r] = c_s
        nret[r] = returns
        hist, vals, mults, pos, ml = _append_histogram(tcounts, used, state[0], hist, vals, mults, pos)
        offsets[r + 1] = pos
        table_clear(tcounts, used, state[0])
    return log_w, comp, nret, vals[:pos].copy(), mults[:pos].copy(), offsets
