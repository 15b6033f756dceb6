"""Compiled hot loops: RNG streams, prefix-sum tree, and the lattice event loop.

Everything in this module is numba-compiled and operates on plain numpy
arrays so the Python layer stays free of per-event overhead.  All randomness
flows through an explicit xoshiro256++ state vector (uint64[4]); streams are
keyed by (master_seed, profile_index, realization_index) via a splitmix64
absorb, so every realization is reproducible in isolation and results cannot
depend on thread scheduling.
"""

from __future__ import annotations

import numpy as np
from numba import njit

# event-loop status codes shared with the Python layer
OK = 0          # reached the requested horizon
ABSORBED = 1    # total event rate hit zero before the horizon
GROW = 2        # an occupation would step past the rate table; caller must
                # extend the table and rerun the realization from its seed
MAXEVENTS = 3   # event budget exhausted before the horizon

_U64 = np.uint64
_GOLDEN = _U64(0x9E3779B97F4A7C15)
_MIX1 = _U64(0xBF58476D1CE4E5B9)
_MIX2 = _U64(0x94D049BB133111EB)
_DOMAIN_TAG = _U64(0xA0761D6478BD642F)
_INV_2_53 = 1.0 / 9007199254740992.0


@njit(cache=True, nogil=True, inline="always")
def _splitmix_next(x):
    # splitmix64: increment-then-finalize; x is the running counter
    x = x + _GOLDEN
    z = x
    z = (z ^ (z >> _U64(30))) * _MIX1
    z = (z ^ (z >> _U64(27))) * _MIX2
    z = z ^ (z >> _U64(31))
    return x, z


@njit(cache=True, nogil=True)
def seed_stream(state, master_seed, profile_index, realization_index):
    """Fill a uint64[4] xoshiro256++ state keyed by the three indices."""
    x = _U64(master_seed) ^ _DOMAIN_TAG
    x, z = _splitmix_next(x)
    x = z ^ _U64(profile_index)
    x, z = _splitmix_next(x)
    x = z ^ _U64(realization_index)
    nonzero = _U64(0)
    for i in range(4):
        x, z = _splitmix_next(x)
        state[i] = z
        nonzero |= z
    if nonzero == _U64(0):  # all-zero state is the one forbidden xoshiro seed
        state[0] = _GOLDEN


@njit(cache=True, nogil=True, inline="always")
def _rotl(x, k):
    return (x << k) | (x >> (_U64(64) - k))


@njit(cache=True, nogil=True, inline="always")
def next_u64(state):
    result = _rotl(state[0] + state[3], _U64(23)) + state[0]
    t = state[1] << _U64(17)
    state[2] ^= state[0]
    state[3] ^= state[1]
    state[1] ^= state[2]
    state[0] ^= state[3]
    state[2] ^= t
    state[3] = _rotl(state[3], _U64(45))
    return result


@njit(cache=True, nogil=True, inline="always")
def next_double(state):
    """Uniform on [0, 1) from the top 53 bits."""
    return float(next_u64(state) >> _U64(11)) * _INV_2_53


@njit(cache=True, nogil=True, inline="always")
def next_double_pos(state):
    """Uniform on (0, 1]; safe under log()."""
    return (float(next_u64(state) >> _U64(11)) + 1.0) * _INV_2_53


# ---------------------------------------------------------------------------
# Fenwick (binary indexed) tree over per-site rates, 1-indexed storage.
# Weights are integer-valued floats for the default g(k) = k^2, so every
# partial sum below 2^53 is exact and the running total never drifts.
# ---------------------------------------------------------------------------

@njit(cache=True, nogil=True)
def fenwick_build(tree, weights):
    """O(n) build. tree has length n + 1; entry 0 is unused."""
    n = weights.shape[0]
    for i in range(n + 1):
        tree[i] = 0.0
    for i in range(1, n + 1):
        tree[i] += weights[i - 1]
        j = i + (i & (-i))
        if j <= n:
            tree[j] += tree[i]


@njit(cache=True, nogil=True, inline="always")
def fenwick_add(tree, n, site, delta):
    i = site + 1
    while i <= n:
        tree[i] += delta
        i += i & (-i)


@njit(cache=True, nogil=True)
def fenwick_prefix(tree, site):
    """Sum of weights over sites [0, site]."""
    s = 0.0
    i = site + 1
    while i > 0:
        s += tree[i]
        i -= i & (-i)
    return s


@njit(cache=True, nogil=True, inline="always")
def fenwick_search(tree, n, topbit, target):
    """Smallest site index whose cumulative weight exceeds target."""
    idx = 0
    rem = target
    bit = topbit
    while bit > 0:
        nxt = idx + bit
        if nxt <= n and tree[nxt] <= rem:
            idx = nxt
            rem -= tree[nxt]
        bit >>= 1
    return idx  # 0-based site


@njit(cache=True, nogil=True, inline="always")
def _top_bit(n):
    bit = 1
    while (bit << 1) <= n:
        bit <<= 1
    return bit


# ---------------------------------------------------------------------------
# Zero-range event loop.
#
# Site i fires with total rate g(k_i); the mover goes left/right with equal
# probability.  Macroscopic clock: every rate is multiplied by time_scale
# (diffusive scaling L^2).  Boundary codes: 0 periodic wrap; 1 reservoir
# (off-domain jumps destroy the mover, each boundary site gains particles at
# the constant macroscopic rate inj_left / inj_right).
# ---------------------------------------------------------------------------

BC_PERIODIC = 0
BC_RESERVOIR = 1


# fastmath here only: the loop carries no accumulating reductions whose
# order matters, and the compiled binary stays bit-deterministic run to run
@njit(cache=True, nogil=True, fastmath=True)
def zrp_evolve(occ, tree, g_table, state, time_scale, t_now, t_end,
               max_events, bc, inj_left, inj_right, wtot):
    """Advance the lattice to t_end (macroscopic time).

    Returns (t, status, n_events, wtot).  The event whose clock would land
    past t_end is *not* applied; the clock is clamped to t_end.  On GROW the
    triggering event is fully rolled back (occupations, clock, RNG state) so
    the caller can extend g_table and replay deterministically.
    """
    n_sites = occ.shape[0]
    kmax = g_table.shape[0] - 1
    topbit = _top_bit(n_sites)
    inj_total = inj_left + inj_right
    n_events = 0
    while n_events < max_events:
        jump_rate = time_scale * wtot
        total_rate = jump_rate + inj_total
        if total_rate <= 0.0:
            return t_now, ABSORBED, n_events, wtot
        s0 = state[0]
        s1 = state[1]
        s2 = state[2]
        s3 = state[3]
        t_prev = t_now
        dt = -np.log(next_double_pos(state)) / total_rate
        if t_now + dt > t_end:
            return t_end, OK, n_events, wtot
        t_now = t_now + dt
        r = next_double(state) * total_rate
        if r < jump_rate:
            site = fenwick_search(tree, n_sites, topbit, r / time_scale)
            if site >= n_sites:
                site = n_sites - 1
            k_src = occ[site]
            if k_src <= 0:
                # float-edge selection of an empty site; draw again
                continue
            go_right = (next_u64(state) & _U64(1)) == _U64(1)
            dest = site + 1 if go_right else site - 1
            if bc == BC_PERIODIC:
                if dest == n_sites:
                    dest = 0
                elif dest < 0:
                    dest = n_sites - 1
            off_domain = dest < 0 or dest >= n_sites
            if not off_domain and occ[dest] + 1 > kmax:
                state[0] = s0
                state[1] = s1
                state[2] = s2
                state[3] = s3
                return t_prev, GROW, n_events, wtot
            d_src = g_table[k_src - 1] - g_table[k_src]
            occ[site] = k_src - 1
            fenwick_add(tree, n_sites, site, d_src)
            wtot += d_src
            if not off_domain:
                k_dst = occ[dest]
                d_dst = g_table[k_dst + 1] - g_table[k_dst]
                occ[dest] = k_dst + 1
                fenwick_add(tree, n_sites, dest, d_dst)
                wtot += d_dst
        else:
            site = 0 if (r - jump_rate) < inj_left else n_sites - 1
            if occ[site] + 1 > kmax:
                state[0] = s0
                state[1] = s1
                state[2] = s2
                state[3] = s3
                return t_prev, GROW, n_events, wtot
            k = occ[site]
            d = g_table[k + 1] - g_table[k]
            occ[site] = k + 1
            fenwick_add(tree, n_sites, site, d)
            wtot += d
        n_events += 1
    return t_now, MAXEVENTS, n_events, wtot


@njit(cache=True, nogil=True)
def weights_total(occ, g_table):
    s = 0.0
    for i in range(occ.shape[0]):
        s += g_table[occ[i]]
    return s


@njit(cache=True, nogil=True)
def build_rate_tree(tree, occ, g_table):
    n = occ.shape[0]
    for i in range(n + 1):
        tree[i] = 0.0
    for i in range(1, n + 1):
        tree[i] += g_table[occ[i - 1]]
        j = i + (i & (-i))
        if j <= n:
            tree[j] += tree[i]
    return weights_total(occ, g_table)


@njit(cache=True, nogil=True)
def sample_occupations(cdf, state, occ):
    """Draw one occupation per site from row-wise CDF tables (last col 1.0)."""
    n_sites, width = cdf.shape
    for i in range(n_sites):
        u = next_double(state)
        lo = 0
        hi = width - 1
        while lo < hi:
            mid = (lo + hi) >> 1
            if cdf[i, mid] > u:
                hi = mid
            else:
                lo = mid + 1
        occ[i] = lo


@njit(cache=True, nogil=True)
def project_rows(rows, occ, cell_volume, out):
    """out[a] = cell_volume * sum_i occ[i] * rows[a, i]."""
    n_rows, n_sites = rows.shape
    for a in range(n_rows):
        s = 0.0
        for i in range(n_sites):
            s += rows[a, i] * occ[i]
        out[a] = s * cell_volume


@njit(cache=True, nogil=True)
def run_realization(master_seed, profile_index, realization_index,
                    cdf, g_table, basis_rows, cell_volume, time_scale,
                    t_equilibrate, window, bc, inj_left, inj_right,
                    occ_buf, tree_buf, rng_buf, p_start, p_end):
    """One full measurement: sample, equilibrate, project, evolve, project.

    Writes the window-start projections into p_start and the window-end
    projections into p_end.  Returns a status code; on GROW the caller
    extends g_table and calls again with the same indices (the stream is
    reseeded here, so the replay is exact).
    """
    seed_stream(rng_buf, master_seed, profile_index, realization_index)
    sample_occupations(cdf, rng_buf, occ_buf)
    wtot = build_rate_tree(tree_buf, occ_buf, g_table)
    max_ev = np.int64(2 ** 62)
    t, status, _, wtot = zrp_evolve(occ_buf, tree_buf, g_table, rng_buf,
                                    time_scale, 0.0, t_equilibrate, max_ev,
                                    bc, inj_left, inj_right, wtot)
    if status == GROW:
        return GROW
    project_rows(basis_rows, occ_buf, cell_volume, p_start)
    t, status, _, wtot = zrp_evolve(occ_buf, tree_buf, g_table, rng_buf,
                                    time_scale, 0.0, window, max_ev,
                                    bc, inj_left, inj_right, wtot)
    if status == GROW:
        return GROW
    project_rows(basis_rows, occ_buf, cell_volume, p_end)
    return OK
