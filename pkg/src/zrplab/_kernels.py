"""Hot numeric kernels: counter-based RNG, Fenwick tree, and the KMC event loop.

Every kernel here is written once in numba-compatible numpy style. At import
time the module either compiles them with ``numba.njit`` (the default) or
leaves them as interpreted Python operating on numpy scalars. The fallback is
selected by setting the environment variable ``ZRPLAB_DISABLE_JIT=1`` before
the first import; both paths produce bit-identical trajectories because all
randomness flows through an explicit Philox2x64-10 generator on uint64
arithmetic (which wraps identically in both worlds).

``benchmarks/bench_kernels.py`` times the two backends against each other.
"""

import os

import numpy as np

DISABLE_JIT_ENV = "ZRPLAB_DISABLE_JIT"

JIT_ENABLED = os.environ.get(DISABLE_JIT_ENV, "0").lower() not in ("1", "true", "yes")
if JIT_ENABLED:
    try:
        from numba import njit as _numba_njit
    except ImportError:  # pragma: no cover - numba is a declared dependency
        JIT_ENABLED = False

if JIT_ENABLED:
    def _maybe_jit(func):
        return _numba_njit(cache=True, nogil=True)(func)
else:
    def _maybe_jit(func):
        return func


U64 = np.uint64
_MASK32 = U64(0xFFFFFFFF)
_PHILOX_M = U64(0xD2B74407B1CE6E93)
_PHILOX_W = U64(0x9E3779B97F4A7C15)
_INV53 = 1.0 / 9007199254740992.0  # 2**-53

# Event loop consumes two Philox pairs per event; stream tags keep the event
# stream and the per-site initial-sampling stream disjoint within a replica.
STREAM_EVENTS = 0
STREAM_INIT = 1
_REBUILD_EVERY = 1 << 20


@_maybe_jit
def philox_pair(c0, c1, key):
    """Philox2x64-10: two uint64 words from counter (c0, c1) and a 64-bit key."""
    for _ in range(10):
        x0 = c0 & _MASK32
        x1 = c0 >> U64(32)
        y0 = _PHILOX_M & _MASK32
        y1 = _PHILOX_M >> U64(32)
        p00 = x0 * y0
        p01 = x0 * y1
        p10 = x1 * y0
        p11 = x1 * y1
        mid = (p00 >> U64(32)) + (p01 & _MASK32) + (p10 & _MASK32)
        lo = (p00 & _MASK32) | ((mid & _MASK32) << U64(32))
        hi = p11 + (p01 >> U64(32)) + (p10 >> U64(32)) + (mid >> U64(32))
        c0 = hi ^ key ^ c1
        c1 = lo
        key = key + _PHILOX_W
    return c0, c1


def philox_pair_vec(c0, c1, key):
    """Vectorised twin of :func:`philox_pair` over an array of first counters.

    Pure numpy on uint64 arrays (array arithmetic wraps silently), used by the
    product-measure samplers so that initial data never depends on the JIT
    backend.
    """
    c0 = np.asarray(c0, dtype=np.uint64).copy()
    c1 = np.broadcast_to(np.uint64(c1), c0.shape).copy()
    key = np.broadcast_to(np.uint64(key), c0.shape).copy()
    for _ in range(10):
        x0 = c0 & _MASK32
        x1 = c0 >> U64(32)
        y0 = _PHILOX_M & _MASK32
        y1 = _PHILOX_M >> U64(32)
        p00 = x0 * y0
        p01 = x0 * y1
        p10 = x1 * y0
        p11 = x1 * y1
        mid = (p00 >> U64(32)) + (p01 & _MASK32) + (p10 & _MASK32)
        lo = (p00 & _MASK32) | ((mid & _MASK32) << U64(32))
        hi = p11 + (p01 >> U64(32)) + (p10 >> U64(32)) + (mid >> U64(32))
        c0, c1 = hi ^ key ^ c1, lo
        key = key + _PHILOX_W
    return c0, c1


def to_uniform(words):
    """Map uint64 words to doubles in (0, 1]."""
    return ((np.asarray(words, dtype=np.uint64) >> U64(11)) + U64(1)) * _INV53


def key_from_seed(seed):
    """Derive the Philox key from a user seed (one splitmix64 scramble)."""
    z = U64(seed) + U64(0x9E3779B97F4A7C15)
    z = (z ^ (z >> U64(30))) * U64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> U64(27))) * U64(0x94D049BB133111EB)
    return z ^ (z >> U64(31))


def stream_counter(replica, tag):
    """Second counter word encoding (replica, stream tag)."""
    if replica < 0 or replica >= (1 << 59):
        raise ValueError("replica index out of range")
    if tag < 0 or tag >= 16:
        raise ValueError("stream tag out of range")
    return U64(replica) * U64(16) + U64(tag)


@_maybe_jit
def fenwick_build(vals):
    n = vals.shape[0]
    tree = np.zeros(n + 1, np.float64)
    for i in range(1, n + 1):
        tree[i] += vals[i - 1]
        j = i + (i & (-i))
        if j <= n:
            tree[j] += tree[i]
    return tree


@_maybe_jit
def fenwick_add(tree, idx, delta):
    n = tree.shape[0] - 1
    j = idx + 1
    while j <= n:
        tree[j] += delta
        j += j & (-j)


@_maybe_jit
def fenwick_find(tree, target):
    """Smallest 0-based index whose prefix sum exceeds ``target``."""
    n = tree.shape[0] - 1
    bit = 1
    while (bit << 1) <= n:
        bit <<= 1
    pos = 0
    rem = target
    while bit > 0:
        nxt = pos + bit
        if nxt <= n and tree[nxt] < rem:
            pos = nxt
            rem -= tree[nxt]
        bit >>= 1
    if pos >= n:
        pos = n - 1
    return pos


@_maybe_jit
def _kmc_loop(eta, g1tab, g2tab, nbr, snap_times, snaps, key, c1_events):
    """Run the two-species ZRP event loop up to the last snapshot time.

    eta        : int64 (2, V) occupation numbers, modified in place
    g1tab/g2tab: float64 (K1+1, K2+1) jump-rate tables
    nbr        : int64 (V, 2d) periodic neighbour table
    snap_times : float64 (S,) strictly increasing microscopic times; the state
                 recorded at each time is the cadlag state (all events with
                 time <= target applied)
    snaps      : int64 (S, 2, V) output buffer
    Returns (event_count, t_final, frozen, max_drift) where max_drift is the
    largest relative disagreement between the running total intensity and a
    full recomputation (checked at every rebuild).
    """
    nsites = eta.shape[1]
    ndirs = nbr.shape[1]
    nsnaps = snap_times.shape[0]

    rates = np.empty(nsites, np.float64)
    for x in range(nsites):
        k1 = eta[0, x]
        k2 = eta[1, x]
        rates[x] = g1tab[k1, k2] + g2tab[k1, k2]
    tree = fenwick_build(rates)
    total = 0.0
    for x in range(nsites):
        total += rates[x]

    t = 0.0
    t_end = snap_times[nsnaps - 1]
    snap_ptr = 0
    events = U64(0)
    counter = U64(0)
    max_drift = 0.0
    frozen = False

    while snap_ptr < nsnaps:
        if total <= 1e-300:
            frozen = True
            break
        w0, w1 = philox_pair(counter, c1_events, key)
        counter += U64(1)
        u_wait = (float(w0 >> U64(11)) + 1.0) * _INV53
        u_site = (float(w1 >> U64(11)) + 1.0) * _INV53
        t_next = t - np.log(u_wait) / total

        while snap_ptr < nsnaps and snap_times[snap_ptr] < t_next:
            snaps[snap_ptr, :, :] = eta
            snap_ptr += 1
        if snap_ptr >= nsnaps:
            t = t_end
            break

        x = fenwick_find(tree, u_site * total)
        k1 = eta[0, x]
        k2 = eta[1, x]
        rx = g1tab[k1, k2] + g2tab[k1, k2]
        if rx <= 0.0:
            # float tail of the Fenwick search landed on an empty site
            for z in range(nsites):
                if rates[z] > 0.0:
                    x = z
                    k1 = eta[0, x]
                    k2 = eta[1, x]
                    rx = rates[x]
                    break
        w0, w1 = philox_pair(counter, c1_events, key)
        counter += U64(1)
        u_species = (float(w0 >> U64(11)) + 1.0) * _INV53
        u_dir = (float(w1 >> U64(11)) + 1.0) * _INV53
        if u_species * rx <= g1tab[k1, k2]:
            species = 0
        else:
            species = 1
        d = int(u_dir * ndirs)
        if d >= ndirs:
            d = ndirs - 1
        y = nbr[x, d]

        eta[species, x] -= 1
        eta[species, y] += 1
        new_rx = g1tab[eta[0, x], eta[1, x]] + g2tab[eta[0, x], eta[1, x]]
        old_ry = rates[y]
        new_ry = g1tab[eta[0, y], eta[1, y]] + g2tab[eta[0, y], eta[1, y]]
        fenwick_add(tree, x, new_rx - rates[x])
        total += new_rx - rates[x]
        rates[x] = new_rx
        fenwick_add(tree, y, new_ry - old_ry)
        total += new_ry - old_ry
        rates[y] = new_ry

        t = t_next
        events += U64(1)
        if events % U64(_REBUILD_EVERY) == U64(0):
            fresh = 0.0
            for z in range(nsites):
                r = g1tab[eta[0, z], eta[1, z]] + g2tab[eta[0, z], eta[1, z]]
                rates[z] = r
                fresh += r
            drift = abs(total - fresh) / max(fresh, 1e-300)
            if drift > max_drift:
                max_drift = drift
            tree = fenwick_build(rates)
            total = fresh

    if frozen:
        while snap_ptr < nsnaps:
            snaps[snap_ptr, :, :] = eta
            snap_ptr += 1

    return np.int64(events), t, frozen, max_drift


def kmc_run(eta, g1tab, g2tab, nbr, snap_times, seed, replica):
    """Entry point wrapping :func:`_kmc_loop` with RNG keying and a py-mode
    errstate guard (interpreted uint64 scalars warn on wraparound)."""
    snap_times = np.asarray(snap_times, dtype=np.float64)
    if snap_times.ndim != 1 or snap_times.size == 0:
        raise ValueError("need at least one snapshot time")
    if np.any(np.diff(snap_times) <= 0) or snap_times[0] < 0:
        raise ValueError("snapshot times must be nonnegative and strictly increasing")
    snaps = np.empty((snap_times.size, 2, eta.shape[1]), np.int64)
    key = key_from_seed(seed)
    c1 = stream_counter(replica, STREAM_EVENTS)
    if JIT_ENABLED:
        out = _kmc_loop(eta, g1tab, g2tab, nbr, snap_times, snaps, key, c1)
    else:
        with np.errstate(over="ignore"):
            out = _kmc_loop(eta, g1tab, g2tab, nbr, snap_times, snaps, key, c1)
    events, t_final, frozen, max_drift = out
    return snaps, int(events), float(t_final), bool(frozen), float(max_drift)


def neighbor_table(side, dim):
    """Periodic nearest-neighbour table on the discrete torus, (V, 2*dim)."""
    if side < 1 or dim < 1:
        raise ValueError("side and dim must be positive")
    nsites = side**dim
    idx = np.arange(nsites)
    coords = np.empty((dim, nsites), dtype=np.int64)
    rem = idx.copy()
    for axis in range(dim - 1, -1, -1):
        coords[axis] = rem % side
        rem //= side
    strides = side ** np.arange(dim - 1, -1, -1)
    nbr = np.empty((nsites, 2 * dim), dtype=np.int64)
    for axis in range(dim):
        for j, shift in enumerate((1, -1)):
            moved = coords.copy()
            moved[axis] = (coords[axis] + shift) % side
            nbr[:, 2 * axis + j] = (moved * strides[:, None]).sum(axis=0)
    return nbr
