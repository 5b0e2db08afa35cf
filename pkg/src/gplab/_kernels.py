"""Compiled inner loops for the sequential partition sampler.

State is carried in flat arrays so that a single jitted call can advance a
partition by many steps without touching Python objects:

``sizes[0:k]``
    block sizes in order of creation.
``members[0:n-k]``
    block index ``i`` repeated ``sizes[i] - 1`` times; a uniform draw from it
    selects a block with probability proportional to ``sizes[i] - 1``.
``counts[j]``
    number of blocks of size ``j``.
``ints = [n, k, len(members)]``
``w``
    normalized (linear-scale) weights of the tilted mixing measure on the
    fixed nodes ``theta``.

Each step consumes exactly three uniforms, so trajectories do not depend on
how the work is chunked.
"""

import numpy as np
from numba import njit

WEIGHT_CORRUPTION = -2
PROB_TOL = 1e-12

# NaN checks must survive, so no 'nnan'/'ninf'
_FM = {"reassoc", "contract", "arcp"}


@njit(cache=True, nogil=True, fastmath=_FM)
def _ratios(theta, w, n, k, alpha, q):
    """P(new block) and the common existing-block factor; fills ``q``."""
    m = theta.shape[0]
    if m == 1:
        denom = theta[0] + n
        return (theta[0] + k * alpha) / denom, 1.0 / denom
    p_new = 0.0
    r_ex = 0.0
    for j in range(m):
        q[j] = w[j] / (theta[j] + n)
        r_ex += q[j]
        p_new += q[j] * (theta[j] + k * alpha)
    return p_new, r_ex


@njit(cache=True, nogil=True)
def _choose(members, n, k, mlen, alpha, p_new, u0, u1, u2):
    """Block joined by the next element; ``-1`` means a new block."""
    if u0 < p_new:
        return -1
    # (|U_i| - alpha) = (|U_i| - 1) + (1 - alpha)
    if u1 * (n - k * alpha) < n - k:
        return members[int(u2 * mlen)]
    return int(u2 * k)


@njit(cache=True, nogil=True, fastmath=_FM)
def advance(sizes, members, counts, theta, w, ints, alpha, u):
    """Run ``u.shape[0]`` sampler steps in place.

    Returns the index of the block joined at the last step (``-1`` for a new
    block), or ``WEIGHT_CORRUPTION`` if a predictive probability left [0, 1].
    """
    n = ints[0]
    k = ints[1]
    mlen = ints[2]
    m = theta.shape[0]
    q = np.empty(m)
    last = 0
    for t in range(u.shape[0]):
        p_new, r_ex = _ratios(theta, w, n, k, alpha, q)
        if p_new < -PROB_TOL or p_new > 1.0 + PROB_TOL or p_new != p_new:
            last = WEIGHT_CORRUPTION
            break
        b = _choose(members, n, k, mlen, alpha, p_new, u[t, 0], u[t, 1], u[t, 2])
        new_block = b == -1
        if new_block:
            sizes[k] = 1
            counts[1] += 1
        else:
            s = sizes[b]
            counts[s] -= 1
            counts[s + 1] += 1
            sizes[b] = s + 1
            members[mlen] = b
            mlen += 1
        last = b
        if m > 1:
            # divide by the realized branch probability, then by the exact
            # sum so rounding cannot accumulate
            tot = 0.0
            if new_block:
                inv = 1.0 / p_new
                for j in range(m):
                    w[j] = q[j] * (theta[j] + k * alpha) * inv
                    tot += w[j]
            else:
                inv = 1.0 / r_ex
                for j in range(m):
                    w[j] = q[j] * inv
                    tot += w[j]
            inv = 1.0 / tot
            for j in range(m):
                w[j] *= inv
        if new_block:
            k += 1
        n += 1
    ints[0] = n
    ints[1] = k
    ints[2] = mlen
    return last


@njit(cache=True, nogil=True)
def draw_next(members, theta, w, ints, alpha, u, out):
    """Independent draws of the next assignment from a frozen state."""
    q = np.empty(theta.shape[0])
    n, k, mlen = ints[0], ints[1], ints[2]
    p_new, _ = _ratios(theta, w, n, k, alpha, q)
    for t in range(u.shape[0]):
        out[t] = _choose(members, n, k, mlen, alpha, p_new, u[t, 0], u[t, 1], u[t, 2])


@njit(cache=True, nogil=True)
def sample_labels(theta, w0, alpha, n, u, out):
    """Draw ``out.shape[0]`` independent partitions of ``[n]``.

    Row ``r`` of ``out`` receives the restricted growth string of replicate
    ``r`` (label of the block containing each element, blocks numbered by
    their least element). ``u`` has shape ``(reps, n - 1, 3)``.
    """
    m = theta.shape[0]
    sizes = np.zeros(n, dtype=np.int64)
    members = np.zeros(n, dtype=np.int64)
    counts = np.zeros(n + 2, dtype=np.int64)
    ints = np.zeros(3, dtype=np.int64)
    w = np.empty(m)
    for r in range(out.shape[0]):
        sizes[:] = 0
        counts[:] = 0
        sizes[0] = 1
        counts[1] = 1
        ints[0] = 1
        ints[1] = 1
        ints[2] = 0
        w[:] = w0
        out[r, 0] = 0
        for t in range(n - 1):
            b = advance(sizes, members, counts, theta, w, ints, alpha, u[r, t:t + 1])
            if b == WEIGHT_CORRUPTION:
                return WEIGHT_CORRUPTION
            out[r, t + 1] = ints[1] - 1 if b == -1 else b
    return 0
