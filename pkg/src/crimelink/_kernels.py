"""Compiled inner loops for the Monte-Carlo temporal transforms."""

import numpy as np
from numba import njit

GAMMA = np.uint64(0x9E3779B97F4A7C15)
M1 = np.uint64(0xBF58476D1CE4E5B9)
M2 = np.uint64(0x94D049BB133111EB)
_SCALE = 1.0 / 9007199254740992.0  # 2**-53


@njit(cache=True, inline="always")
def _mix(z):
    z = (z ^ (z >> np.uint64(30))) * M1
    z = (z ^ (z >> np.uint64(27))) * M2
    return z ^ (z >> np.uint64(31))


@njit(cache=True, inline="always")
def _wrap(v, period):
    return v - period * np.floor(v / period)


@njit(cache=True)
def temporal_mc(te_lo, tl_lo, te_hi, tl_hi, keys, n_draws, out):
    """Fill ``out[p] = (E|dt| days, E tod hours, E dow days)`` for every pair ``p``.

    Draw ``j`` of the lower-id crime uses counter ``2j+1`` of the pair's
    splitmix64 stream and the higher-id crime uses ``2j+2``.
    """
    for p in range(te_lo.shape[0]):
        k = keys[p]
        wl = tl_lo[p] - te_lo[p]
        wh = tl_hi[p] - te_hi[p]
        s0 = 0.0
        s1 = 0.0
        s2 = 0.0
        for j in range(n_draws):
            c = np.uint64(2 * j + 1)
            ua = np.float64(_mix(k + c * GAMMA) >> np.uint64(11)) * _SCALE
            ub = np.float64(_mix(k + (c + np.uint64(1)) * GAMMA) >> np.uint64(11)) * _SCALE
            ta = te_lo[p] + ua * wl
            tb = te_hi[p] + ub * wh
            s0 += abs(ta - tb)
            d = abs(_wrap(ta, 24.0) - _wrap(tb, 24.0))
            s1 += min(d, 24.0 - d)
            d = abs(_wrap(ta / 24.0, 7.0) - _wrap(tb / 24.0, 7.0))
            s2 += min(d, 7.0 - d)
        out[p, 0] = s0 / n_draws / 24.0
        out[p, 1] = s1 / n_draws
        out[p, 2] = s2 / n_draws
