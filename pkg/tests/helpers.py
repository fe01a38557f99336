"""Shared generators and independent re-implementations used as test oracles.

The oracles here deliberately re-derive results through a different code
path than the library (literal loops, direct summation) so that agreement
is evidence, not tautology.
"""

import numpy as np


def random_probs(rng, k):
    """A random probability vector with continuous entries (no exact ties)."""
    v = rng.dirichlet(np.ones(k))
    return v / v.sum()


def unimodal_probs(rng, k):
    """Non-decreasing up to a random peak, non-increasing after it."""
    vals = np.sort(rng.exponential(size=k))[::-1]
    peak = int(rng.integers(k))
    arr = np.empty(k)
    arr[peak] = vals[0]
    lo = hi = peak
    for v in vals[1:]:
        if lo > 0 and (hi == k - 1 or rng.random() < 0.5):
            lo -= 1
            arr[lo] = v
        else:
            hi += 1
            arr[hi] = v
    return arr / arr.sum()


def greedy_loop_oracle(probs, lam):
    """Literal greedy expansion: seed the argmax, absorb the heavier in-range
    neighbor while the running mass stays <= lam. Returns (lo, hi)."""
    f = np.asarray(probs, dtype=float)
    f = f / float(f.sum())
    k = f.shape[0]
    lo = hi = int(np.argmax(f))
    q = float(f[lo])
    while q <= lam and (lo > 0 or hi < k - 1):
        left = f[lo - 1] if lo > 0 else -1.0
        right = f[hi + 1] if hi < k - 1 else -1.0
        if left >= right:
            lo -= 1
            q += float(f[lo])
        else:
            hi += 1
            q += float(f[hi])
    return lo, hi


def exact_enumeration_oracle(probs, lam):
    """Enumerate every contiguous interval with direct summation and apply
    the width / mass / left-endpoint preference explicitly. Returns (lo, hi);
    falls back to the full range when no interval reaches lam."""
    f = np.asarray(probs, dtype=float)
    f = f / float(f.sum())
    k = f.shape[0]
    best = None
    for lo in range(k):
        for hi in range(lo, k):
            mass = 0.0
            for j in range(lo, hi + 1):
                mass += float(f[j])
            if mass >= lam:
                cand = (hi - lo, -mass, lo)
                if best is None or cand < best:
                    best = cand
    if best is None:
        return 0, k - 1
    return best[2], best[2] + best[0]


def interval_mass(probs, lo, hi):
    f = np.asarray(probs, dtype=float)
    f = f / float(f.sum())
    q = 0.0
    for j in range(lo, hi + 1):
        q += float(f[j])
    return q
