"""Compiled inner loops for the variation module.

Distances are Euclidean norms summed component by component in order, and
powers go through ``math.pow``, so results are reproducible operation for
operation.
"""

from __future__ import annotations

import math

import numba as nb
import numpy as np


@nb.njit(cache=True)
def _dist(x, i, j):
    acc = 0.0
    for c in range(x.shape[1]):
        diff = x[j, c] - x[i, c]
        acc += diff * diff
    return math.sqrt(acc)


@nb.njit(cache=True)
def _area_norm(x, run, i, j):
    # X_ij = X_0j - X_0i - (x_i - x_0) (x) (x_j - x_i)
    acc = 0.0
    d = x.shape[1]
    for l in range(d):
        for k in range(d):
            v = run[j, l, k] - run[i, l, k] - (x[i, l] - x[0, l]) * (x[j, k] - x[i, k])
            acc += v * v
    return math.sqrt(acc)


@nb.njit(cache=True)
def pvar_dp(x, i0, i1, p):
    """Best partition sums ``V[k]`` of ``[i0, i0 + k]``."""
    v = np.zeros(i1 - i0 + 1)
    for j in range(i0 + 1, i1 + 1):
        best = -1.0
        for k in range(i0, j):
            cand = v[k - i0] + math.pow(_dist(x, k, j), p)
            if cand > best:
                best = cand
        v[j - i0] = best
    return v


@nb.njit(cache=True)
def area_pvar_dp(x, run, i0, i1, q):
    v = np.zeros(i1 - i0 + 1)
    for j in range(i0 + 1, i1 + 1):
        best = -1.0
        for k in range(i0, j):
            cand = v[k - i0] + math.pow(_area_norm(x, run, k, j), q)
            if cand > best:
                best = cand
        v[j - i0] = best
    return v


@nb.njit(cache=True)
def holder_max(x, t, i0, i1, alpha):
    best = 0.0
    for j in range(i0 + 1, i1 + 1):
        for k in range(i0, j):
            r = _dist(x, k, j) / math.pow(t[j] - t[k], alpha)
            if r > best:
                best = r
    return best


@nb.njit(cache=True)
def greedy_scan(x, run, t, use_area, holder, expo, gamma):
    """Greedy blocks. ``holder`` selects the Hölder functional with exponent
    ``expo``; otherwise the p-variation one with ``p = expo`` (plus the area
    term when ``use_area``).

    Returns (indices, block values, flagged starts).
    """
    n = x.shape[0] - 1
    idx = [0]
    vals = [0.0]
    flagged = [0]
    vals.pop()
    flagged.pop()
    v = np.zeros(n + 1)
    va = np.zeros(n + 1)
    while idx[-1] < n:
        s = idx[-1]
        semi = 0.0
        last = -1.0
        cur = 0.0
        j = s + 1
        while j <= n:
            if holder:
                for k in range(s, j):
                    r = _dist(x, k, j) / math.pow(t[j] - t[k], expo)
                    if r > semi:
                        semi = r
                cur = math.pow(t[j] - t[s], expo) + semi
            else:
                best = -1.0
                for k in range(s, j):
                    cand = v[k - s] + math.pow(_dist(x, k, j), expo)
                    if cand > best:
                        best = cand
                v[j - s] = best
                total = best
                if use_area:
                    besta = -1.0
                    for k in range(s, j):
                        cand = va[k - s] + math.pow(_area_norm(x, run, k, j), expo / 2.0)
                        if cand > besta:
                            besta = cand
                    va[j - s] = besta
                    total += besta
                cur = math.pow(total, 1.0 / expo)
            if cur >= gamma:
                break
            last = cur
            j += 1
        if j > n:
            idx.append(n)
            vals.append(last)
        elif j == s + 1:
            idx.append(j)
            vals.append(cur)
            flagged.append(s)
        else:
            idx.append(j - 1)
            vals.append(last)
    return np.array(idx), np.array(vals), np.array(flagged, dtype=np.int64)
