"""Compiled per-axis lower-envelope-of-parabolas passes.

``envelope_lines`` computes, for a batch of 1-D slots,

    out[l, p] = min_q  f[l, q] + c * (x[p] - x[q])**2

together with the minimizing index ``q`` per output slot, in time linear
in the slot length.  Entries of ``f`` equal to +inf are treated as absent
(out-of-domain); a fully absent line yields +inf outputs and argmin -1.

The result is bitwise independent of any batching because each line is
processed independently and deterministically.
"""

from __future__ import annotations

import numpy as np
from numba import njit

INF = np.inf


@njit(cache=True)
def _envelope_line(f, x, c, out, arg, v_idx, z):
    L = f.shape[0]
    k = -1
    for q in range(L):
        fq = f[q]
        if fq == INF:
            continue
        if k < 0:
            k = 0
            v_idx[0] = q
            z[0] = -INF
            z[1] = INF
            continue
        # Intersection abscissa of parabola q with the rightmost envelope
        # parabola; pop envelope parabolas that q dominates.  x is strictly
        # increasing and f finite here, so s is always finite and the loop
        # stops at the latest at z[0] = -inf.
        p = v_idx[k]
        s = ((fq + c * x[q] * x[q]) - (f[p] + c * x[p] * x[p])) / (2.0 * c * (x[q] - x[p]))
        while s <= z[k]:
            k -= 1
            p = v_idx[k]
            s = ((fq + c * x[q] * x[q]) - (f[p] + c * x[p] * x[p])) / (2.0 * c * (x[q] - x[p]))
        k += 1
        v_idx[k] = q
        z[k] = s
        z[k + 1] = INF
    if k < 0:
        for p in range(L):
            out[p] = INF
            arg[p] = -1
        return
    j = 0
    for p in range(L):
        while z[j + 1] < x[p]:
            j += 1
        q = v_idx[j]
        d = x[p] - x[q]
        out[p] = f[q] + c * d * d
        arg[p] = q


@njit(cache=True)
def envelope_lines(f2d, x, c):
    """Apply the 1-D envelope pass to every row of ``f2d``.

    Returns ``(out, arg)`` with the same shape as ``f2d``.
    """
    nlines, L = f2d.shape
    out = np.empty((nlines, L), dtype=np.float64)
    arg = np.empty((nlines, L), dtype=np.int64)
    v_idx = np.empty(L, dtype=np.int64)
    z = np.empty(L + 1, dtype=np.float64)
    for l in range(nlines):
        _envelope_line(f2d[l], x, c, out[l], arg[l], v_idx, z)
    return out, arg
