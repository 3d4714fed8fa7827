"""Compiled inner loops.  Results from here are always re-certified in numpy."""
from __future__ import annotations

import numpy as np
from numba import njit

FNV_OFFSET = np.uint64(0xCBF29CE484222325)
FNV_PRIME = np.uint64(0x100000001B3)


@njit(cache=True)
def bounded_search_batch(arr, qs, lo, hi):
    """Per query: largest r in [lo, hi] with r == lo or arr[r-1] <= q."""
    n = qs.size
    out = np.empty(n, np.int64)
    comps = np.empty(n, np.int64)
    for i in range(n):
        a = lo[i]
        b = hi[i]
        q = qs[i]
        c = 0
        while a < b:
            mid = (a + b + 1) // 2
            c += 1
            if arr[mid - 1] <= q:
                a = mid
            else:
                b = mid - 1
        out[i] = a
        comps[i] = c
    return out, comps


@njit(cache=True)
def fnv1a64(values):
    h = FNV_OFFSET
    for v in values:
        x = np.uint64(v)
        for _ in range(8):
            h ^= x & np.uint64(0xFF)
            h *= FNV_PRIME
            x >>= np.uint64(8)
    return h


@njit(cache=True)
def _lt(adx, ady, bdx, bdy):
    # slope a < slope b for direction vectors whose dx share a sign
    return ady * bdx < adx * bdy


@njit(cache=True)
def _segment_fit(r0x, r0y, r1x, r1y, r2x, r2y, r3x, r3y, count, y_first):
    if count == 1:
        return 0.0, y_first
    s1 = (r2y - r0y) / (r2x - r0x)
    s2 = (r3y - r1y) / (r3x - r1x)
    slope = 0.5 * (s1 + s2)
    if s1 == s2:
        icpt = 0.5 * ((r0y - slope * r0x) + (r1y - slope * r1x))
    else:
        ix = (r1y - r0y + s1 * r0x - s2 * r1x) / (s1 - s2)
        iy = r0y + s1 * (ix - r0x)
        icpt = iy - slope * ix
    return slope, icpt


@njit(cache=True)
def pla_cover(xs, ys, lo, hi, eps, max_segments):
    """Greedy maximal +-eps segments over points [lo, hi) via the hull method.

    Coordinates are taken relative to each segment's first point.  Returns
    start indices and (slope, intercept) pairs, the intercept being the
    predicted rank at the first point.  Stops early, returning what it has,
    once more than ``max_segments`` segments are needed.
    """
    n = hi - lo
    starts = np.empty(n, np.int64)
    slopes = np.empty(n, np.float64)
    icpts = np.empty(n, np.float64)
    ux = np.empty(n, np.float64)
    uy = np.empty(n, np.float64)
    lx = np.empty(n, np.float64)
    ly = np.empty(n, np.float64)
    nseg = 0
    i = lo
    while i < hi:
        if nseg >= max_segments:
            nseg += 1
            break
        start = i
        x0 = xs[start]
        y0 = ys[start]
        count = 0
        ulen = 0
        llen = 0
        us = 0
        ls = 0
        r0x = r0y = r1x = r1y = r2x = r2y = r3x = r3y = 0.0
        while i < hi:
            x = float(xs[i] - x0)
            y = float(ys[i] - y0)
            p1x = x
            p1y = y + eps
            p2x = x
            p2y = y - eps
            if count == 0:
                r0x, r0y, r1x, r1y = p1x, p1y, p2x, p2y
                ux[0] = p1x
                uy[0] = p1y
                lx[0] = p2x
                ly[0] = p2y
                ulen = 1
                llen = 1
                us = 0
                ls = 0
            elif count == 1:
                r2x, r2y, r3x, r3y = p2x, p2y, p1x, p1y
                ux[ulen] = p1x
                uy[ulen] = p1y
                ulen += 1
                lx[llen] = p2x
                ly[llen] = p2y
                llen += 1
            else:
                s1x = r2x - r0x
                s1y = r2y - r0y
                s2x = r3x - r1x
                s2y = r3y - r1y
                if _lt(p1x - r2x, p1y - r2y, s1x, s1y) or _lt(s2x, s2y, p2x - r3x, p2y - r3y):
                    break
                if _lt(p1x - r1x, p1y - r1y, s2x, s2y):
                    bx = lx[ls] - p1x
                    by = ly[ls] - p1y
                    bi = ls
                    for k in range(ls + 1, llen):
                        vx = lx[k] - p1x
                        vy = ly[k] - p1y
                        if _lt(bx, by, vx, vy):
                            break
                        bx = vx
                        by = vy
                        bi = k
                    r1x, r1y = lx[bi], ly[bi]
                    r3x, r3y = p1x, p1y
                    ls = bi
                    end = ulen
                    while end >= us + 2:
                        ox, oy = ux[end - 2], uy[end - 2]
                        ax, ay = ux[end - 1], uy[end - 1]
                        cr = (ax - ox) * (p1y - oy) - (ay - oy) * (p1x - ox)
                        if cr <= 0:
                            end -= 1
                        else:
                            break
                    ux[end] = p1x
                    uy[end] = p1y
                    ulen = end + 1
                if _lt(s1x, s1y, p2x - r0x, p2y - r0y):
                    bx = ux[us] - p2x
                    by = uy[us] - p2y
                    bi = us
                    for k in range(us + 1, ulen):
                        vx = ux[k] - p2x
                        vy = uy[k] - p2y
                        if _lt(vx, vy, bx, by):
                            break
                        bx = vx
                        by = vy
                        bi = k
                    r0x, r0y = ux[bi], uy[bi]
                    r2x, r2y = p2x, p2y
                    us = bi
                    end = llen
                    while end >= ls + 2:
                        ox, oy = lx[end - 2], ly[end - 2]
                        ax, ay = lx[end - 1], ly[end - 1]
                        cr = (ax - ox) * (p2y - oy) - (ay - oy) * (p2x - ox)
                        if cr >= 0:
                            end -= 1
                        else:
                            break
                    lx[end] = p2x
                    ly[end] = p2y
                    llen = end + 1
            count += 1
            i += 1
        slope, icpt = _segment_fit(r0x, r0y, r1x, r1y, r2x, r2y, r3x, r3y, count, 0.0)
        starts[nseg] = start
        slopes[nseg] = max(slope, 0.0)
        icpts[nseg] = icpt + float(y0)
        nseg += 1
    return starts[:nseg], slopes[:nseg], icpts[:nseg]


@njit(cache=True)
def spline_knots(xs, ys, eps):
    """Greedy spline corridor: knot indices such that linear interpolation
    between consecutive knots stays within eps of every point."""
    n = xs.size
    knots = np.empty(n, np.int64)
    k = 0
    knots[k] = 0
    k += 1
    if n == 1:
        return knots[:1]
    base = 0
    upper = np.inf
    lower = -np.inf
    i = 1
    while i < n:
        dx = float(xs[i] - xs[base])
        dy = float(ys[i] - ys[base])
        s = dy / dx
        if s > upper or s < lower:
            base = i - 1
            knots[k] = base
            k += 1
            upper = np.inf
            lower = -np.inf
            continue
        up = (dy + eps) / dx
        lo = (dy - eps) / dx
        if up < upper:
            upper = up
        if lo > lower:
            lower = lo
        i += 1
    if knots[k - 1] != n - 1:
        knots[k] = n - 1
        k += 1
    return knots[:k]
