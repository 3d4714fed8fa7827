"""Affine pieces over the global control curve, with replayed certificates.

Every engine answers a query the same way: pick a piece, clamp the key into
the piece's control range, predict ``fp = floor(icpt + slope*(q - x0))`` and
search ``[fp + emin, fp + emax]`` intersected with the piece's rank range.
``emin``/``emax`` are measured by replaying the exact float expression used
at lookup time on every control point, so the window is sound for control
points by construction.  The prediction is monotone in ``q`` (slope >= 0)
and the rank is constant between consecutive control keys, so soundness
extends to every key in the piece.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .._kernels import pla_cover, spline_knots
from ..core import KeySet

SEGMENT_BYTES = 24  # first key + slope + intercept


def control_arrays(keyset: KeySet) -> tuple[np.ndarray, np.ndarray]:
    """Control keys from 0 to the largest stored key, with their ranks."""
    keys = keyset.keys
    before = keys[keys > 0] - np.uint64(1)
    cx = np.unique(np.concatenate([np.zeros(1, np.uint64), keys, before]))
    cy = np.searchsorted(keys, cx, side="right").astype(np.int64)
    return cx, cy


@dataclass
class Pieces:
    start: np.ndarray  # index of the first control point (global)
    stop: np.ndarray  # one past the last control point
    x0: np.ndarray
    xmax: np.ndarray
    slope: np.ndarray
    icpt: np.ndarray
    emin: np.ndarray
    emax: np.ndarray
    rlo: np.ndarray
    rhi: np.ndarray
    empty: np.ndarray  # bool: no predictor, window is the whole rank range

    @property
    def count(self) -> int:
        return int(self.start.size)

    @property
    def radius(self) -> np.ndarray:
        """Certified radius around the integer prediction."""
        return np.maximum(-self.emin, self.emax)

    @property
    def first(self) -> np.ndarray:
        """Routing key of each piece; the first piece starts at zero."""
        f = self.x0.copy()
        if f.size:
            f[0] = 0
        return f

    @staticmethod
    def concat(parts: list["Pieces"]) -> "Pieces":
        names = Pieces.__dataclass_fields__
        return Pieces(**{k: np.concatenate([getattr(p, k) for p in parts]) for k in names})


def predict(slope, icpt, x0, xmax, q):
    """Vectorized integer prediction; the scalar path mirrors this exactly."""
    qc = np.minimum(np.maximum(q, x0), xmax)
    return np.floor(icpt + slope * (qc - x0).astype(np.float64)).astype(np.int64)


def _replay(cx, cy, start, stop, slope, icpt):
    lens = stop - start
    seg = np.repeat(np.arange(start.size), lens)
    idx = np.arange(int(start[0]), int(stop[-1]))
    x0, xmax = cx[start], cx[stop - 1]
    fp = predict(slope[seg], icpt[seg], x0[seg], xmax[seg], cx[idx])
    offs = start - start[0]
    err = cy[idx] - fp
    cont = cy[idx] - (icpt[seg] + slope[seg] * (cx[idx] - x0[seg]).astype(np.float64))
    return np.minimum.reduceat(err, offs), np.maximum.reduceat(err, offs), cont, offs


def align(cx: np.ndarray, cy: np.ndarray, start: np.ndarray, stop: np.ndarray,
          slope: np.ndarray, icpt: np.ndarray) -> np.ndarray:
    """Shift intercepts so the floored prediction hugs the ranks from below.

    With continuous residuals ``e`` on a segment, adding ``max(e)`` makes
    every floored error land in ``[0, floor(spread)]``; re-centering by an
    integer keeps the radius within ``ceil(floor(spread)/2)``.  A shift is
    kept only where the replayed window gets narrower without widening the
    radius, so the result is never worse than the input.
    """
    start = np.asarray(start, np.int64)
    stop = np.asarray(stop, np.int64)
    if start.size == 0:
        return icpt
    slope = np.asarray(slope, np.float64)
    icpt = np.asarray(icpt, np.float64)
    emin, emax, cont, offs = _replay(cx, cy, start, stop, slope, icpt)
    top = np.maximum.reduceat(cont, offs)
    spread = top - np.minimum.reduceat(cont, offs)
    shifted = icpt + top - np.floor(np.floor(spread) / 2)
    smin, smax, _, _ = _replay(cx, cy, start, stop, slope, shifted)
    better = (smax - smin < emax - emin) & (np.maximum(-smin, smax) <= np.maximum(-emin, emax))
    return np.where(better, shifted, icpt)


def certify(cx: np.ndarray, cy: np.ndarray, start: np.ndarray, stop: np.ndarray,
            slope: np.ndarray, icpt: np.ndarray, empty: np.ndarray | None = None) -> Pieces:
    start = np.asarray(start, np.int64)
    stop = np.asarray(stop, np.int64)
    lens = stop - start
    seg = np.repeat(np.arange(start.size), lens)
    idx = np.arange(int(start[0]), int(stop[-1])) if start.size else np.zeros(0, np.int64)
    if start.size and lens.sum() != idx.size:
        raise ValueError("pieces must tile a contiguous range of control points")
    x0 = cx[start]
    xmax = cx[stop - 1]
    fp = predict(slope[seg], icpt[seg], x0[seg], xmax[seg], cx[idx])
    err = cy[idx] - fp
    offs = start - start[0]
    emin = np.minimum.reduceat(err, offs)
    emax = np.maximum.reduceat(err, offs)
    return Pieces(start, stop, x0, xmax, np.asarray(slope, np.float64), np.asarray(icpt, np.float64),
                  emin.astype(np.int64), emax.astype(np.int64), cy[start].copy(), cy[stop - 1].copy(),
                  np.zeros(start.size, bool) if empty is None else empty)


def empty_piece(cx: np.ndarray, cy: np.ndarray, lo: int, hi: int) -> Pieces:
    """No predictor: the window is the piece's whole rank range."""
    span = int(cy[hi - 1] - cy[lo])
    return Pieces(np.array([lo]), np.array([hi]), cx[lo:lo + 1].copy(), cx[hi - 1:hi].copy(),
                  np.zeros(1), np.array([float(cy[lo])]), np.zeros(1, np.int64), np.array([span]),
                  cy[lo:lo + 1].copy(), cy[hi - 1:hi].copy(), np.ones(1, bool))


def segment_cover(cx: np.ndarray, cy: np.ndarray, lo: int, hi: int, eps: int,
                  max_segments: int | None = None) -> Pieces | int:
    """Greedy maximal segments certified to radius ``eps`` on points [lo, hi).

    Segments whose replayed radius exceeds ``eps`` (a float rounding effect)
    are split in halves and refit until they certify.  When ``max_segments``
    is given and exceeded, only the (lower-bound) count is returned.
    """
    limit = hi - lo if max_segments is None else max_segments
    st, sl, ic = pla_cover(cx, cy, lo, hi, float(eps), limit)
    if st.size > limit:
        return int(st.size)
    stop = np.append(st[1:], hi)
    pcs = certify(cx, cy, st, stop, sl, align(cx, cy, st, stop, sl, ic))
    bad = np.nonzero(pcs.radius > eps)[0]
    if bad.size == 0:
        return pcs
    parts = []
    keep = np.ones(pcs.count, bool)
    keep[bad] = False
    parts.append(_select(pcs, keep))
    for b in bad:
        s, e = int(pcs.start[b]), int(pcs.stop[b])
        mid = (s + e) // 2
        for a, z in ((s, mid), (mid, e)):
            sub = segment_cover(cx, cy, a, z, eps)
            parts.append(sub)
    out = Pieces.concat(parts)
    order = np.argsort(out.start, kind="stable")
    out = _select(out, order)
    if max_segments is not None and out.count > max_segments:
        return out.count
    return out


def _select(p: Pieces, sel) -> Pieces:
    return Pieces(**{k: getattr(p, k)[sel] for k in Pieces.__dataclass_fields__})


def spline_pieces(cx: np.ndarray, cy: np.ndarray, eps: int) -> Pieces:
    """Interpolating spline between greedily chosen knots; one piece per knot gap."""
    knots = spline_knots(cx, cy, float(eps))
    if knots.size == 1:
        return certify(cx, cy, np.array([0]), np.array([cx.size]), np.zeros(1), cy[:1].astype(float))
    a, b = knots[:-1], knots[1:]
    slope = (cy[b] - cy[a]).astype(np.float64) / (cx[b] - cx[a]).astype(np.float64)
    icpt = cy[a].astype(np.float64)
    stop = b.copy()
    stop[-1] = cx.size
    return certify(cx, cy, a, stop, slope, icpt)
