"""Residual entropy: transcripts, exact RGap/Gap on finite instances, spread diagnostics.

A finite instance is a short sorted key list with a workload supported on
its keys.  A leaf is a run of consecutive keys ``i..j`` with answer ranks
``i+1..j+1``.  It either stores nothing (0 atoms; the transcript is the
leaf alone and the radius is the leaf's rank diameter) or one chord through
its end points (1 atom; the transcript adds the predicted rank rounded down
to a multiple of ``Q``).  The dynamic program over (prefix, atoms) scores
each leaf in closed form:

* RGap, empty leaf:  -sum w log w
* RGap, chord leaf:  -sum w log w + sum_y W_y log W_y - p log p
* Gap:               p log(1/p) + p log2(1 + Delta)
"""
from __future__ import annotations

import itertools
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from .core import KeySet, LeafInterval, Workload, as_keys, entropy_bits

MAX_EXACT_KEYS = 2048
M32 = np.uint64(0xFFFFFFFF)
UNDEFINED = float("nan")


@dataclass(frozen=True)
class TranscriptConfig:
    quantum: int = 16
    family: str = "affine-chord-or-empty"

    def __post_init__(self):
        if self.quantum < 1:
            raise ValueError("rank quantum must be at least 1")


@dataclass(frozen=True)
class Chord:
    """Affine map through (x_lo, r_lo) and (x_hi, r_hi), evaluated exactly."""

    x_lo: int
    r_lo: int
    x_hi: int
    r_hi: int

    def __call__(self, q: int) -> Fraction:
        if self.x_hi == self.x_lo:
            return Fraction(self.r_lo)
        return self.r_lo + Fraction((self.r_hi - self.r_lo) * (q - self.x_lo), self.x_hi - self.x_lo)


@dataclass(frozen=True)
class Transcript:
    leaf: int
    predictor: int  # 0 = empty, 1 = chord
    bucket: Optional[int]
    lo: int
    hi: int

    @property
    def key(self) -> tuple:
        return (self.leaf, self.predictor, self.bucket)

    @property
    def width(self) -> int:
        return self.hi - self.lo + 1


def chord_radius(keyset: KeySet, interval: LeafInterval, chord: Chord) -> int:
    """Certified integer radius of a chord over the stored keys of the interval."""
    a, b = interval.index_range(keyset)
    err = max((abs(chord(int(keyset.keys[t])) - (t + 1)) for t in range(a, b)), default=Fraction(0))
    return math.ceil(err)


def leaf_chord(keyset: KeySet, interval: LeafInterval) -> Chord:
    a, b = interval.index_range(keyset)
    if a == b:
        raise ValueError("a chord needs at least one stored key")
    return Chord(int(keyset.keys[a]), a + 1, int(keyset.keys[b - 1]), b)


def transcript_of(keyset: KeySet, interval: LeafInterval, chord: Optional[Chord], cfg: TranscriptConfig,
                  q: int, leaf_id: int = 0, radius: Optional[int] = None) -> Transcript:
    """Pre-repair transcript of ``q``; the window always contains rank(q)."""
    if not interval.contains(q):
        raise ValueError("query outside the leaf")
    a, b = interval.index_range(keyset)
    rlo, rhi = a, b  # ranks attainable inside the interval
    if chord is None:
        return Transcript(leaf_id, 0, None, rlo, rhi)
    if radius is None:
        radius = chord_radius(keyset, interval, chord)
    pred = chord(min(max(q, chord.x_lo), chord.x_hi))
    bucket = math.floor(pred) // cfg.quantum
    lo = max(rlo, bucket * cfg.quantum - radius)
    hi = min(rhi, bucket * cfg.quantum + cfg.quantum - 1 + radius)
    return Transcript(leaf_id, 1, bucket, lo, hi)


def conditional_entropy(pairs: Sequence[tuple], weights: Sequence[float]) -> float:
    """H(A | Y) for weighted (y, a) observations."""
    joint: dict = defaultdict(float)
    marg: dict = defaultdict(float)
    for (y, a), w in zip(pairs, weights):
        joint[y, a] += w
        marg[y] += w
    total = math.fsum(marg.values())
    h = math.fsum(-w * math.log2(w) for w in joint.values() if w > 0)
    h -= math.fsum(-w * math.log2(w) for w in marg.values() if w > 0)
    return h / total


def rep_entropy(keyset: KeySet, interval: LeafInterval, chord: Optional[Chord], cfg: TranscriptConfig,
                workload: Workload) -> float:
    lo, hi = interval.support_slice(workload.support)
    qs = workload.support[lo:hi]
    ws = workload.probs[lo:hi]
    if not math.fsum(ws) > 0:
        raise ValueError("leaf carries no query mass")
    radius = None if chord is None else chord_radius(keyset, interval, chord)
    pairs = []
    for q in qs.tolist():
        t = transcript_of(keyset, interval, chord, cfg, q, radius=radius)
        pairs.append((t.key, keyset.rank(q)))
    return conditional_entropy(pairs, ws)


# -- exact evaluator -------------------------------------------------------

def _mul_small(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Exact a*b as (hi, lo) with value hi*2^32 + lo; a < 2^31, b any uint64."""
    a = a.astype(np.uint64)
    p_lo = a * (b & M32)
    p_hi = a * (b >> np.uint64(32))
    return p_hi + (p_lo >> np.uint64(32)), p_lo & M32


def _lt(h1, l1, h2, l2):
    return (h1 < h2) | ((h1 == h2) & (l1 < l2))


def _chord_rows(x: np.ndarray, i: int, Q: int):
    """For every leaf i..j (j >= i): per key t the floor k of (j-i)(x_t-x_i)/(x_j-x_i)
    and whether it is exact.  Returns flat arrays grouped by j."""
    n = x.size
    js = np.arange(i, n)
    lens = js - i + 1
    jj = np.repeat(js, lens)
    starts = np.concatenate([[0], np.cumsum(lens)[:-1]])
    tt = i + (np.arange(lens.sum()) - np.repeat(starts, lens))
    dr = (jj - i).astype(np.int64)
    dx = x[tt] - x[i]
    D = x[jj] - x[i]
    safe_D = np.where(D == 0, np.uint64(1), D)
    f = dr * (dx.astype(np.float64) / safe_D.astype(np.float64))
    k = np.clip(np.floor(f), 0, dr).astype(np.int64)
    # the float value is within 1e-12 of the true quotient; only values that
    # close to an integer need the exact integer comparison
    frac = f - np.floor(f)
    near = (frac < 1e-9) | (frac > 1 - 1e-9)
    exact = np.zeros(k.size, bool)
    if near.any():
        sel = np.flatnonzero(near)
        est = np.clip(np.rint(f[sel]), 0, dr[sel]).astype(np.int64)
        a_hi, a_lo = _mul_small(dr[sel], dx[sel])
        dd = safe_D[sel]
        k_hi, k_lo = _mul_small(est, dd)
        over = _lt(a_hi, a_lo, k_hi, k_lo)
        est = est - over
        k_hi, k_lo = _mul_small(est, dd)
        k[sel] = est
        exact[sel] = (k_hi == a_hi) & (k_lo == a_lo)
    zero = D == 0
    k[zero] = 0
    exact |= zero
    return jj, tt, k, exact, starts, lens


def _xlogx(w: np.ndarray) -> np.ndarray:
    out = np.zeros_like(w)
    pos = w > 0
    out[pos] = w[pos] * np.log2(w[pos])
    return out


@dataclass
class LeafCosts:
    rgap_empty: np.ndarray
    rgap_chord: np.ndarray
    gap_empty: np.ndarray
    gap_chord: np.ndarray
    radius: np.ndarray


def leaf_costs(keys: np.ndarray, weights: np.ndarray, Q: int) -> LeafCosts:
    """Cost matrices indexed [i, j] for leaves i..j (upper triangle)."""
    x = as_keys(keys)
    w = np.asarray(weights, np.float64)
    n = x.size
    wlw = _xlogx(w)
    S = np.concatenate([[0.0], np.cumsum(wlw)])
    P = np.concatenate([[0.0], np.cumsum(w)])
    inf = np.full((n, n), np.inf)
    re, rc, ge, gc = inf.copy(), inf.copy(), inf.copy(), inf.copy()
    rad = np.zeros((n, n), np.int64)
    for i in range(n):
        jj, tt, k, exact, starts, lens = _chord_rows(x, i, Q)
        v = i - tt + k
        err = np.where(v >= 0, v + (~exact), -v)
        delta = np.maximum.reduceat(err, starts)
        bucket = (i + 1 + k) // Q
        new_group = np.ones(tt.size, bool)
        new_group[1:] = (bucket[1:] != bucket[:-1]) | (jj[1:] != jj[:-1])
        gid = np.cumsum(new_group) - 1
        W = np.bincount(gid, weights=w[tt])
        gj = jj[new_group] - i
        sum_WlW = np.bincount(gj, weights=_xlogx(W), minlength=n - i)
        js = np.arange(i, n)
        p = P[js + 1] - P[i]
        plp = _xlogx(p)
        s = S[js + 1] - S[i]
        re[i, i:] = -s
        rc[i, i:] = -s + sum_WlW - plp
        size = (js - i + 1).astype(np.float64)
        ge[i, i:] = -plp + p * np.log2(1 + size)
        gc[i, i:] = -plp + p * np.log2(1 + delta)
        rad[i, i:] = delta
    return LeafCosts(re, rc, ge, gc, rad)


@dataclass
class Selection:
    leaves: list[tuple[int, int, int]]  # (i, j, predictor) with predictor 0 = empty, 1 = chord
    value: float

    @property
    def atoms(self) -> int:
        return sum(c for _, _, c in self.leaves)


def _prefix_dp(empty: np.ndarray, chord: np.ndarray, bmax: int) -> tuple[np.ndarray, np.ndarray]:
    """F[b, a] = min cost of the first b keys with at most a atoms."""
    n = empty.shape[0]
    F = np.zeros((n + 1, bmax + 1))
    choice = np.zeros((n + 1, bmax + 1, 2), np.int64)  # (i, predictor)
    for b in range(1, n + 1):
        ce = empty[:b, b - 1][:, None] + F[:b, :]
        ie = np.argmin(ce, axis=0)
        ve = ce[ie, np.arange(bmax + 1)]
        best = ve
        bi = ie
        bp = np.zeros(bmax + 1, np.int64)
        if bmax > 0:
            cc = chord[:b, b - 1][:, None] + F[:b, :-1]
            ic = np.argmin(cc, axis=0)
            vc = cc[ic, np.arange(bmax)]
            take = vc < best[1:]
            best = best.copy()
            best[1:] = np.where(take, vc, best[1:])
            bi = bi.copy()
            bi[1:] = np.where(take, ic, bi[1:])
            bp[1:] = take
        F[b] = best
        choice[b, :, 0] = bi
        choice[b, :, 1] = bp
    return F, choice


def _unwind(choice: np.ndarray, n: int, a: int) -> list[tuple[int, int, int]]:
    out = []
    b = n
    while b > 0:
        i, pred = choice[b, a]
        out.append((int(i), b - 1, int(pred)))
        a -= int(pred)
        b = int(i)
    return out[::-1]


@dataclass
class EvalResult:
    budgets: list[int]
    rgap: list[float]
    gap: list[float]
    rgap_selection: list[Selection]
    gap_selection: list[Selection]
    program_nodes: list[int]
    answer_entropy: float
    quantum: int

    def row(self, b: int) -> dict:
        k = self.budgets.index(b)
        return {"budget": b, "rgap": self.rgap[k], "gap": self.gap[k],
                "atoms": self.rgap_selection[k].atoms, "program_nodes": self.program_nodes[k]}


def exact_eval(keyset: KeySet, workload: Workload, cfg: TranscriptConfig = TranscriptConfig(),
               budgets: Sequence[int] = (0, 4, 8, 16, 32, 64, 128)) -> EvalResult:
    n = keyset.n
    if n > MAX_EXACT_KEYS:
        raise ValueError(f"exact evaluation is limited to {MAX_EXACT_KEYS} keys; extract a sample first")
    pos = np.searchsorted(keyset.keys, workload.support)
    if np.any(pos >= n) or np.any(keyset.keys[np.minimum(pos, n - 1)] != workload.support):
        raise ValueError("workload must be supported on instance keys")
    w = np.zeros(n)
    np.add.at(w, pos, workload.probs)
    costs = leaf_costs(keyset.keys, w, cfg.quantum)
    budgets = [int(b) for b in budgets]
    bmax = min(max(budgets), n)
    Fr, cr = _prefix_dp(costs.rgap_empty, costs.rgap_chord, bmax)
    Fg, cg = _prefix_dp(costs.gap_empty, costs.gap_chord, bmax)
    res = EvalResult(budgets, [], [], [], [], [], entropy_bits(w), cfg.quantum)
    for b in budgets:
        a = min(b, bmax)
        sel_r = Selection(_unwind(cr, n, a), float(Fr[n, a]))
        sel_g = Selection(_unwind(cg, n, a), float(Fg[n, a]))
        res.rgap.append(sel_r.value)
        res.gap.append(sel_g.value)
        res.rgap_selection.append(sel_r)
        res.gap_selection.append(sel_g)
        res.program_nodes.append(repair_program(keyset, sel_r, cfg)[0])
    return res


def repair_program(keyset: KeySet, selection: Selection, cfg: TranscriptConfig) -> tuple[int, dict]:
    """Sum over transcripts of the number of attainable answers, and the answer sets."""
    Q = cfg.quantum
    answers: dict = defaultdict(set)
    keys = keyset.keys
    for leaf, (i, j, pred) in enumerate(selection.leaves):
        if pred == 0:
            answers[leaf, None] = set(range(i + 1, j + 2))
            continue
        chord = Chord(int(keys[i]), i + 1, int(keys[j]), j + 1)
        for t in range(i, j + 1):
            answers[leaf, math.floor(chord(int(keys[t]))) // Q].add(t + 1)
    return sum(len(s) for s in answers.values()), dict(answers)


def brute_force_eval(keys: Sequence[int], weights: Sequence[float], Q: int, budget: int) -> tuple[float, float]:
    """Enumerate every ordered partition and predictor choice (tiny instances only)."""
    keys = [int(k) for k in keys]
    n = len(keys)
    if n > 14:
        raise ValueError("brute force is limited to tiny instances")
    w = [float(v) for v in weights]

    def leaf_value(i, j, pred, objective):
        idx = range(i, j + 1)
        p = math.fsum(w[t] for t in idx)
        if pred == 1:
            chord = Chord(keys[i], i + 1, keys[j], j + 1)
            preds = {t: chord(keys[t]) for t in idx}
            delta = math.ceil(max(abs(preds[t] - (t + 1)) for t in idx))
            groups = Counter()
            for t in idx:
                groups[math.floor(preds[t]) // Q] += w[t]
        else:
            delta = j - i + 1
            groups = {None: p}
        route = -p * math.log2(p) if p > 0 else 0.0
        if objective == "gap":
            return route + p * math.log2(1 + delta)
        # p * H(A | Y) with A determined by the key
        rep = math.fsum(-w[t] * math.log2(w[t]) for t in idx if w[t] > 0)
        rep -= math.fsum(-W * math.log2(W) for W in groups.values() if W > 0)
        return route + rep

    values = {(i, j, c, obj): leaf_value(i, j, c, obj)
              for i in range(n) for j in range(i, n) for c in (0, 1) for obj in ("rgap", "gap")}
    best = {"rgap": math.inf, "gap": math.inf}
    for mask in range(1 << (n - 1)):
        cuts = [0] + [t + 1 for t in range(n - 1) if mask >> t & 1] + [n]
        leaves = [(a, b - 1) for a, b in zip(cuts, cuts[1:])]
        # every predictor choice within the budget: the set of chord leaves
        for k in range(min(budget, len(leaves)) + 1):
            for chosen in itertools.combinations(range(len(leaves)), k):
                picked = set(chosen)
                for obj in best:
                    val = math.fsum(values[i, j, int(t in picked), obj] for t, (i, j) in enumerate(leaves))
                    best[obj] = min(best[obj], val)
    return best["rgap"], best["gap"]


# -- spread diagnostics --------------------------------------------------------

@dataclass
class SpreadDiagnostic:
    ratio: float
    support: float
    mean_window: float
    buckets: int
    threshold: float = 0.25
    coarsening: str = "leaf id x floor(log2 window size)"
    per_bucket: dict = field(default_factory=dict, repr=False)

    @property
    def defined(self) -> bool:
        return not math.isnan(self.ratio)


def spread_diagnostic(leaf: np.ndarray, lo: np.ndarray, hi: np.ndarray, answer: np.ndarray,
                      threshold: float = 0.25) -> SpreadDiagnostic:
    """Coarsened residual entropy over log-window, from a lookup trace.

    Each lookup is bucketed by (leaf, floor(log2 window size)).  Within a
    bucket the residual is the answer's offset from the window start and
    the bucket's radius is its median window size minus one.
    """
    leaf = np.asarray(leaf, np.int64)
    lo = np.asarray(lo, np.int64)
    width = np.asarray(hi, np.int64) - lo + 1
    offset = np.asarray(answer, np.int64) - lo
    if leaf.size == 0:
        raise ValueError("empty trace")
    if np.any(offset < 0) or np.any(offset >= width):
        raise ValueError("trace answers must lie inside their windows")
    wbucket = np.floor(np.log2(width)).astype(np.int64)
    z = np.stack([leaf, wbucket], axis=1)
    zu, zinv = np.unique(z, axis=0, return_inverse=True)
    zinv = zinv.ravel()
    total = leaf.size
    num = den = 0.0
    sup = 0  # support weighted by bucket counts, kept integral
    per = {}
    order = np.lexsort((offset, zinv))
    zs, offs, ws = zinv[order], offset[order], width[order]
    bounds = np.flatnonzero(np.diff(zs)) + 1
    for grp_off, grp_w, zi in zip(np.split(offs, bounds), np.split(ws, bounds), zs[np.r_[0, bounds]]):
        pz = grp_off.size / total
        _, counts = np.unique(grp_off, return_counts=True)
        probs = counts / grp_off.size
        h = entropy_bits(probs)
        dhat = float(np.median(grp_w)) - 1.0
        support = int(np.sum(probs >= threshold / (1.0 + dhat)))
        num += pz * h
        den += pz * math.log2(1.0 + dhat)
        sup += grp_off.size * support
        per[tuple(int(v) for v in zu[zi])] = (pz, h, dhat, support)
    ratio = num / den if den > 0 else UNDEFINED
    return SpreadDiagnostic(ratio, sup / total, float(width.mean()), len(per), threshold, per_bucket=per)


@dataclass
class SpreadCheck:
    rep: float
    delta: int
    candidates: int
    within_bounds: bool
    spread_failure: bool


def spread_surrogate_bounds(rep: float, delta: int, candidates: Optional[int] = None,
                            failure_fraction: float = 0.25) -> SpreadCheck:
    """Check 0 <= rep <= log2(candidates) and flag rep far below log2(1+delta)."""
    if candidates is None:
        candidates = 2 * delta + 1
    ok = -1e-12 <= rep <= math.log2(max(candidates, 1)) + 1e-9
    failure = delta > 0 and rep < failure_fraction * math.log2(1 + delta)
    return SpreadCheck(rep, delta, candidates, ok, failure)
