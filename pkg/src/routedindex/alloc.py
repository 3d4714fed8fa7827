"""Shadow-price allocation of atoms across leaves of a fixed partition.

A leaf with mass ``p`` and profile ``Comp`` pays ``p*log2(1+Delta)`` bits of
repair at radius ``Delta`` and consumes ``Comp(Delta)`` atoms.  Pricing atoms
at ``lam`` bits each makes the problem separate by leaf; the resulting
envelope gives lower-bound certificates, and a marginal-score greedy gives a
feasible allocation to compare against them.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import entropy_bits
from .profile import ProfileCurve

log2 = math.log2


def _options(profile) -> list[tuple[int, int]]:
    """(radius, atoms) pairs sorted by radius; accepts ProfileCurve or a plain list."""
    if isinstance(profile, ProfileCurve):
        return profile.options()
    return sorted((int(d), int(a)) for d, a in profile)


def shadow_envelope(profile, p: float, lam: float) -> tuple[float, int]:
    """min over the grid of p*log2(1+Delta) + lam*Comp(Delta), ties toward larger Delta."""
    best_val, best_d = math.inf, None
    for d, a in _options(profile):
        val = p * log2(1 + d) + lam * a
        if val <= best_val:
            best_val, best_d = val, d
    return best_val, best_d


def potential(masses: Sequence[float], radii: Sequence[int], profiles, lam: float) -> float:
    masses = list(masses)
    repair = math.fsum(p * log2(1 + d) for p, d in zip(masses, radii))
    atoms = sum(_comp(prof, d) for prof, d in zip(profiles, radii))
    return entropy_bits(masses) + repair + lam * atoms


def _comp(profile, delta: int) -> int:
    if isinstance(profile, ProfileCurve):
        return profile(delta)
    opts = _options(profile)
    best = None
    for d, a in opts:
        if d <= delta:
            best = a
    if best is None:
        raise KeyError(f"radius {delta} is below the profile grid")
    return best


@dataclass
class Allocation:
    radii: list[int]
    atoms: list[int]
    masses: list[float]
    budget: int
    lam: float = 0.0
    dual_bound: Optional[float] = None

    @property
    def m(self) -> int:
        return len(self.radii)

    @property
    def atoms_used(self) -> int:
        return sum(self.atoms)

    @property
    def b_eff(self) -> int:
        return self.budget + self.m

    @property
    def entropy_bits(self) -> float:
        return entropy_bits(self.masses)

    @property
    def repair_bits(self) -> float:
        return math.fsum(p * log2(1 + d) for p, d in zip(self.masses, self.radii))

    @property
    def objective(self) -> float:
        return self.entropy_bits + self.repair_bits


def greedy_allocate(profiles, masses: Sequence[float], budget: int) -> Allocation:
    """Marginal-score greedy from full repair.

    Each step takes the refinement with the largest repair bits saved per
    extra atom among those fitting the remaining budget.  Refinements that
    cost no atoms are always taken.  The score of the last accepted step is
    returned as the certifying multiplier.
    """
    if budget < 0:
        raise ValueError("budget must be nonnegative")
    opts = [_options(prof) for prof in profiles]
    masses = [float(p) for p in masses]
    if len(opts) != len(masses):
        raise ValueError("one profile per leaf")
    cur = [len(o) - 1 for o in opts]  # full repair sits at the largest radius
    for j, o in enumerate(opts):
        if o[-1][1] != 0:
            raise ValueError(f"leaf {j}: profile must reach zero atoms at its diameter")
    remaining = budget
    lam = 0.0

    def settle_free(j: int) -> None:
        o = opts[j]
        a_cur = o[cur[j]][1]
        k = cur[j]
        for i in range(cur[j] - 1, -1, -1):
            if o[i][1] <= a_cur:
                k = i
            else:
                break
        cur[j] = k

    def best_step(j: int, room: int):
        o = opts[j]
        d0, a0 = o[cur[j]]
        best = None
        for i in range(cur[j] - 1, -1, -1):
            d1, a1 = o[i]
            extra = a1 - a0
            if extra <= 0 or extra > room:
                continue
            gain = masses[j] * (log2(1 + d0) - log2(1 + d1))
            score = gain / extra
            if score > 0 and (best is None or score > best[0] or (score == best[0] and d1 < o[best[1]][0])):
                best = (score, i, extra)
        return best

    heap: list = []
    version = [0] * len(opts)
    for j in range(len(opts)):
        settle_free(j)
        step = best_step(j, remaining)
        if step:
            heapq.heappush(heap, (-step[0], j, version[j], step[1], step[2]))
    while heap:
        neg, j, ver, i, extra = heapq.heappop(heap)
        if ver != version[j]:
            continue
        if extra > remaining:
            step = best_step(j, remaining)
            if step:
                heapq.heappush(heap, (-step[0], j, ver, step[1], step[2]))
            continue
        cur[j] = i
        remaining -= extra
        lam = -neg
        version[j] += 1
        settle_free(j)
        step = best_step(j, remaining)
        if step:
            heapq.heappush(heap, (-step[0], j, version[j], step[1], step[2]))
    radii = [opts[j][cur[j]][0] for j in range(len(opts))]
    atoms = [opts[j][cur[j]][1] for j in range(len(opts))]
    alloc = Allocation(radii, atoms, masses, budget, lam)
    alloc.dual_bound = dual_certificate(profiles, masses, budget, lam)
    return alloc


def dual_certificate(profiles, masses: Sequence[float], budget: int, lam: float) -> float:
    """sum_j Psi_j(lam) - lam*B: a lower bound on the repair term of any feasible allocation."""
    if lam < 0:
        raise ValueError("multiplier must be nonnegative")
    return math.fsum(shadow_envelope(prof, p, lam)[0] for prof, p in zip(profiles, masses)) - lam * budget


def deficiency(profiles, masses: Sequence[float], budget: int) -> float:
    """Exact minimum repair bits over grid radii with total atoms <= budget (knapsack DP)."""
    if budget < 0:
        raise ValueError("budget must be nonnegative")
    opts = [_options(prof) for prof in profiles]
    cap = min(budget, sum(max(a for _, a in o) for o in opts))
    best = np.zeros(cap + 1)
    for o, p in zip(opts, masses):
        new = np.full(cap + 1, np.inf)
        for d, a in o:
            if a > cap:
                continue
            val = p * log2(1 + d)
            cand = np.full(cap + 1, np.inf)
            cand[a:] = best[: cap + 1 - a] + val
            np.minimum(new, cand, out=new)
        best = new
    return float(best[cap])


# -- discrete power-law instances ------------------------------------------

@dataclass(frozen=True)
class PowerLawLeaf:
    p: float
    kappa: float
    R: int
    alpha: float = 1.0

    def __post_init__(self):
        if not (0 < self.p <= 1):
            raise ValueError("mass must lie in (0, 1]")
        if self.kappa <= 0 or self.R < 1 or self.alpha <= 0:
            raise ValueError("need kappa > 0, R >= 1, alpha > 0")

    def comp(self, delta: int) -> int:
        """Normalized profile with constant one: the atom floor and the full-repair cap."""
        if delta >= self.R:
            return 0
        return max(1, math.ceil(self.kappa * (1 + delta) ** (-self.alpha)))

    def profile(self, grid: Optional[Sequence[int]] = None) -> list[tuple[int, int]]:
        if grid is None:
            grid = sorted({0, self.R, *(2 ** k for k in range(self.R.bit_length()) if 2 ** k < self.R)})
        return [(d, self.comp(d)) for d in grid if d <= self.R]


def _check_alpha(leaves: Sequence[PowerLawLeaf]) -> float:
    alphas = {leaf.alpha for leaf in leaves}
    if len(alphas) != 1:
        raise ValueError("the closed form needs one exponent across leaves")
    return alphas.pop()


def _target(leaf: PowerLawLeaf, b_eff: float) -> float:
    x = (leaf.kappa / (b_eff * leaf.p)) ** (1.0 / leaf.alpha)
    return min(1.0 + leaf.R, max(1.0, x))


def powerlaw_radii(leaves: Sequence[PowerLawLeaf], budget: int) -> list[int]:
    _check_alpha(leaves)
    b_eff = budget + len(leaves)
    return [int(round(_target(leaf, b_eff))) - 1 for leaf in leaves]


def powerlaw_cost(leaves: Sequence[PowerLawLeaf], budget: int) -> tuple[float, float]:
    """(entropy bits, repair bits) of the water-filling closed form with unit constants."""
    _check_alpha(leaves)
    b_eff = budget + len(leaves)
    ent = entropy_bits(leaf.p for leaf in leaves)
    rep = math.fsum(leaf.p * log2(min(1 + leaf.R, 1 + max(1.0, (leaf.kappa / (b_eff * leaf.p)) ** (1 / leaf.alpha))))
                    for leaf in leaves)
    return ent, rep


@dataclass
class HardMassProfile:
    """W(t) = mass on leaves whose hardness-to-mass ratio is at least t."""

    ratios: np.ndarray  # kappa/p, ascending
    masses: np.ndarray  # aligned with ratios
    tail: np.ndarray = field(init=False)

    def __post_init__(self):
        order = np.argsort(self.ratios, kind="stable")
        self.ratios = np.asarray(self.ratios, float)[order]
        self.masses = np.asarray(self.masses, float)[order]
        # tail[i] = sum of masses[i:]
        self.tail = np.concatenate([np.cumsum(self.masses[::-1])[::-1], [0.0]])

    def __call__(self, t: float) -> float:
        i = int(np.searchsorted(self.ratios, t, side="left"))
        return float(self.tail[i])

    def capacity_bound(self, rho: float, b_eff: float, alpha: float = 1.0) -> float:
        """(P_rho/alpha)*log2(rho) with P_rho = W(rho*B_eff)."""
        if rho <= 1:
            raise ValueError("rho must exceed one")
        return self(rho * b_eff) / alpha * log2(rho)


def hard_mass(leaves: Sequence[PowerLawLeaf], budget: int) -> tuple[HardMassProfile, float, float]:
    """Hard-mass profile plus both sides of the layer-cake identity.

    Direct side: sum_j p_j*log2+(kappa_j/(B_eff p_j)).  Layer side: the
    integral over u >= 0 of W(B_eff*2^u), summed exactly as step areas: the
    step function drops at u_j = log2(ratio_j/B_eff).
    """
    b_eff = budget + len(leaves)
    prof = HardMassProfile(np.array([leaf.kappa / leaf.p for leaf in leaves]),
                           np.array([leaf.p for leaf in leaves]))
    direct = math.fsum(leaf.p * max(0.0, log2(leaf.kappa / (b_eff * leaf.p))) for leaf in leaves)
    breaks = sorted({max(0.0, log2(r / b_eff)) for r in prof.ratios})
    areas = []
    prev = 0.0
    for u in breaks:
        if u > prev:
            # W is constant on (prev, u): mass of leaves with ratio >= B_eff*2^u
            areas.append((u - prev) * prof(b_eff * 2 ** ((prev + u) / 2)))
        prev = u
    return prof, direct, math.fsum(areas)
