"""Independent cross-validation by direct orbit simulation.

Points are advanced through the tower gluing rules one stage at a time:
while a motion would leave the current tower, the point is re-expressed
one stage up using its column ancestry, and membership tests walk back
down by locating the height inside the embedded column copies.  Nothing
here refines level sets or translates interval sets; agreement with the
exact engine is therefore evidence for both.

``oracle_correlation`` estimates mu(T_t A /\\ B) from a deterministic
stratified grid of heights in A.  For each sampled height the column
ancestry is integrated out exactly (a probability-weighted walk over the
4-way lift branches), so the only discretization is the height grid; the
integrand is piecewise constant in the height, which yields the hard
deterministic error bound  mu(A) * edge_count / n.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import lcm

from .errors import HorizonExceeded
from .exactnum import Rat, rat

ZERO = Fraction(0)


@dataclass(frozen=True)
class PointState:
    """A point of the phase space with enough ancestry to keep moving.

    ``height`` lives in [0, h_stage); ``path`` lists the column indices
    (1..4) the point occupies at the current and following stages, so a
    lift into stage+1 consumes the first entry.
    """

    stage: int
    height: Rat
    path: tuple[int, ...] = ()

    def __post_init__(self):
        if any(d not in (1, 2, 3, 4) for d in self.path):
            raise ValueError("column indices must be in 1..4")


def orbit_advance(p: PointState, t, sched) -> PointState:
    """Move a point by flow time t >= 0 through the built towers."""
    t = rat(t)
    if t < 0:
        raise ValueError("orbit advance handles forward time only")
    stage, y = p.stage, p.height
    i = 0
    while y + t >= sched.height(stage):
        if stage >= sched.num_stages or i >= len(p.path):
            raise HorizonExceeded(
                f"advance by {t} leaves the built towers (stage {stage})"
            )
        y = y + sched.offsets(stage)[p.path[i] - 1]
        stage += 1
        i += 1
    return PointState(stage=stage, height=y + t, path=p.path[i:])


def locate_height(stage: int, height: Rat, target_stage: int, sched) -> Rat | None:
    """Express a tower height at an earlier stage; None if it sits in spacers."""
    y = height
    s = stage
    while s > target_stage:
        prev_h = sched.height(s - 1)
        found = None
        for off in sched.offsets(s - 1):
            if off <= y < off + prev_h:
                found = y - off
                break
        if found is None:
            return None
        y = found
        s -= 1
    return y


def point_in_slab(p: PointState, slab, sched) -> bool:
    """Is the point inside the slab set (any object with stage/levels)?"""
    if p.stage >= slab.stage:
        y = locate_height(p.stage, p.height, slab.stage, sched)
        return y is not None and slab.levels.contains(y)
    y = p.height
    s = p.stage
    i = 0
    while s < slab.stage:
        if i >= len(p.path):
            raise HorizonExceeded("point path too short to reach the slab's stage")
        y = y + sched.offsets(s)[p.path[i] - 1]
        s += 1
        i += 1
    return slab.levels.contains(y)


def canonical_form(p: PointState, sched) -> tuple[int, Rat, tuple[int, ...]]:
    """Lowest-stage representation (stage, height, path) of a point.

    Descending recovers the column digits the point occupies at the
    stages it passes, so two states describing the same point agree.
    """
    stage, y, path = p.stage, p.height, list(p.path)
    while stage > 1:
        prev_h = sched.height(stage - 1)
        found = None
        for digit, off in enumerate(sched.offsets(stage - 1), start=1):
            if off <= y < off + prev_h:
                found = (digit, y - off)
                break
        if found is None:
            break
        path.insert(0, found[0])
        y = found[1]
        stage -= 1
    return stage, y, tuple(path)


def same_point(p1: PointState, p2: PointState, sched) -> bool:
    s1, y1, path1 = canonical_form(p1, sched)
    s2, y2, path2 = canonical_form(p2, sched)
    if (s1, y1) != (s2, y2):
        return False
    n = min(len(path1), len(path2))
    return path1[:n] == path2[:n]


# --------------------------------------------------------------------------
# stratified-grid correlation estimate


@dataclass(frozen=True)
class OracleEstimate:
    value: Rat
    bound: Rat
    samples: int
    regions: int
    edge_cap: int

    def to_dict(self) -> dict:
        from .exactnum import rat_str

        return {
            "value": rat_str(self.value),
            "bound": rat_str(self.bound),
            "samples": self.samples,
            "regions": self.regions,
            "edge_cap": self.edge_cap,
        }


def _strata_midpoints(levels, n: int) -> list[Rat]:
    """Midpoints of n equal-measure strata across an interval set."""
    total = levels.total_length
    step = total / n
    out: list[Rat] = []
    ivs = list(levels.intervals)
    idx = 0
    consumed = ZERO  # length of fully consumed intervals
    for i in range(n):
        u = step * (2 * i + 1) / 2
        while u >= consumed + (ivs[idx][1] - ivs[idx][0]):
            consumed += ivs[idx][1] - ivs[idx][0]
            idx += 1
        out.append(ivs[idx][0] + (u - consumed))
    return out


def oracle_correlation(a, b, t, n: int, sched) -> OracleEstimate:
    """Deterministic stratified estimate of mu(T_t A /\\ B) with a hard bound.

    Negative t is folded by the flow symmetry mu(T_t A /\\ B) =
    mu(T_{-t} B /\\ A).
    """
    t = rat(t)
    if n < 1:
        raise ValueError("need at least one sample")
    if t < 0:
        return oracle_correlation(b, a, -t, n, sched)

    k_a, k_b = a.stage, b.stage
    top = sched.num_stages

    # one integer scale for every height handled below
    vals = [t, sched.base_width, sched.base_height]
    for j in range(1, top + 1):
        vals.append(sched.height(j))
        vals.extend(sched.offsets(j))
    for lo, hi in a.levels.intervals:
        vals.extend((lo, hi))
    for lo, hi in b.levels.intervals:
        vals.extend((lo, hi))
    mids = _strata_midpoints(a.levels, n)
    vals.extend(mids)
    scale = 1
    for v in vals:
        scale = lcm(scale, v.denominator)

    heights = {j: int(sched.height(j) * scale) for j in range(1, top + 1)}
    offsets = {
        j: [int(o * scale) for o in sched.offsets(j)] for j in range(1, top)
    }
    t_s = int(t * scale)
    lb_s = [(int(lo * scale), int(hi * scale)) for lo, hi in b.levels.intervals]
    lb_lo = [iv[0] for iv in lb_s]

    from bisect import bisect_right

    def in_b(z: int) -> int:
        i = bisect_right(lb_lo, z) - 1
        if i >= 0 and lb_s[i][0] <= z < lb_s[i][1]:
            return 1
        return 0

    def descend_test(stage: int, z: int) -> int:
        while stage > k_b:
            prev_h = heights[stage - 1]
            found = None
            for off in offsets[stage - 1]:
                if off <= z < off + prev_h:
                    found = z - off
                    break
            if found is None:
                return 0
            z = found
            stage -= 1
        return in_b(z)

    def lifted_avg(stage: int, z: int) -> Fraction:
        """Average membership of (stage, z) in B over remaining ancestry."""
        if stage >= k_b:
            return Fraction(descend_test(stage, z))
        if stage >= top:
            raise HorizonExceeded("cannot reach the slab's stage")
        acc = sum(lifted_avg(stage + 1, z + off) for off in offsets[stage])
        return Fraction(acc, 4)

    def advanced_avg(stage: int, z: int) -> Fraction:
        if z + t_s < heights[stage]:
            return lifted_avg(stage, z + t_s)
        if stage >= top:
            raise HorizonExceeded(f"advance by {t} leaves the built towers")
        acc = sum(advanced_avg(stage + 1, z + off) for off in offsets[stage])
        return Fraction(acc, 4)

    total = sum(advanced_avg(k_a, int(y * scale)) for y in mids)
    mu_a = sched.width(k_a) * a.levels.total_length
    estimate = mu_a * total / n

    # exact count of terminal branch regions over the full height range,
    # plus a per-region cap on boundary crossings during descent: within
    # an image interval of length L, the disjoint column windows of
    # height h contribute at most 2*(L//h + 1) endpoints per level, and
    # the slab's own intervals at most 2*n_b per window met
    n_b = len(lb_s)
    regions = 0
    edge_cap = 2 * len(a.levels.intervals)

    def region_cap(stage_r: int, length: int) -> int:
        cap = 1 + 2 * n_b * (length // heights[k_b] + 1)
        for s in range(k_b + 1, stage_r + 1):
            cap += 2 * (length // heights[s - 1] + 1)
        return cap

    def count(stage: int, shift: int, lo: int, hi: int) -> None:
        nonlocal regions, edge_cap
        if lo >= hi:
            return
        thr = heights[stage] - t_s - shift
        if lo < thr:  # no lift: the advance terminates at this stage
            length = min(hi, thr) - lo
            stage_r = max(stage, k_b)
            branches = 4 ** max(0, k_b - stage)
            regions += branches
            edge_cap += branches * region_cap(stage_r, length)
        if hi > thr:
            if stage >= top:
                raise HorizonExceeded(f"advance by {t} leaves the built towers")
            for off in offsets[stage]:
                count(stage + 1, shift + off, max(lo, thr), hi)

    for lo, hi in a.levels.intervals:
        count(k_a, 0, int(lo * scale), int(hi * scale))

    bound = mu_a * Fraction(edge_cap, n)
    return OracleEstimate(
        value=estimate,
        bound=bound,
        samples=n,
        regions=regions,
        edge_cap=edge_cap,
    )
