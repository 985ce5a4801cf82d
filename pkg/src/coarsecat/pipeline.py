"""Dispersed sets and the constructive category-vs-dimension pipeline.

The chain build_schedule -> annulus_families -> redistribute ->
assemble_and_certify realizes the multiscale cover surgery: per-scale
witness families are cut along a radius ladder, members too close to the
next annulus are absorbed into saturations one level up, and the results
are certified dispersed in ladder form (members meeting annulus j stay
lambda_{j-1} apart).  contract_family_to_points and
dispersed_categorical_witness then deform each family onto a ray, with
complement BFS realizing the ray-avoiding paths; a NoPath outcome is a
meaningful negative certificate, not an error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import config as _config
from .bfs import descend_paths, distance_field
from .combing import Bicombing, path_min_norm_for, path_point_for
from .config import ScanBudget
from .covers import (
    CoverCertificationError,
    SubsetFamily,
    check_family,
    grid_asdim_witness,
    set_distance,
    subset_diameter,
    tree_asdim_witness,
)
from .cylinders import (
    CategoricityCertificate,
    CylinderSample,
    HomotopySample,
    verify_categorical,
)
from .exact import frac, quanta_ge, quanta_le, quanta_lt
from .maps import MapSample
from .spaces import (
    GRID,
    HALF_LINE,
    LINE,
    TREE,
    GridSpace,
    LatticeLineSpace,
    PointSubset,
    Ray,
    Space,
    TreeSpace,
    build_half_line,
    grid_axis_ray,
    line_ray,
    tree_ray,
)

INF = math.inf


class PipelineError(RuntimeError):
    """A certified failure with a witness; carries provenance."""

    def __init__(self, stage, message, witness=None):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage
        self.witness = witness


# ---------------------------------------------------------------------------
# dispersion


@dataclass
class DispersionProfile:
    radii: list
    values: list  # Fractions, or math.inf sentinels
    interior_radius: Fraction
    kind: str  # "set" or "family"


def _min_self_distance(space, idx):
    """Exact min pairwise distance within a point set (integer units)."""
    if len(idx) < 2:
        return None
    if isinstance(space, LatticeLineSpace):
        ks = np.sort(space.ks[idx])
        return int(np.diff(ks).min())
    if isinstance(space, GridSpace):
        from scipy.spatial import cKDTree

        pts = space.coords[idx].astype(np.float64)
        tree = cKDTree(pts)
        d, _ = tree.query(pts, k=2, p=1)
        return int(round(float(d[:, 1].min())))
    best = np.iinfo(np.int64).max
    for i0 in range(0, len(idx), 512):
        blk = space.dist_int_block(idx[i0 : i0 + 512], idx)
        np.fill_diagonal(blk[:, i0 : i0 + 512], np.iinfo(np.int64).max)
        best = min(best, int(blk.min()))
    return best


def dispersion_profile(obj, radii) -> DispersionProfile:
    """The paper's dispersion function, tabulated exactly: the set version
    minimizes over point pairs outside B_p(r); the family version over
    member pairs whose distance to the basepoint exceeds r."""
    radii = [frac(r) for r in radii]
    if isinstance(obj, SubsetFamily) or (isinstance(obj, list) and obj and isinstance(obj[0], PointSubset)):
        members = obj.members if isinstance(obj, SubsetFamily) else obj
        space = members[0].space
        min_norms = [int(space.norm_int[m.indices].min()) * space.quantum for m in members]
        values = []
        for r in radii:
            live = [m for m, mn in zip(members, min_norms) if mn > r]
            if len(live) < 2:
                values.append(INF)
                continue
            chk = check_family(live)
            values.append(chk.min_gap)
        return DispersionProfile(radii, values, space.interior_radius, "family")
    U: PointSubset = obj
    space = U.space
    norms = U.norms_int()
    values = []
    for r in radii:
        keep = norms >= quanta_ge(r, space.quantum)  # complement of the open ball
        idx = U.indices[keep]
        d = _min_self_distance(space, idx)
        values.append(INF if d is None else d * space.quantum)
    return DispersionProfile(radii, values, space.interior_radius, "set")


# ---------------------------------------------------------------------------
# family contraction


@dataclass
class ContractionResult:
    points: PointSubset
    homotopy: HomotopySample
    member_of: np.ndarray
    basepoints: np.ndarray
    profile_in: DispersionProfile
    profile_out: DispersionProfile
    profile_dominates: bool
    diam_bound: Fraction


def contract_family_to_points(F: SubsetFamily, bicombing: Bicombing, budget=None, profile_radii=None):
    """Contract each member onto its minimum-norm point e(A) along the
    bicombing; the pasted homotopy lives on the cylinder with projection
    max(||x||, d(x, e(A))), which is a coarse map (the raw contraction
    length is not proper near the basepoint)."""
    space = F.space
    members = F.members
    if not members:
        raise PipelineError("contract", "empty family")
    chk = check_family(F, cap=F.scale_r + space.quantum)
    if not chk.disjoint:
        raise PipelineError("contract", "input family is not pairwise disjoint",
                            witness=chk.witness_overlap)
    union = np.concatenate([m.indices for m in members])
    member_of = np.concatenate(
        [np.full(m.size, k, dtype=np.int64) for k, m in enumerate(members)]
    )
    order = np.argsort(union, kind="stable")
    union = union[order]
    member_of = member_of[order]
    base = PointSubset(space, union)
    # e(A): minimum norm, ties to the lowest index
    e_of = np.empty(len(members), dtype=np.int64)
    for k, m in enumerate(members):
        norms = space.norm_int[m.indices]
        cands = m.indices[norms == norms.min()]
        e_of[k] = int(cands.min())
    e_per_point = e_of[member_of]
    gamma = space.dist_int_pairs(union, e_per_point)
    proj_int = np.maximum(space.norm_int[union], gamma)

    cyl = CylinderSample(base, proj_int, space.quantum)
    gamma_arr = gamma
    e_arr = e_per_point
    pos_lookup = union

    def fn(x_idx, t_int):
        pos = np.searchsorted(pos_lookup, x_idx)
        g = gamma_arr[pos]
        steps = np.minimum(t_int, g)
        return path_point_for(space, e_arr[pos], x_idx, g - steps)

    mins = path_min_norm_for(space, e_arr, union)
    H = HomotopySample(cyl, space, value_fn=fn, norm_min_int_per_x=mins, note="family-contraction")
    out_points = PointSubset.from_indices(space, e_of)
    radii = profile_radii or _default_radii(space)
    prof_out = dispersion_profile(out_points, radii)
    # domination vo >= vi - 2D, certified with capped set distances: the
    # family min beyond the cap can only make the inequality easier
    two_d = 2 * frac(F.diam_bound)
    min_norms = [int(space.norm_int[m.indices].min()) * space.quantum for m in members]
    in_vals = []
    dominates = True
    for r, vo in zip(radii, prof_out.values):
        live = [m for m, mn in zip(members, min_norms) if mn > r]
        if len(live) < 2 or vo == INF:
            in_vals.append(INF)
            continue
        cap = vo + two_d + space.quantum
        chk = check_family(live, cap=cap)
        vi = chk.min_gap
        in_vals.append(vi)
        if vi is None:
            dominates = False  # every pair beyond vo + 2D: impossible unless broken
        elif vi != INF and vo < vi - two_d:
            dominates = False
    prof_in = DispersionProfile(radii, in_vals, space.interior_radius, "family")
    return ContractionResult(
        points=out_points,
        homotopy=H,
        member_of=member_of,
        basepoints=e_of,
        profile_in=prof_in,
        profile_out=prof_out,
        profile_dominates=dominates,
        diam_bound=F.diam_bound,
    )


def _default_radii(space):
    top = space.interior_radius
    return [top * k / 4 for k in range(4)]


# ---------------------------------------------------------------------------
# avoiding paths


@dataclass
class NoPath:
    point: int
    radius: Fraction
    reason: str = "unreachable in the complement"


@dataclass
class AvoidancePaths:
    ray: Ray
    radius: Fraction
    gamma_empirical: Fraction
    points: np.ndarray
    lengths: np.ndarray
    paths: list
    endpoints: np.ndarray
    step_bound: Fraction
    nopath: list = field(default_factory=list)

    @property
    def complete(self) -> bool:
        return not self.nopath

    def nopath_for(self, point) -> NoPath | None:
        for np_ in self.nopath:
            if np_.point == point:
                return np_
        return None


class _FieldCache:
    """Small LRU for complement distance fields keyed by the radius."""

    def __init__(self, space, alpha, limit=3):
        self.space = space
        self.alpha = alpha
        self.limit = limit
        self._store = {}
        self._order = []

    def field(self, r_int_bound):
        key = r_int_bound
        if key in self._store:
            return self._store[key]
        forbidden = self.space.norm_int <= r_int_bound if r_int_bound >= 0 else None
        sources = self.alpha.indices
        if forbidden is not None:
            sources = sources[~forbidden[sources]]
        fld = distance_field(self.space, sources, forbidden)
        self._store[key] = (fld, forbidden)
        self._order.append(key)
        if len(self._order) > self.limit:
            old = self._order.pop(0)
            if old != key:
                self._store.pop(old, None)
        return self._store[key]


def find_avoiding_paths(space, alpha: Ray, A: PointSubset, R, cache=None, compute_paths=True) -> AvoidancePaths:
    """Shortest graph paths from each point of A to im(alpha) inside the
    complement of B_p(R), rejecting paths longer than 2||x||.  Points whose
    complement search exhausts yield NoPath records; the empirical gamma(R)
    is the least radius beyond which every point of A succeeded."""
    R = frac(R)
    if not isinstance(space, (GridSpace, LatticeLineSpace, TreeSpace)):
        raise TypeError("avoiding paths need a graph-generated space")
    cache = cache or _FieldCache(space, alpha)
    r_bound = quanta_lt(R, space.quantum)  # forbidden: norm_int <= r_bound
    fld, forbidden = cache.field(r_bound)
    idx = A.indices
    d = fld[idx]
    norms = space.norm_int[idx]
    reach = d >= 0
    short_enough = reach & (d <= 2 * norms)
    nopath = [
        NoPath(int(i), R) for i in idx[~reach][:16]
    ] + [
        NoPath(int(i), R, reason="shortest complement path exceeds 2||x||")
        for i in idx[reach & ~short_enough][:16]
    ]
    failing = idx[~short_enough]
    if len(failing):
        gamma = (int(space.norm_int[failing].max()) + 1) * space.quantum
        gamma = max(gamma, R + space.quantum)
    else:
        gamma = R + space.quantum
    good = idx[short_enough]
    paths = descend_paths(space, fld, good, forbidden) if (compute_paths and len(good)) else []
    endpoints = np.array([int(p[-1]) for p in paths], dtype=np.int64)
    return AvoidancePaths(
        ray=alpha,
        radius=R,
        gamma_empirical=gamma,
        points=good,
        lengths=d[short_enough].astype(np.int64),
        paths=paths,
        endpoints=endpoints,
        step_bound=space.quantum,
        nopath=nopath,
    )


# ---------------------------------------------------------------------------
# categoricity witness for dispersed sets


@dataclass
class CategoricalWitnessResult:
    subset: PointSubset
    ladder: list
    report: object | None
    nopath_evidence: list
    passed: bool
    items: list


def dispersed_categorical_witness(
    space, alpha: Ray, U: PointSubset, bound=0, budget=None, max_ladder=64
) -> CategoricalWitnessResult:
    """Build the radius ladder R_{i+1} = max((i+1)q, gamma(R_i)), assign each
    point the deepest avoidance level its shell allows, assemble the path
    homotopy on the cylinder with projection 2||x||, and run the full
    categoricity verification."""
    if U.size == 0:
        raise PipelineError("witness", "empty subset")
    cache = _FieldCache(space, alpha)
    q = space.quantum
    norms_int = space.norm_int[U.indices]
    max_norm = int(norms_int.max()) * q
    ladder = [q]  # R_1
    nopath_evidence = []
    gammas = []
    while len(ladder) < max_ladder:
        res = find_avoiding_paths(space, alpha, U, ladder[-1], cache, compute_paths=False)
        gammas.append(res.gamma_empirical)
        nopath_evidence.extend(res.nopath)
        nxt = max(frac(len(ladder) + 1) * q, res.gamma_empirical)
        if nxt > max_norm or nxt > space.truncation_radius:
            break
        ladder.append(nxt)
    # avoidance level per point: x in [R_i, R_{i+1}) avoids B(R_{i-1})
    ladder_int = np.array([quanta_ge(r, q) for r in ladder], dtype=np.int64)
    shell = np.searchsorted(ladder_int, norms_int, side="right")  # 0 => below R_1
    avoid = np.where(shell >= 2, shell - 2, -1)  # index into ladder, -1 = none
    all_paths: list = [None] * U.size
    lengths = np.zeros(U.size, dtype=np.int64)
    endpoints = np.zeros(U.size, dtype=np.int64)
    failures = []
    for level in range(-1, len(ladder)):
        sel = np.nonzero(avoid == level)[0]
        if not len(sel):
            continue
        R_level = ladder[level] if level >= 0 else Fraction(0)
        sub = PointSubset(space, U.indices[sel])
        res = find_avoiding_paths(space, alpha, sub, R_level, cache)
        if res.nopath:
            failures.extend(res.nopath)
            nopath_evidence.extend(res.nopath)
        pos_map = {int(p): k for k, p in enumerate(res.points)}
        for local, gi in enumerate(sel):
            g = int(U.indices[gi])
            if g in pos_map:
                k = pos_map[g]
                all_paths[gi] = res.paths[k]
                lengths[gi] = res.lengths[k]
                endpoints[gi] = res.endpoints[k]
    if any(p is None for p in all_paths):
        return CategoricalWitnessResult(
            subset=U,
            ladder=ladder,
            report=None,
            nopath_evidence=nopath_evidence or failures,
            passed=False,
            items=["avoiding paths missing for some points (NoPath evidence recorded)"],
        )
    # assemble H on the cylinder with projection 2||x|| (k_x <= 2||x||)
    proj_int = 2 * norms_int
    flat = np.concatenate(all_paths) if all_paths else np.empty(0, dtype=np.int64)
    offs = np.concatenate([[0], np.cumsum([len(p) for p in all_paths])])
    cyl = CylinderSample(U, proj_int, q)

    def fn(x_idx, t_int):
        pos = np.searchsorted(U.indices, x_idx)
        t_used = np.minimum(t_int, lengths[pos])
        return flat[offs[pos] + t_used]

    mins = np.array(
        [int(space.norm_int[p].min()) for p in all_paths], dtype=np.int64
    )
    H = HomotopySample(cyl, space, value_fn=fn, norm_min_int_per_x=mins, note="avoidance-paths")
    ray_pos = alpha.position_of(endpoints)
    if (ray_pos < 0).any():
        raise PipelineError("witness", "path endpoint left the ray image")
    j_target = build_half_line(1, max(alpha.length, 1))
    j_map = MapSample(U, j_target, ray_pos.astype(np.int64))
    cert = CategoricityCertificate(subset=U, ray=alpha, j_map=j_map, homotopy=H)
    report = verify_categorical(cert, bound, budget)
    items = list(report.items)
    if nopath_evidence:
        items.append(f"{len(nopath_evidence)} NoPath records during the gamma search")
    return CategoricalWitnessResult(
        subset=U,
        ladder=ladder,
        report=report,
        nopath_evidence=nopath_evidence,
        passed=report.passed,
        items=items,
    )


# ---------------------------------------------------------------------------
# schedule and cover surgery


@dataclass
class ScheduleLevel:
    j: int
    lam: Fraction
    cover: object
    diam: Fraction
    radius: object  # Fraction, or None for the final unbounded annulus


@dataclass
class Schedule:
    space: Space
    levels: list
    c_lambda: int
    c_R: int

    @property
    def radii(self):
        return [lv.radius for lv in self.levels if lv.radius is not None]

    def lam(self, j):
        return self.levels[j - 1].lam


def default_witness_maker(space):
    if isinstance(space, TreeSpace):
        return lambda sp, r, cap: tree_asdim_witness(sp, r, cap_gap=cap)
    return lambda sp, r, cap: grid_asdim_witness(sp, r, cap_gap=cap)


def build_schedule(space, witness_maker=None, c_lambda=None, c_R=None, allow_unsafe=False) -> Schedule:
    """lambda_1 = c_lambda, R_k = c_R * max(lambda_k, D_k), lambda_{k+1} =
    c_lambda * R_k, stopping at the interior radius; one final level covers
    the unbounded annulus.  D_k is the witness cover's claimed bound."""
    c_lambda = _config.C_LAMBDA if c_lambda is None else c_lambda
    c_R = _config.C_R if c_R is None else c_R
    if not allow_unsafe and (c_lambda < 4 or c_R < 8):
        raise ValueError("c_lambda >= 4 and c_R >= 8 unless allow_unsafe is set")
    witness_maker = witness_maker or default_witness_maker(space)
    interior = space.interior_radius
    cap = None if space.n_points <= 300_000 else "auto"
    levels = []
    lam = frac(c_lambda)
    j = 1
    while True:
        cap_gap = None if cap is None else lam + space.quantum
        cover = witness_maker(space, lam, cap_gap)
        D = cover.diam_bound
        R = c_R * max(lam, D)
        if R > interior or len(levels) >= 32:
            levels.append(ScheduleLevel(j, lam, cover, D, None))
            break
        levels.append(ScheduleLevel(j, lam, cover, D, R))
        lam = c_lambda * R
        j += 1
    if len(levels) < 2:
        raise PipelineError(
            "schedule",
            f"degenerate schedule: R_1 = {levels[0].radius} already exceeds the "
            f"interior radius {interior}",
        )
    return Schedule(space=space, levels=levels, c_lambda=c_lambda, c_R=c_R)


def annulus_families(schedule: Schedule):
    """C_j^i: witness families cut along the radius ladder (ball, annuli,
    final unbounded annulus); empty intersections are dropped."""
    space = schedule.space
    q = space.quantum
    norms = space.norm_int
    radii = schedule.radii
    out = []  # out[j-1][i] = list of PointSubset
    for lv in schedule.levels:
        j = lv.j
        if j == 1:
            hi = quanta_lt(radii[0], q) if radii else np.iinfo(np.int64).max
            mask = norms <= hi
        elif lv.radius is not None:
            lo = quanta_ge(radii[j - 2], q)
            hi = quanta_lt(radii[j - 1], q)
            mask = (norms >= lo) & (norms <= hi)
        else:
            lo = quanta_ge(radii[-1], q)
            mask = norms >= lo
        fam_rows = []
        for fam in lv.cover.families:
            cut = []
            for m in fam.members:
                keep = m.indices[mask[m.indices]]
                if len(keep):
                    cut.append(PointSubset(space, keep))
            fam_rows.append(cut)
        out.append(fam_rows)
    return out


@dataclass
class RedistributeResult:
    families: list  # families[i] = list of (level j, PointSubset)
    absorbed_counts: list
    items: list


def redistribute(C, schedule: Schedule) -> RedistributeResult:
    """The surgery: a level-j member survives iff it is lambda_j-far from
    every level-(j+1) member; survivors absorb the failed level-(j-1)
    members within lambda_{j-1} as saturations.  Completeness and
    uniqueness of the absorption are certified, not assumed."""
    space = schedule.space
    n_fams = len(C[0])
    n_levels = len(C)
    out = []
    absorbed_counts = []
    items = []
    for i in range(n_fams):
        good = []  # good[j-1] = list of bool per member
        for j in range(1, n_levels + 1):
            cur = C[j - 1][i]
            lam_j = schedule.lam(j)
            flags = []
            if j < n_levels:
                nxt = C[j][i]
                for m in cur:
                    ok = all(set_distance(m, m2, cap=lam_j) is None for m2 in nxt)
                    flags.append(ok)
            else:
                flags = [True] * len(cur)
            good.append(flags)
        members = []
        absorb_count = [np.zeros(len(C[j - 1][i]), dtype=np.int64) for j in range(1, n_levels + 1)]
        for j in range(1, n_levels + 1):
            cur = C[j - 1][i]
            lam_prev = schedule.lam(j - 1) if j >= 2 else Fraction(0)
            for mi, m in enumerate(cur):
                if not good[j - 1][mi]:
                    continue
                pieces = [m.indices]
                if j >= 2:
                    below = C[j - 2][i]
                    for vi, v in enumerate(below):
                        if set_distance(m, v, cap=lam_prev) is not None:
                            pieces.append(v.indices)
                            absorb_count[j - 2][vi] += 1
                            if good[j - 2][vi]:
                                raise PipelineError(
                                    "redistribute",
                                    f"family {i}: a surviving level-{j-1} member fell "
                                    f"inside a level-{j} saturation",
                                    witness=(j, mi, vi),
                                )
                members.append((j, PointSubset(space, np.sort(np.concatenate(pieces)))))
        # absorption accounting: every failed member lands in exactly one saturation
        for j in range(1, n_levels + 1):
            for mi, m in enumerate(C[j - 1][i]):
                if good[j - 1][mi]:
                    continue
                cnt = int(absorb_count[j - 1][mi])
                if cnt == 0:
                    raise PipelineError(
                        "redistribute",
                        f"family {i}: level-{j} member {mi} was dropped but absorbed "
                        "nowhere (absorption gap; schedule constants too weak)",
                        witness=int(m.indices[0]),
                    )
                if cnt > 1:
                    raise PipelineError(
                        "redistribute",
                        f"family {i}: level-{j} member {mi} absorbed into {cnt} "
                        "saturations (would break disjointness)",
                        witness=int(m.indices[0]),
                    )
        out.append(members)
        absorbed_counts.append(absorb_count)
        items.append(f"family {i}: {len(members)} members after redistribution")
    return RedistributeResult(families=out, absorbed_counts=absorbed_counts, items=items)


@dataclass
class AssembledFamily:
    index: int
    members: list  # (level j, PointSubset)
    family: SubsetFamily
    ladder_ok: bool
    diam_max: Fraction
    certificates: dict


def assemble_and_certify(redistributed: RedistributeResult, schedule: Schedule):
    """U^i = union over j of D_j^i with four certificates per family:
    pairwise disjointness, boundedness, ladder dispersion (members meeting
    annulus j stay lambda_{j-1} apart), and the interior cover."""
    space = schedule.space
    q = space.quantum
    radii = schedule.radii
    results = []
    covered = np.zeros(space.n_points, dtype=bool)
    for i, members in enumerate(redistributed.families):
        subsets = [m for _, m in members]
        if not subsets:
            raise PipelineError("assemble", f"family {i} is empty")
        all_idx = np.concatenate([m.indices for m in subsets])
        uniq, counts = np.unique(all_idx, return_counts=True)
        if (counts > 1).any():
            raise PipelineError(
                "assemble", f"family {i} members overlap", witness=int(uniq[counts > 1][0])
            )
        covered[all_idx] = True
        diam_max = max(subset_diameter(m) for m in subsets)
        # ladder dispersion per annulus level
        n_levels = len(schedule.levels)
        ladder_ok = True
        for j in range(2, n_levels + 1):
            lam_prev = schedule.lam(j - 1)
            lo = quanta_ge(radii[j - 2], q)
            hi = quanta_lt(radii[j - 1], q) if j - 1 < len(radii) else None
            meeting = []
            for lv, m in members:
                nm = space.norm_int[m.indices]
                in_ann = (nm >= lo) if hi is None else ((nm >= lo) & (nm <= hi))
                if in_ann.any():
                    meeting.append(m)
            for a in range(len(meeting)):
                for b in range(a + 1, len(meeting)):
                    d = set_distance(meeting[a], meeting[b], cap=lam_prev)
                    if d is not None:
                        raise PipelineError(
                            "assemble",
                            f"family {i}: members meeting annulus {j} are {d} apart "
                            f"(need >= {lam_prev})",
                            witness=(a, b),
                        )
        fam = SubsetFamily(
            space=space,
            members=subsets,
            scale_r=schedule.lam(1),
            diam_bound=diam_max,
            label=f"U^{i}",
        )
        results.append(
            AssembledFamily(
                index=i,
                members=members,
                family=fam,
                ladder_ok=ladder_ok,
                diam_max=diam_max,
                certificates={
                    "disjoint": True,
                    "ladder": True,
                    "member_count": len(subsets),
                },
            )
        )
    interior_bound = quanta_le(space.interior_radius, q)
    interior_mask = space.norm_int <= interior_bound
    missing = np.nonzero(interior_mask & ~covered)[0]
    if len(missing):
        raise PipelineError(
            "assemble",
            f"{len(missing)} interior points not covered by any family",
            witness=int(missing[0]),
        )
    return results


# ---------------------------------------------------------------------------
# the full pipeline


@dataclass
class PipelineConfig:
    c_lambda: int = 4
    c_R: int = 8
    allow_unsafe: bool = False
    budget: ScanBudget = field(default_factory=lambda: ScanBudget(budget=2_000_000))
    bound: Fraction = Fraction(0)
    validate_two_halves: bool = False
    run_categorical: bool = True


@dataclass
class PipelineReport:
    space_label: str
    schedule: Schedule | None
    families: list
    bound: int | None
    family_certificates_passed: bool
    categorical_results: list
    categorical_complete: bool
    nopath_evidence: list
    user_cover_bound: int | None
    user_cover_results: list
    items: list


def default_ray(space) -> Ray:
    if isinstance(space, TreeSpace):
        return tree_ray(space)
    if isinstance(space, GridSpace):
        return grid_axis_ray(space, axis=0, sign=1)
    return line_ray(space, sign=1)


def default_bicombing(space) -> Bicombing:
    from .combing import geodesic_bicombing_grid, geodesic_bicombing_tree

    if isinstance(space, TreeSpace):
        return geodesic_bicombing_tree(space)
    return geodesic_bicombing_grid(space)


def ccat_upper_bound(space, cfg: PipelineConfig | None = None, ray=None, bicombing=None) -> PipelineReport:
    """Run the whole chain and report ccat(X) <= #families - 1 with the
    certificate trail.  Categoricity witnesses run per family; NoPath
    evidence is recorded rather than silently dropped, and a family whose
    deformation cannot avoid balls (two-ended lines, branching trees) fails
    that stage honestly while the dispersed-cover certificates stand."""
    cfg = cfg or PipelineConfig()
    ray = ray or default_ray(space)
    bicombing = bicombing or default_bicombing(space)
    items = []
    schedule = build_schedule(
        space, c_lambda=cfg.c_lambda, c_R=cfg.c_R, allow_unsafe=cfg.allow_unsafe
    )
    C = annulus_families(schedule)
    red = redistribute(C, schedule)
    assembled = assemble_and_certify(red, schedule)
    bound = len(assembled) - 1
    cat_results = []
    nopath = []
    cat_ok = True
    if cfg.run_categorical:
        for fam in assembled:
            contraction = contract_family_to_points(fam.family, bicombing, cfg.budget)
            if not contraction.profile_dominates:
                items.append(f"family {fam.index}: contraction dispersion domination failed")
            witness = dispersed_categorical_witness(
                space, ray, contraction.points, cfg.bound, cfg.budget
            )
            cat_results.append((fam.index, contraction, witness))
            nopath.extend(witness.nopath_evidence)
            cat_ok = cat_ok and witness.passed
    user_bound = None
    user_results = []
    if cfg.validate_two_halves:
        from .homotopies import half_plane_witness

        for sign in (1, -1):
            cert = half_plane_witness(space, sign=sign)
            rep = verify_categorical(cert, cfg.bound, cfg.budget)
            user_results.append((sign, rep))
        if all(r.passed for _, r in user_results):
            user_bound = 1
    return PipelineReport(
        space_label=space.label,
        schedule=schedule,
        families=assembled,
        bound=bound,
        family_certificates_passed=True,
        categorical_results=cat_results,
        categorical_complete=cat_ok and cfg.run_categorical,
        nopath_evidence=nopath,
        user_cover_bound=user_bound,
        user_cover_results=user_results,
        items=items,
    )
