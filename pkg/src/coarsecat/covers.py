"""Subset families, r-disjointness, saturation, and asdim witness covers.

Set distances are exact: 1-d sets use a sorted merge, lattice sets a
KD-tree under the l1 metric (integer coordinates stay exact in float64),
trees the LCA formula.  A `cap` turns a distance query into a certified
threshold test with early exit, which is how pipeline-scale families are
checked without quadratic scans.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.spatial import cKDTree

from .exact import ceil_frac, frac, quanta_ge, quanta_lt
from .spaces import (
    GridSpace,
    LatticeLineSpace,
    PointSubset,
    Space,
    TreeSpace,
)

INF = math.inf


# ---------------------------------------------------------------------------
# exact geometry helpers


def subset_diameter(A: PointSubset) -> Fraction:
    """Exact diameter; closed forms per space kind."""
    space = A.space
    if A.size <= 1:
        return Fraction(0)
    if isinstance(space, GridSpace):
        coords = space.coords[A.indices].astype(np.int64)
        n = coords.shape[1]
        best = 0
        # l1 diameter = max over sign patterns of the range of s.x
        for bits in range(2 ** (n - 1)):
            signs = np.ones(n, dtype=np.int64)
            for d in range(n - 1):
                if bits >> d & 1:
                    signs[d + 1] = -1
            proj = coords @ signs
            best = max(best, int(proj.max() - proj.min()))
        return best * space.quantum
    if isinstance(space, LatticeLineSpace):
        ks = space.ks[A.indices]
        return int(ks.max() - ks.min()) * space.quantum
    if isinstance(space, TreeSpace):
        # double sweep: farthest from an arbitrary point, then farthest again
        a0 = int(A.indices[0])
        d0 = space.dist_int_from(a0, A.indices)
        a1 = int(A.indices[int(np.argmax(d0))])
        d1 = space.dist_int_from(a1, A.indices)
        return int(d1.max()) * space.quantum
    # explicit spaces are small: full scan
    d = space.dist_int_block(A.indices, A.indices)
    return int(d.max()) * space.quantum


def _bbox(space, idx):
    if isinstance(space, GridSpace):
        c = space.coords[idx].astype(np.int64)
        return c.min(axis=0), c.max(axis=0)
    if isinstance(space, LatticeLineSpace):
        k = space.ks[idx]
        return np.array([k.min()]), np.array([k.max()])
    return None


def _bbox_gap_int(space, A, B):
    """Lower bound on the integer set distance from bounding boxes."""
    ba = _bbox(space, A.indices)
    bb = _bbox(space, B.indices)
    if ba is None or bb is None:
        return 0
    lo_a, hi_a = ba
    lo_b, hi_b = bb
    gap = np.maximum(0, np.maximum(lo_b - hi_a, lo_a - hi_b))
    return int(gap.sum())


def set_distance(A: PointSubset, B: PointSubset, cap=None):
    """Exact d(A,B) = min over pairs, or None when a cap certifies d >= cap."""
    space = A.space
    if space is not B.space:
        raise ValueError("set distance needs a common space")
    if A.size == 0 or B.size == 0:
        return None if cap is not None else Fraction(INF)
    cap_int = None
    if cap is not None:
        cap_int = quanta_lt(frac(cap), space.quantum)  # largest int with d*q < cap
        if cap_int < 0:
            return None
    if cap_int is not None and _bbox_gap_int(space, A, B) > cap_int:
        return None
    if isinstance(space, LatticeLineSpace):
        ka = np.sort(space.ks[A.indices])
        kb = np.sort(space.ks[B.indices])
        pos = np.searchsorted(kb, ka)
        best = np.iinfo(np.int64).max
        left = np.clip(pos - 1, 0, len(kb) - 1)
        right = np.clip(pos, 0, len(kb) - 1)
        best = int(min(np.abs(ka - kb[left]).min(), np.abs(ka - kb[right]).min()))
        return _capped(best, cap_int, space.quantum)
    if isinstance(space, GridSpace):
        small, large = (A, B) if A.size <= B.size else (B, A)
        pts_small = space.coords[small.indices].astype(np.float64)
        pts_large = space.coords[large.indices].astype(np.float64)
        if cap_int is not None:
            # restrict both sides to the interface strip around the other bbox
            lo, hi = _bbox(space, large.indices)
            m = _strip_mask(space.coords[small.indices].astype(np.int64), lo, hi, cap_int)
            if not m.any():
                return None
            pts_small = pts_small[m]
            lo, hi = _bbox(space, small.indices)
            m2 = _strip_mask(space.coords[large.indices].astype(np.int64), lo, hi, cap_int)
            if not m2.any():
                return None
            pts_large = pts_large[m2]
        tree = cKDTree(pts_large)
        ub = np.inf if cap_int is None else cap_int + 0.5
        best = np.inf
        chunk = 200_000
        for i0 in range(0, len(pts_small), chunk):
            d, _ = tree.query(pts_small[i0 : i0 + chunk], k=1, p=1, distance_upper_bound=ub)
            m = float(np.min(d)) if np.ndim(d) else float(d)
            best = min(best, m)
        if not np.isfinite(best):
            return None
        return _capped(int(round(best)), cap_int, space.quantum)
    # trees and explicit spaces: blocked exact scan
    best = np.iinfo(np.int64).max
    for i0 in range(0, A.size, 512):
        blk = space.dist_int_block(A.indices[i0 : i0 + 512], B.indices)
        best = min(best, int(blk.min()))
        if cap_int is not None and best <= cap_int:
            return _capped(best, cap_int, space.quantum)
    return _capped(best, cap_int, space.quantum)


def _strip_mask(coords, lo, hi, cap_int):
    gap = np.maximum(0, np.maximum(lo[None, :] - coords, coords - hi[None, :]))
    return gap.sum(axis=1) <= cap_int


def _capped(best_int, cap_int, quantum):
    if cap_int is not None and best_int > cap_int:
        return None
    return best_int * quantum


# ---------------------------------------------------------------------------
# families


@dataclass
class SubsetFamily:
    """Members with a claimed disjointness scale and diameter bound; the
    claims are certified by check_family, never assumed."""

    space: Space
    members: list
    scale_r: Fraction
    diam_bound: Fraction
    label: str = ""


@dataclass
class FamilyCheck:
    min_gap: object  # Fraction, math.inf (singleton), or None under a cap
    max_diam: Fraction
    disjoint: bool
    min_gap_exact: bool
    witness_pair: tuple | None = None
    witness_overlap: int | None = None

    def respects(self, scale_r, diam_bound) -> bool:
        gap_ok = self.min_gap is None or self.min_gap == INF or self.min_gap > frac(scale_r)
        return gap_ok and self.disjoint and self.max_diam <= frac(diam_bound)


def check_family(family, cap=None) -> FamilyCheck:
    """Exact min inter-member gap (early exit below `cap`), exact max
    diameter, pairwise disjointness with a witnessing duplicate."""
    members = family.members if isinstance(family, SubsetFamily) else list(family)
    if not members:
        return FamilyCheck(INF, Fraction(0), True, True)
    space = members[0].space
    max_diam = max((subset_diameter(m) for m in members), default=Fraction(0))
    all_idx = np.concatenate([m.indices for m in members]) if members else np.empty(0)
    uniq, counts = np.unique(all_idx, return_counts=True)
    dup = uniq[counts > 1]
    disjoint = len(dup) == 0
    if len(members) == 1:
        return FamilyCheck(INF, max_diam, disjoint, True,
                           witness_overlap=int(dup[0]) if len(dup) else None)
    total = sum(m.size for m in members)
    if len(members) ** 2 > max(total, 4096):
        # many small members: one labeled all-pairs scan over the union
        gap = _min_foreign_distance(space, members)
        return FamilyCheck(gap * space.quantum, max_diam, disjoint, True,
                           witness_overlap=int(dup[0]) if len(dup) else None)
    # order pairs by bbox gap so the exact scan exits as early as possible
    pairs = []
    for i in range(len(members)):
        for j in range(i + 1, len(members)):
            pairs.append((_bbox_gap_int(space, members[i], members[j]), i, j))
    pairs.sort()
    best = None
    best_pair = None
    exact = True
    for gap_lb, i, j in pairs:
        if best is not None and gap_lb * space.quantum >= best:
            break
        inner_cap = cap if best is None else min(cap, best) if cap is not None else best
        d = set_distance(members[i], members[j], cap=inner_cap)
        if d is None:
            continue
        if best is None or d < best:
            best, best_pair = d, (i, j)
    if best is None:
        if cap is not None:
            return FamilyCheck(None, max_diam, disjoint, False,
                               witness_overlap=int(dup[0]) if len(dup) else None)
        return FamilyCheck(INF, max_diam, disjoint, True)
    return FamilyCheck(best, max_diam, disjoint, exact, witness_pair=best_pair,
                       witness_overlap=int(dup[0]) if len(dup) else None)


def _min_foreign_distance(space, members) -> int:
    idx = np.concatenate([m.indices for m in members])
    label = np.concatenate([np.full(m.size, k, dtype=np.int64) for k, m in enumerate(members)])
    best = np.iinfo(np.int64).max
    big = best
    for i0 in range(0, len(idx), 512):
        blk = space.dist_int_block(idx[i0 : i0 + 512], idx)
        same = label[i0 : i0 + 512, None] == label[None, :]
        blk = np.where(same, big, blk)
        best = min(best, int(blk.min()))
    return best


def multiplicity(members) -> int:
    """Max over points of the membership count."""
    if not members:
        raise ValueError("multiplicity of an empty cover")
    space = members[0].space
    counts = np.zeros(space.n_points, dtype=np.int64)
    for m in members:
        counts[m.indices] += 1
    return int(counts.max())


def saturation(U: PointSubset, family, r) -> PointSubset:
    """N_r(U, V) = U united with every member V with d(U, V) < r (strict)."""
    members = family.members if isinstance(family, SubsetFamily) else list(family)
    r = frac(r)
    out = U.indices
    for V in members:
        if set_distance(U, V, cap=r) is not None:
            out = np.union1d(out, V.indices)
    return PointSubset(U.space, out)


# ---------------------------------------------------------------------------
# witness covers


@dataclass
class WitnessCover:
    space: Space
    scale_r: Fraction
    families: list
    covers: bool
    side_int: int
    certificate: dict = field(default_factory=dict)

    @property
    def diam_bound(self) -> Fraction:
        return max(f.diam_bound for f in self.families)

    def all_members(self):
        return [m for f in self.families for m in f.members]


class CoverCertificationError(RuntimeError):
    """A constructed witness failed its own re-certification."""


def _lattice_coords(space):
    if isinstance(space, GridSpace):
        return space.coords.astype(np.int64)
    if isinstance(space, LatticeLineSpace):
        return space.ks.reshape(-1, 1).astype(np.int64)
    raise TypeError("need a lattice-like space")


def grid_asdim_witness(space, r, certify=True, cap_gap=None) -> WitnessCover:
    """Shifted-cube witness: side L = 2(r+1)(n+1), shift i*L/(n+1); family i
    holds the r-deep cores.  Each coordinate of a point is shallow for at
    most one shift, so the n+1 core families cover the space."""
    r = frac(r)
    if r < 1:
        raise ValueError("witness scale must be >= 1")
    coords = _lattice_coords(space)
    n = coords.shape[1]
    q = space.quantum
    r_q = quanta_ge(r, q)  # smallest integer count with r_q * q >= r
    L = 2 * (r_q + 1) * (n + 1)
    shift_step = 2 * (r_q + 1)
    families = []
    covered = np.zeros(len(coords), dtype=bool)
    for i in range(n + 1):
        c = coords - i * shift_step
        rem = np.mod(c, L)
        core = ((rem >= r_q) & (rem <= L - r_q - 1)).all(axis=1)
        cube = np.floor_divide(c, L)
        idx = np.nonzero(core)[0]
        members = _group_by_rows(space, idx, cube[idx])
        families.append(
            SubsetFamily(
                space=space,
                members=members,
                scale_r=r,
                diam_bound=n * L * q,
                label=f"shift-{i}",
            )
        )
        covered[idx] = True
    covers = bool(covered.all())
    cover = WitnessCover(space, r, families, covers, side_int=L)
    if not covers:
        missing = int(np.nonzero(~covered)[0][0])
        raise CoverCertificationError(f"witness cover misses point {missing}")
    if certify:
        certify_cover(cover, cap_gap=cap_gap)
    return cover


def _group_by_rows(space, idx, rows):
    if len(idx) == 0:
        return []
    # pack row vectors into single keys, then split sorted indices by key
    mins = rows.min(axis=0)
    shifted = rows - mins
    base = shifted.max(axis=0).astype(np.int64) + 1
    key = np.zeros(len(rows), dtype=np.int64)
    for d in range(rows.shape[1]):
        key = key * int(base[d]) + shifted[:, d]
    order = np.argsort(key, kind="stable")
    key_sorted = key[order]
    idx_sorted = idx[order]
    cuts = np.nonzero(np.diff(key_sorted))[0] + 1
    groups = np.split(idx_sorted, cuts)
    return [PointSubset(space, np.sort(g)) for g in groups]


def tree_asdim_witness(space: TreeSpace, r, certify=True, cap_gap=None) -> WitnessCover:
    """Depth bands of width L = 2(r+1) with alternating parity; each band
    splits at the ancestors ceil(r/2) above its top, which keeps distinct
    pieces > r apart while bands of equal parity stay a full band apart."""
    r_q = int(frac(r))
    if r_q < 1:
        raise ValueError("witness scale must be >= 1")
    L = 2 * (r_q + 1)
    split_up = -(-r_q // 2)  # ceil(r/2)
    ids = np.arange(space.n_points, dtype=np.int64)
    band = space.depth // L
    members_by_parity = {0: [], 1: []}
    for k in range(int(band.max()) + 1):
        sel = np.nonzero(band == k)[0]
        if not len(sel):
            continue
        anchor_depth = max(0, k * L - split_up)
        anchors = space.ancestor(sel, anchor_depth)
        order = np.argsort(anchors, kind="stable")
        sel_sorted = sel[order]
        cuts = np.nonzero(np.diff(anchors[order]))[0] + 1
        for g in np.split(sel_sorted, cuts):
            members_by_parity[k % 2].append(PointSubset(space, np.sort(g)))
    diam_bound = Fraction(2 * (L - 1 + split_up))
    families = [
        SubsetFamily(space, members_by_parity[p], frac(r), diam_bound, label=f"parity-{p}")
        for p in (0, 1)
    ]
    covered = np.zeros(space.n_points, dtype=bool)
    for f in families:
        for m in f.members:
            covered[m.indices] = True
    covers = bool(covered.all())
    cover = WitnessCover(space, frac(r), families, covers, side_int=L)
    if not covers:
        raise CoverCertificationError("tree witness misses a point")
    if certify:
        certify_cover(cover, cap_gap=cap_gap)
    return cover


def certify_cover(cover: WitnessCover, cap_gap=None):
    """Independent re-certification scan; raises with a witness on failure."""
    results = []
    for f in cover.families:
        if not f.members:
            results.append({"family": f.label, "empty": True})
            continue
        cap = cap_gap if cap_gap is not None else None
        chk = check_family(f, cap=cap)
        ok = chk.respects(f.scale_r, f.diam_bound)
        results.append(
            {
                "family": f.label,
                "min_gap": chk.min_gap,
                "max_diam": chk.max_diam,
                "disjoint": chk.disjoint,
                "ok": ok,
            }
        )
        if not ok:
            raise CoverCertificationError(
                f"family {f.label} failed certification: gap={chk.min_gap}, "
                f"diam={chk.max_diam} (bound {f.diam_bound}), disjoint={chk.disjoint}, "
                f"witness={chk.witness_pair or chk.witness_overlap}"
            )
    mult = multiplicity(cover.all_members())
    if mult > len(cover.families):
        raise CoverCertificationError(f"multiplicity {mult} exceeds family count")
    cover.certificate = {"families": results, "multiplicity": mult, "covers": cover.covers}
    return cover.certificate
