"""Combings, bicombings, shrinking maps and the proper-to-coarse upgrade.

Grid combings follow the canonical monotone lattice path that adjusts
coordinate 1 fully first, then coordinate 2, and so on; tree combings walk
the unique geodesic.  Both are closed-form, so tables never need to be
materialized even on pipeline-scale spaces.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .config import ScanBudget
from .cylinders import CylinderSample, HomotopySample, build_cylinder, scan_cylinder_control
from .exact import frac, quanta_le
from .maps import ControlBounds, MapSample
from .spaces import (
    GRID,
    HALF_LINE,
    LINE,
    PointSubset,
    GridSpace,
    LatticeLineSpace,
    Space,
    TreeSpace,
)


class Combing:
    """C : X x N -> X starting at `basepoint`, eventually the identity."""

    def __init__(self, space: Space, basepoint: int, lengths):
        self.space = space
        self.basepoint = int(basepoint)
        self.lengths = np.asarray(lengths, dtype=np.int64)

    def value(self, x_idx, n):
        raise NotImplementedError

    @property
    def n_max(self) -> int:
        return int(self.lengths.max()) if len(self.lengths) else 0


class GridCombing(Combing):
    """Coordinate-ordered monotone path from the basepoint in a lattice."""

    def __init__(self, space, basepoint=None):
        bp = space.basepoint if basepoint is None else int(basepoint)
        lengths = space.dist_int_from(bp)
        super().__init__(space, bp, lengths)
        if isinstance(space, GridSpace):
            self._q = space.coords[bp].astype(np.int64)
        elif isinstance(space, LatticeLineSpace):
            self._q = np.array([int(space.ks[bp])], dtype=np.int64)
        else:
            raise TypeError("GridCombing needs a lattice space")

    def _coords(self, x_idx):
        sp = self.space
        if isinstance(sp, GridSpace):
            return sp.coords[x_idx].astype(np.int64)
        return sp.ks[x_idx].astype(np.int64).reshape(-1, 1)

    def value(self, x_idx, n):
        x_idx = np.asarray(x_idx, dtype=np.int64)
        n = np.asarray(n, dtype=np.int64)
        xc = self._coords(x_idx)
        q = self._q
        out = np.tile(q, (len(xc), 1))
        remaining = np.maximum(n, 0).copy()
        for d in range(xc.shape[1]):
            delta = xc[:, d] - q[d]
            step = np.clip(remaining, 0, np.abs(delta))
            out[:, d] = q[d] + np.sign(delta) * step
            remaining = remaining - step
        sp = self.space
        if isinstance(sp, GridSpace):
            idx = sp.index_of_coords(out)
        else:
            base = int(sp.ks[0])
            idx = out[:, 0] - base
        if (np.asarray(idx) < 0).any():
            raise RuntimeError("combing path left the space")
        return np.asarray(idx, dtype=np.int64)

    def path_min_norm(self, x_idx):
        """Exact min of the space norm along each combing path."""
        sp = self.space
        x_idx = np.asarray(x_idx, dtype=np.int64)
        xc = self._coords(x_idx)
        q = self._q
        dim = xc.shape[1]
        best = np.full(len(xc), np.iinfo(np.int64).max, dtype=np.int64)
        # while coordinate d moves from q_d to x_d, coords < d are already at
        # x and coords > d still at q; the segment norm is piecewise monotone
        for d in range(dim):
            fixed = np.abs(xc[:, :d]).sum(axis=1) + np.abs(np.tile(q[d + 1 :], (len(xc), 1))).sum(
                axis=1
            )
            lo = np.minimum(q[d], xc[:, d])
            hi = np.maximum(q[d], xc[:, d])
            crosses = (lo <= 0) & (hi >= 0)
            seg_min = np.where(crosses, 0, np.minimum(np.abs(lo), np.abs(hi)))
            best = np.minimum(best, fixed + seg_min)
        return best


def lattice_path_point(space, q_idx, x_idx, n):
    """Point n steps along the canonical monotone path q -> x, with a
    separate basepoint per row (used by per-member contractions)."""
    if isinstance(space, GridSpace):
        qc = space.coords[np.asarray(q_idx)].astype(np.int64)
        xc = space.coords[np.asarray(x_idx)].astype(np.int64)
    else:
        qc = space.ks[np.asarray(q_idx)].astype(np.int64).reshape(-1, 1)
        xc = space.ks[np.asarray(x_idx)].astype(np.int64).reshape(-1, 1)
    n = np.asarray(n, dtype=np.int64)
    out = qc.copy()
    remaining = np.maximum(n, 0).copy()
    for d in range(qc.shape[1]):
        delta = xc[:, d] - qc[:, d]
        step = np.clip(remaining, 0, np.abs(delta))
        out[:, d] = qc[:, d] + np.sign(delta) * step
        remaining = remaining - step
    if isinstance(space, GridSpace):
        idx = space.index_of_coords(out)
    else:
        idx = out[:, 0] - int(space.ks[0])
    if (np.asarray(idx) < 0).any():
        raise RuntimeError("lattice path left the space")
    return np.asarray(idx, dtype=np.int64)


def lattice_path_min_norm(space, q_idx, x_idx):
    """Exact min l1 norm along each per-row canonical path."""
    if isinstance(space, GridSpace):
        qc = space.coords[np.asarray(q_idx)].astype(np.int64)
        xc = space.coords[np.asarray(x_idx)].astype(np.int64)
    else:
        qc = space.ks[np.asarray(q_idx)].astype(np.int64).reshape(-1, 1)
        xc = space.ks[np.asarray(x_idx)].astype(np.int64).reshape(-1, 1)
    dim = qc.shape[1]
    best = np.full(len(qc), np.iinfo(np.int64).max, dtype=np.int64)
    for d in range(dim):
        fixed = np.abs(xc[:, :d]).sum(axis=1) + np.abs(qc[:, d + 1 :]).sum(axis=1)
        lo = np.minimum(qc[:, d], xc[:, d])
        hi = np.maximum(qc[:, d], xc[:, d])
        crosses = (lo <= 0) & (hi >= 0)
        seg_min = np.where(crosses, 0, np.minimum(np.abs(lo), np.abs(hi)))
        best = np.minimum(best, fixed + seg_min)
    return best


def tree_path_point(space: TreeSpace, q_idx, x_idx, n):
    """Point n steps along the unique geodesic q -> x, per-row basepoints."""
    q = np.asarray(q_idx, dtype=np.int64)
    x = np.asarray(x_idx, dtype=np.int64)
    n = np.asarray(n, dtype=np.int64)
    lca = _tree_lca(space, q.copy(), x.copy())
    up = space.depth[q] - space.depth[lca]
    total = up + (space.depth[x] - space.depth[lca])
    n = np.clip(n, 0, total)
    out = np.empty(len(q), dtype=np.int64)
    asc = n <= up
    out[asc] = _tree_ancestor_at(space, q[asc], space.depth[q[asc]] - n[asc])
    desc = ~asc
    out[desc] = _tree_ancestor_at(space, x[desc], space.depth[lca[desc]] + (n[desc] - up[desc]))
    return out


def tree_path_min_norm(space: TreeSpace, q_idx, x_idx):
    q = np.asarray(q_idx, dtype=np.int64)
    x = np.asarray(x_idx, dtype=np.int64)
    lca = _tree_lca(space, q.copy(), x.copy())
    return space.depth[lca].astype(np.int64)


def _tree_ancestor_at(space, nodes, depths):
    out = np.asarray(nodes, dtype=np.int64).copy()
    for _ in range(space.depth_max + 1):
        deeper = space.depth[out] > depths
        if not deeper.any():
            break
        out[deeper] = space.parent[out[deeper]]
    return out


def _tree_lca(space, a, b):
    for _ in range(space.depth_max + 1):
        m = space.depth[a] > space.depth[b]
        if not m.any():
            break
        a[m] = space.parent[a[m]]
    for _ in range(space.depth_max + 1):
        m = space.depth[b] > space.depth[a]
        if not m.any():
            break
        b[m] = space.parent[b[m]]
    for _ in range(space.depth_max + 1):
        m = a != b
        if not m.any():
            break
        a[m] = space.parent[a[m]]
        b[m] = space.parent[b[m]]
    return a


def path_point_for(space, q_idx, x_idx, n):
    if isinstance(space, TreeSpace):
        return tree_path_point(space, q_idx, x_idx, n)
    return lattice_path_point(space, q_idx, x_idx, n)


def path_min_norm_for(space, q_idx, x_idx):
    if isinstance(space, TreeSpace):
        return tree_path_min_norm(space, q_idx, x_idx)
    return lattice_path_min_norm(space, q_idx, x_idx)


class TreeCombing(Combing):
    """Unique-geodesic combing of a rooted tree from any basepoint."""

    def __init__(self, space: TreeSpace, basepoint=None):
        bp = space.basepoint if basepoint is None else int(basepoint)
        lengths = space.dist_int_from(bp)
        super().__init__(space, bp, lengths)

    def value(self, x_idx, n):
        x_idx = np.asarray(x_idx, dtype=np.int64)
        q = np.full(len(x_idx), self.basepoint, dtype=np.int64)
        return tree_path_point(self.space, q, x_idx, n)

    def path_min_norm(self, x_idx):
        x_idx = np.asarray(x_idx, dtype=np.int64)
        q = np.full(len(x_idx), self.basepoint, dtype=np.int64)
        return tree_path_min_norm(self.space, q, x_idx)


class TableCombing(Combing):
    """Combing backed by an explicit (x, n) table; used by file IO and tests."""

    def __init__(self, space, basepoint, table):
        self.table = np.asarray(table, dtype=np.int64)  # shape (N, n_max+1)
        lengths = np.zeros(len(self.table), dtype=np.int64)
        for x in range(len(self.table)):
            row = self.table[x]
            not_x = np.nonzero(row != x)[0]
            if len(not_x) == 0:
                lengths[x] = 0
            elif not_x[-1] == len(row) - 1:
                lengths[x] = len(row)  # never settles inside the table
            else:
                lengths[x] = int(not_x[-1]) + 1
        super().__init__(space, basepoint, lengths)

    def value(self, x_idx, n):
        x_idx = np.asarray(x_idx, dtype=np.int64)
        n = np.clip(np.asarray(n, dtype=np.int64), 0, self.table.shape[1] - 1)
        return self.table[x_idx, n]


class Bicombing:
    """C_q(x, n) for every admissible basepoint q."""

    def __init__(self, space, maker):
        self.space = space
        self._maker = maker
        self._cache: dict[int, Combing] = {}

    def slice_at(self, q: int) -> Combing:
        if q not in self._cache:
            if len(self._cache) > 64:
                self._cache.clear()
            self._cache[q] = self._maker(q)
        return self._cache[q]

    def value(self, q, x_idx, n):
        return self.slice_at(int(q)).value(x_idx, n)


def geodesic_bicombing_grid(space) -> Bicombing:
    """Canonical monotone-path bicombing of a lattice space (any dim >= 1)."""
    if not isinstance(space, (GridSpace, LatticeLineSpace)):
        raise TypeError("geodesic_bicombing_grid needs a lattice space")
    return Bicombing(space, lambda q: GridCombing(space, q))


def geodesic_combing_tree(space: TreeSpace) -> TreeCombing:
    return TreeCombing(space, space.basepoint)


def geodesic_bicombing_tree(space: TreeSpace) -> Bicombing:
    return Bicombing(space, lambda q: TreeCombing(space, q))


# ---------------------------------------------------------------------------
# verification


@dataclass
class CombingCertificate:
    axiom1_violations: int
    axiom2_violations: int
    minimality_violations: int
    control: ControlBounds | None
    rho_upper_unit: Fraction | None
    basepoints_checked: list
    passed: bool
    items: list = field(default_factory=list)


def _axiom_scan(comb: Combing, x_all):
    """Exhaustive axiom scan over all (x, n); returns violation counts."""
    p = comb.basepoint
    a1 = int(np.count_nonzero(comb.value(x_all, np.zeros(len(x_all), dtype=np.int64)) != p))
    n_max = comb.n_max
    ns = np.arange(n_max + 2, dtype=np.int64)
    a1 += int(np.count_nonzero(comb.value(np.full(len(ns), p, dtype=np.int64), ns) != p))
    a2 = 0
    mini = 0
    lengths = comb.lengths[x_all]
    # full sweep: at or beyond N(x) the value must be x
    for n in range(n_max + 2):
        sel = lengths <= n
        if not sel.any():
            continue
        got = comb.value(x_all[sel], np.full(int(sel.sum()), n, dtype=np.int64))
        a2 += int(np.count_nonzero(got != x_all[sel]))
    posl = lengths > 0
    if posl.any():
        got = comb.value(x_all[posl], lengths[posl] - 1)
        mini += int(np.count_nonzero(got == x_all[posl]))
    return a1, a2, mini


def _unit_pairs_max_image(comb: Combing):
    """Exact max image distance over product points at sup distance 1."""
    from .bfs import neighbors_of

    space = comb.space
    xs = np.arange(space.n_points, dtype=np.int64)
    nbr = neighbors_of(space, xs).reshape(len(xs), -1)
    n_max = comb.n_max
    worst = 0
    for n in range(n_max + 1):
        here = comb.value(xs, np.full(len(xs), n, dtype=np.int64))
        for dn in (0, 1):
            if n + dn > n_max:
                continue
            there = here if dn == 0 else comb.value(xs, np.full(len(xs), n + dn, dtype=np.int64))
            for col in range(nbr.shape[1]):
                ok = nbr[:, col] >= 0
                if not ok.any():
                    continue
                img = space.dist_int_pairs(here[ok], there[nbr[ok, col]])
                worst = max(worst, int(img.max()))
            if dn == 1:
                img = space.dist_int_pairs(here, there)
                worst = max(worst, int(img.max()))
    return worst * space.quantum


def verify_combing(
    comb, budget: ScanBudget | None = None, basepoint_sample=8, seed=0
) -> CombingCertificate:
    """Axioms exactly, control by (budgeted) scan; bicombings additionally
    get a uniformity check across a seeded basepoint sample."""
    budget = budget or ScanBudget()
    if isinstance(comb, Bicombing):
        space = comb.space
        rng = np.random.default_rng(seed)
        qs = [space.basepoint] + [
            int(q) for q in rng.integers(0, space.n_points, basepoint_sample - 1)
        ]
        certs = [verify_combing(comb.slice_at(q), budget) for q in qs]
        worst_unit = max((c.rho_upper_unit for c in certs if c.rho_upper_unit is not None))
        passed = all(c.passed for c in certs)
        items = [f"q={q}: {item}" for q, c in zip(qs, certs) for item in c.items]
        return CombingCertificate(
            axiom1_violations=sum(c.axiom1_violations for c in certs),
            axiom2_violations=sum(c.axiom2_violations for c in certs),
            minimality_violations=sum(c.minimality_violations for c in certs),
            control=certs[0].control,
            rho_upper_unit=worst_unit,
            basepoints_checked=qs,
            passed=passed,
            items=items,
        )
    space = comb.space
    x_all = np.arange(space.n_points, dtype=np.int64)
    a1, a2, mini = _axiom_scan(comb, x_all)
    H = combing_as_homotopy(comb)
    control = scan_cylinder_control(H, budget)
    rho_unit = _unit_pairs_max_image(comb)
    items = []
    if a1:
        items.append(f"axiom 1 fails at {a1} entries")
    if a2:
        items.append(f"axiom 2 fails at {a2} entries")
    if mini:
        items.append(f"lengths not minimal at {mini} points")
    if not control.controlled_ok(space.interior_radius):
        items.append("combing map control exceeds the slope limit")
    return CombingCertificate(
        axiom1_violations=a1,
        axiom2_violations=a2,
        minimality_violations=mini,
        control=control,
        rho_upper_unit=rho_unit,
        basepoints_checked=[comb.basepoint],
        passed=not items,
        items=items,
    )


def combing_as_homotopy(comb: Combing, subset: PointSubset | None = None) -> HomotopySample:
    """The combing viewed as a map on the cylinder with projection N_p."""
    space = comb.space
    base = subset if subset is not None else PointSubset.full(space)
    proj_int = comb.lengths[base.indices]
    cyl = CylinderSample(base, proj_int, space.quantum)

    def fn(x_idx, t_int):
        return comb.value(x_idx, t_int)

    mins = comb.path_min_norm(base.indices) if hasattr(comb, "path_min_norm") else None
    return HomotopySample(cyl, space, value_fn=fn, norm_min_int_per_x=mins, note="combing")


def ball_contraction(comb: Combing, subset: PointSubset, budget=None):
    """Contraction h'(x,t) = C_p(x, floor(N_p(x) - t)) of a ball onto the
    combing basepoint; returns the homotopy and its property-(*) bounds."""
    space = comb.space
    proj_int = comb.lengths[subset.indices]
    cyl = CylinderSample(subset, proj_int, space.quantum)
    lengths = comb.lengths

    def fn(x_idx, t_int):
        return comb.value(x_idx, lengths[x_idx] - t_int)

    mins = comb.path_min_norm(subset.indices) if hasattr(comb, "path_min_norm") else None
    H = HomotopySample(cyl, space, value_fn=fn, norm_min_int_per_x=mins, note="ball-contraction")
    bounds = scan_cylinder_control(H, budget) if cyl.total >= 2 else None
    return H, bounds


# ---------------------------------------------------------------------------
# staircase reparametrization


@dataclass
class StaircaseRho:
    """Monotone integer map with rho(b_k) = k, floor-linear between the
    breakpoints b_k = sum_{j<=k} j*L_j; extends past the table by repeating
    the last modulus."""

    L: list

    def __post_init__(self):
        if not self.L:
            raise ValueError("need at least one modulus")
        if any(int(v) < 1 for v in self.L):
            raise ValueError("moduli must be >= 1")
        if any(int(a) > int(b) for a, b in zip(self.L, self.L[1:])):
            raise ValueError("moduli must be nondecreasing")
        self.L = [int(v) for v in self.L]
        bps = [0]
        for k, lk in enumerate(self.L, start=1):
            bps.append(bps[-1] + k * lk)
        self._bps = bps

    def breakpoints(self):
        return self._bps[1:]

    def _extended(self, t_max: int):
        bps = list(self._bps)
        ls = list(self.L)
        while bps[-1] < t_max:
            k = len(ls) + 1
            ls.append(ls[-1])
            bps.append(bps[-1] + k * ls[-1])
        return np.asarray(bps, dtype=np.int64), np.asarray(ls, dtype=np.int64)

    def __call__(self, t):
        scalar = np.isscalar(t)
        tt = np.atleast_1d(np.asarray(t, dtype=np.int64))
        if (tt < 0).any():
            raise ValueError("rho domain is the nonnegative integers")
        t_max = int(tt.max()) if len(tt) else 0
        bps, ls = self._extended(t_max + 1)
        band = np.searchsorted(bps, tt, side="right")  # band k = 1..
        band = np.clip(band, 1, len(ls))
        base = bps[band - 1]
        out = (band - 1) + (tt - base) // (band * ls[band - 1])
        return int(out[0]) if scalar else out


def staircase_rho(L) -> StaircaseRho:
    return StaircaseRho(list(L))


def _rho_values(rho, ts):
    ts = np.asarray(ts, dtype=np.int64)
    if isinstance(rho, StaircaseRho):
        vals = rho(ts)
    else:
        vals = np.asarray([int(rho(int(t))) for t in ts], dtype=np.int64)
    return np.asarray(vals, dtype=np.int64)


def shrinking_map(comb: Combing, rho) -> MapSample:
    """Sh_rho(x) = C(x, rho(N_x)); rejects any tabulated t with rho(t) > t."""
    lengths = comb.lengths
    probe = np.arange(int(lengths.max()) + 1, dtype=np.int64)
    vals = _rho_values(rho, probe)
    bad = np.nonzero(vals > probe)[0]
    if len(bad):
        raise ValueError(f"rho(t) <= t fails at t={int(bad[0])} (rho={int(vals[bad[0]])})")
    rho_n = vals[lengths]
    out = comb.value(np.arange(comb.space.n_points, dtype=np.int64), rho_n)
    return MapSample(PointSubset.full(comb.space), comb.space, out)


def shrinking_homotopy(comb: Combing, rho) -> HomotopySample:
    """H(x,s) = C(x, N - min(floor(s), N - rho(N))) on I_p(space): slice 0 is
    the identity, the top slice is Sh_rho."""
    space = comb.space
    lengths = comb.lengths
    probe = np.arange(int(lengths.max()) + 1, dtype=np.int64)
    vals = _rho_values(rho, probe)
    if (vals > probe).any():
        raise ValueError("rho(t) <= t violated")
    rho_n = vals[lengths]
    cyl = build_cylinder(space)
    ratio = space.quantum / cyl.t_step  # = 1 by construction
    pullback = lengths - rho_n

    def fn(x_idx, t_int):
        steps = np.minimum(t_int, pullback[x_idx])
        return comb.value(x_idx, lengths[x_idx] - steps)

    mins = None
    if comb.basepoint == space.basepoint and hasattr(comb, "path_min_norm"):
        # geodesic combings from the space basepoint move outward, so the
        # minimum norm along the traversed tail is at the top slice
        mins = rho_n
    return HomotopySample(cyl, space, value_fn=fn, norm_min_int_per_x=mins, note="shrinking")


# ---------------------------------------------------------------------------
# unit-pair scans, modulus measurement, proper-homotopy upgrade


def _unit_partner_offsets(space):
    """Spatial partner offsets within one metric unit, including zero."""
    if isinstance(space, GridSpace):
        reach = quanta_le(1, space.quantum)
        if space.dim >= 2 and reach >= 2:
            raise NotImplementedError("sub-unit grid quanta not supported")
        offs = [np.zeros(space.dim, dtype=np.int64)]
        for d in range(space.dim):
            for s in range(1, reach + 1):
                for sign in (1, -1):
                    o = np.zeros(space.dim, dtype=np.int64)
                    o[d] = sign * s
                    offs.append(o)
        return offs
    if isinstance(space, LatticeLineSpace):
        reach = quanta_le(1, space.quantum)
        return [np.array([k]) for k in range(-reach, reach + 1)]
    return None  # trees handled via neighbor lists


def iter_unit_pairs(H: HomotopySample):
    """Yield (ids_a, ids_b) blocks covering every ordered cylinder pair at
    sup distance <= 1 metric unit (excluding the diagonal)."""
    cyl = H.cylinder
    if cyl.mode != "lattice":
        raise ValueError("unit-pair scans need a lattice-mode cylinder")
    space = cyl.space
    base_idx = cyl.base.indices
    t_reach = quanta_le(1, cyl.t_step)
    if isinstance(space, (GridSpace, LatticeLineSpace)):
        offsets = _unit_partner_offsets(space)
        for off in offsets:
            if isinstance(space, GridSpace):
                partner = space.index_of_coords(space.coords[base_idx].astype(np.int64) + off)
            else:
                ks = space.ks[base_idx] + off[0]
                lo, hi = int(space.ks[0]), int(space.ks[-1])
                partner = np.where((ks >= lo) & (ks <= hi), base_idx + off[0], -1)
            yield from _pairs_for_partner(cyl, partner, t_reach, include_self=bool((off == 0).all()))
    else:
        from .bfs import neighbors_of

        nbr = neighbors_of(space, base_idx).reshape(len(base_idx), -1)
        cols = [base_idx] + [nbr[:, c] for c in range(nbr.shape[1])]
        for k, partner in enumerate(cols):
            yield from _pairs_for_partner(cyl, partner, t_reach, include_self=(k == 0))


def _pairs_for_partner(cyl, partner_space_idx, t_reach, include_self):
    """Pairs between each column and the partner column at |dt| <= t_reach."""
    base_idx = cyl.base.indices
    pos = np.searchsorted(base_idx, np.clip(partner_space_idx, 0, None))
    pos = np.clip(pos, 0, len(base_idx) - 1)
    valid = (partner_space_idx >= 0) & (base_idx[pos] == partner_space_idx)
    xi = np.nonzero(valid)[0]
    xj = pos[valid]
    if not len(xi):
        return
    for dt in range(-t_reach, t_reach + 1):
        ta_max = cyl.proj_int[xi]
        tb_max = cyl.proj_int[xj]
        lo = max(0, -dt)
        hi = np.minimum(ta_max, tb_max - dt)
        count = np.maximum(hi - lo + 1, 0)
        sel = count > 0
        if not sel.any():
            continue
        reps = count[sel]
        cols_a = np.repeat(cyl.offsets[xi[sel]] + lo, reps) + _ranges(reps)
        cols_b = np.repeat(cyl.offsets[xj[sel]] + lo + dt, reps) + _ranges(reps)
        if include_self and dt == 0:
            keep = cols_a != cols_b
            cols_a, cols_b = cols_a[keep], cols_b[keep]
        chunk = 2_000_000
        for i0 in range(0, len(cols_a), chunk):
            yield cols_a[i0 : i0 + chunk], cols_b[i0 : i0 + chunk]


def _ranges(counts):
    """Concatenated arange(0, c) for each c in counts."""
    total = int(counts.sum())
    out = np.arange(total, dtype=np.int64)
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    out -= np.repeat(starts, counts)
    return out


@dataclass
class ModulusReport:
    shells: list
    L: list
    pair_counts: list
    unwitnessed_shells: list


def measure_modulus(hprime: HomotopySample, shells) -> ModulusReport:
    """Unit-scale modulus per shell: L_k is the smallest integer bounding the
    image distance over scanned cylinder pairs at distance <= 1 with both
    points in B_p(k) x [0, k]; the sequence is monotonized nondecreasing.

    At one-quantum discretizations the paper's sub-unit form (pairs within
    1/L_k) has no witnesses, so the bound is measured at unit scale; shells
    with no unit pairs at all are reported as unwitnessed.
    """
    cyl = hprime.cylinder
    space = cyl.space
    shells = [frac(s) for s in shells]
    cq = cyl.common_quantum
    smult = cyl._space_mult
    tmult = cyl._t_mult
    # per-pair requirement: the smallest shell containing both points
    max_req = 0
    req_max_img: dict[int, int] = {}
    req_counts: dict[int, int] = {}
    base_norm = space.norm_int[cyl.base.indices]
    for ids_a, ids_b in iter_unit_pairs(hprime):
        xa, ta = cyl.column_of(ids_a)
        xb, tb = cyl.column_of(ids_b)
        na = base_norm[xa] * smult
        nb = base_norm[xb] * smult
        req = np.maximum(np.maximum(na, nb), np.maximum(ta * tmult, tb * tmult))
        va = np.asarray(hprime.value_by_ids(ids_a), dtype=np.int64)
        vb = np.asarray(hprime.value_by_ids(ids_b), dtype=np.int64)
        img = hprime.target.dist_int_pairs(va, vb)
        order = np.argsort(req, kind="stable")
        req_s = req[order]
        img_s = img[order]
        uniq, starts = np.unique(req_s, return_index=True)
        maxima = np.maximum.reduceat(img_s, starts)
        counts = np.diff(np.concatenate([starts, [len(req_s)]]))
        for r, m, c in zip(uniq, maxima, counts):
            r = int(r)
            req_max_img[r] = max(req_max_img.get(r, 0), int(m))
            req_counts[r] = req_counts.get(r, 0) + int(c)
            max_req = max(max_req, r)
    L_out, counts_out, unwitnessed = [], [], []
    running_max = 0
    running_count = 0
    sorted_reqs = sorted(req_max_img)
    ptr = 0
    prev_L = 1
    for s in shells:
        bound = s / cq  # common-quantum units inside the shell
        while ptr < len(sorted_reqs) and sorted_reqs[ptr] <= bound:
            running_max = max(running_max, req_max_img[sorted_reqs[ptr]])
            running_count += req_counts[sorted_reqs[ptr]]
            ptr += 1
        img_units = Fraction(running_max) * hprime.target.quantum
        lk = max(1, -(-img_units.numerator // img_units.denominator)) if running_max else 1
        lk = max(lk, prev_L)
        prev_L = lk
        L_out.append(lk)
        counts_out.append(running_count)
        if running_count == 0:
            unwitnessed.append(s)
    return ModulusReport(shells=shells, L=L_out, pair_counts=counts_out, unwitnessed_shells=unwitnessed)


@dataclass
class ClaimCertificate:
    scanned_pairs: int
    violations: list
    max_image_at_unit: Fraction
    band_stats: list
    passed: bool


def claim_check(H: HomotopySample, img_bound=1, max_report=16) -> ClaimCertificate:
    """The technical claim, verified literally: every scanned cylinder pair
    at distance <= 1 must map to points at distance <= img_bound."""
    bound = frac(img_bound)
    cyl = H.cylinder
    n_pairs = 0
    worst = Fraction(0)
    viol = []
    for ids_a, ids_b in iter_unit_pairs(H):
        va = np.asarray(H.value_by_ids(ids_a), dtype=np.int64)
        vb = np.asarray(H.value_by_ids(ids_b), dtype=np.int64)
        img = H.target.dist_int_pairs(va, vb)
        n_pairs += len(ids_a)
        m = int(img.max()) if len(img) else 0
        worst = max(worst, m * H.target.quantum)
        ok_int = quanta_le(bound, H.target.quantum)  # largest allowed int distance
        bad = np.nonzero(img > ok_int)[0]
        for b in bad[: max(0, max_report - len(viol))]:
            viol.append(
                {
                    "a": int(ids_a[b]),
                    "b": int(ids_b[b]),
                    "image_distance": int(img[b]) * H.target.quantum,
                }
            )
    return ClaimCertificate(
        scanned_pairs=n_pairs,
        violations=viol,
        max_image_at_unit=worst,
        band_stats=[],
        passed=not viol,
    )


def upgrade_proper_homotopy(hprime: HomotopySample, comb: Combing, L):
    """H(x,t) = h'(Sh(x), t * rho(N_x)/N_x) with H(p, t) = p.

    hprime must live over the combing's space with the standard basepoint
    projection; L comes from measure_modulus.  Returns (H, claim
    certificate); the shrinking map and staircase are built internally.
    """
    rho = staircase_rho(L)
    space = comb.space
    if hprime.cylinder.space is not space:
        raise ValueError("hprime and combing live on different spaces")
    sh = shrinking_map(comb, rho)
    lengths = comb.lengths
    probe = np.arange(int(lengths.max()) + 1, dtype=np.int64)
    rho_tab = _rho_values(rho, probe)
    rho_n = rho_tab[lengths]
    cyl = build_cylinder(space)
    h_cyl = hprime.cylinder
    h_base = h_cyl.base.indices
    # s = t * rho(N_x)/N_x snapped down to hprime's t lattice
    q_h = h_cyl.t_step
    q_t = cyl.t_step
    num = q_t.numerator * q_h.denominator
    den = q_t.denominator * q_h.numerator
    sh_vals = sh.values
    p_idx = space.basepoint

    def fn(x_idx, t_int):
        # n = 0 only at the combing basepoint, where Sh(p) = p and s = 0,
        # so the generic formula already realizes the paper's case split
        n = lengths[x_idx]
        r = rho_n[x_idx]
        safe_n = np.maximum(n, 1)
        s_int = (t_int * r * num) // (safe_n * den)
        y = sh_vals[x_idx]
        pos = np.searchsorted(h_base, y)
        s_int = np.minimum(s_int, h_cyl.proj_int[pos])
        ids = h_cyl.offsets[pos] + s_int
        return np.asarray(hprime.value_by_ids(ids), dtype=np.int64)

    mins = None
    if hprime.norm_min_int_per_x is not None:
        pos = np.searchsorted(h_base, sh_vals)
        mins = np.asarray(hprime.norm_min_int_per_x)[pos]
    H = HomotopySample(cyl, hprime.target, value_fn=fn, norm_min_int_per_x=mins, note="upgrade")
    cert = claim_check(H)
    return H, cert, sh, rho
