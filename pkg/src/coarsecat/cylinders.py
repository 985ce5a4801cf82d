"""Discretized p-cylinders and coarse-homotopy verification.

A cylinder over a base subset holds the lattice {(x, t) : t = j*t_step <=
p(x)} under the supremum metric.  Homotopy samples are either materialized
(small cylinders) or function-backed (pipeline-scale cylinders, where the
full table would not fit); verification scans work through both.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .config import CapacityError, ScanBudget
from .exact import frac, frac_gcd
from .maps import (
    ControlBounds,
    MapSample,
    PropernessCertificate,
    closeness,
    estimate_control,
    inclusion_map,
    properness_envelope,
)
from .spaces import PointSubset, Ray, Space

LATTICE = "lattice"
TWO_SLICE = "two_slice"


class CylinderSample:
    """I_p(base): all (x, t) with t on the t_step lattice, 0 <= t <= p(x)."""

    def __init__(self, base: PointSubset, proj_int, t_step, mode=LATTICE):
        self.base = base
        self.proj_int = np.asarray(proj_int, dtype=np.int64)
        if (self.proj_int < 0).any():
            raise ValueError("projection must be nonnegative")
        self.t_step = frac(t_step)
        self.mode = mode
        if mode == LATTICE:
            counts = self.proj_int + 1
        elif mode == TWO_SLICE:
            counts = np.where(self.proj_int == 0, 1, 2).astype(np.int64)
        else:
            raise ValueError(f"unknown cylinder mode {mode}")
        self.counts = counts
        self.offsets = np.concatenate([[0], np.cumsum(counts)])
        self.total = int(self.offsets[-1])
        space = base.space
        self.common_quantum = frac_gcd(space.quantum, self.t_step)
        self._space_mult = int(space.quantum / self.common_quantum)
        self._t_mult = int(self.t_step / self.common_quantum)

    @property
    def space(self) -> Space:
        return self.base.space

    def projection_value(self, xi) -> Fraction:
        return int(self.proj_int[xi]) * self.t_step

    def column_of(self, cyl_ids):
        """(xi, t_int) for cylinder point ids; t_int in t_step units."""
        cyl_ids = np.asarray(cyl_ids, dtype=np.int64)
        xi = np.searchsorted(self.offsets, cyl_ids, side="right") - 1
        j = cyl_ids - self.offsets[xi]
        if self.mode == LATTICE:
            t_int = j
        else:
            t_int = np.where(j == 0, 0, self.proj_int[xi])
        return xi, t_int

    def i0_ids(self, xi=None):
        xi = np.arange(len(self.base.indices)) if xi is None else np.asarray(xi)
        return self.offsets[xi]

    def i1_ids(self, xi=None):
        xi = np.arange(len(self.base.indices)) if xi is None else np.asarray(xi)
        return self.offsets[xi] + self.counts[xi] - 1

    def dist_common_int(self, ids_a, ids_b):
        """Sup-metric distances in common-quantum units."""
        xa, ta = self.column_of(ids_a)
        xb, tb = self.column_of(ids_b)
        db = self.space.dist_int_pairs(self.base.indices[xa], self.base.indices[xb])
        dt = np.abs(ta - tb)
        return np.maximum(db * self._space_mult, dt * self._t_mult)

    def dist_common_int_block(self, ids_a, ids_b):
        xa, ta = self.column_of(ids_a)
        xb, tb = self.column_of(ids_b)
        db = self.space.dist_int_block(self.base.indices[xa], self.base.indices[xb])
        dt = np.abs(ta[:, None] - tb[None, :])
        return np.maximum(db * self._space_mult, dt * self._t_mult)

    def norm_common_int(self, ids):
        """Sup distance to the cylinder basepoint (p, 0), common-quantum units."""
        xi, ti = self.column_of(ids)
        nb = self.space.norm_int[self.base.indices[xi]]
        return np.maximum(nb * self._space_mult, ti * self._t_mult)

    def triangle_check_sampled(self, n_triples=20_000, seed=0) -> int:
        rng = np.random.default_rng(seed)
        a = rng.integers(0, self.total, n_triples)
        b = rng.integers(0, self.total, n_triples)
        c = rng.integers(0, self.total, n_triples)
        ab = self.dist_common_int(a, b)
        bc = self.dist_common_int(b, c)
        ac = self.dist_common_int(a, c)
        return int(np.count_nonzero(ac > ab + bc))


def build_cylinder(base, projection=None, t_step=None, mode=LATTICE, max_points=None):
    """Discretize I_p(base).  Default projection is the standard base-point
    projection p0(x) = d(x, x0); a custom projection must sit on the t_step
    lattice so the top slice (x, p(x)) is represented exactly."""
    if isinstance(base, Space):
        base = PointSubset.full(base)
    space = base.space
    step = frac(t_step) if t_step is not None else space.quantum
    if projection is None:
        norms = space.norm_int[base.indices]
        ratio = space.quantum / step
        scaled = norms * ratio.numerator
        if ratio.denominator != 1 and (scaled % ratio.denominator).any():
            raise ValueError("t_step must divide the norm lattice")
        proj_int = scaled // ratio.denominator
    else:
        proj_int = np.empty(base.size, dtype=np.int64)
        for k, value in enumerate(projection):
            v = frac(value) / step
            if v.denominator != 1 or v < 0:
                raise ValueError(f"projection value {value} is not on the t_step lattice")
            proj_int[k] = v.numerator
    cyl = CylinderSample(base, proj_int, step, mode=mode)
    if max_points is not None and cyl.total > max_points:
        raise CapacityError(f"cylinder has {cyl.total} points, limit {max_points}")
    return cyl


class HomotopySample:
    """Values of a map on a cylinder; table-backed or function-backed."""

    def __init__(self, cylinder, target, values=None, value_fn=None, norm_min_int_per_x=None, note=""):
        if (values is None) == (value_fn is None):
            raise ValueError("provide exactly one of values / value_fn")
        self.cylinder = cylinder
        self.target = target
        self.values = values
        self.value_fn = value_fn
        # exact per-column minimum image norm, when the constructor knows it
        self.norm_min_int_per_x = norm_min_int_per_x
        self.note = note

    @property
    def materialized(self) -> bool:
        return self.values is not None

    def value_by_ids(self, cyl_ids):
        cyl_ids = np.asarray(cyl_ids, dtype=np.int64)
        if self.values is not None:
            return self.values[cyl_ids]
        xi, t_int = self.cylinder.column_of(cyl_ids)
        return self.value_fn(self.cylinder.base.indices[xi], t_int)

    def bottom_map(self) -> MapSample:
        vals = self.value_by_ids(self.cylinder.i0_ids())
        return MapSample(self.cylinder.base, self.target, np.asarray(vals, dtype=np.int64))

    def top_map(self) -> MapSample:
        vals = self.value_by_ids(self.cylinder.i1_ids())
        return MapSample(self.cylinder.base, self.target, np.asarray(vals, dtype=np.int64))


def two_slice_homotopy(f: MapSample, g: MapSample) -> HomotopySample:
    """The homotopy witnessing that close maps are coarsely homotopic: the
    cylinder carries only the t=0 and t=p(x) slices."""
    if f.domain is not g.domain and not np.array_equal(f.domain.indices, g.domain.indices):
        raise ValueError("two-slice homotopy needs a common domain")
    cyl = build_cylinder(f.domain, mode=TWO_SLICE)
    values = np.empty(cyl.total, dtype=np.int64)
    values[cyl.i0_ids()] = f.values
    values[cyl.i1_ids()] = g.values
    return HomotopySample(cyl, f.target, values=values, note="two-slice")


# ---------------------------------------------------------------------------
# verification


def scan_cylinder_control(H: HomotopySample, budget: ScanBudget | None = None) -> ControlBounds:
    """Control bounds of H as a map from the sup-metric cylinder."""
    budget = budget or ScanBudget()
    cyl = H.cylinder
    if cyl.total < 2:
        raise ValueError("cylinder control scan needs >= 2 points")
    total_pairs = cyl.total * (cyl.total - 1) // 2
    sampled, n_scan = budget.plan(total_pairs)
    base_norm_max = int(cyl.space.norm_int[cyl.base.indices].max())
    max_d = max(2 * base_norm_max * cyl._space_mult, int(cyl.proj_int.max()) * cyl._t_mult, 1)
    up_by = np.full(max_d + 1, -1, dtype=np.int64)
    lo_by = np.full(max_d + 1, np.iinfo(np.int64).max, dtype=np.int64)

    def absorb(ds, dt):
        np.maximum.at(up_by, ds, dt)
        np.minimum.at(lo_by, ds, dt)

    if not sampled:
        ids = np.arange(cyl.total, dtype=np.int64)
        vals = np.asarray(H.value_by_ids(ids), dtype=np.int64)
        block = max(1, 2_000_000 // max(cyl.total, 1))
        for i0 in range(0, cyl.total, block):
            i1 = min(cyl.total, i0 + block)
            ds = cyl.dist_common_int_block(ids[i0:i1], ids)
            dt = H.target.dist_int_block(vals[i0:i1], vals)
            tri = np.nonzero(np.arange(cyl.total)[None, :] > np.arange(i0, i1)[:, None])
            absorb(ds[tri], dt[tri])
    else:
        chunk = 1_000_000
        done = 0
        while done < n_scan:
            take = min(chunk, n_scan - done)
            rng = np.random.default_rng(budget.seed + done)
            ii = rng.integers(0, cyl.total, take * 2)
            jj = rng.integers(0, cyl.total, take * 2)
            keep = ii != jj
            ii, jj = ii[keep][:take], jj[keep][:take]
            absorb(cyl.dist_common_int(ii, jj), H.target.dist_int_pairs(
                np.asarray(H.value_by_ids(ii), dtype=np.int64),
                np.asarray(H.value_by_ids(jj), dtype=np.int64),
            ))
            done += take
    seen = np.nonzero(up_by >= 0)[0]
    return ControlBounds(
        src_quantum=cyl.common_quantum,
        tgt_quantum=H.target.quantum,
        grid_int=seen,
        upper_int=np.maximum.accumulate(up_by[seen]),
        lower_int=np.minimum.accumulate(lo_by[seen][::-1])[::-1],
        sampled=sampled,
        seed=budget.seed if sampled else None,
        scanned_pairs=n_scan,
    )


_STREAM_LIMIT = 20_000_000


def cylinder_properness(H: HomotopySample, threshold, shell_width=None) -> PropernessCertificate:
    """Properness of H as a map from the cylinder.

    Exact when the constructor supplied per-column image-norm minima or the
    cylinder is small enough to stream; the per-column route assigns each
    column's minimum to every shell the column touches, which can only
    under-estimate the envelope (sound for a pass verdict).
    """
    cyl = H.cylinder
    space = cyl.space
    cq = cyl.common_quantum
    width = frac(shell_width) if shell_width is not None else space.quantum
    interior = space.interior_radius
    thr = frac(threshold)
    if H.norm_min_int_per_x is not None:
        import heapq

        base_norm = space.norm_int[cyl.base.indices] * cyl._space_mult
        top_norm = np.maximum(base_norm, cyl.proj_int * cyl._t_mult)
        m = np.asarray(H.norm_min_int_per_x, dtype=np.int64)
        # shell index of a common-quantum norm value v: floor(v*cq / width)
        mult_n = cq.numerator * width.denominator
        mult_d = cq.denominator * width.numerator
        shell_lo = (base_norm * mult_n) // mult_d
        shell_hi = (top_norm * mult_n) // mult_d
        order = np.argsort(shell_lo, kind="stable")
        lo_s, hi_s, m_s = shell_lo[order], shell_hi[order], m[order]
        shell_count = int(shell_hi.max()) + 1 if len(m) else 0
        starts, envel, empty = [], [], []
        heap: list = []
        ptr = 0
        for s in range(shell_count):
            while ptr < len(lo_s) and lo_s[ptr] <= s:
                heapq.heappush(heap, (int(m_s[ptr]), int(hi_s[ptr])))
                ptr += 1
            while heap and heap[0][1] < s:
                heapq.heappop(heap)
            if heap:
                starts.append(s * width)
                envel.append(heap[0][0] * H.target.quantum)
            else:
                empty.append(s)
        mono, best = [], None
        for v in envel:
            best = v if best is None else max(best, v)
            mono.append(best)
        at_interior = None
        for sidx, v in zip(starts, mono):
            if sidx <= interior:
                at_interior = v
        passed = at_interior is not None and at_interior > thr
        return PropernessCertificate(
            shell_width=width,
            shell_starts=starts,
            envelope=mono,
            interior_radius=interior,
            threshold=thr,
            passed=passed,
            empty_shells=empty,
        )
    if cyl.total > _STREAM_LIMIT:
        raise CapacityError(
            "cylinder too large for exact properness; supply norm_min_int_per_x"
        )
    src_norms = []
    img_norms = []
    chunk = 2_000_000
    for i0 in range(0, cyl.total, chunk):
        ids = np.arange(i0, min(cyl.total, i0 + chunk), dtype=np.int64)
        src_norms.append(cyl.norm_common_int(ids))
        img_norms.append(H.target.norm_int[H.value_by_ids(ids)])
    return properness_envelope(
        np.concatenate(src_norms),
        cq,
        np.concatenate(img_norms),
        H.target.quantum,
        width,
        interior,
        thr,
    )


@dataclass
class HomotopyCertificate:
    bound: Fraction
    closeness_bottom: Fraction
    closeness_top: Fraction
    control: ControlBounds
    properness: PropernessCertificate
    controlled: bool
    passed: bool
    items: list = field(default_factory=list)


def verify_homotopy(
    H: HomotopySample,
    f: MapSample,
    g: MapSample,
    bound,
    budget=None,
    proper_threshold=None,
    slope_limit=None,
) -> HomotopyCertificate:
    """Check H o i0 ~ f, H o i1 ~ g within `bound`, plus coarseness of H."""
    bound = frac(bound)
    c0 = closeness(H.bottom_map(), f)
    c1 = closeness(H.top_map(), g)
    control = scan_cylinder_control(H, budget)
    space = H.cylinder.space
    thr = frac(proper_threshold) if proper_threshold is not None else space.interior_radius / 4
    proper = cylinder_properness(H, thr)
    controlled = control.controlled_ok(space.interior_radius, slope_limit)
    items = []
    if c0 > bound:
        items.append(f"bottom slice is {c0} from f (bound {bound})")
    if c1 > bound:
        items.append(f"top slice is {c1} from g (bound {bound})")
    if not controlled:
        items.append("control bound grows beyond the configured slope")
    if not proper.passed:
        items.append("properness envelope failed")
    return HomotopyCertificate(
        bound=bound,
        closeness_bottom=c0,
        closeness_top=c1,
        control=control,
        properness=proper,
        controlled=controlled,
        passed=not items,
        items=items,
    )


@dataclass
class CategoricityCertificate:
    """Witness that `subset` factors through the half-line up to coarse homotopy."""

    subset: PointSubset
    ray: Ray
    j_map: MapSample
    homotopy: HomotopySample
    control: ControlBounds | None = None
    properness: PropernessCertificate | None = None
    closeness_at_top: Fraction | None = None


@dataclass
class CategoricalReport:
    certificate: CategoricityCertificate
    j_controlled: bool
    j_proper: bool
    top_on_ray: bool
    homotopy_cert: HomotopyCertificate
    passed: bool
    items: list


def verify_categorical(cert: CategoricityCertificate, bound, budget=None, proper_threshold=None):
    """Full categoricity check: j coarse, inclusion ~ alpha o j via the homotopy."""
    bound = frac(bound)
    subset, ray, j, H = cert.subset, cert.ray, cert.j_map, cert.homotopy
    items = []
    j_ctrl = estimate_control(j, budget) if j.domain.size >= 2 else None
    j_controlled = True if j_ctrl is None else j_ctrl.controlled_ok(subset.space.interior_radius)
    # j is proper iff far points get far ray parameters; envelope against
    # the subset's own norms
    j_prop = properness_envelope(
        subset.space.norm_int[subset.indices],
        subset.space.quantum,
        j.target.norm_int[j.values],
        j.target.quantum,
        subset.space.quantum,
        subset.space.interior_radius,
        frac(proper_threshold) if proper_threshold is not None else subset.space.interior_radius / 4,
    )
    if not j_controlled:
        items.append("j map is not controlled at the configured slope")
    if not j_prop.passed:
        items.append("j map properness failed")
    top_vals = H.top_map().values
    ray_mask = ray.member_mask()
    top_on_ray = bool(ray_mask[top_vals].all())
    if not top_on_ray:
        items.append("top slice leaves the ray image")
    alpha_j = MapSample(subset, subset.space, ray.indices[j.values])
    incl = inclusion_map(subset)
    hcert = verify_homotopy(H, incl, alpha_j, bound, budget, proper_threshold)
    items.extend(hcert.items)
    cert.control = hcert.control
    cert.properness = hcert.properness
    cert.closeness_at_top = hcert.closeness_top
    return CategoricalReport(
        certificate=cert,
        j_controlled=j_controlled,
        j_proper=j_prop.passed,
        top_on_ray=top_on_ray,
        homotopy_cert=hcert,
        passed=not items,
        items=items,
    )
