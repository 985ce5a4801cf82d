"""Sampled maps between spaces and the map-level predicates.

A MapSample records a map on every point of a source truncation (or of a
subset of it).  estimate_control tabulates the tightest (rho1, rho2) pair
over the scanned pairs; check_proper tabulates the lower norm envelope.
Both certificates are explicitly truncation-relative: a finite sample can
never prove a for-all-r quantifier, so the certificates carry their grids.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import config
from .config import ScanBudget
from .exact import frac
from .spaces import PointSubset, Space


class DomainMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class MapSample:
    """Total map domain -> target, tabulated on the domain's indices."""

    domain: PointSubset
    target: Space
    values: np.ndarray

    def __post_init__(self):
        if len(self.values) != self.domain.size:
            raise ValueError("values must be total on the domain")
        if len(self.values) and (self.values.min() < 0 or self.values.max() >= self.target.n_points):
            raise ValueError("map value out of target range")

    @property
    def source(self) -> Space:
        return self.domain.space

    def value_at(self, space_indices):
        idx = np.asarray(space_indices, dtype=np.int64)
        pos = np.searchsorted(self.domain.indices, idx)
        pos = np.clip(pos, 0, self.domain.size - 1)
        if not np.all(self.domain.indices[pos] == idx):
            raise DomainMismatchError("index outside the map's domain")
        return self.values[pos]

    def compose_after(self, inner: "MapSample") -> "MapSample":
        """self o inner (inner first)."""
        if inner.target is not self.source:
            raise DomainMismatchError("composition signature mismatch")
        return MapSample(inner.domain, self.target, self.value_at(inner.values))


def identity_map(space: Space) -> MapSample:
    full = PointSubset.full(space)
    return MapSample(full, space, full.indices.copy())


def inclusion_map(subset: PointSubset) -> MapSample:
    return MapSample(subset, subset.space, subset.indices.copy())


def constant_map(domain: PointSubset, target: Space, target_idx=None) -> MapSample:
    t = target.basepoint if target_idx is None else int(target_idx)
    return MapSample(domain, target, np.full(domain.size, t, dtype=np.int64))


# ---------------------------------------------------------------------------
# control bounds


@dataclass
class ControlBounds:
    """Tightest step functions rho1 <= d(f x, f x') <= rho2 on the scan grid."""

    src_quantum: Fraction
    tgt_quantum: Fraction
    grid_int: np.ndarray
    upper_int: np.ndarray
    lower_int: np.ndarray
    sampled: bool
    seed: int | None
    scanned_pairs: int

    def grid(self):
        return [int(v) * self.src_quantum for v in self.grid_int]

    def rho_upper_at(self, r) -> Fraction:
        from .exact import quanta_le

        bound = quanta_le(frac(r), self.src_quantum)
        pos = int(np.searchsorted(self.grid_int, bound, side="right")) - 1
        if pos < 0:
            return Fraction(0)
        return int(self.upper_int[pos]) * self.tgt_quantum

    def rho_lower_at(self, r):
        from .exact import quanta_ge

        bound = quanta_ge(frac(r), self.src_quantum)
        pos = int(np.searchsorted(self.grid_int, bound, side="left"))
        if pos >= len(self.grid_int):
            return None  # no pair that far apart: +infinity sentinel
        return int(self.lower_int[pos]) * self.tgt_quantum

    def max_upper(self) -> Fraction:
        return int(self.upper_int[-1]) * self.tgt_quantum if len(self.upper_int) else Fraction(0)

    def controlled_ok(self, interior_radius, slope_limit=None) -> bool:
        """Finite-sample stand-in for "controlled": bounded slope at R_int."""
        slope = config.CONTROL_SLOPE_LIMIT if slope_limit is None else slope_limit
        r = frac(interior_radius)
        if r <= 0:
            return True
        return self.rho_upper_at(r) <= slope * r

    def lower_growth_ok(self, interior_radius, threshold=None) -> bool:
        """Finite-sample stand-in for rho1 -> infinity: rho_lower(R_int/2) >= thr."""
        thr = config.CONTROL_LOWER_THRESHOLD if threshold is None else threshold
        lo = self.rho_lower_at(frac(interior_radius) / 2)
        return lo is None or lo >= thr


def _pair_sample(m, n_pairs, seed):
    rng = np.random.default_rng(seed)
    ii = rng.integers(0, m, n_pairs * 2)
    jj = rng.integers(0, m, n_pairs * 2)
    keep = ii != jj
    return ii[keep][:n_pairs], jj[keep][:n_pairs]


def estimate_control(f: MapSample, budget: ScanBudget | None = None) -> ControlBounds:
    """Exact (or seeded-subsampled) (rho1, rho2) tabulation over source pairs."""
    if f.domain.size < 2:
        raise ValueError("estimate_control needs a source with >= 2 points")
    budget = budget or ScanBudget()
    m = f.domain.size
    total = m * (m - 1) // 2
    sampled, n_scan = budget.plan(total)

    src = f.source
    tgt = f.target
    dom = f.domain.indices
    vals = f.values

    max_d = int(src.dist_int_from(dom[np.argmax(src.norm_int[dom])], dom).max()) if m else 0
    # conservative upper bound on source diameter in quanta
    max_d = max(max_d, 1)
    up_by = np.full(2 * max_d + 2, -1, dtype=np.int64)
    lo_by = np.full(2 * max_d + 2, np.iinfo(np.int64).max, dtype=np.int64)

    def absorb(ds, dt):
        big = len(up_by) - 1
        ds = np.minimum(ds, big)
        np.maximum.at(up_by, ds, dt)
        np.minimum.at(lo_by, ds, dt)

    if not sampled:
        block = max(1, 4_000_000 // max(m, 1))
        for i0 in range(0, m, block):
            i1 = min(m, i0 + block)
            ds = src.dist_int_block(dom[i0:i1], dom)
            dt = tgt.dist_int_block(vals[i0:i1], vals)
            tri = np.nonzero(np.arange(m)[None, :] > np.arange(i0, i1)[:, None])
            absorb(ds[tri], dt[tri])
    else:
        chunk = 1_000_000
        done = 0
        rng_seed = budget.seed
        while done < n_scan:
            take = min(chunk, n_scan - done)
            ii, jj = _pair_sample(m, take, rng_seed + done)
            ds = src.dist_int_pairs(dom[ii], dom[jj])
            dt = tgt.dist_int_pairs(vals[ii], vals[jj])
            absorb(ds, dt)
            done += take

    seen = np.nonzero(up_by >= 0)[0]
    upper = np.maximum.accumulate(up_by[seen])
    lower = np.minimum.accumulate(lo_by[seen][::-1])[::-1]
    return ControlBounds(
        src_quantum=src.quantum,
        tgt_quantum=tgt.quantum,
        grid_int=seen,
        upper_int=upper,
        lower_int=lower,
        sampled=sampled,
        seed=budget.seed if sampled else None,
        scanned_pairs=n_scan,
    )


# ---------------------------------------------------------------------------
# properness


@dataclass
class PropernessCertificate:
    shell_width: Fraction
    shell_starts: list
    envelope: list
    interior_radius: Fraction
    threshold: Fraction
    passed: bool
    empty_shells: list = field(default_factory=list)

    def envelope_at_interior(self):
        best = None
        for start, env in zip(self.shell_starts, self.envelope):
            if start <= self.interior_radius:
                best = env
        return best


def properness_envelope(
    src_norm_int,
    src_quantum: Fraction,
    img_norm_int,
    img_quantum: Fraction,
    width: Fraction,
    interior_radius: Fraction,
    threshold: Fraction,
) -> PropernessCertificate:
    """Core envelope computation shared by maps and homotopies."""
    src_norm_int = np.asarray(src_norm_int, dtype=np.int64)
    img_norm_int = np.asarray(img_norm_int, dtype=np.int64)
    # shell index = floor(norm_int * src_quantum / width), kept in integers
    shell_idx = (src_norm_int * (src_quantum.numerator * width.denominator)) // (
        src_quantum.denominator * width.numerator
    )
    n_shell = int(shell_idx.max()) + 1 if len(shell_idx) else 0
    env = np.full(n_shell, np.iinfo(np.int64).max, dtype=np.int64)
    np.minimum.at(env, shell_idx, img_norm_int)
    filled = env != np.iinfo(np.int64).max
    empty = [int(s) for s in np.nonzero(~filled)[0]]
    starts = [int(s) * width for s in np.nonzero(filled)[0]]
    vals = np.maximum.accumulate(env[filled]) if filled.any() else np.empty(0, dtype=np.int64)
    envelope = [int(v) * img_quantum for v in vals]
    at_interior = None
    for s, v in zip(starts, envelope):
        if s <= interior_radius:
            at_interior = v
    passed = at_interior is not None and at_interior > threshold
    return PropernessCertificate(
        shell_width=width,
        shell_starts=starts,
        envelope=envelope,
        interior_radius=interior_radius,
        threshold=threshold,
        passed=passed,
        empty_shells=empty,
    )


def check_proper(f: MapSample, growth_threshold, shell_width=None) -> PropernessCertificate:
    """Empirical properness: the image-norm lower envelope over source shells."""
    src = f.source
    width = frac(shell_width) if shell_width is not None else src.quantum
    return properness_envelope(
        src.norm_int[f.domain.indices],
        src.quantum,
        f.target.norm_int[f.values],
        f.target.quantum,
        width,
        src.interior_radius,
        frac(growth_threshold),
    )


# ---------------------------------------------------------------------------
# closeness and coarse equivalence


def closeness(f: MapSample, g: MapSample) -> Fraction:
    """max_x d(f(x), g(x)); a pseudometric on maps with common signature."""
    if f.source is not g.source or f.target is not g.target:
        raise DomainMismatchError("closeness needs a common signature")
    if not np.array_equal(f.domain.indices, g.domain.indices):
        raise DomainMismatchError("closeness needs a common domain")
    if f.domain.size == 0:
        return Fraction(0)
    d = f.target.dist_int_pairs(f.values, g.values)
    return int(d.max()) * f.target.quantum


@dataclass
class EquivalenceCertificate:
    bound: Fraction
    closeness_gf: Fraction
    closeness_fg: Fraction
    f_controlled: bool
    g_controlled: bool
    f_proper: bool
    g_proper: bool
    passed: bool

    def failures(self):
        out = []
        if self.closeness_gf > self.bound:
            out.append(f"g o f is {self.closeness_gf} from the identity (> {self.bound})")
        if self.closeness_fg > self.bound:
            out.append(f"f o g is {self.closeness_fg} from the identity (> {self.bound})")
        if not (self.f_controlled and self.g_controlled):
            out.append("control growth check failed")
        if not (self.f_proper and self.g_proper):
            out.append("properness check failed")
        return out


def check_coarse_equivalence(
    f: MapSample, g: MapSample, bound, proper_threshold=None, budget=None
) -> EquivalenceCertificate:
    if f.source is not g.target or f.target is not g.source:
        raise DomainMismatchError("need maps X->Y and Y->X")
    bound = frac(bound)
    gf = g.compose_after(f)
    fg = f.compose_after(g)
    c_gf = closeness(gf, identity_map(f.source))
    c_fg = closeness(fg, identity_map(g.source))
    ctrl_f = estimate_control(f, budget)
    ctrl_g = estimate_control(g, budget)
    thr_f = frac(proper_threshold) if proper_threshold is not None else f.source.interior_radius / 4
    thr_g = frac(proper_threshold) if proper_threshold is not None else g.source.interior_radius / 4
    prop_f = check_proper(f, thr_f)
    prop_g = check_proper(g, thr_g)
    f_ok = ctrl_f.controlled_ok(f.source.interior_radius) and ctrl_f.lower_growth_ok(
        f.source.interior_radius
    )
    g_ok = ctrl_g.controlled_ok(g.source.interior_radius) and ctrl_g.lower_growth_ok(
        g.source.interior_radius
    )
    passed = (
        c_gf <= bound and c_fg <= bound and f_ok and g_ok and prop_f.passed and prop_g.passed
    )
    return EquivalenceCertificate(
        bound=bound,
        closeness_gf=c_gf,
        closeness_fg=c_fg,
        f_controlled=f_ok,
        g_controlled=g_ok,
        f_proper=prop_f.passed,
        g_proper=prop_g.passed,
        passed=passed,
    )
