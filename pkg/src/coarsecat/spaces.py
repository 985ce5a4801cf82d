"""Finite truncations of pointed proper metric spaces.

Generators: l1 balls of Z^n (word metric of the standard generators),
rooted regular trees (graph metric), sampled lines/half-lines (absolute
difference metric), and small explicit distance matrices loaded from JSON.

Every space carries a `quantum` so that all pairwise distances are exact
integer multiples of it; queries convert rational radii to integer bounds
once and then compare integers.  Distances to infinity are never asserted:
statements about growth are certified only inside `interior_radius`
(3/4 of the truncation radius, rounded up).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .config import MAX_POINTS, CapacityError
from .exact import frac, frac_gcd, quanta_ge, quanta_lt

GRID = "grid"
TREE = "tree"
LINE = "line"
HALF_LINE = "half_line"
EXPLICIT = "explicit"


class Space:
    """Immutable finite pointed metric space with an exact distance oracle."""

    def __init__(self, kind, label, quantum, basepoint, truncation_radius, params=None):
        self.kind = kind
        self.label = label
        self.quantum = frac(quantum)
        self.basepoint = int(basepoint)
        self.truncation_radius = frac(truncation_radius)
        self.params = dict(params or {})
        self._norms = None

    # -- subclass hooks -------------------------------------------------
    @property
    def n_points(self) -> int:
        raise NotImplementedError

    def dist_int_pairs(self, ii, jj):
        """Elementwise integer distances between index arrays of equal length."""
        raise NotImplementedError

    def dist_int_from(self, i, js=None):
        """Integer distances from point i to js (default: all points)."""
        raise NotImplementedError

    def point_repr(self, i):
        raise NotImplementedError

    # -- shared API ------------------------------------------------------
    def dist_int(self, i, j) -> int:
        return int(self.dist_int_pairs(np.asarray([i]), np.asarray([j]))[0])

    def dist(self, i, j) -> Fraction:
        return self.dist_int(i, j) * self.quantum

    def dist_int_block(self, ii, jj):
        ii = np.asarray(ii, dtype=np.int64)
        jj = np.asarray(jj, dtype=np.int64)
        out = np.empty((len(ii), len(jj)), dtype=np.int64)
        for row, i in enumerate(ii):
            out[row] = self.dist_int_from(int(i), jj)
        return out

    @property
    def norm_int(self):
        if self._norms is None:
            self._norms = self.dist_int_from(self.basepoint)
        return self._norms

    def norm(self, i) -> Fraction:
        return int(self.norm_int[i]) * self.quantum

    @property
    def interior_radius(self) -> Fraction:
        return Fraction(math.ceil(Fraction(3, 4) * self.truncation_radius))

    def __len__(self):
        return self.n_points

    def __repr__(self):
        return f"<Space {self.label}: {self.kind}, {self.n_points} points>"


def _check_capacity(count, max_points):
    limit = MAX_POINTS if max_points is None else max_points
    if count > limit:
        raise CapacityError(f"space would have {count} points, limit is {limit}")


class GridSpace(Space):
    """l1 ball of Z^dim about the origin, word metric of standard generators."""

    def __init__(self, coords, radius, label, dim):
        super().__init__(GRID, label, 1, 0, radius, {"dim": dim, "radius": radius})
        self.dim = dim
        self.coords = coords
        base = 2 * radius + 1
        self._base = base
        self._keys = self._pack(coords)
        # enumeration is lexicographic, so keys arrive sorted
        origin = np.zeros((1, dim), dtype=coords.dtype)
        self.basepoint = int(self.index_of_coords(origin)[0])

    def _pack(self, coords):
        r = int(self.truncation_radius)
        key = np.zeros(len(coords), dtype=np.int64)
        for d in range(self.dim):
            key = key * self._base + (coords[:, d].astype(np.int64) + r)
        return key

    @property
    def n_points(self):
        return len(self.coords)

    def dist_int_pairs(self, ii, jj):
        diff = self.coords[np.asarray(ii)].astype(np.int64) - self.coords[np.asarray(jj)].astype(np.int64)
        return np.abs(diff).sum(axis=1)

    def dist_int_from(self, i, js=None):
        pts = self.coords if js is None else self.coords[np.asarray(js)]
        diff = pts.astype(np.int64) - self.coords[i].astype(np.int64)
        return np.abs(diff).sum(axis=1)

    def index_of_coords(self, coords):
        """Indices of coordinate rows; -1 where the point is outside the space."""
        coords = np.asarray(coords, dtype=np.int64)
        if coords.ndim == 1:
            coords = coords.reshape(1, -1)
        r = int(self.truncation_radius)
        inside = np.abs(coords).sum(axis=1) <= r
        inside &= np.abs(coords).max(axis=1) <= r
        keys = np.zeros(len(coords), dtype=np.int64)
        clipped = np.clip(coords, -r, r)
        for d in range(self.dim):
            keys = keys * self._base + (clipped[:, d] + r)
        pos = np.searchsorted(self._keys, keys)
        pos = np.clip(pos, 0, len(self._keys) - 1)
        ok = inside & (self._keys[pos] == keys)
        return np.where(ok, pos, -1).astype(np.int64)

    def point_repr(self, i):
        return tuple(int(c) for c in self.coords[i])


class TreeSpace(Space):
    """Rooted arity-regular tree truncated at a given depth, graph metric."""

    def __init__(self, arity, depth, label):
        count = (arity ** (depth + 1) - 1) // (arity - 1)
        super().__init__(TREE, label, 1, 0, depth, {"arity": arity, "depth": depth})
        self.arity = arity
        self.depth_max = depth
        self.level_start = np.array(
            [(arity**k - 1) // (arity - 1) for k in range(depth + 2)], dtype=np.int64
        )
        self._n = count
        ids = np.arange(count, dtype=np.int64)
        self.depth = (np.searchsorted(self.level_start, ids, side="right") - 1).astype(np.int64)
        pos = ids - self.level_start[self.depth]
        parent = np.where(
            self.depth > 0, self.level_start[np.maximum(self.depth - 1, 0)] + pos // arity, -1
        )
        self.parent = parent.astype(np.int64)

    @property
    def n_points(self):
        return self._n

    def children(self, i):
        d = int(self.depth[i])
        if d >= self.depth_max:
            return np.empty(0, dtype=np.int64)
        pos = i - int(self.level_start[d])
        start = int(self.level_start[d + 1]) + pos * self.arity
        return np.arange(start, start + self.arity, dtype=np.int64)

    def ancestor(self, ii, target_depth):
        """Ancestors of ii at the given depth (vectorized parent walk)."""
        out = np.asarray(ii, dtype=np.int64).copy()
        for _ in range(self.depth_max + 1):
            deeper = self.depth[out] > target_depth
            if not deeper.any():
                break
            out[deeper] = self.parent[out[deeper]]
        return out

    def dist_int_pairs(self, ii, jj):
        a = np.asarray(ii, dtype=np.int64).copy()
        b = np.asarray(jj, dtype=np.int64).copy()
        da = self.depth[a].copy()
        db = self.depth[b].copy()
        dist = np.zeros(len(a), dtype=np.int64)
        for _ in range(self.depth_max + 1):
            m = da > db
            if not m.any():
                break
            a[m] = self.parent[a[m]]
            da[m] -= 1
            dist[m] += 1
        for _ in range(self.depth_max + 1):
            m = db > da
            if not m.any():
                break
            b[m] = self.parent[b[m]]
            db[m] -= 1
            dist[m] += 1
        for _ in range(self.depth_max + 1):
            m = a != b
            if not m.any():
                break
            a[m] = self.parent[a[m]]
            b[m] = self.parent[b[m]]
            dist[m] += 2
        return dist

    def dist_int_from(self, i, js=None):
        js = np.arange(self._n, dtype=np.int64) if js is None else np.asarray(js, dtype=np.int64)
        ii = np.full(len(js), i, dtype=np.int64)
        return self.dist_int_pairs(ii, js)

    def point_repr(self, i):
        return ("node", int(i), "depth", int(self.depth[i]))


class LatticeLineSpace(Space):
    """Multiples of `step` on a line segment or half-line."""

    def __init__(self, kind, ks, step, radius, label):
        super().__init__(kind, label, step, 0, radius, {"step": step, "radius": radius})
        self.ks = ks
        self.basepoint = int(np.searchsorted(ks, 0))

    @property
    def n_points(self):
        return len(self.ks)

    def dist_int_pairs(self, ii, jj):
        return np.abs(self.ks[np.asarray(ii)] - self.ks[np.asarray(jj)]).astype(np.int64)

    def dist_int_from(self, i, js=None):
        pts = self.ks if js is None else self.ks[np.asarray(js)]
        return np.abs(pts - self.ks[i]).astype(np.int64)

    def index_of_k(self, k):
        pos = int(np.searchsorted(self.ks, k))
        if pos < len(self.ks) and self.ks[pos] == k:
            return pos
        return -1

    def point_repr(self, i):
        return int(self.ks[i]) * self.quantum


class ExplicitSpace(Space):
    """Small space defined by an explicit exact distance matrix."""

    def __init__(self, dist_int, quantum, basepoint, label):
        n = len(dist_int)
        radius = max(int(dist_int[basepoint][j]) for j in range(n)) * frac(quantum)
        super().__init__(EXPLICIT, label, quantum, basepoint, radius, {})
        self.matrix = np.asarray(dist_int, dtype=np.int64)

    @property
    def n_points(self):
        return len(self.matrix)

    def dist_int_pairs(self, ii, jj):
        return self.matrix[np.asarray(ii), np.asarray(jj)]

    def dist_int_from(self, i, js=None):
        row = self.matrix[i]
        return row if js is None else row[np.asarray(js)]

    def point_repr(self, i):
        return int(i)


# ---------------------------------------------------------------------------
# builders


def _l1_ball_coords(dim, radius):
    if dim == 1:
        return np.arange(-radius, radius + 1, dtype=np.int32).reshape(-1, 1)
    parts = []
    for x in range(-radius, radius + 1):
        tail = _l1_ball_coords(dim - 1, radius - abs(x))
        head = np.full((len(tail), 1), x, dtype=np.int32)
        parts.append(np.hstack([head, tail]))
    return np.vstack(parts)


def grid_ball_count(dim, radius):
    """Lattice point count of the l1 ball, by the standard recurrence."""
    prev = [1] * (radius + 1)
    for _ in range(dim - 1):
        cur = []
        for r in range(radius + 1):
            cur.append(prev[r] + 2 * sum(prev[r - k] for k in range(1, r + 1)))
        prev = cur
    return prev[radius] + 2 * sum(prev[radius - k] for k in range(1, radius + 1)) if dim > 0 else 1


def build_grid_space(dim, radius, label=None, max_points=None) -> GridSpace:
    if dim < 1:
        raise ValueError("dim must be >= 1")
    if radius < 0:
        raise ValueError("radius must be >= 0")
    count = grid_ball_count(dim, radius) if radius > 0 else 1
    _check_capacity(count, max_points)
    coords = _l1_ball_coords(dim, radius) if radius > 0 else np.zeros((1, dim), dtype=np.int32)
    return GridSpace(coords, radius, label or f"grid({dim},{radius})", dim)


def build_tree_space(arity, depth, label=None, max_points=None) -> TreeSpace:
    if arity < 2:
        raise ValueError("arity must be >= 2")
    if depth < 1:
        raise ValueError("depth must be >= 1")
    count = (arity ** (depth + 1) - 1) // (arity - 1)
    _check_capacity(count, max_points)
    return TreeSpace(arity, depth, label or f"tree({arity},{depth})")


def build_sampled_line(step, radius, label=None, max_points=None) -> LatticeLineSpace:
    step = frac(step)
    radius = frac(radius)
    if not (0 < step <= 1):
        raise ValueError("step must satisfy 0 < step <= 1")
    kmax = math.floor(radius / step)
    _check_capacity(2 * kmax + 1, max_points)
    ks = np.arange(-kmax, kmax + 1, dtype=np.int64)
    return LatticeLineSpace(LINE, ks, step, kmax * step, label or f"line({step},{radius})")


def build_half_line(step, radius, label=None, max_points=None) -> LatticeLineSpace:
    step = frac(step)
    radius = frac(radius)
    kmax = math.floor(radius / step)
    _check_capacity(kmax + 1, max_points)
    ks = np.arange(0, kmax + 1, dtype=np.int64)
    return LatticeLineSpace(HALF_LINE, ks, step, kmax * step, label or f"halfline({step},{radius})")


def build_explicit_space(dist_matrix, quantum=1, basepoint=0, label="explicit") -> ExplicitSpace:
    return ExplicitSpace(dist_matrix, quantum, basepoint, label)


# ---------------------------------------------------------------------------
# subsets, balls, rays


@dataclass(frozen=True)
class PointSubset:
    """Sorted, duplicate-free point indices of one space."""

    space: Space
    indices: np.ndarray

    @staticmethod
    def from_indices(space, indices) -> "PointSubset":
        idx = np.unique(np.asarray(indices, dtype=np.int64))
        if len(idx) and (idx[0] < 0 or idx[-1] >= space.n_points):
            raise ValueError("subset index out of range")
        return PointSubset(space, idx)

    @staticmethod
    def from_mask(space, mask) -> "PointSubset":
        return PointSubset(space, np.nonzero(mask)[0].astype(np.int64))

    @staticmethod
    def full(space) -> "PointSubset":
        return PointSubset(space, np.arange(space.n_points, dtype=np.int64))

    @property
    def size(self) -> int:
        return len(self.indices)

    def mask(self):
        m = np.zeros(self.space.n_points, dtype=bool)
        m[self.indices] = True
        return m

    def union(self, other) -> "PointSubset":
        return PointSubset(self.space, np.union1d(self.indices, other.indices))

    def intersect(self, other) -> "PointSubset":
        return PointSubset(self.space, np.intersect1d(self.indices, other.indices))

    def minus(self, other) -> "PointSubset":
        return PointSubset(self.space, np.setdiff1d(self.indices, other.indices))

    def contains(self, idx) -> bool:
        pos = np.searchsorted(self.indices, idx)
        return bool(pos < len(self.indices) and self.indices[pos] == idx)

    def norms_int(self):
        return self.space.norm_int[self.indices]

    def __len__(self):
        return len(self.indices)


def ball(space, center, r) -> PointSubset:
    """B_center(r) = {x : d(x, center) < r}, strict per the paper's formula."""
    bound = quanta_lt(r, space.quantum)
    if bound < 0:
        return PointSubset(space, np.empty(0, dtype=np.int64))
    d = space.dist_int_from(center)
    return PointSubset.from_mask(space, d <= bound)


def annulus(space, r, R, center=None) -> PointSubset:
    """A_p(r,R) = B_p(R) minus B_p(r) = {x : r <= d(x,p) < R}."""
    if frac(r) > frac(R):
        raise ValueError("annulus needs r <= R")
    center = space.basepoint if center is None else center
    lo = quanta_ge(r, space.quantum)
    hi = quanta_lt(R, space.quantum)
    d = space.dist_int_from(center)
    return PointSubset.from_mask(space, (d >= lo) & (d <= hi))


def norm(space, i) -> Fraction:
    return space.norm(i)


@dataclass
class Ray:
    """Tabulated coarse ray r_0, r_1, ... with r_0 = basepoint."""

    space: Space
    indices: np.ndarray
    step_bound: Fraction = field(default_factory=lambda: Fraction(1))

    def __post_init__(self):
        if int(self.indices[0]) != self.space.basepoint:
            raise ValueError("ray must start at the basepoint")
        steps = self.space.dist_int_pairs(self.indices[:-1], self.indices[1:])
        worst = int(steps.max()) * self.space.quantum if len(steps) else Fraction(0)
        if worst > self.step_bound:
            self.step_bound = worst
        norms = self.space.norm_int[self.indices]
        if np.any(np.diff(norms) < 0):
            raise ValueError("ray norms must be nondecreasing")

    @property
    def length(self) -> int:
        return len(self.indices) - 1

    def member_mask(self):
        m = np.zeros(self.space.n_points, dtype=bool)
        m[self.indices] = True
        return m

    def position_of(self, idx_array):
        """Ray parameter (position) of each index; -1 if not on the ray."""
        order = np.argsort(self.indices, kind="stable")
        sorted_idx = self.indices[order]
        pos = np.searchsorted(sorted_idx, idx_array)
        pos = np.clip(pos, 0, len(sorted_idx) - 1)
        ok = sorted_idx[pos] == idx_array
        return np.where(ok, order[pos], -1)

    def reaches_truncation(self) -> bool:
        tail = self.space.norm(int(self.indices[-1]))
        return tail >= self.space.truncation_radius - self.step_bound


def grid_axis_ray(space: GridSpace, axis=0, sign=1) -> Ray:
    r = int(space.truncation_radius)
    coords = np.zeros((r + 1, space.dim), dtype=np.int64)
    coords[:, axis] = sign * np.arange(r + 1)
    idx = space.index_of_coords(coords)
    if (idx < 0).any():
        raise ValueError("axis ray leaves the space")
    return Ray(space, idx.astype(np.int64))


def tree_ray(space: TreeSpace, child=0) -> Ray:
    ids = [0]
    node = 0
    for _ in range(space.depth_max):
        node = int(space.children(node)[child])
        ids.append(node)
    return Ray(space, np.asarray(ids, dtype=np.int64))


def line_ray(space: LatticeLineSpace, sign=1) -> Ray:
    kmax = int(space.ks[-1]) if sign > 0 else -int(space.ks[0])
    idx = [space.index_of_k(sign * k) for k in range(kmax + 1)]
    return Ray(space, np.asarray(idx, dtype=np.int64))


def check_triangle_sampled(space, n_triples=100_000, seed=0):
    """Sampled triangle-inequality audit; returns the violation count."""
    rng = np.random.default_rng(seed)
    n = space.n_points
    a = rng.integers(0, n, n_triples)
    b = rng.integers(0, n, n_triples)
    c = rng.integers(0, n, n_triples)
    dab = space.dist_int_pairs(a, b)
    dbc = space.dist_int_pairs(b, c)
    dac = space.dist_int_pairs(a, c)
    return int(np.count_nonzero(dac > dab + dbc))
