"""Closed-form homotopy constructions on planar grids.

The quarter-turn staircase (constant norm up to a 1-dip) realizes the
deformation of an axis ray onto the other axis and of a half-plane onto
its boundary ray; both are used as categoricity witnesses and as the
proper homotopy fed to the upgrade machinery.
"""

from __future__ import annotations

import numpy as np

from .cylinders import CategoricityCertificate, CylinderSample, HomotopySample
from .maps import MapSample
from .spaces import GridSpace, LatticeLineSpace, PointSubset, Ray, build_half_line, grid_axis_ray


def rotation_to_y_axis(coords, m, vertical_sign=1):
    """Point after m unit steps of the staircase from (a, b) to
    (0, b + sign*|a|); x moves first, so the path dips at most 1 below the
    starting l1 sphere."""
    coords = np.asarray(coords, dtype=np.int64)
    a = coords[:, 0]
    b = coords[:, 1]
    m = np.clip(np.asarray(m, dtype=np.int64), 0, 2 * np.abs(a))
    j = m // 2
    r = m % 2
    sa = np.sign(a)
    out = np.empty_like(coords)
    out[:, 0] = a - sa * np.minimum(j + r, np.abs(a))
    out[:, 1] = b + vertical_sign * j
    return out


def rotation_min_norm(coords):
    """Exact min l1 norm along the staircase path."""
    coords = np.asarray(coords, dtype=np.int64)
    n = np.abs(coords).sum(axis=1)
    return np.where(coords[:, 0] != 0, np.maximum(n - 1, 0), n)


def make_rotation_hprime(grid: GridSpace, half_line: LatticeLineSpace) -> HomotopySample:
    """h'(s, t) for the proper homotopy between the x-axis and y-axis ray
    inclusions: radius-s quarter turn traversed at two moves per unit of s,
    sampled on the half-line cylinder with t_step 1/2."""
    if grid.dim != 2:
        raise ValueError("rotation homotopy needs a 2-dim grid target")
    base = PointSubset.full(half_line)
    ss = half_line.ks[base.indices].astype(np.int64)
    if half_line.quantum != 1:
        raise ValueError("use a unit-step half-line as the rotation source")
    proj_int = 2 * ss  # t lattice of step 1/2 up to p(s) = s
    cyl = CylinderSample(base, proj_int, t_step="1/2")

    def fn(x_idx, t_half):
        s = half_line.ks[x_idx].astype(np.int64)
        pts = np.stack([s, np.zeros_like(s)], axis=1)
        rot = rotation_to_y_axis(pts, t_half)
        return grid.index_of_coords(rot)

    mins = np.maximum(ss - 1, 0)
    mins[ss == 0] = 0
    return HomotopySample(cyl, grid, value_fn=fn, norm_min_int_per_x=mins, note="rotation")


def half_plane_witness(space: GridSpace, sign=1, budget=None):
    """Categoricity data for a half-plane {sign * y >= 0} of a planar grid:
    every point rotates at constant norm onto the vertical ray, giving the
    combing-style deformation of the two-halves cover example.

    The cylinder projection is 2*|x| (a coarse map), padding each path at
    its endpoint; p(x) = k_x itself is not proper near the ray.
    """
    if space.dim != 2:
        raise ValueError("half-plane witness needs a 2-dim grid")
    ys = space.coords[:, 1].astype(np.int64)
    mask = (sign * ys) >= 0
    subset = PointSubset.from_mask(space, mask)
    ray = grid_axis_ray(space, axis=1, sign=sign)
    coords = space.coords[subset.indices].astype(np.int64)
    norms = np.abs(coords).sum(axis=1)
    k_x = 2 * np.abs(coords[:, 0])
    proj_int = 2 * norms  # >= k_x, proper and controlled
    cyl = CylinderSample(subset, proj_int, space.quantum)

    def fn(x_idx, t_int):
        pts = space.coords[x_idx].astype(np.int64)
        return space.index_of_coords(rotation_to_y_axis(pts, t_int, vertical_sign=sign))

    mins = rotation_min_norm(coords)
    H = HomotopySample(cyl, space, value_fn=fn, norm_min_int_per_x=mins, note="half-plane")
    # endpoint (0, sign*(|a|+|b|)) sits at ray parameter ||x||
    j_target = build_half_line(1, int(space.truncation_radius))
    j_map = MapSample(subset, j_target, norms.astype(np.int64))
    cert = CategoricityCertificate(subset=subset, ray=ray, j_map=j_map, homotopy=H)
    return cert
