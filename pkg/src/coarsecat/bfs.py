"""Vectorized breadth-first search over the bundled graph-like spaces.

Grid, tree and line spaces are connected graphs at one quantum per step;
BFS here computes exact shortest-path distance fields, optionally inside
the complement of a forbidden set, and reconstructs deterministic paths
by descending the distance field (smallest point index wins ties).
"""

from __future__ import annotations

import numpy as np

from .spaces import GRID, HALF_LINE, LINE, TREE, GridSpace, LatticeLineSpace, TreeSpace

UNREACHED = -1


def neighbors_of(space, frontier):
    """Neighbor indices of the frontier points; flat array, -1 where absent."""
    if isinstance(space, GridSpace):
        coords = space.coords[frontier].astype(np.int64)
        n, dim = coords.shape
        cand = np.repeat(coords[:, None, :], 2 * dim, axis=1)
        for d in range(dim):
            cand[:, 2 * d, d] += 1
            cand[:, 2 * d + 1, d] -= 1
        return space.index_of_coords(cand.reshape(-1, dim))
    if isinstance(space, TreeSpace):
        par = space.parent[frontier]
        arity = space.arity
        deep = space.depth[frontier] < space.depth_max
        kid_block = np.full((len(frontier), arity), -1, dtype=np.int64)
        if deep.any():
            f = frontier[deep]
            pos = f - space.level_start[space.depth[f]]
            start = space.level_start[space.depth[f] + 1] + pos * arity
            kid_block[deep] = start[:, None] + np.arange(arity)[None, :]
        return np.hstack([par.reshape(-1, 1), kid_block]).reshape(-1)
    if isinstance(space, LatticeLineSpace):
        ks = space.ks[frontier]
        lo, hi = int(space.ks[0]), int(space.ks[-1])
        left = np.where(ks - 1 >= lo, frontier - 1, -1)
        right = np.where(ks + 1 <= hi, frontier + 1, -1)
        return np.hstack([left.reshape(-1, 1), right.reshape(-1, 1)]).reshape(-1)
    raise TypeError(f"BFS needs a graph-generated space, got kind={space.kind}")


def distance_field(space, sources, forbidden_mask=None, cap=None):
    """Shortest-path distances (in steps) from the source set.

    forbidden points are never entered; unreachable points get -1.
    """
    n = space.n_points
    dist = np.full(n, UNREACHED, dtype=np.int64)
    sources = np.asarray(sources, dtype=np.int64)
    if forbidden_mask is not None:
        sources = sources[~forbidden_mask[sources]]
    dist[sources] = 0
    frontier = np.unique(sources)
    level = 0
    while len(frontier):
        if cap is not None and level >= cap:
            break
        level += 1
        nbr = neighbors_of(space, frontier)
        nbr = nbr[nbr >= 0]
        if forbidden_mask is not None:
            nbr = nbr[~forbidden_mask[nbr]]
        nbr = nbr[dist[nbr] == UNREACHED]
        if not len(nbr):
            break
        frontier = np.unique(nbr)
        dist[frontier] = level
    return dist


def descend_paths(space, dist, starts, forbidden_mask=None):
    """Deterministic shortest paths from each start down to a 0 point.

    Returns a list of index arrays, each of length dist[start]+1 and ending
    at a source.  Raises if any start is unreached.
    """
    starts = np.asarray(starts, dtype=np.int64)
    if len(starts) == 0:
        return []
    if (dist[starts] < 0).any():
        bad = starts[dist[starts] < 0][0]
        raise ValueError(f"point {int(bad)} is unreachable")
    lengths = dist[starts].astype(np.int64)
    max_len = int(lengths.max()) + 1
    table = np.full((len(starts), max_len), -1, dtype=np.int64)
    table[:, 0] = starts
    active = np.nonzero(lengths > 0)[0]
    cur = starts.copy()
    big = np.iinfo(np.int64).max
    step = 0
    while len(active):
        step += 1
        pos = cur[active]
        nbr = neighbors_of(space, pos)
        per = len(nbr) // len(pos)
        nbr = nbr.reshape(len(pos), per)
        ok = nbr >= 0
        if forbidden_mask is not None:
            ok &= ~forbidden_mask[np.clip(nbr, 0, None)]
        d = np.where(ok, dist[np.clip(nbr, 0, None)], big)
        ok &= d == (dist[pos] - 1)[:, None]
        # smallest-index admissible neighbor, for byte-identical reruns
        masked = np.where(ok, nbr, big)
        chosen = masked.min(axis=1)
        if (chosen == big).any():
            raise RuntimeError("distance field descent found no admissible step")
        cur[active] = chosen
        table[active, step] = chosen
        active = active[dist[chosen] > 0]
    return [table[i, : lengths[i] + 1] for i in range(len(starts))]
