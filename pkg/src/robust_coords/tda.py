"""Vietoris-Rips persistent homology over prime fields, dimensions 0..2.

The filtration assigns each simplex the largest pairwise distance among its
vertices; simplices beyond the radius cap are never built, so features
surviving the cap come out as infinite bars.  Persistence pairs are read off
a column reduction of the boundary matrix over F_p, processed one dimension
block at a time from the top dimension down so the clearing shortcut can
skip columns that are already known to vanish.

Point sets larger than the landmark budget are first thinned by farthest-
point (maxmin) sampling, which is deterministic: it starts from the most
eccentric point and breaks ties by index.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist, squareform

from .core_types import Configuration
from .errors import NotSymmetric, TooManySimplices

__all__ = [
    "PersistenceDiagram",
    "rips_persistence",
    "rips_from_distances",
    "max_bar_length",
    "maxmin_landmarks",
]

DEFAULT_LANDMARK_BUDGET = 150
DEFAULT_MAX_SIMPLICES = 10_000_000


@dataclass(frozen=True)
class PersistenceDiagram:
    """Birth/death bars per homology dimension over one prime field.

    ``bars[q]`` is a (b, 2) float array sorted by (birth, death); deaths
    beyond the filtration cap are ``inf``.  Dimension 0 carries one
    infinite bar per connected component at the cap.
    """

    prime: int
    max_radius: float
    bars: dict

    def dims(self):
        return sorted(self.bars)


def _check_prime(p):
    if p < 2 or any(p % q == 0 for q in range(2, int(p**0.5) + 1)):
        raise ValueError(f"{p} is not prime")


def maxmin_landmarks(dmat, count):
    """Greedy farthest-point subset of a distance matrix, sorted by index.

    Starts at the point with the largest total distance to the rest (most
    eccentric; ties broken by lowest index), then repeatedly adds the point
    farthest from the chosen set.
    """
    m = dmat.shape[0]
    count = min(count, m)
    start = int(dmat.sum(axis=1).argmax())
    chosen = [start]
    closest = dmat[start].copy()
    while len(chosen) < count:
        nxt = int(closest.argmax())
        chosen.append(nxt)
        np.minimum(closest, dmat[nxt], out=closest)
    return np.sort(np.asarray(chosen))


def _lex_sorted(verts, filts):
    keys = tuple(verts[:, c] for c in range(verts.shape[1] - 1, -1, -1))
    order = np.lexsort(keys + (filts,))
    return verts[order], filts[order]


def _build_simplices(dmat, max_dim, max_radius, max_simplices):
    """Per-dimension sorted vertex arrays and filtration values.

    Enumerates simplices of dimension 0 .. max_dim+1 whose filtration value
    (largest pairwise vertex distance) is at most max_radius.
    """
    m = dmat.shape[0]
    adj = dmat <= max_radius
    np.fill_diagonal(adj, False)
    out = {0: (np.arange(m, dtype=np.int64)[:, None], np.zeros(m))}
    total = m

    iu, ju = np.nonzero(np.triu(adj, 1))
    ew = dmat[iu, ju]
    edges = np.column_stack([iu, ju]).astype(np.int64)
    total += len(edges)
    if total > max_simplices:
        raise TooManySimplices(f"{total} simplices exceed budget {max_simplices}")
    out[1] = _lex_sorted(edges, ew)

    if max_dim + 1 >= 2:
        tri_v, tri_f = [], []
        cols = np.arange(m)
        e_v, e_f = out[1]
        for (i, j), wij in zip(e_v, e_f):
            common = adj[i] & adj[j]
            ks = cols[j + 1 :][common[j + 1 :]]
            if ks.size:
                tri_v.append(
                    np.column_stack([np.full(ks.size, i), np.full(ks.size, j), ks])
                )
                tri_f.append(np.maximum(wij, np.maximum(dmat[i, ks], dmat[j, ks])))
        if tri_v:
            tv = np.concatenate(tri_v).astype(np.int64)
            tf = np.concatenate(tri_f)
        else:
            tv = np.empty((0, 3), dtype=np.int64)
            tf = np.empty(0)
        total += len(tv)
        if total > max_simplices:
            raise TooManySimplices(f"{total} simplices exceed budget {max_simplices}")
        out[2] = _lex_sorted(tv, tf)

    if max_dim + 1 >= 3:
        tet_v, tet_f = [], []
        tv, tf = out[2]
        for (i, j, k), wijk in zip(tv, tf):
            common = adj[i] & adj[j] & adj[k]
            ls = cols[k + 1 :][common[k + 1 :]]
            if ls.size:
                tet_v.append(
                    np.column_stack(
                        [
                            np.full(ls.size, i),
                            np.full(ls.size, j),
                            np.full(ls.size, k),
                            ls,
                        ]
                    )
                )
                wl = np.maximum(
                    dmat[i, ls], np.maximum(dmat[j, ls], dmat[k, ls])
                )
                tet_f.append(np.maximum(wijk, wl))
        if tet_v:
            qv = np.concatenate(tet_v).astype(np.int64)
            qf = np.concatenate(tet_f)
        else:
            qv = np.empty((0, 4), dtype=np.int64)
            qf = np.empty(0)
        total += len(qv)
        if total > max_simplices:
            raise TooManySimplices(f"{total} simplices exceed budget {max_simplices}")
        out[3] = _lex_sorted(qv, qf)

    return out


def _reduce_block(col_verts, row_verts, m, p, skip_cols):
    """Column-reduce one boundary block over F_p.

    Columns are dim-q simplices in filtration order; rows index the sorted
    dim-(q-1) simplices.  ``skip_cols`` marks columns cleared by the block
    above.  Returns (pairs: row -> column, zero_columns: list).
    """
    row_of = {}
    for t, verts in enumerate(row_verts.tolist()):
        code = 0
        for v in verts:
            code = code * m + v
        row_of[code] = t

    pivots = {}
    pairs = {}
    zeros = []
    width = col_verts.shape[1]
    col_list = col_verts.tolist()
    push = heapq.heappush
    pop = heapq.heappop
    if p == 2:
        # F2 columns are plain row sets; addition is symmetric difference.
        for c in range(len(col_list)):
            if c in skip_cols:
                continue
            verts = col_list[c]
            rows_in = set()
            heap = []
            for t in range(width):
                code = 0
                for s in range(width):
                    if s != t:
                        code = code * m + verts[s]
                r = row_of[code]
                rows_in.add(r)
                push(heap, -r)
            while True:
                low = None
                while heap:
                    cand = -heap[0]
                    if cand in rows_in:
                        low = cand
                        break
                    pop(heap)
                if low is None:
                    zeros.append(c)
                    break
                hit = pivots.get(low)
                if hit is None:
                    pivots[low] = list(rows_in)
                    pairs[low] = c
                    break
                for r in hit:
                    if r in rows_in:
                        rows_in.discard(r)
                    else:
                        rows_in.add(r)
                        push(heap, -r)
        return pairs, zeros

    for c in range(len(col_list)):
        if c in skip_cols:
            continue
        verts = col_list[c]
        coeffs = {}
        heap = []
        for t in range(width):
            code = 0
            for s in range(width):
                if s != t:
                    code = code * m + verts[s]
            r = row_of[code]
            coeffs[r] = 1 if t % 2 == 0 else p - 1
            push(heap, -r)
        while True:
            low = None
            while heap:
                cand = -heap[0]
                if cand in coeffs:
                    low = cand
                    break
                pop(heap)
            if low is None:
                zeros.append(c)
                break
            hit = pivots.get(low)
            if hit is None:
                pivots[low] = (
                    list(coeffs.keys()),
                    list(coeffs.values()),
                    pow(int(coeffs[low]), p - 2, p),
                )
                pairs[low] = c
                break
            rows, vals, inv_piv = hit
            factor = (coeffs[low] * inv_piv) % p
            for r, v in zip(rows, vals):
                nv = (coeffs.get(r, 0) - factor * v) % p
                if nv:
                    if r not in coeffs:
                        push(heap, -r)
                    coeffs[r] = nv
                elif r in coeffs:
                    del coeffs[r]
    return pairs, zeros


def rips_from_distances(
    dmat,
    max_dim=1,
    p=2,
    max_radius=None,
    landmark_budget=DEFAULT_LANDMARK_BUDGET,
    max_simplices=DEFAULT_MAX_SIMPLICES,
):
    """Rips persistence of a finite metric space given as a distance matrix."""
    _check_prime(p)
    if not 0 <= max_dim <= 2:
        raise ValueError("max_dim must be 0, 1, or 2")
    dmat = np.asarray(dmat, dtype=float)
    if dmat.ndim != 2 or dmat.shape[0] != dmat.shape[1]:
        raise NotSymmetric("distance matrix must be square")
    if dmat.size and np.abs(dmat - dmat.T).max() > 1e-9 * max(1.0, dmat.max()):
        raise NotSymmetric("distance matrix is not symmetric")

    if dmat.shape[0] > landmark_budget:
        keep = maxmin_landmarks(dmat, landmark_budget)
        dmat = dmat[np.ix_(keep, keep)]
    if max_radius is None:
        max_radius = 0.5 * float(dmat.max())
    if not max_radius > 0:
        raise ValueError("max_radius must be positive")

    simplices = _build_simplices(dmat, max_dim, max_radius, max_simplices)
    m = dmat.shape[0]
    top = max(q for q in simplices)

    bars = {q: [] for q in range(max_dim + 1)}
    prev_pairs = {}
    for q in range(top, 0, -1):
        col_verts, col_filts = simplices[q]
        row_verts, row_filts = simplices[q - 1]
        pairs, zero_cols = _reduce_block(col_verts, row_verts, m, p, prev_pairs)
        for r, c in pairs.items():
            birth, death = row_filts[r], col_filts[c]
            if death > birth:
                bars[q - 1].append((birth, death))
        if q <= max_dim:
            qf = col_filts
            for c in zero_cols:
                if c not in prev_pairs:
                    bars[q].append((qf[c], np.inf))
        prev_pairs = pairs
    for v in range(m):
        if v not in prev_pairs:
            bars[0].append((0.0, np.inf))

    packed = {}
    for q, entries in bars.items():
        arr = np.asarray(sorted(entries), dtype=float).reshape(-1, 2)
        packed[q] = arr
    return PersistenceDiagram(prime=p, max_radius=float(max_radius), bars=packed)


def rips_persistence(
    points,
    max_dim=1,
    p=2,
    max_radius=None,
    landmark_budget=DEFAULT_LANDMARK_BUDGET,
    max_simplices=DEFAULT_MAX_SIMPLICES,
):
    """Rips persistence of a point set (Configuration or row array)."""
    if isinstance(points, Configuration):
        rows = points.present_matrix().T
    else:
        rows = np.asarray(points, dtype=float)
        if rows.ndim != 2:
            raise ValueError("points must be a 2-d row array")
    if rows.shape[0] < 1:
        raise ValueError("need at least one point")
    dmat = squareform(pdist(rows))
    return rips_from_distances(
        dmat,
        max_dim=max_dim,
        p=p,
        max_radius=max_radius,
        landmark_budget=landmark_budget,
        max_simplices=max_simplices,
    )


def max_bar_length(diagram, q):
    """Largest death - birth among the finite bars in dimension q.

    Infinite bars are excluded; returns 0.0 when no finite bar exists.
    """
    if q not in (0, 1, 2):
        raise ValueError("q must be 0, 1, or 2")
    arr = diagram.bars.get(q)
    if arr is None or arr.size == 0:
        return 0.0
    lengths = arr[:, 1] - arr[:, 0]
    finite = lengths[np.isfinite(lengths)]
    return float(finite.max()) if finite.size else 0.0
