"""Core numeric types: vectors, subspaces, windows, windowed point sets.

Everything here operates on finite samples of (conceptually infinite) point
sets in R^d, truncated to a ball of radius ``window.radius``.  Universal
claims about a sample are only meaningful on the *interior* ``|x| <= W - m``
(``m`` the boundary margin); witnesses may come from the whole window.

All types are immutable after construction and every operation is a pure
function, so concurrent read-only use is safe.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

# Default tolerances.  tol_exact guards algebraic identities, tol_geom guards
# fitted / merged quantities.  Both are overridable per call.
TOL_EXACT = 1e-9
TOL_GEOM = 1e-6

# Below this size exhaustive scans beat the grid index.
EXHAUSTIVE_LIMIT = 1000


class EmptySetError(ValueError):
    """Raised when an operation needs a nonempty point set."""


def as_vector(coords) -> np.ndarray:
    """Validate and return a finite float64 vector."""
    v = np.asarray(coords, dtype=float)
    if v.ndim != 1:
        raise ValueError(f"expected a 1-d coordinate tuple, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError("vector has non-finite coordinates")
    return v


def as_points(arr, dim: int | None = None) -> np.ndarray:
    """Validate and return an (N, d) float64 array of points."""
    p = np.asarray(arr, dtype=float)
    if p.ndim == 1:
        p = p.reshape(-1, 1) if dim == 1 else p.reshape(1, -1)
    if p.ndim != 2:
        raise ValueError(f"expected an (N, d) array, got shape {p.shape}")
    if dim is not None and p.shape[1] != dim:
        raise ValueError(f"dimension mismatch: expected {dim}, got {p.shape[1]}")
    if not np.all(np.isfinite(p)):
        raise ValueError("points contain non-finite coordinates")
    return p


def lex_order(points: np.ndarray) -> np.ndarray:
    """Row order sorting by first coordinate, then second, ..."""
    return np.lexsort(points.T[::-1])


def lex_sorted(points: np.ndarray) -> np.ndarray:
    return points[lex_order(points)]


@dataclass(frozen=True)
class Window:
    """Truncation ball of radius ``radius`` with boundary margin ``margin``.

    Universal checks range over the interior ``|x| <= radius - margin``.
    """

    radius: float
    margin: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.radius) and self.radius > 0):
            raise ValueError("window radius must be positive and finite")
        if not (0 <= self.margin < self.radius):
            raise ValueError("window margin must satisfy 0 <= m < radius")

    @property
    def interior(self) -> float:
        return self.radius - self.margin


@dataclass(frozen=True)
class Subspace:
    """Linear subspace of R^d given by an orthonormal basis (rows).

    ``basis`` has shape (k, d) with 0 <= k <= d; k = 0 encodes {0}.
    """

    dim_ambient: int
    basis: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.basis, dtype=float).reshape(-1, self.dim_ambient)
        object.__setattr__(self, "basis", b)
        k = b.shape[0]
        if not 0 <= k <= self.dim_ambient:
            raise ValueError("rank must lie in [0, dim_ambient]")
        if k:
            g = b @ b.T
            if np.max(np.abs(g - np.eye(k))) > 1e-9:
                raise ValueError("basis rows are not orthonormal")

    # -- constructors -------------------------------------------------
    @classmethod
    def full(cls, d: int) -> "Subspace":
        return cls(d, np.eye(d))

    @classmethod
    def zero(cls, d: int) -> "Subspace":
        return cls(d, np.zeros((0, d)))

    @classmethod
    def line(cls, direction) -> "Subspace":
        v = as_vector(direction)
        n = np.linalg.norm(v)
        if n == 0:
            raise ValueError("zero direction")
        return cls(len(v), (v / n).reshape(1, -1))

    @classmethod
    def axis(cls, d: int, i: int) -> "Subspace":
        e = np.zeros((1, d))
        e[0, i] = 1.0
        return cls(d, e)

    @classmethod
    def from_spanning(cls, vectors, rank_tol: float = 0.1) -> "Subspace":
        """Orthonormal span of the given vectors; rank cut at
        ``singular value >= rank_tol * largest singular value``."""
        m = as_points(vectors)
        d = m.shape[1]
        if len(m) == 0 or not np.any(m):
            return cls.zero(d)
        _, s, vt = np.linalg.svd(m, full_matrices=False)
        rank = int(np.count_nonzero(s >= rank_tol * s[0]))
        return cls(d, vt[:rank])

    # -- queries ------------------------------------------------------
    @property
    def rank(self) -> int:
        return self.basis.shape[0]

    def project(self, x: np.ndarray) -> np.ndarray:
        """Orthogonal projection onto the subspace (ambient coordinates)."""
        x = np.asarray(x, dtype=float)
        if self.rank == 0:
            return np.zeros_like(x)
        return (x @ self.basis.T) @ self.basis

    def project_perp(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x, dtype=float) - self.project(x)

    def coords(self, x: np.ndarray) -> np.ndarray:
        """Coefficients of the projection in the basis (shape (..., k))."""
        return np.asarray(x, dtype=float) @ self.basis.T

    def lift(self, c: np.ndarray) -> np.ndarray:
        """Inverse of :meth:`coords` on the subspace."""
        return np.asarray(c, dtype=float) @ self.basis

    def dist(self, x: np.ndarray) -> np.ndarray:
        """Euclidean distance(s) from point(s) to the subspace."""
        r = self.project_perp(x)
        return np.linalg.norm(r, axis=-1)

    def complement(self) -> "Subspace":
        """Orthogonal complement."""
        d = self.dim_ambient
        if self.rank == 0:
            return Subspace.full(d)
        if self.rank == d:
            return Subspace.zero(d)
        # null space of basis via full SVD of the (k, d) matrix
        _, _, vt = np.linalg.svd(self.basis, full_matrices=True)
        return Subspace(d, vt[self.rank:])

    def angle_to(self, other: "Subspace") -> float:
        """Largest principal angle between two subspaces of equal rank."""
        if self.rank != other.rank:
            raise ValueError("ranks differ")
        if self.rank == 0:
            return 0.0
        s = np.linalg.svd(self.basis @ other.basis.T, compute_uv=False)
        return float(np.arccos(np.clip(s.min(), -1.0, 1.0)))


# ---------------------------------------------------------------------------
# Grid-bucket spatial hash
# ---------------------------------------------------------------------------

# Fixed odd multipliers for hashing integer cell coordinates into int64 keys.
# Collisions only add candidates that the exact distance check discards.
_HASH_MULT = np.array(
    [0x9E3779B97F4A7C15, 0xC2B2AE3D27D4EB4F, 0x165667B19E3779F9,
     0x27D4EB2F165667C5, 0x85EBCA77C2B2AE63, 0x2545F4914F6CDD1D],
    dtype=np.uint64,
)


def _cell_keys(points: np.ndarray, cell: float) -> np.ndarray:
    c = np.floor(points / cell).astype(np.int64)
    d = c.shape[1]
    return (c.view(np.uint64) * _HASH_MULT[:d]).sum(axis=1).view(np.int64)


class _Grid:
    """Hash of integer cells -> point indices, with vectorized range scans."""

    def __init__(self, points: np.ndarray, cell: float):
        self.points = points
        self.cell = float(cell)
        keys = _cell_keys(points, self.cell)
        self.order = np.argsort(keys, kind="stable")
        self.keys = keys[self.order]

    def _candidates_for_keys(self, qkeys: np.ndarray):
        """Return (query_idx, point_idx) pairs whose cells hash-match."""
        lo = np.searchsorted(self.keys, qkeys, side="left")
        hi = np.searchsorted(self.keys, qkeys, side="right")
        counts = hi - lo
        total = int(counts.sum())
        if total == 0:
            return (np.empty(0, np.int64), np.empty(0, np.int64))
        qi = np.repeat(np.arange(len(qkeys)), counts)
        # vectorized "arange per run": run start repeated, minus run offsets
        starts = np.repeat(lo, counts)
        runs = np.arange(total) - np.repeat(np.cumsum(counts) - counts, counts)
        pj = self.order[starts + runs]
        return qi, pj

    def pairs_within(self, queries: np.ndarray, r: float):
        """All (query_idx, point_idx, dist) with dist <= r.

        Scans the (2s+1)^d cell block around each query, s = ceil(r/cell).
        """
        queries = np.asarray(queries, dtype=float)
        d = queries.shape[1]
        s = int(math.ceil(r / self.cell))
        base = np.floor(queries / self.cell).astype(np.int64)
        out_q, out_p, out_d = [], [], []
        for off in np.ndindex(*(2 * s + 1,) * d):
            oc = base + (np.asarray(off, dtype=np.int64) - s)
            qkeys = (oc.view(np.uint64) * _HASH_MULT[:d]).sum(axis=1).view(np.int64)
            qi, pj = self._candidates_for_keys(qkeys)
            if len(qi) == 0:
                continue
            dd = np.linalg.norm(queries[qi] - self.points[pj], axis=1)
            keep = dd <= r
            out_q.append(qi[keep])
            out_p.append(pj[keep])
            out_d.append(dd[keep])
        if not out_q:
            z = np.empty(0, np.int64)
            return z, z.copy(), np.empty(0, float)
        return (np.concatenate(out_q), np.concatenate(out_p),
                np.concatenate(out_d))


class NeighborIndex:
    """Grid-bucket spatial hash over a fixed point array.

    Cell size defaults to the expected typical spacing; point sets here are
    Delone-like so queries touch O(1) cells.  Exhaustive scans are used below
    ``EXHAUSTIVE_LIMIT`` points.
    """

    def __init__(self, points: np.ndarray, cell: float | None = None):
        self.points = as_points(points)
        n, d = self.points.shape
        if n == 0:
            raise EmptySetError("empty set")
        if cell is None:
            span = float(np.max(np.linalg.norm(self.points, axis=1))) or 1.0
            cell = max(span * n ** (-1.0 / d), 1e-12)
        self.cell = float(cell)
        self._grid = _Grid(self.points, self.cell)
        self._coarse: dict[float, _Grid] = {}

    # -- internal helpers ---------------------------------------------
    def _grid_for(self, r: float) -> _Grid:
        """Grid whose cell keeps the block scan at <= 5^d cells."""
        if r <= 2 * self.cell:
            return self._grid
        cell = r / 2.0
        key = round(math.log2(cell), 3)
        g = self._coarse.get(key)
        if g is None:
            g = _Grid(self.points, cell)
            self._coarse[key] = g
        return g

    # -- single-point queries -----------------------------------------
    def nearest(self, q, exclude: int | None = None):
        """Index and distance of the nearest point; ties broken by the
        lexicographically smallest coordinate tuple."""
        q = as_vector(q)
        pts = self.points
        if len(pts) <= EXHAUSTIVE_LIMIT:
            dd = np.linalg.norm(pts - q, axis=1)
            pj = np.arange(len(pts))
            if exclude is not None:
                keep = pj != exclude
                pj, dd = pj[keep], dd[keep]
            if len(pj) == 0:
                raise EmptySetError("empty set")
            return self._pick_tie(pj, dd)
        r = 2 * self.cell
        limit = 4 * (np.linalg.norm(q) + np.max(np.linalg.norm(pts, axis=1)) + self.cell)
        while True:
            _, pj, dd = self._grid_for(r).pairs_within(q.reshape(1, -1), r)
            if exclude is not None:
                keep = pj != exclude
                pj, dd = pj[keep], dd[keep]
            if len(pj):
                return self._pick_tie(pj, dd)
            r *= 2
            if r > limit:
                raise EmptySetError("empty set")

    def _pick_tie(self, pj: np.ndarray, dd: np.ndarray):
        best = dd.min()
        ties = np.flatnonzero(dd <= best + 1e-12)
        if len(ties) > 1:
            ties = ties[lex_order(self.points[pj[ties]])]
        j = int(ties[0])
        return int(pj[j]), float(dd[j])

    def k_nearest(self, q, k: int):
        """Indices and distances of the k nearest points (distance order,
        lexicographic among ties)."""
        q = as_vector(q)
        pts = self.points
        if len(pts) <= max(EXHAUSTIVE_LIMIT, 4 * k):
            d = np.linalg.norm(pts - q, axis=1)
            order = np.argsort(d, kind="stable")[:k]
            return order, d[order]
        r = 2 * self.cell
        while True:
            qi, pj, dd = self._grid_for(r).pairs_within(q.reshape(1, -1), r)
            if len(pj) >= k and np.partition(dd, k - 1)[k - 1] <= r:
                order = np.argsort(dd, kind="stable")[:k]
                return pj[order], dd[order]
            r *= 2

    def within(self, q, r: float):
        """Indices of points at distance <= r from q."""
        q = as_vector(q)
        _, pj, _ = self._grid_for(r).pairs_within(q.reshape(1, -1), r)
        return np.unique(pj)

    # -- batch queries -------------------------------------------------
    def min_dists(self, queries: np.ndarray, r0: float | None = None) -> np.ndarray:
        """Distance from each query to its nearest point (vectorized)."""
        queries = as_points(queries, self.points.shape[1])
        out = np.full(len(queries), np.inf)
        pending = np.arange(len(queries))
        r = r0 if r0 is not None else 4 * self.cell
        span = 2 * (np.max(np.linalg.norm(self.points, axis=1)) +
                    (np.max(np.linalg.norm(queries, axis=1)) if len(queries) else 0.0) + 1.0)
        while len(pending):
            qi, pj, dd = self._grid_for(r).pairs_within(queries[pending], r)
            if len(qi):
                np.minimum.at(out, pending[qi], dd)
            pending = pending[~np.isfinite(out[pending])]
            r *= 2
            if r > span and len(pending):
                # remaining queries are farther than any grid scan; brute force
                for i in pending:
                    out[i] = np.linalg.norm(self.points - queries[i], axis=1).min()
                break
        return out

    def has_within(self, queries: np.ndarray, tol: float) -> np.ndarray:
        """Boolean mask: query has some point within tol."""
        queries = as_points(queries, self.points.shape[1])
        mask = np.zeros(len(queries), dtype=bool)
        qi, _, _ = self._grid_for(max(tol, 1e-12)).pairs_within(queries, tol)
        mask[np.unique(qi)] = True
        return mask


def merge_close(points: np.ndarray, tol: float = TOL_GEOM) -> np.ndarray:
    """Merge points within tol; representative is the lexicographically
    smallest member of each cluster.  Output is lex-sorted.

    A quantize-unique pass at cell tol/(2*sqrt(d)) collapses bulk duplicates
    (cell mates are closer than tol by construction), then clusters are
    closed transitively at the full tolerance on the reduced set.
    """
    points = as_points(points)
    if len(points) == 0:
        return points
    d = points.shape[1]
    tol = max(tol, 1e-15)
    fine = tol / (2.0 * math.sqrt(d))
    keys = np.floor(points / fine).astype(np.int64)
    # sort by exact cell coordinates first, lex point order inside each cell
    order = np.lexsort(tuple(points[:, i] for i in reversed(range(d)))
                       + tuple(keys[:, i] for i in reversed(range(d))))
    kp, pp = keys[order], points[order]
    first = np.r_[True, np.any(np.diff(kp, axis=0) != 0, axis=1)]
    reduced = pp[first]
    if len(reduced) > 1:
        # transitive closure at tol on the reduced set
        qi, pj, _ = _Grid(reduced, tol).pairs_within(reduced, tol)
        parent = np.arange(len(reduced))

        def find(a):
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        for a, b in zip(qi.tolist(), pj.tolist()):
            ra, rb = find(a), find(b)
            if ra != rb:
                parent[max(ra, rb)] = min(ra, rb)
        roots = np.array([find(i) for i in range(len(reduced))])
        # representative = lex-min member of each cluster
        order2 = np.lexsort(tuple(reduced[:, i] for i in reversed(range(d))) + (roots,))
        rr = roots[order2]
        reduced = reduced[order2][np.r_[True, np.diff(rr) != 0]]
    return lex_sorted(reduced)


# ---------------------------------------------------------------------------
# PointSet
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PointSet:
    """Finite windowed sample of a subset of R^d.

    Points are stored lex-sorted; all norms lie within the window radius and
    rows are pairwise distinct.
    """

    dim: int
    points: np.ndarray
    window: Window
    label: str = ""

    def __post_init__(self):
        pts = as_points(self.points, self.dim)
        pts = lex_sorted(pts)
        if len(pts):
            norms = np.linalg.norm(pts, axis=1)
            if norms.max() > self.window.radius + 1e-9:
                raise ValueError(
                    f"point outside window: |p| = {norms.max():.6g} > "
                    f"W = {self.window.radius:.6g}")
            if len(pts) > 1 and not np.any(np.diff(pts, axis=0), axis=1).all():
                raise ValueError("points are not pairwise distinct")
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return len(self.points)

    @cached_property
    def norms(self) -> np.ndarray:
        return np.linalg.norm(self.points, axis=1)

    @cached_property
    def index(self) -> NeighborIndex:
        return NeighborIndex(self.points)

    def interior_mask(self, extra: float = 0.0) -> np.ndarray:
        return self.norms <= self.window.interior - extra + 1e-12

    def interior(self, extra: float = 0.0) -> np.ndarray:
        return self.points[self.interior_mask(extra)]

    def translate(self, v) -> "PointSet":
        """Shift by -v and shrink the window so the sample stays honest."""
        v = as_vector(v)
        shift = float(np.linalg.norm(v))
        if shift == 0:
            return self
        radius = self.window.radius - shift
        if radius <= self.window.margin:
            raise ValueError("translation larger than usable window")
        pts = self.points - v
        pts = pts[np.linalg.norm(pts, axis=1) <= radius + 1e-9]
        return PointSet(self.dim, pts, Window(radius, self.window.margin), self.label)

    def scale(self, c: float) -> "PointSet":
        if c <= 0:
            raise ValueError("scale factor must be positive")
        return PointSet(self.dim, self.points * c,
                        Window(self.window.radius * c, self.window.margin * c),
                        self.label)

    def restrict(self, radius: float, margin: float | None = None) -> "PointSet":
        """Sub-window sample of the same underlying set."""
        if radius > self.window.radius + 1e-9:
            raise ValueError("cannot grow a window")
        m = self.window.margin if margin is None else margin
        m = min(m, radius / 2)
        pts = self.points[self.norms <= radius + 1e-12]
        return PointSet(self.dim, pts, Window(radius, m), self.label)

    def with_label(self, label: str) -> "PointSet":
        return PointSet(self.dim, self.points, self.window, label)


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------

def nearest_neighbor(ps: PointSet, q) -> tuple[np.ndarray, float]:
    """Nearest point of ps to q; ties go to the lexicographically smallest
    coordinate tuple."""
    if len(ps) == 0:
        raise EmptySetError("empty set")
    i, d = ps.index.nearest(q)
    return ps.points[i].copy(), d


def min_pairwise_gap(ps: PointSet) -> float:
    """Smallest distance between two distinct points (exact for the sample)."""
    if len(ps) < 2:
        raise ValueError("need at least 2 points")
    pts = ps.points
    if len(pts) <= EXHAUSTIVE_LIMIT:
        best = np.inf
        for i in range(len(pts) - 1):
            d = np.linalg.norm(pts[i + 1:] - pts[i], axis=1)
            best = min(best, d.min())
        return float(best)
    idx = ps.index
    r = idx.cell
    while True:
        qi, pj, dd = idx._grid_for(r).pairs_within(pts, r)
        off = qi != pj
        if np.any(off):
            return float(dd[off].min())
        r *= 2


def project(ps: PointSet, L: Subspace, tol: float = TOL_GEOM) -> PointSet:
    """Orthogonal projection of the sample onto L, duplicates merged at tol."""
    if L.dim_ambient != ps.dim:
        raise ValueError("dimension mismatch")
    proj = L.project(ps.points)
    merged = merge_close(proj, tol)
    return PointSet(ps.dim, merged, ps.window,
                    label=f"{ps.label}|proj" if ps.label else "proj")


def covering_radius(ps: PointSet, targets) -> float:
    """max over targets of the distance to the nearest point of ps."""
    if len(ps) == 0:
        raise EmptySetError("empty set")
    targets = as_points(targets, ps.dim)
    if len(targets) == 0:
        raise EmptySetError("empty targets")
    tn = np.linalg.norm(targets, axis=1)
    if tn.max() > ps.window.interior + 1e-9:
        raise ValueError("target outside window interior")
    return float(ps.index.min_dists(targets).max())


# ---------------------------------------------------------------------------
# Serialization: line-oriented text format
# ---------------------------------------------------------------------------

def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def save_points(ps: PointSet, path) -> None:
    """Write ``dim=<d> window=<W> margin=<m> label=<text>`` then one point per
    line, space-separated decimals with 17 significant digits."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"dim={ps.dim} window={_fmt(ps.window.radius)} "
                 f"margin={_fmt(ps.window.margin)} label={ps.label}\n")
        for row in ps.points:
            fh.write(" ".join(_fmt(x) for x in row) + "\n")


def load_points(path) -> PointSet:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        fields = {}
        rest = header
        for key in ("dim", "window", "margin"):
            tag = f"{key}="
            if not rest.startswith(tag):
                raise ValueError(f"malformed header: missing {key}=")
            val, _, rest = rest[len(tag):].partition(" ")
            fields[key] = val
        if not rest.startswith("label="):
            raise ValueError("malformed header: missing label=")
        label = rest[len("label="):]
        rows = [line.split() for line in fh if line.strip()]
    dim = int(fields["dim"])
    pts = np.array([[float(x) for x in row] for row in rows], dtype=float)
    if len(pts) == 0:
        pts = pts.reshape(0, dim)
    return PointSet(dim, pts, Window(float(fields["window"]), float(fields["margin"])),
                    label=label)
