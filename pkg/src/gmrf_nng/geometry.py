"""Planar point processes and the nearest-neighbor graph.

Point sets live on the centered square ``[-side/2, side/2]^2`` whose area is
``n / density``. The nearest-neighbor search buckets points into a uniform
grid with cells of side ``1/sqrt(density)`` and expands square rings of cells
until the best candidate is provably closest.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components
from scipy.stats import kstest

from . import rng as _rng

# below this size the O(n^2) scan beats the grid's vectorization overhead
_BRUTE_FORCE_MAX = 128


class GeometryError(ValueError):
    pass


class Point(NamedTuple):
    x: float
    y: float


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class PointSet:
    xy: np.ndarray
    density: float
    side: float
    process_kind: str = "binomial"
    seed: int = 0

    def __post_init__(self):
        xy = np.asarray(self.xy, dtype=float).reshape(-1, 2)
        if not np.all(np.isfinite(xy)):
            raise GeometryError("point coordinates must be finite")
        if not self.density > 0:
            raise GeometryError(f"density must be positive, got {self.density}")
        half = self.side / 2
        if xy.size and np.any(np.abs(xy) > half):
            raise GeometryError("points must lie inside the centered square")
        object.__setattr__(self, "xy", _frozen(xy))

    @property
    def n(self) -> int:
        return len(self.xy)

    @property
    def area(self) -> float:
        return self.side**2

    @property
    def points(self) -> list[Point]:
        return [Point(float(x), float(y)) for x, y in self.xy]

    def to_csv(self, path) -> None:
        """Write ``id,x,y`` rows with 12 significant digits."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["id", "x", "y"])
            for i, (x, y) in enumerate(self.xy):
                w.writerow([i, f"{x:.12g}", f"{y:.12g}"])


def _check_density(density: float) -> None:
    if not (np.isfinite(density) and density > 0):
        raise GeometryError(f"density must be positive, got {density}")


def _uniform_square(count: int, side: float, gen: np.random.Generator) -> np.ndarray:
    return (gen.random((count, 2)) - 0.5) * side


def sample_binomial(n: int, density: float, seed: int = 0) -> PointSet:
    """``n`` i.i.d. uniform points on the centered square of area ``n/density``."""
    if int(n) != n or n < 1:
        raise GeometryError(f"n must be a positive integer, got {n}")
    _check_density(density)
    side = math.sqrt(n / density)
    gen = _rng.generator(seed, _rng.POINTS)
    return PointSet(_uniform_square(int(n), side, gen), density, side, "binomial", seed)


def sample_poisson(mean_n: float, density: float, seed: int = 0) -> PointSet:
    """Homogeneous Poisson process of intensity ``density`` on area ``mean_n/density``."""
    if not (np.isfinite(mean_n) and mean_n >= 1):
        raise GeometryError(f"mean_n must be >= 1, got {mean_n}")
    _check_density(density)
    side = math.sqrt(mean_n / density)
    gen = _rng.generator(seed, _rng.POINTS)
    count = int(gen.poisson(mean_n))
    return PointSet(_uniform_square(count, side, gen), density, side, "poisson", seed)


def sample_points(n: int, density: float, seed: int, process: str = "binomial") -> PointSet:
    if process == "binomial":
        return sample_binomial(n, density, seed)
    if process == "poisson":
        return sample_poisson(n, density, seed)
    raise GeometryError(f"unknown process kind {process!r}")


# ---------------------------------------------------------------------------
# nearest-neighbor search


def nearest_neighbors_brute(xy: np.ndarray, chunk: int = 512) -> tuple[np.ndarray, np.ndarray]:
    """O(n^2) scan; returns (nn_index, nn_distance). Ties go to the smaller index."""
    xy = np.asarray(xy, dtype=float)
    n = len(xy)
    idx = np.empty(n, dtype=np.int64)
    dist = np.empty(n)
    for start in range(0, n, chunk):
        stop = min(start + chunk, n)
        d = np.hypot(xy[None, :, 0] - xy[start:stop, None, 0], xy[None, :, 1] - xy[start:stop, None, 1])
        d[np.arange(stop - start), np.arange(start, stop)] = np.inf
        j = np.argmin(d, axis=1)
        idx[start:stop] = j
        dist[start:stop] = d[np.arange(stop - start), j]
    return idx, dist


def nearest_neighbors_grid(xy: np.ndarray, cell: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Grid-bucket nearest-neighbor search with expanding rings of cells.

    A point's result is accepted once its best distance is strictly below
    ``r * cell``, the radius guaranteed to be covered by the ``(2r+1)^2``
    block of cells around it. Same tie rule as the brute-force scan.
    """
    xy = np.asarray(xy, dtype=float)
    n = len(xy)
    if n < 2:
        raise GeometryError("need at least two points")
    lo = xy.min(axis=0)
    extent = xy.max(axis=0) - lo
    if cell is None:
        area = max(extent[0], 1e-300) * max(extent[1], 1e-300)
        cell = math.sqrt(area / n)
    if not cell > 0 or not math.isfinite(cell):
        cell = 1.0
    ncx, ncy = (np.floor(extent / cell).astype(np.int64) + 1).tolist()
    cxy = np.minimum(np.floor((xy - lo) / cell).astype(np.int64), [ncx - 1, ncy - 1])
    cid = cxy[:, 0] * ncy + cxy[:, 1]
    order = np.argsort(cid, kind="stable")
    starts = np.searchsorted(cid[order], np.arange(ncx * ncy + 1))

    best_j = np.full(n, -1, dtype=np.int64)
    best_d = np.full(n, np.inf)
    pending = np.arange(n)
    r = 1
    while pending.size:
        span = np.arange(-r, r + 1)
        ox, oy = np.meshgrid(span, span, indexing="ij")
        tx = cxy[pending, 0][:, None] + ox.ravel()[None, :]
        ty = cxy[pending, 1][:, None] + oy.ravel()[None, :]
        ok = (tx >= 0) & (tx < ncx) & (ty >= 0) & (ty < ncy)
        src = np.broadcast_to(pending[:, None], tx.shape)[ok]
        c = tx[ok] * ncy + ty[ok]
        counts = starts[c + 1] - starts[c]
        total = int(counts.sum())
        src = np.repeat(src, counts)
        first = np.repeat(starts[c], counts)
        offs = np.arange(total) - np.repeat(np.cumsum(counts) - counts, counts)
        cand = order[first + offs]
        keep = cand != src
        src, cand = src[keep], cand[keep]
        d = np.hypot(xy[cand, 0] - xy[src, 0], xy[cand, 1] - xy[src, 1])
        if src.size:
            srt = np.lexsort((cand, d, src))
            src, cand, d = src[srt], cand[srt], d[srt]
            head = np.r_[True, src[1:] != src[:-1]]
            best_j[src[head]] = cand[head]
            best_d[src[head]] = d[head]
        covers_all = r >= max(ncx, ncy)
        if covers_all:
            break
        pending = pending[~(best_d[pending] < r * cell)]
        r += 1
    return best_j, best_d


# ---------------------------------------------------------------------------
# graph


@dataclass(frozen=True, eq=False)
class Nng:
    """Directed and undirected nearest-neighbor graph of a point set.

    Undirected edges are stored as parallel arrays ``edge_i < edge_j`` with
    Euclidean lengths ``edge_length``, sorted lexicographically.
    """

    n: int
    nn_index: np.ndarray
    edge_i: np.ndarray
    edge_j: np.ndarray
    edge_length: np.ndarray
    degree: np.ndarray
    biroot_pairs: np.ndarray
    component_id: np.ndarray
    points: PointSet | None = field(default=None, repr=False)

    @property
    def undirected_edges(self) -> list[tuple[int, int, float]]:
        return [(int(i), int(j), float(r)) for i, j, r in zip(self.edge_i, self.edge_j, self.edge_length)]

    @property
    def n_edges(self) -> int:
        return len(self.edge_i)

    @property
    def n_components(self) -> int:
        return int(self.component_id.max()) + 1 if self.n else 0

    def is_biroot_edge(self) -> np.ndarray:
        return (self.nn_index[self.edge_i] == self.edge_j) & (self.nn_index[self.edge_j] == self.edge_i)

    def to_csv(self, path) -> None:
        """Write ``i,j,length,is_biroot`` rows with 12 significant digits."""
        bi = self.is_biroot_edge()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["i", "j", "length", "is_biroot"])
            for i, j, r, b in zip(self.edge_i, self.edge_j, self.edge_length, bi):
                w.writerow([int(i), int(j), f"{r:.12g}", int(b)])


def nng_from_neighbors(xy: np.ndarray, nn_index: np.ndarray, points: PointSet | None = None) -> Nng:
    xy = np.asarray(xy, dtype=float)
    n = len(xy)
    nn_index = np.asarray(nn_index, dtype=np.int64)
    src = np.arange(n)
    lo = np.minimum(src, nn_index)
    hi = np.maximum(src, nn_index)
    key = np.unique(lo * n + hi)
    ei, ej = key // n, key % n
    length = np.hypot(xy[ej, 0] - xy[ei, 0], xy[ej, 1] - xy[ei, 1])
    degree = np.bincount(ei, minlength=n) + np.bincount(ej, minlength=n)
    mutual = (nn_index[nn_index] == src) & (src < nn_index)
    biroots = np.column_stack([src[mutual], nn_index[mutual]]).astype(np.int64).reshape(-1, 2)
    # follow nn pointers by doubling; every walk ends on its component's biroot pair
    reach = nn_index.copy()
    while True:
        nxt = reach[reach]
        if np.array_equal(nxt, reach):
            break
        reach = nxt
    _, comp = np.unique(np.minimum(reach, nn_index[reach]), return_inverse=True)
    return Nng(
        n=n,
        nn_index=_frozen(nn_index),
        edge_i=_frozen(ei),
        edge_j=_frozen(ej),
        edge_length=_frozen(length),
        degree=_frozen(degree),
        biroot_pairs=_frozen(biroots),
        component_id=_frozen(comp.astype(np.int64)),
        points=points,
    )


def build_nng(ps: PointSet | np.ndarray) -> Nng:
    """Nearest-neighbor graph of a point set (at least 2 distinct points)."""
    if isinstance(ps, PointSet):
        xy, cell = ps.xy, 1.0 / math.sqrt(ps.density)
    else:
        xy, cell, ps = np.asarray(ps, dtype=float).reshape(-1, 2), None, None
    if len(xy) < 2:
        raise GeometryError("nearest-neighbor graph needs at least two points")
    if len(xy) <= _BRUTE_FORCE_MAX:
        nn, d = nearest_neighbors_brute(xy)
    else:
        nn, d = nearest_neighbors_grid(xy, cell)
    if np.any(d == 0):
        raise GeometryError("duplicate points (zero nearest-neighbor distance)")
    return nng_from_neighbors(xy, nn, ps)


def is_forest(n: int, edge_i: np.ndarray, edge_j: np.ndarray) -> bool:
    """True iff the undirected simple graph has no cycle (|E| = n - #components)."""
    if len(edge_i) == 0:
        return True
    adj = sparse.coo_matrix((np.ones(len(edge_i)), (edge_i, edge_j)), shape=(n, n))
    ncomp, _ = connected_components(adj, directed=False)
    return len(edge_i) == n - ncomp


# ---------------------------------------------------------------------------
# statistics


def omega() -> float:
    """Area of the union of two unit disks whose centers are one unit apart."""
    return 4 * math.pi / 3 + math.sqrt(3) / 2


@dataclass(frozen=True)
class GeometryStats:
    n: int
    density: float
    biroot_fraction: float
    edges_per_node: float
    interior_nn_distances: np.ndarray = field(repr=False)
    ks_distance: float

    def nn_tail(self, z: float) -> float:
        """Empirical P[Z1 > z] over interior nodes."""
        return float(np.mean(self.interior_nn_distances > z))


def nn_distance_tail(z, density: float):
    """P[Z1 > z] = exp(-density * pi * z^2) for a Poisson process."""
    return np.exp(-density * math.pi * np.square(z))


def geometry_statistics(nng: Nng, buffer: float | None = None) -> GeometryStats:
    """Biroot node fraction, undirected edges per node, and NN-distance fit.

    NN distances are taken from nodes at least ``buffer`` (default
    ``4/sqrt(density)``) away from the region boundary, where the
    nearest neighbor is almost surely not cut off by the window.
    """
    ps = nng.points
    if ps is None:
        raise GeometryError("statistics need the graph's point set")
    lam = ps.density
    if buffer is None:
        buffer = 4.0 / math.sqrt(lam)
    half = ps.side / 2
    interior = np.all(np.abs(ps.xy) <= half - buffer, axis=1)
    src = np.arange(nng.n)
    nn_d = np.hypot(*(ps.xy[nng.nn_index] - ps.xy[src]).T)
    sample = nn_d[interior]
    if sample.size:
        ks = kstest(sample, lambda z: 1.0 - nn_distance_tail(z, lam)).statistic
    else:
        ks = float("nan")
    return GeometryStats(
        n=nng.n,
        density=lam,
        biroot_fraction=2 * len(nng.biroot_pairs) / nng.n,
        edges_per_node=nng.n_edges / nng.n,
        interior_nn_distances=_frozen(sample),
        ks_distance=float(ks),
    )


def write_graph(nng: Nng, directory) -> tuple[Path, Path]:
    """Export ``points.csv`` and ``edges.csv`` into ``directory``."""
    if nng.points is None:
        raise GeometryError("graph has no point set to export")
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    pts, edges = d / "points.csv", d / "edges.csv"
    nng.points.to_csv(pts)
    nng.to_csv(edges)
    return pts, edges
