"""Gauss-Markov random fields on acyclic dependency graphs.

Under the alternative every node has variance ``sigma1_sq`` and neighbors
``i ~ j`` have correlation ``g(R_ij)``. On a forest the correlation between
any two nodes of a component is the product of ``g`` along the unique path
joining them, and nodes in different components are independent.

Graph arguments are duck-typed: anything with ``n``, ``edge_i``, ``edge_j``
and ``edge_length`` works (:class:`~gmrf_nng.geometry.Nng` or
:class:`DependencyGraph`).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import breadth_first_order, connected_components

from . import rng as _rng
from .geometry import is_forest

MAX_NUGGET = 1.0 - 1e-6
FAMILIES = ("exponential", "rational", "constant")


class GmrfError(ValueError):
    pass


class CyclicGraphError(GmrfError):
    pass


@dataclass(frozen=True)
class CorrelationModel:
    """Correlation ``g(R)`` between neighbors at distance ``R``.

    ``exponential``: ``M exp(-a R)``; ``rational``: ``M / (1 + R^a)``;
    ``constant``: ``M``. ``decay=inf`` is allowed for the exponential family
    and means no correlation at any positive distance.
    """

    family: str = "exponential"
    nugget: float = 0.0
    decay: float = 0.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise GmrfError(f"unknown correlation family {self.family!r}")
        if not (0.0 <= self.nugget <= MAX_NUGGET):
            raise GmrfError(f"nugget must lie in [0, {MAX_NUGGET}], got {self.nugget}")
        if math.isnan(self.decay) or self.decay < 0:
            raise GmrfError(f"decay must be nonnegative, got {self.decay}")
        if math.isinf(self.decay) and self.family != "exponential":
            raise GmrfError("infinite decay is only defined for the exponential family")

    @property
    def is_constant(self) -> bool:
        return self.family == "constant" or self.nugget == 0.0 or (
            self.family == "exponential" and self.decay == 0.0
        )

    def __call__(self, r):
        return correlation_at(self, r)


def correlation_at(model: CorrelationModel, r):
    """Evaluate ``g(r)``; vectorized over ``r``."""
    r_arr = np.asarray(r, dtype=float)
    if np.any(r_arr < 0) or np.any(np.isnan(r_arr)):
        raise GmrfError("distance must be nonnegative")
    M, a = model.nugget, model.decay
    if model.family == "constant" or M == 0.0:
        out = np.full_like(r_arr, M)
    elif model.family == "exponential":
        if math.isinf(a):
            out = np.where(r_arr == 0, M, 0.0)
        else:
            out = M * np.exp(-a * r_arr)
    else:
        out = M / (1.0 + r_arr**a)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class GmrfParams:
    sigma0_sq: float = 1.0
    sigma1_sq: float = 1.0
    correlation: CorrelationModel = field(default_factory=CorrelationModel)

    def __post_init__(self):
        for name in ("sigma0_sq", "sigma1_sq"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise GmrfError(f"{name} must be positive, got {v}")

    @property
    def K(self) -> float:
        return self.sigma1_sq / self.sigma0_sq

    @classmethod
    def from_ratio(cls, K: float, correlation: CorrelationModel, sigma0_sq: float = 1.0) -> "GmrfParams":
        return cls(sigma0_sq=sigma0_sq, sigma1_sq=K * sigma0_sq, correlation=correlation)


@dataclass(frozen=True, eq=False)
class DependencyGraph:
    """Plain undirected graph with edge lengths, for hand-built forests."""

    n: int
    edge_i: np.ndarray
    edge_j: np.ndarray
    edge_length: np.ndarray

    @classmethod
    def from_edges(cls, n: int, edges) -> "DependencyGraph":
        edges = list(edges)
        if edges:
            i, j, r = (np.asarray(c) for c in zip(*edges))
        else:
            i = j = np.empty(0, dtype=np.int64)
            r = np.empty(0)
        lo, hi = np.minimum(i, j).astype(np.int64), np.maximum(i, j).astype(np.int64)
        if np.any(lo == hi) or (lo.size and (lo.min() < 0 or hi.max() >= n)):
            raise GmrfError("edges must join two distinct nodes in range")
        return cls(n, lo, hi, np.asarray(r, dtype=float))

    @property
    def degree(self) -> np.ndarray:
        return np.bincount(self.edge_i, minlength=self.n) + np.bincount(self.edge_j, minlength=self.n)


def _degree(graph) -> np.ndarray:
    return np.bincount(graph.edge_i, minlength=graph.n) + np.bincount(graph.edge_j, minlength=graph.n)


def edge_correlations(graph, model: CorrelationModel) -> np.ndarray:
    rho = np.atleast_1d(np.asarray(correlation_at(model, np.asarray(graph.edge_length, dtype=float)), dtype=float))
    if rho.size and np.max(np.abs(rho)) >= 1.0:
        raise GmrfError("edge correlation must be below 1")
    return rho


def _check_acyclic(graph) -> None:
    comp = getattr(graph, "component_id", None)
    if comp is not None:
        ok = len(graph.edge_i) == graph.n - (int(comp.max()) + 1 if graph.n else 0)
    else:
        ok = is_forest(graph.n, np.asarray(graph.edge_i), np.asarray(graph.edge_j))
    if not ok:
        raise CyclicGraphError("dependency graph has a cycle")


def _rooted_forest(graph, rho: np.ndarray):
    """Parent, edge-to-parent correlation and depth of every node.

    A virtual node ``n`` parents every component root through a zero
    correlation. A nearest-neighbor graph is already rooted: each node
    points at its nearest neighbor, and the smaller node of each biroot
    pair serves as root.
    """
    n = graph.n
    ei = np.asarray(graph.edge_i, dtype=np.int64)
    ej = np.asarray(graph.edge_j, dtype=np.int64)
    rho = np.asarray(rho, dtype=float)
    nn = getattr(graph, "nn_index", None)
    if nn is not None:
        parent = np.array(nn, dtype=np.int64)
        parent[graph.biroot_pairs[:, 0]] = n
        child = np.flatnonzero(parent < n)
        key = np.minimum(child, parent[child]) * n + np.maximum(child, parent[child])
        g = np.zeros(n)
        g[child] = rho[np.searchsorted(ei * n + ej, key)]
        depth = np.where(parent == n, 0, -1)
        while np.any(depth < 0):
            todo = np.flatnonzero(depth < 0)
            up = depth[parent[todo]]
            depth[todo[up >= 0]] = up[up >= 0] + 1
        return parent, g, depth
    adj = sparse.coo_matrix((np.ones(len(ei)), (ei, ej)), shape=(n, n))
    _, comp = connected_components(adj, directed=False)
    roots = np.unique(comp, return_index=True)[1]
    rows = np.r_[ei, ej, np.full(len(roots), n)]
    cols = np.r_[ej, ei, roots]
    tag = np.r_[np.arange(len(ei)), np.arange(len(ei)), np.full(len(roots), -1)] + 2
    lookup = sparse.csr_matrix((tag, (rows, cols)), shape=(n + 1, n + 1))
    order, pred = breadth_first_order(lookup, n, directed=False, return_predecessors=True)
    order = order[1:]
    parent = np.empty(n, dtype=np.int64)
    parent[order] = pred[order]
    eidx = np.asarray(lookup[parent, np.arange(n)]).ravel().astype(np.int64) - 2
    g = np.where(eidx >= 0, rho[np.maximum(eidx, 0)] if len(rho) else 0.0, 0.0)
    depth = np.zeros(n + 1, dtype=np.int64)
    for v in order:
        depth[v] = depth[pred[v]] + 1
    return parent, g, depth[:n] - 1


def _levels(depth: np.ndarray):
    order = np.argsort(depth, kind="stable")
    bounds = np.flatnonzero(np.diff(depth[order])) + 1
    return np.split(order, bounds)


def correlation_matrix(graph, rho: np.ndarray) -> np.ndarray:
    """Unit-diagonal correlation matrix of a forest with per-edge correlations ``rho``.

    Built one depth level at a time: a node correlates with anything placed
    earlier through its parent, and with a same-level node through both
    parents.
    """
    n = graph.n
    parent, g, depth = _rooted_forest(graph, rho)
    C = np.zeros((n + 1, n + 1))
    C[n, n] = 1.0
    placed = np.zeros(n + 1, dtype=bool)
    placed[n] = True
    for level in _levels(depth):
        P, gl = parent[level], g[level]
        cols = np.flatnonzero(placed)
        block = gl[:, None] * C[np.ix_(P, cols)]
        C[np.ix_(level, cols)] = block
        C[np.ix_(cols, level)] = block.T
        C[np.ix_(level, level)] = np.outer(gl, gl) * C[np.ix_(P, P)]
        C[level, level] = 1.0
        placed[level] = True
    return C[:n, :n]


def covariance_matrix(graph, params: GmrfParams) -> np.ndarray:
    """Covariance under the alternative: ``sigma1^2`` times the path-product correlation."""
    _check_acyclic(graph)
    rho = edge_correlations(graph, params.correlation)
    return params.sigma1_sq * correlation_matrix(graph, rho)


def potential_from_edges(graph, rho: np.ndarray, sigma1_sq: float) -> np.ndarray:
    n = graph.n
    ei, ej = np.asarray(graph.edge_i), np.asarray(graph.edge_j)
    rho = np.asarray(rho, dtype=float)
    one_minus = 1.0 - rho**2
    A = np.zeros((n, n))
    diag = np.ones(n)
    np.add.at(diag, ei, rho**2 / one_minus)
    np.add.at(diag, ej, rho**2 / one_minus)
    A[np.arange(n), np.arange(n)] = diag / sigma1_sq
    off = -rho / (sigma1_sq * one_minus)
    A[ei, ej] = off
    A[ej, ei] = off
    return A


def potential_matrix(graph, params: GmrfParams) -> np.ndarray:
    """Inverse covariance, assembled entrywise from the edge covariances.

    ``A(i,j) = -S_ij / (S_ii S_jj - S_ij^2)`` on edges, zero elsewhere off the
    diagonal, and ``A(i,i) = (1 + sum_j S_ij^2 / (S_ii S_jj - S_ij^2)) / S_ii``.
    """
    _check_acyclic(graph)
    rho = edge_correlations(graph, params.correlation)
    return potential_from_edges(graph, rho, params.sigma1_sq)


def log_det_potential_from_edges(graph, rho: np.ndarray, sigma1_sq: float) -> float:
    deg = _degree(graph)
    rho = np.asarray(rho, dtype=float)
    log_s = math.log(sigma1_sq)
    node = float(np.sum(deg - 1)) * log_s
    edge = float(np.sum(2 * log_s + np.log1p(-(rho**2))))
    return node - edge


def log_det_potential(graph, params: GmrfParams) -> float:
    """``log|A|`` from per-node and per-edge terms; no matrix is formed."""
    _check_acyclic(graph)
    rho = edge_correlations(graph, params.correlation)
    return log_det_potential_from_edges(graph, rho, params.sigma1_sq)


def sample_h0(n: int, sigma0_sq: float, seed: int = 0, size: int | None = None) -> np.ndarray:
    """I.i.d. ``N(0, sigma0_sq)`` observations; shape ``(n,)`` or ``(size, n)``."""
    if not (math.isfinite(sigma0_sq) and sigma0_sq > 0):
        raise GmrfError(f"sigma0_sq must be positive, got {sigma0_sq}")
    if n < 0:
        raise GmrfError("n must be nonnegative")
    gen = _rng.generator(seed, _rng.H0_OBS)
    shape = (n,) if size is None else (size, n)
    return math.sqrt(sigma0_sq) * gen.standard_normal(shape)


def sample_h1(graph, params: GmrfParams, seed: int = 0, size: int | None = None, method: str = "cholesky") -> np.ndarray:
    """Zero-mean Gaussian observations with the alternative's covariance.

    ``method="cholesky"`` factors the dense covariance (reference path).
    ``method="tree"`` walks each component from its root, drawing every
    child as ``g * parent + sqrt(1 - g^2) * noise``; it has the same law at
    O(n) cost.
    """
    gen = _rng.generator(seed, _rng.H1_OBS)
    n = graph.n
    m = 1 if size is None else size
    z = gen.standard_normal((m, n))
    if method == "cholesky":
        cov = covariance_matrix(graph, params)
        try:
            L = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError as exc:
            raise GmrfError("covariance is not positive definite") from exc
        y = z @ L.T
    elif method == "tree":
        _check_acyclic(graph)
        rho = edge_correlations(graph, params.correlation)
        parent, g, depth = _rooted_forest(graph, rho)
        y = np.zeros((m, n + 1))
        s = math.sqrt(params.sigma1_sq)
        for level in _levels(depth):
            gl = g[level]
            y[:, level] = gl * y[:, parent[level]] + np.sqrt(1.0 - gl * gl) * s * z[:, level]
        y = y[:, :n]
    else:
        raise GmrfError(f"unknown sampling method {method!r}")
    return y[0] if size is None else y


def write_matrix_csv(matrix: np.ndarray, path) -> None:
    """Row-major CSV with a header of node ids and 12 significant digits."""
    n = matrix.shape[0]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["node"] + list(range(n)))
        for i in range(n):
            w.writerow([i] + [f"{v:.12g}" for v in matrix[i]])
