"""One-dimensional quadrature for Rayleigh expectations.

``E h(Z)`` for ``P[Z > z] = exp(-c z^2)`` becomes ``int_0^inf h(s/sqrt(c)) w(s) ds``
with ``w(s) = 2 s exp(-s^2)`` after ``s = sqrt(c) z``. The Gauss rule for
``w`` is built once by discretized Stieltjes + Golub-Welsch. The substitution
``u = s^2`` would give plain Gauss-Laguerre, but then a smooth ``h`` in ``z``
turns into a function of ``sqrt(u)`` and the rule loses its exponential
convergence.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
from scipy.linalg import eigh_tridiagonal
from scipy.special import roots_legendre

GAUSS_NODES = 64


@lru_cache(maxsize=None)
def rayleigh_gauss_rule(n: int = GAUSS_NODES, cutoff: float = 16.0, discretization: int = 1000):
    """Nodes and weights of the ``n``-point Gauss rule for ``2 s exp(-s^2)`` on ``[0, inf)``.

    Weights sum to 1. The measure is discretized with Gauss-Legendre on
    ``[0, cutoff]``; the tail beyond 16 holds mass ``exp(-256)``.
    """
    x, w = roots_legendre(discretization)
    x = 0.5 * cutoff * (x + 1.0)
    w = 0.5 * cutoff * w * 2.0 * x * np.exp(-x * x)
    alpha = np.empty(n)
    beta = np.empty(n)
    basis = np.empty((n, len(x)))
    q = np.full_like(x, 1.0 / math.sqrt(w.sum()))
    for k in range(n):
        basis[k] = q
        alpha[k] = np.sum(w * x * q * q)
        r = x * q
        # full reorthogonalization (twice) against the weighted basis
        for _ in range(2):
            r -= basis[: k + 1].T @ (basis[: k + 1] @ (w * r))
        b = math.sqrt(np.sum(w * r * r))
        beta[k] = b
        q = r / b
    nodes, vecs = eigh_tridiagonal(alpha, beta[:-1])
    weights = vecs[0] ** 2
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def _simpson(fa, fm, fb, h):
    return h / 6.0 * (fa + 4.0 * fm + fb)


def adaptive_simpson(func, a: float, b: float, tol: float = 1e-13, max_depth: int = 48, breakpoints=None):
    """Adaptive Simpson with Richardson correction; returns ``(value, error_estimate)``.

    ``func`` is evaluated on arrays. All intervals at one refinement level are
    handled together; an interval is accepted once its halves agree with the
    whole to ``15 * tol * width / (b - a)``. Optional ``breakpoints`` seed
    the initial partition so that narrow features are not stepped over.
    """
    edges = np.unique(np.r_[a, b, [p for p in (breakpoints if breakpoints is not None else ()) if a < p < b]])
    lo, hi = edges[:-1].astype(float), edges[1:].astype(float)
    flo, fhi = func(lo), func(hi)
    fmid = func(0.5 * (lo + hi))
    whole = _simpson(flo, fmid, fhi, hi - lo)
    total = 0.0
    err = 0.0
    span = b - a
    for depth in range(max_depth + 1):
        mid = 0.5 * (lo + hi)
        lm, rm = 0.5 * (lo + mid), 0.5 * (mid + hi)
        flm, frm = func(lm), func(rm)
        left = _simpson(flo, flm, fmid, mid - lo)
        right = _simpson(fmid, frm, fhi, hi - mid)
        diff = left + right - whole
        done = np.abs(diff) <= 15.0 * tol * (hi - lo) / span
        if depth == max_depth:
            done[:] = True
        total += float(np.sum((left + right + diff / 15.0)[done]))
        err += float(np.sum(np.abs(diff[done]))) / 15.0
        keep = ~done
        if not keep.any():
            break
        lo, mid, hi = lo[keep], mid[keep], hi[keep]
        flo, flm, fmid, frm, fhi = flo[keep], flm[keep], fmid[keep], frm[keep], fhi[keep]
        left, right = left[keep], right[keep]
        # children: [lo, mid] and [mid, hi]
        lo, hi = np.r_[lo, mid], np.r_[mid, hi]
        flo, fhi = np.r_[flo, fmid], np.r_[fmid, fhi]
        fmid = np.r_[flm, frm]
        whole = np.r_[left, right]
    return total, err


def endpoint_breakpoints(a: float, b: float, panels: int = 32, levels: int = 40) -> np.ndarray:
    """Uniform panels on ``[a, b]`` refined geometrically toward ``a``."""
    width = b - a
    return np.r_[a + width * np.arange(1, panels) / panels, a + width / panels * 2.0 ** -np.arange(1, levels + 1)]
