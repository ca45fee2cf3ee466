"""Log-likelihood ratio and Monte Carlo Neyman-Pearson detection.

Sign convention: ``LLR = log p0(y) / p1(y)``. It is large under the null,
so the detector declares the alternative when ``LLR < threshold``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import linalg
from scipy.stats import binomtest

from . import rng as _rng
from .geometry import build_nng, sample_points
from .gmrf import DependencyGraph, GmrfParams, covariance_matrix, edge_correlations, sample_h0, sample_h1


class DetectionError(ValueError):
    pass


@dataclass(frozen=True)
class LlrBreakdown:
    node_term: float
    logdet_term: float
    edge_quad_term: float

    @property
    def total(self) -> float:
        return self.node_term + self.logdet_term + self.edge_quad_term


@dataclass(frozen=True)
class NpConfig:
    alpha: float = 0.1
    calibration_reps: int = 10_000
    threshold: float | None = None

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise DetectionError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.calibration_reps < 1:
            raise DetectionError("calibration_reps must be positive")


@dataclass(frozen=True)
class ProbabilityEstimate:
    """Event frequency over ``reps`` trials with a 95% Wilson interval.

    ``zero_events`` flags an estimate with no observed events; only the
    upper bound ``ci_hi`` is informative then.
    """

    count: int
    reps: int
    ci_lo: float
    ci_hi: float

    @property
    def p(self) -> float:
        return self.count / self.reps

    @property
    def zero_events(self) -> bool:
        return self.count == 0

    @classmethod
    def from_counts(cls, count: int, reps: int) -> "ProbabilityEstimate":
        ci = binomtest(int(count), int(reps)).proportion_ci(0.95, method="wilson")
        return cls(int(count), int(reps), float(ci.low), float(ci.high))


@dataclass(frozen=True)
class SpectrumEstimate:
    n: int
    reps: int
    mean: float
    stderr: float
    values: np.ndarray = field(repr=False)


def llr(y, graph, params: GmrfParams) -> LlrBreakdown:
    """Edge-local log-likelihood ratio; O(n) and each undirected edge counted once."""
    y = np.asarray(y, dtype=float)
    if y.shape != (graph.n,):
        raise DetectionError(f"observation has shape {y.shape}, graph has {graph.n} nodes")
    s0, s1 = params.sigma0_sq, params.sigma1_sq
    rho = edge_correlations(graph, params.correlation)
    yi, yj = y[graph.edge_i], y[graph.edge_j]
    one_minus = 1.0 - rho**2
    node = 0.5 * (1.0 / s1 - 1.0 / s0) * float(np.dot(y, y))
    logdet = 0.5 * graph.n * math.log(s1 / s0) + 0.5 * float(np.sum(np.log1p(-(rho**2))))
    quad = 0.5 * float(np.sum((rho**2 * (yi**2 + yj**2) - 2.0 * rho * yi * yj) / one_minus)) / s1
    return LlrBreakdown(node, logdet, quad)


def llr_dense_oracle(y, graph, params: GmrfParams) -> float:
    """``0.5 * (log|S1|/|s0^2 I| + y'(S1^-1 - I/s0^2) y)`` via a dense Cholesky factor."""
    y = np.asarray(y, dtype=float)
    if y.shape != (graph.n,):
        raise DetectionError(f"observation has shape {y.shape}, graph has {graph.n} nodes")
    cov = covariance_matrix(graph, params)
    try:
        c, low = linalg.cho_factor(cov, lower=True)
    except linalg.LinAlgError as exc:
        raise DetectionError("covariance is not positive definite") from exc
    logdet = 2.0 * float(np.sum(np.log(np.diag(c))))
    quad = float(y @ linalg.cho_solve((c, low), y))
    s0 = params.sigma0_sq
    return 0.5 * (logdet - graph.n * math.log(s0) + quad - float(y @ y) / s0)


# ---------------------------------------------------------------------------
# Monte Carlo


def _map(fn: Callable[[int], float], reps: int, workers: int) -> np.ndarray:
    # results land by replicate index, so the aggregate ignores scheduling
    if workers <= 1:
        return np.fromiter((fn(r) for r in range(reps)), dtype=float, count=reps)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return np.fromiter(pool.map(fn, range(reps), chunksize=64), dtype=float, count=reps)


def _graph(ps):
    if ps.n < 2:
        return DependencyGraph.from_edges(ps.n, [])
    return build_nng(ps)


def _null_llr(n, params, density, seed, stream, r, process):
    rep = _rng.derive_seed(seed, stream, r)
    ps = sample_points(n, density, rep, process)
    g = _graph(ps)
    return llr(sample_h0(g.n, params.sigma0_sq, rep), g, params).total, g.n


def _alt_llr(n, params, density, seed, stream, r, process, h1_method):
    rep = _rng.derive_seed(seed, stream, r)
    ps = sample_points(n, density, rep, process)
    g = _graph(ps)
    return llr(sample_h1(g, params, rep, method=h1_method), g, params).total


def null_llr_sample(n, params, density, reps, seed=0, stream=_rng.CALIBRATION, process="binomial", workers=1):
    """LLR of ``reps`` independent (point set, null observation) replicates."""
    return _map(lambda r: _null_llr(n, params, density, seed, stream, r, process)[0], reps, workers)


def calibrate_threshold(
    n: int,
    config: NpConfig,
    params: GmrfParams,
    density: float = 1.0,
    seed: int = 0,
    process: str = "binomial",
    workers: int = 1,
) -> float:
    """Empirical ``alpha``-quantile of the null LLR (``higher`` order statistic)."""
    if config.calibration_reps < 1000:
        raise DetectionError("calibration needs at least 1000 replicates")
    if config.alpha * config.calibration_reps < 20:
        raise DetectionError(
            f"alpha * reps = {config.alpha * config.calibration_reps:g} < 20; too few replicates for alpha={config.alpha}"
        )
    sample = null_llr_sample(n, params, density, config.calibration_reps, seed, _rng.CALIBRATION, process, workers)
    return float(np.quantile(sample, config.alpha, method="higher"))


def estimate_false_alarm(n, threshold, params, density=1.0, reps=10_000, seed=0, process="binomial", workers=1):
    """Realized false-alarm rate ``P0[LLR < threshold]`` on fresh replicates."""
    sample = null_llr_sample(n, params, density, reps, seed, _rng.VALIDATION, process, workers)
    return ProbabilityEstimate.from_counts(int(np.sum(sample < threshold)), reps)


def estimate_miss_probability(
    n: int,
    threshold: float,
    params: GmrfParams,
    density: float = 1.0,
    reps: int = 10_000,
    seed: int = 0,
    process: str = "binomial",
    workers: int = 1,
    h1_method: str = "cholesky",
) -> ProbabilityEstimate:
    """Fraction of alternative replicates with ``LLR >= threshold``."""
    if reps < 1000:
        raise DetectionError("miss probability needs at least 1000 replicates")
    sample = _map(lambda r: _alt_llr(n, params, density, seed, _rng.MISS, r, process, h1_method), reps, workers)
    return ProbabilityEstimate.from_counts(int(np.sum(sample >= threshold)), reps)


def llr_spectrum_mean(
    n: int,
    params: GmrfParams,
    density: float = 1.0,
    reps: int = 50,
    seed: int = 0,
    process: str = "binomial",
    workers: int = 1,
) -> SpectrumEstimate:
    """Mean of ``LLR/n`` under the null over independently drawn point sets."""
    if reps < 1:
        raise DetectionError("reps must be positive")

    def one(r):
        total, count = _null_llr(n, params, density, seed, _rng.SPECTRUM, r, process)
        return total / count if count else 0.0

    values = _map(one, reps, workers)
    stderr = float(np.std(values, ddof=1) / math.sqrt(reps)) if reps > 1 else float("nan")
    values.setflags(write=False)
    return SpectrumEstimate(n, reps, float(np.mean(values)), stderr, values)
