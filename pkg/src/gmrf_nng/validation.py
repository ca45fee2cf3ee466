"""Oracle checks bundled behind ``gmrf-nng validate``."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import rng as _rng
from .detection import llr, llr_dense_oracle
from .exponent import (
    OMEGA,
    QuadratureDisagreement,
    closed_form_exponent,
    constant_correlation_exponent,
    density_scaling_check,
    iid_exponent,
)
from .geometry import (
    build_nng,
    geometry_statistics,
    nearest_neighbors_brute,
    nearest_neighbors_grid,
    sample_binomial,
    sample_poisson,
)
from .gmrf import CorrelationModel, GmrfParams, covariance_matrix, log_det_potential, potential_matrix


@dataclass(frozen=True)
class CheckResult:
    name: str
    observed: float
    tolerance: float
    passed: bool

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status}  {self.name:<44s} observed={self.observed:.3e}  tolerance={self.tolerance:.1e}"


def random_instance(seed: int, index: int, n_min: int = 2, n_max: int = 64, sigmas: bool = False):
    """Random NNG plus exponential-model parameters for property checks."""
    gen = _rng.generator(seed, 100, index)
    n = int(gen.integers(n_min, n_max + 1))
    nng = build_nng(sample_binomial(n, 1.0, _rng.derive_seed(seed, 101, index)))
    model = CorrelationModel("exponential", float(gen.uniform(0, 0.9)), float(gen.uniform(0, 2)))
    if sigmas:
        s0, s1 = (float(v) for v in gen.uniform(0.25, 4.0, 2))
    else:
        s0 = s1 = 1.0
    return nng, GmrfParams(s0, s1, model), gen


def check_potential_identity(seed: int = 0, count: int = 200) -> list[CheckResult]:
    worst_prod = worst_det = 0.0
    for k in range(count):
        nng, params, _ = random_instance(seed, k)
        S = covariance_matrix(nng, params)
        A = potential_matrix(nng, params)
        worst_prod = max(worst_prod, float(np.max(np.abs(A @ S - np.eye(nng.n)))))
        worst_det = max(worst_det, abs(log_det_potential(nng, params) + np.linalg.slogdet(S)[1]))
    return [
        CheckResult("potential matrix: max |A S - I|", worst_prod, 1e-9, worst_prod < 1e-9),
        CheckResult("potential matrix: |log|A| + log|S||", worst_det, 1e-8, worst_det < 1e-8),
    ]


def check_llr_oracle(seed: int = 0, count: int = 100) -> list[CheckResult]:
    worst = 0.0
    for k in range(count):
        nng, params, gen = random_instance(seed, 1000 + k, n_max=256, sigmas=True)
        y = gen.standard_normal(nng.n) * math.sqrt(params.sigma0_sq)
        oracle = llr_dense_oracle(y, nng, params)
        worst = max(worst, abs(llr(y, nng, params).total - oracle) / max(1.0, abs(oracle)))
    return [CheckResult("LLR edge form vs dense oracle (relative)", worst, 1e-6, worst < 1e-6)]


def check_limit_identities() -> list[CheckResult]:
    worst_const = worst_iid = 0.0
    for k_db in range(-10, 21):
        K = 10 ** (k_db / 10)
        for M in (0.0, 0.25, 0.5, 0.75, 0.9):
            d = closed_form_exponent(K, CorrelationModel("constant", M)).D
            worst_const = max(worst_const, abs(d - constant_correlation_exponent(K, M)))
        worst_iid = max(worst_iid, abs(closed_form_exponent(K, CorrelationModel("constant", 0.0)).D - iid_exponent(K)))
    worst_large_a = max(
        abs(closed_form_exponent(10 ** (k / 10), CorrelationModel("exponential", 0.5, 1e4)).D - iid_exponent(10 ** (k / 10)))
        for k in range(-10, 21)
    )
    worst_scaling = 0.0
    for K in (0.5, 1.0, 2.0, 4.0, 10.0, 100.0):
        for M in (0.1, 0.5, 0.9):
            a, b = density_scaling_check(K, M, 1.0, 4.0)
            worst_scaling = max(worst_scaling, abs(a - b))
    return [
        CheckResult("constant model vs constant-correlation form", worst_const, 1e-10, worst_const < 1e-10),
        CheckResult("M = 0 vs independent exponent", worst_iid, 1e-10, worst_iid < 1e-10),
        CheckResult("exponential a = 1e4 vs independent exponent", worst_large_a, 1e-6, worst_large_a < 1e-6),
        CheckResult("density scaling D(l=4,a=1) vs D(1,0.5)", worst_scaling, 1e-8, worst_scaling < 1e-8),
    ]


def check_geometry(seed: int = 0, mean_n: float = 1e5) -> list[CheckResult]:
    ps = sample_poisson(mean_n, 1.0, seed)
    stats = geometry_statistics(build_nng(ps))
    bi = abs(stats.biroot_fraction - math.pi / OMEGA)
    ed = abs(stats.edges_per_node - (1 - math.pi / (2 * OMEGA)))
    small = sample_binomial(2000, 1.0, _rng.derive_seed(seed, 102))
    mismatch = float(np.sum(nearest_neighbors_grid(small.xy, 1.0)[0] != nearest_neighbors_brute(small.xy)[0]))
    return [
        CheckResult("biroot node fraction vs pi/omega", bi, 0.01, bi < 0.01),
        CheckResult("edges per node vs 1 - pi/(2 omega)", ed, 0.01, ed < 0.01),
        CheckResult("KS distance, interior NN distances", stats.ks_distance, 0.01, stats.ks_distance < 0.01),
        CheckResult("grid vs brute-force NN mismatches (n=2000)", mismatch, 0.5, mismatch < 0.5),
    ]


CHECKS: tuple[Callable[..., list[CheckResult]], ...] = (
    check_potential_identity,
    check_llr_oracle,
    check_limit_identities,
    check_geometry,
)


def run_all(seed: int = 0) -> list[CheckResult]:
    results = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", QuadratureDisagreement)
        for check in CHECKS:
            kwargs = {} if check is check_limit_identities else {"seed": seed}
            results.extend(check(**kwargs))
    return results
