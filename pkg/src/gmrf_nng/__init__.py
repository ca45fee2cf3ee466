"""Neyman-Pearson detection of Gauss-Markov random fields on nearest-neighbor graphs."""

from .detection import (
    LlrBreakdown,
    NpConfig,
    ProbabilityEstimate,
    SpectrumEstimate,
    calibrate_threshold,
    estimate_miss_probability,
    llr,
    llr_dense_oracle,
    llr_spectrum_mean,
)
from .exponent import (
    OMEGA,
    ExponentResult,
    RayleighSpec,
    closed_form_exponent,
    constant_correlation_exponent,
    density_scaling_check,
    f_func,
    iid_exponent,
    rayleigh_expectation,
)
from .geometry import Nng, Point, PointSet, build_nng, geometry_statistics, sample_binomial, sample_poisson
from .gmrf import (
    CorrelationModel,
    DependencyGraph,
    GmrfParams,
    correlation_at,
    covariance_matrix,
    log_det_potential,
    potential_matrix,
    sample_h0,
    sample_h1,
)

__version__ = "0.1.0"
