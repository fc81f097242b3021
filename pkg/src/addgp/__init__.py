"""Additive Gaussian process regression with rate and packing tools."""
from .gp import (
    ComponentHyper,
    InclusionVector,
    ModelState,
    NumericalError,
    log_marginal_likelihood,
    make_state,
    predict,
)
from .prior import PriorConfig, log_prior_state, sample_prior
from .sampler import SamplerConfig, inclusion_probabilities, posterior_mean, run_chain

__version__ = "0.1.0"
