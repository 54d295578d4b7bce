"""Variational inference with Gaussian-mixture posteriors for inverse problems."""

from .elbo import ComponentLinearization, elbo_F, elbo_grads, elbo_L0, elbo_L2, linearize
from .fit import FitConfig, FitError, FitReport, fit, lbfgsb_minimize
from .joint import (
    FlatPrior,
    ForwardModel,
    ForwardOutput,
    GaussianPrior,
    IsoGaussianLikelihood,
    JointDensityModel,
    LinearForward,
    UniformBoxPrior,
)
from .mcmc import Chain, MalaConfig, SamplerError, mala_sample
from .mixture import MixtureState, entropy_bound, entropy_bound_grads, mixture_logpdf

__version__ = "0.1.0"

__all__ = [
    "Chain",
    "ComponentLinearization",
    "FitConfig",
    "FitError",
    "FitReport",
    "FlatPrior",
    "ForwardModel",
    "ForwardOutput",
    "GaussianPrior",
    "IsoGaussianLikelihood",
    "JointDensityModel",
    "LinearForward",
    "MalaConfig",
    "MixtureState",
    "SamplerError",
    "UniformBoxPrior",
    "elbo_F",
    "elbo_L0",
    "elbo_L2",
    "elbo_grads",
    "entropy_bound",
    "entropy_bound_grads",
    "fit",
    "lbfgsb_minimize",
    "linearize",
    "mala_sample",
    "mixture_logpdf",
]
