# coding: utf-8
"""Bayesian extreme value analysis of longitudinal data.

``longtail`` models the extremes of repeated measurements on a population
of subjects, such as the swim times of athletes over their careers.
Responses above a threshold follow a generalised Pareto tail, and every
response is mapped to a latent scale where each subject follows a Gaussian
process around a quadratic trajectory. The posterior is sampled with a
pseudo-marginal adaptive Metropolis sampler, and posterior draws are used
to forecast records and personal bests over a future window.

The `longtail.deplab` module provides a separate laboratory for extremal
dependence measures of longitudinal populations.

"""

from . import errors
from . import distributions
from . import data
from . import marginal
from . import latent
from . import inference
from . import predict
from . import deplab
from . import config


__author__ = "longtail developers"
__license__ = "MIT"
__version__ = "0.1.0"
__all__ = [
    "errors",
    "distributions",
    "data",
    "marginal",
    "latent",
    "inference",
    "predict",
    "deplab",
    "config",
]
