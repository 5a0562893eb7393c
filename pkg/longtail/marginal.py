# coding: utf-8
"""The observed-scale marginal model and its transport to the latent space.

Responses above the threshold ``u`` follow a generalised Pareto tail whose
exceedance rate :math:`λ_u(t)` is logit-linear in time. Responses below the
threshold are censored: they only enter the model through an auxiliary
uniform variable, and are mapped to the latent space through the lower
part of the mixture distribution function.

Times are expressed in years since the origin of the dataset.

"""

import dataclasses
import logging
import math
import typing

import numpy
import scipy.special

from .distributions import (
    XI_EPSILON,
    GpdParams,
    GridSpec,
    MixtureMarginal,
    gpd_quantile,
    gpd_sf,
    mixture_inverse,
    mixture_inverse_exact,
    mixture_pdf,
)
from .errors import DomainError, InvalidParameter
from .data import Observation
from .utils import Diagnostics

__all__ = [
    "RateParams",
    "MarginalParams",
    "AuxBelow",
    "DENSITY_FLOOR",
    "lambda_u",
    "log_lambda_u",
    "log1m_lambda_u",
    "log_tail",
    "fx_cdf",
    "fx_quantile",
    "to_latent",
    "to_latent_exact",
    "latent_threshold",
    "floor_density",
    "jacobian_above",
    "jacobian_below",
    "log_jacobian_above",
    "log_jacobian_below",
]

logger = logging.getLogger(__name__)

#: The smallest latent density used in Jacobian terms.
DENSITY_FLOOR = 1e-300

_ArrayLike = typing.Union[float, numpy.ndarray]


@dataclasses.dataclass(frozen=True)
class RateParams:
    """The intercept and slope of the logit-linear exceedance rate."""

    beta0: float
    beta1: float


@dataclasses.dataclass(frozen=True)
class MarginalParams:
    """The tail law and exceedance rate of the observed-scale marginal."""

    gpd: GpdParams
    rate: RateParams

    @property
    def u(self) -> float:
        return self.gpd.u

    @property
    def sigma_u(self) -> float:
        return self.gpd.sigma_u

    @property
    def xi(self) -> float:
        return self.gpd.xi


@dataclasses.dataclass(frozen=True, eq=False)
class AuxBelow:
    """Auxiliary uniform variables attached to censored observations."""

    v: numpy.ndarray

    def __post_init__(self) -> None:
        v = numpy.array(self.v, dtype=float)
        if not numpy.all((v > 0.0) & (v < 1.0)):
            raise InvalidParameter("v", self.v, hint="values in (0, 1)")
        v.flags.writeable = False
        object.__setattr__(self, "v", v)

    def __len__(self) -> int:
        return self.v.size


def _out(value: numpy.ndarray) -> _ArrayLike:
    return float(value) if numpy.ndim(value) == 0 else value


def lambda_u(rate: RateParams, t_years: _ArrayLike) -> _ArrayLike:
    """Compute the probability that a response at time ``t`` exceeds ``u``.

    Example:
        >>> lambda_u(RateParams(0.0, 0.0), 3.0)
        0.5

    """
    eta = rate.beta0 + rate.beta1 * numpy.asarray(t_years, dtype=float)
    return _out(scipy.special.expit(eta))


def log_lambda_u(rate: RateParams, t_years: _ArrayLike) -> _ArrayLike:
    """Compute :math:`\\log λ_u(t)` without underflow."""
    eta = rate.beta0 + rate.beta1 * numpy.asarray(t_years, dtype=float)
    return _out(-numpy.logaddexp(0.0, -eta))


def log1m_lambda_u(rate: RateParams, t_years: _ArrayLike) -> _ArrayLike:
    """Compute :math:`\\log(1 - λ_u(t))` without underflow."""
    eta = rate.beta0 + rate.beta1 * numpy.asarray(t_years, dtype=float)
    return _out(-numpy.logaddexp(0.0, eta))


def log_tail(gpd: GpdParams, x: _ArrayLike) -> _ArrayLike:
    """Compute the log survivor function of the tail law, vectorized.

    Values beyond a finite upper endpoint get a log survivor of minus
    infinity; values must not lie below the threshold.

    """
    y = (numpy.asarray(x, dtype=float) - gpd.u) / gpd.sigma_u
    if abs(gpd.xi) < XI_EPSILON:
        return _out(-y)
    base = gpd.xi * y
    with numpy.errstate(divide="ignore", invalid="ignore"):
        out = numpy.where(base > -1.0, -numpy.log1p(numpy.maximum(base, -1.0)) / gpd.xi, -numpy.inf)
    return _out(out)


def fx_cdf(mp: MarginalParams, x: float, t_years: float) -> float:
    """Compute the observed-scale distribution function above the threshold.

    Example:
        >>> mp = MarginalParams(GpdParams(0.0, 1.0, -0.5), RateParams(0.0, 0.0))
        >>> round(fx_cdf(mp, 1.0, 0.0), 12)
        0.875

    Raises:
        `~longtail.errors.DomainError`: When ``x`` is not above the
            threshold, since censored responses have no modelled
            distribution function.

    """
    if not x > mp.u:
        raise DomainError("fx_cdf", "{!r} not above threshold, use the censored path".format(x))
    return 1.0 - typing.cast(float, lambda_u(mp.rate, t_years)) * gpd_sf(mp.gpd, x)


def fx_quantile(mp: MarginalParams, p: float, t_years: float) -> float:
    """Invert the observed-scale distribution function above the threshold.

    Raises:
        `~longtail.errors.DomainError`: When ``p`` is not in the range
            :math:`(1 - λ_u(t), 1)` reached by exceedances.

    """
    rate = typing.cast(float, lambda_u(mp.rate, t_years))
    if not 1.0 - rate < p < 1.0:
        raise DomainError("fx_quantile", "{!r} not in the exceedance range".format(p))
    return gpd_quantile(mp.gpd, max(0.0, 1.0 - (1.0 - p) / rate))


def _latent_probability(
    mp: MarginalParams,
    obs: typing.Union[float, Observation, AuxBelow],
    t_years: _ArrayLike,
) -> _ArrayLike:
    if isinstance(obs, AuxBelow):
        t = numpy.asarray(t_years, dtype=float)
        return _out((1.0 - numpy.asarray(lambda_u(mp.rate, t))) * obs.v)
    x = obs.value if isinstance(obs, Observation) else obs
    return fx_cdf(mp, x, typing.cast(float, t_years))


def to_latent(
    mp: MarginalParams,
    m: MixtureMarginal,
    g: typing.Optional[GridSpec],
    obs: typing.Union[float, Observation, AuxBelow],
    t_years: _ArrayLike,
) -> _ArrayLike:
    """Transform a response to the latent space by grid search.

    Arguments:
        mp (`MarginalParams`): The observed-scale marginal.
        m (`~longtail.distributions.MixtureMarginal`): The latent mixture.
        g (`~longtail.distributions.GridSpec`, optional): The search grid,
            or `None` to use a grid covering the mixture.
        obs (`float`, `~longtail.data.Observation` or `AuxBelow`): Either
            an exceedance, or the auxiliary variables of censored responses
            (in which case ``t_years`` may be an array of matching shape).
        t_years (`float` or `numpy.ndarray`): The observation times.

    Raises:
        `~longtail.errors.OutOfGridError`: When the probability of the
            response cannot be reached on the grid.

    """
    return mixture_inverse(m, _latent_probability(mp, obs, t_years), g)


def to_latent_exact(
    mp: MarginalParams,
    m: MixtureMarginal,
    obs: typing.Union[float, Observation, AuxBelow],
    t_years: float,
) -> float:
    """Transform a single response to the latent space exactly.

    This uses `~longtail.distributions.mixture_inverse_exact`, and is only
    meant to check the gridded transform.

    """
    p = _latent_probability(mp, obs, t_years)
    return mixture_inverse_exact(m, float(numpy.asarray(p).reshape(-1)[0]))


def latent_threshold(
    mp: MarginalParams,
    m: MixtureMarginal,
    g: typing.Optional[GridSpec],
    t_years: _ArrayLike,
) -> _ArrayLike:
    """Get the time-varying threshold :math:`u_Z(t)` in the latent space."""
    t = numpy.asarray(t_years, dtype=float)
    return mixture_inverse(m, 1.0 - numpy.asarray(lambda_u(mp.rate, t)), g)


def floor_density(
    density: _ArrayLike,
    diagnostics: typing.Optional[Diagnostics] = None,
) -> _ArrayLike:
    """Floor latent densities at `DENSITY_FLOOR`, counting floored values."""
    density = numpy.asarray(density, dtype=float)
    floored = density < DENSITY_FLOOR
    if numpy.any(floored):
        logger.debug("floored %d latent densities", int(floored.sum()))
        if diagnostics is not None:
            diagnostics.increment("floored_density", int(floored.sum()))
    return _out(numpy.maximum(density, DENSITY_FLOOR))


def log_jacobian_above(
    mp: MarginalParams,
    x: _ArrayLike,
    t_years: _ArrayLike,
    log_g: _ArrayLike,
) -> _ArrayLike:
    """Compute the log Jacobian of the exceedance transform, vectorized.

    Arguments:
        mp (`MarginalParams`): The observed-scale marginal.
        x (`numpy.ndarray`): The exceedances.
        t_years (`numpy.ndarray`): The observation times.
        log_g (`numpy.ndarray`): The log latent density at the transformed
            values, already floored.

    """
    y = (numpy.asarray(x, dtype=float) - mp.u) / mp.sigma_u
    log_rate = numpy.asarray(log_lambda_u(mp.rate, t_years))
    if abs(mp.xi) < XI_EPSILON:
        log_f = -y
    else:
        base = mp.xi * y
        with numpy.errstate(divide="ignore", invalid="ignore"):
            log_f = numpy.where(
                base > -1.0,
                (-1.0 / mp.xi - 1.0) * numpy.log1p(numpy.maximum(base, -1.0)),
                -numpy.inf,
            )
    return _out(log_rate - math.log(mp.sigma_u) + log_f - log_g)


def log_jacobian_below(
    mp: MarginalParams,
    t_years: _ArrayLike,
    log_g: _ArrayLike,
) -> _ArrayLike:
    """Compute the log Jacobian of the censored transform, vectorized."""
    return _out(numpy.asarray(log1m_lambda_u(mp.rate, t_years)) - log_g)


def jacobian_above(
    mp: MarginalParams,
    m: MixtureMarginal,
    x: float,
    t_years: float,
    z: float,
    diagnostics: typing.Optional[Diagnostics] = None,
) -> float:
    """Compute the Jacobian :math:`dz/dx` of the exceedance transform.

    Example:
        >>> from longtail.distributions import norm_pdf, norm_quantile
        >>> mp = MarginalParams(GpdParams(0.0, 1.0, -0.5), RateParams(40.0, 0.0))
        >>> m = MixtureMarginal([0.0], [1.0])
        >>> z = norm_quantile(0.75)
        >>> round(jacobian_above(mp, m, 1.0, 0.0, z) * norm_pdf(z), 9)
        0.5

    """
    if not x > mp.u:
        raise DomainError("jacobian_above", "{!r} not above threshold".format(x))
    g = floor_density(mixture_pdf(m, z), diagnostics)
    log_j = log_jacobian_above(mp, x, t_years, math.log(typing.cast(float, g)))
    return math.exp(typing.cast(float, log_j))


def jacobian_below(
    mp: MarginalParams,
    m: MixtureMarginal,
    v: float,
    t_years: float,
    z: float,
    diagnostics: typing.Optional[Diagnostics] = None,
) -> float:
    """Compute the Jacobian :math:`dz/dv` of the censored transform."""
    if not 0.0 < v < 1.0:
        raise DomainError("jacobian_below", "{!r} outside of (0, 1)".format(v))
    g = floor_density(mixture_pdf(m, z), diagnostics)
    log_j = log_jacobian_below(mp, t_years, math.log(typing.cast(float, g)))
    return math.exp(typing.cast(float, log_j))
