# coding: utf-8
"""Bayesian inference: priors, posterior, sampler and convergence checks.

Parameters are sampled on an unconstrained scale, through the following
bijections:

- :math:`\\log` for ``sigma_u``, ``beta1``, ``gamma``, ``nu`` and ``kappa0``;
- :math:`\\operatorname{logit}(ξ + 1)` for ``xi``;
- :math:`\\operatorname{logit}((κ_1 - 0.5) / 1.5)` for ``kappa1``;
- the identity for ``beta0`` and the subject effects.

Priors are evaluated on the constrained scale, and the log-Jacobian of the
bijection is added to obtain the density sampled by the chains.

The sampler is a blocked adaptive random-walk Metropolis-Hastings
algorithm. The auxiliary variables of the censored responses are drawn
afresh from their uniform prior with every proposal of the marginal block,
and the acceptance ratio uses the resulting likelihood estimate, which
makes the chains pseudo-marginal: retained draws target the posterior of
the parameters alone.

"""

import collections
import dataclasses
import functools
import json
import logging
import math
import os
import re
import typing

import numpy
import pandas
import scipy.linalg
import scipy.special

from .data import DAYS_PER_YEAR, Dataset
from .distributions import (
    GpdParams,
    GridSpec,
    MixtureMarginal,
    grid_argmin,
    mixture_inverse_exact,
    mixture_pdf,
)
from .errors import (
    DiagnosticsError,
    DomainError,
    InvalidParameter,
    NumericalError,
    StartupError,
)
from .latent import (
    JITTER,
    CholeskyCache,
    KernelParams,
    PopulationEffects,
    SubjectEffects,
    subject_loglik,
)
from .marginal import (
    AuxBelow,
    MarginalParams,
    RateParams,
    floor_density,
    log1m_lambda_u,
    log_jacobian_above,
    log_jacobian_below,
    log_lambda_u,
    log_tail,
)
from .parallel import imap_ordered
from .utils import Diagnostics, substream

__all__ = [
    "Theta",
    "UnconstrainedTheta",
    "ParameterLayout",
    "PosteriorModel",
    "McmcConfig",
    "Trace",
    "ParameterSummary",
    "PosteriorSummary",
    "to_unconstrained",
    "from_unconstrained",
    "log_prior",
    "log_posterior",
    "prior_draws",
    "sample_density",
    "run_mcmc",
    "diagnostics",
    "split_rhat",
    "effective_sample_size",
    "hpdi",
]

logger = logging.getLogger(__name__)

#: The names of the parameters shared by all subjects, in sampling order.
POPULATION_NAMES = ("xi", "sigma_u", "beta0", "beta1", "gamma", "nu", "kappa0", "kappa1")

_LOG_INDEX = numpy.array([1, 3, 4, 5, 6])
_XI, _KAPPA1 = 0, 7
_KAPPA1_LO, _KAPPA1_WIDTH = 0.5, 1.5
_LOG_2PI = math.log(2 * math.pi)
_SUBJECT_NAME = re.compile(r"^(alpha|tau)\[(.*)\]$")


# --- Parameters -------------------------------------------------------------


@dataclasses.dataclass(frozen=True)
class Theta:
    """The full parameter vector of the model.

    Attributes:
        marginal (`~longtail.marginal.MarginalParams`): The tail law and
            exceedance rate.
        subjects (`tuple` of `~longtail.latent.SubjectEffects`): The
            effects of each subject, in dataset order.
        population (`~longtail.latent.PopulationEffects`): The effects
            shared by all subjects.
        kernel (`~longtail.latent.KernelParams`): The kernel parameters.

    """

    marginal: MarginalParams
    subjects: typing.Tuple[SubjectEffects, ...]
    population: PopulationEffects
    kernel: KernelParams

    def __post_init__(self) -> None:
        object.__setattr__(self, "subjects", tuple(self.subjects))


@dataclasses.dataclass(frozen=True, eq=False)
class UnconstrainedTheta:
    """A parameter vector on the sampling scale, with parameter names."""

    values: numpy.ndarray
    names: typing.Tuple[str, ...]

    def __post_init__(self) -> None:
        values = numpy.array(self.values, dtype=float)
        if values.shape != (len(self.names),):
            raise InvalidParameter("values", values.shape, hint="one value per name")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "names", tuple(self.names))


def _log_dsigmoid(y: numpy.ndarray) -> numpy.ndarray:
    # log of the derivative of the logistic function
    return -numpy.logaddexp(0.0, y) - numpy.logaddexp(0.0, -y)


class ParameterLayout:
    """The ordering of parameters in sampling vectors.

    Vectors hold the population parameters (see `POPULATION_NAMES`),
    followed by the ``alpha`` and ``tau`` of every subject, interleaved.
    All conversions act on the last axis, so they also apply to arrays
    of draws.

    """

    def __init__(self, ids: typing.Iterable[str]) -> None:
        self.ids = tuple(ids)
        names = list(POPULATION_NAMES)
        for id_ in self.ids:
            names.append("alpha[{}]".format(id_))
            names.append("tau[{}]".format(id_))
        self.names = tuple(names)

    @classmethod
    def from_names(cls, names: typing.Sequence[str]) -> "ParameterLayout":
        """Recover a layout from a sequence of parameter names."""
        if tuple(names[:len(POPULATION_NAMES)]) != POPULATION_NAMES:
            raise InvalidParameter("names", list(names[:len(POPULATION_NAMES)]), hint=", ".join(POPULATION_NAMES))
        ids = []
        for name in names[len(POPULATION_NAMES)::2]:
            match = _SUBJECT_NAME.match(name)
            if match is None or match.group(1) != "alpha":
                raise InvalidParameter("names", name, hint="alpha[<subject id>]")
            ids.append(match.group(2))
        layout = cls(ids)
        if layout.names != tuple(names):
            raise InvalidParameter("names", list(names), hint="interleaved alpha and tau per subject")
        return layout

    def __len__(self) -> int:
        return len(self.names)

    @property
    def blocks(self) -> typing.List[numpy.ndarray]:
        """`list` of `numpy.ndarray`: The indices updated jointly."""
        blocks = [numpy.arange(0, 4), numpy.arange(4, 8)]
        for i in range(len(self.ids)):
            blocks.append(numpy.array([8 + 2 * i, 9 + 2 * i]))
        return blocks

    def initial_sd(self) -> numpy.ndarray:
        """Get the initial proposal scales on the sampling scale."""
        sd = numpy.full(len(self), 0.1)
        sd[8::2] = 0.2
        sd[9::2] = 0.5
        return sd

    def to_constrained(self, y: numpy.ndarray) -> numpy.ndarray:
        """Map sampling-scale vectors to the constrained scale."""
        y = numpy.asarray(y, dtype=float)
        x = y.copy()
        with numpy.errstate(over="ignore"):
            x[..., _LOG_INDEX] = numpy.exp(y[..., _LOG_INDEX])
        x[..., _XI] = scipy.special.expit(y[..., _XI]) - 1.0
        x[..., _KAPPA1] = _KAPPA1_LO + _KAPPA1_WIDTH * scipy.special.expit(y[..., _KAPPA1])
        return x

    def to_unconstrained(self, x: numpy.ndarray) -> numpy.ndarray:
        """Map constrained vectors to the sampling scale."""
        x = numpy.asarray(x, dtype=float)
        y = x.copy()
        with numpy.errstate(divide="ignore", invalid="ignore"):
            y[..., _LOG_INDEX] = numpy.log(x[..., _LOG_INDEX])
            y[..., _XI] = scipy.special.logit(x[..., _XI] + 1.0)
            y[..., _KAPPA1] = scipy.special.logit((x[..., _KAPPA1] - _KAPPA1_LO) / _KAPPA1_WIDTH)
        return y

    def log_det_jacobian(self, y: numpy.ndarray) -> typing.Union[float, numpy.ndarray]:
        """Compute :math:`\\log |dx/dy|` of the inverse bijection."""
        y = numpy.asarray(y, dtype=float)
        out = (
            y[..., _LOG_INDEX].sum(axis=-1)
            + _log_dsigmoid(y[..., _XI])
            + math.log(_KAPPA1_WIDTH)
            + _log_dsigmoid(y[..., _KAPPA1])
        )
        return float(out) if numpy.ndim(out) == 0 else out

    def vector(self, theta: Theta) -> numpy.ndarray:
        """Flatten a `Theta` into a constrained vector."""
        if len(theta.subjects) != len(self.ids):
            raise InvalidParameter("theta", len(theta.subjects), hint="{} subjects".format(len(self.ids)))
        x = numpy.empty(len(self))
        x[:8] = [
            theta.marginal.xi,
            theta.marginal.sigma_u,
            theta.marginal.rate.beta0,
            theta.marginal.rate.beta1,
            theta.population.gamma,
            theta.population.nu,
            theta.kernel.kappa0,
            theta.kernel.kappa1,
        ]
        x[8::2] = [se.alpha for se in theta.subjects]
        x[9::2] = [se.tau for se in theta.subjects]
        return x

    def theta(self, x: numpy.ndarray, u: float, v_alpha: float = 6.0) -> Theta:
        """Build a `Theta` from a constrained vector.

        Raises:
            `~longtail.errors.InvalidParameter`: When a value is outside of
                the support of its parameter.

        """
        x = numpy.asarray(x, dtype=float)
        return Theta(
            marginal=MarginalParams(GpdParams(u, float(x[1]), float(x[0])), RateParams(float(x[2]), float(x[3]))),
            subjects=tuple(SubjectEffects(float(a), float(t)) for a, t in zip(x[8::2], x[9::2])),
            population=PopulationEffects(float(x[4]), float(x[5]), v_alpha),
            kernel=KernelParams(float(x[6]), float(x[7])),
        )


def to_unconstrained(theta: Theta, ids: typing.Optional[typing.Sequence[str]] = None) -> UnconstrainedTheta:
    """Map a `Theta` to the sampling scale.

    Subjects are named after ``ids``, or after their index when no
    identifiers are given.

    """
    ids = [str(i) for i in range(len(theta.subjects))] if ids is None else ids
    layout = ParameterLayout(ids)
    return UnconstrainedTheta(layout.to_unconstrained(layout.vector(theta)), layout.names)


def from_unconstrained(ut: UnconstrainedTheta, u: float, v_alpha: float = 6.0) -> Theta:
    """Map a sampling-scale vector back to a `Theta`."""
    layout = ParameterLayout.from_names(ut.names)
    return layout.theta(layout.to_constrained(ut.values), u, v_alpha)


# --- Priors -----------------------------------------------------------------


def _normal_logpdf(x: numpy.ndarray, mean: float, var: float) -> numpy.ndarray:
    return -0.5 * (_LOG_2PI + math.log(var) + (x - mean) ** 2 / var)


def _gamma_logpdf(x: float, shape: float, rate: float) -> float:
    if not x > 0:
        return -math.inf
    return shape * math.log(rate) - math.lgamma(shape) + (shape - 1.0) * math.log(x) - rate * x


def _logit_prior(s: float, mean: float, var: float) -> float:
    # density of s in (0, 1) when logit(s) is normal
    if not 0.0 < s < 1.0:
        return -math.inf
    log_s, log_1ms = math.log(s), math.log1p(-s)
    return float(_normal_logpdf(log_s - log_1ms, mean, var)) - log_s - log_1ms


_XI_PRIOR = (scipy.special.logit(0.8), 0.3)
_KAPPA1_PRIOR = (scipy.special.logit(1.0 / 3.0), 2.0)
_TAU_PRIOR = (25.0, 2.5 ** 2)


def _log_prior_vector(x: numpy.ndarray, v_alpha: float) -> float:
    xi, sigma_u, beta0, beta1, gamma, nu, kappa0, kappa1 = (float(v) for v in x[:8])
    lp = _logit_prior(xi + 1.0, *_XI_PRIOR)
    lp += _gamma_logpdf(sigma_u, 25.0, 25.0)
    lp += float(_normal_logpdf(beta0, 0.0, 0.5))
    lp += _gamma_logpdf(beta1, 0.1, 0.1)
    lp += _gamma_logpdf(gamma, 0.5, 0.5)
    lp += _gamma_logpdf(nu, 1.0, 1.0)
    lp += _gamma_logpdf(kappa0, 0.5, 0.5)
    lp += _logit_prior((kappa1 - _KAPPA1_LO) / _KAPPA1_WIDTH, *_KAPPA1_PRIOR) - math.log(_KAPPA1_WIDTH)
    if lp == -math.inf or math.isnan(lp):
        return -math.inf
    alpha, tau = x[8::2], x[9::2]
    if numpy.any(tau <= 0):
        return -math.inf
    lp += float(_normal_logpdf(alpha, 0.0, v_alpha ** 2).sum())
    lp += float(_normal_logpdf(tau, *_TAU_PRIOR).sum())
    return lp if math.isfinite(lp) else -math.inf


def log_prior(theta: Theta) -> float:
    """Compute the log prior density of the parameters.

    All components are independent a priori. Normal priors are given
    by their mean and variance, gamma priors by their shape and rate.

    Example:
        >>> from longtail.distributions import GpdParams
        >>> theta = Theta(
        ...     MarginalParams(GpdParams(0.0, 1.0, 0.0), RateParams(0.0, 1.0)),
        ...     (), PopulationEffects(1.0, 1.0), KernelParams(1.0, 1.0),
        ... )
        >>> log_prior(theta)
        -inf

    """
    layout = ParameterLayout(str(i) for i in range(len(theta.subjects)))
    return _log_prior_vector(layout.vector(theta), theta.population.v_alpha)


def prior_draws(rng: numpy.random.Generator, size: int) -> typing.Dict[str, numpy.ndarray]:
    """Draw the population parameters from their priors, vectorized."""
    return {
        "xi": scipy.special.expit(rng.normal(_XI_PRIOR[0], math.sqrt(_XI_PRIOR[1]), size)) - 1.0,
        "sigma_u": rng.gamma(25.0, 1.0 / 25.0, size),
        "beta0": rng.normal(0.0, math.sqrt(0.5), size),
        "beta1": rng.gamma(0.1, 1.0 / 0.1, size),
        "gamma": rng.gamma(0.5, 1.0 / 0.5, size),
        "nu": rng.gamma(1.0, 1.0, size),
        "kappa0": rng.gamma(0.5, 1.0 / 0.5, size),
        "kappa1": _KAPPA1_LO + _KAPPA1_WIDTH * scipy.special.expit(
            rng.normal(_KAPPA1_PRIOR[0], math.sqrt(_KAPPA1_PRIOR[1]), size)
        ),
    }


def _prior_vector(rng: numpy.random.Generator, n_subjects: int, v_alpha: float) -> numpy.ndarray:
    draws = prior_draws(rng, 1)
    x = numpy.empty(len(POPULATION_NAMES) + 2 * n_subjects)
    x[:8] = [draws[name][0] for name in POPULATION_NAMES]
    x[8::2] = rng.normal(0.0, v_alpha, n_subjects)
    x[9::2] = rng.normal(_TAU_PRIOR[0], math.sqrt(_TAU_PRIOR[1]), n_subjects)
    return x


# --- Posterior --------------------------------------------------------------


class PosteriorModel:
    """The posterior density of a dataset, with precomputed arrays.

    The model memoizes the mixture rows of each subject and the Cholesky
    factors of the current kernel parameters, so that block updates only
    recompute what changed. Cached and recomputed values are identical.

    Caution:
        Instances are not thread-safe: use one model per chain.

    """

    def __init__(
        self,
        dataset: Dataset,
        grid: typing.Optional[GridSpec] = None,
        *,
        grid_count: int = 2001,
        n_aux: int = 1,
        v_alpha: float = 6.0,
        jitter: float = JITTER,
        exact: bool = False,
        u: typing.Optional[float] = None,
        diagnostics: typing.Optional[Diagnostics] = None,
    ) -> None:
        if n_aux < 1:
            raise InvalidParameter("n_aux", n_aux, hint="integer >= 1")
        u = dataset.threshold_u if u is None else u
        if u is None and dataset.n_observations > 0:
            raise InvalidParameter("threshold_u", None, hint="a preprocessed dataset")
        self.dataset = dataset
        self.layout = ParameterLayout(dataset.ids)
        self.grid = grid
        self.grid_count = grid_count
        self.n_aux = n_aux
        self.v_alpha = v_alpha
        self.exact = exact
        self.u = 0.0 if u is None else float(u)
        self.diagnostics = Diagnostics() if diagnostics is None else diagnostics
        self._cholesky = CholeskyCache(jitter)

        lengths = numpy.array([len(s) for s in dataset.subjects], dtype=int)
        self._bounds = numpy.concatenate([[0], numpy.cumsum(lengths)]).astype(int)
        self._times = [s.times.astype(float) for s in dataset.subjects]
        if dataset.n_observations:
            times = numpy.concatenate(self._times)
            values = numpy.concatenate([s.values for s in dataset.subjects])
            births = numpy.array([s.birth_date for s in dataset.subjects], dtype=float)
        else:
            times = values = births = numpy.empty(0)
        self._owner = numpy.repeat(numpy.arange(len(dataset.subjects)), lengths)
        self._ages = (times - births[self._owner]) / DAYS_PER_YEAR
        years = numpy.asarray(dataset.years(times), dtype=float)
        self._above = values > self.u
        self._x_above = values[self._above]
        self._t_above = years[self._above]
        self._t_below = years[~self._above]
        self._rows: typing.List["collections.OrderedDict[typing.Hashable, typing.Tuple[numpy.ndarray, numpy.ndarray]]"] = [
            collections.OrderedDict() for _ in dataset.subjects
        ]

    @property
    def n_below(self) -> int:
        """`int`: The number of censored responses."""
        return int(self._t_below.size)

    def draw_aux(self, rng: numpy.random.Generator) -> numpy.ndarray:
        """Draw fresh auxiliary variables, one row per likelihood estimate."""
        v = rng.random((self.n_aux, self.n_below))
        # the open interval is required by the censored transform
        return numpy.where(v > 0.0, v, numpy.nextafter(0.0, 1.0))

    def _grid_for(self, mu: numpy.ndarray, nu: float) -> GridSpec:
        if self.grid is not None:
            return self.grid
        # bounds are rounded so that small moves keep the cached rows valid
        lo = math.floor(float(mu.min()) - 8.0 * nu)
        hi = math.ceil(float(mu.max()) + 8.0 * nu)
        return GridSpec(lo, hi, self.grid_count)

    def _tables(self, mu: numpy.ndarray, nu: float, grid: GridSpec) -> typing.Tuple[numpy.ndarray, numpy.ndarray]:
        nodes = grid.nodes
        cdf = numpy.zeros(grid.count)
        pdf = numpy.zeros(grid.count)
        norm = nu * math.sqrt(2 * math.pi)
        for i, memo in enumerate(self._rows):
            mu_i = mu[self._bounds[i]:self._bounds[i + 1]]
            key = (mu_i.tobytes(), nu, grid)
            row = memo.get(key)
            if row is None:
                y = (nodes - mu_i[:, None]) / nu
                row = (scipy.special.ndtr(y).sum(axis=0), numpy.exp(-0.5 * y * y).sum(axis=0) / norm)
                memo[key] = row
                if len(memo) > 2:
                    memo.popitem(last=False)
            else:
                memo.move_to_end(key)
            cdf += row[0]
            pdf += row[1]
        return cdf / mu.size, pdf / mu.size

    def _latent(self, z: numpy.ndarray, mu: numpy.ndarray, nu: float, kp: KernelParams) -> float:
        terms = numpy.zeros(len(self._rows))
        for i, subject in enumerate(self.dataset.subjects):
            start, stop = self._bounds[i], self._bounds[i + 1]
            chol = self._cholesky.get(kp, i, self._times[i], subject.id)
            terms[i] = subject_loglik(z[start:stop], mu[start:stop], nu, chol)
        return float(terms.sum())

    def _exact_inverse(self, mu: numpy.ndarray, nu: float, p: numpy.ndarray) -> typing.Tuple[numpy.ndarray, numpy.ndarray]:
        m = MixtureMarginal(mu, numpy.full(mu.size, nu))
        z = numpy.array([mixture_inverse_exact(m, float(q)) for q in p])
        return z, numpy.log(numpy.asarray(floor_density(numpy.asarray(mixture_pdf(m, z)), self.diagnostics)))

    def log_likelihood(self, x: numpy.ndarray, v: numpy.ndarray) -> float:
        """Compute the log likelihood of a constrained vector.

        Arguments:
            x (`numpy.ndarray`): The constrained parameter vector.
            v (`numpy.ndarray`): The auxiliary variables, with one row per
                likelihood estimate; estimates are averaged on the natural
                scale.

        Raises:
            `~longtail.errors.DomainError`: When an exceedance lies beyond
                the upper endpoint, or a probability is off the grid.
            `~longtail.errors.NumericalError`: When a subject correlation
                matrix cannot be factorized.

        """
        if self._owner.size == 0:
            return 0.0
        v = numpy.atleast_2d(numpy.asarray(v, dtype=float))
        xi, sigma_u, beta0, beta1, gamma, nu, kappa0, kappa1 = (float(value) for value in x[:8])
        alpha, tau = x[8::2], x[9::2]
        mp = MarginalParams(GpdParams(self.u, sigma_u, xi), RateParams(beta0, beta1))
        kp = KernelParams(kappa0, kappa1)
        mu = alpha[self._owner] - gamma * (self._ages - tau[self._owner]) ** 2

        log_t = numpy.asarray(log_tail(mp.gpd, self._x_above))
        if not numpy.all(numpy.isfinite(log_t)):
            raise DomainError("log_posterior", "exceedance beyond the upper endpoint")
        p_above = -numpy.expm1(numpy.asarray(log_lambda_u(mp.rate, self._t_above)) + log_t)
        log1m = numpy.asarray(log1m_lambda_u(mp.rate, self._t_below))

        z = numpy.empty(mu.size)
        if self.exact:
            z_above, log_g_above = self._exact_inverse(mu, nu, p_above)
        else:
            grid = self._grid_for(mu, nu)
            nodes = grid.nodes
            cdf, pdf = self._tables(mu, nu, grid)
            index = grid_argmin(cdf, p_above)
            z_above = nodes[index]
            log_g_above = numpy.log(numpy.asarray(floor_density(pdf[index], self.diagnostics)))
        z[self._above] = z_above
        base = float(numpy.sum(log_jacobian_above(mp, self._x_above, self._t_above, log_g_above)))

        terms = numpy.empty(v.shape[0])
        for k, row in enumerate(v):
            p_below = numpy.exp(log1m) * row
            if self.exact:
                z_below, log_g_below = self._exact_inverse(mu, nu, p_below)
            else:
                index = grid_argmin(cdf, p_below)
                z_below = nodes[index]
                log_g_below = numpy.log(numpy.asarray(floor_density(pdf[index], self.diagnostics)))
            z[~self._above] = z_below
            below = float(numpy.sum(log_jacobian_below(mp, self._t_below, log_g_below)))
            terms[k] = base + below + self._latent(z, mu, nu, kp)
        if terms.size == 1:
            return float(terms[0])
        return float(scipy.special.logsumexp(terms) - math.log(terms.size))

    def log_posterior_vector(self, x: numpy.ndarray, v: numpy.ndarray) -> float:
        """Compute the log posterior density of a constrained vector.

        Failures of the likelihood evaluation are counted in `diagnostics`
        and mapped to minus infinity.

        """
        lp = _log_prior_vector(x, self.v_alpha)
        if lp == -math.inf:
            return lp
        try:
            ll = self.log_likelihood(x, v)
        except (DomainError, NumericalError, InvalidParameter) as err:
            logger.debug("rejecting parameters: %s", err)
            self.diagnostics.increment(type(err).__name__)
            return -math.inf
        total = lp + ll
        return total if not math.isnan(total) else -math.inf

    def log_density(self, y: numpy.ndarray, v: numpy.ndarray) -> float:
        """Compute the log density sampled on the unconstrained scale."""
        lp = self.log_posterior_vector(self.layout.to_constrained(y), v)
        if lp == -math.inf:
            return lp
        return lp + typing.cast(float, self.layout.log_det_jacobian(y))


def log_posterior(
    theta: Theta,
    aux: AuxBelow,
    d: Dataset,
    g: typing.Optional[GridSpec] = None,
    *,
    exact: bool = False,
    diagnostics: typing.Optional[Diagnostics] = None,
) -> float:
    """Compute the log posterior density of the parameters and auxiliaries.

    Arguments:
        theta (`Theta`): The parameters, with one subject effect per
            subject of ``d``.
        aux (`~longtail.marginal.AuxBelow`): One auxiliary variable per
            censored response, in dataset order.
        d (`~longtail.data.Dataset`): A preprocessed dataset.
        g (`~longtail.distributions.GridSpec`, optional): The inversion
            grid, or `None` to use a grid covering the mixture.
        exact (`bool`): Invert the mixture by root finding rather than on
            the grid.
        diagnostics (`~longtail.utils.Diagnostics`, optional): Counters of
            the recovered failures.

    Returns:
        `float`: The log posterior density, or minus infinity when the
        parameters are out of support.

    """
    model = PosteriorModel(
        d,
        g,
        v_alpha=theta.population.v_alpha,
        exact=exact,
        u=theta.marginal.u,
        diagnostics=diagnostics,
    )
    if len(aux) != model.n_below:
        raise InvalidParameter("aux", len(aux), hint="{} censored responses".format(model.n_below))
    return model.log_posterior_vector(model.layout.vector(theta), aux.v[None, :])


# --- Sampler ----------------------------------------------------------------


class _BlockAdapter:
    """The Gaussian random-walk proposal of one block.

    During burn-in the log scale follows a Robbins-Monro recursion toward
    the target acceptance rate, and the proposal shape is replaced by the
    empirical covariance of the block once enough samples were seen.

    """

    def __init__(self, sd: numpy.ndarray, target: float) -> None:
        self.dim = sd.size
        self.target = target
        self.log_scale = 0.0
        self.factor = numpy.diag(sd)
        self.count = 0
        self.mean = numpy.zeros(self.dim)
        self.m2 = numpy.zeros((self.dim, self.dim))
        self.proposed = 0
        self.accepted = 0

    def propose(self, rng: numpy.random.Generator) -> numpy.ndarray:
        return math.exp(self.log_scale) * self.factor.dot(rng.standard_normal(self.dim))

    def adapt(self, log_alpha: float, sample: numpy.ndarray) -> None:
        self.count += 1
        rate = math.exp(min(log_alpha, 0.0)) if not math.isnan(log_alpha) else 0.0
        self.log_scale += (rate - self.target) / self.count ** 0.6
        delta = sample - self.mean
        self.mean += delta / self.count
        self.m2 += numpy.outer(delta, sample - self.mean)
        if self.count >= 100 + 10 * self.dim and self.count % 50 == 0:
            cov = self.m2 / (self.count - 1) * (2.38 ** 2 / self.dim)
            cov[numpy.diag_indices_from(cov)] += 1e-10
            try:
                self.factor = scipy.linalg.cholesky(cov, lower=True)
            except (numpy.linalg.LinAlgError, ValueError):
                logger.debug("keeping previous proposal shape")

    @property
    def acceptance(self) -> float:
        return self.accepted / self.proposed if self.proposed else math.nan


_Target = typing.Callable[[numpy.ndarray, typing.Any], float]


class _BlockSampler:

    def __init__(
        self,
        blocks: typing.Sequence[numpy.ndarray],
        sd: numpy.ndarray,
        target_accept: float = 0.234,
        scalar_accept: float = 0.44,
    ) -> None:
        self.blocks = [numpy.asarray(block, dtype=int) for block in blocks]
        self.adapters = [
            _BlockAdapter(sd[block], scalar_accept if block.size == 1 else target_accept)
            for block in self.blocks
        ]

    def sweep(
        self,
        y: numpy.ndarray,
        aux: typing.Any,
        lp: float,
        target: _Target,
        rng: numpy.random.Generator,
        adapt: bool,
        refresh: typing.Optional[typing.Callable[[numpy.random.Generator], typing.Any]] = None,
    ) -> typing.Tuple[numpy.ndarray, typing.Any, float]:
        for b, (block, adapter) in enumerate(zip(self.blocks, self.adapters)):
            proposal = y.copy()
            proposal[block] += adapter.propose(rng)
            new_aux = refresh(rng) if refresh is not None and b == 0 else aux
            new_lp = target(proposal, new_aux)
            log_alpha = new_lp - lp if new_lp > -math.inf else -math.inf
            adapter.proposed += 1
            if rng.random() < math.exp(min(log_alpha, 0.0)):
                y, aux, lp = proposal, new_aux, new_lp
                adapter.accepted += 1
            if adapt:
                adapter.adapt(log_alpha, y[block])
        return y, aux, lp

    def reset_counts(self) -> None:
        for adapter in self.adapters:
            adapter.proposed = adapter.accepted = 0


def sample_density(
    logpdf: typing.Callable[[numpy.ndarray], float],
    x0: typing.Sequence[float],
    iterations: int,
    *,
    burn_in: typing.Optional[int] = None,
    thin: int = 1,
    seed: int = 0,
    blocks: typing.Optional[typing.Sequence[typing.Sequence[int]]] = None,
    initial_sd: typing.Optional[typing.Sequence[float]] = None,
    target_accept: float = 0.234,
) -> numpy.ndarray:
    """Sample an arbitrary log density with the adaptive blocked sampler.

    Arguments:
        logpdf (callable): The log density, up to a constant.
        x0 (sequence of `float`): The initial state, with a finite density.
        iterations (`int`): The number of retained sweeps, before thinning.
        burn_in (`int`, optional): The number of adaptive sweeps run
            before ``iterations``. Defaults to ``iterations // 10``.
        thin (`int`): Keep one sweep out of ``thin``.
        seed (`int`): The seed of the random sub-stream.
        blocks (sequence, optional): The indices updated jointly. Defaults
            to a single block with all coordinates.
        initial_sd (sequence, optional): The initial proposal scales.

    Returns:
        `numpy.ndarray`: The retained draws, one row per draw.

    """
    x = numpy.array(x0, dtype=float)
    burn_in = iterations // 10 if burn_in is None else burn_in
    blocks = [numpy.arange(x.size)] if blocks is None else [numpy.asarray(b) for b in blocks]
    sd = numpy.ones(x.size) if initial_sd is None else numpy.asarray(initial_sd, dtype=float)
    lp = logpdf(x)
    if not math.isfinite(lp):
        raise InvalidParameter("x0", list(x0), hint="a point with finite density")

    rng = substream(seed, "sampler")
    sampler = _BlockSampler(blocks, sd, target_accept)
    target = lambda y, _: logpdf(y)  # noqa: E731
    draws = []
    for it in range(burn_in + iterations):
        x, _, lp = sampler.sweep(x, None, lp, target, rng, it < burn_in)
        if it >= burn_in and (it - burn_in) % thin == 0:
            draws.append(x.copy())
    return numpy.array(draws).reshape(-1, x.size)


@dataclasses.dataclass(frozen=True)
class McmcConfig:
    """The settings of a multi-chain run.

    Attributes:
        chains (`int`): The number of independent chains.
        iterations (`int`): The total number of sweeps of each chain.
        burn_in (`int`): The number of adaptive sweeps discarded first.
        thin (`int`): Keep one sweep out of ``thin`` after burn-in.
        seed (`int`): The master seed.
        target_accept (`float`): The acceptance rate targeted by blocks
            of several parameters.
        n_aux (`int`): The number of likelihood estimates averaged per
            proposal.
        grid_count (`int`): The number of nodes of the inversion grid.
        v_alpha (`float`): The prior scale of the peak levels.
        jobs (`int`): The number of threads, ``0`` for automatic.
        max_restarts (`int`): The number of prior draws tried before
            giving up on finding a valid initial state.

    """

    chains: int = 40
    iterations: int = 20000
    burn_in: int = 10000
    thin: int = 10
    seed: int = 0
    target_accept: float = 0.234
    n_aux: int = 1
    grid_count: int = 2001
    v_alpha: float = 6.0
    jobs: int = 0
    max_restarts: int = 100

    def __post_init__(self) -> None:
        if self.chains < 1:
            raise InvalidParameter("chains", self.chains, hint="integer >= 1")
        if not 0 <= self.burn_in < self.iterations:
            raise InvalidParameter("burn_in", self.burn_in, hint="integer in [0, {})".format(self.iterations))
        if self.thin < 1:
            raise InvalidParameter("thin", self.thin, hint="integer >= 1")
        if not 0.0 < self.target_accept < 1.0:
            raise InvalidParameter("target_accept", self.target_accept, hint="number in (0, 1)")
        if self.n_aux < 1:
            raise InvalidParameter("n_aux", self.n_aux, hint="integer >= 1")
        if self.seed < 0:
            raise InvalidParameter("seed", self.seed, hint="non-negative integer")


@dataclasses.dataclass
class _ChainResult:
    draws: numpy.ndarray
    acceptance: typing.Dict[str, float]
    diagnostics: typing.Dict[str, int]
    restarts: int


def _initial_state(
    model: PosteriorModel,
    rng: numpy.random.Generator,
    chain: int,
    config: McmcConfig,
) -> typing.Tuple[numpy.ndarray, numpy.ndarray, float, int]:
    subjects = model.dataset.subjects
    scores = numpy.empty(len(subjects))
    if subjects:
        best = numpy.array([s.best if len(s) else -math.inf for s in subjects])
        ranks = numpy.argsort(numpy.argsort(best, kind="stable"), kind="stable")
        scores = scipy.special.ndtri((ranks + 0.5) / len(subjects))
    excess = float(model._x_above.max() - model.u) if model._x_above.size else 0.0

    for attempt in range(config.max_restarts):
        x = _prior_vector(rng, len(subjects), config.v_alpha)
        x[8::2] = scores
        if x[0] < 0 and x[1] <= -x[0] * excess:
            x[1] = -x[0] * excess * 1.5
        with numpy.errstate(divide="ignore"):
            y = model.layout.to_unconstrained(x)
        v = model.draw_aux(rng)
        if numpy.all(numpy.isfinite(y)):
            lp = model.log_density(y, v)
            if math.isfinite(lp):
                return y, v, lp, attempt
        logger.debug("chain %d: restart %d from a non-finite posterior", chain, attempt + 1)
    raise StartupError(chain, config.max_restarts)


def _run_chain(dataset: Dataset, grid: typing.Optional[GridSpec], config: McmcConfig, chain: int) -> _ChainResult:
    rng = substream(config.seed, "chain", chain)
    model = PosteriorModel(dataset, grid, grid_count=config.grid_count, n_aux=config.n_aux, v_alpha=config.v_alpha)
    y, v, lp, restarts = _initial_state(model, rng, chain, config)
    layout = model.layout
    sampler = _BlockSampler(layout.blocks, layout.initial_sd(), config.target_accept)

    draws = []
    for it in range(config.iterations):
        if it == config.burn_in:
            sampler.reset_counts()
        adapt = it < config.burn_in
        y, v, lp = sampler.sweep(y, v, lp, model.log_density, rng, adapt, model.draw_aux)
        if not adapt and (it - config.burn_in) % config.thin == 0:
            draws.append(y.copy())

    subject_rates = [a.acceptance for a in sampler.adapters[2:]]
    acceptance = {
        "marginal": sampler.adapters[0].acceptance,
        "population": sampler.adapters[1].acceptance,
        "subjects": float(numpy.mean(subject_rates)) if subject_rates else math.nan,
    }
    logger.info(
        "chain %d done: acceptance %s",
        chain,
        ", ".join("{}={:.3f}".format(k, r) for k, r in acceptance.items()),
    )
    return _ChainResult(numpy.array(draws).reshape(-1, len(layout)), acceptance, dict(model.diagnostics), restarts)


@dataclasses.dataclass(eq=False)
class Trace:
    """The retained draws of several chains, on the sampling scale.

    Attributes:
        names (`tuple` of `str`): The parameter names, in vector order.
        chains (`list` of `numpy.ndarray`): The draws of each chain, one
            row per retained iteration.
        iterations (`numpy.ndarray`): The sweep index of each retained row.
        seed (`int`): The master seed the chains were derived from.
        acceptance (`list` of `dict`): The post burn-in acceptance rates
            of each chain, per block kind.
        diagnostics (`dict`): The recovered failures, over all chains.

    """

    names: typing.Tuple[str, ...]
    chains: typing.List[numpy.ndarray]
    iterations: numpy.ndarray
    seed: int = 0
    acceptance: typing.List[typing.Dict[str, float]] = dataclasses.field(default_factory=list)
    diagnostics: typing.Dict[str, int] = dataclasses.field(default_factory=dict)

    @property
    def layout(self) -> ParameterLayout:
        return ParameterLayout.from_names(self.names)

    def constrained(self) -> typing.List[numpy.ndarray]:
        """Get the draws of each chain on the constrained scale."""
        layout = self.layout
        return [layout.to_constrained(draws) for draws in self.chains]

    def to_frame(self) -> pandas.DataFrame:
        """Get the draws as a table, on the constrained scale."""
        frames = []
        for k, draws in enumerate(self.constrained()):
            frame = pandas.DataFrame(draws, columns=list(self.names))
            frame.insert(0, "iteration", self.iterations[:len(frame)])
            frame.insert(0, "chain", k)
            frames.append(frame)
        if not frames:
            return pandas.DataFrame(columns=["chain", "iteration", *self.names])
        return pandas.concat(frames, ignore_index=True)

    def to_csv(self, path: typing.Union[str, "os.PathLike[str]"]) -> None:
        """Write the draws to a CSV file, on the constrained scale."""
        self.to_frame().to_csv(path, index=False, lineterminator="\n")

    @classmethod
    def from_csv(cls, path: typing.Union[str, "os.PathLike[str]"], seed: int = 0) -> "Trace":
        """Load draws written by `Trace.to_csv`."""
        frame = pandas.read_csv(path, float_precision="round_trip")
        if list(frame.columns[:2]) != ["chain", "iteration"]:
            raise InvalidParameter("columns", list(frame.columns[:2]), hint="chain, iteration")
        names = tuple(frame.columns[2:])
        layout = ParameterLayout.from_names(names)
        chains = []
        iterations = numpy.empty(0, dtype=int)
        for _, group in frame.groupby("chain", sort=True):
            with numpy.errstate(divide="ignore"):
                chains.append(layout.to_unconstrained(group[list(names)].to_numpy(dtype=float)))
            iterations = group["iteration"].to_numpy(dtype=int)
        return cls(names, chains, iterations, seed)

    def pooled(self) -> numpy.ndarray:
        """Get the constrained draws of all chains, stacked."""
        draws = self.constrained()
        return numpy.concatenate(draws) if draws else numpy.empty((0, len(self.names)))

    def thetas(self, u: float, v_alpha: float = 6.0, count: typing.Optional[int] = None) -> typing.List[Theta]:
        """Get pooled draws as `Theta` objects.

        Arguments:
            u (`float`): The threshold of the dataset.
            v_alpha (`float`): The prior scale of the peak levels.
            count (`int`, optional): Keep this many draws, evenly spaced
                over the pooled sample, or all of them if `None`.

        """
        pooled = self.pooled()
        if count is not None and count < len(pooled):
            pooled = pooled[numpy.linspace(0, len(pooled) - 1, count).round().astype(int)]
        layout = self.layout
        return [layout.theta(x, u, v_alpha) for x in pooled]


def run_mcmc(
    d: Dataset,
    g: typing.Optional[GridSpec] = None,
    config: McmcConfig = McmcConfig(),
    *,
    callback: typing.Optional[typing.Callable[[int, int], None]] = None,
) -> Trace:
    """Sample the posterior of a dataset with independent chains.

    Chain ``k`` draws its random numbers from the ``chain:k`` sub-stream
    of the master seed, so results do not depend on the number of threads.

    Arguments:
        d (`~longtail.data.Dataset`): A preprocessed dataset.
        g (`~longtail.distributions.GridSpec`, optional): A fixed
            inversion grid, or `None` to cover the mixture at each step.
        config (`McmcConfig`): The run settings.
        callback (callable, optional): Called with the chain index and the
            number of chains started after each chain completes.

    Raises:
        `~longtail.errors.StartupError`: When a chain cannot find a
            valid initial state.

    """
    logger.info("running %d chains of %d iterations", config.chains, config.iterations)
    task = functools.partial(_run_chain, d, g, config)
    results = list(imap_ordered(task, range(config.chains), cpus=config.jobs, callback=callback))
    counters = Diagnostics()
    for result in results:
        counters.merge(result.diagnostics)
    if counters:
        logger.warning("recovered failures: %r", dict(counters))
    iterations = numpy.arange(config.burn_in, config.iterations, config.thin)
    return Trace(
        ParameterLayout(d.ids).names,
        [result.draws for result in results],
        iterations,
        config.seed,
        [result.acceptance for result in results],
        dict(counters),
    )


# --- Diagnostics ------------------------------------------------------------


def split_rhat(chains: numpy.ndarray) -> float:
    """Compute the split potential scale reduction of a scalar parameter.

    Arguments:
        chains (`numpy.ndarray`): The draws, with one row per chain.

    Note:
        Copies of a single chain carry no between-chain spread, but their
        halves still do: the estimate is then only within O(1/n) of one
        for chains of length n, and equals ``sqrt((n/2 - 1) / (n/2))``
        when both halves have the same mean.

    Example:
        >>> rng = numpy.random.default_rng(0)
        >>> split_rhat(numpy.stack([rng.normal(0, 1, 1000), rng.normal(3, 1, 1000)])) > 1.5
        True

    """
    chains = numpy.asarray(chains, dtype=float)
    half = chains.shape[1] // 2
    splits = numpy.concatenate([chains[:, :half], chains[:, chains.shape[1] - half:]])
    within = splits.var(axis=1, ddof=1).mean()
    between = half * splits.mean(axis=1).var(ddof=1)
    if within == 0:
        return 1.0 if between == 0 else math.inf
    var_plus = (half - 1) / half * within + between / half
    return float(math.sqrt(var_plus / within))


def _autocovariance(x: numpy.ndarray) -> numpy.ndarray:
    n = x.shape[-1]
    size = 1 << (2 * n - 1).bit_length()
    centered = x - x.mean(axis=-1, keepdims=True)
    f = numpy.fft.rfft(centered, size, axis=-1)
    return numpy.fft.irfft(f * numpy.conjugate(f), size, axis=-1)[..., :n] / n


def effective_sample_size(chains: numpy.ndarray) -> float:
    """Estimate the effective sample size of a scalar parameter.

    Autocorrelations are combined across chains, and summed over initial
    positive pairs made monotone.

    """
    chains = numpy.asarray(chains, dtype=float)
    m, n = chains.shape
    acov = _autocovariance(chains)
    within = (acov[:, 0] * n / (n - 1)).mean()
    var_plus = within * (n - 1) / n
    if m > 1:
        var_plus += chains.mean(axis=1).var(ddof=1)
    if var_plus == 0:
        return float(m * n)
    rho = 1.0 - (within - acov.mean(axis=0)) / var_plus
    rho[0] = 1.0
    pairs = []
    for t in range(0, n - 1, 2):
        pair = rho[t] + rho[t + 1]
        if pair < 0:
            break
        pairs.append(pair)
    tau = -1.0 + 2.0 * numpy.minimum.accumulate(pairs).sum() if pairs else 1.0
    return float(m * n / max(tau, 1.0 / math.log10(max(m * n, 10))))


def hpdi(samples: numpy.ndarray, level: float = 0.95) -> typing.Tuple[float, float]:
    """Get the shortest interval containing ``level`` of the samples.

    Example:
        >>> hpdi(numpy.arange(101.0), 0.5)
        (0.0, 50.0)

    """
    if not 0.0 < level < 1.0:
        raise InvalidParameter("level", level, hint="number in (0, 1)")
    x = numpy.sort(numpy.asarray(samples, dtype=float).ravel())
    width = int(math.floor(level * x.size))
    if width < 1:
        raise DiagnosticsError("too few samples for a {} interval".format(level))
    spans = x[width:] - x[:x.size - width]
    i = int(numpy.argmin(spans))
    return float(x[i]), float(x[i + width])


@dataclasses.dataclass(frozen=True)
class ParameterSummary:
    """The posterior summary of a scalar parameter."""

    mean: float
    sd: float
    hpdi_lo: float
    hpdi_hi: float
    rhat: float
    ess: float


@dataclasses.dataclass(frozen=True)
class PosteriorSummary:
    """Posterior summaries of every parameter, in vector order."""

    parameters: typing.Dict[str, ParameterSummary]
    level: float = 0.95

    def __getitem__(self, name: str) -> ParameterSummary:
        return self.parameters[name]

    def to_dict(self) -> typing.Dict[str, typing.Dict[str, typing.Optional[float]]]:
        return {
            name: {k: (v if math.isfinite(v) else None) for k, v in dataclasses.asdict(p).items()}
            for name, p in self.parameters.items()
        }

    def to_json(self) -> str:
        """Serialize the summaries, with non-finite values as ``null``."""
        return json.dumps(self.to_dict(), indent=2)


def diagnostics(trace: Trace, level: float = 0.95) -> PosteriorSummary:
    """Summarize a trace and check the convergence of its chains.

    Raises:
        `~longtail.errors.DiagnosticsError`: When less than two chains
            are given, or when chains have different lengths.

    """
    if len(trace.chains) < 2:
        raise DiagnosticsError("at least 2 chains required, got {}".format(len(trace.chains)))
    lengths = {len(chain) for chain in trace.chains}
    if len(lengths) > 1:
        raise DiagnosticsError("chains of unequal length: {}".format(sorted(lengths)))
    if lengths.pop() < 4:
        raise DiagnosticsError("at least 4 draws per chain required")

    draws = numpy.stack(trace.constrained())
    parameters = {}
    for j, name in enumerate(trace.names):
        chains = draws[:, :, j]
        lo, hi = hpdi(chains, level)
        parameters[name] = ParameterSummary(
            mean=float(chains.mean()),
            sd=float(chains.std(ddof=1)),
            hpdi_lo=lo,
            hpdi_hi=hi,
            rhat=split_rhat(chains),
            ess=effective_sample_size(chains),
        )
        if parameters[name].rhat > 1.1:
            logger.warning("%s has not converged (R-hat %.3f)", name, parameters[name].rhat)
    return PosteriorSummary(parameters, level)
