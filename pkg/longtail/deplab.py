# coding: utf-8
"""Measures of extremal dependence and limits of longitudinal maxima.

This module gathers Monte-Carlo estimators and closed forms used to check
the dependence structure implied by the latent Gaussian model:

- the coefficients :math:`χ(q)` and :math:`\\bar{χ}(q)` of asymptotic
  dependence and independence of a pair of uniform margins;
- their lagged versions for a population of subjects, using either the
  margins of each subject, of the population maximum, or of a randomly
  selected subject;
- the joint law of the componentwise maxima of a population at two
  times, where a single subject with a growing mean makes the maxima
  asymptotically dependent.

"""

import dataclasses
import logging
import math
import typing

import numpy
import scipy.optimize
import scipy.special
import scipy.stats

from .distributions import bvn_cdf, bvn_sf, norm_cdf, norm_quantile
from .errors import InvalidParameter, UndefinedEstimate
from .utils import substream

__all__ = [
    "PairSample",
    "ChiEstimate",
    "LagSample",
    "LagMeasures",
    "LimitExperiment",
    "MaximaLimit",
    "ConditionalLimit",
    "chi_chibar",
    "gaussian_copula_sample",
    "gaussian_copula_chi",
    "gaussian_copula_chibar",
    "logistic_chi",
    "lag_testbed",
    "lag_measures",
    "chi_max_exact",
    "maxima_limit",
    "conditional_limit",
    "norming_constants",
]

logger = logging.getLogger(__name__)

#: The minimum expected number of marginal exceedances of an estimate.
MIN_EXCEEDANCES = 50

_ONE_BELOW = numpy.nextafter(1.0, 0.0)
_TINY = numpy.nextafter(0.0, 1.0)


# --- Pairwise measures ------------------------------------------------------


@dataclasses.dataclass(frozen=True, eq=False)
class PairSample:
    """Pairs of values on uniform margins."""

    u1: numpy.ndarray
    u2: numpy.ndarray

    def __post_init__(self) -> None:
        u1 = numpy.array(self.u1, dtype=float).ravel()
        u2 = numpy.array(self.u2, dtype=float).ravel()
        if u1.shape != u2.shape:
            raise InvalidParameter("u2", u2.size, hint="{} values".format(u1.size))
        for name, u in (("u1", u1), ("u2", u2)):
            if not numpy.all((u > 0.0) & (u < 1.0)):
                raise InvalidParameter(name, "...", hint="values in (0, 1)")
            u.flags.writeable = False
        object.__setattr__(self, "u1", u1)
        object.__setattr__(self, "u2", u2)

    @property
    def count(self) -> int:
        return self.u1.size

    def swapped(self) -> "PairSample":
        return PairSample(self.u2, self.u1)


@dataclasses.dataclass(frozen=True)
class ChiEstimate:
    """Estimates of :math:`χ(q)` and :math:`\\bar{χ}(q)` with standard errors."""

    q: float
    chi: float
    chi_se: float
    chibar: float
    chibar_se: float


def chi_chibar(sample: PairSample, q: float) -> ChiEstimate:
    """Estimate the dependence coefficients of a pair at level ``q``.

    The marginal exceedance probability is estimated by the average of the
    two empirical marginal rates, which keeps the estimates symmetric and
    exact for comonotone pairs. Standard errors use the delta method on
    the multinomial counts of the exceedance cells.

    Example:
        >>> u = numpy.linspace(0.001, 0.999, 999)
        >>> est = chi_chibar(PairSample(u, u), 0.9)
        >>> est.chi, est.chibar
        (1.0, 1.0)

    Raises:
        `~longtail.errors.InvalidParameter`: When less than
            `MIN_EXCEEDANCES` marginal exceedances are expected.
        `~longtail.errors.UndefinedEstimate`: When the pairs never, or
            always, exceed ``q`` jointly.

    """
    if not 0.0 < q < 1.0:
        raise InvalidParameter("q", q, hint="number in (0, 1)")
    if sample.count * (1.0 - q) < MIN_EXCEEDANCES:
        raise InvalidParameter("q", q, hint="at least {} expected exceedances".format(MIN_EXCEEDANCES))
    x1, x2 = sample.u1 > q, sample.u2 > q
    n = sample.count
    cells = numpy.array([
        numpy.count_nonzero(x1 & x2),
        numpy.count_nonzero(x1 & ~x2),
        numpy.count_nonzero(~x1 & x2),
    ], dtype=float) / n
    both = float(cells[0])
    if both == 0.0:
        raise UndefinedEstimate("chi", "no joint exceedance of {}".format(q))
    if both == 1.0:
        raise UndefinedEstimate("chibar", "every pair exceeds {}".format(q))
    margin = both + float(cells[1] + cells[2]) / 2

    chi = both / margin
    log_both = math.log(both)
    chibar = 2.0 * math.log(margin) / log_both - 1.0

    cov = (numpy.diag(cells) - numpy.outer(cells, cells)) / n
    grad_chi = numpy.array([1.0 / margin - both / margin ** 2, -both / (2 * margin ** 2), -both / (2 * margin ** 2)])
    d_margin = 1.0 / (margin * log_both)
    grad_chibar = numpy.array([
        2.0 * d_margin - 2.0 * math.log(margin) / (both * log_both ** 2),
        d_margin,
        d_margin,
    ])
    return ChiEstimate(
        q,
        chi,
        math.sqrt(max(0.0, float(grad_chi.dot(cov).dot(grad_chi)))),
        chibar,
        math.sqrt(max(0.0, float(grad_chibar.dot(cov).dot(grad_chibar)))),
    )


def _uniform(p: numpy.ndarray) -> numpy.ndarray:
    return numpy.clip(p, _TINY, _ONE_BELOW)


def gaussian_copula_sample(rho: float, count: int, rng: numpy.random.Generator) -> PairSample:
    """Draw pairs from a Gaussian copula with correlation ``rho``."""
    if not abs(rho) < 1.0:
        raise InvalidParameter("rho", rho, hint="number in (-1, 1)")
    z1 = rng.standard_normal(count)
    z2 = rho * z1 + math.sqrt(1.0 - rho * rho) * rng.standard_normal(count)
    return PairSample(_uniform(scipy.special.ndtr(z1)), _uniform(scipy.special.ndtr(z2)))


def gaussian_copula_chi(rho: float, q: float) -> float:
    """Compute :math:`χ(q)` of a Gaussian copula exactly.

    Example:
        >>> round(gaussian_copula_chi(0.0, 0.9), 12)
        0.1

    """
    z = typing.cast(float, norm_quantile(q))
    return bvn_sf(z, z, rho) / (1.0 - q)


def gaussian_copula_chibar(rho: float, q: float) -> float:
    """Compute :math:`\\bar{χ}(q)` of a Gaussian copula exactly.

    The value tends to ``rho`` as ``q`` tends to one, but slowly.

    """
    z = typing.cast(float, norm_quantile(q))
    return 2.0 * math.log1p(-q) / math.log(bvn_sf(z, z, rho)) - 1.0


def logistic_chi(dep: float) -> float:
    """Get :math:`χ` of the logistic copula with dependence ``dep``.

    Example:
        >>> logistic_chi(1.0)
        0.0
        >>> round(logistic_chi(0.5), 6)
        0.585786

    """
    if not 0.0 < dep <= 1.0:
        raise InvalidParameter("dep", dep, hint="number in (0, 1]")
    return 2.0 - 2.0 ** dep


# --- Lagged measures --------------------------------------------------------


@dataclasses.dataclass(frozen=True, eq=False)
class LagSample:
    """Gaussian responses of a population at two times.

    Subject ``i`` has unit-variance normal responses with mean
    ``alphas[i]`` and correlation ``rho`` between the two times.

    Attributes:
        alphas (`numpy.ndarray`): The subject means.
        rho (`float`): The within-subject correlation.
        x0 (`numpy.ndarray`): The responses at the first time, with one
            row per replicate and one column per subject.
        x1 (`numpy.ndarray`): The responses at the second time.

    """

    alphas: numpy.ndarray
    rho: float
    x0: numpy.ndarray
    x1: numpy.ndarray


@dataclasses.dataclass(frozen=True)
class LagMeasures:
    """The lagged dependence coefficients of a population."""

    subjects: typing.Tuple[ChiEstimate, ...]
    maximum: ChiEstimate
    random: ChiEstimate


def lag_testbed(
    alphas: typing.Sequence[float],
    rho: float,
    reps: int,
    rng: numpy.random.Generator,
) -> LagSample:
    """Simulate the Gaussian population used by `lag_measures`."""
    alphas = numpy.asarray(alphas, dtype=float)
    if alphas.size < 1:
        raise InvalidParameter("alphas", alphas.size, hint="at least one subject")
    if not abs(rho) < 1.0:
        raise InvalidParameter("rho", rho, hint="number in (-1, 1)")
    z0 = rng.standard_normal((reps, alphas.size))
    z1 = rho * z0 + math.sqrt(1.0 - rho * rho) * rng.standard_normal((reps, alphas.size))
    return LagSample(alphas, rho, alphas + z0, alphas + z1)


def _maximum_cdf(alphas: numpy.ndarray, x: numpy.ndarray) -> numpy.ndarray:
    return numpy.exp(scipy.special.log_ndtr(x[..., None] - alphas).sum(axis=-1))


def lag_measures(sample: LagSample, q: float, rng: typing.Optional[numpy.random.Generator] = None) -> LagMeasures:
    """Estimate the lagged dependence coefficients of a population.

    Arguments:
        sample (`LagSample`): The responses of the population.
        q (`float`): The quantile level.
        rng (`numpy.random.Generator`, optional): The generator selecting
            the random subject of each replicate.

    Returns:
        `LagMeasures`: The coefficients of each subject on its own margins,
        of the population maximum on the margins of the maximum, and of a
        randomly selected subject (the same at both times) on the average
        margins of the population.

    """
    alphas = sample.alphas
    subjects = tuple(
        chi_chibar(
            PairSample(
                _uniform(scipy.special.ndtr(sample.x0[:, i] - a)),
                _uniform(scipy.special.ndtr(sample.x1[:, i] - a)),
            ),
            q,
        )
        for i, a in enumerate(alphas)
    )
    m0, m1 = sample.x0.max(axis=1), sample.x1.max(axis=1)
    maximum = chi_chibar(
        PairSample(_uniform(_maximum_cdf(alphas, m0)), _uniform(_maximum_cdf(alphas, m1))),
        q,
    )
    rng = substream(0, "lag") if rng is None else rng
    pick = rng.integers(alphas.size, size=sample.x0.shape[0])
    rows = numpy.arange(sample.x0.shape[0])
    r0, r1 = sample.x0[rows, pick], sample.x1[rows, pick]
    random = chi_chibar(
        PairSample(
            _uniform(scipy.special.ndtr(r0[:, None] - alphas).mean(axis=1)),
            _uniform(scipy.special.ndtr(r1[:, None] - alphas).mean(axis=1)),
        ),
        q,
    )
    return LagMeasures(subjects, maximum, random)


def chi_max_exact(alphas: typing.Sequence[float], rho: float, q: float) -> float:
    """Compute :math:`χ(q)` of the population maximum of a `LagSample`.

    Example:
        >>> round(chi_max_exact([0.0], 0.0, 0.9), 9)
        0.1

    """
    alphas = numpy.asarray(alphas, dtype=float)
    if not 0.0 < q < 1.0:
        raise InvalidParameter("q", q, hint="number in (0, 1)")

    def gap(x: float) -> float:
        return float(scipy.special.log_ndtr(x - alphas).sum()) - math.log(q)

    lo = float(alphas.min()) + typing.cast(float, norm_quantile(q))
    hi = float(alphas.max()) + typing.cast(float, norm_quantile(q ** (1.0 / alphas.size)))
    x = scipy.optimize.brentq(gap, lo - 1.0, hi + 1.0, xtol=1e-14, rtol=4 * numpy.finfo(float).eps)
    both_below = math.prod(bvn_cdf(x - a, x - a, rho) for a in alphas)
    return (1.0 - 2.0 * q + both_below) / (1.0 - q)


# --- Limits of maxima -------------------------------------------------------


def norming_constants(n: int) -> typing.Tuple[float, float]:
    """Get the norming constants of the maximum of ``n`` standard normals.

    Example:
        >>> a, b = norming_constants(1000)
        >>> round(a, 3), round(b, 3)
        (0.269, 3.116)

    """
    if n < 2:
        raise InvalidParameter("n", n, hint="integer >= 2")
    root = math.sqrt(2.0 * math.log(n))
    b = root - (math.log(math.log(n)) + math.log(4.0 * math.pi)) / (2.0 * root)
    return 1.0 / root, b


@dataclasses.dataclass(frozen=True)
class LimitExperiment:
    """A population of ``n`` subjects observed at two times.

    The first ``n - 1`` subjects have independent standard normal
    responses. The last subject has unit-variance responses with mean
    ``alpha_n`` and correlation ``rho`` between the two times.

    Attributes:
        n (`int`): The number of subjects.
        rho (`float`): The within-subject correlation of the last subject.
        case (`str`): ``"i"`` for a mean growing faster than the norming
            of the maxima, ``"ii"`` for a constant mean.
        delta (`float`, optional): When given in case ``"i"``, the mean
            is pinned to :math:`(2 \\log n)^{1/2} - δ`.
        alpha (`float`): The constant mean used in case ``"ii"``.
        replications (`int`): The number of simulated populations.
        seed (`int`): The master seed. Draws do not depend on ``n``, so
            experiments differing by ``n`` use common random numbers.

    """

    n: int
    rho: float
    case: str = "i"
    delta: typing.Optional[float] = None
    alpha: float = 0.0
    replications: int = 100000
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n < 2:
            raise InvalidParameter("n", self.n, hint="integer >= 2")
        if not abs(self.rho) < 1.0:
            raise InvalidParameter("rho", self.rho, hint="number in (-1, 1)")
        if self.case not in ("i", "ii"):
            raise InvalidParameter("case", self.case, choices=["i", "ii"])
        if self.replications < 1:
            raise InvalidParameter("replications", self.replications, hint="integer >= 1")

    @property
    def alpha_n(self) -> float:
        """`float`: The mean of the last subject."""
        if self.case == "ii":
            return self.alpha
        root = math.sqrt(2.0 * math.log(self.n))
        if self.delta is not None:
            return root - self.delta
        return root * math.log(math.log(self.n)) if self.n > math.e else root

    def simulate(self) -> typing.Tuple[numpy.ndarray, numpy.ndarray, numpy.ndarray, numpy.ndarray]:
        """Simulate the maxima of the other subjects and the last subject.

        Returns:
            `tuple` of `numpy.ndarray`: The maxima of the ``n - 1`` other
            subjects at both times, then the responses of the last subject
            at both times.

        """
        rng = substream(self.seed, "limit")
        reps = self.replications
        log_u = numpy.log(_uniform(rng.random((2, reps))))
        # exact maximum of n - 1 standard normals from a single uniform
        others = -scipy.special.ndtri(-numpy.expm1(log_u / (self.n - 1)))
        z0 = rng.standard_normal(reps)
        z1 = self.rho * z0 + math.sqrt(1.0 - self.rho ** 2) * rng.standard_normal(reps)
        return others[0], others[1], self.alpha_n + z0, self.alpha_n + z1


@dataclasses.dataclass(frozen=True, eq=False)
class MaximaLimit:
    """The empirical joint law of normalized maxima against its limit.

    Attributes:
        points (`numpy.ndarray`): The evaluation points on each axis.
        empirical (`numpy.ndarray`): The empirical joint distribution
            function on the lattice of ``points``.
        limit (`numpy.ndarray`): The limit joint distribution function.
        se (`numpy.ndarray`): The standard errors of ``empirical``.
        sup_distance (`float`): The largest absolute difference between
            ``empirical`` and ``limit``.
        ks_marginal (`float`): The Kolmogorov distance between the
            first normalized maximum and its marginal limit.

    """

    points: numpy.ndarray
    empirical: numpy.ndarray
    limit: numpy.ndarray
    se: numpy.ndarray
    sup_distance: float
    ks_marginal: float

    def at(self, x: float, y: float) -> typing.Tuple[float, float, float]:
        """Get the empirical value, limit and standard error at a point."""
        i = int(numpy.argmin(numpy.abs(self.points - x)))
        j = int(numpy.argmin(numpy.abs(self.points - y)))
        return float(self.empirical[i, j]), float(self.limit[i, j]), float(self.se[i, j])


def _gumbel_cdf(x: numpy.ndarray) -> numpy.ndarray:
    return numpy.exp(-numpy.exp(-x))


def maxima_limit(exp: LimitExperiment, points: typing.Optional[typing.Sequence[float]] = None) -> MaximaLimit:
    """Compare the joint law of the maxima at two times with its limit.

    In case ``"i"``, the maxima are centered by the mean of the last
    subject and converge to a bivariate normal with correlation ``rho``.
    In case ``"ii"``, they are normalized by the norming constants of
    `norming_constants`, and converge to independent Gumbel variables.

    """
    if exp.replications < 10000:
        raise InvalidParameter("replications", exp.replications, hint="integer >= 10000")
    grid = numpy.linspace(-2.0, 2.0, 9) if points is None else numpy.asarray(points, dtype=float)
    o0, o1, y0, y1 = exp.simulate()
    m0, m1 = numpy.maximum(o0, y0), numpy.maximum(o1, y1)

    if exp.case == "i":
        a0, a1 = m0 - exp.alpha_n, m1 - exp.alpha_n
        limit = numpy.array([[bvn_cdf(x, y, exp.rho) for y in grid] for x in grid])
        marginal: typing.Callable[[numpy.ndarray], numpy.ndarray] = scipy.special.ndtr
    else:
        a, b = norming_constants(exp.n)
        a0, a1 = (m0 - b) / a, (m1 - b) / a
        limit = numpy.outer(_gumbel_cdf(grid), _gumbel_cdf(grid))
        marginal = _gumbel_cdf

    below0 = (a0[:, None] <= grid).astype(float)
    below1 = (a1[:, None] <= grid).astype(float)
    empirical = below0.T.dot(below1) / exp.replications
    se = numpy.sqrt(empirical * (1.0 - empirical) / exp.replications)
    ks = float(scipy.stats.kstest(a0, marginal).statistic)
    sup = float(numpy.abs(empirical - limit).max())
    logger.debug("maxima limit n=%d case=%s: sup distance %.4f, ks %.4f", exp.n, exp.case, sup, ks)
    return MaximaLimit(grid, empirical, limit, se, sup, ks)


@dataclasses.dataclass(frozen=True)
class ConditionalLimit:
    """The probability that the maximum stays high, given it was high.

    Attributes:
        analytic (`float`): The limit as ``n`` grows, in case ``"i"``.
        finite_n (`float`): The exact probability for the simulated ``n``.
        mc (`float`): The Monte-Carlo estimate, in case ``"i"``.
        se (`float`): The standard error of ``mc``.
        mc_case_ii (`float`): The Monte-Carlo estimate with a constant
            mean, which tends to zero.
        se_case_ii (`float`): The standard error of ``mc_case_ii``.
        same_subject (`float`): The probability that the same subject is
            the maximum at both times, in case ``"i"`` with the default
            growing mean; it tends to one.
        same_subject_case_ii (`float`): The same probability in case
            ``"ii"``; it tends to zero.

    """

    analytic: float
    finite_n: float
    mc: float
    se: float
    mc_case_ii: float
    se_case_ii: float
    same_subject: float
    same_subject_case_ii: float


def _exceed_again(exp: LimitExperiment, level: float) -> typing.Tuple[float, float]:
    o0, o1, y0, y1 = exp.simulate()
    first = numpy.maximum(o0, y0) > level
    count = numpy.count_nonzero(first)
    if count == 0:
        raise UndefinedEstimate("conditional probability", "the maximum never exceeded {:g}".format(level))
    p = numpy.count_nonzero(first & (numpy.maximum(o1, y1) > level)) / count
    return p, math.sqrt(p * (1.0 - p) / count)


def _same_subject(exp: LimitExperiment) -> float:
    o0, o1, y0, y1 = exp.simulate()
    last = numpy.mean((y0 > o0) & (y1 > o1))
    # the argmax of iid subjects is uniform and independent of its value
    other = numpy.mean((y0 < o0) & (y1 < o1)) / (exp.n - 1)
    return float(last + other)


def conditional_limit(delta: float, rho: float, n: int, replications: int, seed: int = 0) -> ConditionalLimit:
    """Estimate :math:`P(M_2 > x_n \\mid M_1 > x_n)` with :math:`x_n = (2 \\log n)^{1/2}`.

    In case ``"i"`` the mean of the last subject is :math:`x_n - δ`, and
    the probability tends to
    :math:`(1 - 2Φ(δ) + Φ_2(δ, δ; ρ)) / (1 - Φ(δ))`.

    Example:
        >>> limit = conditional_limit(0.0, 0.0, 1000, 10000, seed=1)
        >>> limit.analytic
        0.5

    Raises:
        `~longtail.errors.UndefinedEstimate`: When the maximum never
            exceeds :math:`x_n` in the simulations.

    """
    level = math.sqrt(2.0 * math.log(n))
    phi = typing.cast(float, norm_cdf(delta))
    joint = bvn_cdf(delta, delta, rho)
    analytic = (1.0 - 2.0 * phi + joint) / (1.0 - phi)

    others = math.exp((n - 1) * typing.cast(float, scipy.special.log_ndtr(level)))
    finite_n = (1.0 - 2.0 * others * phi + others * others * joint) / (1.0 - others * phi)

    pinned = LimitExperiment(n, rho, "i", delta=delta, replications=replications, seed=seed)
    constant = LimitExperiment(n, rho, "ii", replications=replications, seed=seed)
    growing = LimitExperiment(n, rho, "i", replications=replications, seed=seed)
    mc, se = _exceed_again(pinned, level)
    mc_ii, se_ii = _exceed_again(constant, level)
    return ConditionalLimit(
        analytic=analytic,
        finite_n=finite_n,
        mc=mc,
        se=se,
        mc_case_ii=mc_ii,
        se_case_ii=se_ii,
        same_subject=_same_subject(growing),
        same_subject_case_ii=_same_subject(constant),
    )
