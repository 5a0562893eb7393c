# coding: utf-8
"""The latent Gaussian process of each subject.

In the latent space, the responses of subject :math:`i` are a Gaussian
process with a quadratic career trajectory as mean function,

.. math::

    μ_i(t) = α_i - γ (t - b_i - τ_i)^2,

and a powered exponential correlation :math:`\\exp(-κ_0 |t - t'|^{κ_1})`
scaled by :math:`ν^2`. Ages are measured in years, lags in days. Subjects
are independent of each other.

"""

import dataclasses
import logging
import math
import threading
import typing

import numpy
import scipy.linalg

from .data import DAYS_PER_YEAR, Dataset
from .errors import InvalidParameter, NumericalError

__all__ = [
    "JITTER",
    "SubjectEffects",
    "PopulationEffects",
    "KernelParams",
    "CholeskyCache",
    "mean_fn",
    "kernel",
    "correlation_matrix",
    "subject_cholesky",
    "subject_loglik",
    "latent_loglik",
    "gp_simulate",
    "lag_correlation",
]

logger = logging.getLogger(__name__)

#: The diagonal jitter added to correlation matrices before factorization.
JITTER = 1e-8

_LOG_2PI = math.log(2 * math.pi)


@dataclasses.dataclass(frozen=True)
class SubjectEffects:
    """The peak level ``alpha`` and peak age ``tau`` (years) of a subject."""

    alpha: float
    tau: float

    def __post_init__(self) -> None:
        if not self.tau > 0:
            raise InvalidParameter("tau", self.tau, hint="positive number")


@dataclasses.dataclass(frozen=True)
class PopulationEffects:
    """The effects shared by all subjects.

    Attributes:
        gamma (`float`): The curvature of career trajectories, in latent
            units per squared year.
        nu (`float`): The within-subject standard deviation.
        v_alpha (`float`): The fixed between-subject standard deviation of
            the peak levels.

    """

    gamma: float
    nu: float
    v_alpha: float = 6.0

    def __post_init__(self) -> None:
        if not self.gamma >= 0:
            raise InvalidParameter("gamma", self.gamma, hint="non-negative number")
        if not self.nu > 0:
            raise InvalidParameter("nu", self.nu, hint="positive number")
        if not self.v_alpha > 0:
            raise InvalidParameter("v_alpha", self.v_alpha, hint="positive number")


@dataclasses.dataclass(frozen=True)
class KernelParams:
    """The decay ``kappa0`` and smoothness ``kappa1`` of the kernel."""

    kappa0: float
    kappa1: float

    def __post_init__(self) -> None:
        if not self.kappa0 > 0:
            raise InvalidParameter("kappa0", self.kappa0, hint="positive number")
        if not 0.5 <= self.kappa1 <= 2.0:
            raise InvalidParameter("kappa1", self.kappa1, hint="number in [0.5, 2]")


def mean_fn(
    se: SubjectEffects,
    pe: PopulationEffects,
    birth: int,
    t: typing.Union[int, numpy.ndarray],
) -> typing.Union[float, numpy.ndarray]:
    """Compute the latent mean of a subject at times ``t`` (days).

    Example:
        >>> se = SubjectEffects(alpha=0.0, tau=25.0)
        >>> pe = PopulationEffects(gamma=0.02, nu=1.0)
        >>> round(mean_fn(se, pe, 0, 30 * 365.25), 12)
        -0.5

    """
    age = (numpy.asarray(t, dtype=float) - birth) / DAYS_PER_YEAR
    mu = se.alpha - pe.gamma * (age - se.tau) ** 2
    return float(mu) if numpy.ndim(mu) == 0 else mu


def kernel(
    kp: KernelParams,
    t1: typing.Union[int, numpy.ndarray],
    t2: typing.Union[int, numpy.ndarray],
) -> typing.Union[float, numpy.ndarray]:
    """Compute the correlation between two times, in days.

    Example:
        >>> round(kernel(KernelParams(math.log(2), 1.0), 0, 1), 12)
        0.5

    """
    lag = numpy.abs(numpy.asarray(t1, dtype=float) - numpy.asarray(t2, dtype=float))
    rho = numpy.exp(-kp.kappa0 * lag ** kp.kappa1)
    return float(rho) if numpy.ndim(rho) == 0 else rho


def lag_correlation(kp: KernelParams, lags: typing.Union[float, numpy.ndarray]) -> typing.Union[float, numpy.ndarray]:
    """Get the within-subject coefficient of asymptotic independence.

    Pairs of latent values of a same subject are bivariate normal, so they
    are asymptotically independent with a coefficient :math:`\\bar{χ}`
    equal to their correlation at the given lag (in days).

    """
    return kernel(kp, 0, lags)


def correlation_matrix(kp: KernelParams, times: numpy.ndarray, jitter: float = JITTER) -> numpy.ndarray:
    """Build the correlation matrix of a subject, with diagonal jitter."""
    times = numpy.asarray(times, dtype=float)
    corr = numpy.asarray(kernel(kp, times[:, None], times[None, :]))
    corr[numpy.diag_indices_from(corr)] += jitter
    return corr


def subject_cholesky(
    kp: KernelParams,
    times: numpy.ndarray,
    subject: typing.Optional[str] = None,
    jitter: float = JITTER,
) -> numpy.ndarray:
    """Get the lower Cholesky factor of a subject correlation matrix.

    Raises:
        `~longtail.errors.NumericalError`: When the jittered matrix is
            not positive definite.

    """
    try:
        return scipy.linalg.cholesky(correlation_matrix(kp, times, jitter), lower=True)
    except (numpy.linalg.LinAlgError, ValueError) as err:
        raise NumericalError("Cholesky factorization failed after jitter", subject) from err


class CholeskyCache:
    """A cache of subject Cholesky factors for the current kernel parameters.

    The cache only holds the factors of the latest kernel parameters it was
    queried with: asking for other parameters clears it.

    """

    def __init__(self, jitter: float = JITTER) -> None:
        self.jitter = jitter
        self._kernel: typing.Optional[KernelParams] = None
        self._factors: typing.Dict[typing.Hashable, numpy.ndarray] = {}
        self._lock = threading.Lock()

    def get(
        self,
        kp: KernelParams,
        key: typing.Hashable,
        times: numpy.ndarray,
        subject: typing.Optional[str] = None,
    ) -> numpy.ndarray:
        """Get the Cholesky factor of a subject, computing it if needed."""
        with self._lock:
            if kp != self._kernel:
                self._kernel = kp
                self._factors.clear()
            factor = self._factors.get(key)
        if factor is None:
            factor = subject_cholesky(kp, times, subject, self.jitter)
            with self._lock:
                if kp == self._kernel:
                    self._factors[key] = factor
        return factor


def subject_loglik(z: numpy.ndarray, mu: numpy.ndarray, nu: float, chol: numpy.ndarray) -> float:
    """Compute the multivariate normal log density of one subject.

    Arguments:
        z (`numpy.ndarray`): The latent values of the subject.
        mu (`numpy.ndarray`): Their mean.
        nu (`float`): The within-subject standard deviation.
        chol (`numpy.ndarray`): The lower Cholesky factor of the subject
            correlation matrix.

    """
    n = z.size
    w = scipy.linalg.solve_triangular(chol, z - mu, lower=True)
    return float(
        -n * math.log(nu)
        - numpy.log(numpy.diag(chol)).sum()
        - 0.5 * numpy.dot(w, w) / (nu * nu)
        - 0.5 * n * _LOG_2PI
    )


def latent_loglik(
    z: typing.Sequence[numpy.ndarray],
    d: Dataset,
    subjects: typing.Sequence[SubjectEffects],
    pe: PopulationEffects,
    kp: KernelParams,
    cache: typing.Optional[CholeskyCache] = None,
) -> float:
    """Compute the log likelihood of latent values over a dataset.

    Arguments:
        z (sequence of `numpy.ndarray`): The latent values of each subject
            of ``d``, in the same order.
        d (`~longtail.data.Dataset`): The dataset providing times and
            birth dates.
        subjects (sequence of `SubjectEffects`): The effects of each
            subject of ``d``.
        pe (`PopulationEffects`): The population effects.
        kp (`KernelParams`): The kernel parameters.
        cache (`CholeskyCache`, optional): A cache of Cholesky factors,
            keyed by subject index.

    Returns:
        `float`: The sum of the subject log likelihoods, accumulated in
        subject order.

    Raises:
        `~longtail.errors.NumericalError`: When the correlation matrix of a
            subject cannot be factorized.

    """
    if len(z) != len(d.subjects) or len(subjects) != len(d.subjects):
        raise InvalidParameter("z", len(z), hint="one array per subject")
    cache = CholeskyCache() if cache is None else cache
    terms = numpy.zeros(len(d.subjects))
    for i, (subject, se, zi) in enumerate(zip(d.subjects, subjects, z)):
        times = subject.times
        chol = cache.get(kp, i, times, subject.id)
        mu = numpy.asarray(mean_fn(se, pe, subject.birth_date, times))
        terms[i] = subject_loglik(numpy.asarray(zi, dtype=float), mu, pe.nu, chol)
    return float(terms.sum())


def _sample_gaussian(
    mean: numpy.ndarray,
    cov: numpy.ndarray,
    rng: numpy.random.Generator,
) -> numpy.ndarray:
    # eigendecomposition with negative eigenvalues clipped, so that
    # degenerate conditional covariances can still be sampled
    vals, vecs = scipy.linalg.eigh(cov)
    vals = numpy.clip(vals, 0.0, None)
    return mean + vecs.dot(numpy.sqrt(vals) * rng.standard_normal(mean.size))


def gp_simulate(
    se: SubjectEffects,
    pe: PopulationEffects,
    kp: KernelParams,
    birth: int,
    times: numpy.ndarray,
    rng: numpy.random.Generator,
    condition_on: typing.Optional[typing.Tuple[numpy.ndarray, numpy.ndarray]] = None,
    jitter: float = JITTER,
) -> numpy.ndarray:
    """Simulate latent values of a subject at the given times.

    Arguments:
        se (`SubjectEffects`): The subject effects.
        pe (`PopulationEffects`): The population effects.
        kp (`KernelParams`): The kernel parameters.
        birth (`int`): The birth date of the subject, in days.
        times (`numpy.ndarray`): The times to simulate at, in days.
        rng (`numpy.random.Generator`): The random number generator.
        condition_on (`tuple`, optional): Past times and latent values to
            condition on. Values at times already in the conditioning set
            are returned as they are.

    Returns:
        `numpy.ndarray`: The simulated latent values.

    Raises:
        `~longtail.errors.NumericalError`: When the conditioning
            covariance cannot be factorized.

    """
    times = numpy.asarray(times, dtype=float)
    mean = numpy.asarray(mean_fn(se, pe, birth, times), dtype=float).reshape(times.shape)
    if times.size == 0:
        return mean
    nu2 = pe.nu * pe.nu

    if condition_on is None or len(condition_on[0]) == 0:
        cov = nu2 * numpy.asarray(kernel(kp, times[:, None], times[None, :]))
        return _sample_gaussian(mean, cov, rng)

    past_t = numpy.asarray(condition_on[0], dtype=float)
    past_z = numpy.asarray(condition_on[1], dtype=float)
    known = {t: z for t, z in zip(past_t.tolist(), past_z.tolist())}
    fresh = numpy.array([t not in known for t in times.tolist()], dtype=bool)
    out = numpy.array([known.get(t, math.nan) for t in times.tolist()])
    if not fresh.any():
        return out

    new_t = times[fresh]
    past_mu = numpy.asarray(mean_fn(se, pe, birth, past_t), dtype=float).reshape(past_t.shape)
    chol = subject_cholesky(kp, past_t, jitter=jitter)
    cross = numpy.asarray(kernel(kp, new_t[:, None], past_t[None, :]))
    # R_cc^{-1} (z_c - mu_c) and R_cc^{-1} R_cn
    alpha = scipy.linalg.cho_solve((chol, True), past_z - past_mu)
    beta = scipy.linalg.cho_solve((chol, True), cross.T)
    cond_mean = mean[fresh] + cross.dot(alpha)
    cond_cov = nu2 * (numpy.asarray(kernel(kp, new_t[:, None], new_t[None, :])) - cross.dot(beta))
    out[fresh] = _sample_gaussian(cond_mean, cond_cov, rng)
    return out
