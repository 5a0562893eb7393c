# coding: utf-8
"""Distribution kernels used throughout the model.

This module contains the tail laws (generalised Pareto and generalised
extreme value distributions), the standard univariate and bivariate normal
distributions, and the latent Gaussian mixture marginal together with its
inversion on a regular grid.

All the functions are pure: they can be called concurrently from any
number of threads.

"""

import dataclasses
import math
import typing

import numpy
import scipy.optimize
import scipy.special

from .errors import DomainError, InvalidParameter, OutOfGridError

__all__ = [
    "GpdParams",
    "GevParams",
    "MixtureComponent",
    "MixtureMarginal",
    "GridSpec",
    "gpd_cdf",
    "gpd_sf",
    "gpd_quantile",
    "gev_cdf",
    "gev_quantile",
    "norm_cdf",
    "norm_pdf",
    "norm_quantile",
    "bvn_cdf",
    "bvn_sf",
    "mixture_cdf",
    "mixture_pdf",
    "mixture_grid",
    "grid_argmin",
    "mixture_inverse",
    "mixture_inverse_exact",
    "inversion_residual",
    "max_cdf_gap",
]

#: Shape values below this magnitude use the exponential and Gumbel limits.
XI_EPSILON = 1e-8

_ArrayLike = typing.Union[float, numpy.ndarray]
_LOG_SQRT_2PI = 0.5 * math.log(2 * math.pi)


def _scalar_or_array(value: numpy.ndarray) -> _ArrayLike:
    return float(value) if numpy.ndim(value) == 0 else value


# --- Tail laws --------------------------------------------------------------


@dataclasses.dataclass(frozen=True)
class GpdParams:
    """The parameters of a generalised Pareto tail above a threshold.

    Attributes:
        u (`float`): The threshold, in latent-sign response units.
        sigma_u (`float`): The scale of excesses above ``u``.
        xi (`float`): The shape of the tail.

    Example:
        >>> gpd = GpdParams(u=0.0, sigma_u=1.0, xi=-0.5)
        >>> gpd.endpoint
        2.0
        >>> gpd.above(1.0)
        GpdParams(u=1.0, sigma_u=0.5, xi=-0.5)

    """

    u: float
    sigma_u: float
    xi: float

    def __post_init__(self) -> None:
        if not self.sigma_u > 0:
            raise InvalidParameter("sigma_u", self.sigma_u, hint="positive number")
        if not math.isfinite(self.u):
            raise InvalidParameter("u", self.u, hint="finite number")
        if not math.isfinite(self.xi):
            raise InvalidParameter("xi", self.xi, hint="finite number")

    @property
    def endpoint(self) -> float:
        """`float`: The upper endpoint of the support, infinite if ξ ≥ 0."""
        if self.xi < 0:
            return self.u - self.sigma_u / self.xi
        return math.inf

    def above(self, r: float) -> "GpdParams":
        """Get the tail law of the excesses above a higher threshold ``r``.

        Raises:
            `~longtail.errors.DomainError`: When ``r`` is below the threshold
                or at or beyond the upper endpoint.

        """
        if r < self.u:
            raise DomainError("GpdParams.above", "threshold {!r} below {!r}".format(r, self.u))
        sigma_r = self.sigma_u + self.xi * (r - self.u)
        if not sigma_r > 0:
            raise DomainError("GpdParams.above", "record beyond endpoint")
        return GpdParams(r, sigma_r, self.xi)


@dataclasses.dataclass(frozen=True)
class GevParams:
    """The location, scale and shape of a generalised extreme value law."""

    mu: float
    sigma: float
    xi: float

    def __post_init__(self) -> None:
        if not self.sigma > 0:
            raise InvalidParameter("sigma", self.sigma, hint="positive number")


def gpd_sf(p: GpdParams, x: float) -> float:
    """Compute the survivor function of a generalised Pareto distribution.

    Raises:
        `~longtail.errors.DomainError`: When ``x`` is below the threshold.

    """
    if x < p.u:
        raise DomainError("gpd_sf", "{!r} below threshold {!r}".format(x, p.u))
    y = (x - p.u) / p.sigma_u
    if abs(p.xi) < XI_EPSILON:
        return math.exp(-y)
    base = p.xi * y
    if base <= -1.0:
        return 0.0
    return math.exp(-math.log1p(base) / p.xi)


def gpd_cdf(p: GpdParams, x: float) -> float:
    """Compute the distribution function of a generalised Pareto distribution.

    Example:
        >>> gpd = GpdParams(u=0.0, sigma_u=1.0, xi=-0.5)
        >>> round(gpd_cdf(gpd, 1.0), 12)
        0.75
        >>> gpd_cdf(gpd, 2.0)
        1.0

    Raises:
        `~longtail.errors.DomainError`: When ``x`` is below the threshold.

    """
    if x < p.u:
        raise DomainError("gpd_cdf", "{!r} below threshold {!r}".format(x, p.u))
    return 1.0 - gpd_sf(p, x)


def gpd_quantile(p: GpdParams, q: float) -> float:
    """Compute the quantile function of a generalised Pareto distribution.

    Example:
        >>> round(gpd_quantile(GpdParams(u=0.0, sigma_u=1.0, xi=-0.5), 0.75), 12)
        1.0

    Raises:
        `~longtail.errors.DomainError`: When ``q`` is not in :math:`[0, 1)`.

    """
    if not 0.0 <= q < 1.0:
        raise DomainError("gpd_quantile", "{!r} outside of [0, 1)".format(q))
    log_sf = math.log1p(-q)
    if abs(p.xi) < XI_EPSILON:
        return p.u - p.sigma_u * log_sf
    return p.u + p.sigma_u * math.expm1(-p.xi * log_sf) / p.xi


def gev_cdf(p: GevParams, x: float) -> float:
    """Compute the distribution function of a generalised extreme value law.

    Example:
        >>> round(gev_cdf(GevParams(0.0, 1.0, 0.0), 0.0), 6)
        0.367879
        >>> gev_cdf(GevParams(0.0, 1.0, -0.5), 2.0)
        1.0

    """
    y = (x - p.mu) / p.sigma
    if abs(p.xi) < XI_EPSILON:
        return math.exp(-math.exp(-y))
    base = p.xi * y
    if base <= -1.0:
        return 0.0 if p.xi > 0 else 1.0
    return math.exp(-math.exp(-math.log1p(base) / p.xi))


def gev_quantile(p: GevParams, q: float) -> float:
    """Compute the quantile function of a generalised extreme value law."""
    if not 0.0 < q < 1.0:
        raise DomainError("gev_quantile", "{!r} outside of (0, 1)".format(q))
    log_log = math.log(-math.log(q))
    if abs(p.xi) < XI_EPSILON:
        return p.mu - p.sigma * log_log
    return p.mu + p.sigma * math.expm1(-p.xi * log_log) / p.xi


# --- Normal distributions ---------------------------------------------------


def norm_cdf(x: _ArrayLike) -> _ArrayLike:
    """Compute the standard normal distribution function."""
    return _scalar_or_array(scipy.special.ndtr(x))


def norm_pdf(x: _ArrayLike) -> _ArrayLike:
    """Compute the standard normal density."""
    x = numpy.asarray(x, dtype=float)
    return _scalar_or_array(numpy.exp(-0.5 * x * x - _LOG_SQRT_2PI))


def norm_quantile(q: _ArrayLike) -> _ArrayLike:
    """Compute the standard normal quantile function.

    Example:
        >>> norm_quantile(0.5)
        0.0
        >>> round(norm_quantile(0.975), 8)
        1.95996398

    Raises:
        `~longtail.errors.DomainError`: When any ``q`` is not in
            :math:`(0, 1)`.

    """
    q = numpy.asarray(q, dtype=float)
    if not numpy.all((q > 0.0) & (q < 1.0)):
        raise DomainError("norm_quantile", "probability outside of (0, 1)")
    return _scalar_or_array(scipy.special.ndtri(q))


# Gauss-Legendre nodes and weights on [-1, 0], for 6, 12 and 20 points
_GL_NODES = (
    numpy.array([-0.9324695142031522, -0.6612093864662647, -0.2386191860831970]),
    numpy.array([
        -0.9815606342467191, -0.9041172563704750, -0.7699026741943050,
        -0.5873179542866171, -0.3678314989981802, -0.1252334085114692,
    ]),
    numpy.array([
        -0.9931285991850949, -0.9639719272779138, -0.9122344282513259,
        -0.8391169718222188, -0.7463319064601508, -0.6360536807265150,
        -0.5108670019508271, -0.3737060887154196, -0.2277858511416451,
        -0.07652652113349733,
    ]),
)
_GL_WEIGHTS = (
    numpy.array([0.1713244923791705, 0.3607615730481384, 0.4679139345726904]),
    numpy.array([
        0.04717533638651177, 0.1069393259953183, 0.1600783285433464,
        0.2031674267230659, 0.2334925365383547, 0.2491470458134029,
    ]),
    numpy.array([
        0.01761400713915212, 0.04060142980038694, 0.06267204833410906,
        0.08327674157670475, 0.1019301198172404, 0.1181945319615184,
        0.1316886384491766, 0.1420961093183821, 0.1491729864726037,
        0.1527533871307259,
    ]),
)
_TWOPI = 2.0 * math.pi


def _bvnu(h: float, k: float, r: float) -> float:
    # upper orthant P(A > h, B > k), after Drezner & Wesolowsky (1989)
    # with the refinements of Genz (2004) for large correlations
    if h == math.inf or k == math.inf:
        return 0.0
    if h == -math.inf:
        return float(scipy.special.ndtr(-k))
    if k == -math.inf:
        return float(scipy.special.ndtr(-h))

    ng = 0 if abs(r) < 0.3 else 1 if abs(r) < 0.75 else 2
    x, w = _GL_NODES[ng], _GL_WEIGHTS[ng]
    hk = h * k

    if abs(r) < 0.925:
        hs = (h * h + k * k) / 2
        asr = math.asin(r)
        sn = numpy.sin(asr * numpy.concatenate([x + 1, 1 - x]) / 2)
        terms = numpy.exp((sn * hk - hs) / (1 - sn * sn))
        bvn = float(numpy.dot(numpy.concatenate([w, w]), terms))
        return bvn * asr / (2 * _TWOPI) + float(scipy.special.ndtr(-h) * scipy.special.ndtr(-k))

    if r < 0:
        k = -k
        hk = -hk
    a_s = (1 - r) * (1 + r)
    a = math.sqrt(a_s)
    bs = (h - k) ** 2
    c = (4 - hk) / 8
    d = (12 - hk) / 16
    bvn = a * math.exp(-(bs / a_s + hk) / 2) * (
        1 - c * (bs - a_s) * (1 - d * bs / 5) / 3 + c * d * a_s * a_s / 5
    )
    if hk > -160:
        b = math.sqrt(bs)
        bvn -= (
            math.exp(-hk / 2)
            * math.sqrt(_TWOPI)
            * float(scipy.special.ndtr(-b / a))
            * b
            * (1 - c * bs * (1 - d * bs / 5) / 3)
        )
    a /= 2
    xs = (a * (x + 1)) ** 2
    rs = numpy.sqrt(1 - xs)
    bvn += float(numpy.dot(
        a * w,
        numpy.exp(-bs / (2 * xs) - hk / (1 + rs)) / rs
        - numpy.exp(-(bs / xs + hk) / 2) * (1 + c * xs * (1 + d * xs)),
    ))
    xs = a_s * (1 - x) ** 2 / 4
    rs = numpy.sqrt(1 - xs)
    bvn += float(numpy.dot(
        a * w,
        numpy.exp(-(bs / xs + hk) / 2)
        * (numpy.exp(-hk * (1 - rs) / (2 * (1 + rs))) / rs - (1 + c * xs * (1 + d * xs))),
    ))
    bvn = -bvn / _TWOPI
    if r > 0:
        return bvn + float(scipy.special.ndtr(-max(h, k)))
    return -bvn + max(0.0, float(scipy.special.ndtr(-h) - scipy.special.ndtr(-k)))


def _check_rho(function: str, rho: float) -> None:
    if not abs(rho) < 1.0:
        raise DomainError(function, "correlation {!r} outside of (-1, 1)".format(rho))


def bvn_cdf(h: float, k: float, rho: float) -> float:
    """Compute the standard bivariate normal distribution function.

    The integral is evaluated with a fixed-order Gauss-Legendre quadrature,
    so results are bit-reproducible and accurate to about 1e-15 absolute.

    Example:
        >>> bvn_cdf(0.0, 0.0, 0.0)
        0.25
        >>> round(bvn_cdf(0.0, 0.0, 0.5), 9)
        0.333333333

    Raises:
        `~longtail.errors.DomainError`: When ``rho`` is not in
            :math:`(-1, 1)`.

    """
    _check_rho("bvn_cdf", rho)
    return min(1.0, max(0.0, _bvnu(-h, -k, rho)))


def bvn_sf(h: float, k: float, rho: float) -> float:
    """Compute the upper orthant probability :math:`P(A > h, B > k)`.

    Unlike ``1 - Φ(h) - Φ(k) + bvn_cdf(h, k, rho)``, this keeps its
    relative accuracy far in the upper tail.

    """
    _check_rho("bvn_sf", rho)
    return min(1.0, max(0.0, _bvnu(h, k, rho)))


# --- Gaussian mixture marginal ----------------------------------------------


@dataclasses.dataclass(frozen=True)
class MixtureComponent:
    """A single Gaussian component of the latent mixture."""

    mean: float
    sd: float

    def __post_init__(self) -> None:
        if not self.sd > 0:
            raise InvalidParameter("sd", self.sd, hint="positive number")


@dataclasses.dataclass(frozen=True, eq=False)
class MixtureMarginal:
    """An equally weighted mixture of Gaussian components.

    Components are stored as two read-only arrays rather than a list of
    `MixtureComponent`, since the mixture usually holds one component per
    observation of the dataset.

    Attributes:
        means (`numpy.ndarray`): The mean of each component.
        sds (`numpy.ndarray`): The standard deviation of each component.

    """

    means: numpy.ndarray
    sds: numpy.ndarray

    def __post_init__(self) -> None:
        means = numpy.array(self.means, dtype=float).ravel()
        sds = numpy.broadcast_to(numpy.asarray(self.sds, dtype=float), means.shape).copy()
        if means.size == 0:
            raise InvalidParameter("means", self.means, hint="non-empty array")
        if not numpy.all(sds > 0):
            raise InvalidParameter("sds", self.sds, hint="positive standard deviations")
        if not numpy.all(numpy.isfinite(means)):
            raise InvalidParameter("means", self.means, hint="finite means")
        means.flags.writeable = sds.flags.writeable = False
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "sds", sds)

    @classmethod
    def from_components(cls, components: typing.Iterable[MixtureComponent]) -> "MixtureMarginal":
        """Create a mixture from an iterable of components."""
        components = list(components)
        return cls(
            numpy.array([c.mean for c in components]),
            numpy.array([c.sd for c in components]),
        )

    def __len__(self) -> int:
        return self.means.size

    @property
    def components(self) -> typing.List[MixtureComponent]:
        """`list` of `MixtureComponent`: The components of the mixture."""
        return [MixtureComponent(m, s) for m, s in zip(self.means.tolist(), self.sds.tolist())]


@dataclasses.dataclass(frozen=True)
class GridSpec:
    """A regular grid of latent values used to invert the mixture.

    Example:
        >>> grid = GridSpec(-8.0, 8.0, 1601)
        >>> round(grid.spacing, 12)
        0.01

    """

    lo: float
    hi: float
    count: int = 2001

    def __post_init__(self) -> None:
        if not self.lo < self.hi:
            raise InvalidParameter("hi", self.hi, hint="value above {!r}".format(self.lo))
        if self.count < 2:
            raise InvalidParameter("count", self.count, hint="integer >= 2")

    @classmethod
    def covering(cls, m: MixtureMarginal, count: int = 2001, width: float = 6.0) -> "GridSpec":
        """Get a grid covering the body of a mixture.

        The grid spans ``width`` times the largest standard deviation on
        each side of the extreme component means.

        """
        spread = width * float(m.sds.max())
        return cls(float(m.means.min()) - spread, float(m.means.max()) + spread, count)

    @property
    def spacing(self) -> float:
        """`float`: The distance between two adjacent nodes."""
        return (self.hi - self.lo) / (self.count - 1)

    @property
    def nodes(self) -> numpy.ndarray:
        """`numpy.ndarray`: The grid nodes, in increasing order."""
        return numpy.linspace(self.lo, self.hi, self.count)


def mixture_cdf(m: MixtureMarginal, z: _ArrayLike) -> _ArrayLike:
    """Compute the distribution function of the mixture.

    Example:
        >>> mixture = MixtureMarginal([0.0, 2.0], [1.0, 1.0])
        >>> round(mixture_cdf(mixture, 1.0), 12)
        0.5

    """
    z = numpy.asarray(z, dtype=float)
    cdf = scipy.special.ndtr((z[..., None] - m.means) / m.sds).mean(axis=-1)
    return _scalar_or_array(cdf)


def mixture_pdf(m: MixtureMarginal, z: _ArrayLike) -> _ArrayLike:
    """Compute the density of the mixture."""
    z = numpy.asarray(z, dtype=float)
    y = (z[..., None] - m.means) / m.sds
    pdf = (numpy.exp(-0.5 * y * y - _LOG_SQRT_2PI) / m.sds).mean(axis=-1)
    return _scalar_or_array(pdf)


def mixture_grid(
    m: MixtureMarginal,
    g: GridSpec,
    chunk: int = 256,
) -> typing.Tuple[numpy.ndarray, numpy.ndarray]:
    """Tabulate the distribution function and density of a mixture on a grid.

    Components are accumulated in chunks to bound the memory footprint, in
    a fixed order so that results are reproducible.

    Returns:
        `tuple` of `numpy.ndarray`: The distribution function and the
        density evaluated at every node of the grid.

    """
    nodes = g.nodes
    cdf = numpy.zeros_like(nodes)
    pdf = numpy.zeros_like(nodes)
    for start in range(0, len(m), chunk):
        means = m.means[start:start + chunk, None]
        sds = m.sds[start:start + chunk, None]
        y = (nodes - means) / sds
        cdf += scipy.special.ndtr(y).sum(axis=0)
        pdf += (numpy.exp(-0.5 * y * y - _LOG_SQRT_2PI) / sds).sum(axis=0)
    return cdf / len(m), pdf / len(m)


def grid_argmin(cdf_nodes: numpy.ndarray, p: _ArrayLike) -> numpy.ndarray:
    """Find the grid indices whose tabulated CDF is closest to ``p``.

    Arguments:
        cdf_nodes (`numpy.ndarray`): A non-decreasing table of distribution
            function values, as returned by `mixture_grid`.
        p (`float` or `numpy.ndarray`): The probabilities to invert.

    Returns:
        `numpy.ndarray`: The index of the closest node for each probability;
        ties resolve to the lowest index.

    Raises:
        `~longtail.errors.OutOfGridError`: When a probability falls outside
            the range of distribution function values attained on the grid.

    """
    p = numpy.asarray(p, dtype=float)
    if p.size:
        if numpy.any(p < cdf_nodes[0]):
            raise OutOfGridError(float(p[p < cdf_nodes[0]].flat[0]), "lower")
        if numpy.any(p > cdf_nodes[-1]):
            raise OutOfGridError(float(p[p > cdf_nodes[-1]].flat[0]), "upper")
    right = numpy.searchsorted(cdf_nodes, p, side="left")
    right = numpy.minimum(right, cdf_nodes.size - 1)
    left = numpy.maximum(right - 1, 0)
    closer_left = numpy.abs(cdf_nodes[left] - p) <= numpy.abs(cdf_nodes[right] - p)
    return numpy.where(closer_left, left, right)


def mixture_inverse(
    m: MixtureMarginal,
    p: _ArrayLike,
    g: typing.Optional[GridSpec] = None,
) -> _ArrayLike:
    """Invert the mixture distribution function by a grid search.

    Arguments:
        m (`MixtureMarginal`): The mixture to invert.
        p (`float` or `numpy.ndarray`): The probabilities to invert.
        g (`GridSpec`, optional): The grid to search. Defaults to
            `GridSpec.covering` the mixture.

    Returns:
        `float` or `numpy.ndarray`: The grid node minimizing
        :math:`|G_Z(z) - p|` for each probability.

    Example:
        >>> mixture = MixtureMarginal([0.0], [1.0])
        >>> mixture_inverse(mixture, 0.5, GridSpec(-8.0, 8.0, 1601))
        0.0

    Raises:
        `~longtail.errors.OutOfGridError`: When a probability cannot be
            reached on the grid.

    """
    g = GridSpec.covering(m) if g is None else g
    cdf_nodes, _ = mixture_grid(m, g)
    return _scalar_or_array(g.nodes[grid_argmin(cdf_nodes, p)])


def mixture_inverse_exact(m: MixtureMarginal, p: float, xtol: float = 1e-12) -> float:
    """Invert the mixture distribution function by bracketed root finding.

    This is much slower than `mixture_inverse`, and is only used to check
    the gridded transforms.

    Raises:
        `~longtail.errors.DomainError`: When ``p`` is not in :math:`(0, 1)`.

    """
    if not 0.0 < p < 1.0:
        raise DomainError("mixture_inverse_exact", "{!r} outside of (0, 1)".format(p))
    spread = 40.0 * float(m.sds.max())
    lo = float(m.means.min()) - spread
    hi = float(m.means.max()) + spread
    return scipy.optimize.brentq(lambda z: mixture_cdf(m, z) - p, lo, hi, xtol=xtol, rtol=4 * numpy.finfo(float).eps)


def inversion_residual(m: MixtureMarginal, p: _ArrayLike, z: _ArrayLike) -> _ArrayLike:
    """Compute the residual :math:`|G_Z(z) - p|` of an inversion."""
    return _scalar_or_array(numpy.abs(numpy.asarray(mixture_cdf(m, z)) - p))


def max_cdf_gap(cdf_nodes: numpy.ndarray) -> float:
    """Get the largest increment of a tabulated CDF between adjacent nodes."""
    return float(numpy.max(numpy.diff(cdf_nodes)))
