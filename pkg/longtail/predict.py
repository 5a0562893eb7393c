# coding: utf-8
"""Forward simulation of the model and record predictions.

The model is simulated in the latent space and mapped back to the observed
scale through the latent mixture of the fitted data and the inverse of the
observed-scale marginal. Future windows consider three groups of subjects:

- *current* subjects, retained in the fit and still active, whose future
  latent values are simulated conditionally on their past;
- *first* subjects, present in the data but never above the threshold,
  who borrow the effects of a randomly selected fitted subject;
- *new* subjects, arriving as a Poisson process during the window.

Only simulated responses above the threshold are kept, since they are the
only ones that can set records.

"""

import collections
import dataclasses
import functools
import json
import logging
import math
import typing

import numpy
import pandas
import scipy.integrate
import scipy.linalg
import scipy.special

from .data import DAYS_PER_YEAR, Dataset, Observation, Subject, from_days
from .distributions import (
    GridSpec,
    MixtureMarginal,
    gpd_sf,
    grid_argmin,
    mixture_cdf,
    mixture_grid,
)
from .errors import DomainError, InvalidParameter, QuadratureError
from .inference import Theta
from .latent import (
    JITTER,
    SubjectEffects,
    correlation_matrix,
    gp_simulate,
    mean_fn,
)
from .marginal import MarginalParams, fx_cdf, fx_quantile, lambda_u
from .parallel import imap_ordered
from .utils import substream

__all__ = [
    "ObservationWindow",
    "FutureWindow",
    "FuturePopulationConfig",
    "SyntheticTruth",
    "SimulatedPath",
    "PredictiveSample",
    "RecordEvents",
    "RecordAnalytics",
    "PosteriorPredictive",
    "synthesize_dataset",
    "simulate_truth",
    "empirical_rates",
    "default_arrival_rate",
    "recent_subjects",
    "simulate_future",
    "record_event_probs",
    "record_analytics",
    "record_analytics_posterior",
    "annual_maximum_cdf",
    "analytic_record_prob",
    "posterior_predictive_at_dates",
]

logger = logging.getLogger(__name__)

_ArrayLike = typing.Union[float, numpy.ndarray]


# --- Synthetic data ---------------------------------------------------------


@dataclasses.dataclass(frozen=True)
class ObservationWindow:
    """A window of ``years`` starting on day ``start``."""

    start: int
    years: float

    def __post_init__(self) -> None:
        if not self.years > 0:
            raise InvalidParameter("years", self.years, hint="positive number")

    @property
    def days(self) -> int:
        return max(1, int(round(self.years * DAYS_PER_YEAR)))


@dataclasses.dataclass(frozen=True)
class SyntheticTruth:
    """A synthetic dataset together with the values that generated it.

    Attributes:
        dataset (`~longtail.data.Dataset`): The synthetic dataset, with
            censored responses placed at the threshold.
        theta (`~longtail.inference.Theta`): The generating parameters,
            including the drawn subject effects.
        latent (`tuple` of `numpy.ndarray`): The latent values of each
            subject.
        mixture (`~longtail.distributions.MixtureMarginal`): The latent
            mixture of the dataset under ``theta``.

    """

    dataset: Dataset
    theta: Theta
    latent: typing.Tuple[numpy.ndarray, ...]
    mixture: MixtureMarginal


def _data_mixture(theta: Theta, d: Dataset) -> MixtureMarginal:
    means = [
        numpy.atleast_1d(mean_fn(se, theta.population, s.birth_date, s.times))
        for se, s in zip(theta.subjects, d.subjects)
    ]
    mu = numpy.concatenate(means) if means else numpy.zeros(1)
    return MixtureMarginal(mu, numpy.full(mu.size, theta.population.nu))


def _back_transform(
    mp: MarginalParams,
    m: MixtureMarginal,
    z: numpy.ndarray,
    t_years: numpy.ndarray,
) -> typing.Tuple[numpy.ndarray, numpy.ndarray, numpy.ndarray]:
    # returns probabilities, exceedance mask, and observed-scale values
    # (nan where censored)
    p = numpy.atleast_1d(numpy.asarray(mixture_cdf(m, z), dtype=float))
    p = numpy.minimum(p, numpy.nextafter(1.0, 0.0))
    floor = 1.0 - numpy.atleast_1d(numpy.asarray(lambda_u(mp.rate, t_years), dtype=float))
    above = p > floor
    x = numpy.full(p.shape, math.nan)
    for j in numpy.flatnonzero(above):
        x[j] = fx_quantile(mp, float(p[j]), float(t_years[j]))
    return p, above, x


def simulate_truth(
    theta: Theta,
    n_subjects: int,
    obs_rate: float,
    window: ObservationWindow,
    seed: int,
) -> SyntheticTruth:
    """Simulate a dataset from the model, keeping the latent values.

    Subject effects are drawn from their priors, ages at the start of the
    window uniformly between 16 and 30 years, and observation days from a
    Poisson process of rate ``obs_rate`` per year, with at least one
    observation per subject. The time origin of the dataset is the start
    of the window.

    """
    if n_subjects < 0:
        raise InvalidParameter("n_subjects", n_subjects, hint="non-negative integer")
    if not obs_rate > 0:
        raise InvalidParameter("obs_rate", obs_rate, hint="positive number")
    rng = substream(seed, "synth")
    pe = theta.population

    effects = []
    births, schedules = [], []
    for _ in range(n_subjects):
        tau = -1.0
        while tau <= 0:
            tau = rng.normal(25.0, 2.5)
        effects.append(SubjectEffects(float(rng.normal(0.0, pe.v_alpha)), float(tau)))
        births.append(window.start - int(round(rng.uniform(16.0, 30.0) * DAYS_PER_YEAR)))
        count = min(max(1, int(rng.poisson(obs_rate * window.years))), window.days)
        schedules.append(numpy.sort(rng.choice(window.days, size=count, replace=False)) + window.start)

    latent = tuple(
        numpy.atleast_1d(gp_simulate(se, pe, theta.kernel, birth, times, rng))
        for se, birth, times in zip(effects, births, schedules)
    )
    truth = dataclasses.replace(theta, subjects=tuple(effects))
    means = [numpy.atleast_1d(mean_fn(se, pe, b, t)) for se, b, t in zip(effects, births, schedules)]
    mu = numpy.concatenate(means) if means else numpy.zeros(1)
    mixture = MixtureMarginal(mu, numpy.full(mu.size, pe.nu))

    u = theta.marginal.u
    subjects = []
    for k, (birth, times, z) in enumerate(zip(births, schedules, latent)):
        t_years = (times - window.start) / DAYS_PER_YEAR
        _, above, x = _back_transform(theta.marginal, mixture, z, t_years)
        values = numpy.where(above & (x > u), x, u)
        observations = tuple(Observation(int(t), float(v), float(v)) for t, v in zip(times, values))
        subjects.append(Subject("s{:04d}".format(k), int(birth), observations))

    dataset = Dataset(tuple(subjects), threshold_u=u, origin=window.start)
    logger.info("synthesized %d observations of %d subjects", dataset.n_observations, n_subjects)
    return SyntheticTruth(dataset, truth, latent, mixture)


def synthesize_dataset(
    theta: Theta,
    n_subjects: int,
    obs_rate: float,
    window: ObservationWindow,
    seed: int,
) -> Dataset:
    """Simulate a dataset from the model.

    See `simulate_truth` for the simulation scheme.

    """
    return simulate_truth(theta, n_subjects, obs_rate, window, seed).dataset


# --- Future windows ---------------------------------------------------------


@dataclasses.dataclass(frozen=True)
class FutureWindow:
    """The window of ``horizon_T`` years following day ``t_max``."""

    t_max: int
    horizon_T: float

    def __post_init__(self) -> None:
        if not self.horizon_T > 0:
            raise InvalidParameter("horizon_T", self.horizon_T, hint="positive number")

    @property
    def end(self) -> float:
        return self.t_max + self.horizon_T * DAYS_PER_YEAR


@dataclasses.dataclass(frozen=True)
class FuturePopulationConfig:
    """The population dynamics over a future window.

    Attributes:
        r_data (`float`): The arrival rate of new subjects, per year.
        psi (`float`): The log-scale dispersion of the response rates of
            new subjects around the rate of an existing subject.
        s_t (`float`): The yearly response volume of the population.
        per_subject_rates (`dict`): The response rate of each existing
            subject, per year.

    """

    r_data: float
    psi: float = 0.5
    s_t: float = 1.0
    per_subject_rates: typing.Mapping[str, float] = dataclasses.field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.r_data >= 0:
            raise InvalidParameter("r_data", self.r_data, hint="non-negative number")
        if not self.psi >= 0:
            raise InvalidParameter("psi", self.psi, hint="non-negative number")
        if not self.s_t > 0:
            raise InvalidParameter("s_t", self.s_t, hint="positive number")
        if any(not rate >= 0 for rate in self.per_subject_rates.values()):
            raise InvalidParameter("per_subject_rates", dict(self.per_subject_rates), hint="non-negative rates")


def empirical_rates(subjects: typing.Iterable[Subject]) -> typing.Dict[str, float]:
    """Get the yearly response rate of each subject.

    The rate is the number of responses over the active span of the
    subject, floored at one response per year.

    Example:
        >>> busy = tuple(Observation(t, 0.0, 0.0) for t in (0, 200, 400, 600, 800, 1000, 1200, 1461))
        >>> empirical_rates([Subject("a", -9000, busy), Subject("b", -9000, busy[:1])])
        {'a': 2.0, 'b': 1.0}

    """
    rates = {}
    for s in subjects:
        span = (s.observations[-1].time - s.observations[0].time) / DAYS_PER_YEAR if s.observations else 0.0
        rates[s.id] = max(1.0, len(s) / span) if span > 0 else 1.0
    return rates


def default_arrival_rate(d: Dataset) -> float:
    """Get the yearly rate at which subjects entered the dataset."""
    years = max((d.t_max - typing.cast(int, d.origin)) / DAYS_PER_YEAR, 1.0 / DAYS_PER_YEAR)
    return len(d) / years


def recent_subjects(d: Dataset, cutoff_fraction: float = 0.2) -> typing.List[int]:
    """Get the indices of subjects active during the end of the window.

    A subject is active when its last response lies within the final
    ``cutoff_fraction`` of the observed window.

    """
    if not 0.0 <= cutoff_fraction <= 1.0:
        raise InvalidParameter("cutoff_fraction", cutoff_fraction, hint="number in [0, 1]")
    cutoff = d.t_max - cutoff_fraction * (d.t_max - typing.cast(int, d.origin))
    return [i for i, s in enumerate(d.subjects) if s.observations and s.observations[-1].time >= cutoff]


@dataclasses.dataclass(frozen=True)
class SimulatedPath:
    """The exceedances of one simulated subject in one trial."""

    replicate: int
    draw: int
    tag: str
    times: numpy.ndarray
    values: numpy.ndarray


@dataclasses.dataclass(frozen=True)
class PredictiveSample:
    """Simulated exceedances over a future window.

    Attributes:
        paths (`tuple`): The exceedances of each simulated subject that
            had at least one, in ``(replicate, draw)`` order.
        n_replicates (`int`): The number of replicates per draw.
        n_draws (`int`): The number of posterior draws.
        window (`FutureWindow`): The simulated window.
        bests (`dict`): The observed best of each current subject.
        sign_flip (`bool`): Whether original units are negated values.

    """

    paths: typing.Tuple[SimulatedPath, ...]
    n_replicates: int
    n_draws: int
    window: FutureWindow
    bests: typing.Mapping[str, float] = dataclasses.field(default_factory=dict)
    sign_flip: bool = False

    @property
    def n_trials(self) -> int:
        return self.n_replicates * self.n_draws

    def tags(self) -> typing.Set[str]:
        return {path.tag for path in self.paths}

    def to_frame(self) -> pandas.DataFrame:
        """Get the exceedances as a table, in original units."""
        sign = -1.0 if self.sign_flip else 1.0
        rows = [
            (p.replicate, p.draw, p.tag, float(t), sign * float(v))
            for p in self.paths
            for t, v in zip(p.times, p.values)
        ]
        return pandas.DataFrame(rows, columns=["replicate", "draw", "subject_tag", "time_days", "value"])


def _latent_state(
    theta: Theta,
    d: Dataset,
    m: MixtureMarginal,
    rng: numpy.random.Generator,
    grid_count: int,
) -> typing.Tuple[typing.List[numpy.ndarray], numpy.ndarray, GridSpec]:
    # latent values of the data, with fresh auxiliaries for censored values
    grid = GridSpec.covering(m, grid_count, width=8.0)
    cdf, _ = mixture_grid(m, grid)
    nodes = grid.nodes
    mp = theta.marginal
    out = []
    for s in d.subjects:
        t_years = numpy.asarray(d.years(s.times), dtype=float)
        values = s.values
        above = values > mp.u
        p = numpy.empty(values.size)
        for j in numpy.flatnonzero(above):
            p[j] = fx_cdf(mp, float(values[j]), float(t_years[j]))
        p[~above] = (1.0 - numpy.asarray(lambda_u(mp.rate, t_years[~above]))) * rng.uniform(size=int((~above).sum()))
        p = numpy.clip(p, cdf[0], cdf[-1])
        out.append(nodes[grid_argmin(cdf, p)])
    return out, cdf, grid


def _new_rate(omega: float, psi: float, rng: numpy.random.Generator) -> float:
    """Perturb the response rate ``omega`` for a newly arriving subject.

    The factor is log-normal with log-scale dispersion ``psi`` and unit
    mean, so ``omega`` is kept on average, and returned as is when
    ``psi`` is zero.

    """
    if psi == 0:
        return omega
    return omega * math.exp(psi * rng.standard_normal() - 0.5 * psi ** 2)


def _simulate_task(
    draws: typing.Sequence[Theta],
    d: Dataset,
    fw: FutureWindow,
    cfg: FuturePopulationConfig,
    below_pool: typing.Sequence[Subject],
    current: typing.Sequence[int],
    seed: int,
    grid_count: int,
    task: typing.Tuple[int, int],
) -> typing.List[SimulatedPath]:
    replicate, k = task
    theta = draws[k]
    rng = substream(seed, "future", replicate * len(draws) + k)
    pe, kp, mp = theta.population, theta.kernel, theta.marginal
    m = _data_mixture(theta, d)
    span = fw.end - fw.t_max
    rates = dict(empirical_rates(d.subjects))
    rates.update(cfg.per_subject_rates)
    paths = []

    def keep(tag: str, times: numpy.ndarray, z: numpy.ndarray) -> None:
        if times.size == 0:
            return
        t_years = numpy.asarray(d.years(times), dtype=float)
        _, above, x = _back_transform(mp, m, z, t_years)
        if above.any():
            paths.append(SimulatedPath(replicate, k, tag, times[above], x[above]))

    def schedule(rate: float, start: float = fw.t_max) -> numpy.ndarray:
        count = rng.poisson(rate * (fw.end - start) / DAYS_PER_YEAR)
        return numpy.sort(rng.uniform(start, fw.end, count))

    if current:
        past, _, _ = _latent_state(theta, d, m, rng, grid_count)
    for i in current:
        s = d.subjects[i]
        times = schedule(rates.get(s.id, 1.0))
        if times.size:
            z = gp_simulate(theta.subjects[i], pe, kp, s.birth_date, times, rng, condition_on=(s.times, past[i]))
            keep("current:{}".format(s.id), times, numpy.atleast_1d(z))

    for s in below_pool:
        times = schedule(rates.get(s.id, 1.0))
        if times.size and theta.subjects:
            se = theta.subjects[int(rng.integers(len(theta.subjects)))]
            keep("first:{}".format(s.id), times, numpy.atleast_1d(gp_simulate(se, pe, kp, s.birth_date, times, rng)))

    n_new = int(rng.poisson(span / DAYS_PER_YEAR * cfg.r_data))
    pool = list(rates.values()) or [1.0]
    entry_ages = [s.ages()[0] for s in d.subjects] or [20.0]
    for n in range(n_new if theta.subjects else 0):
        omega = _new_rate(pool[int(rng.integers(len(pool)))], cfg.psi, rng)
        entry = rng.uniform(fw.t_max, fw.end)
        birth = int(round(entry - entry_ages[int(rng.integers(len(entry_ages)))] * DAYS_PER_YEAR))
        se = theta.subjects[int(rng.integers(len(theta.subjects)))]
        times = schedule(omega, entry)
        keep("new:{}".format(n), times, numpy.atleast_1d(gp_simulate(se, pe, kp, birth, times, rng)))
    return paths


def simulate_future(
    draws: typing.Sequence[Theta],
    d: Dataset,
    fw: FutureWindow,
    cfg: FuturePopulationConfig,
    seed: int,
    *,
    n_replicates: int = 1,
    below_pool: typing.Sequence[Subject] = (),
    cutoff_fraction: float = 0.2,
    grid_count: int = 2001,
    jobs: int = 0,
) -> PredictiveSample:
    """Simulate the exceedances of all subjects over a future window.

    Arguments:
        draws (sequence of `~longtail.inference.Theta`): Posterior draws,
            with one subject effect per subject of ``d``.
        d (`~longtail.data.Dataset`): The fitted dataset.
        fw (`FutureWindow`): The future window.
        cfg (`FuturePopulationConfig`): The population dynamics.
        seed (`int`): The master seed; each ``(replicate, draw)`` pair
            uses its own sub-stream.
        n_replicates (`int`): The number of replicates per draw.
        below_pool (sequence of `~longtail.data.Subject`): The subjects
            that never exceeded the threshold, simulated as the *first*
            group.
        cutoff_fraction (`float`): The fraction of the observed window
            defining active subjects.
        grid_count (`int`): The number of nodes used to invert the past.
        jobs (`int`): The number of threads, ``0`` for automatic.

    Raises:
        `~longtail.errors.InvalidParameter`: When no posterior draw is
            given.

    """
    if not draws:
        raise InvalidParameter("draws", len(draws), hint="at least one posterior draw")
    if n_replicates < 1:
        raise InvalidParameter("n_replicates", n_replicates, hint="integer >= 1")
    known = set(d.ids)
    pool = [s for s in below_pool if s.id not in known and s.observations]
    current = recent_subjects(d, cutoff_fraction)
    logger.info(
        "simulating %d replicates of %d draws: %d current, %d first subjects",
        n_replicates, len(draws), len(current), len(pool),
    )
    function = functools.partial(_simulate_task, draws, d, fw, cfg, pool, current, seed, grid_count)
    tasks = [(r, k) for r in range(n_replicates) for k in range(len(draws))]
    paths = [path for result in imap_ordered(function, tasks, cpus=jobs) for path in result]
    bests = {d.subjects[i].id: d.subjects[i].best for i in current}
    return PredictiveSample(tuple(paths), n_replicates, len(draws), fw, bests, d.sign_flip)


# --- Record events ----------------------------------------------------------


@dataclasses.dataclass(frozen=True)
class RecordEvents:
    """Record and personal best probabilities over a future window.

    Attributes:
        p_first_record (`dict`): The probability that each subject is the
            first to break the record. New subjects are pooled under the
            ``new`` key.
        first_record_year_hist (`dict`): For each subject, the probability
            of a first breach in each calendar year.
        pb_quantiles (`dict`): For each subject, quantiles of its window
            maximum when it has exceedances, in original units.
        p_new_pb (`dict`): For each current subject, the probability of a
            window maximum above its observed best.
        p_any (`float`): The probability that the record is broken.
        p_any_se (`float`): The Monte-Carlo standard error of ``p_any``.

    """

    p_first_record: typing.Dict[str, float]
    first_record_year_hist: typing.Dict[str, typing.Dict[int, float]]
    pb_quantiles: typing.Dict[str, typing.Dict[str, float]]
    p_new_pb: typing.Dict[str, float]
    p_any: float
    p_any_se: float

    def to_dict(self) -> typing.Dict[str, typing.Any]:
        subjects = sorted(set(self.p_first_record) | set(self.pb_quantiles))
        return {
            "p_any": self.p_any,
            "p_any_se": self.p_any_se,
            "subjects": {
                tag: {
                    "p_first_record": self.p_first_record.get(tag, 0.0),
                    "first_record_year_hist": {
                        str(year): p for year, p in sorted(self.first_record_year_hist.get(tag, {}).items())
                    },
                    "pb_quantiles": self.pb_quantiles.get(tag, {}),
                    **({"p_new_pb": self.p_new_pb[tag]} if tag in self.p_new_pb else {}),
                }
                for tag in subjects
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _group_key(tag: str) -> str:
    return "new" if tag.startswith("new:") else tag


def record_event_probs(
    ps: PredictiveSample,
    record_r: float,
    levels: typing.Sequence[float] = (0.05, 0.25, 0.5, 0.75, 0.95),
) -> RecordEvents:
    """Estimate record and personal best probabilities from simulations.

    Arguments:
        ps (`PredictiveSample`): The simulated exceedances.
        record_r (`float`): The current record, on the latent-sign scale.
        levels (sequence of `float`): The quantile levels of the personal
            bests.

    """
    trials: typing.Dict[typing.Tuple[int, int], typing.List[SimulatedPath]] = collections.defaultdict(list)
    for path in ps.paths:
        trials[path.replicate, path.draw].append(path)

    wins: typing.Counter[str] = collections.Counter()
    years: typing.Dict[str, typing.Counter[int]] = collections.defaultdict(collections.Counter)
    maxima: typing.Dict[str, typing.List[float]] = collections.defaultdict(list)
    new_pb: typing.Counter[str] = collections.Counter()
    for paths in trials.values():
        first: typing.Optional[typing.Tuple[float, str]] = None
        for path in paths:
            key = _group_key(path.tag)
            top = float(path.values.max())
            maxima[key].append(top)
            bare = path.tag.split(":", 1)[1]
            if path.tag.startswith("current:") and top > ps.bests.get(bare, math.inf):
                new_pb[key] += 1
            breach = numpy.flatnonzero(path.values > record_r)
            if breach.size:
                time = float(path.times[breach[0]])
                if first is None or time < first[0]:
                    first = (time, key)
        if first is not None:
            wins[first[1]] += 1
            years[first[1]][from_days(int(math.floor(first[0]))).year] += 1

    total = ps.n_trials
    sign = -1.0 if ps.sign_flip else 1.0
    pb_quantiles = {}
    for key, values in maxima.items():
        q = numpy.quantile(numpy.asarray(values), levels)
        pb_quantiles[key] = {"q{:g}".format(level): float(sign * v) for level, v in zip(levels, q)}
    p_any = sum(wins.values()) / total
    return RecordEvents(
        p_first_record={key: count / total for key, count in sorted(wins.items())},
        first_record_year_hist={
            key: {year: c / total for year, c in sorted(counter.items())} for key, counter in years.items()
        },
        pb_quantiles=pb_quantiles,
        p_new_pb={"current:{}".format(id_): new_pb["current:{}".format(id_)] / total for id_ in ps.bests},
        p_any=p_any,
        p_any_se=math.sqrt(p_any * (1.0 - p_any) / total),
    )


# --- Record analytics -------------------------------------------------------


@dataclasses.dataclass(frozen=True)
class RecordAnalytics:
    """Closed-form quantities about the record ``r`` under a tail law."""

    sigma_r: float
    expected_next_record: float
    ultimate_endpoint: float
    lambda_r: float


def record_analytics(mp: MarginalParams, r: float, s_t: float, t_years: float) -> RecordAnalytics:
    """Compute the tail quantities above the current record ``r``.

    The yearly rate :math:`λ_r(t)` of responses beating ``r`` scales the
    per-response exceedance probability by the response volume ``s_t``.

    Example:
        >>> from longtail.distributions import GpdParams
        >>> from longtail.marginal import RateParams
        >>> mp = MarginalParams(GpdParams(-61.125, 1.0, -0.22), RateParams(0.0, 0.0))
        >>> ra = record_analytics(mp, -56.88, 1.0, 0.0)
        >>> round(ra.sigma_r, 4), round(ra.expected_next_record, 3), round(ra.ultimate_endpoint, 2)
        (0.0661, -56.826, -56.58)

    Raises:
        `~longtail.errors.DomainError`: When ``r`` lies beyond the upper
            endpoint, or below the threshold.

    """
    if r < mp.u:
        raise DomainError("record_analytics", "record {!r} below threshold".format(r))
    if not s_t > 0:
        raise InvalidParameter("s_t", s_t, hint="positive number")
    above = mp.gpd.above(r)
    if mp.xi < 1.0:
        expected = r + above.sigma_u / (1.0 - mp.xi)
    else:
        expected = math.inf
    rate = s_t * typing.cast(float, lambda_u(mp.rate, t_years)) * gpd_sf(mp.gpd, r)
    return RecordAnalytics(above.sigma_u, expected, mp.gpd.endpoint, rate)


def record_analytics_posterior(
    draws: typing.Sequence[Theta],
    r: float,
    s_t: float,
    t_years: float,
) -> pandas.DataFrame:
    """Compute the record quantities for each posterior draw.

    Draws for which the record lies beyond the endpoint get `nan` values.
    The table also reports :math:`ν / V_α`, the share of within-subject
    variability.

    """
    rows = []
    beyond = 0
    for theta in draws:
        ratio = theta.population.nu / theta.population.v_alpha
        try:
            ra = record_analytics(theta.marginal, r, s_t, t_years)
        except DomainError:
            beyond += 1
            rows.append((math.nan, math.nan, theta.marginal.gpd.endpoint, math.nan, ratio))
        else:
            rows.append((ra.sigma_r, ra.expected_next_record, ra.ultimate_endpoint, ra.lambda_r, ratio))
    if beyond:
        logger.warning("record beyond endpoint for %d of %d draws", beyond, len(rows))
    columns = ["sigma_r", "expected_next_record", "ultimate_endpoint", "lambda_r", "nu_over_v_alpha"]
    return pandas.DataFrame(rows, columns=columns)


def annual_maximum_cdf(mp: MarginalParams, x: float, s_t: float, t_years: float) -> float:
    """Get the probability that no response of a year exceeds ``x``.

    The exceedances of ``x`` within the year are approximated by a Poisson
    count of mean :math:`λ_x(t)`.

    """
    if x < mp.u:
        raise DomainError("annual_maximum_cdf", "{!r} below threshold".format(x))
    endpoint = mp.gpd.endpoint
    if x >= endpoint:
        return 1.0
    rate = s_t * typing.cast(float, lambda_u(mp.rate, t_years)) * gpd_sf(mp.gpd, x)
    return math.exp(-rate)


def analytic_record_prob(
    alphas: typing.Sequence[float],
    nus: typing.Sequence[float],
    counts: typing.Sequence[int],
    r_z: float,
    target: int,
    tol: float = 1e-8,
) -> float:
    """Compute the probability that a subject holds the record at the end.

    Subjects have constant latent means ``alphas`` and scales ``nus``, and
    independent responses; subject ``k`` responds ``counts[k]`` times. The
    result is the probability that the maximum of subject ``target``
    exceeds both ``r_z`` and the maxima of all other subjects.

    Example:
        >>> round(analytic_record_prob([0.0, 0.0], [1.0, 1.0], [1, 1], -math.inf, 0), 8)
        0.5

    Raises:
        `~longtail.errors.QuadratureError`: When the integral does not
            reach the requested tolerance.

    """
    alphas = numpy.asarray(alphas, dtype=float)
    nus = numpy.asarray(nus, dtype=float)
    counts = numpy.asarray(counts, dtype=int)
    if not (alphas.shape == nus.shape == counts.shape):
        raise InvalidParameter("counts", counts.size, hint="one value per subject")
    if not 0 <= target < alphas.size:
        raise InvalidParameter("target", target, hint="index in [0, {})".format(alphas.size))
    if numpy.any(counts < 0) or numpy.any(nus <= 0):
        raise InvalidParameter("counts", counts.tolist(), hint="non-negative counts and positive scales")
    others = numpy.arange(alphas.size) != target
    a_o, n_o, c_o = alphas[others], nus[others], counts[others]
    a_i, n_i, c_i = alphas[target], nus[target], counts[target]

    def log_cdf_others(z: float) -> float:
        with numpy.errstate(invalid="ignore"):
            terms = numpy.where(c_o > 0, c_o * scipy.special.log_ndtr((z - a_o) / n_o), 0.0)
        return float(terms.sum())

    def survivor(z: float) -> float:
        return -math.expm1(c_i * scipy.special.log_ndtr((z - a_i) / n_i))

    def density_others(z: float) -> float:
        y = (z - a_o) / n_o
        log_phi = -0.5 * y * y - 0.5 * math.log(2 * math.pi) - numpy.log(n_o)
        with numpy.errstate(divide="ignore"):
            log_terms = numpy.log(c_o) + log_phi - scipy.special.log_ndtr(y) + log_cdf_others(z)
        return float(numpy.exp(log_terms[c_o > 0]).sum())

    if c_i == 0:
        return 0.0
    head = survivor(r_z) * math.exp(log_cdf_others(r_z))
    if not c_o.any():
        return head

    # below `lo` every competitor maximum has a negligible distribution function
    lo = max(r_z, float(a_o.min() - 12.0 * n_o.max()))
    split = float(alphas.max() + 12.0 * nus.max())
    pieces = [(lo, split), (split, math.inf)] if lo < split else [(lo, math.inf)]
    integrand = lambda z: survivor(z) * density_others(z)  # noqa: E731
    integral = 0.0
    for a, b in pieces:
        result = scipy.integrate.quad(integrand, a, b, epsabs=tol, epsrel=0.0, limit=200, full_output=1)
        if len(result) > 3:
            raise QuadratureError(result[1], tol)
        integral += result[0]
    return head + integral


# --- Posterior predictive checks --------------------------------------------


@dataclasses.dataclass(frozen=True)
class PosteriorPredictive:
    """Predictive samples at every observed response.

    Attributes:
        subject_ids (`numpy.ndarray`): The subject of each response.
        times (`numpy.ndarray`): The day of each response.
        observed (`numpy.ndarray`): The observed responses, on the
            latent-sign scale.
        samples (`numpy.ndarray`): The predictive samples, with one row
            per replicate and one column per response.
        sign_flip (`bool`): Whether original units are negated values.

    """

    subject_ids: numpy.ndarray
    times: numpy.ndarray
    observed: numpy.ndarray
    samples: numpy.ndarray
    sign_flip: bool = False

    def coverage(self, level: float = 0.95) -> float:
        """Get the fraction of responses inside their central interval."""
        lo, hi = numpy.quantile(self.samples, [(1 - level) / 2, (1 + level) / 2], axis=0)
        return float(numpy.mean((self.observed >= lo) & (self.observed <= hi)))

    def to_frame(self, level: float = 0.95) -> pandas.DataFrame:
        """Summarize the samples of each response, in original units."""
        sign = -1.0 if self.sign_flip else 1.0
        q = numpy.quantile(sign * self.samples, [(1 - level) / 2, 0.5, (1 + level) / 2], axis=0)
        lo, hi = numpy.minimum(q[0], q[2]), numpy.maximum(q[0], q[2])
        return pandas.DataFrame({
            "subject_id": self.subject_ids,
            "time_days": self.times,
            "observed": sign * self.observed,
            "lower": lo,
            "median": q[1],
            "upper": hi,
        })


def _predictive_task(
    draws: typing.Sequence[Theta],
    d: Dataset,
    censored: numpy.ndarray,
    seed: int,
    grid_count: int,
    jitter: float,
    replicate: int,
) -> numpy.ndarray:
    theta = draws[replicate % len(draws)]
    rng = substream(seed, "predictive", replicate)
    pe, mp = theta.population, theta.marginal
    m = _data_mixture(theta, d)
    past, _, _ = _latent_state(theta, d, m, rng, grid_count)
    out = []
    for s, se, z in zip(d.subjects, theta.subjects, past):
        mu = numpy.atleast_1d(mean_fn(se, pe, s.birth_date, s.times))
        corr = correlation_matrix(theta.kernel, s.times.astype(float), jitter)
        factor = scipy.linalg.cho_factor(pe.nu ** 2 * corr, lower=True)
        precision = scipy.linalg.cho_solve(factor, numpy.eye(z.size))
        diag = numpy.diag(precision)
        mean = z - precision.dot(z - mu) / diag
        draw = mean + rng.standard_normal(z.size) / numpy.sqrt(diag)
        t_years = numpy.asarray(d.years(s.times), dtype=float)
        p, above, x = _back_transform(mp, m, draw, t_years)
        if censored.size:
            q = p[~above] / (1.0 - numpy.asarray(lambda_u(mp.rate, t_years[~above])))
            x[~above] = numpy.quantile(censored, numpy.clip(q, 0.0, 1.0))
        else:
            x[~above] = mp.u
        out.append(x)
    return numpy.concatenate(out) if out else numpy.empty(0)


def posterior_predictive_at_dates(
    draws: typing.Sequence[Theta],
    d: Dataset,
    n_rep: int = 400,
    seed: int = 0,
    *,
    censored_values: typing.Optional[typing.Sequence[float]] = None,
    grid_count: int = 2001,
    jitter: float = JITTER,
    jobs: int = 0,
) -> PosteriorPredictive:
    """Draw predictive samples of every observed response.

    Each replicate uses a posterior draw in turn, computes the latent
    values of the data, and draws the latent value of each response from
    its conditional given the other responses of the subject. Draws above
    the latent threshold are mapped through the tail law, the others
    through the empirical distribution of the censored responses.

    Arguments:
        draws (sequence of `~longtail.inference.Theta`): Posterior draws.
        d (`~longtail.data.Dataset`): The fitted dataset.
        n_rep (`int`): The number of predictive samples per response.
        seed (`int`): The master seed.
        censored_values (sequence of `float`, optional): The values of the
            empirical distribution used below the threshold. Defaults to
            the censored responses of ``d``.

    """
    if not draws:
        raise InvalidParameter("draws", len(draws), hint="at least one posterior draw")
    if n_rep < 1:
        raise InvalidParameter("n_rep", n_rep, hint="integer >= 1")
    u = draws[0].marginal.u
    if censored_values is None:
        censored_values = [v for s in d.subjects for v in s.values if v <= u]
    censored = numpy.sort(numpy.asarray(censored_values, dtype=float))
    function = functools.partial(_predictive_task, draws, d, censored, seed, grid_count, jitter)
    samples = numpy.stack(list(imap_ordered(function, range(n_rep), cpus=jobs)))
    ids = numpy.array([s.id for s in d.subjects for _ in s.observations], dtype=object)
    times = numpy.concatenate([s.times for s in d.subjects]) if d.subjects else numpy.empty(0)
    observed = numpy.concatenate([s.values for s in d.subjects]) if d.subjects else numpy.empty(0)
    return PosteriorPredictive(ids, times, observed, samples, d.sign_flip)
