# coding: utf-8
"""Longitudinal datasets: ingestion, validation and preprocessing.

Times are stored as integer days since 1970-01-01. Responses are stored
twice: in their original units (``raw_value``), and on the latent-sign scale
where larger values are more extreme (``value``). For timed events such as
swims, the sign is flipped so that faster is larger.

"""

import collections
import dataclasses
import datetime
import logging
import math
import os
import typing

import numpy
import pandas

from .errors import DataError, InvalidParameter

__all__ = [
    "DAYS_PER_YEAR",
    "Observation",
    "Subject",
    "Dataset",
    "CensorPartition",
    "ingest_csv",
    "write_csv",
    "preprocess",
    "partition_censored",
    "k_m_curve",
    "below_threshold_subjects",
    "responses_per_year",
    "final_year_volume",
    "to_days",
    "from_days",
]

logger = logging.getLogger(__name__)

#: The number of days per year used to convert ages and rate covariates.
DAYS_PER_YEAR = 365.25

_EPOCH = datetime.date(1970, 1, 1)
_COLUMNS = ["subject_id", "date", "value", "birth_date"]


def to_days(date: typing.Union[str, datetime.date]) -> int:
    """Convert a date to a number of days since the epoch.

    Example:
        >>> to_days("1970-01-02")
        1
        >>> to_days(datetime.date(2012, 1, 1))
        15340

    """
    if isinstance(date, str):
        date = datetime.date.fromisoformat(date)
    return (date - _EPOCH).days


def from_days(days: int) -> datetime.date:
    """Convert a number of days since the epoch to a date."""
    return _EPOCH + datetime.timedelta(days=int(days))


@dataclasses.dataclass(frozen=True)
class Observation:
    """A single time-stamped response of a subject."""

    time: int
    value: float
    raw_value: float


@dataclasses.dataclass(frozen=True)
class Subject:
    """A subject with its birth date and time-ordered observations.

    Attributes:
        id (`str`): The identifier of the subject, unique in a dataset.
        birth_date (`int`): The birth date, in days since the epoch.
        observations (`tuple` of `Observation`): The responses of the
            subject, strictly increasing in time.

    """

    id: str
    birth_date: int
    observations: typing.Tuple[Observation, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "observations", tuple(self.observations))
        times = [obs.time for obs in self.observations]
        if any(t1 >= t2 for t1, t2 in zip(times, times[1:])):
            raise DataError("observations of subject {!r} not strictly increasing in time".format(self.id))

    def __len__(self) -> int:
        return len(self.observations)

    @property
    def times(self) -> numpy.ndarray:
        """`numpy.ndarray`: The observation times, in days since the epoch."""
        return numpy.array([obs.time for obs in self.observations], dtype=numpy.int64)

    @property
    def values(self) -> numpy.ndarray:
        """`numpy.ndarray`: The responses, on the latent-sign scale."""
        return numpy.array([obs.value for obs in self.observations], dtype=float)

    @property
    def best(self) -> float:
        """`float`: The most extreme response of the subject."""
        return max(obs.value for obs in self.observations)

    def ages(self) -> numpy.ndarray:
        """Get the age of the subject at each observation, in years."""
        return (self.times - self.birth_date) / DAYS_PER_YEAR


@dataclasses.dataclass(frozen=True)
class Dataset:
    """A collection of subjects observed over a common time window.

    Attributes:
        subjects (`tuple` of `Subject`): The subjects, in a fixed order.
        threshold_u (`float`, optional): The extreme threshold, on the
            latent-sign scale, or `None` before preprocessing.
        sign_flip (`bool`): Whether responses were negated on ingestion.
        origin (`int`, optional): The day used as time zero for the rate
            covariate. Defaults to the first observation time.

    """

    subjects: typing.Tuple[Subject, ...]
    threshold_u: typing.Optional[float] = None
    sign_flip: bool = False
    origin: typing.Optional[int] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "subjects", tuple(self.subjects))
        ids = collections.Counter(subject.id for subject in self.subjects)
        duplicates = sorted(id_ for id_, count in ids.items() if count > 1)
        if duplicates:
            raise DataError("duplicate subject identifiers: {}".format(", ".join(duplicates)))
        if self.origin is None:
            times = [s.observations[0].time for s in self.subjects if s.observations]
            object.__setattr__(self, "origin", min(times, default=0))

    def __len__(self) -> int:
        return len(self.subjects)

    @property
    def t_max(self) -> int:
        """`int`: The last observation time of the dataset."""
        times = [s.observations[-1].time for s in self.subjects if s.observations]
        return max(times, default=typing.cast(int, self.origin))

    @property
    def n_observations(self) -> int:
        """`int`: The total number of observations in the dataset."""
        return sum(len(s) for s in self.subjects)

    @property
    def ids(self) -> typing.List[str]:
        """`list` of `str`: The subject identifiers, in order."""
        return [s.id for s in self.subjects]

    def years(self, times: typing.Union[int, numpy.ndarray]) -> typing.Union[float, numpy.ndarray]:
        """Convert times in days to years since the dataset origin."""
        return (numpy.asarray(times) - typing.cast(int, self.origin)) / DAYS_PER_YEAR

    def replace(self, **changes: typing.Any) -> "Dataset":
        """Get a copy of the dataset with some fields replaced."""
        return dataclasses.replace(self, **changes)


@dataclasses.dataclass(frozen=True)
class CensorPartition:
    """The split of observations around the threshold.

    Observations are identified by ``(subject_index, observation_index)``.

    """

    above: typing.FrozenSet[typing.Tuple[int, int]]
    below: typing.FrozenSet[typing.Tuple[int, int]]


def _first_bad_row(mask: pandas.Series) -> int:
    # header is line 1, so the first record is line 2
    return int(numpy.flatnonzero(mask.to_numpy())[0]) + 2


def ingest_csv(path: typing.Union[str, "os.PathLike[str]"], sign_flip: bool = False) -> Dataset:
    """Read a longitudinal dataset from a CSV file.

    The file must have a ``subject_id,date,value,birth_date`` header, with
    an optional ``competition`` column. When the competition column is
    present, only the best response of each subject within a competition
    is kept.

    Arguments:
        path (`str` or `os.PathLike`): The path to the CSV file.
        sign_flip (`bool`): Whether to negate values so that the lowest
            raw values become the most extreme.

    Returns:
        `~longtail.data.Dataset`: The unfiltered dataset, with subjects in
        order of first appearance and observations sorted by date.

    Raises:
        `~longtail.errors.DataError`: When the file is missing or does not
            follow the schema. Errors on a specific record report the line
            number of that record.

    """
    try:
        frame = pandas.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True)
    except FileNotFoundError as err:
        raise DataError("no such file: {}".format(path)) from err
    except pandas.errors.EmptyDataError as err:
        raise DataError("missing header row") from err

    columns = list(frame.columns)
    if columns not in (_COLUMNS, _COLUMNS + ["competition"]):
        raise DataError("unexpected header: {}".format(",".join(columns)), row=1)
    if frame.empty:
        return Dataset((), sign_flip=sign_flip)

    dates = pandas.to_datetime(frame["date"], format="%Y-%m-%d", errors="coerce")
    if dates.isna().any():
        raise DataError("unparsable date", row=_first_bad_row(dates.isna()))
    births = pandas.to_datetime(frame["birth_date"], format="%Y-%m-%d", errors="coerce")
    if births.isna().any():
        raise DataError("unparsable birth date", row=_first_bad_row(births.isna()))
    raw = pandas.to_numeric(frame["value"], errors="coerce")
    bad = raw.isna() | ~numpy.isfinite(raw)
    if bad.any():
        raise DataError("unparsable value", row=_first_bad_row(bad))
    if (frame["subject_id"] == "").any():
        raise DataError("empty subject identifier", row=_first_bad_row(frame["subject_id"] == ""))

    records = pandas.DataFrame({
        "row": numpy.arange(2, len(frame) + 2),
        "subject_id": frame["subject_id"],
        "time": (dates - pandas.Timestamp(_EPOCH)).dt.days,
        "birth": (births - pandas.Timestamp(_EPOCH)).dt.days,
        "raw": raw.astype(float),
        "value": -raw.astype(float) if sign_flip else raw.astype(float),
    })

    if "competition" in columns:
        records["competition"] = frame["competition"]
        best = records.groupby(["subject_id", "competition"], sort=False)["value"].idxmax()
        dropped = len(records) - len(best)
        records = records.loc[numpy.sort(best.to_numpy())]
        logger.debug("kept competition bests, dropped %d rows", dropped)

    duplicated = records.duplicated(["subject_id", "time"], keep="first")
    if duplicated.any():
        row = int(records.loc[duplicated, "row"].iloc[0])
        raise DataError("duplicate (subject, date) pair", row=row)

    subjects = []
    for subject_id, group in records.groupby("subject_id", sort=False):
        if group["birth"].nunique() > 1:
            row = int(group["row"].iloc[int(numpy.argmax(group["birth"].to_numpy() != group["birth"].iloc[0]))])
            raise DataError("inconsistent birth date for subject {!r}".format(subject_id), row=row)
        group = group.sort_values("time", kind="stable")
        observations = tuple(
            Observation(int(t), float(v), float(r))
            for t, v, r in zip(group["time"], group["value"], group["raw"])
        )
        subjects.append(Subject(str(subject_id), int(group["birth"].iloc[0]), observations))

    logger.info("read %d observations of %d subjects from %s", len(records), len(subjects), path)
    return Dataset(tuple(subjects), sign_flip=sign_flip)


def write_csv(d: Dataset, path: typing.Union[str, "os.PathLike[str]"]) -> None:
    """Write a dataset to a CSV file following the ingestion schema."""
    rows = [
        (s.id, from_days(obs.time).isoformat(), obs.raw_value, from_days(s.birth_date).isoformat())
        for s in d.subjects
        for obs in s.observations
    ]
    frame = pandas.DataFrame(rows, columns=_COLUMNS)
    frame.to_csv(path, index=False, lineterminator="\n")


def preprocess(d: Dataset, u: float, m: int) -> Dataset:
    """Keep the subjects with enough observations and at least one exceedance.

    Arguments:
        d (`~longtail.data.Dataset`): The dataset to filter.
        u (`float`): The threshold, on the latent-sign scale.
        m (`int`): Subjects with at most ``m`` observations are dropped.

    Returns:
        `~longtail.data.Dataset`: The filtered dataset, recording ``u``,
        with the time origin of the input dataset.

    Raises:
        `~longtail.errors.DataError`: When no subject survives the filters.

    """
    if m < 0:
        raise InvalidParameter("m", m, hint="non-negative integer")
    kept = tuple(
        s for s in d.subjects
        if len(s) > m and any(obs.value > u for obs in s.observations)
    )
    logger.info("kept %d of %d subjects (u=%g, m=%d)", len(kept), len(d), u, m)
    if not kept:
        raise DataError("no subjects survive filters")
    return Dataset(kept, threshold_u=u, sign_flip=d.sign_flip, origin=d.origin)


def k_m_curve(d: Dataset, u: float, m_max: int) -> typing.List[typing.Tuple[int, int]]:
    """Count the exceeding subjects with at most ``m`` observations.

    Only subjects with at least one response above ``u`` are counted. An
    abrupt increase of :math:`k_m` indicates a sensible choice of ``m``.

    Example:
        >>> obs = lambda n: tuple(Observation(t, 1.0, 1.0) for t in range(n))
        >>> d = Dataset([Subject("a", 0, obs(3)), Subject("b", 0, obs(8))])
        >>> k_m_curve(d, 0.0, 3)
        [(0, 0), (1, 0), (2, 0), (3, 1)]

    """
    counts = collections.Counter(
        len(s) for s in d.subjects if any(obs.value > u for obs in s.observations)
    )
    curve, total = [], 0
    for m in range(m_max + 1):
        total += counts.get(m, 0)
        curve.append((m, total))
    return curve


def below_threshold_subjects(d: Dataset, u: float) -> typing.List[Subject]:
    """Get the subjects that never exceeded ``u``."""
    return [s for s in d.subjects if s.observations and s.best <= u]


def partition_censored(d: Dataset) -> CensorPartition:
    """Split the observations of a preprocessed dataset around its threshold.

    Values equal to the threshold are censored, since exceedances are
    defined by a strict inequality.

    Raises:
        `~longtail.errors.InvalidParameter`: When the dataset has no
            threshold.

    """
    if d.threshold_u is None:
        raise InvalidParameter("threshold_u", None, hint="preprocessed dataset")
    above, below = set(), set()
    for i, subject in enumerate(d.subjects):
        for j, obs in enumerate(subject.observations):
            (above if obs.value > d.threshold_u else below).add((i, j))
    return CensorPartition(frozenset(above), frozenset(below))


def responses_per_year(d: Dataset) -> typing.Dict[int, int]:
    """Count the responses recorded in each calendar year.

    This is the volume :math:`s_t` scaling the per-response exceedance rate
    into a yearly rate. Years are returned in increasing order.

    """
    counts = collections.Counter(
        from_days(obs.time).year for s in d.subjects for obs in s.observations
    )
    return dict(sorted(counts.items()))


def final_year_volume(d: Dataset) -> float:
    """Get the response volume of the last observed calendar year."""
    volumes = responses_per_year(d)
    if not volumes:
        return math.nan
    return float(volumes[max(volumes)])
