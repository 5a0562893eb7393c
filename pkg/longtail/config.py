# coding: utf-8
"""Run configuration files.

A configuration file is a UTF-8 text file with one ``key = value`` pair per
line, and ``#`` comments. Every key is optional except ``seed``, which may
also be given on the command line::

    # a short run on the bundled data
    data = swims.csv
    seed = 42
    chains = 4
    iterations = 4000
    burn_in = 2000

Unknown keys are rejected, so that a typo never silently falls back to a
default value.

"""

import configparser
import dataclasses
import datetime
import math
import os
import typing

from .data import to_days
from .distributions import GpdParams, GridSpec
from .errors import ConfigError, InvalidParameter
from .inference import McmcConfig, Theta
from .latent import KernelParams, PopulationEffects
from .marginal import MarginalParams, RateParams
from .predict import ObservationWindow

__all__ = ["RunConfig", "parse_config", "load_config"]

_SECTION = "longtail"
_AUTO = "auto"
_LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")


def _parse_bool(text: str) -> bool:
    try:
        return configparser.ConfigParser.BOOLEAN_STATES[text.lower()]
    except KeyError:
        raise ValueError("not a boolean: {!r}".format(text)) from None


def _parse_date(text: str) -> str:
    return datetime.date.fromisoformat(text).isoformat()


def _optional(parse: typing.Callable[[str], typing.Any]) -> typing.Callable[[str], typing.Any]:
    def parse_optional(text: str) -> typing.Any:
        return None if text.lower() in (_AUTO, "") else parse(text)
    return parse_optional


def _option(default: typing.Any, parse: typing.Callable[[str], typing.Any]) -> typing.Any:
    return dataclasses.field(default=default, metadata={"parse": parse})


@dataclasses.dataclass(frozen=True)
class RunConfig:
    """The resolved settings of a command line run.

    Attributes:
        seed (`int`): The master seed; every random stream of the run is
            derived from it.
        data (`str`, optional): The path to the input CSV file.
        sign_flip (`bool`): Whether smaller raw values are more extreme.
        threshold (`float`): The threshold in original units.
        min_obs (`int`): Subjects with at most this many observations are
            dropped before fitting.
        grid_lo, grid_hi (`float`, optional): A fixed inversion grid, or
            `None` for a grid covering the mixture at each step.
        horizon_years (`float`): The length of the future window.
        r_data (`float`, optional): The yearly arrival rate of new
            subjects, or `None` to estimate it from the data.
        record (`float`, optional): The record in original units, or
            `None` for the best observed response.

    The other attributes mirror the arguments of `McmcConfig`,
    `~longtail.predict.simulate_future` and the ``synth`` and ``measure``
    commands.

    """

    seed: int = _option(None, int)
    data: typing.Optional[str] = _option(None, _optional(str))
    sign_flip: bool = _option(True, _parse_bool)
    threshold: float = _option(-61.125, float)
    min_obs: int = _option(7, int)
    grid_lo: typing.Optional[float] = _option(None, _optional(float))
    grid_hi: typing.Optional[float] = _option(None, _optional(float))
    grid_count: int = _option(2001, int)
    chains: int = _option(40, int)
    iterations: int = _option(20000, int)
    burn_in: int = _option(10000, int)
    thin: int = _option(10, int)
    hpdi_level: float = _option(0.95, float)
    v_alpha: float = _option(6.0, float)
    n_aux: int = _option(1, int)
    jobs: int = _option(0, int)
    horizon_years: float = _option(12.0, float)
    psi: float = _option(0.5, float)
    r_data: typing.Optional[float] = _option(None, _optional(float))
    cutoff_fraction: float = _option(0.2, float)
    record: typing.Optional[float] = _option(None, _optional(float))
    posterior_draws: int = _option(200, int)
    replicates: int = _option(1, int)
    predictive_samples: int = _option(400, int)
    synth_subjects: int = _option(30, int)
    synth_obs_rate: float = _option(2.5, float)
    synth_start: str = _option("2010-01-01", _parse_date)
    synth_years: float = _option(4.0, float)
    synth_xi: float = _option(-0.2, float)
    synth_sigma_u: float = _option(1.0, float)
    synth_beta0: float = _option(-1.0, float)
    synth_beta1: float = _option(0.1, float)
    synth_gamma: float = _option(0.02, float)
    synth_nu: float = _option(1.0, float)
    synth_kappa0: float = _option(0.01, float)
    synth_kappa1: float = _option(1.0, float)
    measure_pairs: int = _option(1000000, int)
    measure_replications: int = _option(100000, int)
    measure_n: int = _option(10000, int)
    measure_rho: float = _option(0.5, float)
    log_level: str = _option("WARNING", str.upper)

    def __post_init__(self) -> None:
        if self.seed is None:
            raise ConfigError("a seed is required, in the file or with --seed", "seed")
        positive_ints = ("chains", "iterations", "thin", "grid_count", "n_aux", "posterior_draws",
                         "replicates", "predictive_samples", "measure_pairs", "measure_replications")
        for key in positive_ints:
            if getattr(self, key) < 1:
                raise ConfigError("expected an integer >= 1, got {!r}".format(getattr(self, key)), key)
        for key in ("seed", "min_obs", "jobs", "synth_subjects"):
            if getattr(self, key) < 0:
                raise ConfigError("expected a non-negative integer, got {!r}".format(getattr(self, key)), key)
        if not 0 <= self.burn_in < self.iterations:
            raise ConfigError("expected an integer in [0, iterations), got {!r}".format(self.burn_in), "burn_in")
        for key in ("hpdi_level", "cutoff_fraction"):
            if not 0.0 < getattr(self, key) < 1.0:
                raise ConfigError("expected a number in (0, 1), got {!r}".format(getattr(self, key)), key)
        for key in ("v_alpha", "horizon_years", "synth_obs_rate", "synth_years", "synth_sigma_u", "synth_nu", "synth_kappa0"):
            if not getattr(self, key) > 0:
                raise ConfigError("expected a positive number, got {!r}".format(getattr(self, key)), key)
        for key in ("psi", "synth_gamma", "r_data"):
            value = getattr(self, key)
            if value is not None and not value >= 0:
                raise ConfigError("expected a non-negative number, got {!r}".format(value), key)
        if not math.isfinite(self.threshold):
            raise ConfigError("expected a finite number, got {!r}".format(self.threshold), "threshold")
        if not 0.5 <= self.synth_kappa1 <= 2.0:
            raise ConfigError("expected a number in [0.5, 2], got {!r}".format(self.synth_kappa1), "synth_kappa1")
        if not abs(self.measure_rho) < 1.0:
            raise ConfigError("expected a number in (-1, 1), got {!r}".format(self.measure_rho), "measure_rho")
        if self.measure_n < 2:
            raise ConfigError("expected an integer >= 2, got {!r}".format(self.measure_n), "measure_n")
        if (self.grid_lo is None) != (self.grid_hi is None):
            raise ConfigError("grid_lo and grid_hi must be given together", "grid_lo")
        if self.log_level not in _LOG_LEVELS:
            raise ConfigError("expected one of {}, got {!r}".format(", ".join(_LOG_LEVELS), self.log_level), "log_level")

    @property
    def u(self) -> float:
        """`float`: The threshold on the latent-sign scale."""
        return -self.threshold if self.sign_flip else self.threshold

    def replace(self, **changes: typing.Any) -> "RunConfig":
        """Get a copy of the configuration with some values replaced."""
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> typing.Dict[str, typing.Any]:
        return dataclasses.asdict(self)

    def mcmc(self) -> McmcConfig:
        """Get the settings of the sampler."""
        return McmcConfig(
            chains=self.chains,
            iterations=self.iterations,
            burn_in=self.burn_in,
            thin=self.thin,
            seed=self.seed,
            n_aux=self.n_aux,
            grid_count=self.grid_count,
            v_alpha=self.v_alpha,
            jobs=self.jobs,
        )

    def grid(self) -> typing.Optional[GridSpec]:
        """Get the fixed inversion grid, if any."""
        if self.grid_lo is None or self.grid_hi is None:
            return None
        try:
            return GridSpec(self.grid_lo, self.grid_hi, self.grid_count)
        except InvalidParameter as err:
            raise ConfigError(str(err), "grid_lo") from err

    def synth_window(self) -> ObservationWindow:
        """Get the observation window of synthetic datasets."""
        return ObservationWindow(to_days(self.synth_start), self.synth_years)

    def synth_theta(self) -> Theta:
        """Get the generating parameters of synthetic datasets."""
        try:
            return Theta(
                MarginalParams(
                    GpdParams(self.u, self.synth_sigma_u, self.synth_xi),
                    RateParams(self.synth_beta0, self.synth_beta1),
                ),
                (),
                PopulationEffects(self.synth_gamma, self.synth_nu, self.v_alpha),
                KernelParams(self.synth_kappa0, self.synth_kappa1),
            )
        except InvalidParameter as err:
            raise ConfigError(str(err), "synth_{}".format(err.name)) from err


_FIELDS = {field.name: field for field in dataclasses.fields(RunConfig)}


def parse_config(text: str, **overrides: typing.Any) -> RunConfig:
    """Parse the contents of a configuration file.

    Arguments:
        text (`str`): The contents of the file.
        **overrides: Values taking precedence over those of the file,
            ignored when `None`.

    Example:
        >>> config = parse_config("seed = 7\\nchains = 4  # short run\\n")
        >>> config.chains, config.seed, config.threshold
        (4, 7, -61.125)
        >>> parse_config("seeds = 7")
        Traceback (most recent call last):
        ...
        longtail.errors.ConfigError: 'seeds': unknown key

    Raises:
        `~longtail.errors.ConfigError`: On malformed lines, unknown keys,
            unparsable or out-of-range values, or a missing seed.

    """
    parser = configparser.ConfigParser(
        comment_prefixes=("#",),
        inline_comment_prefixes=("#",),
        interpolation=None,
        default_section="__defaults__",
    )
    parser.optionxform = str  # type: ignore
    try:
        parser.read_string("[{}]\n{}".format(_SECTION, text))
    except configparser.DuplicateOptionError as err:
        raise ConfigError("duplicate key", err.option) from err
    except configparser.Error as err:
        raise ConfigError("malformed configuration: {}".format(err.message)) from err
    if parser.sections() != [_SECTION]:
        raise ConfigError("sections are not supported")

    values: typing.Dict[str, typing.Any] = {}
    for key, text_value in parser[_SECTION].items():
        field = _FIELDS.get(key)
        if field is None:
            raise ConfigError("unknown key", key)
        try:
            values[key] = field.metadata["parse"](text_value.strip())
        except ValueError as err:
            raise ConfigError("invalid value {!r}".format(text_value), key) from err
    values.update({k: v for k, v in overrides.items() if v is not None})
    return RunConfig(**values)


def load_config(path: typing.Union[str, "os.PathLike[str]"], **overrides: typing.Any) -> RunConfig:
    """Load a configuration file.

    See `parse_config` for the arguments and errors.

    """
    try:
        with open(path, encoding="utf-8") as f:
            text = f.read()
    except OSError as err:
        raise ConfigError("cannot read configuration file {!r}: {}".format(os.fspath(path), err.strerror)) from err
    return parse_config(text, **overrides)
