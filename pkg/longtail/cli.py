# coding: utf-8
"""Command line interface of the `longtail` package.

Every subcommand reads a configuration file, writes plot-ready files into
its output location, and echoes the resolved configuration in a
``manifest.json`` file next to them::

    $ longtail synth --config run.cfg --out synth.csv
    $ longtail fit --config run.cfg --data synth.csv --out run/
    $ longtail predict --config run.cfg --data synth.csv --out run/

Logs are written to the standard error, so that output files only depend
on the configuration and the seed.

"""

import argparse
import dataclasses
import hashlib
import json
import logging
import math
import os
import sys
import typing

import numpy
import pandas
import scipy

from . import __version__
from .config import RunConfig, load_config
from .data import (
    Dataset,
    below_threshold_subjects,
    final_year_volume,
    ingest_csv,
    k_m_curve,
    preprocess,
    write_csv,
)
from .deplab import (
    LimitExperiment,
    chi_chibar,
    conditional_limit,
    gaussian_copula_chi,
    gaussian_copula_chibar,
    gaussian_copula_sample,
    maxima_limit,
)
from .errors import (
    ConfigError,
    DataError,
    DiagnosticsError,
    InvalidParameter,
    NumericalError,
    UndefinedEstimate,
)
from .inference import Theta, Trace, diagnostics, hpdi, run_mcmc
from .predict import (
    FuturePopulationConfig,
    FutureWindow,
    default_arrival_rate,
    empirical_rates,
    posterior_predictive_at_dates,
    record_analytics_posterior,
    record_event_probs,
    simulate_future,
    simulate_truth,
)
from .utils import substream

__all__ = ["main", "EXIT_OK", "EXIT_CONFIG", "EXIT_DATA", "EXIT_NUMERICAL", "EXIT_DIAGNOSTICS"]

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERICAL = 4
EXIT_DIAGNOSTICS = 5

_MEASURE_QUANTILES = (0.9, 0.99, 0.999)
_MEASURE_DELTAS = (0.0, 1.0)
_MEASURE_RHOS = (0.0, 0.3)
_MEASURE_SIZES = (100, 1000, 10000)


# --- Helpers ----------------------------------------------------------------


def _finite(value: typing.Any) -> typing.Any:
    # JSON has no representation for non-finite numbers
    if isinstance(value, dict):
        return {str(k): _finite(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_finite(v) for v in value]
    if isinstance(value, (float, numpy.floating)):
        return float(value) if math.isfinite(value) else None
    if isinstance(value, numpy.integer):
        return int(value)
    return value


def _dump_json(payload: typing.Any, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(_finite(payload), f, indent=2, sort_keys=True, allow_nan=False)
        f.write("\n")


def _sha256(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 16), b""):
            digest.update(block)
    return digest.hexdigest()


def _write_manifest(
    path: str,
    command: str,
    config: RunConfig,
    outputs: typing.Sequence[str],
    inputs: typing.Sequence[str] = (),
) -> None:
    _dump_json(
        {
            "command": command,
            "config": config.to_dict(),
            "inputs": {os.path.basename(p): _sha256(p) for p in inputs},
            "outputs": [os.path.basename(p) for p in outputs],
            "versions": {
                "longtail": __version__,
                "numpy": numpy.__version__,
                "pandas": pandas.__version__,
                "scipy": scipy.__version__,
            },
        },
        path,
    )


def _data_path(config: RunConfig) -> str:
    if config.data is None:
        raise DataError("no input data, set `data` in the configuration or pass --data")
    if not os.path.isfile(config.data):
        raise DataError("no such file: {}".format(config.data))
    return config.data


def _load_data(config: RunConfig) -> typing.Tuple[Dataset, Dataset]:
    raw = ingest_csv(_data_path(config), sign_flip=config.sign_flip)
    return raw, preprocess(raw, config.u, config.min_obs)


def _load_trace(config: RunConfig, out: str, d: Dataset) -> typing.List[Theta]:
    path = os.path.join(out, "trace.csv")
    if not os.path.isfile(path):
        raise DataError("no trace in {!r}, run `longtail fit` first".format(out))
    trace = Trace.from_csv(path, seed=config.seed)
    if list(trace.layout.ids) != d.ids:
        raise DataError("trace subjects do not match the preprocessed dataset")
    return trace.thetas(config.u, config.v_alpha, count=config.posterior_draws)


def _to_original(config: RunConfig, value: float) -> float:
    return -value if config.sign_flip else value


# --- Subcommands ------------------------------------------------------------


def _fit(args: argparse.Namespace, config: RunConfig) -> int:
    if config.chains < 2:
        raise DiagnosticsError("at least 2 chains required, got {}".format(config.chains))
    _, d = _load_data(config)
    os.makedirs(args.out, exist_ok=True)

    def progress(chain: int, total: int) -> None:
        logger.info("chain %d of %d finished", chain + 1, config.chains)

    trace = run_mcmc(d, config.grid(), config.mcmc(), callback=progress)
    trace_path = os.path.join(args.out, "trace.csv")
    trace.to_csv(trace_path)
    summary = diagnostics(trace, config.hpdi_level)
    summary_path = os.path.join(args.out, "summary.json")
    _dump_json(summary.to_dict(), summary_path)

    outputs = [trace_path, summary_path]
    _write_manifest(os.path.join(args.out, "manifest.json"), "fit", config, outputs, [typing.cast(str, config.data)])
    return EXIT_OK


def _summarize(values: numpy.ndarray, level: float) -> typing.Dict[str, float]:
    finite = values[numpy.isfinite(values)]
    if finite.size < 2:
        return {"mean": math.nan, "median": math.nan, "hpdi_lo": math.nan, "hpdi_hi": math.nan}
    lo, hi = hpdi(finite, level)
    return {"mean": float(finite.mean()), "median": float(numpy.median(finite)), "hpdi_lo": lo, "hpdi_hi": hi}


def _predict(args: argparse.Namespace, config: RunConfig) -> int:
    raw, d = _load_data(config)
    draws = _load_trace(config, args.out, d)

    s_t = final_year_volume(raw)
    window = FutureWindow(d.t_max, config.horizon_years)
    population = FuturePopulationConfig(
        r_data=default_arrival_rate(d) if config.r_data is None else config.r_data,
        psi=config.psi,
        s_t=s_t,
        per_subject_rates=empirical_rates(d.subjects),
    )
    sample = simulate_future(
        draws,
        d,
        window,
        population,
        config.seed,
        n_replicates=config.replicates,
        below_pool=below_threshold_subjects(raw, config.u),
        cutoff_fraction=config.cutoff_fraction,
        grid_count=config.grid_count,
        jobs=config.jobs,
    )

    if config.record is None:
        r = max(s.best for s in raw.subjects if s.observations)
    else:
        r = _to_original(config, config.record)
    events = record_event_probs(sample, r)

    analytics = record_analytics_posterior(draws, r, s_t, float(d.years(d.t_max)))
    for column in ("expected_next_record", "ultimate_endpoint"):
        analytics[column] = _to_original(config, analytics[column])
    payload = events.to_dict()
    payload["record"] = _to_original(config, r)
    payload["record_analytics"] = {
        column: _summarize(analytics[column].to_numpy(dtype=float), config.hpdi_level)
        for column in analytics.columns
    }

    os.makedirs(args.out, exist_ok=True)
    predictive_path = os.path.join(args.out, "predictive.csv")
    sample.to_frame().to_csv(predictive_path, index=False, lineterminator="\n")
    events_path = os.path.join(args.out, "events.json")
    _dump_json(payload, events_path)
    outputs = [predictive_path, events_path]
    inputs = [typing.cast(str, config.data), os.path.join(args.out, "trace.csv")]
    _write_manifest(os.path.join(args.out, "predict.manifest.json"), "predict", config, outputs, inputs)
    return EXIT_OK


def _synth(args: argparse.Namespace, config: RunConfig) -> int:
    truth = simulate_truth(
        config.synth_theta(),
        config.synth_subjects,
        config.synth_obs_rate,
        config.synth_window(),
        config.seed,
    )
    dataset = truth.dataset
    if config.sign_flip:
        subjects = tuple(
            dataclasses.replace(
                s,
                observations=tuple(dataclasses.replace(obs, raw_value=-obs.value) for obs in s.observations),
            )
            for s in dataset.subjects
        )
        dataset = dataset.replace(subjects=subjects, sign_flip=True)
    folder = os.path.dirname(args.out)
    if folder:
        os.makedirs(folder, exist_ok=True)
    write_csv(dataset, args.out)
    _write_manifest("{}.manifest.json".format(args.out), "synth", config, [args.out])
    return EXIT_OK


def _measure(args: argparse.Namespace, config: RunConfig) -> int:
    rows = []
    rho, n, reps = config.measure_rho, config.measure_n, config.measure_replications

    sample = gaussian_copula_sample(rho, config.measure_pairs, substream(config.seed, "measure:copula"))
    for q in _MEASURE_QUANTILES:
        try:
            estimate = chi_chibar(sample, q)
        except UndefinedEstimate as err:
            logger.warning("skipping q=%g: %s", q, err)
            continue
        rows.append(("chi", q, estimate.chi, estimate.chi_se, gaussian_copula_chi(rho, q)))
        rows.append(("chibar", q, estimate.chibar, estimate.chibar_se, gaussian_copula_chibar(rho, q)))

    for delta in _MEASURE_DELTAS:
        for corr in _MEASURE_RHOS:
            limit = conditional_limit(delta, corr, n, reps, seed=config.seed)
            name = "conditional[delta={:g},rho={:g}]".format(delta, corr)
            rows.append((name, n, limit.mc, limit.se, limit.analytic))
            rows.append((name + ".finite_n", n, limit.mc, limit.se, limit.finite_n))
            rows.append((name + ".case_ii", n, limit.mc_case_ii, limit.se_case_ii, 0.0))

    for size in _MEASURE_SIZES:
        growing = maxima_limit(LimitExperiment(size, rho, "i", replications=reps, seed=config.seed))
        empirical, limit_cdf, se = growing.at(0.0, 0.0)
        rows.append(("maxima_cdf_00", size, empirical, se, limit_cdf))
        constant = maxima_limit(LimitExperiment(size, rho, "ii", replications=reps, seed=config.seed))
        rows.append(("maxima_ks_gumbel", size, constant.ks_marginal, math.nan, 0.0))

    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "measure.csv")
    frame = pandas.DataFrame(rows, columns=["quantity", "q_or_n", "estimate", "se", "analytic"])
    frame.to_csv(path, index=False, lineterminator="\n")
    _write_manifest(os.path.join(args.out, "manifest.json"), "measure", config, [path])
    return EXIT_OK


def _diagnose(args: argparse.Namespace, config: RunConfig) -> int:
    raw, d = _load_data(config)
    draws = _load_trace(config, args.out, d)
    check = posterior_predictive_at_dates(
        draws,
        d,
        config.predictive_samples,
        config.seed,
        grid_count=config.grid_count,
        jobs=config.jobs,
    )
    logger.info("predictive coverage at %g: %.3f", config.hpdi_level, check.coverage(config.hpdi_level))

    os.makedirs(args.out, exist_ok=True)
    check_path = os.path.join(args.out, "predictive_check.csv")
    check.to_frame(config.hpdi_level).to_csv(check_path, index=False, lineterminator="\n")
    m_max = max((len(s) for s in raw.subjects), default=0)
    curve_path = os.path.join(args.out, "k_m.csv")
    curve = pandas.DataFrame(k_m_curve(raw, config.u, m_max), columns=["m", "k_m"])
    curve.to_csv(curve_path, index=False, lineterminator="\n")

    outputs = [check_path, curve_path]
    inputs = [typing.cast(str, config.data), os.path.join(args.out, "trace.csv")]
    _write_manifest(os.path.join(args.out, "diagnose.manifest.json"), "diagnose", config, outputs, inputs)
    return EXIT_OK


# --- Entry point ------------------------------------------------------------


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="longtail",
        description="Bayesian extreme value analysis of longitudinal data.",
    )
    parser.add_argument("-V", "--version", action="version", version="%(prog)s {}".format(__version__))
    subparsers = parser.add_subparsers(dest="cmd", help="command to run", required=True)

    commands = [
        ("fit", _fit, "sample the posterior and write its summary"),
        ("predict", _predict, "simulate a future window from a fitted trace"),
        ("synth", _synth, "simulate a dataset from known parameters"),
        ("measure", _measure, "run the extremal dependence battery"),
        ("diagnose", _diagnose, "write posterior predictive checks"),
    ]
    for name, call, summary in commands:
        subparser = subparsers.add_parser(name, help=summary)
        subparser.set_defaults(call=call)
        subparser.add_argument("--config", required=True, metavar="<path>", help="configuration file")
        subparser.add_argument("--data", metavar="<path>", help="input CSV, overriding the configuration")
        subparser.add_argument("--out", required=True, metavar="<path>", help="output location")
        subparser.add_argument("--seed", type=int, metavar="<u64>", help="master seed, overriding the configuration")
    return parser


def main(argv: typing.Optional[typing.Sequence[str]] = None) -> int:
    """Run the command line interface and return its exit status."""
    args = _parser().parse_args(argv)
    try:
        config = load_config(args.config, seed=args.seed, data=args.data)
    except ConfigError as err:
        print("longtail: configuration error: {}".format(err), file=sys.stderr)
        return EXIT_CONFIG

    logging.basicConfig(
        level=config.log_level,
        stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return typing.cast(int, args.call(args, config))
    except (ConfigError, InvalidParameter) as err:
        print("longtail: configuration error: {}".format(err), file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, OSError) as err:
        print("longtail: data error: {}".format(err), file=sys.stderr)
        return EXIT_DATA
    except DiagnosticsError as err:
        print("longtail: diagnostics error: {}".format(err), file=sys.stderr)
        return EXIT_DIAGNOSTICS
    except (NumericalError, UndefinedEstimate) as err:
        print("longtail: numerical error: {}".format(err), file=sys.stderr)
        return EXIT_NUMERICAL
