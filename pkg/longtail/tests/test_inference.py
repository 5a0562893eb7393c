import dataclasses
import math
import os
import shutil
import tempfile
import unittest

import numpy
import scipy.optimize
import scipy.special
import scipy.stats

from longtail.data import DAYS_PER_YEAR, Dataset, Observation, Subject, ingest_csv, preprocess
from longtail.distributions import GpdParams, GridSpec
from longtail.errors import InvalidParameter, StartupError
from longtail.inference import (
    POPULATION_NAMES,
    McmcConfig,
    ParameterLayout,
    PosteriorModel,
    Theta,
    Trace,
    from_unconstrained,
    log_posterior,
    log_prior,
    prior_draws,
    run_mcmc,
    sample_density,
    to_unconstrained,
)
from longtail.latent import JITTER, KernelParams, PopulationEffects, SubjectEffects, correlation_matrix
from longtail.marginal import AuxBelow, MarginalParams, RateParams
from longtail.utils import Diagnostics

from .utils import TOY_CSV


def _theta(subjects=(SubjectEffects(0.3, 25.0), SubjectEffects(-0.2, 26.0)), u=0.0):
    return Theta(
        marginal=MarginalParams(GpdParams(u, 1.0, -0.2), RateParams(-0.5, 0.1)),
        subjects=subjects,
        population=PopulationEffects(gamma=0.02, nu=0.8),
        kernel=KernelParams(0.01, 1.0),
    )


def _logit_normal_logpdf(s, mean, var):
    return scipy.stats.norm(mean, math.sqrt(var)).logpdf(scipy.special.logit(s)) - math.log(s) - math.log1p(-s)


class TestLayout(unittest.TestCase):

    def setUp(self):
        self.layout = ParameterLayout(["a", "b"])

    def test_names(self):
        self.assertEqual(len(self.layout), 12)
        self.assertEqual(self.layout.names[:8], POPULATION_NAMES)
        self.assertEqual(self.layout.names[8:], ("alpha[a]", "tau[a]", "alpha[b]", "tau[b]"))
        self.assertEqual(ParameterLayout.from_names(self.layout.names).ids, ("a", "b"))
        self.assertRaises(InvalidParameter, ParameterLayout.from_names, ("xi",))
        self.assertRaises(InvalidParameter, ParameterLayout.from_names, POPULATION_NAMES + ("tau[a]", "alpha[a]"))

    def test_blocks(self):
        blocks = [block.tolist() for block in self.layout.blocks]
        self.assertEqual(blocks, [[0, 1, 2, 3], [4, 5, 6, 7], [8, 9], [10, 11]])

    def test_bijection(self):
        rng = numpy.random.default_rng(1)
        y = rng.normal(0.0, 1.5, (50, len(self.layout)))
        x = self.layout.to_constrained(y)
        self.assertTrue(numpy.all((x[:, 0] > -1) & (x[:, 0] < 0)))
        self.assertTrue(numpy.all((x[:, 7] > 0.5) & (x[:, 7] < 2.0)))
        self.assertTrue(numpy.all(x[:, [1, 3, 4, 5, 6]] > 0))
        numpy.testing.assert_allclose(self.layout.to_unconstrained(x), y, atol=1e-9)

    def test_log_det_jacobian(self):
        rng = numpy.random.default_rng(2)
        y = rng.normal(0.0, 1.0, len(self.layout))
        h = 1e-6
        expected = 0.0
        for j in range(len(y)):
            up, down = y.copy(), y.copy()
            up[j] += h
            down[j] -= h
            slope = (self.layout.to_constrained(up)[j] - self.layout.to_constrained(down)[j]) / (2 * h)
            expected += math.log(abs(slope))
        self.assertAlmostEqual(self.layout.log_det_jacobian(y), expected, places=6)
        self.assertEqual(self.layout.log_det_jacobian(numpy.stack([y, y])).shape, (2,))

    def test_theta_round_trip(self):
        theta = _theta()
        ut = to_unconstrained(theta, ["a", "b"])
        self.assertEqual(ut.names, self.layout.names)
        back = from_unconstrained(ut, 0.0)
        numpy.testing.assert_allclose(self.layout.vector(back), self.layout.vector(theta), rtol=1e-12)
        self.assertRaises(InvalidParameter, self.layout.vector, _theta(subjects=()))


class TestPrior(unittest.TestCase):

    def test_against_scipy(self):
        theta = _theta(subjects=(SubjectEffects(1.5, 23.0),))
        expected = (
            _logit_normal_logpdf(0.8, scipy.special.logit(0.8), 0.3)
            + scipy.stats.gamma(25.0, scale=1 / 25.0).logpdf(1.0)
            + scipy.stats.norm(0.0, math.sqrt(0.5)).logpdf(-0.5)
            + scipy.stats.gamma(0.1, scale=10.0).logpdf(0.1)
            + scipy.stats.gamma(0.5, scale=2.0).logpdf(0.02)
            + scipy.stats.gamma(1.0, scale=1.0).logpdf(0.8)
            + scipy.stats.gamma(0.5, scale=2.0).logpdf(0.01)
            + _logit_normal_logpdf(1 / 3, scipy.special.logit(1 / 3), 2.0) - math.log(1.5)
            + scipy.stats.norm(0.0, 6.0).logpdf(1.5)
            + scipy.stats.norm(25.0, 2.5).logpdf(23.0)
        )
        self.assertAlmostEqual(log_prior(theta), expected, places=10)

    def test_support(self):
        theta = _theta()
        edge = Theta(MarginalParams(GpdParams(0.0, 1.0, 0.0), theta.marginal.rate), (), theta.population, theta.kernel)
        self.assertEqual(log_prior(edge), -math.inf)
        edge = Theta(MarginalParams(GpdParams(0.0, 1.0, -1.0), theta.marginal.rate), (), theta.population, theta.kernel)
        self.assertEqual(log_prior(edge), -math.inf)
        flat = Theta(theta.marginal, (), PopulationEffects(0.0, 0.8), theta.kernel)
        self.assertEqual(log_prior(flat), -math.inf)

    def test_sigma_u_moments(self):
        draws = prior_draws(numpy.random.default_rng(3), 1000000)
        self.assertAlmostEqual(draws["sigma_u"].mean(), 1.0, delta=0.002)
        self.assertAlmostEqual(draws["sigma_u"].std(), 0.2, delta=0.002)
        self.assertTrue(numpy.all((draws["xi"] > -1) & (draws["xi"] < 0)))
        self.assertTrue(numpy.all((draws["kappa1"] > 0.5) & (draws["kappa1"] < 2)))

    def test_prior_predictive_rate(self):
        draws = prior_draws(numpy.random.default_rng(4), 1000000)
        rate = scipy.special.expit(draws["beta0"])
        self.assertGreaterEqual(numpy.mean((rate > 0.1) & (rate < 0.9)), 0.9)


class TestLogPosterior(unittest.TestCase):

    def setUp(self):
        self.subjects = (
            Subject("a", -9000, [Observation(0, 0.4, 0.4), Observation(200, -0.5, -0.5)]),
            Subject("b", -8000, [Observation(100, 1.1, 1.1)]),
        )
        self.dataset = Dataset(self.subjects, threshold_u=0.0, origin=0)
        self.theta = _theta()
        self.aux = AuxBelow([0.37])

    def _composed(self):
        # change of variables written out with scipy distributions
        mp, pe, kp = self.theta.marginal, self.theta.population, self.theta.kernel
        gpd = scipy.stats.genpareto(mp.xi, loc=mp.u, scale=mp.sigma_u)
        obs = [(s, se, o) for s, se in zip(self.subjects, self.theta.subjects) for o in s.observations]
        mu = numpy.array([
            se.alpha - pe.gamma * ((o.time - s.birth_date) / DAYS_PER_YEAR - se.tau) ** 2
            for s, se, o in obs
        ])
        mixture_cdf = lambda z: scipy.stats.norm(mu, pe.nu).cdf(z).mean()  # noqa: E731
        mixture_pdf = lambda z: scipy.stats.norm(mu, pe.nu).pdf(z).mean()  # noqa: E731

        z, log_j = [], 0.0
        aux = iter(self.aux.v)
        for s, se, o in obs:
            t = o.time / DAYS_PER_YEAR
            rate = scipy.special.expit(mp.rate.beta0 + mp.rate.beta1 * t)
            if o.value > mp.u:
                p = 1 - rate * gpd.sf(o.value)
                density = rate * gpd.pdf(o.value)
            else:
                p = (1 - rate) * next(aux)
                density = 1 - rate
            zi = scipy.optimize.brentq(lambda q: mixture_cdf(q) - p, -30, 30, xtol=1e-14)
            z.append(zi)
            log_j += math.log(density) - math.log(mixture_pdf(zi))

        log_latent, start = 0.0, 0
        for s, se in zip(self.subjects, self.theta.subjects):
            stop = start + len(s)
            cov = pe.nu ** 2 * correlation_matrix(kp, s.times, JITTER)
            log_latent += scipy.stats.multivariate_normal(mu[start:stop], cov).logpdf(z[start:stop])
            start = stop
        return log_prior(self.theta) + log_latent + log_j

    def test_exact_oracle(self):
        value = log_posterior(self.theta, self.aux, self.dataset, exact=True)
        self.assertAlmostEqual(value, self._composed(), delta=1e-6)

    def test_fine_grid(self):
        grid = GridSpec(-12.0, 12.0, 240001)
        value = log_posterior(self.theta, self.aux, self.dataset, grid)
        self.assertAlmostEqual(value, self._composed(), delta=1e-2)

    def test_subject_order(self):
        value = log_posterior(self.theta, self.aux, self.dataset, exact=True)
        swapped = Dataset(self.subjects[::-1], threshold_u=0.0, origin=0)
        theta = Theta(self.theta.marginal, self.theta.subjects[::-1], self.theta.population, self.theta.kernel)
        self.assertAlmostEqual(log_posterior(theta, self.aux, swapped, exact=True), value, places=9)
        self.assertEqual(log_posterior(self.theta, self.aux, self.dataset, exact=True), value)

    def test_empty_dataset(self):
        theta = _theta(subjects=())
        value = log_posterior(theta, AuxBelow([]), Dataset([]))
        self.assertEqual(value, log_prior(theta))

    def test_all_censored(self):
        d = self.dataset.replace(threshold_u=5.0)
        theta = Theta(
            MarginalParams(GpdParams(5.0, 1.0, -0.2), self.theta.marginal.rate),
            self.theta.subjects,
            self.theta.population,
            self.theta.kernel,
        )
        value = log_posterior(theta, AuxBelow([0.2, 0.5, 0.8]), d)
        self.assertTrue(math.isfinite(value))

    def test_beyond_endpoint(self):
        diagnostics = Diagnostics()
        theta = Theta(
            MarginalParams(GpdParams(0.0, 0.1, -0.5), self.theta.marginal.rate),
            self.theta.subjects,
            self.theta.population,
            self.theta.kernel,
        )
        value = log_posterior(theta, self.aux, self.dataset, diagnostics=diagnostics)
        self.assertEqual(value, -math.inf)
        self.assertEqual(diagnostics["DomainError"], 1)

    def test_aux_length(self):
        self.assertRaises(InvalidParameter, log_posterior, self.theta, AuxBelow([0.1, 0.2]), self.dataset)

    def test_averaged_estimates(self):
        model = PosteriorModel(self.dataset, n_aux=2)
        x = model.layout.vector(self.theta)
        v = numpy.array([[0.2], [0.7]])
        single = [model.log_likelihood(x, row[None, :]) for row in v]
        expected = scipy.special.logsumexp(single) - math.log(2)
        self.assertAlmostEqual(model.log_likelihood(x, v), expected, places=10)
        self.assertEqual(model.draw_aux(numpy.random.default_rng(0)).shape, (2, 1))


class TestSampleDensity(unittest.TestCase):

    def test_standard_normal(self):
        draws = sample_density(lambda x: -0.5 * float(x[0] ** 2), [0.0], 100000, seed=7)
        self.assertEqual(draws.shape, (100000, 1))
        self.assertAlmostEqual(draws.mean(), 0.0, delta=0.02)
        self.assertAlmostEqual(draws.var(), 1.0, delta=0.05)

    def test_correlated_gaussian(self):
        cov = numpy.array([[1.0, 0.8], [0.8, 2.0]])
        precision = numpy.linalg.inv(cov)
        logpdf = lambda x: -0.5 * float(x.dot(precision).dot(x))  # noqa: E731
        draws = sample_density(logpdf, [0.0, 0.0], 100000, seed=8)
        error = numpy.linalg.norm(numpy.cov(draws.T) - cov) / numpy.linalg.norm(cov)
        self.assertLess(error, 0.05)

    def test_bad_start(self):
        self.assertRaises(InvalidParameter, sample_density, lambda x: -math.inf, [0.0], 10)


class TestMcmcConfig(unittest.TestCase):

    def test_validation(self):
        self.assertRaises(InvalidParameter, McmcConfig, chains=0)
        self.assertRaises(InvalidParameter, McmcConfig, iterations=10, burn_in=10)
        self.assertRaises(InvalidParameter, McmcConfig, thin=0)
        self.assertRaises(InvalidParameter, McmcConfig, target_accept=1.0)
        self.assertRaises(InvalidParameter, McmcConfig, seed=-1)


class TestRunMcmc(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        cls.dataset = preprocess(ingest_csv(TOY_CSV, sign_flip=True), -61.125, 7)
        cls.config = McmcConfig(chains=2, iterations=60, burn_in=20, thin=2, seed=11, jobs=1)

    def setUp(self):
        self.folder = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.folder)

    def test_shapes(self):
        trace = run_mcmc(self.dataset, config=self.config)
        self.assertEqual(len(trace.chains), 2)
        self.assertEqual(trace.chains[0].shape, (20, 12))
        self.assertEqual(trace.iterations.tolist(), list(range(20, 60, 2)))
        self.assertEqual(trace.layout.ids, ("a", "b"))
        self.assertEqual(set(trace.acceptance[0]), {"marginal", "population", "subjects"})

    def test_reproducible(self):
        first = run_mcmc(self.dataset, config=self.config)
        second = run_mcmc(self.dataset, config=dataclasses.replace(self.config, jobs=2))
        for c1, c2 in zip(first.chains, second.chains):
            numpy.testing.assert_array_equal(c1, c2)
        self.assertFalse(numpy.array_equal(first.chains[0], first.chains[1]))

    def test_callback(self):
        calls = []
        run_mcmc(self.dataset, config=self.config, callback=lambda i, n: calls.append(i))
        self.assertEqual(sorted(calls), [0, 1])

    def test_startup_error(self):
        config = McmcConfig(chains=1, iterations=10, burn_in=0, seed=1, max_restarts=0)
        self.assertRaises(StartupError, run_mcmc, self.dataset, config=config)

    def test_csv(self):
        trace = run_mcmc(self.dataset, config=self.config)
        path = os.path.join(self.folder, "trace.csv")
        trace.to_csv(path)
        loaded = Trace.from_csv(path, seed=11)
        self.assertEqual(loaded.names, trace.names)
        self.assertEqual(loaded.iterations.tolist(), trace.iterations.tolist())
        for c1, c2 in zip(loaded.constrained(), trace.constrained()):
            numpy.testing.assert_allclose(c1, c2, rtol=1e-12)
        thetas = loaded.thetas(-61.125, count=5)
        self.assertEqual(len(thetas), 5)
        self.assertEqual(len(thetas[0].subjects), 2)
        self.assertEqual(thetas[0].marginal.u, -61.125)

    def test_zero_data_is_prior(self):
        config = McmcConfig(chains=2, iterations=6000, burn_in=1000, thin=1, seed=5, jobs=1)
        pooled = run_mcmc(Dataset([]), config=config).pooled()
        self.assertEqual(pooled.shape[1], 8)
        self.assertAlmostEqual(pooled[:, 1].mean(), 1.0, delta=0.05)
        self.assertAlmostEqual(pooled[:, 2].mean(), 0.0, delta=0.2)
        self.assertAlmostEqual(pooled[:, 5].mean(), 1.0, delta=0.3)
