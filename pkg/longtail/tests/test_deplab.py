import math
import unittest

import numpy
import scipy.stats

from longtail.distributions import bvn_cdf
from longtail.errors import InvalidParameter, UndefinedEstimate
from longtail.deplab import (
    LimitExperiment,
    PairSample,
    chi_chibar,
    chi_max_exact,
    conditional_limit,
    gaussian_copula_chi,
    gaussian_copula_chibar,
    gaussian_copula_sample,
    lag_measures,
    lag_testbed,
    logistic_chi,
    maxima_limit,
    norming_constants,
)


class TestPairSample(unittest.TestCase):

    def test_validation(self):
        self.assertRaises(InvalidParameter, PairSample, [0.5, 0.5], [0.5])
        self.assertRaises(InvalidParameter, PairSample, [0.0], [0.5])
        self.assertRaises(InvalidParameter, PairSample, [0.5], [1.0])
        sample = PairSample([0.1, 0.2], [0.3, 0.4])
        self.assertEqual(sample.count, 2)
        self.assertEqual(sample.swapped().u1.tolist(), [0.3, 0.4])


class TestChiChibar(unittest.TestCase):

    def test_independent(self):
        rng = numpy.random.default_rng(0)
        sample = PairSample(rng.random(200000), rng.random(200000))
        est = chi_chibar(sample, 0.95)
        self.assertAlmostEqual(est.chi, 0.05, delta=4 * est.chi_se)
        self.assertAlmostEqual(est.chibar, 0.0, delta=4 * est.chibar_se)

    def test_gaussian_copula(self):
        rng = numpy.random.default_rng(1)
        sample = gaussian_copula_sample(0.5, 500000, rng)
        for q in (0.9, 0.99):
            est = chi_chibar(sample, q)
            self.assertEqual(est.q, q)
            self.assertAlmostEqual(est.chi, gaussian_copula_chi(0.5, q), delta=4 * est.chi_se)
            self.assertAlmostEqual(est.chibar, gaussian_copula_chibar(0.5, q), delta=4 * est.chibar_se)

    def test_chibar_far_tail(self):
        rng = numpy.random.default_rng(2)
        sample = gaussian_copula_sample(0.5, 10000000, rng)
        est = chi_chibar(sample, 0.999)
        self.assertAlmostEqual(est.chibar, gaussian_copula_chibar(0.5, 0.999), delta=0.05)

    def test_symmetric(self):
        rng = numpy.random.default_rng(3)
        sample = gaussian_copula_sample(0.3, 100000, rng)
        est, swapped = chi_chibar(sample, 0.9), chi_chibar(sample.swapped(), 0.9)
        self.assertAlmostEqual(est.chi, swapped.chi, places=12)
        self.assertAlmostEqual(est.chibar, swapped.chibar, places=12)

    def test_errors(self):
        u = numpy.linspace(0.001, 0.999, 999)
        self.assertRaises(InvalidParameter, chi_chibar, PairSample(u, u), 1.0)
        self.assertRaises(InvalidParameter, chi_chibar, PairSample(u, u), 0.99)
        with self.assertRaises(UndefinedEstimate):
            chi_chibar(PairSample(u, u[::-1]), 0.9)
        self.assertRaises(InvalidParameter, gaussian_copula_sample, 1.0, 10, numpy.random.default_rng(0))

    def test_logistic(self):
        self.assertEqual(logistic_chi(1.0), 0.0)
        self.assertAlmostEqual(logistic_chi(0.5), 2.0 - math.sqrt(2.0), places=15)
        self.assertRaises(InvalidParameter, logistic_chi, 0.0)


class TestLagMeasures(unittest.TestCase):

    def test_single_subject(self):
        rng = numpy.random.default_rng(4)
        measures = lag_measures(lag_testbed([0.0], 0.5, 200000, rng), 0.95, rng)
        self.assertEqual(len(measures.subjects), 1)
        est = measures.subjects[0]
        self.assertAlmostEqual(est.chi, gaussian_copula_chi(0.5, 0.95), delta=4 * est.chi_se)
        self.assertAlmostEqual(measures.maximum.chi, est.chi, places=12)

    def test_shifted_subject(self):
        rng = numpy.random.default_rng(5)
        alphas = [0.0] * 99 + [3.0]
        measures = lag_measures(lag_testbed(alphas, 0.5, 50000, rng), 0.99, rng)
        est = measures.maximum
        self.assertAlmostEqual(est.chi, chi_max_exact(alphas, 0.5, 0.99), delta=3 * est.chi_se)
        self.assertTrue(math.isfinite(measures.random.chi))

    def test_chi_max_exact(self):
        self.assertAlmostEqual(chi_max_exact([0.0], 0.3, 0.9), gaussian_copula_chi(0.3, 0.9), places=9)
        self.assertRaises(InvalidParameter, chi_max_exact, [0.0], 0.3, 1.0)

    def test_testbed_errors(self):
        rng = numpy.random.default_rng(0)
        self.assertRaises(InvalidParameter, lag_testbed, [], 0.5, 10, rng)
        self.assertRaises(InvalidParameter, lag_testbed, [0.0], -1.0, 10, rng)


class TestLimitExperiment(unittest.TestCase):

    def test_validation(self):
        self.assertRaises(InvalidParameter, LimitExperiment, 1, 0.5)
        self.assertRaises(InvalidParameter, LimitExperiment, 10, 1.0)
        self.assertRaises(InvalidParameter, LimitExperiment, 10, 0.5, case="iii")
        self.assertRaises(InvalidParameter, LimitExperiment, 10, 0.5, replications=0)

    def test_alpha_n(self):
        root = math.sqrt(2 * math.log(1000))
        self.assertAlmostEqual(LimitExperiment(1000, 0.5, delta=1.0).alpha_n, root - 1.0)
        self.assertAlmostEqual(LimitExperiment(1000, 0.5).alpha_n, root * math.log(math.log(1000)))
        self.assertEqual(LimitExperiment(1000, 0.5, "ii", alpha=0.7).alpha_n, 0.7)

    def test_maximum_of_others(self):
        exp = LimitExperiment(50, 0.5, replications=100000, seed=3)
        o0, o1, y0, y1 = exp.simulate()
        expected = scipy.stats.norm.cdf(2.0) ** 49
        se = math.sqrt(expected * (1 - expected) / exp.replications)
        self.assertAlmostEqual(numpy.mean(o0 <= 2.0), expected, delta=4 * se)
        self.assertAlmostEqual(numpy.corrcoef(y0, y1)[0, 1], 0.5, delta=0.01)
        self.assertAlmostEqual(abs(numpy.corrcoef(o0, o1)[0, 1]), 0.0, delta=0.015)

    def test_common_random_numbers(self):
        small = LimitExperiment(100, 0.5, "ii", replications=1000, seed=4).simulate()
        large = LimitExperiment(10000, 0.5, "ii", replications=1000, seed=4).simulate()
        numpy.testing.assert_array_equal(small[2], large[2])
        self.assertTrue(numpy.all(large[0] > small[0]))

    def test_norming_constants(self):
        a, b = norming_constants(1000)
        self.assertAlmostEqual(a, 1 / math.sqrt(2 * math.log(1000)))
        self.assertRaises(InvalidParameter, norming_constants, 1)


class TestMaximaLimit(unittest.TestCase):

    def test_case_i(self):
        result = maxima_limit(LimitExperiment(10000, 0.5, "i", replications=100000, seed=6))
        empirical, limit, se = result.at(0.0, 0.0)
        self.assertAlmostEqual(limit, 1 / 3, places=12)
        self.assertAlmostEqual(empirical, 1 / 3, delta=3 * se)
        self.assertEqual(result.empirical.shape, (9, 9))

    def test_case_ii(self):
        distances = [
            maxima_limit(LimitExperiment(n, 0.5, "ii", replications=100000, seed=7)).ks_marginal
            for n in (100, 1000, 10000)
        ]
        self.assertGreater(distances[0], distances[1])
        self.assertGreater(distances[1], distances[2])

    def test_custom_points(self):
        result = maxima_limit(LimitExperiment(1000, 0.2, replications=10000), points=[-1.0, 1.0])
        self.assertAlmostEqual(result.limit[0, 1], bvn_cdf(-1.0, 1.0, 0.2), places=12)
        self.assertLessEqual(result.sup_distance, 1.0)

    def test_replications(self):
        self.assertRaises(InvalidParameter, maxima_limit, LimitExperiment(100, 0.5, replications=9999))


class TestConditionalLimit(unittest.TestCase):

    def test_closed_form(self):
        limit = conditional_limit(1.0, 0.0, 10000, 100000, seed=8)
        self.assertAlmostEqual(limit.analytic, 1 - scipy.stats.norm.cdf(1.0), places=12)

    def test_monte_carlo(self):
        for delta in (0.0, 1.0):
            for rho in (0.0, 0.3):
                limit = conditional_limit(delta, rho, 10000, 100000, seed=9)
                self.assertAlmostEqual(limit.mc, limit.finite_n, delta=4 * limit.se)
                self.assertLess(limit.mc_case_ii, limit.mc)

    def test_same_subject(self):
        limit = conditional_limit(0.0, 0.5, 10000, 100000, seed=10)
        self.assertGreater(limit.same_subject, 0.9)
        self.assertLess(limit.same_subject_case_ii, 0.05)
