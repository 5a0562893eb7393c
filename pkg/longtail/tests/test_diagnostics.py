import json
import math
import unittest

import numpy

from longtail.errors import DiagnosticsError, InvalidParameter
from longtail.inference import (
    ParameterLayout,
    Trace,
    diagnostics,
    effective_sample_size,
    hpdi,
    split_rhat,
)


def _ar1(rng, phi, n, chains):
    x = numpy.empty((chains, n))
    x[:, 0] = rng.normal(0.0, 1.0 / math.sqrt(1 - phi ** 2), chains)
    for t in range(1, n):
        x[:, t] = phi * x[:, t - 1] + rng.normal(0.0, 1.0, chains)
    return x


class TestRhat(unittest.TestCase):

    def test_mixed(self):
        rng = numpy.random.default_rng(0)
        chains = rng.normal(0.0, 1.0, (4, 2000))
        self.assertAlmostEqual(split_rhat(chains), 1.0, delta=0.01)

    def test_trend(self):
        # a drift within chains is caught by splitting them in halves
        chains = numpy.tile(numpy.linspace(0.0, 10.0, 1000), (4, 1))
        self.assertGreater(split_rhat(chains), 1.5)

    def test_constant(self):
        self.assertEqual(split_rhat(numpy.ones((3, 100))), 1.0)
        chains = numpy.ones((2, 100))
        chains[1] = 2.0
        self.assertEqual(split_rhat(chains), math.inf)

    def test_duplicated_chains(self):
        rng = numpy.random.default_rng(3)
        first = rng.normal(0.0, 1.0, 1000000)
        chain = numpy.concatenate([first, rng.permutation(first)])
        self.assertAlmostEqual(split_rhat(numpy.stack([chain, chain])), 1.0, delta=1e-6)
        short = rng.normal(0.0, 1.0, 1000)
        self.assertAlmostEqual(split_rhat(numpy.tile(short, (4, 1))), 1.0, delta=0.01)


class TestEffectiveSampleSize(unittest.TestCase):

    def test_independent(self):
        rng = numpy.random.default_rng(1)
        ess = effective_sample_size(rng.normal(0.0, 1.0, (4, 1000)))
        self.assertGreater(ess, 3000)
        self.assertLess(ess, 5500)

    def test_autocorrelated(self):
        rng = numpy.random.default_rng(2)
        phi = 0.9
        ess = effective_sample_size(_ar1(rng, phi, 5000, 4))
        expected = 20000 * (1 - phi) / (1 + phi)
        self.assertAlmostEqual(ess / expected, 1.0, delta=0.25)

    def test_constant(self):
        self.assertEqual(effective_sample_size(numpy.zeros((2, 50))), 100.0)


class TestHpdi(unittest.TestCase):

    def test_skewed(self):
        rng = numpy.random.default_rng(3)
        samples = rng.exponential(1.0, 200000)
        lo, hi = hpdi(samples, 0.9)
        self.assertLess(lo, 0.001)
        self.assertAlmostEqual(hi, -math.log(0.1), delta=0.03)

    def test_symmetric(self):
        rng = numpy.random.default_rng(4)
        lo, hi = hpdi(rng.normal(0.0, 1.0, 200000), 0.95)
        self.assertAlmostEqual(lo, -1.96, delta=0.03)
        self.assertAlmostEqual(hi, 1.96, delta=0.03)
        self.assertLess(lo, hi)

    def test_errors(self):
        self.assertRaises(InvalidParameter, hpdi, [1.0, 2.0], 1.0)
        self.assertRaises(DiagnosticsError, hpdi, [1.0], 0.5)


class TestDiagnostics(unittest.TestCase):

    def setUp(self):
        rng = numpy.random.default_rng(5)
        self.names = ParameterLayout([]).names
        self.chains = [rng.normal(0.0, 0.3, (200, len(self.names))) for _ in range(3)]

    def test_summary(self):
        trace = Trace(self.names, self.chains, numpy.arange(200))
        summary = diagnostics(trace, 0.9)
        self.assertEqual(list(summary.parameters), list(self.names))
        self.assertEqual(summary.level, 0.9)
        for name in self.names:
            p = summary[name]
            self.assertLess(p.hpdi_lo, p.hpdi_hi)
            self.assertLess(p.rhat, 1.05)
            self.assertGreater(p.ess, 100)
        # sigma_u is stored on the log scale
        self.assertAlmostEqual(summary["sigma_u"].mean, math.exp(0.045), delta=0.05)
        payload = json.loads(summary.to_json())
        self.assertEqual(set(payload["xi"]), {"mean", "sd", "hpdi_lo", "hpdi_hi", "rhat", "ess"})

    def test_single_chain(self):
        trace = Trace(self.names, self.chains[:1], numpy.arange(200))
        with self.assertRaises(DiagnosticsError) as ctx:
            diagnostics(trace)
        self.assertEqual(str(ctx.exception), "at least 2 chains required, got 1")

    def test_unequal_lengths(self):
        trace = Trace(self.names, [self.chains[0], self.chains[1][:150]], numpy.arange(200))
        self.assertRaises(DiagnosticsError, diagnostics, trace)

    def test_too_short(self):
        trace = Trace(self.names, [c[:3] for c in self.chains], numpy.arange(3))
        self.assertRaises(DiagnosticsError, diagnostics, trace)

    def test_non_finite_as_null(self):
        chains = [numpy.zeros((10, len(self.names))) for _ in range(2)]
        chains[1][:, 2] = 1.0
        summary = diagnostics(Trace(self.names, chains, numpy.arange(10)))
        self.assertIsNone(summary.to_dict()["beta0"]["rhat"])
