import math
import unittest

import numpy

from longtail.data import Observation
from longtail.distributions import (
    GpdParams,
    GridSpec,
    MixtureMarginal,
    gpd_sf,
    max_cdf_gap,
    mixture_cdf,
    mixture_grid,
    mixture_pdf,
)
from longtail.errors import DomainError, InvalidParameter
from longtail.marginal import (
    DENSITY_FLOOR,
    AuxBelow,
    MarginalParams,
    RateParams,
    floor_density,
    fx_cdf,
    fx_quantile,
    jacobian_above,
    jacobian_below,
    lambda_u,
    latent_threshold,
    log1m_lambda_u,
    log_jacobian_above,
    log_lambda_u,
    log_tail,
    to_latent,
    to_latent_exact,
)
from longtail.utils import Diagnostics


def _marginal(xi=-0.2, sigma_u=1.0, beta0=-1.0, beta1=0.1, u=-61.125):
    return MarginalParams(GpdParams(u, sigma_u, xi), RateParams(beta0, beta1))


class TestRate(unittest.TestCase):

    def test_logit_linear(self):
        rate = RateParams(-1.0, 0.5)
        self.assertAlmostEqual(lambda_u(rate, 2.0), 0.5, places=15)
        self.assertAlmostEqual(lambda_u(rate, 0.0), 1 / (1 + math.e), places=15)
        numpy.testing.assert_allclose(lambda_u(rate, numpy.array([0.0, 2.0])), [1 / (1 + math.e), 0.5])

    def test_logs(self):
        rate = RateParams(0.3, -0.2)
        t = numpy.linspace(0, 10, 11)
        numpy.testing.assert_allclose(log_lambda_u(rate, t), numpy.log(lambda_u(rate, t)), rtol=1e-13)
        numpy.testing.assert_allclose(log1m_lambda_u(rate, t), numpy.log1p(-lambda_u(rate, t)), rtol=1e-13)

    def test_no_underflow(self):
        rate = RateParams(800.0, 0.0)
        self.assertEqual(log1m_lambda_u(rate, 0.0), -800.0)
        self.assertEqual(log_lambda_u(RateParams(-800.0, 0.0), 0.0), -800.0)


class TestTail(unittest.TestCase):

    def test_log_tail(self):
        gpd = GpdParams(0.0, 1.0, -0.5)
        x = numpy.array([0.0, 0.5, 1.9, 2.0, 3.0])
        expected = [math.log(gpd_sf(gpd, v)) if v < 2.0 else -math.inf for v in x]
        numpy.testing.assert_allclose(log_tail(gpd, x), expected, rtol=1e-13)
        self.assertEqual(log_tail(GpdParams(0.0, 2.0, 0.0), 3.0), -1.5)

    def test_fx_cdf(self):
        mp = _marginal()
        t = 1.5
        rate = lambda_u(mp.rate, t)
        self.assertAlmostEqual(fx_cdf(mp, mp.u + 1e-12, t), 1.0 - rate, places=10)
        x = mp.u + 0.7
        self.assertAlmostEqual(fx_cdf(mp, x, t), 1.0 - rate * gpd_sf(mp.gpd, x), places=15)
        self.assertEqual(fx_cdf(mp, mp.gpd.endpoint + 1.0, t), 1.0)
        self.assertRaises(DomainError, fx_cdf, mp, mp.u, t)
        self.assertRaises(DomainError, fx_cdf, mp, mp.u - 1.0, t)

    def test_fx_quantile(self):
        mp = _marginal(xi=0.1)
        rate = lambda_u(mp.rate, 2.0)
        for p in (1 - rate + 1e-6, 0.9, 0.999):
            self.assertAlmostEqual(fx_cdf(mp, fx_quantile(mp, p, 2.0), 2.0), p, places=12)
        self.assertRaises(DomainError, fx_quantile, mp, 0.5 * (1 - rate), 2.0)
        self.assertRaises(DomainError, fx_quantile, mp, 1.0, 2.0)

    def test_aux_below(self):
        aux = AuxBelow([0.2, 0.7])
        self.assertEqual(len(aux), 2)
        self.assertRaises(InvalidParameter, AuxBelow, [0.0])
        self.assertRaises(InvalidParameter, AuxBelow, [0.5, 1.0])
        with self.assertRaises(ValueError):
            aux.v[0] = 0.5


class TestTransform(unittest.TestCase):

    def setUp(self):
        self.mixture = MixtureMarginal([-2.0, 0.0, 1.5, 4.0], [1.0, 0.8, 1.2, 0.9])
        self.grid = GridSpec.covering(self.mixture, 2001, width=8.0)
        self.gap = max_cdf_gap(mixture_grid(self.mixture, self.grid)[0])

    def test_fidelity(self):
        rng = numpy.random.default_rng(3)
        for _ in range(2000):
            mp = _marginal(
                xi=rng.uniform(-0.5, 0.5),
                sigma_u=rng.uniform(0.3, 3.0),
                beta0=rng.uniform(-3.0, 1.0),
                beta1=rng.uniform(0.0, 0.3),
            )
            t = rng.uniform(0.0, 10.0)
            top = min(mp.gpd.endpoint, mp.u + 10 * mp.sigma_u)
            x = mp.u + rng.uniform(0.01, 0.9) * (top - mp.u)
            p = fx_cdf(mp, x, t)
            if p >= 1.0 - 1e-10:
                continue
            z = to_latent(mp, self.mixture, self.grid, x, t)
            self.assertLessEqual(abs(mixture_cdf(self.mixture, z) - p), self.gap)

    def test_observation_input(self):
        mp = _marginal()
        x = mp.u + 0.5
        z1 = to_latent(mp, self.mixture, self.grid, x, 1.0)
        z2 = to_latent(mp, self.mixture, self.grid, Observation(0, x, -x), 1.0)
        self.assertEqual(z1, z2)

    def test_censored_vectorized(self):
        mp = _marginal()
        aux = AuxBelow([0.1, 0.5, 0.9])
        t = numpy.array([0.0, 1.0, 2.0])
        z = to_latent(mp, self.mixture, self.grid, aux, t)
        self.assertEqual(z.shape, (3,))
        z_u = latent_threshold(mp, self.mixture, self.grid, t)
        self.assertTrue(numpy.all(z <= z_u))
        p = (1 - lambda_u(mp.rate, t)) * aux.v
        self.assertLessEqual(float(numpy.max(numpy.abs(mixture_cdf(self.mixture, z) - p))), self.gap)

    def test_exceedances_above_latent_threshold(self):
        mp = _marginal()
        z_u = latent_threshold(mp, self.mixture, None, 3.0)
        z = to_latent_exact(mp, self.mixture, mp.u + 0.01, 3.0)
        self.assertGreater(z, z_u - 5e-2)

    def test_jacobian_above(self):
        rng = numpy.random.default_rng(4)
        for _ in range(20):
            mp = _marginal(xi=rng.uniform(-0.4, 0.4), sigma_u=rng.uniform(0.5, 2.0), beta0=rng.uniform(-2.0, 0.0))
            t = rng.uniform(0.0, 5.0)
            x = mp.u + rng.uniform(0.1, 1.0) * mp.sigma_u
            z = to_latent_exact(mp, self.mixture, x, t)
            h = 1e-5
            slope = (to_latent_exact(mp, self.mixture, x + h, t) - to_latent_exact(mp, self.mixture, x - h, t)) / (2 * h)
            self.assertAlmostEqual(jacobian_above(mp, self.mixture, x, t, z) / slope, 1.0, delta=1e-5)
        self.assertRaises(DomainError, jacobian_above, mp, self.mixture, mp.u, t, 0.0)

    def test_jacobian_below(self):
        mp = _marginal()
        for v in (0.05, 0.4, 0.8):
            z = to_latent_exact(mp, self.mixture, AuxBelow([v]), 2.0)
            h = 1e-6
            up = to_latent_exact(mp, self.mixture, AuxBelow([v + h]), 2.0)
            down = to_latent_exact(mp, self.mixture, AuxBelow([v - h]), 2.0)
            slope = (up - down) / (2 * h)
            self.assertAlmostEqual(jacobian_below(mp, self.mixture, v, 2.0, z) / slope, 1.0, delta=1e-5)
        self.assertRaises(DomainError, jacobian_below, mp, self.mixture, 1.0, 2.0, 0.0)

    def test_log_jacobian_vectorized(self):
        mp = _marginal()
        x = numpy.array([mp.u + 0.2, mp.u + 1.0])
        t = numpy.array([0.5, 3.0])
        z = numpy.array([to_latent_exact(mp, self.mixture, xi, ti) for xi, ti in zip(x, t)])
        log_g = numpy.log(mixture_pdf(self.mixture, z))
        expected = [math.log(jacobian_above(mp, self.mixture, xi, ti, zi)) for xi, ti, zi in zip(x, t, z)]
        numpy.testing.assert_allclose(log_jacobian_above(mp, x, t, log_g), expected, rtol=1e-12)


class TestFloorDensity(unittest.TestCase):

    def test_floor(self):
        diagnostics = Diagnostics()
        out = floor_density(numpy.array([0.0, 1e-310, 0.5]), diagnostics)
        numpy.testing.assert_array_equal(out, [DENSITY_FLOOR, DENSITY_FLOOR, 0.5])
        self.assertEqual(diagnostics["floored_density"], 2)
        self.assertEqual(floor_density(0.25), 0.25)
