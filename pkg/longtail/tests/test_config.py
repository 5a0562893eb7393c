import os
import shutil
import tempfile
import unittest

from longtail.config import RunConfig, load_config, parse_config
from longtail.errors import ConfigError


class TestParseConfig(unittest.TestCase):

    def test_defaults(self):
        config = parse_config("seed = 1")
        self.assertEqual(config, RunConfig(seed=1))
        self.assertEqual(config.chains, 40)
        self.assertEqual(config.iterations, 20000)
        self.assertEqual(config.burn_in, 10000)
        self.assertEqual(config.min_obs, 7)
        self.assertTrue(config.sign_flip)
        self.assertEqual(config.u, 61.125)
        self.assertIsNone(config.grid())

    def test_values(self):
        text = (
            "# a short run\n"
            "seed = 42\n"
            "data = results.csv\n"
            "sign_flip = no\n"
            "threshold = 2.5   # original units\n"
            "chains = 4\n"
            "iterations = 400\n"
            "burn_in = 200\n"
            "grid_lo = -10\n"
            "grid_hi = 10\n"
            "grid_count = 501\n"
            "r_data = auto\n"
            "synth_start = 2012-06-01\n"
            "log_level = info\n"
        )
        config = parse_config(text)
        self.assertEqual(config.seed, 42)
        self.assertEqual(config.data, "results.csv")
        self.assertFalse(config.sign_flip)
        self.assertEqual(config.u, 2.5)
        self.assertIsNone(config.r_data)
        self.assertEqual(config.log_level, "INFO")
        grid = config.grid()
        self.assertEqual((grid.lo, grid.hi, grid.count), (-10.0, 10.0, 501))
        mcmc = config.mcmc()
        self.assertEqual((mcmc.chains, mcmc.iterations, mcmc.burn_in, mcmc.seed), (4, 400, 200, 42))

    def test_overrides(self):
        config = parse_config("seed = 1\nchains = 3", seed=9, data="other.csv", chains=None)
        self.assertEqual(config.seed, 9)
        self.assertEqual(config.data, "other.csv")
        self.assertEqual(config.chains, 3)
        self.assertEqual(parse_config("", seed=5).seed, 5)

    def test_missing_seed(self):
        with self.assertRaises(ConfigError) as ctx:
            parse_config("chains = 2")
        self.assertEqual(ctx.exception.key, "seed")

    def test_unknown_key(self):
        with self.assertRaises(ConfigError) as ctx:
            parse_config("seed = 1\nchain = 2")
        self.assertEqual(ctx.exception.key, "chain")
        self.assertEqual(str(ctx.exception), "'chain': unknown key")

    def test_invalid_values(self):
        for text, key in [
            ("seed = one", "seed"),
            ("seed = 1\nchains = 0", "chains"),
            ("seed = 1\niterations = 100\nburn_in = 100", "burn_in"),
            ("seed = 1\nsign_flip = maybe", "sign_flip"),
            ("seed = 1\nsynth_start = 2012-13-01", "synth_start"),
            ("seed = 1\nhpdi_level = 1.0", "hpdi_level"),
            ("seed = 1\ngrid_lo = -5", "grid_lo"),
            ("seed = 1\nlog_level = loud", "log_level"),
            ("seed = 1\nsynth_kappa1 = 3", "synth_kappa1"),
            ("seed = -1", "seed"),
        ]:
            with self.assertRaises(ConfigError, msg=text) as ctx:
                parse_config(text)
            self.assertEqual(ctx.exception.key, key, msg=text)

    def test_malformed(self):
        with self.assertRaises(ConfigError) as ctx:
            parse_config("seed = 1\nseed = 2")
        self.assertEqual(ctx.exception.key, "seed")
        self.assertRaises(ConfigError, parse_config, "seed = 1\n[extra]\nchains = 2")
        self.assertRaises(ConfigError, parse_config, "seed 1")

    def test_bad_grid(self):
        config = parse_config("seed = 1\ngrid_lo = 5\ngrid_hi = -5")
        with self.assertRaises(ConfigError) as ctx:
            config.grid()
        self.assertEqual(ctx.exception.key, "grid_lo")


class TestSynthesis(unittest.TestCase):

    def test_theta(self):
        config = parse_config("seed = 1\nthreshold = -61.125\nsynth_xi = -0.3\nsynth_gamma = 0.05")
        theta = config.synth_theta()
        self.assertEqual(theta.marginal.u, 61.125)
        self.assertEqual(theta.marginal.xi, -0.3)
        self.assertEqual(theta.population.gamma, 0.05)
        self.assertEqual(theta.population.v_alpha, 6.0)
        self.assertEqual(theta.subjects, ())
        window = config.synth_window()
        self.assertEqual(window.years, 4.0)

    def test_replace(self):
        config = parse_config("seed = 1")
        self.assertEqual(config.replace(chains=2).chains, 2)
        self.assertEqual(config.to_dict()["seed"], 1)
        self.assertRaises(ConfigError, config.replace, chains=0)


class TestLoadConfig(unittest.TestCase):

    def setUp(self):
        self.folder = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.folder)

    def test_load(self):
        path = os.path.join(self.folder, "run.cfg")
        with open(path, "w", encoding="utf-8") as f:
            f.write("seed = 3\nchains = 2\n")
        self.assertEqual(load_config(path).chains, 2)
        self.assertEqual(load_config(path, seed=4).seed, 4)

    def test_missing(self):
        self.assertRaises(ConfigError, load_config, os.path.join(self.folder, "missing.cfg"))
