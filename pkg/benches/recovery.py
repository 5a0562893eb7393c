import argparse
import sys
import time

import pandas

from longtail.config import RunConfig
from longtail.data import preprocess
from longtail.inference import POPULATION_NAMES, McmcConfig, diagnostics, run_mcmc
from longtail.predict import simulate_truth

parser = argparse.ArgumentParser(description="Fit synthetic datasets and check the coverage of credible intervals.")
parser.add_argument("--seed", type=int, default=1, help="seed of the first replicate")
parser.add_argument("--replicates", type=int, default=10)
parser.add_argument("--subjects", type=int, default=30)
parser.add_argument("--chains", type=int, default=4)
parser.add_argument("--iterations", type=int, default=20000)
parser.add_argument("--burn-in", type=int, default=10000)
parser.add_argument("--level", type=float, default=0.9)
parser.add_argument("-j", "--jobs", type=int, default=0)
parser.add_argument("--out", required=True)
args = parser.parse_args()

settings = RunConfig(seed=args.seed)
theta = settings.synth_theta()
truth = {
    "xi": theta.marginal.xi,
    "sigma_u": theta.marginal.sigma_u,
    "beta0": theta.marginal.rate.beta0,
    "beta1": theta.marginal.rate.beta1,
    "gamma": theta.population.gamma,
    "nu": theta.population.nu,
    "kappa0": theta.kernel.kappa0,
    "kappa1": theta.kernel.kappa1,
}

rows = []
for seed in range(args.seed, args.seed + args.replicates):
    t0 = time.time()
    synthetic = simulate_truth(theta, args.subjects, settings.synth_obs_rate, settings.synth_window(), seed)
    d = preprocess(synthetic.dataset, theta.marginal.u, 0)
    config = McmcConfig(
        chains=args.chains,
        iterations=args.iterations,
        burn_in=args.burn_in,
        thin=10,
        seed=seed,
        jobs=args.jobs,
    )
    summary = diagnostics(run_mcmc(d, None, config), args.level)
    max_rhat = max(p.rhat for p in summary.parameters.values())
    for name in POPULATION_NAMES:
        p = summary[name]
        covered = p.hpdi_lo <= truth[name] <= p.hpdi_hi
        rows.append((seed, name, truth[name], p.mean, p.hpdi_lo, p.hpdi_hi, p.rhat, covered))
    print("seed {}: {} subjects, max rhat {:.3f}, {:.0f}s".format(seed, len(d), max_rhat, time.time() - t0))

frame = pandas.DataFrame(rows, columns=["seed", "parameter", "true", "mean", "lo", "hi", "rhat", "covered"])
frame.to_csv(args.out, index=False, lineterminator="\n")

coverage = frame["covered"].mean()
converged = (frame["rhat"] < 1.05).all()
print("coverage: {:.3f}  {}".format(coverage, "ok" if coverage >= 0.8 else "FAILED"))
print("population rhat < 1.05: {}".format("ok" if converged else "FAILED"))
sys.exit(0 if coverage >= 0.8 and converged else 1)
