import argparse
import sys
import time

import numpy
import pandas
import scipy.special

from longtail.inference import POPULATION_NAMES, prior_draws
from longtail.utils import substream

parser = argparse.ArgumentParser(description="Check the moments and the prior predictive rate of the priors.")
parser.add_argument("--seed", type=int, default=1)
parser.add_argument("--draws", type=int, default=1000000)
parser.add_argument("--years", type=float, default=4.0, help="length of the data window")
parser.add_argument("--out", required=True)
args = parser.parse_args()

t0 = time.time()
draws = prior_draws(substream(args.seed, "bench:prior"), args.draws)

rows = []
for name in POPULATION_NAMES:
    values = draws[name]
    lo, median, hi = numpy.quantile(values, [0.05, 0.5, 0.95])
    rows.append((name, values.mean(), values.std(), lo, median, hi))
frame = pandas.DataFrame(rows, columns=["parameter", "mean", "sd", "q05", "median", "q95"])
frame.to_csv(args.out, index=False, lineterminator="\n")

t = numpy.linspace(0.0, args.years, 49)
rate = scipy.special.expit(draws["beta0"][:, None] + draws["beta1"][:, None] * t)
inside = (rate > 0.1) & (rate < 0.9)
at_start = inside[:, 0].mean()
whole_window = inside.all(axis=1).mean()

sigma = draws["sigma_u"]
checks = [
    ("sigma_u mean", sigma.mean(), abs(sigma.mean() - 1.0) <= 0.002),
    ("sigma_u sd", sigma.std(), abs(sigma.std() - 0.2) <= 0.002),
    ("rate in (0.1, 0.9) at the window start", at_start, at_start >= 0.9),
]
for label, value, ok in checks:
    print("{:<42} {:.4f}  {}".format(label, value, "ok" if ok else "FAILED"))
print("{:<42} {:.4f}".format("rate in (0.1, 0.9) over the whole window", whole_window))
print("elapsed: {:.1f}s".format(time.time() - t0))

sys.exit(0 if all(ok for _, _, ok in checks) else 1)
