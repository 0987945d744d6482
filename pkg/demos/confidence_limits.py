"""Exact versus closed-form confidence limits for a binomial proportion.

Prints a few rows of both tables for N = 1000 and shows how much wider the
closed-form interval is. The closed form needs no root finding, which is
what makes it cheap enough to evaluate after every single trial.
"""

import numpy as np

from robustmc.binom import clopper_pearson_table, explicit_table, required_sample_size

n, delta = 1000, 0.01
lo_x, hi_x = explicit_table(n, delta)
lo_cp, hi_cp = clopper_pearson_table(n, delta)

print(f"N = {n}, delta = {delta}")
print(f"{'k':>5} {'explicit':>22} {'Clopper-Pearson':>22}")
for k in (0, 1, 10, 500, 990, 999, 1000):
    print(f"{k:>5} [{lo_x[k]:.6f}, {hi_x[k]:.6f}] [{lo_cp[k]:.6f}, {hi_cp[k]:.6f}]")

ratio = (hi_x - lo_x) / (hi_cp - lo_cp)
print(f"width ratio explicit / exact: median {np.median(ratio):.3f}, max {ratio.max():.3f}")

# sample size that pins the proportion within alpha*eps of the truth
for eps, d, alpha in [(0.001, 0.001, 0.5), (0.01, 0.01, 0.2)]:
    print(f"eps={eps} delta={d} alpha={alpha}: N = {required_sample_size(epsilon=eps, delta=d, alpha=alpha)}")
