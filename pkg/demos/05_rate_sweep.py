"""
Statistical rate of the return estimate
=======================================

The LSTDQ return error should shrink like ``1 / sqrt(n)`` once the sample
size clears a burn-in, with a constant governed by the empirical coverage.
This sweep checks the slope on a discounted two-state chain and compares
the error quantile with ``V_max / (1 - gamma) * sqrt(C_hat (d + log 1/delta) / n)``.
Pass ``--out DIR`` to keep the CSV tables.
"""

import argparse

from lstdq_lab import SweepConfig, run_sweep
from lstdq_lab.fileio import write_sweep
from lstdq_lab.instances import mixing_chain

parser = argparse.ArgumentParser()
parser.add_argument("--out", help="directory for cells.csv and aggregate.csv")
args = parser.parse_args()

x = mixing_chain(gamma=0.9)
cfg = SweepConfig(x.mdp, x.pi, x.fmap, x.mu_d, n_grid=[500, 2000, 8000, 32000],
                  num_seeds=100, seed=0, delta=0.1)
result = run_sweep(cfg)

print(f"true return J = {result.j_true:.6f},  burn-in n0 ~ {result.burn_in_n0:.0f}")
print("      n      rmse   q_0.9 err   bound rhs   ratio  past 10*n0")
for a in result.aggregates:
    print(f"{a['n']:7d} {a['rmse']:9.5f} {a['error_quantile']:11.5f} {a['thm2_rhs']:11.4f} "
          f"{a['bound_ratio']:7.3f}  {a['above_burn_in']}")
print(f"fitted log-log slope: {result.slope:+.3f}  (expected -0.5)")

if args.out:
    write_sweep(args.out, result)
    print("wrote", args.out)
