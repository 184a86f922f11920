"""Regret of UCB and explore-then-commit on Example 1 over a few horizons."""
import numpy as np

from pamdp_lab.bandit import example1
from pamdp_lab.harness.experiment import fit_exponent, run_replication

inst = example1(0.9)
for algo in ("ucb", "etc"):
    Ts, Rs = [], []
    for T in (1_000, 10_000):
        for seed in range(5):
            Ts.append(T)
            Rs.append(run_replication(inst, algo, T, seed).total)
    slope, (lo, hi), _ = fit_exponent(Ts, Rs)
    print(f"{algo}: mean regret at T=1e4 {np.mean(Rs[5:]):.1f}, fitted exponent {slope:.2f} [{lo:.2f}, {hi:.2f}]")
