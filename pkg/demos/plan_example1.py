"""Optimal contracts on the two-action Example 1 bandit, DP vs brute force."""
import numpy as np

from pamdp_lab import bandit, planner

for mu in (0.75, 0.9, 1.0):
    env = bandit.example1(mu).as_pamdp()
    dp = planner.optimal_contract_policy(env)
    bf = planner.brute_force_plan(env)
    print(f"mu={mu:.2f}  action={dp.pi_star[0, 0]}  payment on good outcome={dp.x_star[0, 0, 0]:.4f}  "
          f"value dp={dp.value:.6f} brute={bf.value:.6f}")
