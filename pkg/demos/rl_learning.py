"""Contract learning on a small mixing PAMDP: regret per decile of episodes."""
import numpy as np

from pamdp_lab import planner, rl
from pamdp_lab.harness.generate import InstanceSpec, generate_instance

env, certs = generate_instance(InstanceSpec("mixing", 2, 2, 2, eta=1.0,
                                            targets={"kappa": 0.2, "lambda_s": 0.3, "varsigma": 0.2},
                                            params={"reward_gap": 0.3}, seed=0))
v_star = planner.benchmark_value(env)
trace = rl.contractual_rl(env, 5_000, seed=0, v_star=v_star)
print(f"V* = {v_star:.4f}, total regret {trace.total:.1f}")
for k, chunk in enumerate(np.array_split(trace.inst_regret, 10)):
    print(f"decile {k}: mean regret {chunk.mean():.4f}")
