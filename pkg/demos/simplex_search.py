"""Recover cost differences of a planted 3-action instance from best responses alone."""
import numpy as np

from pamdp_lab import simplexsearch as ss
from pamdp_lab.harness.generate import InstanceSpec, generate_instance
from pamdp_lab.harness.rng import stream

inst, _ = generate_instance(InstanceSpec("planted_simplex", 3, 3, 1,
                                         targets={"varsigma": 0.2, "theta": 0.3}, seed=0))
cfg = ss.SearchConfig.from_defaults(inst.c, 3, 0.2, 200, inst.scale)
oracle = ss.CountingOracle(ss.linear_oracle(inst.P, inst.c, inst.scale))
est = ss.run_simplex_search(cfg, oracle, stream(0, "search"))
print("true differences:\n", np.round(inst.delta, 4))
print("estimated:\n", np.round(est.delta, 4))
print("oracle queries:", oracle.calls)
