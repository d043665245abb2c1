"""Train SAP, ABT and tabular Q-learning online and compare with the optimum.

Run with ``python3 demos/learning_run.py``.  Each learner starts from
scratch; the printed value is the discounted importance delivered over the
second half of the run, averaged over a few seeded replications.
"""

import numpy as np

from harvest_censor import simulate_replications, StepSchedule
from harvest_censor import experiments as X

HORIZON, REPS, SEED = 20_000, 5, 3

sc = X.single_hop_scenario(0.3)
opt = X.make_policy("opt", sc)
for kind in ("opt", "sap", "abt", "q", "ns"):
    pol = X.make_policy(kind, sc, StepSchedule.decaying(0.1), opt=opt)
    outs = simulate_replications(sc, pol, HORIZON, REPS, SEED)
    v = np.array([o.v_hat for o in outs])
    tx = np.mean([o.total_tx / HORIZON for o in outs])
    print(f"{kind:>4}: V-hat {v.mean():8.2f} +- {v.std(ddof=1) / np.sqrt(REPS):5.2f}   "
          f"transmit rate {tx:.3f}")

# the trained SAP learner carries a threshold estimate per battery level
sap = simulate_replications(sc, X.make_policy("sap", sc), HORIZON, 1, SEED)[0].learner
print("\nSAP threshold at e = 0, 25, 50, 100:", np.round(sap.mu[[0, 25, 50, 100]], 3))
print("OPT threshold at e = 0, 25, 50, 100:", np.round(opt.mu[[0, 25, 50, 100]], 3))
