"""Solve the optimal threshold for a few harvesting rates and print it.

Run with ``python3 demos/threshold_curve.py``.  Above a moderate charge the
threshold falls as the battery fills.  Near empty it drops again: there a
transmission often fails for lack of energy, which changes the trade-off.
"""

import numpy as np

from harvest_censor import value_iteration
from harvest_censor import experiments as X

LEVELS = [0, 5, 10, 20, 40, 60, 80, 100]

for m_b in (5, 10, 15):
    sc = X.analytic_scenario(m_b)
    res = value_iteration(sc)
    mu = res.policy.mu
    print(f"m_b={m_b:>2}  mean battery cost {sc.costs.cbar0:+.3f}  "
          f"({res.iterations} sweeps, residual {res.residual:.1e})")
    print("   e:  " + " ".join(f"{e:>6}" for e in LEVELS))
    print("  mu:  " + " ".join(f"{mu[e]:6.3f}" for e in LEVELS))
    print(f"  importance threshold at full battery: {mu[-1] / res.policy.w[-1]:.3f} "
          f"(mean importance {sc.importance.mean:g})")
    print()

# past the low-battery bump the curve is non-increasing
assert np.all(np.diff(value_iteration(X.analytic_scenario(10)).policy.mu[40:]) <= 1e-9)
