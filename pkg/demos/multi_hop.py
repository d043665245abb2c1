"""Run censoring policies on a 3x3 grid with the sink in the middle.

Run with ``python3 demos/multi_hop.py``.  Relays pay to receive every
message and then decide again whether to forward it, so a selective relay
protects its own battery for the messages that matter most.
"""

import numpy as np

from harvest_censor import build_topology, run_multi_hop
from harvest_censor import experiments as X

HORIZON, REPS = 5_000, 3

topo = build_topology("grid", (3, 3), "center")
print("next hops:", {i: int(topo.next_hop[i]) for i in topo.sensors})
for p in (0.1, 0.5, 0.9):
    sc = X.network_scenario(p)
    line = [f"p={p:.1f}"]
    for kind in ("ns", "sap", "abt"):
        v = np.mean([run_multi_hop(topo, sc, kind, HORIZON, r).v_hat for r in range(REPS)])
        line.append(f"{kind} {v:7.2f}")
    print("   ".join(line))
