"""
Diffusion estimation on a sensor network
========================================

Twenty sensors observe the same unknown vector through their own noisy,
coloured inputs. Each one runs a local LMS or RLS step and then averages its
neighbors' estimates with Metropolis weights.
"""

import numpy as np

from linksel import config, metropolis_matrix, run_scenario

cfg = config.preset("wsn-static")
cfg = config.apply_overrides(cfg, ["run.runs=20"])

# the bundled 20-node layout and its combination matrix
topo, _ = config.build_topology(cfg)
C = metropolis_matrix(topo)
print("degrees:", [topo.degree(k) for k in range(topo.n_nodes)])
print("rows sum to one:", np.allclose(C.sum(axis=1), 1.0))
print("node 0 weights:", {int(l): round(float(C[0, l]), 3) for l in np.flatnonzero(C[0])})

# four nodes are ten times noisier than the rest
noise, noisy = config.noise_profile(cfg, topo.n_nodes)
print("noisy nodes:", sorted(noisy.tolist()))

# fixed-weight diffusion with both adaptation rules
for alg in ("diff-lms", "diff-rls"):
    res = run_scenario(config.build_scenario(cfg, alg))
    curve = res.network_db()
    print(f"{alg}: MSE {curve[9]:7.2f} dB at i=10, {curve[99]:7.2f} dB at i=100, "
          f"steady state {res.steady_state_db():7.2f} dB")
