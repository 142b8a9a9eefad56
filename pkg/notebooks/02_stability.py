"""How stable is a solution?

Two questions asked of the same spec: does the answer depend on the
random start (repeated estimation), and does it depend on which patients
happened to be sampled (bootstrap)? Every bootstrap model carries the
recipe needed to rebuild its sample.

    python3 notebooks/02_stability.py
"""

import numpy as np

import trajcluster as tc

COLS = {"id": "Patient", "time": "Week", "response": "UsageHours"}
ds, _ = tc.simulate_pap(seed=1)
spec = tc.spec_new("kml", COLS, nClusters=5)

# %% Repeated estimation: five seeds, same data
reps = tc.run_rep(spec, ds, reps=5, seed=1)
ari = tc.pairwise_external(reps, "adjustedRand")
print("adjusted Rand between repeated fits:", np.round(ari.values, 3).tolist())

# %% Bootstrap: ten resampled datasets
boots = tc.run_boot(spec, ds, samples=10, seed=1)
print("convergence rate:", tc.convergence_rate(boots))
wmmae = np.array(
    [[tc.external_metric(a, b, "WMMAE") if a is not b else 0.0 for b in boots] for a in boots]
)
print(f"pairwise WMMAE: median {np.median(wmmae[wmmae > 0]):.3f}, max {wmmae.max():.3f}")

# %% Reproducing one bootstrap fit from its recipe
m = boots[3]
print("recipe:", m.recipe.sample_seed, len(m.recipe.drawn_ids), "draws,", len(set(m.recipe.drawn_ids)), "distinct")
again = tc.reestimate(m, ds)
print("refit identical:", again.to_json() == m.to_json())
