"""Rules, feature pipelines, custom metrics and custom methods.

    python3 notebooks/03_extending.py
"""

import numpy as np

import trajcluster as tc
from trajcluster.algorithms import kmeans_clusterer, ols_representation

COLS = {"id": "Patient", "time": "Week", "response": "UsageHours"}
ds, _ = tc.simulate_pap(seed=1)

# %% Stratification by a rule
# A clinical cut-off needs no clustering at all.
four_hours = tc.estimate(tc.spec_new("stratify", COLS, stratify="mean > 4"), ds, seed=1)
print("mean > 4:", dict(zip(four_hours.diagnostics["strata"], np.round(four_hours.proportions, 3).tolist())))
tertiles = tc.estimate(tc.spec_new("stratify", COLS, stratify="cut(mean, 3)"), ds, seed=1)
print("cut(mean, 3):", tertiles.diagnostics["strata"], tertiles.cluster_sizes.tolist())

# %% A feature pipeline: quadratic coefficients, then k-means
quad = tc.spec_new(
    "feature", COLS, nClusters=4, representation=ols_representation(2), clusterer=kmeans_clusterer()
)
m = tc.estimate(quad, ds, seed=1)
print("quadratic features, K=4:", np.round(m.proportions, 3).tolist())

# %% A custom internal metric
tc.define_internal_metric("smallest", lambda model: float(model.proportions.min()))
models = tc.run_batch(tc.spec_permute(tc.spec_new("kml", COLS), "nClusters", range(2, 7)), ds, seed=1)
print("smallest cluster share by K:", np.round(models.metric(["smallest"])["smallest"], 3).tolist())


# %% A custom method
# Clusters patients by their final-week usage only. ``fit`` is the one
# step a method must supply; data preparation and validation default to
# pass-through and the common checks.
@tc.register_method
class LastWeek(tc.Method):
    name = "lastweek"
    label = "k-means on the last observation"
    defaults = {"nstart": 10}

    def fit(self, spec, ds, data, state, rng):
        from trajcluster.algorithms import kmeans
        from trajcluster.model import partition_centers

        last = np.array([[y[-1]] for _, _, y in ds.iter_trajectories()])
        res = kmeans(last, spec.n_clusters, nstart=spec["nstart"], rng=rng)
        pp = np.eye(spec.n_clusters)[res.labels]
        return tc.FitResult(pp, partition_centers(ds, res.labels, spec.n_clusters))


lw = tc.estimate(tc.spec_new("lastweek", COLS, nClusters=3), ds, seed=1)
print(lw)
print("agreement with LMKM:", round(tc.external_metric(lw, tc.estimate(tc.spec_new("lmkm", COLS, nClusters=3), ds, seed=1), "adjustedRand"), 3))
