import json

import numpy as np
import pytest

from trajcluster import (
    ClusterModel,
    ModelList,
    assign_rows,
    estimate,
    from_matrix,
    model_list,
    partition_model,
    run_batch,
    spec_new,
    spec_permute,
    to_aligned_matrix,
)
from trajcluster.errors import NotFoundError, PartialAssignmentError
from trajcluster.model import CenterPredictor, PolynomialPredictor, polynomial_design

PAP_COLS = {"id": "Patient", "time": "Week", "response": "UsageHours"}


def test_modal_assignment():
    assert assign_rows(np.array([[1.0, 0.0]]))[0] == 0
    tie = np.full((50, 2), 0.5)
    a = assign_rows(tie, seed=3)
    np.testing.assert_array_equal(a, assign_rows(tie, seed=3))
    assert set(a) == {0, 1}


def test_weighted_random_frequencies():
    P = np.tile([0.3, 0.7], (100_000, 1))
    freq = np.bincount(assign_rows(P, "weighted_random", seed=9), minlength=2) / P.shape[0]
    np.testing.assert_allclose(freq, [0.3, 0.7], atol=0.01)


def test_unknown_strategy():
    with pytest.raises(ValueError):
        assign_rows(np.ones((2, 1)), "nearest")


def test_single_cluster_centroid_is_column_mean(small_pap):
    m = estimate(spec_new("kml", PAP_COLS, nClusters=1), small_pap, seed=1)
    Y = to_aligned_matrix(small_pap).values
    np.testing.assert_allclose(m.cluster_trajectories()[0], Y.mean(axis=0), atol=1e-12)


def test_center_predictor_interpolates():
    p = CenterPredictor([1.0, 2.0, 3.0], [[0.0, 10.0, 4.0]])
    np.testing.assert_allclose(p([1.5, 2.5]), [[5.0, 7.0]])


def test_linear_predictor_shape_and_direction(pap_ds):
    m = estimate(spec_new("gbtm", PAP_COLS, nClusters=3), pap_ds, seed=1)
    out = m.cluster_trajectories([1.0, 10.0])
    assert out.shape == (3, 2)
    slopes = m.predictor.coef[:, 1]
    for k in range(3):
        assert np.sign(out[k, 1] - out[k, 0]) == np.sign(slopes[k])


def test_saturated_model_has_zero_residuals():
    rng = np.random.default_rng(1)
    ds = from_matrix(rng.normal(size=(6, 4)), [1, 2, 3, 4])
    m = estimate(spec_new("kml", nClusters=6), ds, seed=1)
    np.testing.assert_allclose(m.residuals(), 0.0, atol=1e-12)


def test_fitted_plus_residuals(small_pap):
    m = estimate(spec_new("lmkm", PAP_COLS, nClusters=3), small_pap, seed=1)
    assert np.mean(m.fitted()) + np.mean(m.residuals()) == pytest.approx(np.mean(small_pap.value), abs=1e-12)


def test_gbtm_fitted_is_design_times_beta(small_pap):
    m = estimate(spec_new("gbtm", PAP_COLS, nClusters=2), small_pap, seed=1)
    X = polynomial_design(small_pap.time, 1)
    modal = m.assignment_indices()[small_pap.index]
    expected = np.einsum("ob,ob->o", X, m.predictor.coef[modal])
    np.testing.assert_allclose(m.fitted(), expected, atol=1e-10)
    k0 = m.predict_for_cluster(small_pap, 0)
    np.testing.assert_allclose(k0, X @ m.predictor.coef[0], atol=1e-10)


def test_partition_model_truth(pap):
    ds, truth = pap
    m = partition_model(ds, ds.truth)
    assert m.K == 3
    counts = truth.counts()
    assert dict(zip(m.cluster_names, m.cluster_sizes.tolist())) == counts


def test_partition_single_group_is_grand_mean(small_pap):
    m = partition_model(small_pap, {i: "all" for i in small_pap.ids})
    grid = small_pap.grid()
    grand = [small_pap.value[small_pap.time == t].mean() for t in grid]
    np.testing.assert_allclose(m.cluster_trajectories()[0], grand, atol=1e-12)


def test_partition_centers_match_direct_averages(small_pap):
    labels = {tid: ("x" if k % 3 else "y") for k, tid in enumerate(small_pap.ids)}
    m = partition_model(small_pap, labels)
    grid = small_pap.grid()
    for j, name in enumerate(m.cluster_names):
        for c, t in enumerate(grid):
            vals = [
                y[tt == t][0]
                for tid, tt, y in small_pap.iter_trajectories()
                if labels[tid] == name and np.any(tt == t)
            ]
            assert m.cluster_trajectories()[j, c] == pytest.approx(np.mean(vals), abs=1e-12)
    med = partition_model(small_pap, labels, center="median")
    assert med.cluster_trajectories().shape == m.cluster_trajectories().shape


def test_partial_assignment_rejected(small_pap):
    with pytest.raises(PartialAssignmentError):
        partition_model(small_pap, {small_pap.ids[0]: "a"})


def test_model_list_subset_and_max_by(small_pap):
    specs = spec_permute(spec_new("kml", PAP_COLS), "nClusters", range(1, 7))
    models = run_batch(specs, small_pap, seed=1)
    assert len(models) == 6
    five = models.subset(lambda a: a["nClusters"] == 5, drop=True)
    assert isinstance(five, ClusterModel) and five.K == 5
    assert len(models.subset(nClusters=5)) == 1
    single = model_list(five)
    assert single.max_by("Dunn") is five
    dunn = models.metric(["Dunn"])["Dunn"]
    scan = max((v, i) for i, v in enumerate(dunn) if not np.isnan(v))[1]
    assert models.max_by("Dunn") is models[scan]
    with pytest.raises(NotFoundError):
        models.subset(nClusters=9, drop=True)


def test_json_round_trip(small_pap):
    m = estimate(spec_new("gmm", PAP_COLS, nClusters=2), small_pap, seed=4)
    back = ClusterModel.from_dict(json.loads(m.to_json()), data=small_pap)
    np.testing.assert_array_equal(back.postprob, m.postprob)
    np.testing.assert_allclose(back.cluster_trajectories(), m.cluster_trajectories())
    assert back.to_json() == m.to_json()
    assert json.loads(m.to_json())["estimation_seconds"] is None
    assert json.loads(m.to_json(timing=True))["estimation_seconds"] >= 0


def test_summary_lists_sizes(small_pap):
    m = estimate(spec_new("lmkm", PAP_COLS, nClusters=2), small_pap, seed=1)
    text = m.summary()
    assert "Cluster sizes (K=2):" in text
    assert "Scaled residuals:" in text
