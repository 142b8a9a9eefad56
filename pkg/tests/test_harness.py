import json
import math

import numpy as np
import pytest

from trajcluster import (
    BootRecipe,
    boot_sample,
    convergence_rate,
    estimate,
    from_matrix,
    internal_metric,
    reestimate,
    run_batch,
    run_boot,
    run_rep,
    save_batch,
    spec_new,
    spec_permute,
)
from trajcluster.errors import ContractError
from trajcluster.harness import dataset_digest
from trajcluster.model import FailedFit

PAP_COLS = {"id": "Patient", "time": "Week", "response": "UsageHours"}


def test_batch_of_six(small_pap):
    specs = spec_permute(spec_new("lmkm", PAP_COLS), "nClusters", range(1, 7))
    models = run_batch(specs, small_pap, seed=1)
    assert len(models) == 6
    assert [m.spec["nClusters"] for m in models] == [1, 2, 3, 4, 5, 6]


def test_single_spec_batch_equals_estimate(small_pap):
    from trajcluster._seeding import derive_seed

    s = spec_new("kml", PAP_COLS, nClusters=3)
    (m,) = run_batch([s], small_pap, seed=4)
    assert m.to_json() == estimate(s, small_pap, seed=derive_seed(4, "batch", 0)).to_json()


def test_parallel_matches_serial(small_pap):
    specs = [spec_new(k, PAP_COLS, nClusters=3) for k in ("kml", "lmkm", "gbtm", "gmm", "kmedoids", "random")]
    a = run_batch(specs, small_pap, seed=7, parallel=False)
    b = run_batch(specs, small_pap, seed=7, parallel=True, workers=4)
    assert [m.to_json() for m in a] == [m.to_json() for m in b]


def test_failures_are_kept(small_pap):
    specs = [spec_new("kml", PAP_COLS, nClusters=2), spec_new("kml", PAP_COLS, nClusters=500)]
    models = run_batch(specs, small_pap, seed=1)
    assert isinstance(models[1], FailedFit)
    assert models[1].error_type == "InfeasibleError"
    assert convergence_rate(models) == 0.5


def test_rep(small_pap):
    s = spec_new("kml", PAP_COLS, nClusters=3)
    reps = run_rep(s, small_pap, reps=5, seed=1)
    assert len(reps) == 5
    assert len({m.seed for m in reps}) == 5
    (one,) = run_rep(s, small_pap, reps=1, seed=1)
    assert one.to_json() == estimate(s, small_pap, seed=one.seed).to_json()


def test_rep_of_deterministic_backend(small_pap):
    s = spec_new("stratify", PAP_COLS, stratify="mean > 4")
    reps = run_rep(s, small_pap, reps=4, seed=1)
    vals = reps.metric(["WMAE", "ASW"])
    for v in vals.values():
        assert np.ptp(v) == 0
    assert len({m.postprob.tobytes() for m in reps}) == 1


def test_boot_sample_basics(pap_ds):
    sample, recipe = boot_sample(pap_ds, 3)
    assert sample.n_trajectories == pap_ds.n_trajectories
    assert len(recipe.drawn_ids) == pap_ds.n_trajectories
    assert boot_sample(pap_ds, 3)[1] == recipe
    assert recipe.source == dataset_digest(pap_ds)
    assert recipe.reconstruct(pap_ds) == sample
    # repeated draws keep distinct ids
    assert len(set(sample.ids)) == sample.n_trajectories


def test_recipe_round_trip_and_mismatch(pap_ds, small_pap):
    _, recipe = boot_sample(pap_ds, 9)
    back = BootRecipe.from_dict(json.loads(json.dumps(recipe.to_dict())))
    assert back == recipe
    with pytest.raises(ContractError):
        recipe.reconstruct(small_pap)
    forged = BootRecipe(recipe.source, recipe.sample_seed + 1, recipe.drawn_ids)
    with pytest.raises(ContractError):
        forged.reconstruct(pap_ds)


def test_exclusion_probability():
    n, draws = 301, 10_000
    ds = from_matrix(np.zeros((n, 1)), [0.0])
    excluded_first = 0
    excluded_total = 0
    for s in range(draws):
        drawn = set(boot_sample(ds, s)[1].drawn_ids)
        excluded_first += 1 not in drawn
        excluded_total += n - len(drawn)
    target = (1 - 1 / n) ** n
    assert target == pytest.approx(math.exp(-1), abs=0.001)
    assert excluded_first / draws == pytest.approx(target, abs=0.02)
    assert excluded_total / (n * draws) == pytest.approx(target, abs=0.02)


def test_boot(small_pap):
    s = spec_new("kml", PAP_COLS, nClusters=2)
    models = run_boot(s, small_pap, samples=10, seed=2)
    assert len(models) == 10
    assert convergence_rate(models) == 1.0
    again = run_boot(s, small_pap, samples=10, seed=2, parallel=True)
    assert [m.recipe for m in models] == [m.recipe for m in again]
    for m in models:
        assert m.recipe.reconstruct(small_pap).ids == m.ids
        assert reestimate(m, small_pap).to_json() == m.to_json()


def test_save_batch(tmp_path, small_pap):
    s = spec_new("kml", PAP_COLS, nClusters=2)
    models = run_boot(s, small_pap, samples=3, seed=1)
    manifest = save_batch(models, tmp_path)
    assert len(manifest) == 3
    on_disk = json.loads((tmp_path / "manifest.json").read_text())
    assert on_disk == json.loads(json.dumps(manifest))
    for item, m in zip(manifest, models):
        assert item["status"] == "ok"
        assert (tmp_path / item["model_path"]).read_text() == m.to_json() + "\n"
        assert item["recipe"] == m.recipe.to_dict()
