import numpy as np
import pytest

from trajcluster import (
    Dataset,
    TrajectoryMatrix,
    from_matrix,
    impute_copy_mean,
    load_long_csv,
    simulate_pap,
    to_aligned_matrix,
)
from trajcluster.dataset import PapConfig
from trajcluster.errors import (
    AlignmentError,
    DuplicateObservationError,
    ImputationError,
    MissingDataError,
    ParseError,
    SchemaError,
)


def write(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


HEAD = "Patient,Week,UsageHours\n"


def test_load_single_patient(tmp_path):
    rows = "".join(f"1,{w},{w * 0.5}\n" for w in range(1, 7))
    ds = load_long_csv(write(tmp_path, HEAD + rows), "Patient", "Week", "UsageHours")
    assert ds.n_trajectories == 1
    assert list(ds.counts) == [6]
    assert ds.response_col == "UsageHours"


def test_header_only_gives_empty_dataset(tmp_path):
    ds = load_long_csv(write(tmp_path, HEAD), "Patient", "Week", "UsageHours")
    assert ds.n_trajectories == 0 and ds.n_obs == 0


def test_shuffled_rows_give_identical_dataset(tmp_path):
    rows = [f"{p},{w},{(p * 7 + w) % 5}\n" for p in (1, 2, 10) for w in (1, 2, 3)]
    rng = np.random.default_rng(0)
    shuffled = [rows[i] for i in rng.permutation(len(rows))]
    a = load_long_csv(write(tmp_path, HEAD + "".join(rows), "a.csv"), "Patient", "Week", "UsageHours")
    b = load_long_csv(write(tmp_path, HEAD + "".join(shuffled), "b.csv"), "Patient", "Week", "UsageHours")
    assert a == b
    # natural order, not lexicographic
    assert a.ids == ("1", "2", "10")


def test_missing_response_is_dropped(tmp_path):
    text = HEAD + "1,1,2\n1,2,NA\n1,3,\n1,4,5\n"
    ds = load_long_csv(write(tmp_path, text), "Patient", "Week", "UsageHours")
    assert ds.n_obs == 2
    np.testing.assert_array_equal(ds.time, [1, 4])


@pytest.mark.parametrize(
    "body, exc, row",
    [
        ("1,1,2\n1,x,3\n", ParseError, 2),
        ("1,1,2\n1,2,abc\n", ParseError, 2),
        ("1,1,2\n,2,3\n", ParseError, 2),
    ],
)
def test_parse_errors_report_row(tmp_path, body, exc, row):
    with pytest.raises(exc) as info:
        load_long_csv(write(tmp_path, HEAD + body), "Patient", "Week", "UsageHours")
    assert info.value.row == row
    assert f"row {row}" in str(info.value)


def test_missing_column_and_duplicates(tmp_path):
    with pytest.raises(SchemaError):
        load_long_csv(write(tmp_path, HEAD + "1,1,2\n"), "Patient", "Day", "UsageHours")
    with pytest.raises(DuplicateObservationError):
        load_long_csv(write(tmp_path, HEAD + "1,1,2\n1,1,3\n", "d2.csv"), "Patient", "Week", "UsageHours")


def test_group_column_becomes_truth(tmp_path):
    text = "Patient,Week,UsageHours,Group\n1,1,2,a\n1,2,2,a\n2,1,5,b\n"
    ds = load_long_csv(write(tmp_path, text), "Patient", "Week", "UsageHours", group_col="Group")
    assert ds.truth == {"1": "a", "2": "b"}


def test_from_matrix_counts():
    ds = from_matrix(np.arange(6.0).reshape(2, 3), [1, 2, 3])
    assert ds.n_obs == 6
    y = np.arange(6.0).reshape(2, 3)
    y[1, 1] = np.nan
    ds = from_matrix(y, [1, 2, 3])
    assert ds.n_obs == 5
    assert list(ds.counts) == [3, 2]


def test_matrix_round_trip():
    rng = np.random.default_rng(4)
    y = rng.normal(size=(7, 5))
    m = to_aligned_matrix(from_matrix(y, np.arange(5.0)))
    np.testing.assert_array_equal(m.values, y)
    np.testing.assert_array_equal(m.times, np.arange(5.0))


def test_aligned_matrix_of_pap_needs_no_imputation(pap_ds):
    m = to_aligned_matrix(pap_ds, impute="fail")
    assert m.shape == (301, 13)
    assert not np.isnan(m.values).any()


def test_single_trajectory_matrix():
    ds = Dataset.from_observations([7, 7, 7], [3, 1, 2], [30.0, 10.0, 20.0])
    m = to_aligned_matrix(ds)
    np.testing.assert_array_equal(m.values, [[10.0, 20.0, 30.0]])


def test_gap_matches_copy_mean_formula():
    y = np.array([[1.0, 2.0, 3.0, 4.0], [3.0, np.nan, np.nan, 6.0], [2.0, 4.0, 2.0, 2.0]])
    m = to_aligned_matrix(from_matrix(y, [1, 2, 3, 4]))
    means = np.nanmean(y, axis=0)
    d_a, d_b = 3.0 - means[0], 6.0 - means[3]
    for c in (1, 2):
        expected = means[c] + d_a + (d_b - d_a) * c / 3
        assert m.values[1, c] == pytest.approx(expected, abs=1e-12)
    with pytest.raises(MissingDataError):
        to_aligned_matrix(from_matrix(y, [1, 2, 3, 4]), impute="fail")


def test_copy_mean_identity_without_gaps():
    m = TrajectoryMatrix(np.ones((2, 3)), np.arange(3.0), (1, 2))
    assert impute_copy_mean(m) is m


def test_copy_mean_row_equal_to_means():
    means = np.array([1.0, 3.0, 2.0, 5.0])
    vals = np.vstack([means, means, [1.0, np.nan, np.nan, 5.0]])
    out = impute_copy_mean(TrajectoryMatrix(vals, np.arange(4.0), (1, 2, 3)))
    np.testing.assert_allclose(out.values[2], means, atol=1e-12)


def test_copy_mean_hand_example():
    # row (5, ., ., 9) against column means (4, 4, 4, 4):
    # deviations 1 and 5 are interpolated to 7/3 and 11/3
    vals = np.array([[5.0, np.nan, np.nan, 9.0], [3.0, 4.0, 4.0, -1.0]])
    out = impute_copy_mean(TrajectoryMatrix(vals, np.arange(4.0), (1, 2)))
    np.testing.assert_allclose(out.values[0], [5.0, 4 + 7 / 3, 4 + 11 / 3, 9.0], atol=1e-12)


def test_copy_mean_edges_carry_nearest_deviation():
    vals = np.array([[np.nan, 5.0, np.nan], [2.0, 2.0, 2.0]])
    out = impute_copy_mean(TrajectoryMatrix(vals, np.arange(3.0), (1, 2)))
    # column means (2, 3.5, 2); deviation at col 1 is 1.5
    np.testing.assert_allclose(out.values[0], [3.5, 5.0, 3.5])


def test_copy_mean_rejects_unobserved_column():
    vals = np.array([[1.0, np.nan], [2.0, np.nan]])
    with pytest.raises(ImputationError):
        impute_copy_mean(TrajectoryMatrix(vals, np.arange(2.0), (1, 2)))


def test_off_grid_time_rejected():
    ds = from_matrix(np.ones((1, 3)), [1, 2, 3])
    with pytest.raises(AlignmentError):
        to_aligned_matrix(ds, times=[1, 2, 4])


def test_simulate_shape_and_determinism(pap):
    ds, truth = pap
    assert ds.n_trajectories == 301 and ds.n_obs == 3913
    counts = truth.counts()
    assert max(counts, key=counts.get) == "Adherent"
    assert counts["Adherent"] / 301 == pytest.approx(0.538, abs=0.005)
    ds2, _ = simulate_pap(301, 13, seed=1)
    assert ds == ds2
    np.testing.assert_array_equal(ds.value, ds2.value)
    assert ds != simulate_pap(301, 13, seed=2)[0]


def test_simulate_respects_bounds():
    cfg = PapConfig(noise_sd=5.0)
    ds, _ = simulate_pap(100, 13, seed=0, config=cfg)
    assert ds.value.min() >= 0.0 and ds.value.max() <= 9.5


def test_csv_text_round_trip(tmp_path, pap_ds):
    p = tmp_path / "pap.csv"
    p.write_text(pap_ds.to_csv_text())
    back = load_long_csv(p, "Patient", "Week", "UsageHours", group_col="Group")
    assert back.n_obs == pap_ds.n_obs
    np.testing.assert_array_equal(back.value, pap_ds.value)
    assert back.truth["1"] == pap_ds.truth[1]


def test_select_with_new_ids(pap_ds):
    sub = pap_ds.select([3, 3, 5], [3, "3#2", 5])
    assert sub.n_trajectories == 3
    a, b = sub.ids.index(3), sub.ids.index("3#2")
    np.testing.assert_array_equal(sub.trajectory(a)[1], sub.trajectory(b)[1])
