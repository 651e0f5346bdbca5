# Introduction and explanation regarding the test suite
"""
This code is a test suite for the synthetic cohort generator of lcta. It checks that cohorts are
reproducible from their seed, that absences cover whole units, and that the generated outcomes
follow the configured link to the true abilities.

Run the tests with 'pytest lcta/test'.
"""

# Import necessary libraries and functions to be tested.
import numpy as np
import numpy.testing as npt
import pytest
from scipy.stats import spearmanr

from lcta.datasets import SynthConfig, empirical_car, generate
from lcta.datasets.synthetic import student_ids
from lcta.utils.errors import DomainError
from lcta.utils.irt import icc


@pytest.fixture(scope="module")
def default_cohort():
    return generate()


def test_default_shape(default_cohort):
    assert default_cohort.matrix.cells.shape == (1127, 70)
    assert default_cohort.matrix.n_tests == 14
    assert default_cohort.matrix.student_ids[0] == "s0001"
    assert default_cohort.matrix.item_ids[-1] == "L14-Q5"
    assert len(default_cohort.labels) == 1127


def test_same_seed_same_cohort(default_cohort):
    again = generate(SynthConfig(seed=42))
    npt.assert_array_equal(again.matrix.cells, default_cohort.matrix.cells)
    npt.assert_array_equal(again.labels.passed, default_cohort.labels.passed)
    npt.assert_array_equal(again.theta_true, default_cohort.theta_true)


def test_other_seed_other_cohort(default_cohort):
    other = generate(SynthConfig(seed=43))
    assert not np.array_equal(other.matrix.cells, default_cohort.matrix.cells)


def test_failure_rate(default_cohort):
    assert default_cohort.labels.failed.mean() == pytest.approx(0.18, abs=0.04)


def test_absences_cover_whole_units(default_cohort):
    matrix = default_cohort.matrix
    absent = (matrix.cells == -1).reshape(matrix.n_students, matrix.n_tests, -1)
    per_unit = absent.sum(axis=2)
    assert np.isin(per_unit, [0, matrix.items_per_test]).all()
    assert 0.01 < absent.mean() < 0.06


def test_everybody_absent():
    cohort = generate(SynthConfig(n_students=20, n_tests=2, absence_rate=1.0))
    assert (cohort.matrix.cells == -1).all()
    assert np.isnan(empirical_car(cohort.matrix, "as-missing")).all()
    npt.assert_array_equal(empirical_car(cohort.matrix, "as-incorrect"), 0.0)


def test_nobody_absent():
    cohort = generate(SynthConfig(n_students=50, absence_rate=0.0))
    assert (cohort.matrix.cells >= 0).all()


def test_steep_outcome_link():
    cohort = generate(SynthConfig(n_students=2000, alpha=0.0, beta=50.0, seed=8))
    predicted_fail = cohort.theta_true < 0.0
    assert (predicted_fail == cohort.labels.failed).mean() > 0.97


def test_car_tracks_true_ability(default_cohort):
    car = empirical_car(default_cohort.matrix)
    correlation, _ = spearmanr(car, default_cohort.theta_true)
    assert correlation > 0.7


@pytest.mark.parametrize(
    "overrides",
    [
        {"n_students": 0},
        {"items_per_test": 0},
        {"absence_rate": 1.5},
        {"a_log_sd": -0.1},
        {"beta": float("nan")},
        {"seed": -1},
    ],
)
def test_invalid_config(overrides):
    with pytest.raises(DomainError):
        SynthConfig(**overrides)


def test_student_ids_sort_numerically():
    ids = student_ids(12000)
    assert ids[0] == "s00001"
    assert ids == sorted(ids)


def test_truth_frames(default_cohort):
    assert list(default_cohort.theta_frame().columns) == ["student_id", "theta_true"]
    items = default_cohort.items_frame()
    assert list(items.columns) == ["item_id", "a_true", "b_true"]
    assert (items["a_true"] > 0).all()


def test_responses_follow_the_icc(default_cohort):
    matrix = default_cohort.matrix
    items = default_cohort.items_true
    present = matrix.cells >= 0
    distance = (default_cohort.theta_true[:, None] - items.b)[present]
    expected = icc(default_cohort.theta_true[:, None], items.a, items.b)[present]
    observed = matrix.cells[present].astype(float)
    bins = np.digitize(distance, np.quantile(distance, np.linspace(0, 1, 13)[1:-1]))
    for level in range(12):
        in_bin = bins == level
        assert observed[in_bin].mean() == pytest.approx(expected[in_bin].mean(), abs=0.02)


def test_responses_independent_given_ability(default_cohort):
    matrix = default_cohort.matrix
    items = default_cohort.items_true
    theta = default_cohort.theta_true
    expected = icc(theta[:, None], items.a, items.b)
    residual = np.where(matrix.cells >= 0, matrix.cells - expected, 0.0)

    # shuffling the first item among students of similar ability breaks any shared dependence
    rng = np.random.default_rng(0)
    bins = np.digitize(theta, np.quantile(theta, np.linspace(0, 1, 11)[1:-1]))
    shuffled = residual.copy()
    for level in np.unique(bins):
        rows = np.flatnonzero(bins == level)
        shuffled[rows, 0] = residual[rng.permutation(rows), 0]

    observed = residual[:, 0] @ residual[:, 1:] / len(theta)
    baseline = shuffled[:, 0] @ shuffled[:, 1:] / len(theta)
    npt.assert_allclose(observed, 0.0, atol=0.03)
    assert abs(observed.mean() - baseline.mean()) < 0.005
    npt.assert_array_equal(np.sort(shuffled[:, 0]), np.sort(residual[:, 0]))
