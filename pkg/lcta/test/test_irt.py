# Introduction and explanation regarding the test suite
"""
This code is a test suite for the two-parameter logistic IRT machinery of lcta: the item
characteristic curve, the joint log-likelihood and its gradient, ability estimation with fixed
items, and joint maximum-likelihood calibration.

The likelihood is checked against a cell-by-cell loop, the gradient against central finite
differences, and the calibration against a seeded synthetic cohort with known parameters.

Run the tests with 'pytest lcta/test'.
"""

# Import necessary libraries and functions to be tested.
import math

import numpy as np
import numpy.testing as npt
import pytest

from lcta.datasets import SynthConfig, generate
from lcta.modules.irt import JointMaximumLikelihoodCalibration
from lcta.utils.errors import DomainError, IntegrityError
from lcta.utils.irt import (
    AbilityVector,
    CalibrationConfig,
    ItemParameters,
    StudentFlag,
    estimate_abilities,
    icc,
    icc_complement,
    log_likelihood,
    log_likelihood_gradient,
)


def _brute_log_likelihood(x, a, b, theta):
    total = 0.0
    for i in range(x.shape[0]):
        for j in range(x.shape[1]):
            if np.isnan(x[i, j]):
                continue
            p = 1.0 / (1.0 + math.exp(-1.7 * a[j] * (theta[i] - b[j])))
            total += x[i, j] * math.log(p) + (1.0 - x[i, j]) * math.log(1.0 - p)
    return total


def _random_instance(rng, n_students=5, n_items=5, missing=0.2):
    x = (rng.random((n_students, n_items)) < 0.5).astype(float)
    x[rng.random(x.shape) < missing] = np.nan
    items = ItemParameters(a=rng.uniform(0.3, 2.5, n_items), b=rng.normal(0, 1, n_items))
    theta = rng.normal(0, 1, n_students)
    return x, items, theta


@pytest.fixture(scope="module")
def cohort():
    return generate(SynthConfig(n_students=1000, items_per_test=5, n_tests=14, seed=2024))


@pytest.fixture(scope="module")
def default_cohort():
    return generate()


@pytest.fixture(scope="module")
def calibration(cohort):
    jml = JointMaximumLikelihoodCalibration()
    return jml.calibrate(cohort.matrix, "as-incorrect").calibration_


@pytest.mark.parametrize(
    "theta, expected", [(0.0, 0.5), (1.0, 0.8455347349), (-1.0, 0.1544652651)]
)
def test_icc_values(theta, expected):
    assert icc(theta, 1.0, 0.0) == pytest.approx(expected, abs=1e-8)


def test_icc_at_difficulty_is_one_half():
    assert icc(0.37, 2.3, 0.37) == 0.5


def test_icc_invariant_under_rescaling():
    theta, a, b = np.linspace(-2, 2, 9), 1.3, 0.4
    center, scale = 0.7, 1.9
    npt.assert_allclose(
        icc((theta - center) / scale, a * scale, (b - center) / scale), icc(theta, a, b), rtol=1e-12
    )


def test_icc_complement_sums_to_one():
    theta = np.linspace(-4, 4, 17)
    npt.assert_allclose(icc(theta, 1.3, 0.4) + icc_complement(theta, 1.3, 0.4), 1.0)


def test_icc_increasing_in_theta():
    values = icc(np.linspace(-4, 4, 50), 0.7, -0.2)
    assert np.all(np.diff(values) > 0)


@pytest.mark.parametrize("a", [0.0, -1.0])
def test_icc_rejects_non_positive_discrimination(a):
    with pytest.raises(DomainError):
        icc(0.0, a, 0.0)


def test_item_parameters_positive():
    with pytest.raises(DomainError):
        ItemParameters(a=[1.0, -0.5], b=[0.0, 0.0])


def test_log_likelihood_matches_loop():
    rng = np.random.default_rng(11)
    for _ in range(100):
        x, items, theta = _random_instance(rng)
        expected = _brute_log_likelihood(x, items.a, items.b, theta)
        actual = log_likelihood(x, items, theta, policy="as-missing")
        assert actual == pytest.approx(expected, rel=1e-10, abs=1e-12)


def test_as_incorrect_scores_absent_as_zero():
    rng = np.random.default_rng(12)
    x, items, theta = _random_instance(rng)
    filled = np.where(np.isnan(x), 0.0, x)
    assert log_likelihood(x, items, theta, "as-incorrect") == pytest.approx(
        _brute_log_likelihood(filled, items.a, items.b, theta), rel=1e-10
    )


def test_log_likelihood_dimension_mismatch():
    items = ItemParameters(a=[1.0, 1.0], b=[0.0, 0.0])
    with pytest.raises(IntegrityError):
        log_likelihood(np.ones((3, 3)), items, np.zeros(3))


def _check_gradient(x, items, theta, eps=1e-5):
    grad_theta, grad_a, grad_b = log_likelihood_gradient(x, items, theta, "as-missing")

    def value(theta=theta, a=items.a, b=items.b):
        return log_likelihood(x, ItemParameters(a=a, b=b), theta, "as-missing")

    for i in range(len(theta)):
        step = np.zeros_like(theta)
        step[i] = eps
        numeric = (value(theta=theta + step) - value(theta=theta - step)) / (2 * eps)
        assert grad_theta[i] == pytest.approx(numeric, rel=1e-4, abs=1e-6)
    for j in range(len(items)):
        step = np.zeros(len(items))
        step[j] = eps
        numeric_a = (value(a=items.a + step) - value(a=items.a - step)) / (2 * eps)
        numeric_b = (value(b=items.b + step) - value(b=items.b - step)) / (2 * eps)
        assert grad_a[j] == pytest.approx(numeric_a, rel=1e-4, abs=1e-6)
        assert grad_b[j] == pytest.approx(numeric_b, rel=1e-4, abs=1e-6)


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(13)
    for _ in range(100):
        x, items, theta = _random_instance(rng, n_students=3, n_items=4)
        _check_gradient(x, items, theta)


def test_half_correct_on_symmetric_items_is_zero():
    items = ItemParameters(a=[1.0, 1.0], b=[0.0, 0.0])
    abilities = estimate_abilities(np.array([[1.0, 0.0]]), items)
    assert abilities.theta[0] == pytest.approx(0.0, abs=1e-8)
    assert abilities.flags == (StudentFlag.OK.value,)


def test_degenerate_students_are_clamped():
    items = ItemParameters(a=[1.0, 1.2, 0.8], b=[-0.5, 0.0, 0.5])
    responses = np.array(
        [[1.0, 1.0, 1.0], [0.0, 0.0, 0.0], [np.nan, np.nan, np.nan], [1.0, np.nan, 0.0]]
    )
    abilities = estimate_abilities(responses, items, policy="as-missing")
    assert abilities.flags[:3] == (
        StudentFlag.CLAMPED_HIGH.value,
        StudentFlag.CLAMPED_LOW.value,
        StudentFlag.NO_DATA.value,
    )
    npt.assert_array_equal(abilities.theta[:3], [4.0, -4.0, -4.0])
    assert abilities.flags[3] == StudentFlag.OK.value
    assert -4.0 < abilities.theta[3] < 4.0
    npt.assert_array_equal(abilities.estimable, [False, False, False, True])


def test_abilities_are_stationary():
    rng = np.random.default_rng(14)
    items = ItemParameters(a=rng.uniform(0.5, 2.0, 20), b=rng.normal(0, 1, 20))
    responses = (rng.random((50, 20)) < 0.6).astype(float)
    abilities = estimate_abilities(responses, items)
    ok = abilities.estimable
    grad_theta, _, _ = log_likelihood_gradient(responses, items, abilities)
    interior = ok & (np.abs(abilities.theta) < 4.0)
    npt.assert_allclose(grad_theta[interior], 0.0, atol=1e-5)


def test_abilities_permutation_equivariant():
    rng = np.random.default_rng(15)
    items = ItemParameters(a=rng.uniform(0.5, 2.0, 10), b=rng.normal(0, 1, 10))
    responses = (rng.random((30, 10)) < 0.5).astype(float)
    order = rng.permutation(30)
    theta = estimate_abilities(responses, items).theta
    permuted = estimate_abilities(responses[order], items).theta
    npt.assert_allclose(permuted, theta[order], rtol=0, atol=1e-10)


def test_abilities_need_items():
    with pytest.raises(DomainError):
        estimate_abilities(np.zeros((2, 0)), ItemParameters(a=[], b=[]))


def test_calibration_config_bounds():
    with pytest.raises(DomainError):
        CalibrationConfig(a_bounds=(0.0, 4.0))
    with pytest.raises(DomainError):
        CalibrationConfig(theta_bounds=(2.0, -2.0))


def test_calibration_recovers_abilities(cohort, calibration):
    ok = calibration.abilities.estimable
    r = np.corrcoef(calibration.abilities.theta[ok], cohort.theta_true[ok])[0, 1]
    assert r >= 0.85


def test_calibration_recovers_difficulties(cohort, calibration):
    b_hat, b_true = calibration.items.b, cohort.items_true.b
    assert np.corrcoef(b_hat, b_true)[0, 1] >= 0.9
    assert np.sqrt(np.mean((b_hat - b_true) ** 2)) <= 0.25


def test_calibration_log_likelihood_never_decreases(calibration):
    trace = np.asarray(calibration.trace)
    assert np.all(np.diff(trace) >= 0)
    assert calibration.log_likelihood == trace[-1]
    assert calibration.iterations == len(trace) - 1


def test_calibration_is_standardised(calibration):
    theta = calibration.abilities.theta[calibration.abilities.estimable]
    assert theta.mean() == pytest.approx(0.0, abs=1e-2)
    assert theta.std() == pytest.approx(1.0, abs=1e-2)


def test_calibration_parameters_in_bounds(calibration):
    assert np.all((calibration.items.a >= 0.2) & (calibration.items.a <= 4.0))
    assert np.all(np.abs(calibration.items.b) <= 4.0)
    assert np.all(np.abs(calibration.abilities.theta) <= 4.0)


def test_convergence_frame(calibration):
    frame = calibration.convergence_frame()
    assert list(frame.columns) == ["iteration", "log_likelihood", "gain"]
    assert np.isnan(frame["gain"].iloc[0])
    assert (frame["gain"].iloc[1:] >= 0).all()


def test_calibration_two_by_two():
    result = (
        JointMaximumLikelihoodCalibration()
        .calibrate(np.array([[1.0, 0.0], [0.0, 1.0]]))
        .calibration_
    )
    assert np.all(np.isfinite(result.abilities.theta))
    assert np.all(np.isfinite(result.items.a)) and np.all(np.isfinite(result.items.b))
    assert np.all(np.diff(result.trace) >= 0)
    assert result.converged
    assert result.abilities.theta.mean() == pytest.approx(0.0, abs=1e-12)


def test_calibration_flags_degenerate_rows_and_columns():
    responses = np.array(
        [
            [1.0, 0.0, 1.0, 1.0],
            [0.0, 1.0, 1.0, 0.0],
            [1.0, 1.0, 1.0, 0.0],
            [0.0, 0.0, 1.0, 0.0],
            [1.0, 0.0, 1.0, 1.0],
        ]
    )
    result = JointMaximumLikelihoodCalibration().calibrate(responses).calibration_
    assert result.items.flags[2] == "all_correct"
    assert result.items.a[2] == 4.0 and result.items.b[2] == -4.0


@pytest.mark.parametrize("shape", [(1, 5), (5, 1)])
def test_calibration_needs_two_by_two(shape):
    with pytest.raises(DomainError):
        JointMaximumLikelihoodCalibration().calibrate(np.ones(shape))


def test_calibration_overrides():
    jml = JointMaximumLikelihoodCalibration(CalibrationConfig(max_iter=5), tol=1e-3)
    assert jml.config.max_iter == 5
    assert jml.config.tol == 1e-3


def test_calibration_deterministic(cohort):
    matrix = cohort.matrix.prefix(2)
    first = JointMaximumLikelihoodCalibration().calibrate(matrix).calibration_
    second = JointMaximumLikelihoodCalibration().calibrate(matrix).calibration_
    npt.assert_array_equal(first.abilities.theta, second.abilities.theta)
    npt.assert_array_equal(first.items.b, second.items.b)
    assert isinstance(first.abilities, AbilityVector)


@pytest.mark.parametrize(
    "view, k",
    [
        ("unit_slice", 1),
        ("unit_slice", 5),
        ("unit_slice", 14),
        ("prefix", 1),
        ("prefix", 2),
        ("prefix", 4),
    ],
)
def test_short_matrices_converge(default_cohort, view, k):
    matrix = getattr(default_cohort.matrix, view)(k)
    result = JointMaximumLikelihoodCalibration().calibrate(matrix).calibration_
    assert result.converged
    assert result.iterations < 100
    assert np.all(np.diff(result.trace) >= 0)


def test_short_matrix_stays_in_bounds_and_standardised(default_cohort):
    matrix = default_cohort.matrix.unit_slice(5)
    result = JointMaximumLikelihoodCalibration().calibrate(matrix).calibration_
    theta = result.abilities.theta[result.abilities.estimable]
    assert np.all((result.items.a >= 0.2) & (result.items.a <= 4.0))
    assert np.all(np.abs(result.items.b) <= 4.0)
    assert theta.mean() == pytest.approx(0.0, abs=1e-2)
    assert theta.std() == pytest.approx(1.0, abs=1e-2)


def test_calibration_as_missing(cohort):
    matrix = cohort.matrix
    missing = JointMaximumLikelihoodCalibration().calibrate(matrix, "as-missing").calibration_
    incorrect = JointMaximumLikelihoodCalibration().calibrate(matrix, "as-incorrect").calibration_
    assert missing.converged
    assert np.all(np.diff(missing.trace) >= 0)

    # the reported log-likelihood covers the scored cells of the estimable students only
    ok = missing.abilities.estimable
    scored = matrix.scored_view("as-missing")[ok]
    expected = log_likelihood(scored, missing.items, missing.abilities.theta[ok], "as-missing")
    assert missing.log_likelihood == pytest.approx(expected, rel=1e-10)
    assert not np.array_equal(missing.items.b, incorrect.items.b)
