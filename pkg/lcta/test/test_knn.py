# Introduction and explanation regarding the test suite
"""
This code is a test suite for the trajectory nearest-neighbor failure prediction of lcta.

The vectorised cohort prediction is compared against a plain loop that computes every pair
distance on its own, sorts the candidates by (distance, student id) and counts the successful
neighbors. The tie rule, the reference-size checks and both prediction modes are tested on
small hand-made trends.

Run the tests with 'pytest lcta/test'.
"""

# Import necessary libraries and functions to be tested.
import math

import numpy as np
import numpy.testing as npt
import pandas as pd
import pytest

from lcta.modules.knn import (
    PredictionMode,
    SimilarityConfig,
    TieBreak,
    TrajectoryNearestNeighbors,
    nearest_neighbors,
    predict,
    predictions_to_frame,
    similarity,
)
from lcta.modules.trends import AbilityTrend
from lcta.utils.errors import DomainError, IntegrityError
from lcta.utils.lcta_dataclass import OutcomeLabels


def make_trend(rows: dict) -> AbilityTrend:
    values = pd.DataFrame.from_dict(rows, orient="index")
    values.columns = list(range(1, values.shape[1] + 1))
    return AbilityTrend(kind="cumulative", values=values)


def _brute_force(values, ids, passed, target, k, n_neighbors=10):
    candidates = []
    for other in range(len(ids)):
        if other == target:
            continue
        acc = 0.0
        for unit in range(k):
            d = values[other, unit] - values[target, unit]
            acc += d * d
        candidates.append((math.sqrt(acc / k), ids[other], passed[other]))
    candidates.sort(key=lambda c: (c[0], c[1]))
    chosen = candidates[:n_neighbors]
    mu = sum(c[2] for c in chosen) / n_neighbors
    return [c[1] for c in chosen], [c[0] for c in chosen], 1.0 - mu


@pytest.fixture(scope="module")
def random_cohort():
    rng = np.random.default_rng(5)
    n_students = 200
    ids = [f"s{i:04d}" for i in rng.permutation(n_students) + 1]
    values = rng.normal(0, 1, (n_students, 11))
    passed = (rng.random(n_students) < 0.8).astype(int)
    trend = make_trend(dict(zip(ids, values)))
    labels = OutcomeLabels(student_ids=ids, passed=passed)
    return trend, labels, values, ids, passed


def test_similarity_values():
    trend = make_trend({"a": [0.0, 0.0], "b": [3.0, 4.0], "c": [0.0, 0.0]})
    assert similarity(trend, "a", "b", 1) == pytest.approx(3.0)
    assert similarity(trend, "a", "b", 2) == pytest.approx(math.sqrt(12.5))
    assert similarity(trend, "a", "c", 2) == 0.0


def test_similarity_is_symmetric():
    trend = make_trend({"a": [0.3, -1.2, 0.5], "b": [1.1, 0.4, -0.7]})
    assert similarity(trend, "a", "b", 3) == similarity(trend, "b", "a", 3)


def test_similarity_needs_two_students():
    trend = make_trend({"a": [0.0], "b": [1.0]})
    with pytest.raises(DomainError):
        similarity(trend, "a", "a", 1)


def test_similarity_unknown_student():
    trend = make_trend({"a": [0.0], "b": [1.0]})
    with pytest.raises(IntegrityError):
        similarity(trend, "a", "z", 1)


@pytest.mark.parametrize("k", [4, 7, 11])
def test_cohort_prediction_matches_brute_force(random_cohort, k):
    trend, labels, values, ids, passed = random_cohort
    knn = TrajectoryNearestNeighbors(n_neighbors=10).predict_cohort(trend, k, labels)
    assert [p.student_id for p in knn.predictions_] == ids
    for target, prediction in enumerate(knn.predictions_):
        neighbor_ids, distances, p_fail = _brute_force(values, ids, passed, target, k)
        assert list(prediction.neighbor_ids) == neighbor_ids
        assert list(prediction.neighbor_distances) == distances
        assert prediction.p_fail == p_fail
        assert prediction.k == k


def test_single_prediction_matches_cohort(random_cohort):
    trend, labels, _, ids, _ = random_cohort
    knn = TrajectoryNearestNeighbors().predict_cohort(trend, 7, labels)
    single = predict(trend, ids[3], 7, labels)
    assert single == knn.predictions_[3]


def test_vote_arithmetic(random_cohort):
    trend, labels, _, _, _ = random_cohort
    knn = TrajectoryNearestNeighbors().predict_cohort(trend, 4, labels)
    for prediction in knn.predictions_:
        assert prediction.p_fail == 1.0 - prediction.mu
        assert prediction.mu == prediction.n_successful / 10
        assert len(prediction.neighbor_ids) == 10
        assert prediction.student_id not in prediction.neighbor_ids
        assert list(prediction.neighbor_distances) == sorted(prediction.neighbor_distances)


def test_ties_break_by_student_id():
    trend = make_trend({"t": [0.0], "r3": [1.0], "r1": [-1.0], "r2": [1.0], "r0": [5.0]})
    config = SimilarityConfig(n_neighbors=2, k=1)
    chosen = nearest_neighbors(trend, "t", 1, ["r3", "r1", "r2", "r0"], config)
    assert chosen == [("r1", 1.0), ("r2", 1.0)]


def test_ties_break_by_input_order():
    trend = make_trend({"t": [0.0], "r3": [1.0], "r1": [-1.0], "r2": [1.0], "r0": [5.0]})
    config = SimilarityConfig(n_neighbors=2, k=1, tie_break=TieBreak.INPUT_ORDER)
    chosen = nearest_neighbors(trend, "t", 1, ["r3", "r1", "r2", "r0"], config)
    assert [sid for sid, _ in chosen] == ["r3", "r1"]


def test_target_cannot_be_its_own_reference():
    trend = make_trend({"t": [0.0], "r": [1.0]})
    with pytest.raises(DomainError):
        nearest_neighbors(trend, "t", 1, ["t", "r"], SimilarityConfig(n_neighbors=1, k=1))


def _cohort(n_students):
    ids = [f"s{i:02d}" for i in range(n_students)]
    values = {sid: [0.1 * i, -0.05 * i] for i, sid in enumerate(ids)}
    labels = OutcomeLabels(student_ids=ids, passed=[i % 3 != 0 for i in range(n_students)])
    return make_trend(values), labels


def test_reference_of_exactly_n_neighbors():
    trend, labels = _cohort(11)
    reference = list(trend.student_ids[1:])
    chosen = nearest_neighbors(trend, "s00", 2, reference)
    assert sorted(sid for sid, _ in chosen) == reference


def test_reference_smaller_than_n_neighbors():
    trend, _ = _cohort(10)
    with pytest.raises(DomainError, match="fewer than"):
        nearest_neighbors(trend, "s00", 2, list(trend.student_ids[1:]))


def test_cohort_of_eleven_uses_everybody_else():
    trend, labels = _cohort(11)
    knn = TrajectoryNearestNeighbors().predict_cohort(trend, 2, labels)
    for prediction in knn.predictions_:
        expected = set(trend.student_ids) - {prediction.student_id}
        assert set(prediction.neighbor_ids) == expected


def test_cohort_of_ten_is_too_small():
    trend, labels = _cohort(10)
    with pytest.raises(DomainError):
        TrajectoryNearestNeighbors().predict_cohort(trend, 2, labels)


def test_loo_needs_every_label():
    trend, labels = _cohort(12)
    partial = OutcomeLabels(student_ids=labels.student_ids[1:], passed=labels.passed[1:])
    with pytest.raises(IntegrityError, match="no outcome label"):
        TrajectoryNearestNeighbors().predict_cohort(trend, 2, partial)


def test_horizon_beyond_trend():
    trend, labels = _cohort(12)
    with pytest.raises(DomainError):
        TrajectoryNearestNeighbors().predict_cohort(trend, 3, labels)


def test_reference_mode_predicts_unlabeled():
    trend, labels = _cohort(14)
    known = OutcomeLabels(student_ids=labels.student_ids[:12], passed=labels.passed[:12])
    knn = TrajectoryNearestNeighbors().predict_cohort(trend, 2, known, PredictionMode.REFERENCE)
    assert [p.student_id for p in knn.predictions_] == ["s12", "s13"]
    for prediction in knn.predictions_:
        assert set(prediction.neighbor_ids) <= set(known.student_ids)


def test_reference_mode_with_separate_trend():
    reference, labels = _cohort(12)
    new = make_trend({"n1": [0.15, -0.05], "n2": [1.0, -0.5]})
    knn = TrajectoryNearestNeighbors(n_neighbors=3).predict_cohort(
        new, 2, labels, "reference", reference_trend=reference
    )
    assert knn.predictions_[0].neighbor_ids[0] in {"s01", "s02"}
    with pytest.raises(DomainError, match="also in the reference"):
        TrajectoryNearestNeighbors().predict_cohort(
            reference, 2, labels, "reference", reference_trend=reference
        )


def test_invalid_n_neighbors():
    with pytest.raises(DomainError):
        TrajectoryNearestNeighbors(n_neighbors=0)


def test_predictions_to_frame(random_cohort):
    trend, labels, _, ids, _ = random_cohort
    knn = TrajectoryNearestNeighbors().predict_cohort(trend, 11, labels)
    frame = predictions_to_frame(knn.predictions_)
    assert list(frame.columns) == ["student_id", "k", "mu", "p_fail", "neighbor_ids"]
    assert frame["student_id"].tolist() == ids
    assert frame["neighbor_ids"].iloc[0].count(";") == 9
    npt.assert_allclose(frame["p_fail"] + frame["mu"], 1.0)
