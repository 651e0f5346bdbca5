from dataclasses import dataclass
from enum import Enum
import logging

import numpy as np
import pandas as pd

from lcta.modules.trends import AbilityTrend
from lcta.utils.errors import DomainError, IntegrityError
from lcta.utils.lcta_dataclass import OutcomeLabels

logger = logging.getLogger(__name__)


class TieBreak(str, Enum):
    """Order among reference students at equal distance."""

    STUDENT_ID = "student_id"
    INPUT_ORDER = "input_order"


class PredictionMode(str, Enum):
    """LOO predicts every labeled student from all others, REFERENCE predicts new students."""

    LOO = "loo"
    REFERENCE = "reference"


@dataclass(kw_only=True)
class SimilarityConfig:
    """Neighbor vote settings.

    Attributes:
        n_neighbors (int): Number of nearest trajectories that vote.
        k (int): Horizon, the number of leading units compared.
        tie_break (TieBreak): Order among equally distant reference students.
    """

    n_neighbors: int = 10
    k: int = 11
    tie_break: TieBreak = TieBreak.STUDENT_ID

    def __post_init__(self):
        if not isinstance(self.n_neighbors, (int, np.integer)) or self.n_neighbors < 1:
            raise DomainError(f"n_neighbors must be a positive integer, got {self.n_neighbors}.")
        if not isinstance(self.k, (int, np.integer)) or self.k < 1:
            raise DomainError(f"Horizon k must be a positive integer, got {self.k}.")
        try:
            self.tie_break = TieBreak(self.tie_break)
        except ValueError as err:
            raise DomainError(f"Unknown tie-break rule '{self.tie_break}'.") from err


@dataclass(kw_only=True, frozen=True)
class FailurePrediction:
    """Neighbor vote for one student at one horizon.

    Attributes:
        student_id (str): The predicted student.
        k (int): Horizon.
        mu (float): Share of successful neighbors.
        p_fail (float): Failure probability, exactly ``1 - mu``.
        n_successful (int): Number of successful neighbors.
        neighbor_ids (tuple[str, ...]): Selected neighbors, nearest first.
        neighbor_distances (tuple[float, ...]): Their trajectory distances, non-decreasing.
    """

    student_id: str
    k: int
    mu: float
    p_fail: float
    n_successful: int
    neighbor_ids: tuple[str, ...]
    neighbor_distances: tuple[float, ...]


def trajectory_distances(target: np.ndarray, reference: np.ndarray) -> np.ndarray:
    """
    Root-mean-square distance between one trajectory and every reference trajectory.

    The squared differences are accumulated unit by unit, left to right, so that the result
    does not depend on the number of reference rows.

    Args:
        target (np.ndarray): Abilities (k,) of the target student.
        reference (np.ndarray): Abilities (R, k) of the reference students.

    Returns:
        np.ndarray: Distances (R,).
    """
    target = np.asarray(target, dtype=float)
    reference = np.atleast_2d(np.asarray(reference, dtype=float))
    horizon = target.shape[0]
    total = np.zeros(reference.shape[0])
    for unit in range(horizon):
        diff = reference[:, unit] - target[unit]
        total += diff * diff
    return np.sqrt(total / horizon)


def _row(trend: AbilityTrend, student_id: str, k: int) -> np.ndarray:
    try:
        position = trend.values.index.get_loc(student_id)
    except KeyError as err:
        raise IntegrityError(f"Student '{student_id}' is not in the trend.") from err
    return trend.horizon(k)[position]


def similarity(trend: AbilityTrend, i: str, j: str, k: int) -> float:
    """
    Trajectory similarity S of two students over units 1..k.

    S = sqrt(mean over l of (theta(j, l) - theta(i, l))^2). Smaller is more similar.

    Raises:
        DomainError: If ``i`` and ``j`` are the same student or the horizon is not available.
    """
    if i == j:
        raise DomainError("Similarity is only defined between two different students.")
    return float(trajectory_distances(_row(trend, i, k), _row(trend, j, k)[None, :])[0])


def _order(distances: np.ndarray, ids: np.ndarray, tie_break: TieBreak) -> np.ndarray:
    secondary = ids if tie_break is TieBreak.STUDENT_ID else np.arange(len(ids))
    return np.lexsort((secondary, distances))


def _check_reference(n_reference: int, n_neighbors: int) -> None:
    if n_reference < n_neighbors:
        raise DomainError(
            f"The reference cohort has {n_reference} student(s), fewer than "
            f"n_neighbors={n_neighbors}."
        )


def nearest_neighbors(
    trend: AbilityTrend,
    i: str,
    k: int,
    reference: list[str] | tuple[str, ...],
    config: SimilarityConfig | None = None,
    reference_trend: AbilityTrend | None = None,
) -> list[tuple[str, float]]:
    """
    The ``n_neighbors`` reference students closest to student ``i`` over units 1..k.

    Args:
        trend (AbilityTrend): Trend holding student ``i``.
        i (str): Target student id.
        k (int): Horizon.
        reference (sequence of str): Reference student ids, not containing ``i``.
        config (SimilarityConfig, optional): Vote settings.
        reference_trend (AbilityTrend, optional): Trend holding the reference students, by
            default ``trend``.

    Returns:
        list[tuple[str, float]]: (student id, distance) pairs, nearest first.

    Raises:
        DomainError: If ``i`` is in the reference or the reference is smaller than
            ``n_neighbors``.
    """
    config = config or SimilarityConfig(k=k)
    reference_trend = reference_trend or trend
    ids = np.asarray(list(reference), dtype=str)
    if i in set(ids):
        raise DomainError(f"Student '{i}' cannot be its own reference.")
    _check_reference(len(ids), config.n_neighbors)
    rows = np.stack([_row(reference_trend, sid, k) for sid in ids])
    distances = trajectory_distances(_row(trend, i, k), rows)
    chosen = _order(distances, ids, config.tie_break)[: config.n_neighbors]
    return [(str(ids[c]), float(distances[c])) for c in chosen]


def _vote(student_id, k, neighbor_ids, neighbor_distances, passed) -> FailurePrediction:
    n_successful = int(passed.sum())
    mu = n_successful / len(passed)
    return FailurePrediction(
        student_id=student_id,
        k=int(k),
        mu=mu,
        p_fail=1.0 - mu,
        n_successful=n_successful,
        neighbor_ids=tuple(str(sid) for sid in neighbor_ids),
        neighbor_distances=tuple(float(d) for d in neighbor_distances),
    )


def predict(
    trend: AbilityTrend,
    i: str,
    k: int,
    labels: OutcomeLabels,
    config: SimilarityConfig | None = None,
    reference_trend: AbilityTrend | None = None,
) -> FailurePrediction:
    """
    Failure probability of student ``i`` from the outcomes of its nearest trajectories.

    mu is the share of successful students among the neighbors and p_fail = 1 - mu. The
    reference cohort is every labeled student other than ``i``.

    Raises:
        DomainError: As for :func:`nearest_neighbors`.
    """
    reference = [sid for sid in labels.student_ids if sid != i]
    neighbors = nearest_neighbors(trend, i, k, reference, config, reference_trend)
    ids = [sid for sid, _ in neighbors]
    passed = labels.align(ids).passed
    return _vote(i, k, ids, [d for _, d in neighbors], passed)


class TrajectoryNearestNeighbors:
    """
    Predicts final-examination failure from the outcomes of students with similar cumulative
    ability trajectories.

    The distance between two students is the root-mean-square difference of their abilities
    over the first k units. For each student, the ``n_neighbors`` closest reference students
    are selected in ascending order of distance, ties broken by ascending student id (or by
    reference order). The share of successful neighbors is the predicted success value mu, and
    p_fail = 1 - mu is the failure probability to be thresholded.

    Two modes are available:

    - ``loo``: every labeled student is predicted from all other labeled students.
    - ``reference``: students without a label are predicted from a labeled reference cohort,
        optionally held in a separate (historical) trend.

    Attributes:
        predictions_ (list[FailurePrediction]): One prediction per target student, in trend
            order.

    Methods:
        predict_cohort(trend, k, labels, mode, reference_trend):
            Predicts every target student at horizon k.

    Examples:
        >>> knn = TrajectoryNearestNeighbors(n_neighbors=10)
        >>> knn.predict_cohort(trend, k=7, labels=labels, mode="loo")
        >>> knn.predictions_[0].p_fail
        0.4
    """

    def __init__(self, n_neighbors: int = 10, tie_break: TieBreak | str = TieBreak.STUDENT_ID):
        """
        Initializes the neighbor vote.

        Args:
            n_neighbors (int): Number of voting neighbors. Default is 10.
            tie_break (TieBreak or str): ``student_id`` (default) or ``input_order``.
        """
        SimilarityConfig(n_neighbors=n_neighbors, tie_break=tie_break)
        self.n_neighbors = n_neighbors
        self.tie_break = TieBreak(tie_break)
        self.predictions_ = None

    def predict_cohort(
        self,
        trend: AbilityTrend,
        k: int,
        labels: OutcomeLabels,
        mode: PredictionMode | str = PredictionMode.LOO,
        reference_trend: AbilityTrend | None = None,
    ):
        """
        Predicts failure for a whole cohort at horizon ``k``.

        Args:
            trend (AbilityTrend): Cumulative trend of the target students.
            k (int): Horizon.
            labels (OutcomeLabels): Outcomes of the reference students.
            mode (PredictionMode or str): ``loo`` or ``reference``.
            reference_trend (AbilityTrend, optional): Trend of the reference cohort in
                ``reference`` mode; the labeled students of ``trend`` by default.

        Returns:
            TrajectoryNearestNeighbors: The instance with ``predictions_`` set.

        Raises:
            IntegrityError: If a student lacks a label in ``loo`` mode.
            DomainError: If the reference cohort is too small or overlaps the targets.
        """
        config = SimilarityConfig(n_neighbors=self.n_neighbors, k=k, tie_break=self.tie_break)
        mode = PredictionMode(mode)
        labeled = set(labels.student_ids)

        if mode is PredictionMode.LOO:
            if reference_trend is not None:
                raise DomainError("A reference trend is only used in reference mode.")
            targets = list(trend.student_ids)
            unlabeled = [sid for sid in targets if sid not in labeled]
            if unlabeled:
                raise IntegrityError(
                    f"{len(unlabeled)} student(s) have no outcome label, e.g. '{unlabeled[0]}'."
                )
            source = trend
            reference = targets
            _check_reference(len(reference) - 1, config.n_neighbors)
        else:
            if reference_trend is None:
                source = trend
                reference = [sid for sid in trend.student_ids if sid in labeled]
                targets = [sid for sid in trend.student_ids if sid not in labeled]
                if not targets:
                    raise DomainError("Every student is labeled; there is nobody to predict.")
            else:
                source = reference_trend
                reference = list(reference_trend.student_ids)
                targets = list(trend.student_ids)
                overlap = set(targets) & set(reference)
                if overlap:
                    raise DomainError(
                        f"{len(overlap)} target student(s) are also in the reference cohort."
                    )
                missing = [sid for sid in reference if sid not in labeled]
                if missing:
                    raise IntegrityError(
                        f"{len(missing)} reference student(s) have no label, e.g. '{missing[0]}'."
                    )
            _check_reference(len(reference), config.n_neighbors)

        reference_ids = np.asarray(reference, dtype=str)
        reference_values = np.stack([_row(source, sid, k) for sid in reference])
        target_values = np.stack([_row(trend, sid, k) for sid in targets])
        passed = labels.align(reference).passed
        leave_out = {sid: pos for pos, sid in enumerate(reference)}

        predictions = []
        for target, values in zip(targets, target_values):
            distances = trajectory_distances(values, reference_values)
            order = _order(distances, reference_ids, config.tie_break)
            if mode is PredictionMode.LOO:
                order = order[order != leave_out[target]]
            chosen = order[: config.n_neighbors]
            predictions.append(
                _vote(target, k, reference_ids[chosen], distances[chosen], passed[chosen])
            )
        logger.info(
            "Predicted %d student(s) at k=%d from %d neighbors each.",
            len(predictions),
            k,
            config.n_neighbors,
        )
        self.predictions_ = predictions
        return self


def predictions_to_frame(predictions: list[FailurePrediction]) -> pd.DataFrame:
    """Predictions as rows ``student_id,k,mu,p_fail,neighbor_ids`` (ids ``;``-separated)."""
    return pd.DataFrame(
        {
            "student_id": [p.student_id for p in predictions],
            "k": [p.k for p in predictions],
            "mu": [p.mu for p in predictions],
            "p_fail": [p.p_fail for p in predictions],
            "neighbor_ids": [";".join(p.neighbor_ids) for p in predictions],
        }
    )
