"""Thresholding and evaluation of failure predictions.

FAILED is the positive class throughout: a true positive is a student predicted to fail who
actually failed.
"""

from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
import logging

import numpy as np
import pandas as pd
from sklearn import metrics

from lcta.utils.errors import DomainError, IntegrityError
from lcta.utils.irt import AbilityVector
from lcta.utils.lcta_dataclass import OutcomeLabels

logger = logging.getLogger(__name__)

# Predicted failure probabilities are compared after snapping to this many decimals, so that
# grid values such as 1 - 0.9 compare equal to 0.1.
P_FAIL_DECIMALS = 10

# Cutoffs of ROC and PR curves: the all-negative endpoint, then the neighbor-vote grid downwards
THRESHOLD_GRID = (np.inf,) + tuple(i / 10 for i in range(10, -1, -1))

# Counts (tp, fp, tn, fn) whose reported misclassification rate disagrees with the counts
KNOWN_DISCREPANCIES = {
    (69, 104, 817, 137): "reported rate 0.22 disagrees with these counts (0.214)",
}


@dataclass(kw_only=True, frozen=True)
class ConfusionMatrix:
    """Counts of a binary failure prediction.

    Attributes:
        tp (int): Predicted failed, actually failed.
        fp (int): Predicted failed, actually successful.
        tn (int): Predicted successful, actually successful.
        fn (int): Predicted successful, actually failed.
    """

    tp: int
    fp: int
    tn: int
    fn: int

    def __post_init__(self):
        for name in ("tp", "fp", "tn", "fn"):
            value = getattr(self, name)
            if int(value) != value or value < 0:
                raise DomainError(f"Confusion count {name} must be a non-negative integer.")
            object.__setattr__(self, name, int(value))

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def counts(self) -> tuple[int, int, int, int]:
        return self.tp, self.fp, self.tn, self.fn

    def to_frame(self) -> pd.DataFrame:
        """Observed classes as rows and predicted classes as columns, with totals."""
        frame = pd.DataFrame(
            {
                "observed": ["successful", "failed", "total"],
                "predicted_successful": [self.tn, self.fn, self.tn + self.fn],
                "predicted_failed": [self.fp, self.tp, self.fp + self.tp],
            }
        )
        frame["total"] = frame["predicted_successful"] + frame["predicted_failed"]
        return frame


@dataclass(kw_only=True, frozen=True)
class Rates:
    """Rates derived from a confusion matrix; None where the denominator is zero."""

    tpr: float | None
    fpr: float | None
    recall: float | None
    precision: float | None


@dataclass(kw_only=True, frozen=True)
class CurvePoint:
    """One cutoff of a ROC (x = FPR, y = TPR) or PR (x = recall, y = precision) curve."""

    threshold: float
    x: float | None
    y: float | None
    counts: ConfusionMatrix


def failure_probabilities(predictions) -> tuple[np.ndarray, tuple[str, ...]]:
    """
    Extract failure probabilities and, where available, student ids.

    Args:
        predictions: A sequence of ``FailurePrediction``, a frame with ``student_id`` and
            ``p_fail`` columns, or an array of probabilities.

    Returns:
        tuple: Probabilities and student ids (empty when the input carries none).
    """
    if isinstance(predictions, pd.DataFrame):
        return predictions["p_fail"].to_numpy(dtype=float), tuple(predictions["student_id"])
    items = list(predictions) if not isinstance(predictions, np.ndarray) else None
    if items and hasattr(items[0], "p_fail"):
        return (
            np.array([p.p_fail for p in items], dtype=float),
            tuple(p.student_id for p in items),
        )
    return np.asarray(predictions, dtype=float), ()


def _observed_failed(observed, student_ids: tuple[str, ...]) -> np.ndarray:
    if isinstance(observed, OutcomeLabels):
        if student_ids:
            observed = observed.align(student_ids)
        return observed.failed
    return np.asarray(observed, dtype=bool)


def classify(predictions, cutoff: float) -> np.ndarray:
    """
    Predict FAILED where the failure probability reaches the cutoff.

    Args:
        predictions: Failure predictions, see :func:`failure_probabilities`.
        cutoff (float): Non-negative cutoff; values above 1 predict nobody to fail.

    Returns:
        np.ndarray: Boolean array, True for predicted failure.
    """
    if not cutoff >= 0:
        raise DomainError(f"Cutoff must be a non-negative number, got {cutoff}.")
    p_fail, _ = failure_probabilities(predictions)
    return np.round(p_fail, P_FAIL_DECIMALS) >= cutoff


def confusion(predicted, observed) -> ConfusionMatrix:
    """
    Confusion counts of predicted against observed failures.

    Args:
        predicted (array_like): Boolean predicted failure per student.
        observed (OutcomeLabels or array_like): Observed outcomes (labels) or a boolean
            observed-failure array, aligned with ``predicted``.

    Raises:
        IntegrityError: If the lengths differ.
    """
    predicted = np.asarray(predicted, dtype=bool)
    failed = _observed_failed(observed, ())
    if predicted.shape != failed.shape:
        raise IntegrityError(
            f"{len(predicted)} predictions cannot be compared with {len(failed)} outcomes."
        )
    if predicted.size == 0:
        return ConfusionMatrix(tp=0, fp=0, tn=0, fn=0)
    (tn, fp), (fn, tp) = metrics.confusion_matrix(failed, predicted, labels=[False, True])
    return ConfusionMatrix(tp=tp, fp=fp, tn=tn, fn=fn)


def misclassification_rate(cm: ConfusionMatrix) -> float:
    """(fp + fn) / total; raises DomainError on an empty matrix."""
    if cm.total == 0:
        raise DomainError("The misclassification rate of an empty confusion matrix is undefined.")
    return (cm.fp + cm.fn) / cm.total


def accuracy(cm: ConfusionMatrix) -> float:
    """1 - misclassification rate."""
    return 1.0 - misclassification_rate(cm)


def hitting_ratio(cm: ConfusionMatrix) -> float | None:
    """Share of predicted failures that actually failed (precision); None if nobody is predicted."""
    predicted = cm.tp + cm.fp
    return cm.tp / predicted if predicted else None


def rates(cm: ConfusionMatrix) -> Rates:
    """True and false positive rates, recall and precision of a confusion matrix."""
    failed = cm.tp + cm.fn
    successful = cm.fp + cm.tn
    tpr = cm.tp / failed if failed else None
    return Rates(
        tpr=tpr,
        fpr=cm.fp / successful if successful else None,
        recall=tpr,
        precision=hitting_ratio(cm),
    )


def _curve_inputs(predictions, observed):
    p_fail, student_ids = failure_probabilities(predictions)
    failed = _observed_failed(observed, student_ids)
    if failed.shape != p_fail.shape:
        raise IntegrityError("Predictions and outcomes must have the same length.")
    if failed.all() or not failed.any():
        raise DomainError("Curves need at least one failed and one successful student.")
    return p_fail, failed


def roc_curve(predictions, observed, thresholds=THRESHOLD_GRID) -> list[CurvePoint]:
    """
    ROC points (FPR, TPR) at every cutoff, from the all-negative endpoint to cutoff 0.

    Raises:
        DomainError: If only one outcome class is observed.
    """
    p_fail, failed = _curve_inputs(predictions, observed)
    points = []
    for threshold in sorted(thresholds, reverse=True):
        cm = confusion(classify(p_fail, threshold), failed)
        cm_rates = rates(cm)
        points.append(CurvePoint(threshold=threshold, x=cm_rates.fpr, y=cm_rates.tpr, counts=cm))
    return points


def pr_curve(predictions, observed, thresholds=THRESHOLD_GRID) -> list[CurvePoint]:
    """
    Recall-precision points at every cutoff; precision is None where nobody is predicted.

    Raises:
        DomainError: If only one outcome class is observed.
    """
    p_fail, failed = _curve_inputs(predictions, observed)
    points = []
    for threshold in sorted(thresholds, reverse=True):
        cm = confusion(classify(p_fail, threshold), failed)
        cm_rates = rates(cm)
        points.append(
            CurvePoint(threshold=threshold, x=cm_rates.recall, y=cm_rates.precision, counts=cm)
        )
    return points


def auc(points: list[CurvePoint]) -> float:
    """Trapezoidal area under the defined points of a curve."""
    defined = [(p.x, p.y) for p in points if p.x is not None and p.y is not None]
    if len(defined) < 2:
        raise DomainError("The area under a curve needs at least two defined points.")
    x, y = np.array(defined, dtype=float).T
    return float(metrics.auc(x, y))


def curve_to_frame(points: list[CurvePoint], x_name: str, y_name: str) -> pd.DataFrame:
    """Curve points as rows ``threshold,<x_name>,<y_name>,tp,fp,tn,fn``."""
    return pd.DataFrame(
        {
            "threshold": [p.threshold for p in points],
            x_name: [np.nan if p.x is None else p.x for p in points],
            y_name: [np.nan if p.y is None else p.y for p in points],
            "tp": [p.counts.tp for p in points],
            "fp": [p.counts.fp for p in points],
            "tn": [p.counts.tn for p in points],
            "fn": [p.counts.fn for p in points],
        }
    )


def predicted_count_bars(predictions, observed, cutoffs) -> pd.DataFrame:
    """
    Number of students predicted to fail at every cutoff, split by observed outcome.

    Returns:
        pd.DataFrame: Columns ``cutoff``, ``predicted_failed``, ``observed_failed``,
            ``observed_successful`` (the split of ``predicted_failed``) and
            ``predicted_successful``.
    """
    p_fail, student_ids = failure_probabilities(predictions)
    failed = _observed_failed(observed, student_ids)
    rows = []
    for cutoff in cutoffs:
        cm = confusion(classify(p_fail, cutoff), failed)
        rows.append(
            {
                "cutoff": float(cutoff),
                "predicted_failed": cm.tp + cm.fp,
                "observed_failed": cm.tp,
                "observed_successful": cm.fp,
                "predicted_successful": cm.tn + cm.fn,
            }
        )
    return pd.DataFrame(
        rows,
        columns=[
            "cutoff",
            "predicted_failed",
            "observed_failed",
            "observed_successful",
            "predicted_successful",
        ],
    )


def majority_baseline(observed) -> ConfusionMatrix:
    """Confusion matrix of predicting the majority outcome for everybody (successful on a tie)."""
    failed = _observed_failed(observed, ())
    predict_failed = failed.sum() > (~failed).sum()
    return confusion(np.full(failed.shape, predict_failed), failed)


def _abilities_and_failed(abilities, observed):
    if isinstance(abilities, AbilityVector):
        failed = _observed_failed(observed, abilities.student_ids)
        theta = abilities.theta
    else:
        failed = _observed_failed(observed, ())
        theta = np.asarray(abilities, dtype=float)
    if theta.shape != failed.shape:
        raise IntegrityError("There must be exactly one outcome per ability.")
    return theta, failed


def ability_histogram(
    abilities,
    observed,
    bin_width: float = 0.25,
    bounds: tuple[float, float] = (-4.0, 4.0),
) -> pd.DataFrame:
    """
    Ability histogram of successful and failed students on a common grid.

    Returns:
        pd.DataFrame: Columns ``bin_left``, ``bin_right``, ``successful``, ``failed``.
    """
    if bin_width <= 0:
        raise DomainError("The bin width must be positive.")
    theta, failed = _abilities_and_failed(abilities, observed)
    low, high = bounds
    n_bins = int(np.ceil(round((high - low) / bin_width, 9)))
    edges = low + bin_width * np.arange(n_bins + 1)
    successful_counts, _ = np.histogram(np.clip(theta[~failed], low, high), bins=edges)
    failed_counts, _ = np.histogram(np.clip(theta[failed], low, high), bins=edges)
    return pd.DataFrame(
        {
            "bin_left": edges[:-1],
            "bin_right": edges[1:],
            "successful": successful_counts,
            "failed": failed_counts,
        }
    )


def group_summary(abilities, observed) -> pd.DataFrame:
    """Count, mean and standard deviation of the abilities of each outcome group."""
    theta, failed = _abilities_and_failed(abilities, observed)
    frame = pd.DataFrame(
        {"group": np.where(failed, "failed", "successful"), "theta": theta}
    )
    summary = frame.groupby("group")["theta"].agg(["count", "mean", "std"])
    summary = summary.reindex(["successful", "failed"]).rename(columns={"count": "n"})
    summary["n"] = summary["n"].fillna(0).astype(int)
    return summary.reset_index()


def round_half_up(value: float | None, digits: int = 2) -> float | None:
    """Round for display half up (0.125 -> 0.13); None stays None."""
    if value is None or value != value:
        return None
    quantum = Decimal(1).scaleb(-digits)
    return float(Decimal(repr(float(value))).quantize(quantum, rounding=ROUND_HALF_UP))


def discrepancy_note(cm: ConfusionMatrix) -> str:
    """Note for counts whose reported rate is known to disagree with the counts."""
    return KNOWN_DISCREPANCIES.get(cm.counts(), "")
