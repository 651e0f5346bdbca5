import logging

import numpy as np

from lcta.utils.errors import DomainError, IntegrityError
from lcta.utils.irt import AbilityVector
from lcta.utils.lcta_dataclass import OutcomeLabels

logger = logging.getLogger(__name__)


def stump_candidates(theta: np.ndarray) -> np.ndarray:
    """Candidate cutoffs: -inf, the midpoints between adjacent distinct values, +inf."""
    distinct = np.unique(np.asarray(theta, dtype=float))
    midpoints = distinct[:-1] + (distinct[1:] - distinct[:-1]) / 2.0
    return np.concatenate([[-np.inf], midpoints, [np.inf]])


class DecisionStump:
    """
    Depth-one decision tree on a single ability feature.

    A student is predicted to fail when their ability lies below the cutoff ``threshold_``. The
    cutoff is found by exhaustive search: the candidates are minus infinity (nobody fails), the
    midpoint between every pair of adjacent distinct abilities, and plus infinity (everybody
    fails). The misclassification count of every candidate follows from cumulative pass and fail
    counts over the sorted distinct abilities, and the first minimum wins, so ties go to the
    smaller cutoff.

    Attributes:
        threshold_ (float): Chosen ability cutoff.
        training_errors_ (int): Misclassified training students at ``threshold_``.
        n_samples_ (int): Number of training students.

    Methods:
        fit(abilities, labels):
            Chooses the cutoff.
        predict(abilities):
            Predicts failure for new abilities.

    Examples:
        >>> stump = DecisionStump().fit(np.array([-1.0, 0.0, 1.0]), np.array([0, 1, 1]))
        >>> stump.threshold_
        -0.5
    """

    def __init__(self):
        """
        Initializes the stump.
        """
        self.threshold_ = None
        self.training_errors_ = None
        self.n_samples_ = None

    def fit(self, abilities: AbilityVector | np.ndarray, labels: OutcomeLabels | np.ndarray):
        """
        Chooses the cutoff minimising the training misclassification count.

        Args:
            abilities (AbilityVector or np.ndarray): One ability per student.
            labels (OutcomeLabels or np.ndarray): Outcomes (1 passed, 0 failed). Aligned to the
                ability student ids when both carry them.

        Returns:
            DecisionStump: The fitted stump.

        Raises:
            DomainError: If only one outcome class is present.
            IntegrityError: If the lengths disagree.
        """
        if isinstance(abilities, AbilityVector):
            if isinstance(labels, OutcomeLabels) and abilities.student_ids:
                labels = labels.align(abilities.student_ids)
            theta = abilities.theta
        else:
            theta = np.asarray(abilities, dtype=float)
        passed = labels.passed if isinstance(labels, OutcomeLabels) else np.asarray(labels)
        if theta.shape != passed.shape or theta.ndim != 1:
            raise IntegrityError("There must be exactly one outcome per ability.")
        failed = passed == 0
        if failed.all() or not failed.any():
            raise DomainError("The stump needs both failed and successful students.")

        distinct, position = np.unique(theta, return_inverse=True)
        fails_at = np.bincount(position, weights=failed.astype(float), minlength=len(distinct))
        passes_at = np.bincount(position, weights=(~failed).astype(float), minlength=len(distinct))
        # errors when everything up to and including distinct[q] is predicted to fail
        cum_pass = np.concatenate([[0.0], np.cumsum(passes_at)])
        cum_fail = np.concatenate([[0.0], np.cumsum(fails_at)])
        errors = cum_pass + (failed.sum() - cum_fail)

        best = int(np.argmin(errors))
        self.threshold_ = float(stump_candidates(theta)[best])
        self.training_errors_ = int(errors[best])
        self.n_samples_ = len(theta)
        logger.info(
            "Stump cutoff %.4f misclassifies %d of %d students.",
            self.threshold_,
            self.training_errors_,
            self.n_samples_,
        )
        return self

    def predict(self, abilities: AbilityVector | np.ndarray) -> np.ndarray:
        """Boolean array, True where the student is predicted to fail."""
        if self.threshold_ is None:
            raise DomainError("The stump must be fitted before predicting.")
        theta = abilities.theta if isinstance(abilities, AbilityVector) else abilities
        return np.asarray(theta, dtype=float) < self.threshold_
