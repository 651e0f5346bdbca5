from dataclasses import dataclass
import logging

import numpy as np
import pandas as pd
from scipy.special import expit

from lcta.utils.errors import DomainError
from lcta.utils.irt import D, ItemParameters
from lcta.utils.lcta_dataclass import (
    AbsencePolicy,
    OutcomeLabels,
    ResponseCell,
    ResponseMatrix,
    make_item_ids,
)

logger = logging.getLogger(__name__)


@dataclass(kw_only=True)
class SynthConfig:
    """Parameters of a synthetic LCT cohort.

    Abilities are standard normal. Discriminations are log-normal, difficulties normal around a
    mean that drifts upwards by ``b_drift`` per unit. A student misses a whole unit with
    probability ``absence_rate``, and passes the final examination with probability
    ``logistic(alpha + beta * theta)``.

    The default ``alpha`` gives a failure rate of about 0.18 for standard normal abilities.
    """

    n_students: int = 1127
    items_per_test: int = 5
    n_tests: int = 14
    seed: int = 42
    a_log_mean: float = 0.0
    a_log_sd: float = 0.3
    b_drift: float = 0.05
    b_sd: float = 1.0
    absence_rate: float = 0.03
    alpha: float = 2.25
    beta: float = 1.8

    def __post_init__(self):
        for name in ("n_students", "items_per_test", "n_tests"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or value < 1:
                raise DomainError(f"{name} must be a positive integer, got {value}.")
        if not isinstance(self.seed, (int, np.integer)) or self.seed < 0:
            raise DomainError("The seed must be a non-negative integer.")
        for name in ("a_log_mean", "a_log_sd", "b_drift", "b_sd", "alpha", "beta"):
            if not np.isfinite(getattr(self, name)):
                raise DomainError(f"{name} must be finite.")
        if self.a_log_sd < 0 or self.b_sd < 0:
            raise DomainError("Standard deviations must be non-negative.")
        if not 0.0 <= self.absence_rate <= 1.0:
            raise DomainError(f"absence_rate must lie in [0, 1], got {self.absence_rate}.")


@dataclass(kw_only=True, frozen=True)
class SyntheticCohort:
    """A generated cohort together with the parameters that produced it."""

    matrix: ResponseMatrix
    labels: OutcomeLabels
    theta_true: np.ndarray
    items_true: ItemParameters

    def theta_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {"student_id": list(self.matrix.student_ids), "theta_true": self.theta_true}
        )

    def items_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "item_id": list(self.matrix.item_ids),
                "a_true": self.items_true.a,
                "b_true": self.items_true.b,
            }
        )


def student_ids(n_students: int) -> list[str]:
    """Zero-padded ids ``s0001 ...`` so that string order equals numeric order."""
    width = max(4, len(str(n_students)))
    return [f"s{i:0{width}d}" for i in range(1, n_students + 1)]


def generate(config: SynthConfig | None = None) -> SyntheticCohort:
    """
    Draws a synthetic cohort.

    Draws come from a single PCG64 stream in a fixed order: abilities, discriminations,
    difficulties, responses, absences, outcomes. The same config therefore always gives the
    same cohort on every platform.

    Args:
        config (SynthConfig, optional): Generator parameters. Defaults are used if None.

    Returns:
        SyntheticCohort: Response matrix, outcome labels, true abilities and true items.

    Examples:
        >>> cohort = generate(SynthConfig(n_students=200, seed=7))
        >>> cohort.matrix.cells.shape
        (200, 70)
    """
    config = config or SynthConfig()
    rng = np.random.Generator(np.random.PCG64(config.seed))
    n_items = config.items_per_test * config.n_tests
    units = np.repeat(np.arange(1, config.n_tests + 1), config.items_per_test)

    theta = rng.standard_normal(config.n_students)
    a = rng.lognormal(config.a_log_mean, config.a_log_sd, size=n_items)
    b = rng.normal(config.b_drift * (units - 1), config.b_sd)

    p_correct = expit(D * a * (theta[:, None] - b))
    cells = (rng.random((config.n_students, n_items)) < p_correct).astype(np.int8)

    absent_units = rng.random((config.n_students, config.n_tests)) < config.absence_rate
    cells[np.repeat(absent_units, config.items_per_test, axis=1)] = ResponseCell.ABSENT

    passed = rng.random(config.n_students) < expit(config.alpha + config.beta * theta)

    ids = student_ids(config.n_students)
    matrix = ResponseMatrix(
        cells=cells,
        student_ids=ids,
        item_ids=make_item_ids(config.items_per_test, config.n_tests),
    )
    labels = OutcomeLabels(student_ids=ids, passed=passed.astype(np.int8))
    logger.info(
        "Generated %d students x %d items, failure rate %.3f, %d absent units.",
        config.n_students,
        n_items,
        1.0 - passed.mean(),
        int(absent_units.sum()),
    )
    return SyntheticCohort(
        matrix=matrix,
        labels=labels,
        theta_true=theta,
        items_true=ItemParameters(a=a, b=b, item_ids=matrix.item_ids),
    )


def empirical_car(
    matrix: ResponseMatrix, policy: AbsencePolicy | str = AbsencePolicy.AS_INCORRECT
) -> np.ndarray:
    """
    Correct answer rate of every student.

    Absent cells count as incorrect answers under ``AS_INCORRECT`` and are left out of the
    denominator under ``AS_MISSING``. A student without any scored cell gets NaN.
    """
    scored = matrix.scored_view(policy)
    n_scored = (~np.isnan(scored)).sum(axis=1)
    n_correct = np.nansum(scored, axis=1)
    car = np.full(matrix.n_students, np.nan)
    has_data = n_scored > 0
    car[has_data] = n_correct[has_data] / n_scored[has_data]
    return car
