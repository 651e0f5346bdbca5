from dataclasses import dataclass, field
from enum import Enum
import logging
from typing import Iterable

from joblib import Parallel, delayed
import numpy as np
import pandas as pd

from lcta.modules.irt import JointMaximumLikelihoodCalibration
from lcta.utils.errors import DomainError, IntegrityError
from lcta.utils.irt import (
    CalibrationConfig,
    ItemParameters,
    StudentFlag,
    estimate_abilities,
)
from lcta.utils.lcta_dataclass import AbsencePolicy, OutcomeLabels, ResponseMatrix

logger = logging.getLogger(__name__)


class TrendKind(str, Enum):
    """Per-unit abilities use unit k alone, cumulative abilities units 1..k."""

    PER_UNIT = "per-unit"
    CUMULATIVE = "cumulative"


class ItemSource(str, Enum):
    """Where the item parameters of a cumulative trend column come from."""

    PREFIX = "prefix"
    FULL = "full"


@dataclass(kw_only=True, frozen=True)
class AbilityTrend:
    """Ability of every student after every LCT unit.

    Attributes:
        kind (TrendKind): Per-unit or cumulative.
        values (pd.DataFrame): Abilities indexed by student id with one integer column per unit
            1..K. Units outside ``k_range`` are NaN.
        flags (pd.DataFrame): Estimation flags in the same layout, None outside ``k_range``.
        k_range (tuple[int, ...]): Units actually computed, ascending.
    """

    kind: TrendKind
    values: pd.DataFrame
    flags: pd.DataFrame | None = None
    k_range: tuple[int, ...] = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "kind", TrendKind(self.kind))
        values = self.values.astype(float)
        values.index = values.index.astype(str)
        if values.index.has_duplicates:
            raise IntegrityError("Trend student ids must be unique.")
        object.__setattr__(self, "values", values)
        k_range = tuple(sorted({int(k) for k in self.k_range})) or tuple(
            int(k) for k in values.columns if values[k].notna().any()
        )
        if any(k not in values.columns for k in k_range):
            raise IntegrityError(f"Trend has no column for every unit in k_range {k_range}.")
        object.__setattr__(self, "k_range", k_range)
        flags = self.flags
        if flags is None:
            ok = np.where(values.notna(), StudentFlag.OK.value, None)
            flags = pd.DataFrame(ok, index=values.index, columns=values.columns, dtype=object)
        elif flags.shape != values.shape:
            raise IntegrityError("Trend flags must have the same shape as the values.")
        object.__setattr__(self, "flags", flags)

    @property
    def student_ids(self) -> tuple[str, ...]:
        return tuple(self.values.index)

    @property
    def n_tests(self) -> int:
        return self.values.shape[1]

    def horizon(self, k: int) -> np.ndarray:
        """
        Abilities over units 1..k as an (N, k) array.

        Raises:
            DomainError: If k is out of range or a unit in 1..k was not computed.
        """
        if not isinstance(k, (int, np.integer)) or not 1 <= k <= self.n_tests:
            raise DomainError(f"Horizon k must lie in 1..{self.n_tests}, got {k}.")
        missing = [unit for unit in range(1, k + 1) if unit not in self.k_range]
        if missing:
            raise DomainError(f"Units {missing} of the horizon 1..{k} are not in the trend.")
        return np.ascontiguousarray(self.values.loc[:, list(range(1, k + 1))].to_numpy())

    def to_frames(self) -> tuple[pd.DataFrame, pd.DataFrame]:
        """Values and flags with ``student_id`` first and ``theta_<k>`` unit columns."""
        names = {k: f"theta_{k}" for k in self.values.columns}
        values = self.values.rename(columns=names).rename_axis("student_id").reset_index()
        flags = self.flags.rename(columns=names).rename_axis("student_id").reset_index()
        return values, flags


def _resolve_k_range(k_range: Iterable[int] | None, n_tests: int) -> tuple[int, ...]:
    if k_range is None:
        return tuple(range(1, n_tests + 1))
    units = tuple(sorted({int(k) for k in k_range}))
    if not units or units[0] < 1 or units[-1] > n_tests:
        raise DomainError(f"k_range must be a non-empty subset of 1..{n_tests}, got {units}.")
    return units


def _calibrate_column(matrix: ResponseMatrix, policy, config: CalibrationConfig):
    result = JointMaximumLikelihoodCalibration(config).calibrate(matrix, policy).calibration_
    return result.abilities.theta, result.abilities.flags


def _fixed_item_column(matrix: ResponseMatrix, items: ItemParameters, policy, config):
    abilities = estimate_abilities(matrix.scored_view(policy), items, policy, config)
    theta = np.array(abilities.theta)
    flags = np.asarray(abilities.flags, dtype=object)
    ok = flags == StudentFlag.OK.value
    if ok.sum() >= 2:
        scale = theta[ok].std()
        theta[ok] = (theta[ok] - theta[ok].mean()) / (scale if scale > 0 else 1.0)
        theta[ok] = np.clip(theta[ok], *config.theta_bounds)
    return theta, tuple(flags)


class AbilityTrendEstimation:
    """
    Builds per-student ability trajectories over the LCT units of a semester.

    - Per-unit trend: for every unit k the N x m response matrix of that unit alone is calibrated
        and the standardised abilities form column k. Few items per unit make these estimates
        noisy.

    - Cumulative trend: for every unit k the N x mk prefix matrix of units 1..k is calibrated,
        re-estimating the items each time so that column k uses no response from a later unit.
        With ``item_source="full"`` the items are instead calibrated once on the whole matrix
        and held fixed, and each column is re-standardised over its non-flagged students.

    Columns are independent calibrations and run in parallel with ``n_jobs`` workers. The
    result does not depend on ``n_jobs``.

    Attributes:
        trend_ (AbilityTrend): The trend computed by the last call.

    Methods:
        per_unit_trend(matrix, policy, k_range):
            Computes abilities from every unit separately.
        cumulative_trend(matrix, policy, k_range):
            Computes abilities from every prefix of units.

    Examples:
        >>> trends = AbilityTrendEstimation(n_jobs=4)
        >>> trends.cumulative_trend(matrix, policy="as-incorrect", k_range=range(1, 8))
        >>> trends.trend_.values.shape
        (1127, 14)
    """

    def __init__(
        self,
        config: CalibrationConfig | None = None,
        item_source: ItemSource | str = ItemSource.PREFIX,
        n_jobs: int = 1,
    ):
        """
        Initializes the trend estimation.

        Args:
            config (CalibrationConfig, optional): Calibration tolerances and bounds.
            item_source (ItemSource or str): ``prefix`` or ``full``; cumulative trends only.
            n_jobs (int): Number of parallel workers, -1 for all cores.
        """
        if not isinstance(n_jobs, int) or n_jobs == 0:
            raise DomainError("n_jobs must be a non-zero integer.")
        self.config = config or CalibrationConfig()
        self.item_source = ItemSource(item_source)
        self.n_jobs = n_jobs
        self.trend_ = None

    def per_unit_trend(
        self,
        matrix: ResponseMatrix,
        policy: AbsencePolicy | str = AbsencePolicy.AS_INCORRECT,
        k_range: Iterable[int] | None = None,
    ):
        """
        Calibrates every unit slice on its own.

        Args:
            matrix (ResponseMatrix): The full response matrix.
            policy (AbsencePolicy or str): Absence policy.
            k_range (Iterable[int], optional): Units to compute, all by default.

        Returns:
            AbilityTrendEstimation: The instance with ``trend_`` set.
        """
        units = _resolve_k_range(k_range, matrix.n_tests)
        columns = Parallel(n_jobs=self.n_jobs)(
            delayed(_calibrate_column)(matrix.unit_slice(k), policy, self.config) for k in units
        )
        self.trend_ = self._assemble(TrendKind.PER_UNIT, matrix, units, columns)
        return self

    def cumulative_trend(
        self,
        matrix: ResponseMatrix,
        policy: AbsencePolicy | str = AbsencePolicy.AS_INCORRECT,
        k_range: Iterable[int] | None = None,
    ):
        """
        Calibrates every prefix of units 1..k.

        Args:
            matrix (ResponseMatrix): The full response matrix.
            policy (AbsencePolicy or str): Absence policy.
            k_range (Iterable[int], optional): Units to compute, all by default.

        Returns:
            AbilityTrendEstimation: The instance with ``trend_`` set.
        """
        units = _resolve_k_range(k_range, matrix.n_tests)
        if self.item_source is ItemSource.PREFIX:
            columns = Parallel(n_jobs=self.n_jobs)(
                delayed(_calibrate_column)(matrix.prefix(k), policy, self.config)
                for k in units
            )
        else:
            full = JointMaximumLikelihoodCalibration(self.config).calibrate(matrix, policy)
            items = full.calibration_.items
            item_units = np.asarray(matrix.item_units)
            columns = Parallel(n_jobs=self.n_jobs)(
                delayed(_fixed_item_column)(
                    matrix.prefix(k),
                    ItemParameters(
                        a=items.a[item_units <= k],
                        b=items.b[item_units <= k],
                        flags=np.asarray(items.flags)[item_units <= k],
                    ),
                    policy,
                    self.config,
                )
                for k in units
            )
        self.trend_ = self._assemble(TrendKind.CUMULATIVE, matrix, units, columns)
        return self

    @staticmethod
    def _assemble(kind, matrix: ResponseMatrix, units, columns) -> AbilityTrend:
        unit_columns = list(range(1, matrix.n_tests + 1))
        index = pd.Index(matrix.student_ids, name="student_id")
        values = pd.DataFrame(np.nan, index=index, columns=unit_columns)
        flags = pd.DataFrame(None, index=index, columns=unit_columns, dtype=object)
        for k, (theta, column_flags) in zip(units, columns):
            values[k] = theta
            flags[k] = list(column_flags)
        n_flagged = int((flags.loc[:, list(units)] != StudentFlag.OK.value).to_numpy().sum())
        logger.info(
            "%s trend over units %d..%d: %d flagged entries.",
            kind.value,
            units[0],
            units[-1],
            n_flagged,
        )
        return AbilityTrend(kind=kind, values=values, flags=flags, k_range=units)


def group_mean_trend(trend: AbilityTrend, labels: OutcomeLabels) -> pd.DataFrame:
    """
    Mean trajectory of successful and failed students.

    Args:
        trend (AbilityTrend): Any trend.
        labels (OutcomeLabels): Outcomes of at least the trend's students.

    Returns:
        pd.DataFrame: Columns ``k``, ``successful``, ``failed`` with one row per unit in
            ``k_range``.
    """
    aligned = labels.align(trend.student_ids)
    units = list(trend.k_range)
    values = trend.values.loc[:, units].to_numpy()
    failed = aligned.failed
    frame = pd.DataFrame({"k": units})
    frame["successful"] = values[~failed].mean(axis=0) if (~failed).any() else np.nan
    frame["failed"] = values[failed].mean(axis=0) if failed.any() else np.nan
    return frame
