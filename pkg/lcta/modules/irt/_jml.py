from dataclasses import dataclass
import logging

import numpy as np
import pandas as pd
from scipy.special import expit, log_expit, logit

from lcta.utils.errors import DomainError, NumericalError
from lcta.utils.irt import (
    D,
    AbilityVector,
    CalibrationConfig,
    ItemFlag,
    ItemParameters,
    StudentFlag,
    apply_policy,
    clamp_flagged,
    newton_abilities,
    row_log_likelihood,
    theta_derivatives,
)
from lcta.utils.lcta_dataclass import AbsencePolicy, ResponseMatrix

logger = logging.getLogger(__name__)


@dataclass(kw_only=True, frozen=True)
class CalibrationResult:
    """Outcome of a joint calibration.

    Attributes:
        items (ItemParameters): Calibrated discriminations and difficulties.
        abilities (AbilityVector): Standardised abilities.
        log_likelihood (float): Final log-likelihood over the estimable cells.
        iterations (int): Number of accepted outer iterations.
        converged (bool): True if the last gain fell below the tolerance.
        trace (tuple[float, ...]): Log-likelihood after initialisation and after every accepted
            outer iteration.
    """

    items: ItemParameters
    abilities: AbilityVector
    log_likelihood: float
    iterations: int
    converged: bool
    trace: tuple[float, ...]

    def convergence_frame(self) -> pd.DataFrame:
        """Log-likelihood per outer iteration with the gain over the previous one."""
        trace = np.asarray(self.trace, dtype=float)
        gain = np.concatenate([[np.nan], np.diff(trace)])
        return pd.DataFrame(
            {"iteration": np.arange(len(trace)), "log_likelihood": trace, "gain": gain}
        )


def _column_log_likelihood(x, mask, a, b, theta):
    z = D * a * (theta[:, None] - b)
    terms = x * log_expit(z) + (1.0 - x) * log_expit(-z)
    return np.where(mask, terms, 0.0).sum(axis=0)


def _item_step(x, mask, a, b, theta):
    """Newton direction for every item, Fisher scoring where the Hessian is not negative definite."""
    distance = theta[:, None] - b
    p = expit(D * a * distance)
    weight = np.where(mask, p * (1.0 - p), 0.0)
    residual = np.where(mask, x - p, 0.0)

    grad_a = D * (residual * distance).sum(axis=0)
    grad_b = -D * a * residual.sum(axis=0)

    info_aa = D**2 * (weight * distance**2).sum(axis=0)
    info_bb = D**2 * a**2 * weight.sum(axis=0)
    info_ab = -(D**2) * a * (weight * distance).sum(axis=0)
    hess_aa = -info_aa
    hess_bb = -info_bb
    hess_ab = -D * residual.sum(axis=0) - info_ab

    det_newton = hess_aa * hess_bb - hess_ab**2
    newton = (hess_aa < 0) & (det_newton > 1e-12)
    det_newton = np.where(newton, det_newton, 1.0)
    step_a = -(hess_bb * grad_a - hess_ab * grad_b) / det_newton
    step_b = -(hess_aa * grad_b - hess_ab * grad_a) / det_newton

    det_fisher = info_aa * info_bb - info_ab**2
    fisher = ~newton & (det_fisher > 1e-12)
    det_fisher = np.where(fisher, det_fisher, 1.0)
    fisher_a = (info_bb * grad_a - info_ab * grad_b) / det_fisher
    fisher_b = (info_aa * grad_b - info_ab * grad_a) / det_fisher

    # gradient direction scaled by the diagonal when both matrices are singular
    plain = ~newton & ~fisher
    plain_a = grad_a / (info_aa + 1.0)
    plain_b = grad_b / (info_bb + 1.0)

    step_a = np.where(newton, step_a, np.where(fisher, fisher_a, plain_a))
    step_b = np.where(newton, step_b, np.where(fisher, fisher_b, plain_b))
    if plain.any():
        logger.debug("Gradient fallback for %d item(s).", int(plain.sum()))
    return step_a, step_b


def newton_items(x, mask, a, b, theta, config: CalibrationConfig):
    """
    Safeguarded 2-D Newton ascent of every item log-likelihood in (a, b) with abilities fixed.

    Each step is clipped to the parameter box and halved until the item's log-likelihood does
    not decrease; a step that cannot be made to improve is rejected.
    """
    a_low, a_high = config.a_bounds
    b_low, b_high = config.b_bounds
    a = np.array(a, dtype=float)
    b = np.array(b, dtype=float)
    current = _column_log_likelihood(x, mask, a, b, theta)
    active = np.ones(len(a), dtype=bool)

    for _ in range(config.max_newton_iter):
        cols = np.flatnonzero(active)
        if cols.size == 0:
            break
        xc, mc = x[:, cols], mask[:, cols]
        start_a, start_b = a[cols], b[cols]
        step_a, step_b = _item_step(xc, mc, start_a, start_b, theta)
        cand_a = np.clip(start_a + step_a, a_low, a_high)
        cand_b = np.clip(start_b + step_b, b_low, b_high)
        value = _column_log_likelihood(xc, mc, cand_a, cand_b, theta)
        previous = current[cols]
        for _ in range(config.max_halvings):
            worse = value < previous
            if not worse.any():
                break
            cand_a[worse] = start_a[worse] + 0.5 * (cand_a[worse] - start_a[worse])
            cand_b[worse] = start_b[worse] + 0.5 * (cand_b[worse] - start_b[worse])
            value[worse] = _column_log_likelihood(
                xc[:, worse], mc[:, worse], cand_a[worse], cand_b[worse], theta
            )
        rejected = value < previous
        cand_a[rejected] = start_a[rejected]
        cand_b[rejected] = start_b[rejected]
        value[rejected] = previous[rejected]
        a[cols], b[cols] = cand_a, cand_b
        current[cols] = value
        moved = np.maximum(np.abs(cand_a - start_a), np.abs(cand_b - start_b))
        active[cols[(moved < config.newton_tol) | rejected]] = False
    return a, b


def _estimable_submatrix(x, mask):
    """
    Iteratively drop degenerate students and items.

    A student is estimable if, over the remaining items, it has at least one correct and one
    incorrect scored response; an item likewise over the remaining students. Dropping one can
    make the other degenerate, so the trimming repeats until nothing changes.

    Returns:
        tuple: Boolean row and column masks plus the student and item flag arrays.
    """
    n_rows, n_cols = x.shape
    rows = np.ones(n_rows, dtype=bool)
    cols = np.ones(n_cols, dtype=bool)
    student_flags = np.full(n_rows, StudentFlag.OK.value, dtype=object)
    item_flags = np.full(n_cols, ItemFlag.OK.value, dtype=object)

    while True:
        sub_mask = mask[np.ix_(rows, cols)]
        sub_x = x[np.ix_(rows, cols)]
        row_scored, row_correct = sub_mask.sum(axis=1), sub_x.sum(axis=1)
        col_scored, col_correct = sub_mask.sum(axis=0), sub_x.sum(axis=0)
        row_ok = (row_correct > 0) & (row_correct < row_scored)
        col_ok = (col_correct > 0) & (col_correct < col_scored)
        if row_ok.all() and col_ok.all():
            break

        row_index = np.flatnonzero(rows)
        dropped = row_index[~row_ok]
        scored, correct = row_scored[~row_ok], row_correct[~row_ok]
        student_flags[dropped] = np.where(
            scored == 0,
            StudentFlag.NO_DATA.value,
            np.where(correct == scored, StudentFlag.CLAMPED_HIGH.value, StudentFlag.CLAMPED_LOW.value),
        )
        col_index = np.flatnonzero(cols)
        dropped = col_index[~col_ok]
        scored, correct = col_scored[~col_ok], col_correct[~col_ok]
        item_flags[dropped] = np.where(
            scored == 0,
            ItemFlag.NO_DATA.value,
            np.where(correct == scored, ItemFlag.ALL_CORRECT.value, ItemFlag.ALL_INCORRECT.value),
        )
        rows[row_index[~row_ok]] = False
        cols[col_index[~col_ok]] = False
        if not rows.any() or not cols.any():
            break
    return rows, cols, student_flags, item_flags


def _boundary_items(item_flags, config: CalibrationConfig):
    a_low, a_high = config.a_bounds
    b_low, b_high = config.b_bounds
    a = np.full(len(item_flags), a_low)
    b = np.full(len(item_flags), b_high)
    all_correct = item_flags == ItemFlag.ALL_CORRECT.value
    all_incorrect = item_flags == ItemFlag.ALL_INCORRECT.value
    a[all_correct | all_incorrect] = a_high
    b[all_correct] = b_low
    return a, b


def _standardized(theta, config: CalibrationConfig):
    """Abilities shifted and scaled to mean 0 and population sd 1, kept inside the bounds."""
    centred = theta - theta.mean()
    scale = centred.std()
    if np.isfinite(scale) and scale > 0:
        centred = centred / scale
    return np.clip(centred, *config.theta_bounds)


def _tangent_direction(x, mask, a, b, theta, target):
    """
    Direction towards the row maximisers ``target`` that keeps the mean and spread of the
    abilities fixed to first order.

    Each row's move ``target - theta`` is ``w * grad`` for a non-negative secant weight ``w``.
    Removing the ``w``-weighted fit of ``grad`` on a constant and on ``theta`` leaves a direction
    orthogonal to both along which the log-likelihood still increases.
    """
    grad, hess = theta_derivatives(x, mask, a, b, theta)
    move = target - theta
    sloped = np.abs(grad) > 1e-12
    weight = np.where(
        sloped, move / np.where(sloped, grad, 1.0), 1.0 / np.maximum(-hess, 1e-12)
    )
    weight = np.maximum(weight, 0.0)
    basis = np.column_stack([np.ones_like(theta), theta])
    gram = basis.T @ (weight[:, None] * basis)
    coef = np.linalg.lstsq(gram, basis.T @ (weight * grad), rcond=None)[0]
    return weight * (grad - basis @ coef)


def standardized_ability_step(x, mask, a, b, theta, config: CalibrationConfig):
    """
    One ascent step in theta with items fixed that keeps the abilities standardised.

    The direction comes from the row maximisers (``newton_abilities``) with its shift and stretch
    components removed. The step is halved until the re-standardised candidate does not lower the
    log-likelihood; without such a step the abilities are returned unchanged.
    """
    current = row_log_likelihood(x, mask, a, b, theta).sum()
    target = newton_abilities(x, mask, a, b, theta, config)
    direction = _tangent_direction(x, mask, a, b, theta, target)
    step = 1.0
    for _ in range(config.max_halvings + 1):
        candidate = _standardized(theta + step * direction, config)
        if row_log_likelihood(x, mask, a, b, candidate).sum() >= current:
            return candidate
        step *= 0.5
    return theta


class JointMaximumLikelihoodCalibration:
    """
    Joint maximum-likelihood calibration of the two-parameter logistic IRT model.

    Given a dichotomous response matrix, the algorithm estimates one ability per student and a
    discrimination ``a`` and difficulty ``b`` per item by maximising the joint likelihood of all
    scored responses:

    - Screen: Students and items whose responses are all correct, all incorrect, or absent have no
        interior maximum. They are removed iteratively until every remaining row and column has
        both outcomes, and flagged. Flagged students are clamped to the ability bounds, flagged
        items receive boundary parameters.

    - Initialise: Abilities start from the standardised logit of the correct answer rate, items
        from a = 1 and b = -logit(p_j) / 1.7 where p_j is the item's proportion correct.

    - Alternate: Each outer iteration (1) moves the abilities towards every student's row maximum
        with items fixed while keeping them at mean 0 and sd 1: the row maxima give the
        direction, its shift and stretch components are removed, and the step is halved until
        the re-standardised abilities do not lower the likelihood; (2) maximises every item's
        likelihood in (a, b) with abilities fixed, by safeguarded Newton iteration with step
        halving inside the parameter box. Both blocks ascend and nothing is clipped afterwards,
        so the log-likelihood never decreases and the identification holds at every iteration.

    - Stop: When the log-likelihood gain of an outer iteration drops below ``tol`` or after
        ``max_iter`` iterations.

    Attributes:
        calibration_ (CalibrationResult): Items, abilities, final log-likelihood and convergence
            trace of the last call to ``calibrate``.

    Methods:
        calibrate(matrix, policy):
            Calibrates items and abilities on a response matrix.

    Examples:
        >>> jml = JointMaximumLikelihoodCalibration(tol=1e-6, max_iter=100)
        >>> jml.calibrate(matrix, policy="as-incorrect")
        >>> jml.calibration_.abilities.theta.mean()
        0.0
        >>> jml.calibration_.converged
        True

    References:
        [1] Baker, F. B., & Kim, S.-H. (2004). Item Response Theory: Parameter Estimation Techniques.
    """

    def __init__(self, config: CalibrationConfig | None = None, **overrides):
        """
        Initializes the calibration with tolerances and parameter bounds.

        Args:
            config (CalibrationConfig, optional): Full configuration. Defaults are used if None.
            **overrides: Individual ``CalibrationConfig`` fields, applied on top of ``config``.
        """
        base = {} if config is None else dict(config.__dict__)
        base.update(overrides)
        self.config = CalibrationConfig(**base)
        self.calibration_ = None

    def calibrate(
        self,
        matrix: ResponseMatrix | np.ndarray,
        policy: AbsencePolicy | str = AbsencePolicy.AS_INCORRECT,
    ):
        """
        Calibrates item parameters and abilities jointly.

        Args:
            matrix (ResponseMatrix or np.ndarray): Responses. An array is read as scored values
                with NaN for Absent.
            policy (AbsencePolicy or str): Absence policy.

        Returns:
            JointMaximumLikelihoodCalibration: The fitted instance.

        Raises:
            DomainError: If there are fewer than two students or two items.
            NumericalError: If the log-likelihood becomes non-finite.
        """
        config = self.config
        if isinstance(matrix, ResponseMatrix):
            student_ids, item_ids = matrix.student_ids, matrix.item_ids
            x = apply_policy(matrix.scored_view(policy), policy)
        else:
            student_ids, item_ids = (), ()
            x = apply_policy(matrix, policy)
        n_students, n_items = x.shape
        if n_students < 2 or n_items < 2:
            raise DomainError(
                f"Calibration needs at least 2 students and 2 items, got {n_students}x{n_items}."
            )

        mask = ~np.isnan(x)
        x = np.where(mask, x, 0.0)
        rows, cols, student_flags, item_flags = _estimable_submatrix(x, mask)
        a_all, b_all = _boundary_items(item_flags, config)
        theta_all = clamp_flagged(np.zeros(n_students), student_flags, config)

        n_bad_students = int((~rows).sum())
        n_bad_items = int((~cols).sum())
        if n_bad_students or n_bad_items:
            logger.warning(
                "%d student(s) and %d item(s) are degenerate and were set to the bounds.",
                n_bad_students,
                n_bad_items,
            )

        if not rows.any() or not cols.any():
            logger.warning("No estimable responses remain; nothing to calibrate.")
            self.calibration_ = CalibrationResult(
                items=ItemParameters(a=a_all, b=b_all, flags=tuple(item_flags), item_ids=item_ids),
                abilities=AbilityVector(
                    theta=theta_all, flags=tuple(student_flags), student_ids=student_ids
                ),
                log_likelihood=0.0,
                iterations=0,
                converged=False,
                trace=(0.0,),
            )
            return self

        xs, ms = x[np.ix_(rows, cols)], mask[np.ix_(rows, cols)]
        theta, a, b = self._initial_values(xs, ms)
        current = self._log_likelihood(xs, ms, a, b, theta)
        trace = [current]
        converged = False

        for iteration in range(1, config.max_iter + 1):
            new_theta = standardized_ability_step(xs, ms, a, b, theta, config)
            new_a, new_b = newton_items(xs, ms, a, b, new_theta, config)
            value = self._log_likelihood(xs, ms, new_a, new_b, new_theta)
            gain = value - current
            # both blocks ascend; a negative gain is summation rounding and is not recorded
            if gain >= 0:
                theta, a, b, current = new_theta, new_a, new_b, value
                trace.append(current)
            else:
                logger.debug("Iteration %d: rounding-level gain %.3g discarded.", iteration, gain)
            if gain < config.tol:
                converged = True
                break

        if converged:
            logger.info("Calibration converged after %d iteration(s).", len(trace) - 1)
        else:
            logger.warning(
                "Calibration stopped after %d iteration(s) without converging.", len(trace) - 1
            )

        theta_all[rows] = theta
        a_all[cols], b_all[cols] = a, b
        self.calibration_ = CalibrationResult(
            items=ItemParameters(a=a_all, b=b_all, flags=tuple(item_flags), item_ids=item_ids),
            abilities=AbilityVector(
                theta=theta_all, flags=tuple(student_flags), student_ids=student_ids
            ),
            log_likelihood=float(current),
            iterations=len(trace) - 1,
            converged=converged,
            trace=tuple(trace),
        )
        return self

    def _initial_values(self, x, mask):
        config = self.config
        car = np.clip(x.sum(axis=1) / mask.sum(axis=1), 0.01, 0.99)
        theta = _standardized(logit(car), config)
        p_item = np.clip(x.sum(axis=0) / mask.sum(axis=0), 0.01, 0.99)
        a = np.clip(np.ones(x.shape[1]), *config.a_bounds)
        b = np.clip(-logit(p_item) / D, *config.b_bounds)
        return theta, a, b

    @staticmethod
    def _log_likelihood(x, mask, a, b, theta) -> float:
        value = float(row_log_likelihood(x, mask, a, b, theta).sum())
        if not np.isfinite(value):
            raise NumericalError("The log-likelihood became non-finite during calibration.")
        return value
