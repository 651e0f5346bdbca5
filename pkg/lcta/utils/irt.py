# Import libraries
from dataclasses import dataclass, field
from enum import Enum
import logging

import numpy as np
from scipy.special import expit, log_expit

from lcta.utils.errors import DomainError, IntegrityError
from lcta.utils.lcta_dataclass import AbsencePolicy

logger = logging.getLogger(__name__)

# Scaling constant of the logistic item characteristic curve
D = 1.7


class StudentFlag(str, Enum):
    """Estimation outcome for a single student."""

    OK = "ok"
    CLAMPED_HIGH = "clamped_high"
    CLAMPED_LOW = "clamped_low"
    NO_DATA = "no_data"


class ItemFlag(str, Enum):
    """Estimation outcome for a single item."""

    OK = "ok"
    ALL_CORRECT = "all_correct"
    ALL_INCORRECT = "all_incorrect"
    NO_DATA = "no_data"


@dataclass(kw_only=True)
class CalibrationConfig:
    """Tolerances and bounds shared by ability estimation and joint calibration.

    Attributes:
        tol (float): Absolute log-likelihood gain below which the outer loop stops.
        max_iter (int): Maximum number of outer (alternating) iterations.
        newton_tol (float): Step size below which an inner Newton iteration stops.
        max_newton_iter (int): Maximum inner Newton iterations per block.
        max_halvings (int): Maximum step halvings before a Newton step is rejected.
        a_bounds (tuple[float, float]): Box for discriminations.
        b_bounds (tuple[float, float]): Box for difficulties.
        theta_bounds (tuple[float, float]): Box for abilities.
    """

    tol: float = 1e-6
    max_iter: int = 100
    newton_tol: float = 1e-8
    max_newton_iter: int = 50
    max_halvings: int = 30
    a_bounds: tuple[float, float] = (0.2, 4.0)
    b_bounds: tuple[float, float] = (-4.0, 4.0)
    theta_bounds: tuple[float, float] = (-4.0, 4.0)

    def __post_init__(self):
        self.a_bounds = tuple(float(v) for v in self.a_bounds)
        self.b_bounds = tuple(float(v) for v in self.b_bounds)
        self.theta_bounds = tuple(float(v) for v in self.theta_bounds)
        for name in ("a_bounds", "b_bounds", "theta_bounds"):
            low, high = getattr(self, name)
            if not low < high:
                raise DomainError(f"{name} must be an increasing pair, got {(low, high)}.")
        if self.a_bounds[0] <= 0:
            raise DomainError("The lower discrimination bound must be positive.")
        if self.tol <= 0 or self.newton_tol <= 0:
            raise DomainError("Tolerances must be positive.")
        if self.max_iter < 1 or self.max_newton_iter < 1 or self.max_halvings < 0:
            raise DomainError("Iteration limits must be positive.")


@dataclass(kw_only=True, frozen=True)
class ItemParameters:
    """Discrimination ``a`` and difficulty ``b`` per item column.

    Attributes:
        a (np.ndarray): Discriminations, all positive.
        b (np.ndarray): Difficulties on the ability scale.
        flags (tuple[str, ...]): One ``ItemFlag`` value per item.
        item_ids (tuple[str, ...]): Optional item identifiers.
    """

    a: np.ndarray
    b: np.ndarray
    flags: tuple[str, ...] = field(default=())
    item_ids: tuple[str, ...] = field(default=())

    def __post_init__(self):
        a = np.array(self.a, dtype=float, ndmin=1)
        b = np.array(self.b, dtype=float, ndmin=1)
        if a.shape != b.shape or a.ndim != 1:
            raise IntegrityError("a and b must be one-dimensional and of equal length.")
        if np.any(a <= 0):
            raise DomainError("Discrimination parameters must be positive.")
        a.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        flags = tuple(ItemFlag(f).value for f in self.flags) or (ItemFlag.OK.value,) * len(a)
        object.__setattr__(self, "flags", flags)
        if len(flags) != len(a):
            raise IntegrityError("There must be one flag per item.")
        if self.item_ids and len(self.item_ids) != len(a):
            raise IntegrityError("There must be one item id per item.")
        object.__setattr__(self, "item_ids", tuple(self.item_ids))

    def __len__(self) -> int:
        return len(self.a)


@dataclass(kw_only=True, frozen=True)
class AbilityVector:
    """Per-student ability estimates with estimation flags.

    Attributes:
        theta (np.ndarray): Abilities on the standardised scale.
        flags (tuple[str, ...]): One ``StudentFlag`` value per student.
        student_ids (tuple[str, ...]): Optional student identifiers.
    """

    theta: np.ndarray
    flags: tuple[str, ...] = field(default=())
    student_ids: tuple[str, ...] = field(default=())

    def __post_init__(self):
        theta = np.array(self.theta, dtype=float, ndmin=1)
        theta.setflags(write=False)
        object.__setattr__(self, "theta", theta)
        flags = tuple(StudentFlag(f).value for f in self.flags) or (
            StudentFlag.OK.value,
        ) * len(theta)
        object.__setattr__(self, "flags", flags)
        if len(flags) != len(theta):
            raise IntegrityError("There must be one flag per student.")
        if self.student_ids and len(self.student_ids) != len(theta):
            raise IntegrityError("There must be one student id per ability.")
        object.__setattr__(self, "student_ids", tuple(self.student_ids))

    def __len__(self) -> int:
        return len(self.theta)

    @property
    def estimable(self) -> np.ndarray:
        """Boolean mask of students whose ability is an interior estimate."""
        return np.array([f == StudentFlag.OK.value for f in self.flags], dtype=bool)


def icc(theta, a, b):
    """
    Two-parameter logistic item characteristic curve.

    P(theta; a, b) = 1 / (1 + exp(-1.7 * a * (theta - b))), broadcast over its arguments.

    Args:
        theta (float | array_like): Ability.
        a (float | array_like): Discrimination, strictly positive.
        b (float | array_like): Difficulty.

    Returns:
        float | np.ndarray: Probability of a correct response.

    Raises:
        DomainError: If any discrimination is not positive.
    """
    a = np.asarray(a, dtype=float)
    if np.any(a <= 0):
        raise DomainError("Discrimination a must be positive.")
    p = expit(D * a * (np.asarray(theta, dtype=float) - np.asarray(b, dtype=float)))
    return float(p) if np.ndim(p) == 0 else p


def icc_complement(theta, a, b):
    """Probability of an incorrect response, Q = 1 - P."""
    return 1.0 - icc(theta, a, b)


def apply_policy(responses, policy: AbsencePolicy | str) -> np.ndarray:
    """
    Return a float copy of ``responses`` with missing cells resolved by ``policy``.

    NaN marks an Absent cell. Under ``AS_INCORRECT`` it becomes 0; under ``AS_MISSING`` it stays
    NaN and is skipped by the likelihood sums.
    """
    scored = np.array(responses, dtype=float, copy=True)
    if scored.ndim != 2:
        raise IntegrityError("Responses must be a two-dimensional array.")
    observed = scored[~np.isnan(scored)]
    if not np.isin(observed, [0.0, 1.0]).all():
        raise IntegrityError("Scored responses must be 0, 1 or NaN.")
    if AbsencePolicy(policy) is AbsencePolicy.AS_INCORRECT:
        scored[np.isnan(scored)] = 0.0
    return scored


def _as_theta(abilities) -> np.ndarray:
    if isinstance(abilities, AbilityVector):
        return abilities.theta
    return np.array(abilities, dtype=float, ndmin=1)


def _cell_log_likelihood(x, mask, a, b, theta):
    # x must already hold 0 where mask is False
    z = D * a * (theta[:, None] - b)
    terms = x * log_expit(z) + (1.0 - x) * log_expit(-z)
    return np.where(mask, terms, 0.0)


def _check_dimensions(responses: np.ndarray, n_students: int, n_items: int) -> None:
    if responses.shape != (n_students, n_items):
        raise IntegrityError(
            f"Responses are {responses.shape[0]}x{responses.shape[1]} but there are "
            f"{n_students} abilities and {n_items} items."
        )


def log_likelihood(
    responses,
    items: ItemParameters,
    abilities,
    policy: AbsencePolicy | str = AbsencePolicy.AS_INCORRECT,
) -> float:
    """
    Joint log-likelihood of the 2PL model over all scored cells.

    Sum over students i and items j of x_ij log P_ij + (1 - x_ij) log Q_ij. Absent cells are
    skipped under ``AS_MISSING``.

    Args:
        responses (array_like): Scored responses (N, n) with NaN for Absent.
        items (ItemParameters): Item parameters, one per column.
        abilities (AbilityVector | array_like): Abilities, one per row.
        policy (AbsencePolicy | str): Absence policy.

    Returns:
        float: The log-likelihood.

    Raises:
        IntegrityError: If the dimensions disagree.
    """
    x = apply_policy(responses, policy)
    theta = _as_theta(abilities)
    _check_dimensions(x, len(theta), len(items))
    mask = ~np.isnan(x)
    x = np.where(mask, x, 0.0)
    return float(_cell_log_likelihood(x, mask, items.a, items.b, theta).sum())


def log_likelihood_gradient(
    responses,
    items: ItemParameters,
    abilities,
    policy: AbsencePolicy | str = AbsencePolicy.AS_INCORRECT,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Analytic gradient of :func:`log_likelihood`.

    Returns:
        tuple[np.ndarray, np.ndarray, np.ndarray]: Derivatives with respect to theta (N,),
            a (n,) and b (n,).
    """
    x = apply_policy(responses, policy)
    theta = _as_theta(abilities)
    _check_dimensions(x, len(theta), len(items))
    mask = ~np.isnan(x)
    a, b = items.a, items.b
    distance = theta[:, None] - b
    residual = np.where(mask, np.where(mask, x, 0.0) - expit(D * a * distance), 0.0)
    grad_theta = D * (residual * a).sum(axis=1)
    grad_a = D * (residual * distance).sum(axis=0)
    grad_b = -D * a * residual.sum(axis=0)
    return grad_theta, grad_a, grad_b


def row_log_likelihood(x, mask, a, b, theta) -> np.ndarray:
    """Per-student log-likelihood; ``x`` holds 0 where ``mask`` is False."""
    return _cell_log_likelihood(x, mask, a, b, theta).sum(axis=1)


def theta_derivatives(x, mask, a, b, theta):
    """Gradient and second derivative of every row log-likelihood in theta."""
    p = expit(D * a * (theta[:, None] - b))
    grad = D * np.where(mask, (x - p) * a, 0.0).sum(axis=1)
    hess = -(D**2) * np.where(mask, a**2 * p * (1.0 - p), 0.0).sum(axis=1)
    return grad, hess


def _bisect_theta(x, mask, a, b, low, high, n_iter=60):
    # The row log-likelihood is concave in theta, so the sign of the gradient brackets the maximum
    left = np.full(x.shape[0], low)
    right = np.full(x.shape[0], high)
    grad_low, _ = theta_derivatives(x, mask, a, b, left)
    grad_high, _ = theta_derivatives(x, mask, a, b, right)
    for _ in range(n_iter):
        middle = 0.5 * (left + right)
        grad_middle, _ = theta_derivatives(x, mask, a, b, middle)
        ascending = grad_middle > 0
        left = np.where(ascending, middle, left)
        right = np.where(ascending, right, middle)
    root = 0.5 * (left + right)
    root = np.where(grad_low <= 0, low, root)
    return np.where(grad_high >= 0, high, root)


def newton_abilities(x, mask, a, b, theta, config: CalibrationConfig) -> np.ndarray:
    """
    Safeguarded Newton ascent of every row log-likelihood in theta.

    Rows are updated independently: a row stops once its step is below ``newton_tol``.
    Each step is halved until the row log-likelihood does not decrease; a row whose step
    cannot be made to improve keeps its value. Rows that are still not stationary afterwards
    are solved by bisection on the gradient sign, accepted only where it improves.

    Args:
        x (np.ndarray): Scored responses (N, n) with 0 in unscored cells.
        mask (np.ndarray): Boolean mask of scored cells.
        a (np.ndarray): Discriminations.
        b (np.ndarray): Difficulties.
        theta (np.ndarray): Starting abilities.
        config (CalibrationConfig): Tolerances and bounds.

    Returns:
        np.ndarray: Updated abilities within ``config.theta_bounds``.
    """
    low, high = config.theta_bounds
    theta = np.clip(np.array(theta, dtype=float), low, high)
    current = row_log_likelihood(x, mask, a, b, theta)
    active = np.ones(len(theta), dtype=bool)

    for _ in range(config.max_newton_iter):
        rows = np.flatnonzero(active)
        if rows.size == 0:
            break
        xr, mr, start = x[rows], mask[rows], theta[rows]
        grad, hess = theta_derivatives(xr, mr, a, b, start)
        safe = hess < -1e-12
        step = np.where(safe, -grad / np.where(safe, hess, -1.0), np.sign(grad))
        candidate = np.clip(start + step, low, high)
        value = row_log_likelihood(xr, mr, a, b, candidate)
        previous = current[rows]
        for _ in range(config.max_halvings):
            worse = value < previous
            if not worse.any():
                break
            candidate[worse] = start[worse] + 0.5 * (candidate[worse] - start[worse])
            value[worse] = row_log_likelihood(
                xr[worse], mr[worse], a, b, candidate[worse]
            )
        rejected = value < previous
        candidate[rejected] = start[rejected]
        value[rejected] = previous[rejected]
        theta[rows] = candidate
        current[rows] = value
        finished = (np.abs(candidate - start) < config.newton_tol) | rejected
        active[rows[finished]] = False

    grad, _ = theta_derivatives(x, mask, a, b, theta)
    at_bound = ((theta <= low) & (grad <= 0)) | ((theta >= high) & (grad >= 0))
    stalled = np.flatnonzero((np.abs(grad) > np.sqrt(config.newton_tol)) & ~at_bound)
    if stalled.size:
        logger.debug("Bisection fallback for %d student(s).", stalled.size)
        root = _bisect_theta(x[stalled], mask[stalled], a, b, low, high)
        value = row_log_likelihood(x[stalled], mask[stalled], a, b, root)
        better = value >= current[stalled]
        theta[stalled[better]] = root[better]
    return theta


def student_flags(x, mask) -> np.ndarray:
    """Flag each row as ok, clamped_high (all correct), clamped_low (all incorrect) or no_data."""
    n_scored = mask.sum(axis=1)
    n_correct = np.where(mask, x, 0.0).sum(axis=1)
    flags = np.full(x.shape[0], StudentFlag.OK.value, dtype=object)
    flags[(n_scored > 0) & (n_correct == n_scored)] = StudentFlag.CLAMPED_HIGH.value
    flags[(n_scored > 0) & (n_correct == 0)] = StudentFlag.CLAMPED_LOW.value
    flags[n_scored == 0] = StudentFlag.NO_DATA.value
    return flags


def clamp_flagged(theta: np.ndarray, flags: np.ndarray, config: CalibrationConfig):
    """Put flagged students on the ability bounds: all correct high, otherwise low."""
    low, high = config.theta_bounds
    theta = np.array(theta, dtype=float, copy=True)
    theta[flags == StudentFlag.CLAMPED_HIGH.value] = high
    theta[flags == StudentFlag.CLAMPED_LOW.value] = low
    theta[flags == StudentFlag.NO_DATA.value] = low
    return theta


def estimate_abilities(
    responses,
    items: ItemParameters,
    policy: AbsencePolicy | str = AbsencePolicy.AS_INCORRECT,
    config: CalibrationConfig | None = None,
    student_ids=(),
    initial=None,
) -> AbilityVector:
    """
    Maximum-likelihood abilities with item parameters held fixed.

    Each student's row log-likelihood is maximised by safeguarded Newton iteration inside
    ``config.theta_bounds``. Rows with every scored cell correct are clamped to the upper bound,
    rows with every scored cell incorrect or no scored cell at all to the lower bound; the
    flags record which.

    Args:
        responses (array_like): Scored responses (N, n) with NaN for Absent.
        items (ItemParameters): Fixed item parameters.
        policy (AbsencePolicy | str): Absence policy.
        config (CalibrationConfig, optional): Tolerances and bounds. Defaults are used if None.
        student_ids (Sequence[str], optional): Identifiers attached to the result.
        initial (array_like, optional): Starting abilities, zeros by default.

    Returns:
        AbilityVector: Abilities and flags.

    Raises:
        DomainError: If there is no item.
        IntegrityError: If the dimensions disagree.
    """
    config = config or CalibrationConfig()
    x = apply_policy(responses, policy)
    if len(items) == 0 or x.shape[1] == 0:
        raise DomainError("Ability estimation needs at least one item.")
    _check_dimensions(x, x.shape[0], len(items))
    mask = ~np.isnan(x)
    x = np.where(mask, x, 0.0)

    flags = student_flags(x, mask)
    theta = np.zeros(x.shape[0]) if initial is None else np.array(initial, dtype=float)
    interior = flags == StudentFlag.OK.value
    if interior.any():
        theta[interior] = newton_abilities(
            x[interior], mask[interior], items.a, items.b, theta[interior], config
        )
    theta = clamp_flagged(theta, flags, config)

    n_flagged = int((~interior).sum())
    if n_flagged:
        logger.info("%d student(s) clamped to the ability bounds.", n_flagged)
    return AbilityVector(theta=theta, flags=tuple(flags), student_ids=tuple(student_ids))
