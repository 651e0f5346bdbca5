from dataclasses import dataclass, field
from enum import Enum, IntEnum
import re
from typing import Sequence

import numpy as np
import pandas as pd

from lcta.utils.errors import DomainError, IntegrityError

# Item ids carry their LCT unit as a prefix, e.g. "L07-Q3" belongs to unit 7.
UNIT_TAG_PATTERN = re.compile(r"^L(\d+)-.+$")

# Cell codes as written in the matrix CSV
CELL_CODES = {"1": 1, "0": 0, "NA": -1}


class ResponseCell(IntEnum):
    """State of a single student-item response."""

    ABSENT = -1
    INCORRECT = 0
    CORRECT = 1


class AbsencePolicy(str, Enum):
    """How Absent cells enter the likelihood."""

    AS_INCORRECT = "as-incorrect"
    AS_MISSING = "as-missing"


def parse_unit_tag(item_id: str) -> int:
    """Return the LCT unit encoded in an item id.

    Args:
        item_id (str): Item identifier such as ``"L07-Q3"``.

    Returns:
        int: The unit index (7 for ``"L07-Q3"``).

    Raises:
        IntegrityError: If the id does not carry a unit tag.
    """
    match = UNIT_TAG_PATTERN.match(item_id)
    if match is None:
        raise IntegrityError(
            f"Item id '{item_id}' has no unit tag; expected the form 'L<unit>-<name>'."
        )
    return int(match.group(1))


def make_item_ids(items_per_test: int, n_tests: int) -> list[str]:
    """Build canonical item ids ``L01-Q1 ... L<K>-Q<m>``."""
    width = max(2, len(str(n_tests)))
    return [
        f"L{k:0{width}d}-Q{q}"
        for k in range(1, n_tests + 1)
        for q in range(1, items_per_test + 1)
    ]


def _check_unique(ids: Sequence[str], what: str) -> None:
    seen = set()
    for identifier in ids:
        if identifier in seen:
            raise IntegrityError(f"Duplicate {what} '{identifier}'.")
        seen.add(identifier)


@dataclass(kw_only=True, frozen=True)
class ResponseMatrix:
    """Dichotomous responses of N students to m items in each of K LCT units.

    Attributes:
        cells (np.ndarray): Read-only int8 array (N, m*K) of ``ResponseCell`` codes.
        student_ids (tuple[str, ...]): Opaque student identifiers, one per row.
        item_ids (tuple[str, ...]): Opaque item identifiers carrying unit tags, one per column.
        item_units (tuple[int, ...]): Unit index of every column. Derived from ``item_ids``
            when not given.

    Examples:
        >>> matrix = ResponseMatrix(
        ...     cells=np.array([[1, 0], [0, -1]]),
        ...     student_ids=["s1", "s2"],
        ...     item_ids=["L01-Q1", "L01-Q2"],
        ... )
        >>> matrix.n_tests, matrix.items_per_test
        (1, 2)
    """

    cells: np.ndarray
    student_ids: tuple[str, ...]
    item_ids: tuple[str, ...]
    item_units: tuple[int, ...] = field(default=())

    def __post_init__(self):
        cells = np.array(self.cells, dtype=np.int8, copy=True)
        cells.setflags(write=False)
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "student_ids", tuple(str(s) for s in self.student_ids))
        object.__setattr__(self, "item_ids", tuple(str(i) for i in self.item_ids))
        if not self.item_units:
            units = tuple(parse_unit_tag(item_id) for item_id in self.item_ids)
        else:
            units = tuple(int(u) for u in self.item_units)
        object.__setattr__(self, "item_units", units)
        self.validate()

    def validate(self) -> None:
        """
        Checks the structural invariants of the matrix.

        Raises:
            IntegrityError: If the cell array does not match the id lists, ids are duplicated,
                cell codes are unknown, or the unit tags are not the blocks 1..K of equal size.
        """
        if self.cells.ndim != 2:
            raise IntegrityError("Response cells must be a two-dimensional array.")
        n_rows, n_cols = self.cells.shape
        if n_rows != len(self.student_ids) or n_cols != len(self.item_ids):
            raise IntegrityError(
                f"Cell array is {n_rows}x{n_cols} but there are {len(self.student_ids)} "
                f"student ids and {len(self.item_ids)} item ids."
            )
        if len(self.item_units) != n_cols:
            raise IntegrityError("Every item column needs exactly one unit tag.")
        if n_cols == 0:
            raise IntegrityError("A response matrix needs at least one item.")
        _check_unique(self.student_ids, "student id")
        _check_unique(self.item_ids, "item id")

        if not np.isin(self.cells, [c.value for c in ResponseCell]).all():
            raise IntegrityError("Cells must be Correct (1), Incorrect (0) or Absent (-1).")

        units = np.asarray(self.item_units)
        if np.any(np.diff(units) < 0):
            raise IntegrityError("Item unit tags must be non-decreasing.")
        present, counts = np.unique(units, return_counts=True)
        if not np.array_equal(present, np.arange(1, len(present) + 1)):
            raise IntegrityError(
                f"Units must be numbered 1..K without gaps, found {present.tolist()}."
            )
        if not np.all(counts == counts[0]):
            raise IntegrityError(
                f"Every unit must own the same number of items, found {counts.tolist()}."
            )

    @property
    def n_students(self) -> int:
        return self.cells.shape[0]

    @property
    def n_tests(self) -> int:
        return self.item_units[-1]

    @property
    def items_per_test(self) -> int:
        return self.cells.shape[1] // self.n_tests

    def _check_unit(self, k: int) -> None:
        if not isinstance(k, (int, np.integer)) or not 1 <= k <= self.n_tests:
            raise DomainError(f"Unit k must lie in 1..{self.n_tests}, got {k}.")

    def _columns(self, mask: np.ndarray) -> "ResponseMatrix":
        return ResponseMatrix(
            cells=self.cells[:, mask],
            student_ids=self.student_ids,
            item_ids=tuple(np.asarray(self.item_ids, dtype=object)[mask]),
            item_units=tuple(np.asarray(self.item_units)[mask]),
        )

    def prefix(self, k: int) -> "ResponseMatrix":
        """Submatrix of units 1..k (N x m*k), ids and tags preserved.

        Raises:
            DomainError: If k is outside 1..K.
        """
        self._check_unit(k)
        return self._columns(np.asarray(self.item_units) <= k)

    def unit_slice(self, k: int) -> "ResponseMatrix":
        """Submatrix of unit k only (N x m), relabelled as a single-unit matrix.

        The returned matrix keeps the original item ids; its ``item_units`` are all 1 so it is
        a valid one-unit ``ResponseMatrix`` of its own.

        Raises:
            DomainError: If k is outside 1..K.
        """
        self._check_unit(k)
        mask = np.asarray(self.item_units) == k
        return ResponseMatrix(
            cells=self.cells[:, mask],
            student_ids=self.student_ids,
            item_ids=tuple(np.asarray(self.item_ids, dtype=object)[mask]),
            item_units=(1,) * int(mask.sum()),
        )

    def scored_view(
        self, policy: AbsencePolicy | str = AbsencePolicy.AS_INCORRECT
    ) -> np.ndarray:
        """
        Dichotomous float view of the responses.

        Correct maps to 1 and Incorrect to 0 under every policy. Under ``AS_INCORRECT`` Absent
        maps to 0; under ``AS_MISSING`` Absent maps to NaN and is skipped by every likelihood
        sum downstream. A row of only NaN has no scored cells.

        Args:
            policy (AbsencePolicy | str): Absence scoring policy.

        Returns:
            np.ndarray: Float array (N, m*K).
        """
        policy = AbsencePolicy(policy)
        scored = self.cells.astype(float)
        absent = self.cells == ResponseCell.ABSENT
        scored[absent] = 0.0 if policy is AbsencePolicy.AS_INCORRECT else np.nan
        return scored

    def to_frame(self) -> pd.DataFrame:
        """The matrix as a string DataFrame in CSV cell codes, indexed by student id."""
        codes = np.array(["NA", "0", "1"], dtype=object)[self.cells.astype(int) + 1]
        frame = pd.DataFrame(codes, columns=list(self.item_ids))
        frame.insert(0, "student_id", list(self.student_ids))
        return frame


@dataclass(kw_only=True, frozen=True)
class OutcomeLabels:
    """Final-examination outcomes, 1 = passed and 0 = failed.

    Attributes:
        student_ids (tuple[str, ...]): Student identifiers.
        passed (np.ndarray): Read-only int8 indicator per student.
    """

    student_ids: tuple[str, ...]
    passed: np.ndarray

    def __post_init__(self):
        passed = np.array(self.passed, dtype=np.int8, copy=True)
        passed.setflags(write=False)
        object.__setattr__(self, "passed", passed)
        object.__setattr__(self, "student_ids", tuple(str(s) for s in self.student_ids))
        if passed.ndim != 1 or len(passed) != len(self.student_ids):
            raise IntegrityError("There must be exactly one outcome per student id.")
        if not np.isin(passed, [0, 1]).all():
            raise IntegrityError("Outcome labels must be binary (1 passed, 0 failed).")
        _check_unique(self.student_ids, "student id")

    def __len__(self) -> int:
        return len(self.student_ids)

    @property
    def failed(self) -> np.ndarray:
        """Boolean mask of failed students, the positive class throughout."""
        return self.passed == 0

    def align(self, student_ids: Sequence[str]) -> "OutcomeLabels":
        """Return the labels reordered to ``student_ids``.

        Raises:
            IntegrityError: If any requested student has no label.
        """
        position = {sid: idx for idx, sid in enumerate(self.student_ids)}
        missing = [sid for sid in student_ids if sid not in position]
        if missing:
            raise IntegrityError(
                f"{len(missing)} student(s) have no outcome label, e.g. '{missing[0]}'."
            )
        order = [position[sid] for sid in student_ids]
        return OutcomeLabels(student_ids=tuple(student_ids), passed=self.passed[order])

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {"student_id": list(self.student_ids), "passed": self.passed.astype(int)}
        )
