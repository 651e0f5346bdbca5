from pathlib import Path

import numpy as np
import pandas as pd

from lcta.utils.errors import IntegrityError, ParseError
from lcta.utils.irt import AbilityVector
from lcta.utils.lcta_dataclass import CELL_CODES, OutcomeLabels, ResponseMatrix

LABEL_CODES = {"1": 1, "0": 0}
TREND_KINDS = ("per-unit", "cumulative")


def _read_rows(file_path: str | Path, what: str) -> np.ndarray:
    """Read a CSV as an array of raw strings, header row included."""
    file_path = Path(file_path)
    if not file_path.is_file():
        raise FileNotFoundError(f"{what} file '{file_path}' does not exist.")
    try:
        frame = pd.read_csv(
            file_path,
            header=None,
            dtype=str,
            na_filter=False,
            skip_blank_lines=True,
            encoding="utf-8",
        )
    except pd.errors.ParserError as err:
        raise IntegrityError(f"Ragged row in {what} file '{file_path}': {err}") from err
    except pd.errors.EmptyDataError as err:
        raise IntegrityError(f"{what} file '{file_path}' is empty.") from err
    if frame.isna().to_numpy().any():
        # short rows are padded with NaN even when NA parsing is disabled
        row = int(np.flatnonzero(frame.isna().to_numpy().any(axis=1))[0])
        raise IntegrityError(f"Ragged row {row} in {what} file '{file_path}'.")
    return frame.to_numpy(dtype=object)


def _first_invalid(values: np.ndarray, allowed) -> tuple[int, int] | None:
    invalid = ~np.isin(values, list(allowed))
    if not invalid.any():
        return None
    row, column = np.argwhere(invalid)[0]
    return int(row) + 1, int(column) + 1


def load_matrix(file_path: str | Path) -> ResponseMatrix:
    """
    Loads a response matrix from CSV.

    The first row is ``student_id`` followed by the m*K item ids, each carrying its unit tag
    (``L07-Q3``). Every body row is a student id followed by the cell codes ``1``, ``0`` or ``NA``.

    Args:
        file_path (str or Path): Path to the matrix CSV.

    Returns:
        ResponseMatrix: The validated matrix.

    Raises:
        ParseError: If a cell code is malformed; ``row`` and ``column`` give its 1-based data row
            and item column.
        IntegrityError: On ragged rows, duplicate ids or inconsistent unit tags.

    Examples:
        >>> matrix = load_matrix("out/matrix.csv")
        >>> matrix.cells.shape
        (1127, 70)
    """
    rows = _read_rows(file_path, "Matrix")
    header, body = rows[0], rows[1:]
    if header[0] != "student_id":
        raise IntegrityError("The first matrix column must be named 'student_id'.")

    codes = body[:, 1:]
    position = _first_invalid(codes, CELL_CODES)
    if position is not None:
        row, column = position
        raise ParseError(
            f"Malformed cell code '{codes[row - 1, column - 1]}' at row {row}, column {column}.",
            row=row,
            column=column,
        )
    cells = np.select([codes == "1", codes == "0"], [1, 0], default=-1).astype(np.int8)

    return ResponseMatrix(
        cells=cells.reshape(len(body), len(header) - 1),
        student_ids=tuple(body[:, 0]),
        item_ids=tuple(header[1:]),
    )


def load_labels(file_path: str | Path) -> OutcomeLabels:
    """
    Loads final-examination outcomes from a ``student_id,passed`` CSV.

    Raises:
        ParseError: If a ``passed`` value is not ``1`` or ``0``.
        IntegrityError: On a wrong header, ragged rows or duplicate ids.
    """
    rows = _read_rows(file_path, "Labels")
    header, body = rows[0], rows[1:]
    if list(header) != ["student_id", "passed"]:
        raise IntegrityError("Labels must have the header 'student_id,passed'.")
    position = _first_invalid(body[:, 1:], LABEL_CODES)
    if position is not None:
        row, _ = position
        raise ParseError(
            f"Malformed outcome '{body[row - 1, 1]}' at row {row}; expected 1 or 0.",
            row=row,
            column=1,
        )
    return OutcomeLabels(
        student_ids=tuple(body[:, 0]),
        passed=(body[:, 1] == "1").astype(np.int8),
    )


def load_abilities(file_path: str | Path) -> AbilityVector:
    """Loads a ``student_id,theta,flag`` ability file as written by ``lcta calibrate``."""
    frame = pd.read_csv(file_path, dtype={"student_id": str, "flag": str}, keep_default_na=False)
    missing = {"student_id", "theta", "flag"} - set(frame.columns)
    if missing:
        raise IntegrityError(f"Ability file lacks column(s) {sorted(missing)}.")
    return AbilityVector(
        theta=frame["theta"].to_numpy(dtype=float),
        flags=tuple(frame["flag"]),
        student_ids=tuple(frame["student_id"]),
    )


def load_trend(
    file_path: str | Path,
    flags_path: str | Path | None = None,
    kind: str | None = None,
):
    """
    Loads an ability trend written by ``lcta trend``.

    Args:
        file_path (str or Path): The ``student_id,theta_1,...`` trend CSV.
        flags_path (str or Path, optional): The parallel flags CSV. Defaults to the file next to
            ``file_path`` with a ``_flags`` suffix, if present.
        kind (str, optional): ``"cumulative"`` or ``"per-unit"``. Defaults to the kind named by a
            ``trend_<kind>`` file stem, else cumulative.

    Returns:
        AbilityTrend: Values and flags indexed by student id, one column per unit. Units
            that are NA for every student are outside the trend's k_range.
    """
    from lcta.modules.trends import AbilityTrend

    file_path = Path(file_path)
    values = _read_trend_frame(file_path, float)
    if flags_path is None:
        candidate = file_path.with_name(f"{file_path.stem}_flags{file_path.suffix}")
        flags_path = candidate if candidate.is_file() else None
    flags = None
    if flags_path is not None:
        flags = _read_trend_frame(Path(flags_path), str)
        if not flags.index.equals(values.index) or not flags.columns.equals(values.columns):
            raise IntegrityError("Trend values and flags do not share students and units.")
    k_range = tuple(int(k) for k in values.columns if values[k].notna().any())
    if kind is None:
        stem_kind = file_path.stem.removeprefix("trend_")
        kind = stem_kind if stem_kind in TREND_KINDS else "cumulative"
    return AbilityTrend(kind=kind, values=values, flags=flags, k_range=k_range)


def _read_trend_frame(file_path: Path, dtype) -> pd.DataFrame:
    frame = pd.read_csv(file_path, dtype={"student_id": str}, keep_default_na=False)
    if frame.columns[0] != "student_id":
        raise IntegrityError(f"'{file_path}' must start with a 'student_id' column.")
    frame = frame.set_index("student_id")
    units = []
    for column in frame.columns:
        if not column.startswith("theta_"):
            raise IntegrityError(f"Unexpected trend column '{column}' in '{file_path}'.")
        units.append(int(column.removeprefix("theta_")))
    frame.columns = units
    frame = frame.replace("NA", np.nan)
    if dtype is float:
        return frame.astype(float)
    return frame.astype(object).where(frame.notna(), None)


def load_predictions(file_path: str | Path) -> pd.DataFrame:
    """
    Loads a ``student_id,k,mu,p_fail,neighbor_ids`` prediction file.

    Returns:
        pd.DataFrame: One row per (student, k). ``neighbor_ids`` are kept as the
            ``;``-separated string.
    """
    frame = pd.read_csv(
        file_path, dtype={"student_id": str, "neighbor_ids": str}, keep_default_na=False
    )
    expected = ["student_id", "k", "mu", "p_fail", "neighbor_ids"]
    if list(frame.columns) != expected:
        raise IntegrityError(f"Prediction file columns must be {','.join(expected)}.")
    if frame.duplicated(["student_id", "k"]).any():
        raise IntegrityError("Duplicate (student_id, k) rows in the prediction file.")
    frame["k"] = frame["k"].astype(int)
    return frame
