"""hdperm.inference.io

CSV datasets in, CSV tables and JSON results out.
"""

from __future__ import annotations

import logging
import os
import sys
from typing import Any

import numpy as np
import orjson
import pandas as pd

from .errors import DimensionMismatch, NonFiniteValue, ParseError
from .models import DesignData, resolve_variable

logger = logging.getLogger(__name__)

PathLike = str | os.PathLike


def _is_number(cell: str) -> bool:
    try:
        float(cell)
    except (TypeError, ValueError):
        return False
    return True


_NA_TOKENS = ("na", "n/a")


def _is_label(cell: str) -> bool:
    return cell != "" and cell.lower() not in _NA_TOKENS and not _is_number(cell)


def read_numeric_csv(path: PathLike) -> tuple[np.ndarray, tuple[str, ...] | None]:
    """Numeric CSV as a float matrix plus the header names, if any.

    The first row is a header when it has a non-empty cell that is neither
    a number nor an NA token.
    Empty cells and NaN/Inf are kept (as non-finite values) for the caller
    to report; other non-numeric cells raise ParseError.
    """
    try:
        frame = pd.read_csv(
            path, header=None, dtype=str, keep_default_na=False, skipinitialspace=True
        )
    except FileNotFoundError as e:
        raise ParseError(f"{path}: file not found") from e
    except (pd.errors.EmptyDataError, pd.errors.ParserError, UnicodeDecodeError) as e:
        raise ParseError(f"{path}: {e}") from e

    frame = frame.apply(lambda column: column.str.strip())
    names = None
    if any(_is_label(cell) for cell in frame.iloc[0]):
        names = tuple(frame.iloc[0])
        frame = frame.iloc[1:].reset_index(drop=True)
    if frame.empty:
        raise ParseError(f"{path}: no data rows")

    parsed = frame.apply(lambda column: column.map(_is_number))
    values = frame.where(parsed, "nan").astype(np.float64)
    invalid = ~parsed & (frame != "") & ~frame.apply(
        lambda column: column.str.lower().isin(_NA_TOKENS)
    )
    if invalid.to_numpy().any():
        i, j = np.argwhere(invalid.to_numpy())[0]
        raise ParseError(
            f"{path}: non-numeric value {frame.iat[i, j]!r} at row {i}, column {j}"
        )

    return values.to_numpy(dtype=np.float64), names


def _check_finite(path: PathLike, values: np.ndarray, names: tuple[str, ...] | None):
    bad = np.argwhere(~np.isfinite(values))
    if bad.size:
        i, j = (int(v) for v in bad[0])
        column = names[j] if names is not None else str(j)
        raise NonFiniteValue(
            f"{path}: non-finite value {values[i, j]} at row {i}, column {column}"
        )


def load_design(path: PathLike) -> tuple[np.ndarray, tuple[str, ...] | None]:
    """Design matrix and its column names from a CSV file."""
    values, names = read_numeric_csv(path)
    _check_finite(path, values, names)
    logger.debug(f"Loaded design {values.shape[0]}x{values.shape[1]} from {path}")
    return values, names


def load_dataset(
    design_path: PathLike,
    response_path: PathLike | None = None,
    response_column: str | int | None = None,
) -> DesignData:
    """Validated DesignData from CSV files.

    The response is either a one-column CSV file or a column (name or
    0-based index) of the design file, removed from the design.

    Raises:
        ParseError: unreadable or non-numeric input, or no response given.
        DimensionMismatch: design and response row counts differ.
        NonFiniteValue: NaN or Inf cells (with their location).
    """
    if (response_path is None) == (response_column is None):
        raise ParseError("Give exactly one of a response file or a response column")

    x, names = load_design(design_path)
    response_name = "y"

    if response_column is not None:
        lookup = {name: j for j, name in enumerate(names or ())}
        j = resolve_variable(response_column, lookup, x.shape[1])
        y = x[:, j]
        x = np.delete(x, j, axis=1)
        if names is not None:
            response_name = names[j]
            names = names[:j] + names[j + 1 :]
    else:
        values, header = read_numeric_csv(response_path)
        _check_finite(response_path, values, header)
        if values.shape[1] != 1:
            raise DimensionMismatch(
                f"{response_path}: response must have one column, got {values.shape[1]}"
            )
        y = values[:, 0]
        if header is not None:
            response_name = header[0]

    if x.shape[0] != y.shape[0]:
        raise DimensionMismatch(
            f"Design has {x.shape[0]} rows but response has {y.shape[0]}"
        )

    return DesignData(y, x, names=names, response_name=response_name)


def dumps(obj: Any) -> bytes:
    """orjson-encode a result, numpy values included."""
    return orjson.dumps(
        obj, option=orjson.OPT_INDENT_2 | orjson.OPT_SERIALIZE_NUMPY | orjson.OPT_APPEND_NEWLINE
    )


def write_output(content: str | bytes, path: PathLike | None = None) -> None:
    """Write to `path`, or to stdout when no path is given."""
    if isinstance(content, str):
        content = content.encode("utf-8")

    if path is None:
        sys.stdout.buffer.write(content)
        sys.stdout.flush()
        return

    with open(path, "wb") as f:
        f.write(content)
    logger.debug(f"Wrote {len(content)} bytes to {path}")
