"""Point-pattern data model, CSV ingestion and window rescaling."""

from __future__ import annotations

import io
import os
import warnings
from dataclasses import dataclass
from typing import Iterable, TextIO

import numpy as np

__all__ = [
    "DuplicatePointsWarning",
    "PatternFormatError",
    "PointPattern",
    "Window",
    "load_pattern",
    "read_pattern",
    "rescale_to_unit",
    "to_csv",
    "write_pattern",
]


class PatternFormatError(ValueError):
    """Raised when delimited text cannot be parsed into a point pattern.

    ``row`` and ``column`` are 1-based positions in the source text
    (``column`` is ``None`` for whole-record problems).
    """

    def __init__(self, message: str, row: int | None = None, column: int | None = None):
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)
        self.row = row
        self.column = column


class DuplicatePointsWarning(UserWarning):
    """Emitted when a pattern contains coincident points."""


def _as_points(points, dim: int | None = None) -> np.ndarray:
    arr = np.array(points, dtype=float, copy=True)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1) if dim in (None, 1) else arr.reshape(-1, dim)
    if arr.ndim != 2:
        raise ValueError(f"points must be a 2-d array of shape (n, D), got ndim={arr.ndim}")
    return arr


@dataclass(frozen=True, eq=False)
class PointPattern:
    """``n`` points in the closed unit cube ``[0, 1]^D``.

    The coordinate array is copied on construction and made read-only, so a
    pattern can be shared freely between threads.
    """

    points: np.ndarray
    label: str | None = None

    def __post_init__(self):
        arr = _as_points(self.points)
        n, dim = arr.shape
        if n < 1:
            raise ValueError("a point pattern needs at least one point")
        if dim < 1:
            raise ValueError("points must have at least one coordinate")
        if not np.all(np.isfinite(arr)):
            raise ValueError("coordinates must be finite")
        bad = np.flatnonzero(np.any((arr < 0.0) | (arr > 1.0), axis=1))
        if bad.size:
            raise ValueError(
                f"point {int(bad[0])} lies outside [0, 1]^{dim}; rescale with rescale_to_unit first"
            )
        arr.setflags(write=False)
        object.__setattr__(self, "points", arr)
        _warn_on_duplicates(arr)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return self.n

    def __eq__(self, other) -> bool:
        if not isinstance(other, PointPattern):
            return NotImplemented
        return self.label == other.label and np.array_equal(self.points, other.points)

    def __hash__(self) -> int:
        return hash((self.label, self.points.shape, self.points.tobytes()))


def _warn_on_duplicates(arr: np.ndarray) -> None:
    if arr.shape[0] < 2:
        return
    unique = np.unique(arr, axis=0)
    if unique.shape[0] < arr.shape[0]:
        warnings.warn(
            f"{arr.shape[0] - unique.shape[0]} duplicate point(s) in pattern",
            DuplicatePointsWarning,
            stacklevel=3,
        )


@dataclass(frozen=True, eq=False)
class Window:
    """Axis-aligned rectangle ``[lower, upper]`` in data units."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float)).copy()
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float)).copy()
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("window bounds must be 1-d vectors of equal length")
        if not np.all(lo < hi):
            raise ValueError("window needs lower < upper in every coordinate")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def unit(cls, dim: int) -> "Window":
        return cls(np.zeros(dim), np.ones(dim))

    @classmethod
    def square(cls, side: float, dim: int = 2) -> "Window":
        return cls(np.zeros(dim), np.full(dim, float(side)))

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    @property
    def extent(self) -> np.ndarray:
        return self.upper - self.lower


def rescale_to_unit(points, window: Window, label: str | None = None) -> PointPattern:
    """Map points from ``window`` linearly onto the unit cube.

    ``points`` is an ``(n, D)`` array in data units or a :class:`PointPattern`
    (which is already in ``[0, 1]^D``, so only the unit window is sensible
    for it). Points on the window boundary are accepted.
    """
    if isinstance(points, PointPattern):
        label = points.label if label is None else label
        points = points.points
    arr = _as_points(points, window.dim)
    if arr.shape[1] != window.dim:
        raise ValueError(f"points have {arr.shape[1]} coordinates but the window has {window.dim}")
    outside = np.any((arr < window.lower) | (arr > window.upper), axis=1)
    if np.any(outside):
        idx = int(np.flatnonzero(outside)[0])
        raise ValueError(f"point {idx} {tuple(arr[idx])} lies outside the window")
    unit = (arr - window.lower) / window.extent
    # guard against rounding pushing boundary points a hair outside [0, 1]
    np.clip(unit, 0.0, 1.0, out=unit)
    return PointPattern(unit, label=label)


def _parse_float(text: str, row: int, column: int) -> float:
    try:
        value = float(text)
    except ValueError:
        raise PatternFormatError(f"cannot parse {text.strip()!r} as a number", row, column) from None
    if not np.isfinite(value):
        raise PatternFormatError(f"non-finite value {text.strip()!r}", row, column)
    return value


def _is_number(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def parse_records(lines: Iterable[str], dim: int) -> np.ndarray:
    """Parse comma-separated records into an ``(n, dim)`` float array.

    A single header line is skipped when its first field is not numeric.
    Blank lines are ignored.
    """
    if dim < 1:
        raise ValueError("dim must be at least 1")
    rows: list[list[float]] = []
    seen_record = False
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line:
            continue
        fields = [f.strip() for f in line.split(",")]
        if not seen_record:
            seen_record = True
            if not _is_number(fields[0]):
                continue
        if len(fields) != dim:
            raise PatternFormatError(f"expected {dim} fields, found {len(fields)}", lineno)
        rows.append([_parse_float(f, lineno, col) for col, f in enumerate(fields, start=1)])
    if not rows:
        raise PatternFormatError("no data records found")
    return np.asarray(rows, dtype=float)


def load_pattern(source: TextIO | str, dim: int, label: str | None = None) -> PointPattern:
    """Read a pattern already expressed in unit-cube coordinates.

    ``source`` is a text stream or a string holding the CSV content. No
    rescaling is applied; use :func:`read_pattern` with a window for data in
    other units.
    """
    if isinstance(source, str):
        source = io.StringIO(source)
    return PointPattern(parse_records(source, dim), label=label)


def read_pattern(path: str | os.PathLike, dim: int = 2, window: Window | None = None,
                 label: str | None = None) -> PointPattern:
    """Load a CSV file, optionally rescaling from ``window`` to the unit cube."""
    with open(path, encoding="utf-8") as fh:
        raw = parse_records(fh, dim)
    if label is None:
        label = os.path.splitext(os.path.basename(os.fspath(path)))[0]
    if window is None:
        return PointPattern(raw, label=label)
    return rescale_to_unit(raw, window, label=label)


def to_csv(pattern: PointPattern, header: bool = False) -> str:
    """Render a pattern as CSV using shortest round-trip float formatting."""
    out = io.StringIO()
    if header:
        names = ["x", "y", "z"] if pattern.dim <= 3 else [f"x{d + 1}" for d in range(pattern.dim)]
        out.write(",".join(names[: pattern.dim]) + "\n")
    for row in pattern.points:
        out.write(",".join(repr(float(v)) for v in row) + "\n")
    return out.getvalue()


def write_pattern(pattern: PointPattern, path: str | os.PathLike, header: bool = False) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(to_csv(pattern, header=header))
