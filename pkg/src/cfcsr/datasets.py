"""Registry of the four classical example patterns.

The coordinates are not bundled.  Each dataset is looked up as
``<data_dir>/<name>.csv`` where ``data_dir`` is the ``CFCSR_DATA_DIR``
environment variable or ``./data``.  The default window of each entry is the
one used by the widely circulated versions of these patterns (the pines,
cells and rush patterns already scaled to the unit square, the redwood
subset on ``[0, 1] x [-1, 0]``).  A sidecar ``<name>.window.json`` holding
``{"lower": [...], "upper": [...]}`` overrides it, e.g. for data in metres.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path

from .patterns import PointPattern, Window, read_pattern

__all__ = ["DATASETS", "DatasetInfo", "DatasetUnavailable", "data_dir", "dataset_path",
           "load_dataset"]


class DatasetUnavailable(FileNotFoundError):
    """The coordinate file for a registered dataset is not present."""


@dataclass(frozen=True)
class DatasetInfo:
    name: str
    n: int
    side_m: float  # side of the original square study region in metres
    lower: tuple[float, float]
    upper: tuple[float, float]
    description: str

    @property
    def window(self) -> Window:
        return Window(self.lower, self.upper)


DATASETS: dict[str, DatasetInfo] = {
    info.name: info
    for info in (
        DatasetInfo("japanesepines", 65, 5.7, (0.0, 0.0), (1.0, 1.0),
                    "Japanese black pine saplings (near-random)"),
        DatasetInfo("redwood", 62, 23.0, (0.0, -1.0), (1.0, 0.0),
                    "redwood seedlings (aggregated)"),
        DatasetInfo("cells", 42, 1.0, (0.0, 0.0), (1.0, 1.0),
                    "centres of biological cells (regular)"),
        DatasetInfo("scouringrush", 39, 1.0, (0.0, 0.0), (1.0, 1.0),
                    "scouring rushes (heterogeneous)"),
    )
}


def data_dir() -> Path:
    return Path(os.environ.get("CFCSR_DATA_DIR", "data"))


def dataset_path(name: str) -> Path:
    if name not in DATASETS:
        raise KeyError(f"unknown dataset {name!r}; known: {sorted(DATASETS)}")
    return data_dir() / f"{name}.csv"


def load_dataset(name: str) -> PointPattern:
    """Load and rescale a registered dataset; raises :class:`DatasetUnavailable` if absent."""
    path = dataset_path(name)
    info = DATASETS[name]
    if not path.is_file():
        raise DatasetUnavailable(
            f"{name}: expected {info.n} points in {path} (set CFCSR_DATA_DIR to the data folder)"
        )
    window = info.window
    sidecar = path.with_suffix(".window.json")
    if sidecar.is_file():
        spec = json.loads(sidecar.read_text(encoding="utf-8"))
        window = Window(spec["lower"], spec["upper"])
    pattern = read_pattern(path, dim=2, window=window, label=name)
    if pattern.n != info.n:
        raise ValueError(f"{name}: expected {info.n} points, found {pattern.n}")
    return pattern
