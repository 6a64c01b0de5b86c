"""Published steady-state collision-rate means and Table-style phi reports.

Values are stored in units of 1e-8 per (object year). The bundled table has
two columns per species pair: ``exp`` (static exponential atmosphere) and
``jb`` (JB2008 atmosphere), for 36 shells.
"""
import csv
import io
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .errors import ShapeError
from .model import PAIRS
from .ukf import PHI_UNIT

REFERENCE_FILE = "reference_phi_means.csv"


@dataclass(frozen=True)
class PhiTable:
    """``values[shell - 1, pair, column]`` in units of ``unit``."""

    shells: np.ndarray
    columns: tuple
    values: np.ndarray
    unit: float = PHI_UNIT

    def get(self, shell, pair, column):
        row = int(np.flatnonzero(self.shells == shell)[0]) if shell in self.shells else None
        if row is None:
            raise KeyError(f"shell {shell} not in table")
        return float(self.values[row, PAIRS.index(pair), self.columns.index(column)])

    def rates(self, column):
        """Rates in 1/(object year), shape (6, n_shells)."""
        return self.values[:, :, self.columns.index(column)].T * self.unit


def _parse(reader, source):
    header = reader.fieldnames or []
    if "shell" not in header:
        raise ShapeError(f"{source}: missing 'shell' column")
    columns = []
    for name in header:
        if name.startswith("phi_SS_"):
            columns.append(name[len("phi_SS_"):])
    if not columns:
        raise ShapeError(f"{source}: no phi_SS_<label> columns")
    for label in columns:
        for p in PAIRS:
            if f"phi_{p}_{label}" not in header:
                raise ShapeError(f"{source}: missing column phi_{p}_{label}")
    shells, rows = [], []
    for rec in reader:
        shells.append(int(rec["shell"]))
        rows.append([[float(rec[f"phi_{p}_{c}"]) for c in columns] for p in PAIRS])
    return PhiTable(np.array(shells), tuple(columns), np.array(rows, dtype=np.float64))


def load_phi_table(path=None):
    """Read a phi table CSV; defaults to the bundled published table."""
    if path is None:
        text = resources.files("ssem_ukf").joinpath("data").joinpath(REFERENCE_FILE).read_text("utf-8")
        return _parse(csv.DictReader(io.StringIO(text)), REFERENCE_FILE)
    with open(path, newline="", encoding="utf-8") as fh:
        return _parse(csv.DictReader(fh), path)


def phi_table_from_means(means, label="ukf", unit=PHI_UNIT):
    """Wrap (6, n) rates in 1/(object year) as a one-column :class:`PhiTable`."""
    means = np.asarray(means, dtype=np.float64)
    if means.ndim != 2 or means.shape[0] != len(PAIRS):
        raise ShapeError("means must have shape (6, n_shells)")
    vals = (means / unit).T[:, :, None]
    return PhiTable(np.arange(1, means.shape[1] + 1), (label,), vals, unit)


def write_phi_table(table, path, digits=2):
    """Write ``table`` in the published layout: shell, then pairs by column label."""
    header = ["shell"] + [f"phi_{p}_{c}" for p in PAIRS for c in table.columns]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r, shell in enumerate(table.shells):
            w.writerow([int(shell)] + [f"{table.values[r, k, j]:.{digits}f}"
                                       for k in range(len(PAIRS)) for j in range(len(table.columns))])


def format_phi_table(table, digits=2):
    """Plain-text rendering with one row per shell."""
    head = ["Shell"] + [f"{p}:{c}" for p in PAIRS for c in table.columns]
    width = max(8, digits + 6)
    lines = ["".join(h.rjust(width) for h in head)]
    for r, shell in enumerate(table.shells):
        cells = [str(int(shell))] + [f"{table.values[r, k, j]:.{digits}f}"
                                     for k in range(len(PAIRS)) for j in range(len(table.columns))]
        lines.append("".join(c.rjust(width) for c in cells))
    lines.append(f"* values in units of {table.unit:g} per object-year")
    return "\n".join(lines)
