"""CSV metrics log: one row per evaluation point, full float precision."""

from __future__ import annotations

import os

from .errors import UsageError

COLUMNS = (
    "step",
    "episodes",
    "td_loss",
    "prune_loss",
    "prune_weight",
    "epsilon",
    "mean_diag_conf",
    "eval_return_c",
    "eval_return_d",
    "eval_win_c",
    "eval_win_d",
)

_INT_COLUMNS = ("step", "episodes")


def format_row(row):
    """Render one metrics row deterministically ("%.17g" for floats)."""
    cells = []
    for name in COLUMNS:
        if name not in row:
            raise UsageError(f"metrics row is missing column {name!r}")
        value = row[name]
        if name in _INT_COLUMNS:
            cells.append(str(int(value)))
        else:
            cells.append("%.17g" % float(value))
    return ",".join(cells)


class MetricsWriter:
    """Appends evaluation rows to a CSV file, writing the header once."""

    def __init__(self, path):
        self.path = path
        if not os.path.exists(path) or os.path.getsize(path) == 0:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(",".join(COLUMNS) + "\n")

    def write_row(self, row):
        line = format_row(row)
        with open(self.path, "a", encoding="utf-8") as fh:
            fh.write(line + "\n")
        return line


def read_metrics(path):
    """Parse a metrics CSV back into a list of per-row dicts."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = [line.rstrip("\n") for line in fh if line.strip()]
    if not lines or lines[0].split(",") != list(COLUMNS):
        raise UsageError(f"{path} does not look like a metrics file")
    rows = []
    for line in lines[1:]:
        cells = line.split(",")
        if len(cells) != len(COLUMNS):
            raise UsageError(f"malformed metrics row: {line!r}")
        row = {}
        for name, cell in zip(COLUMNS, cells):
            row[name] = int(cell) if name in _INT_COLUMNS else float(cell)
        rows.append(row)
    return rows
