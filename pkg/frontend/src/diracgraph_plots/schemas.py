"""CSV schemas of the solver CLI artifacts and strict readers for them.

This package talks to the solver exclusively through these files; it never
imports solver internals.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path


class SchemaError(ValueError):
    """Raised when an input file does not match its documented schema."""


TIMESERIES_REQUIRED = ["t", "mass", "energy", "graph_norm"]
TIMESERIES_OPTIONAL = ["duhamel_residual"]
BRANCH_REQUIRED = ["eps", "omega", "sup_u", "sup_w", "l2_physical_mass",
                   "action", "newton_iters", "min_singular_value", "residual_norm"]
PROFILE_REQUIRED = ["edge_id", "node_kind", "x", "re_phi", "im_phi", "re_chi", "im_chi"]
SWEEP_REQUIRED = ["c", "norm_minus", "norm_plus"]


@dataclass
class Table:
    columns: list[str]
    rows: list[dict[str, str]]

    def floats(self, column: str, skip_blank: bool = True) -> list[float]:
        out = []
        for row in self.rows:
            cell = row[column]
            if cell == "" and skip_blank:
                continue
            out.append(float(cell))
        return out


def read_table(path, required: list[str]) -> Table:
    p = Path(path)
    if not p.is_file():
        raise SchemaError(f"input file not found: {path}")
    with open(p, newline="") as handle:
        reader = csv.DictReader(handle)
        columns = reader.fieldnames or []
        for col in required:
            if col not in columns:
                raise SchemaError(f"missing column {col!r} in {path}")
        rows = list(reader)
    return Table(columns=list(columns), rows=rows)
