"""Per-run metric records shared by the transport, baseline and harness code."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

CSV_COLUMNS = ("iteration", "wall_ms", "mmd2", "mse_mean", "mse_var", "ess", "bandwidth")


@dataclass
class RunRecord:
    """Checkpoint rows plus the final particle snapshot of one run.

    Each row is a dict keyed by ``CSV_COLUMNS``; metrics that were not
    computed hold ``nan`` until the harness fills them in.
    """

    rows: list = field(default_factory=list)
    particles: Optional[np.ndarray] = None
    weights: Optional[np.ndarray] = None
    ess_history: list = field(default_factory=list)
    config_hash: Optional[str] = None
    version: Optional[str] = None
    info: dict = field(default_factory=dict)

    def add_row(self, iteration, wall_ms, ess=math.nan, bandwidth=math.nan, **metrics):
        if self.rows and iteration < self.rows[-1]["iteration"]:
            raise ValueError("checkpoint iterations must be non-decreasing")
        row = {c: math.nan for c in CSV_COLUMNS}
        row.update(iteration=int(iteration), wall_ms=float(wall_ms),
                   ess=float(ess), bandwidth=float(bandwidth))
        for key, value in metrics.items():
            if key not in row:
                raise KeyError(f"unknown metric column {key!r}")
            row[key] = float(value)
        self.rows.append(row)
        return row

    def column(self, name):
        return np.array([row[name] for row in self.rows], dtype=float)

    @property
    def final(self):
        return self.rows[-1] if self.rows else None
