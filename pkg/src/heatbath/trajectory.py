"""Recorded trajectories and their CSV form."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class Trajectory:
    t: np.ndarray
    z: np.ndarray
    w: np.ndarray
    columns: dict = field(default_factory=dict)

    def to_rows(self):
        n2, d = self.z.shape[-1], self.w.shape[-1]
        header = ["t"] + [f"z{i}" for i in range(n2)] + [f"w{j}" for j in range(d)] + list(self.columns)
        extra = [np.asarray(v) for v in self.columns.values()]
        rows = []
        for k in range(len(self.t)):
            rows.append([self.t[k], *self.z[k], *self.w[k], *(v[k] for v in extra)])
        return header, rows
