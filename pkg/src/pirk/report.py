"""Experiment report shared by the benchmark modules."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class RunReport:
    scheme: str
    config: dict
    times: np.ndarray
    norm: np.ndarray
    stable: bool
    cost: dict[str, float]
    failed: bool = False
    failure_time: float | None = None
    wall_time: float = 0.0
    extras: dict = field(default_factory=dict)

    def norm_at(self, t: float) -> float:
        """Norm at the last sample not after ``t`` (inf past a failure)."""
        idx = np.searchsorted(self.times, t * (1 + 1e-12), side="right") - 1
        if idx < 0:
            raise ValueError(f"no sample at or before t={t}")
        if self.failed and self.times[-1] < t * (1 - 1e-12):
            return float("inf")
        return float(self.norm[idx])
