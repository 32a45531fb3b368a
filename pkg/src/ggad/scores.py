from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(eq=False)
class ScoreVector:
    """Per-node scores of one channel plus how they were normalized."""

    values: np.ndarray
    channel: str = "score"
    normalized: bool = False
    diagnostics: dict = field(default_factory=dict)

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    def __len__(self) -> int:
        return len(self.values)


def minmax(values) -> np.ndarray:
    """Scale to [0, 1]; a constant vector maps to all 0.5."""
    v = np.asarray(values, dtype=np.float64)
    lo, hi = v.min(), v.max()
    if hi - lo <= 0.0:
        return np.full_like(v, 0.5)
    return (v - lo) / (hi - lo)
