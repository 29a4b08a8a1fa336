"""Sup-ratio measurements with a two-resolution stability check."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .grids import Grid

SKIP_LIMIT = 0.01


@dataclass
class MeasuredConstant:
    """sup |quantity| / bound over a grid, measured at spacing h and h/2."""

    name: str
    value: float
    grid: dict
    refinement_ratio: float
    value_fine: float = float("nan")
    skipped: int = 0
    total: int = 0
    band: tuple = (0.5, 1.5)
    witness: Optional[tuple] = None
    extra: dict = field(default_factory=dict)

    @property
    def stable(self) -> bool:
        lo, hi = self.band
        return math.isfinite(self.value) and lo <= self.refinement_ratio <= hi

    @property
    def skipped_fraction(self) -> float:
        return self.skipped / self.total if self.total else 0.0

    @property
    def confirmed(self) -> bool:
        return self.stable and self.skipped_fraction < SKIP_LIMIT

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "value": self.value,
            "value_fine": self.value_fine,
            "refinement_ratio": self.refinement_ratio,
            "band": list(self.band),
            "skipped": self.skipped,
            "total": self.total,
            "confirmed": self.confirmed,
            "witness": None if self.witness is None else list(self.witness),
            "grid": self.grid,
            **self.extra,
        }


def refinement_ratio(coarse: float, fine: float, floor: float = 1e-12) -> float:
    """fine/coarse, with two values below ``floor`` counting as equal."""
    if not (math.isfinite(coarse) and math.isfinite(fine)):
        return float("inf")
    if abs(coarse) <= floor and abs(fine) <= floor:
        return 1.0
    if abs(coarse) <= floor:
        return float("inf")
    return fine / coarse


def sup_ratio(num: np.ndarray, den: np.ndarray, t: np.ndarray, y: np.ndarray, floor: float):
    """sup |num|/den over points with den > floor; returns (value, skipped, witness)."""
    num = np.abs(np.asarray(num, float))
    den = np.asarray(den, float)
    ok = den > floor
    skipped = int(np.count_nonzero(~ok))
    if not np.any(ok):
        return 0.0, skipped, None
    r = np.where(ok, num / np.where(ok, den, 1.0), -np.inf)
    r = np.where(np.isnan(r), np.inf, r)
    k = int(np.argmax(r))
    return float(r.flat[k]), skipped, (float(t.flat[k]), float(y.flat[k]))


def measure_on_grids(name: str, fn: Callable[[Grid], tuple], grid: Grid,
                     band=(0.5, 1.5), floor: float = 1e-12) -> MeasuredConstant:
    """Evaluate ``fn`` (returning value, skipped, witness) on grid and grid.refined()."""
    v0, s0, w0 = fn(grid)
    fine = grid.refined()
    v1, s1, w1 = fn(fine)
    return MeasuredConstant(
        name=name, value=float(v0), value_fine=float(v1), grid=grid.describe(),
        refinement_ratio=refinement_ratio(v0, v1, floor),
        skipped=s0 if s0 * fine.size >= s1 * grid.size else s1,
        total=grid.size if s0 * fine.size >= s1 * grid.size else fine.size,
        band=band, witness=w1 or w0,
    )
