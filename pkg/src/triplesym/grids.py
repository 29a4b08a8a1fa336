"""Rectangular probe grids in (t, y) with two-level refinement."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np


@dataclass(frozen=True)
class Grid:
    """Tensor grid on [t_lo, t_hi] x [y_lo, y_hi].

    With ``open_left`` the node t_lo itself is omitted, so ``nt`` nodes sit at
    t_lo + (t_hi - t_lo) * i / nt for i = 1..nt.  Refinement halves both
    spacings, which keeps the node sets nested in t.
    """

    t_lo: float
    t_hi: float
    nt: int
    y_lo: float = 0.0
    y_hi: float = 0.0
    ny: int = 1
    open_left: bool = False

    def t_nodes(self) -> np.ndarray:
        if self.open_left:
            i = np.arange(1, self.nt + 1)
            return self.t_lo + (self.t_hi - self.t_lo) * i / self.nt
        return np.linspace(self.t_lo, self.t_hi, self.nt)

    def y_nodes(self) -> np.ndarray:
        if self.ny == 1:
            return np.array([0.5 * (self.y_lo + self.y_hi)])
        return np.linspace(self.y_lo, self.y_hi, self.ny)

    def mesh(self):
        """Return (t, y) arrays of shape (nt, ny)."""
        return np.meshgrid(self.t_nodes(), self.y_nodes(), indexing="ij")

    @property
    def size(self) -> int:
        return self.nt * self.ny

    def refined(self) -> "Grid":
        ny = self.ny if self.ny == 1 else 2 * self.ny - 1
        nt = 2 * self.nt if self.open_left else 2 * self.nt - 1
        return replace(self, nt=nt, ny=ny)

    def describe(self) -> dict:
        return {
            "t": [self.t_lo, self.t_hi, self.nt],
            "y": [self.y_lo, self.y_hi, self.ny],
            "open_left": self.open_left,
        }
