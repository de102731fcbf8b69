"""Shared 2-D field-map container.

Arrays are laid out ``values[iy, ix]`` with the y index increasing
upward, so row 0 is the bottom of the domain.  Coordinates refer to cell
centres and are in micrometres.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["FieldGrid"]


@dataclass
class FieldGrid:
    """A scalar field sampled on a uniform square grid.

    Attributes:
        values: Field samples, shape (ny, nx), float64.
        dx_um: Cell size (same in x and y).
        x0_um: x coordinate of the centre of column 0.
        y0_um: y coordinate of the centre of row 0.
        sphere_bottom_um: Optional y position of the lowest point of a
            focusing sphere in the scene; downstream peak searches are
            restricted to rows below it.
    """

    values: np.ndarray
    dx_um: float
    x0_um: float = 0.0
    y0_um: float = 0.0
    sphere_bottom_um: float | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2:
            raise ValueError(f"values must be 2-D, got shape {self.values.shape}")
        if self.dx_um <= 0:
            raise ValueError(f"dx_um must be positive, got {self.dx_um}")

    @property
    def ny(self) -> int:
        return self.values.shape[0]

    @property
    def nx(self) -> int:
        return self.values.shape[1]

    @property
    def x_um(self) -> np.ndarray:
        return self.x0_um + self.dx_um * np.arange(self.nx)

    @property
    def y_um(self) -> np.ndarray:
        return self.y0_um + self.dx_um * np.arange(self.ny)
