"""Axis-aligned box domains (intervals and rectangles)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Box:
    """The open box ``prod_i (lower[i], upper[i])``."""

    lower: tuple[float, ...]
    upper: tuple[float, ...]

    def __post_init__(self):
        if len(self.lower) != len(self.upper) or not self.lower:
            raise ValueError("lower and upper must be nonempty and of equal length")
        if any(hi <= lo for lo, hi in zip(self.lower, self.upper)):
            raise ValueError(f"degenerate box {self.lower} x {self.upper}")

    @classmethod
    def interval(cls, a, b):
        return cls((float(a),), (float(b),))

    @classmethod
    def rectangle(cls, ax, bx, ay, by):
        return cls((float(ax), float(ay)), (float(bx), float(by)))

    @property
    def dim(self) -> int:
        return len(self.lower)

    @property
    def lengths(self) -> np.ndarray:
        return np.subtract(self.upper, self.lower)

    @property
    def volume(self) -> float:
        return float(np.prod(self.lengths))

    @property
    def perimeter(self) -> float:
        """Measure of the boundary; counting measure (= 2) in 1D."""
        if self.dim == 1:
            return 2.0
        if self.dim == 2:
            return float(2.0 * self.lengths.sum())
        raise NotImplementedError("only intervals and rectangles are supported")

    def contains(self, x, strict=True) -> np.ndarray:
        x = np.atleast_2d(x)
        lo, hi = np.asarray(self.lower), np.asarray(self.upper)
        if strict:
            return np.all((x > lo) & (x < hi), axis=1)
        return np.all((x >= lo) & (x <= hi), axis=1)

    def boundary_distance(self, x) -> np.ndarray:
        """Distance to the boundary for points inside the closed box."""
        x = np.atleast_2d(x)
        return np.min(np.minimum(x - np.asarray(self.lower), np.asarray(self.upper) - x), axis=1)
