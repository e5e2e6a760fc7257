"""Seeded Monte Carlo collocation points.

Every batch is drawn from its own counter-based stream keyed by
``(experiment, seed, epoch, purpose)``.  The key is hashed into a
:class:`numpy.random.SeedSequence` (``entropy=seed``,
``spawn_key=(crc32(experiment), epoch, crc32(purpose))``) driving a Philox
generator, so a batch can be regenerated from its key alone and the descent
and ascent epochs never share random numbers.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np

from .domain import Box

__all__ = ["StreamKey", "CollocationBatch", "stream", "sample_interior", "sample_boundary", "boundary_grid", "draw_batch"]


def _code(label: str) -> int:
    return zlib.crc32(label.encode("utf-8"))


@dataclass(frozen=True)
class StreamKey:
    experiment: str
    seed: int
    epoch: int
    purpose: str

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(
            entropy=int(self.seed), spawn_key=(_code(self.experiment), int(self.epoch), _code(self.purpose))
        )
        return np.random.Generator(np.random.Philox(ss))

    def __str__(self):
        return f"{self.experiment}/seed={self.seed}/epoch={self.epoch}/{self.purpose}"


def stream(experiment: str, seed: int, epoch: int, purpose: str) -> np.random.Generator:
    return StreamKey(experiment, seed, epoch, purpose).generator()


def sample_interior(domain: Box, n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` iid uniform points strictly inside ``domain``, shape (n, dim)."""
    if n < 1:
        raise ValueError("need at least one interior point")
    lo, hi = np.asarray(domain.lower), np.asarray(domain.upper)
    pts = rng.uniform(lo, hi, size=(n, domain.dim))
    # uniform() is half-open; redraw the (measure-zero) points that hit the lower face
    bad = ~domain.contains(pts)
    while bad.any():
        pts[bad] = rng.uniform(lo, hi, size=(int(bad.sum()), domain.dim))
        bad = ~domain.contains(pts)
    return pts


def sample_boundary(domain: Box, n: int, rng: np.random.Generator) -> np.ndarray:
    """Boundary points: both endpoints in 1D, uniform by arc length in 2D."""
    if n < 1:
        raise ValueError("need at least one boundary point")
    if domain.dim == 1:
        ends = np.array([[domain.lower[0]], [domain.upper[0]]])
        return np.resize(ends, (n, 1)) if n != 2 else ends
    if domain.dim != 2:
        raise ValueError("boundary sampling supports intervals and rectangles only")
    (ax, ay), (bx, by) = domain.lower, domain.upper
    lx, ly = bx - ax, by - ay
    s = rng.uniform(0.0, 2 * (lx + ly), size=n)
    return _perimeter_points(domain, s)


def _perimeter_points(domain: Box, s: np.ndarray) -> np.ndarray:
    """Map arc-length positions (counter-clockwise from the lower-left corner) to points."""
    (ax, ay), (bx, by) = domain.lower, domain.upper
    lx, ly = bx - ax, by - ay
    pts = np.empty((len(s), 2))
    e0 = s < lx
    e1 = (s >= lx) & (s < lx + ly)
    e2 = (s >= lx + ly) & (s < 2 * lx + ly)
    e3 = s >= 2 * lx + ly
    pts[e0] = np.column_stack([ax + s[e0], np.full(e0.sum(), ay)])
    pts[e1] = np.column_stack([np.full(e1.sum(), bx), ay + (s[e1] - lx)])
    pts[e2] = np.column_stack([bx - (s[e2] - lx - ly), np.full(e2.sum(), by)])
    pts[e3] = np.column_stack([np.full(e3.sum(), ax), by - (s[e3] - 2 * lx - ly)])
    return pts


def boundary_grid(domain: Box, n: int) -> np.ndarray:
    """Deterministic, evenly spaced boundary points (corners included in 2D)."""
    if domain.dim == 1:
        return np.array([[domain.lower[0]], [domain.upper[0]]])
    per = 2 * float(domain.lengths.sum())
    return _perimeter_points(domain, np.linspace(0.0, per, n, endpoint=False))


@dataclass(frozen=True)
class CollocationBatch:
    interior: np.ndarray
    boundary: np.ndarray
    epoch: int
    key: str


def draw_batch(domain: Box, n_interior: int, n_boundary: int, key: StreamKey) -> CollocationBatch:
    rng = key.generator()
    interior = sample_interior(domain, n_interior, rng)
    boundary = sample_boundary(domain, n_boundary, rng)
    return CollocationBatch(interior, boundary, key.epoch, str(key))
