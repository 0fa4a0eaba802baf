"""Balanced octree over a cubic box, stored implicitly.

Every level is kept full: level l holds all 8**l cells, addressed by a
bit-interleaved index so that the children of cell q are exactly
8*q .. 8*q + 7.  The child octant encodes the axis halves as
o = (ix << 2) | (iy << 1) | iz (bit set = upper half), matching the
octant convention of the node transfer matrices.  No per-cell objects
exist; geometry is computed from indices on demand, which keeps trees
with millions of cells cheap.

Cells are half-open boxes [low, high) except on the domain's maximum
faces, which are closed so that boundary points still land in a leaf.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DomainError


@dataclass(frozen=True)
class BoxDomain:
    """The cubic simulation box: center and edge length."""

    center: tuple
    length: float

    def __post_init__(self):
        c = np.asarray(self.center, dtype=np.float64)
        if c.shape != (3,) or not np.all(np.isfinite(c)):
            raise ConfigurationError(f"domain center must be 3 finite floats, got {self.center}")
        if not (self.length > 0 and math.isfinite(self.length)):
            raise ConfigurationError(f"domain length must be positive, got {self.length}")
        object.__setattr__(self, "center", tuple(float(v) for v in c))

    @property
    def half_width(self) -> float:
        return 0.5 * self.length

    @property
    def low(self) -> np.ndarray:
        return np.asarray(self.center) - self.half_width

    @property
    def high(self) -> np.ndarray:
        return np.asarray(self.center) + self.half_width

    @classmethod
    def from_points(cls, *point_sets) -> "BoxDomain":
        """Smallest cube (axis-aligned, common center) covering all points."""
        pts = np.vstack([np.atleast_2d(np.asarray(p, dtype=np.float64))
                         for p in point_sets if np.asarray(p).size])
        if pts.size == 0:
            raise ConfigurationError("cannot build a domain from zero points")
        lo = pts.min(axis=0)
        hi = pts.max(axis=0)
        length = float(np.max(hi - lo))
        if length == 0.0:
            length = 1.0
        return cls(center=tuple(0.5 * (lo + hi)), length=length)


def suggest_levels(n_points: int, per_leaf: int = 60) -> int:
    """Leaf level giving roughly ``per_leaf`` points per leaf, at least 2."""
    if n_points < 1:
        return 2
    return max(2, round(math.log(max(n_points / per_leaf, 1.0), 8)))


def _spread_bits(v: np.ndarray) -> np.ndarray:
    """Space the low 21 bits of each value three apart (Morton interleave)."""
    v = v.astype(np.uint64) & np.uint64(0x1FFFFF)
    v = (v | (v << np.uint64(32))) & np.uint64(0x1F00000000FFFF)
    v = (v | (v << np.uint64(16))) & np.uint64(0x1F0000FF0000FF)
    v = (v | (v << np.uint64(8))) & np.uint64(0x100F00F00F00F00F)
    v = (v | (v << np.uint64(4))) & np.uint64(0x10C30C30C30C30C3)
    v = (v | (v << np.uint64(2))) & np.uint64(0x1249249249249249)
    return v


def encode_cells(ix, iy, iz) -> np.ndarray:
    """Cell index from integer grid coordinates (x in the high bits)."""
    ix = np.asarray(ix)
    iy = np.asarray(iy)
    iz = np.asarray(iz)
    return ((_spread_bits(ix) << np.uint64(2))
            | (_spread_bits(iy) << np.uint64(1))
            | _spread_bits(iz)).astype(np.int64)


def decode_cells(idx, level: int):
    """Integer grid coordinates (ix, iy, iz) of cells at a level."""
    idx = np.asarray(idx, dtype=np.int64)
    ix = np.zeros_like(idx)
    iy = np.zeros_like(idx)
    iz = np.zeros_like(idx)
    for b in range(level):
        o = (idx >> (3 * b)) & 7
        ix |= ((o >> 2) & 1) << b
        iy |= ((o >> 1) & 1) << b
        iz |= (o & 1) << b
    return ix, iy, iz


def interaction_offsets() -> np.ndarray:
    """All (tx, ty, tz) with max-norm 2 or 3, lexicographic; shape (316, 3).

    These are the only relative positions at which two same-level cells
    can be well separated while their parents are adjacent, so one
    translation table per offset covers the whole far-field pass.
    """
    r = range(-3, 4)
    offs = [t for t in itertools.product(r, r, r) if max(abs(c) for c in t) >= 2]
    return np.array(offs, dtype=np.int64)


def neighbor_offsets() -> np.ndarray:
    """The 27 offsets with max-norm <= 1, (0, 0, 0) included."""
    r = range(-1, 2)
    return np.array(list(itertools.product(r, r, r)), dtype=np.int64)


def _axis_coords(n: int, t: int) -> np.ndarray:
    """Valid target coordinates along one axis for a relative offset t.

    Bounds keep the source coordinate inside [0, n).  Offsets of +/-3 only
    occur between children of adjacent parents for one parity of the
    target coordinate (+3 needs an even coordinate, -3 an odd one); other
    magnitudes are parity-free.
    """
    lo = max(0, -t)
    hi = min(n - 1, n - 1 - t)
    if lo > hi:
        return np.empty(0, dtype=np.int64)
    c = np.arange(lo, hi + 1, dtype=np.int64)
    if t == 3:
        c = c[c % 2 == 0]
    elif t == -3:
        c = c[c % 2 == 1]
    return c


class Octree:
    """Implicit full octree of a BoxDomain down to a fixed leaf level."""

    def __init__(self, domain: BoxDomain, levels: int):
        if levels < 2:
            raise ConfigurationError(
                f"tree depth must be at least 2 (got {levels}); shallower "
                "trees have no far field")
        if levels > 21:
            raise ConfigurationError(f"tree depth {levels} exceeds the 21-bit index budget")
        self.domain = domain
        self.levels = int(levels)

    @property
    def leaf_level(self) -> int:
        return self.levels

    def n_cells(self, level: int) -> int:
        return 8 ** level

    def grid_size(self, level: int) -> int:
        return 2 ** level

    def cell_size(self, level: int) -> float:
        return self.domain.length / self.grid_size(level)

    def cell_half_width(self, level: int) -> float:
        return 0.5 * self.cell_size(level)

    def cell_centers(self, level: int, idx=None) -> np.ndarray:
        """Centers of the given cells (all cells at the level if idx is None)."""
        if idx is None:
            idx = np.arange(self.n_cells(level), dtype=np.int64)
        ix, iy, iz = decode_cells(idx, level)
        h = self.cell_size(level)
        coords = np.stack([ix, iy, iz], axis=-1).astype(np.float64)
        return self.domain.low + (coords + 0.5) * h

    def leaf_index(self, points) -> np.ndarray:
        """Leaf cell index for each point; points must lie in the domain."""
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        lo = self.domain.low
        tol = 1e-12 * self.domain.length
        if pts.size:
            if np.any(pts < lo - tol) or np.any(pts > self.domain.high + tol):
                bad = np.argmax(np.max(np.abs(pts - np.asarray(self.domain.center)), axis=1))
                raise DomainError(
                    f"point {pts[bad]} lies outside the box centered at "
                    f"{self.domain.center} with length {self.domain.length}")
        n = self.grid_size(self.levels)
        g = np.floor((pts - lo) / self.cell_size(self.levels)).astype(np.int64)
        np.clip(g, 0, n - 1, out=g)
        return encode_cells(g[:, 0], g[:, 1], g[:, 2])

    def cell_pairs_for_offset(self, level: int, t) -> tuple:
        """(targets, sources) index arrays for all pairs source = target + t.

        Works for both far-field offsets (max-norm 2..3, with the parity
        rule on +/-3 components) and neighbor offsets (max-norm <= 1).
        """
        n = self.grid_size(level)
        cx = _axis_coords(n, int(t[0]))
        cy = _axis_coords(n, int(t[1]))
        cz = _axis_coords(n, int(t[2]))
        if not (cx.size and cy.size and cz.size):
            empty = np.empty(0, dtype=np.int64)
            return empty, empty
        gx, gy, gz = np.meshgrid(cx, cy, cz, indexing="ij")
        gx = gx.ravel()
        gy = gy.ravel()
        gz = gz.ravel()
        targets = encode_cells(gx, gy, gz)
        sources = encode_cells(gx + t[0], gy + t[1], gz + t[2])
        return targets, sources

    def interaction_list(self, level: int, cell: int) -> np.ndarray:
        """Source cells whose parents neighbor this cell's parent but which
        are not themselves neighbors.  Empty below level 2, where every
        same-level cell is already a neighbor."""
        if level < 2:
            return np.empty(0, dtype=np.int64)
        n = self.grid_size(level)
        ix, iy, iz = decode_cells(np.asarray([cell]), level)
        out = []
        for t in interaction_offsets():
            jx, jy, jz = ix[0] + t[0], iy[0] + t[1], iz[0] + t[2]
            if not (0 <= jx < n and 0 <= jy < n and 0 <= jz < n):
                continue
            if abs(t[0]) == 3 and (ix[0] % 2 == 0) != (t[0] > 0):
                continue
            if abs(t[1]) == 3 and (iy[0] % 2 == 0) != (t[1] > 0):
                continue
            if abs(t[2]) == 3 and (iz[0] % 2 == 0) != (t[2] > 0):
                continue
            out.append(encode_cells(jx, jy, jz))
        return np.sort(np.array(out, dtype=np.int64).ravel()) if out else np.empty(0, dtype=np.int64)
