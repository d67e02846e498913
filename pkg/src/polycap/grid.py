"""Cartesian grids, region specifications, and rasterized node masks.

A Grid is a uniform tensor-product lattice over a bounding box with a fixed
lexicographic node ordering (last axis fastest, matching C-order reshape).
Regions are closed point sets (balls, boxes, ellipsoids, unions, rescalings)
with an exact membership test; rasterization marks every node whose
coordinate lies in the closed region.  All objects are immutable after
construction and safe to share across workers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

MAX_FULL_GRID_DIM = 4


def _as_vector(x, n=None) -> np.ndarray:
    v = np.atleast_1d(np.asarray(x, dtype=float))
    if n is not None and v.size != n:
        raise ValueError(f"expected vector of length {n}, got {v.size}")
    return v


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box [lo, hi] in domain units."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "lo", _as_vector(self.lo))
        object.__setattr__(self, "hi", _as_vector(self.hi, self.lo.shape[0]))
        if not np.all(self.lo < self.hi):
            raise ValueError("bounding box needs lo[i] < hi[i] on every axis")

    @property
    def ndim(self) -> int:
        return self.lo.size


@dataclass(frozen=True)
class Grid:
    """Uniform Cartesian grid with `resolution` nodes per axis (>= 3).

    Node k has multi-index unravel_index(k, resolution) in C order, so the
    ordering is lexicographic and reproducible.
    """

    box: BoundingBox
    resolution: tuple[int, ...]

    def __post_init__(self):
        res = tuple(int(r) for r in np.atleast_1d(self.resolution))
        object.__setattr__(self, "resolution", res)
        if len(res) != self.box.ndim:
            raise ValueError("resolution length must match box dimension")
        if self.box.ndim > MAX_FULL_GRID_DIM:
            raise ValueError(
                "full-grid dimension unsupported, use radial module"
            )
        if any(r < 3 for r in res):
            raise ValueError("resolution must be >= 3 nodes per axis")

    @property
    def ndim(self) -> int:
        return self.box.ndim

    @property
    def h(self) -> np.ndarray:
        return (self.box.hi - self.box.lo) / (np.array(self.resolution) - 1)

    @property
    def node_count(self) -> int:
        return int(np.prod(self.resolution))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.h))

    def axis_coords(self, axis: int) -> np.ndarray:
        return np.linspace(self.box.lo[axis], self.box.hi[axis], self.resolution[axis])

    def coords(self) -> np.ndarray:
        """(node_count, ndim) array of node coordinates in node order."""
        axes = [self.axis_coords(a) for a in range(self.ndim)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def index_of(self, point) -> int:
        """Node index of the grid node nearest to `point` (must be on-grid)."""
        p = _as_vector(point, self.ndim)
        idx = np.rint((p - self.box.lo) / self.h).astype(int)
        if np.any(idx < 0) or np.any(idx >= np.array(self.resolution)):
            raise ValueError("point outside grid")
        return int(np.ravel_multi_index(tuple(idx), self.resolution))


def build_grid(box: BoundingBox, resolution) -> Grid:
    """Construct a grid; errors on resolution < 3 or dimension > 4."""
    res = np.atleast_1d(np.asarray(resolution, dtype=int))
    if res.size == 1 and box.ndim > 1:
        res = np.repeat(res, box.ndim)
    return Grid(box, tuple(int(r) for r in res))


# ---------------------------------------------------------------------------
# Region specifications
# ---------------------------------------------------------------------------

class RegionSpec:
    """Closed region of R^N with an exact membership test.

    Membership uses closed comparisons (boundary points are members), so a
    rasterized compact set keeps its boundary nodes.
    """

    def contains(self, points: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        """Axis-aligned (lo, hi) enclosing the region."""
        raise NotImplementedError

    def scaled(self, factor: float) -> "RegionSpec":
        raise NotImplementedError

    def is_empty(self) -> bool:
        return False


@dataclass(frozen=True)
class Ball(RegionSpec):
    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", _as_vector(self.center))
        object.__setattr__(self, "radius", float(self.radius))
        if self.radius < 0:
            raise ValueError("ball radius must be >= 0")

    def contains(self, points):
        d2 = np.sum((np.atleast_2d(points) - self.center) ** 2, axis=1)
        return d2 <= self.radius**2

    def bounds(self):
        return self.center - self.radius, self.center + self.radius

    def scaled(self, factor):
        return Ball(self.center * factor, self.radius * factor)

    def is_empty(self):
        # a zero-radius ball is a single point; keep it (points rasterize
        # to at most one node, which is the degenerate hole case)
        return False


@dataclass(frozen=True)
class BoxRegion(RegionSpec):
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "lo", _as_vector(self.lo))
        object.__setattr__(self, "hi", _as_vector(self.hi, self.lo.size))
        if not np.all(self.lo <= self.hi):
            raise ValueError("box region needs lo <= hi")

    def contains(self, points):
        p = np.atleast_2d(points)
        return np.all((p >= self.lo) & (p <= self.hi), axis=1)

    def bounds(self):
        return self.lo.copy(), self.hi.copy()

    def scaled(self, factor):
        a, b = self.lo * factor, self.hi * factor
        return BoxRegion(np.minimum(a, b), np.maximum(a, b))


@dataclass(frozen=True)
class Ellipsoid(RegionSpec):
    center: np.ndarray
    semiaxes: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "center", _as_vector(self.center))
        object.__setattr__(self, "semiaxes", _as_vector(self.semiaxes, self.center.size))
        if np.any(self.semiaxes < 0):
            raise ValueError("semiaxes must be >= 0")

    def contains(self, points):
        p = np.atleast_2d(points) - self.center
        with np.errstate(divide="ignore", invalid="ignore"):
            q = np.where(self.semiaxes > 0, p / self.semiaxes, np.where(p == 0, 0.0, np.inf))
        return np.sum(q**2, axis=1) <= 1.0

    def bounds(self):
        return self.center - self.semiaxes, self.center + self.semiaxes

    def scaled(self, factor):
        return Ellipsoid(self.center * factor, self.semiaxes * factor)


@dataclass(frozen=True)
class UnionRegion(RegionSpec):
    parts: tuple[RegionSpec, ...]

    def __post_init__(self):
        parts = tuple(self.parts)
        if not parts:
            raise ValueError("union must be nonempty")
        object.__setattr__(self, "parts", parts)

    def contains(self, points):
        p = np.atleast_2d(points)
        m = np.zeros(p.shape[0], dtype=bool)
        for part in self.parts:
            m |= part.contains(p)
        return m

    def bounds(self):
        los, his = zip(*(p.bounds() for p in self.parts))
        return np.min(los, axis=0), np.max(his, axis=0)

    def scaled(self, factor):
        return UnionRegion(tuple(p.scaled(factor) for p in self.parts))


@dataclass(frozen=True)
class EmptyRegion(RegionSpec):
    """Region with no points; rasterizes to an empty mask."""

    ndim: int = 0

    def contains(self, points):
        return np.zeros(np.atleast_2d(points).shape[0], dtype=bool)

    def bounds(self):
        z = np.zeros(max(self.ndim, 1))
        return z, z

    def scaled(self, factor):
        return self

    def is_empty(self):
        return True


def scale_region(region: RegionSpec, eps: float) -> RegionSpec:
    """Map every point x of the region to eps*x (composes multiplicatively)."""
    eps = float(eps)
    if eps <= 0:
        raise ValueError("scaling factor must be > 0")
    return region.scaled(eps)


# ---------------------------------------------------------------------------
# Rasterization
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NodeMask:
    """Boolean membership per grid node, in node order."""

    grid: Grid
    membership: np.ndarray
    clipped: bool = False

    def __post_init__(self):
        m = np.asarray(self.membership, dtype=bool)
        if m.shape != (self.grid.node_count,):
            raise ValueError("membership length must equal node count")
        m.setflags(write=False)
        object.__setattr__(self, "membership", m)

    @property
    def count(self) -> int:
        return int(self.membership.sum())

    @property
    def indices(self) -> np.ndarray:
        return np.flatnonzero(self.membership)

    def is_empty(self) -> bool:
        return self.count == 0

    def issubset(self, other: "NodeMask") -> bool:
        return bool(np.all(~self.membership | other.membership))

    def union(self, other: "NodeMask") -> "NodeMask":
        return NodeMask(self.grid, self.membership | other.membership,
                        self.clipped or other.clipped)

    def difference(self, other: "NodeMask") -> "NodeMask":
        return NodeMask(self.grid, self.membership & ~other.membership, self.clipped)

    def dilate(self, layers: int = 1) -> "NodeMask":
        """Grow by `layers` of lattice neighbors (axis directions), clipped
        at the box faces."""
        m = self.membership.reshape(self.grid.resolution)
        for _ in range(layers):
            out = m.copy()
            for ax in range(self.grid.ndim):
                lo = np.zeros_like(m)
                hi = np.zeros_like(m)
                sl_src = [slice(None)] * m.ndim
                sl_dst = [slice(None)] * m.ndim
                sl_src[ax] = slice(1, None)
                sl_dst[ax] = slice(None, -1)
                lo[tuple(sl_dst)] = m[tuple(sl_src)]
                hi[tuple(sl_src)] = m[tuple(sl_dst)]
                out |= lo | hi
            m = out
        return NodeMask(self.grid, m.ravel(), self.clipped)

    def erode(self, layers: int = 1) -> "NodeMask":
        """Shrink by `layers`; nodes at box faces count as boundary."""
        inv = NodeMask(self.grid, ~self.membership)
        grown = inv.dilate(layers)
        return NodeMask(self.grid, self.membership & ~grown.membership, self.clipped)


def rasterize(grid: Grid, region: RegionSpec) -> NodeMask:
    """Mark every node whose coordinate lies in the closed region.

    If the region extends beyond the grid box the mask is clipped and
    flagged.
    """
    if region.is_empty():
        return NodeMask(grid, np.zeros(grid.node_count, dtype=bool))
    member = region.contains(grid.coords())
    lo, hi = region.bounds()
    clipped = bool(np.any(lo < grid.box.lo - 1e-12) or np.any(hi > grid.box.hi + 1e-12))
    return NodeMask(grid, member, clipped=clipped)


def region_volume(region: RegionSpec, grid: Grid) -> float:
    """Node-count quadrature of the region's volume: count * prod(h)."""
    return rasterize(grid, region).count * grid.cell_volume
