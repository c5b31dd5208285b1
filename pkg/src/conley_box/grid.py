"""Box discretization of a rectangular window of R^d.

A :class:`BoxGrid` tiles a bounded window with half-open boxes (the last
box per axis is closed at the upper bound, so the tiling is exact).  The
complement of the window is represented by a single absorbing ``EXTERIOR``
node, which stands in for the unbounded part of the state space.  Box sets
are stored as integer bitmasks over flat box indices plus an
exterior-membership flag, so set algebra stays cheap even on large grids.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator, Sequence, Union

import numpy as np

from .errors import ConfigError, GridCapacityError

#: Default ceiling on the total interior box count (keeps bitmask algebra
#: in memory at desk scale).
DEFAULT_BOX_CAP = 2**24


class _Exterior:
    """Singleton identifier for the absorbing node outside the window."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "Exterior"


EXTERIOR = _Exterior()

#: A box identifier: either a multi-index tuple or the exterior node.
BoxId = Union[tuple, _Exterior]


@dataclass(frozen=True)
class BoxGrid:
    """Rectangular box covering of a window of R^d."""

    lo: np.ndarray
    hi: np.ndarray
    resolution: np.ndarray

    width: np.ndarray = field(init=False, repr=False)
    strides: np.ndarray = field(init=False, repr=False)
    n_boxes: int = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "lo", np.asarray(self.lo, dtype=float))
        object.__setattr__(self, "hi", np.asarray(self.hi, dtype=float))
        object.__setattr__(self, "resolution", np.asarray(self.resolution, dtype=np.int64))
        width = (self.hi - self.lo) / self.resolution
        object.__setattr__(self, "width", width)
        # Row-major strides over the multi-index.
        strides = np.ones(self.dimension, dtype=np.int64)
        for k in range(self.dimension - 2, -1, -1):
            strides[k] = strides[k + 1] * self.resolution[k + 1]
        object.__setattr__(self, "strides", strides)
        object.__setattr__(self, "n_boxes", int(np.prod(self.resolution)))

    @property
    def dimension(self) -> int:
        return self.lo.shape[0]

    @property
    def diameter(self) -> float:
        """Euclidean diameter of a single box."""
        return float(np.sqrt(np.sum(self.width**2)))

    @property
    def exterior_index(self) -> int:
        """Graph node id reserved for the exterior."""
        return self.n_boxes

    def flat_index(self, multi: Sequence[int]) -> int:
        return int(np.dot(np.asarray(multi, dtype=np.int64), self.strides))

    def multi_index(self, flat: int) -> tuple:
        out = []
        for k in range(self.dimension):
            out.append(int(flat // self.strides[k]))
            flat = int(flat % self.strides[k])
        return tuple(out)

    def box_bounds(self, flat: int) -> tuple[np.ndarray, np.ndarray]:
        """Closed bounds ``(lo, hi)`` of one box."""
        multi = np.asarray(self.multi_index(flat), dtype=float)
        lo = self.lo + multi * self.width
        return lo, lo + self.width

    def box_center(self, flat: int) -> np.ndarray:
        lo, hi = self.box_bounds(flat)
        return (lo + hi) / 2.0

    def centers(self) -> np.ndarray:
        """Centers of all boxes, shape ``(n_boxes, d)``, flat order."""
        axes = [self.lo[k] + (np.arange(self.resolution[k]) + 0.5) * self.width[k]
                for k in range(self.dimension)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def box_of(self, point: Sequence[float]) -> BoxId:
        """Locate a point: lower-closed/upper-open boxes, last box closed."""
        p = np.asarray(point, dtype=float)
        if p.shape != (self.dimension,):
            raise ConfigError(f"point has shape {p.shape}, expected ({self.dimension},)")
        if not np.all(np.isfinite(p)):
            raise ConfigError("point coordinates must be finite")
        if np.any(p < self.lo) or np.any(p > self.hi):
            return EXTERIOR
        idx = np.floor((p - self.lo) / self.width).astype(np.int64)
        # Points on the upper window face belong to the last (closed) box.
        idx = np.minimum(idx, self.resolution - 1)
        return tuple(int(i) for i in idx)

    def flat_of_points(self, points: np.ndarray) -> np.ndarray:
        """Vectorized :meth:`box_of`; exterior points map to -1."""
        pts = np.asarray(points, dtype=float)
        inside = np.all((pts >= self.lo) & (pts <= self.hi), axis=1)
        idx = np.floor((pts - self.lo) / self.width).astype(np.int64)
        np.clip(idx, 0, self.resolution - 1, out=idx)
        flat = idx @ self.strides
        flat[~inside] = -1
        return flat

    def distance_to_box(self, point: np.ndarray, flat: int) -> float:
        lo, hi = self.box_bounds(flat)
        gap = np.maximum(np.maximum(lo - point, point - hi), 0.0)
        return float(np.sqrt(np.sum(gap**2)))

    def compatible(self, other: "BoxGrid") -> bool:
        return (
            self.dimension == other.dimension
            and np.array_equal(self.resolution, other.resolution)
            and np.allclose(self.lo, other.lo)
            and np.allclose(self.hi, other.hi)
        )


def build_grid(bounds: Sequence[Sequence[float]], resolution: Sequence[int],
               max_boxes: int = DEFAULT_BOX_CAP) -> BoxGrid:
    """Construct a :class:`BoxGrid` from per-dimension bounds and cell counts."""
    bounds = np.asarray(bounds, dtype=float)
    if bounds.ndim != 2 or bounds.shape[1] != 2 or bounds.shape[0] == 0:
        raise ConfigError("bounds must be a nonempty list of [lo, hi] pairs")
    if not np.all(np.isfinite(bounds)):
        raise ConfigError("bounds must be finite")
    res = np.asarray(resolution, dtype=np.int64)
    if res.shape != (bounds.shape[0],):
        raise ConfigError("resolution must give one cell count per dimension")
    if np.any(res < 1):
        raise ConfigError("resolution entries must be positive")
    lo, hi = bounds[:, 0], bounds[:, 1]
    if np.any(lo >= hi):
        raise ConfigError("each bound must satisfy lo < hi")
    total = int(np.prod(res.astype(object)))
    if total > max_boxes:
        raise GridCapacityError(f"{total} boxes exceeds cap {max_boxes}")
    return BoxGrid(lo=lo, hi=hi, resolution=res)


class BoxSet:
    """A set of interior boxes plus an exterior-membership flag.

    Immutable; all operations return new sets.  Interior membership is a
    bitmask over flat indices.
    """

    __slots__ = ("grid", "mask", "exterior")

    def __init__(self, grid: BoxGrid, mask: int = 0, exterior: bool = False):
        self.grid = grid
        self.mask = mask
        self.exterior = bool(exterior)

    # -- constructors -------------------------------------------------
    @classmethod
    def empty(cls, grid: BoxGrid) -> "BoxSet":
        return cls(grid, 0, False)

    @classmethod
    def all_boxes(cls, grid: BoxGrid, exterior: bool = False) -> "BoxSet":
        return cls(grid, (1 << grid.n_boxes) - 1, exterior)

    @classmethod
    def from_indices(cls, grid: BoxGrid, flats: Iterable[int],
                     exterior: bool = False) -> "BoxSet":
        mask = 0
        for f in flats:
            if not 0 <= f < grid.n_boxes:
                raise ConfigError(f"flat index {f} out of range")
            mask |= 1 << f
        return cls(grid, mask, exterior)

    @classmethod
    def from_predicate(cls, grid: BoxGrid,
                       predicate: Callable[[np.ndarray, np.ndarray], np.ndarray],
                       exterior: bool = False) -> "BoxSet":
        """Boxes whose closed bounds satisfy ``predicate(lo_corners, hi_corners)``.

        The predicate receives two ``(n_boxes, d)`` arrays and returns a
        boolean vector, enabling vectorized region coverings.
        """
        centers = grid.centers()
        lo = centers - grid.width / 2.0
        hi = centers + grid.width / 2.0
        keep = np.asarray(predicate(lo, hi), dtype=bool)
        mask = 0
        for f in np.nonzero(keep)[0]:
            mask |= 1 << int(f)
        return cls(grid, mask, exterior)

    # -- set algebra ---------------------------------------------------
    def _check(self, other: "BoxSet") -> None:
        if not self.grid.compatible(other.grid):
            raise ConfigError("box sets live on incompatible grids")

    def __or__(self, other: "BoxSet") -> "BoxSet":
        self._check(other)
        return BoxSet(self.grid, self.mask | other.mask, self.exterior or other.exterior)

    def __and__(self, other: "BoxSet") -> "BoxSet":
        self._check(other)
        return BoxSet(self.grid, self.mask & other.mask, self.exterior and other.exterior)

    def __sub__(self, other: "BoxSet") -> "BoxSet":
        self._check(other)
        return BoxSet(self.grid, self.mask & ~other.mask, self.exterior and not other.exterior)

    def complement(self) -> "BoxSet":
        """Complement relative to (all interior boxes) ∪ {Exterior}."""
        full = (1 << self.grid.n_boxes) - 1
        return BoxSet(self.grid, full & ~self.mask, not self.exterior)

    def issubset(self, other: "BoxSet") -> bool:
        self._check(other)
        if self.exterior and not other.exterior:
            return False
        return self.mask & ~other.mask == 0

    def without_exterior(self) -> "BoxSet":
        return BoxSet(self.grid, self.mask, False)

    def with_exterior(self) -> "BoxSet":
        return BoxSet(self.grid, self.mask, True)

    # -- queries -------------------------------------------------------
    def __contains__(self, box: BoxId) -> bool:
        if box is EXTERIOR:
            return self.exterior
        return bool((self.mask >> self.grid.flat_index(box)) & 1)

    def contains_flat(self, flat: int) -> bool:
        return bool((self.mask >> flat) & 1)

    def __len__(self) -> int:
        """Cardinality including the exterior node when present."""
        return self.mask.bit_count() + (1 if self.exterior else 0)

    @property
    def n_interior(self) -> int:
        return self.mask.bit_count()

    def is_empty(self) -> bool:
        return self.mask == 0 and not self.exterior

    def iter_flat(self) -> Iterator[int]:
        mask = self.mask
        while mask:
            low = mask & -mask
            yield low.bit_length() - 1
            mask ^= low

    def flat_indices(self) -> list[int]:
        return list(self.iter_flat())

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, BoxSet)
            and self.mask == other.mask
            and self.exterior == other.exterior
            and self.grid.compatible(other.grid)
        )

    def __hash__(self) -> int:
        return hash((self.mask, self.exterior))

    def __repr__(self) -> str:
        ext = " + Exterior" if self.exterior else ""
        return f"BoxSet({self.n_interior} boxes{ext})"

    def to_json_obj(self) -> dict:
        """Serialized form: sorted flat indices plus exterior flag."""
        return {"boxes": self.flat_indices(), "exterior": self.exterior}

    @classmethod
    def from_json_obj(cls, grid: BoxGrid, obj: dict) -> "BoxSet":
        return cls.from_indices(grid, obj["boxes"], bool(obj.get("exterior", False)))


def point_to_set_distance(grid: BoxGrid, point: Sequence[float], boxset: BoxSet) -> float:
    """Euclidean distance from a point to the closed union of a box set.

    Zero exactly on the closed union.  The exterior node carries no
    geometry and is ignored; an interior-empty set yields ``math.inf``.
    """
    p = np.asarray(point, dtype=float)
    if not np.all(np.isfinite(p)):
        raise ConfigError("point coordinates must be finite")
    if boxset.mask == 0:
        return math.inf
    flats = np.fromiter(boxset.iter_flat(), dtype=np.int64)
    multis = np.empty((flats.size, grid.dimension), dtype=np.int64)
    rem = flats.copy()
    for k in range(grid.dimension):
        multis[:, k] = rem // grid.strides[k]
        rem = rem % grid.strides[k]
    lo = grid.lo + multis * grid.width
    hi = lo + grid.width
    gap = np.maximum(np.maximum(lo - p, p - hi), 0.0)
    return float(np.min(np.sqrt(np.sum(gap**2, axis=1))))
