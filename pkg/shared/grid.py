"""Hierarchical square partition of the area and hash-based server election."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

Point = Tuple[float, float]

# Tolerance for float drift at the area edge.
EDGE_EPS = 1e-9


class PositionOutOfArea(ValueError):
    pass


class LevelOutOfRange(ValueError):
    pass


class EmptyRegion(LookupError):
    pass


@dataclass(frozen=True, order=True)
class RegionId:
    level: int
    x: int
    y: int


@dataclass(frozen=True)
class GridHierarchy:
    """Square area split into 2^levels x 2^levels cells of side ``cell_side``.

    A level-(i+1) region covers exactly four level-i regions; the single
    level-``levels`` region is the whole area.
    """

    cell_side: float = 125.0
    levels: int = 3
    origin: Point = (0.0, 0.0)

    def __post_init__(self) -> None:
        if self.levels < 1:
            raise LevelOutOfRange(f"levels must be >= 1, got {self.levels}")
        if self.cell_side <= 0:
            raise ValueError(f"cell_side must be positive, got {self.cell_side}")

    @classmethod
    def from_area(cls, side_length: float, cell_side: float, origin: Point = (0.0, 0.0)) -> "GridHierarchy":
        ratio = side_length / cell_side
        levels = round(math.log2(ratio)) if ratio > 0 else 0
        if levels < 1 or not math.isclose(cell_side * 2 ** levels, side_length, rel_tol=1e-12):
            raise ValueError(
                f"side_length={side_length} is not cell_side={cell_side} times a power of two >= 2"
            )
        return cls(cell_side=cell_side, levels=levels, origin=origin)

    @property
    def side_length(self) -> float:
        return self.cell_side * 2 ** self.levels

    @property
    def cells_per_side(self) -> int:
        return 2 ** self.levels

    def fits_radio_range(self, radio_range: float) -> bool:
        """Any two nodes in one cell are within ``radio_range`` of each other."""
        return self.cell_side * math.sqrt(2) <= radio_range

    def contains(self, position: Point) -> bool:
        ox, oy = self.origin
        side = self.side_length
        x, y = position
        return (ox - EDGE_EPS <= x <= ox + side + EDGE_EPS) and (oy - EDGE_EPS <= y <= oy + side + EDGE_EPS)

    def clamp(self, position: Point) -> Point:
        ox, oy = self.origin
        side = self.side_length
        return (min(max(position[0], ox), ox + side), min(max(position[1], oy), oy + side))

    def _axis_index(self, value: float, low: float) -> int:
        # a boundary point belongs to the lower-index cell; the origin edge clamps to cell 0
        index = math.ceil((value - low) / self.cell_side) - 1
        return min(max(index, 0), self.cells_per_side - 1)

    def cell_of(self, position: Point) -> RegionId:
        if not self.contains(position):
            raise PositionOutOfArea(f"{position} outside area of side {self.side_length} at {self.origin}")
        ox, oy = self.origin
        return RegionId(0, self._axis_index(position[0], ox), self._axis_index(position[1], oy))

    def region_of(self, cell: RegionId, level: int) -> RegionId:
        if cell.level != 0:
            raise LevelOutOfRange(f"region_of expects a cell, got level {cell.level}")
        self._check_level(level)
        return RegionId(level, cell.x >> level, cell.y >> level)

    def region_containing(self, position: Point, level: int) -> RegionId:
        return self.region_of(self.cell_of(position), level)

    def highest_crossed_level(self, p_old: Point, p_new: Point) -> Optional[int]:
        """Largest level whose region differs between the two positions, None if same cell."""
        return self.crossed_level(self.cell_of(p_old), self.cell_of(p_new))

    def crossed_level(self, old_cell: RegionId, new_cell: RegionId) -> Optional[int]:
        if old_cell == new_cell:
            return None
        for level in range(self.levels, -1, -1):
            if self.region_of(old_cell, level) != self.region_of(new_cell, level):
                return level
        return None

    def parent(self, region: RegionId) -> RegionId:
        if region.level >= self.levels:
            raise LevelOutOfRange(f"top region {region} has no parent")
        return RegionId(region.level + 1, region.x >> 1, region.y >> 1)

    def children(self, region: RegionId) -> List[RegionId]:
        if region.level == 0:
            return []
        level = region.level - 1
        return [
            RegionId(level, 2 * region.x + dx, 2 * region.y + dy)
            for dx in (0, 1)
            for dy in (0, 1)
        ]

    def cells_in(self, region: RegionId) -> List[RegionId]:
        """Level-0 cells of a region, ordered by (x, y)."""
        span = 2 ** region.level
        return [
            RegionId(0, region.x * span + dx, region.y * span + dy)
            for dx in range(span)
            for dy in range(span)
        ]

    def center(self, region: RegionId) -> Point:
        size = self.cell_side * 2 ** region.level
        ox, oy = self.origin
        return (ox + (region.x + 0.5) * size, oy + (region.y + 0.5) * size)

    def all_regions(self, level: int) -> List[RegionId]:
        self._check_level(level)
        span = 2 ** (self.levels - level)
        return [RegionId(level, x, y) for x in range(span) for y in range(span)]

    def cell_indices(self, positions: np.ndarray) -> np.ndarray:
        """Vectorised ``cell_of`` for an (N, 2) array; returns (N, 2) integer indices."""
        rel = np.ceil((positions - np.asarray(self.origin)) / self.cell_side) - 1
        return np.clip(rel, 0, self.cells_per_side - 1).astype(np.int64)

    def _check_level(self, level: int) -> None:
        if not 0 <= level <= self.levels:
            raise LevelOutOfRange(f"level {level} outside [0, {self.levels}]")


def select_server(target_id: int, members: Sequence[int]) -> int:
    """Modulo hash of a node id onto a region's members, sorted ascending."""
    if not members:
        raise EmptyRegion(f"no candidate server for node {target_id}")
    ordered = sorted(members)
    return ordered[target_id % len(ordered)]
