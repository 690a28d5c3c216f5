import os
import sys

import numpy as np
import pytest

# Add the project root to the python path
sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

from shared.grid import EmptyRegion, GridHierarchy, LevelOutOfRange, PositionOutOfArea, RegionId, select_server

GRID = GridHierarchy(cell_side=125.0, levels=3)


def test_cell_of_examples():
    assert GRID.cell_of((0, 0)) == RegionId(0, 0, 0)
    assert GRID.cell_of((130, 260)) == RegionId(0, 1, 2)
    assert GRID.cell_of((1000, 1000)) == RegionId(0, 7, 7)


def test_cell_boundary_belongs_to_lower_cell():
    assert GRID.cell_of((125, 0)) == RegionId(0, 0, 0)
    assert GRID.cell_of((125.001, 0)) == RegionId(0, 1, 0)
    assert GRID.cell_of((250, 375)) == RegionId(0, 1, 2)
    assert GRID.cell_of((0, 125)) == RegionId(0, 0, 0)


def test_cell_of_outside_area():
    with pytest.raises(PositionOutOfArea):
        GRID.cell_of((-1, 10))
    with pytest.raises(PositionOutOfArea):
        GRID.cell_of((10, 1000.5))
    # float drift at the edge is tolerated
    assert GRID.cell_of((1000 + 1e-12, 0)) == RegionId(0, 7, 0)


def test_region_of_examples():
    assert GRID.region_of(RegionId(0, 1, 2), 1) == RegionId(1, 0, 1)
    assert GRID.region_of(RegionId(0, 7, 7), 3) == RegionId(3, 0, 0)
    assert GRID.region_of(RegionId(0, 3, 0), 0) == RegionId(0, 3, 0)
    with pytest.raises(LevelOutOfRange):
        GRID.region_of(RegionId(0, 3, 0), 4)


def test_highest_crossed_level_examples():
    assert GRID.highest_crossed_level((120, 10), (130, 10)) == 0
    assert GRID.highest_crossed_level((240, 10), (260, 10)) == 1
    assert GRID.highest_crossed_level((10, 10), (20, 10)) is None
    assert GRID.highest_crossed_level((499, 10), (501, 10)) == 3


def test_select_server_examples():
    assert select_server(7, [2, 3, 7, 11, 13]) == 7
    assert select_server(9, [4]) == 4
    assert select_server(7, [13, 2, 11, 7, 3]) == 7
    with pytest.raises(EmptyRegion):
        select_server(5, [])


def test_partition_and_nesting():
    rng = np.random.default_rng(3)
    for x, y in rng.uniform(0, 1000, size=(500, 2)):
        cell = GRID.cell_of((x, y))
        for level in range(GRID.levels):
            assert GRID.parent(GRID.region_of(cell, level)) == GRID.region_of(cell, level + 1)
            assert GRID.region_of(cell, level) in GRID.all_regions(level)


def test_center_round_trip_and_children():
    for cell in GRID.all_regions(0):
        assert GRID.cell_of(GRID.center(cell)) == cell
    top = RegionId(3, 0, 0)
    assert len(GRID.cells_in(top)) == 64
    children = GRID.children(RegionId(2, 1, 0))
    assert children == [RegionId(1, 2, 0), RegionId(1, 2, 1), RegionId(1, 3, 0), RegionId(1, 3, 1)]
    assert all(GRID.parent(child) == RegionId(2, 1, 0) for child in children)


def test_cell_indices_match_cell_of():
    rng = np.random.default_rng(5)
    points = np.vstack([rng.uniform(0, 1000, size=(200, 2)), [[1000, 1000], [0, 125], [125, 125]]])
    indices = GRID.cell_indices(points)
    for (x, y), (ix, iy) in zip(points, indices):
        assert GRID.cell_of((x, y)) == RegionId(0, int(ix), int(iy))


def test_from_area_and_radio_fit():
    grid = GridHierarchy.from_area(1000, 125)
    assert grid.levels == 3 and grid.side_length == 1000
    assert grid.fits_radio_range(250)
    assert not GridHierarchy(cell_side=200, levels=2).fits_radio_range(250)
    with pytest.raises(ValueError):
        GridHierarchy.from_area(1000, 300)
    with pytest.raises(ValueError):
        GridHierarchy.from_area(125, 125)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
