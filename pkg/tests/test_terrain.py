import numpy as np
import pytest

from coorad_lab.errors import ParameterError
from coorad_lab.terrain import ElevationGrid, read_grid, synth_terrain, write_grid


def test_zero_ruggedness_is_flat():
    grid = synth_terrain(7, 64, 64, 500, ruggedness=0)
    assert np.all(grid.heights == grid.heights[0, 0])


def test_same_seed_bit_identical():
    a = synth_terrain(7, 64, 64, 500, ruggedness=1.3)
    b = synth_terrain(7, 64, 64, 500, ruggedness=1.3)
    assert np.array_equal(a.heights, b.heights)


def test_variance_increases_with_ruggedness():
    lo = synth_terrain(7, 64, 64, 500, ruggedness=0.5)
    hi = synth_terrain(7, 64, 64, 500, ruggedness=2.0)
    assert hi.heights.var() > lo.heights.var()


def test_variance_matches_scale():
    g = synth_terrain(3, 96, 96, 500, ruggedness=1.5)
    assert g.heights.std() == pytest.approx(150.0, rel=1e-9)


def test_dimension_validation():
    with pytest.raises(ParameterError):
        synth_terrain(1, 1, 64, 500, ruggedness=1.0)
    with pytest.raises(ParameterError):
        synth_terrain(1, 64, 64, 0.0, ruggedness=1.0)
    with pytest.raises(ParameterError):
        synth_terrain(1, 64, 64, 500, ruggedness=-0.1)


def test_grid_invariants():
    with pytest.raises(ParameterError):
        ElevationGrid(4, 4, 100.0, np.full((4, 4), np.nan))
    with pytest.raises(ParameterError):
        ElevationGrid(4, 4, 100.0, np.zeros((3, 4)))


def test_raster_roundtrip(tmp_path):
    g = synth_terrain(5, 10, 14, 750.0, ruggedness=2.0)
    path = tmp_path / "grid.csv"
    write_grid(g, path)
    back = read_grid(path)
    assert back.nx == g.nx and back.ny == g.ny and back.cell_size == g.cell_size
    assert np.array_equal(back.heights, g.heights)


def test_height_interpolation_bilinear():
    heights = np.array([[0.0, 10.0], [20.0, 30.0]])
    g = ElevationGrid(2, 2, 100.0, heights)
    assert g.height_at(0.5, 0.5) == pytest.approx(15.0)
    assert g.height_at(0.0, 1.0) == pytest.approx(10.0)
