import numpy as np
import pytest

from coorad_lab.propagation import CoverageShares
from coorad_lab.regions import RegionSet, SubPrefecture
from coorad_lab.terrain import ElevationGrid


def make_grid(nx=12, ny=12, cell_size=1000.0, heights=None):
    if heights is None:
        heights = np.zeros((nx, ny))
    return ElevationGrid(nx=nx, ny=ny, cell_size=cell_size, heights=heights)


def make_regions(grid, n_split=2, populations=None, coverage=None, languages=None):
    """Small hand-built region system: vertical strips of equal width."""
    nx, ny = grid.nx, grid.ny
    labels = np.zeros((nx, ny), dtype=int)
    width = nx // n_split
    for i in range(n_split):
        lo = i * width
        hi = nx if i == n_split - 1 else (i + 1) * width
        labels[lo:hi, :] = i
    populations = populations or [100000] * n_split
    languages = languages or ["susu"] * n_split
    subs = []
    for i in range(n_split):
        cells = np.argwhere(labels == i)
        subs.append(
            SubPrefecture(
                id=i,
                prefecture_id=i,
                region_id=0,
                population=populations[i],
                area_km2=float(len(cells) * (grid.cell_size / 1000.0) ** 2),
                centroid=(float(cells[:, 0].mean()), float(cells[:, 1].mean())),
                distance_to_epicenter_km=float(i * 10.0),
                language_shares={languages[i]: 1.0},
                majority_language=languages[i],
            )
        )
    regions = RegionSet(
        grid=grid,
        labels=labels,
        subprefectures=subs,
        prefecture_of={i: i for i in range(n_split)},
        region_of_prefecture={i: 0 for i in range(n_split)},
        prefecture_majority={i: languages[i] for i in range(n_split)},
        epicenter_id=0,
    )
    if coverage is not None:
        for sp in regions.subprefectures:
            sp.coverage = coverage[sp.id]
    return regions


def flat_coverage(local, comm=None, national=0.5, private=0.2, ethnic=0.0):
    return CoverageShares(
        share_local_community=local,
        share_any_community=comm if comm is not None else max(local, 0.5),
        share_national=national,
        share_private=private,
        share_ethnic_match=ethnic,
        dist_km={"community": 10.0, "national": 30.0},
    )


@pytest.fixture(scope="session")
def small_world():
    """A compact end-to-end world shared by pipeline-ish tests."""
    from coorad_lab.pipeline import build_world
    from coorad_lab.scenario import default_scenario

    s = default_scenario()
    s.terrain.nx = s.terrain.ny = 48
    s.regions.n_prefectures = 8
    s.regions.n_subprefectures = 24
    s.transmitters.n_community = 6
    s.transmitters.n_national = 3
    s.transmitters.n_private = 8
    s.transmitters.n_international = 2
    s.survey.n_respondents = 600
    return s, build_world(s)
