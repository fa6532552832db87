import numpy as np
import pytest

from coorad_lab.errors import ParameterError
from coorad_lab.metrics import fractionalization
from coorad_lab.propagation import Transmitter
from coorad_lab.regions import (
    aggregate_language_shares,
    attach_language_match,
    build_regions,
)
from coorad_lab.terrain import synth_terrain


@pytest.fixture(scope="module")
def grid():
    return synth_terrain(11, 60, 60, 3000.0, ruggedness=2.0)


def test_single_region_covers_grid(grid):
    regions = build_regions(seed=3, n_pref=1, n_subpref=1, grid=grid)
    sp = regions.subprefectures[0]
    assert np.all(regions.labels == 0)
    assert sum(sp.language_shares.values()) == pytest.approx(1.0, abs=1e-12)
    assert sp.area_km2 == pytest.approx(60 * 60 * 9.0)


def test_deterministic_for_seed(grid):
    a = build_regions(seed=5, n_pref=6, n_subpref=30, grid=grid)
    b = build_regions(seed=5, n_pref=6, n_subpref=30, grid=grid)
    assert np.array_equal(a.labels, b.labels)
    for sa, sb in zip(a.subprefectures, b.subprefectures):
        assert sa.population == sb.population
        assert sa.language_shares == sb.language_shares
    c = build_regions(seed=6, n_pref=6, n_subpref=30, grid=grid)
    assert not np.array_equal(a.labels, c.labels)


def test_partition_and_nesting(grid):
    regions = build_regions(seed=9, n_pref=8, n_subpref=40, grid=grid)
    counts = np.bincount(regions.labels.ravel(), minlength=40)
    assert (counts > 0).all()
    assert set(regions.prefecture_of.values()) <= set(range(8))
    assert len(set(regions.prefecture_of.values())) == 8
    for sp in regions.subprefectures:
        assert sp.region_id == regions.region_of_prefecture[sp.prefecture_id]


def test_parameter_validation(grid):
    with pytest.raises(ParameterError):
        build_regions(seed=1, n_pref=5, n_subpref=4, grid=grid)
    with pytest.raises(ParameterError):
        build_regions(seed=1, n_pref=0, n_subpref=4, grid=grid)


def test_language_share_targets(grid):
    # Around three quarters of a prefecture and a slightly larger share of a
    # sub-prefecture should speak the local majority language.
    pref_share, sub_share = [], []
    for seed in range(5):
        regions = build_regions(seed=seed, n_pref=12, n_subpref=80, grid=grid)
        pref = aggregate_language_shares(regions, "prefecture")
        pref_share += [max(v.values()) for v in pref.values()]
        sub = aggregate_language_shares(regions, "subprefecture")
        sub_share += [max(v.values()) for v in sub.values()]
    assert 0.65 <= np.mean(pref_share) <= 0.88
    assert 0.75 <= np.mean(sub_share) <= 0.92
    assert np.mean(sub_share) > np.mean(pref_share)


def test_fractionalization_ordering_on_average(grid):
    levels = ("country", "region", "prefecture", "subprefecture")
    means = {lvl: [] for lvl in levels}
    for seed in range(8):
        regions = build_regions(seed=seed, n_pref=12, n_subpref=80, grid=grid)
        for lvl in levels:
            vals = [fractionalization(sh) for sh in aggregate_language_shares(regions, lvl).values()]
            means[lvl].append(np.mean(vals))
    avg = {lvl: float(np.mean(v)) for lvl, v in means.items()}
    assert avg["country"] > avg["region"] > avg["prefecture"] > avg["subprefecture"]


def test_population_scale(grid):
    regions = build_regions(seed=2, n_pref=10, n_subpref=100, grid=grid, mean_population=33000.0)
    pops = np.array([sp.population for sp in regions.subprefectures])
    assert 20000 < pops.mean() < 50000
    assert (pops > 0).all()


def test_epicenter_near_requested_corner(grid):
    regions = build_regions(seed=4, n_pref=6, n_subpref=36, grid=grid, epicenter_frac=(0.9, 0.9))
    epi = regions.subprefectures[regions.epicenter_id]
    assert epi.centroid[0] > 30 and epi.centroid[1] > 30
    assert epi.distance_to_epicenter_km == min(
        sp.distance_to_epicenter_km for sp in regions.subprefectures
    )


def test_language_match_flag(grid):
    regions = build_regions(seed=8, n_pref=4, n_subpref=12, grid=grid)
    maj0 = regions.prefecture_majority[0]
    txs = [
        Transmitter("c0", 5.0, 5.0, 20.0, 0.1, "community", home_prefecture=0, language=maj0),
    ]
    attach_language_match(regions, txs)
    for sp in regions.subprefectures:
        if sp.prefecture_id == 0:
            assert sp.lang_match_local == (sp.majority_language == maj0)
        else:
            assert sp.lang_match_local is None


def test_unknown_aggregation_level(grid):
    regions = build_regions(seed=8, n_pref=4, n_subpref=12, grid=grid)
    with pytest.raises(ParameterError):
        aggregate_language_shares(regions, "continent")
