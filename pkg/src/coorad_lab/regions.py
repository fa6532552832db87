"""Synthetic administrative geography.

A seeded Voronoi partition of the terrain grid produces sub-prefecture
footprints; sub-prefectures nest into prefectures and prefectures into a
handful of top-level regions, so diversity statistics can be compared
across all four levels.  Language shares are drawn so that most people in
a sub-prefecture speak its majority language, majorities mostly agree with
the prefecture majority, and each region has its own dominant language;
mixing across levels then yields the fractionalization ordering
country > region > prefecture > sub-prefecture.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError
from .terrain import ElevationGrid

DEFAULT_LANGUAGES = (
    "susu", "fula", "maninka", "kissi", "kpelle", "toma", "landuma", "wamey",
)

# Probability that a prefecture majority follows its region's dominant
# language, and that a sub-prefecture majority follows its prefecture's.
_PREF_FOLLOWS_REGION = 0.72
_SUBPREF_FOLLOWS_PREF = 0.87
_MAJORITY_SHARE_RANGE = (0.74, 0.95)


@dataclass
class SubPrefecture:
    id: int
    prefecture_id: int
    region_id: int
    population: int
    area_km2: float
    centroid: tuple[float, float]
    distance_to_epicenter_km: float
    language_shares: dict[str, float]
    majority_language: str
    coverage: object | None = None  # CoverageShares, attached after aggregation
    lang_match_local: bool | None = None

    def __post_init__(self):
        if self.population <= 0:
            raise ParameterError(f"sub-prefecture {self.id}: population must be > 0")
        total = sum(self.language_shares.values())
        if abs(total - 1.0) > 1e-9:
            raise ParameterError(
                f"sub-prefecture {self.id}: language shares sum to {total}, not 1"
            )


@dataclass
class RegionSet:
    grid: ElevationGrid
    labels: np.ndarray  # (nx, ny) int array of sub-prefecture ids
    subprefectures: list[SubPrefecture]
    prefecture_of: dict[int, int] = field(default_factory=dict)
    region_of_prefecture: dict[int, int] = field(default_factory=dict)
    prefecture_majority: dict[int, str] = field(default_factory=dict)
    epicenter_id: int = 0

    def __post_init__(self):
        n = len(self.subprefectures)
        labels = np.asarray(self.labels)
        if labels.shape != (self.grid.nx, self.grid.ny):
            raise ParameterError("labels raster does not match the grid shape")
        counts = np.bincount(labels.ravel(), minlength=n)
        if labels.min() < 0 or labels.max() >= n or (counts == 0).any():
            raise ParameterError("labels must partition the grid into nonempty footprints")
        n_pref = len(set(self.prefecture_of.values()))
        if not 1 <= n_pref <= n:
            raise ParameterError("prefecture count must be between 1 and #sub-prefectures")

    @property
    def n_prefectures(self) -> int:
        return len(set(self.prefecture_of.values()))

    def prefecture_members(self, pref_id: int) -> list[SubPrefecture]:
        return [sp for sp in self.subprefectures if sp.prefecture_id == pref_id]


def _nearest_label(points, seed_xy):
    """Index of the nearest seed for each point, looping over seeds to bound memory."""
    px, py = points
    best = np.full(px.shape, np.inf)
    label = np.zeros(px.shape, dtype=int)
    for i, (sx, sy) in enumerate(seed_xy):
        d2 = (px - sx) ** 2 + (py - sy) ** 2
        closer = d2 < best
        best[closer] = d2[closer]
        label[closer] = i
    return label


def _draw_language_shares(rng, majority, pool):
    others = [lang for lang in pool if lang != majority]
    if not others:
        return {majority: 1.0}
    lo, hi = _MAJORITY_SHARE_RANGE
    m = rng.uniform(lo, hi)
    k = int(rng.integers(1, min(4, len(others)) + 1))
    chosen = list(rng.choice(others, size=k, replace=False))
    weights = rng.dirichlet(np.ones(k)) * (1.0 - m)
    shares = {majority: m}
    for lang, w in zip(chosen, weights):
        shares[lang] = float(w)
    # Re-close the simplex exactly so the sum-to-one invariant is not left
    # to float round-off.
    shares[chosen[-1]] += 1.0 - sum(shares.values())
    return shares


def build_regions(
    seed: int,
    n_pref: int,
    n_subpref: int,
    grid: ElevationGrid,
    transmitters=None,
    languages=DEFAULT_LANGUAGES,
    n_regions: int = 4,
    mean_population: float = 33000.0,
    epicenter_frac: tuple[float, float] = (0.82, 0.82),
) -> RegionSet:
    """Partition the grid into sub-prefectures and draw their attributes.

    Deterministic for a fixed seed.  Each sub-prefecture grows from a seed
    cell (Voronoi), prefectures group sub-prefectures around the first
    ``n_pref`` seeds, and regions group prefectures around the first
    ``n_regions`` of those.  When ``transmitters`` is given, the
    language-match flag against the local community station is filled in.
    """
    if n_pref < 1 or n_subpref < n_pref:
        raise ParameterError(
            f"need n_subpref >= n_pref >= 1, got n_pref={n_pref}, n_subpref={n_subpref}"
        )
    if n_subpref > grid.nx * grid.ny:
        raise ParameterError("more sub-prefectures than grid cells")
    languages = list(languages)
    n_regions = max(1, min(n_regions, n_pref, len(languages)))

    rng = np.random.default_rng(seed)
    flat = rng.choice(grid.nx * grid.ny, size=n_subpref, replace=False)
    seed_xy = np.column_stack(np.unravel_index(flat, (grid.nx, grid.ny))).astype(float)

    xs, ys = np.meshgrid(
        np.arange(grid.nx, dtype=float), np.arange(grid.ny, dtype=float), indexing="ij"
    )
    labels = _nearest_label((xs, ys), seed_xy)

    # Nesting: sub-prefecture -> prefecture -> region, each by nearest seed.
    pref_of_sub = _nearest_label(
        (seed_xy[:, 0], seed_xy[:, 1]), seed_xy[:n_pref]
    )
    region_of_pref_arr = _nearest_label(
        (seed_xy[:n_pref, 0], seed_xy[:n_pref, 1]), seed_xy[:n_regions]
    )

    dominant = {r: languages[r % len(languages)] for r in range(n_regions)}
    regional_majors = [dominant[r] for r in range(n_regions)]

    pref_majority = {}
    for p in range(n_pref):
        home = dominant[region_of_pref_arr[p]]
        if rng.random() < _PREF_FOLLOWS_REGION or n_regions == 1:
            pref_majority[p] = home
        else:
            pref_majority[p] = str(rng.choice([g for g in regional_majors if g != home] or [home]))

    sigma = 0.6
    mu = np.log(mean_population) - sigma**2 / 2.0
    populations = np.maximum(rng.lognormal(mu, sigma, size=n_subpref), 500.0)

    counts = np.bincount(labels.ravel(), minlength=n_subpref)
    cell_km2 = (grid.cell_size / 1000.0) ** 2

    ex = epicenter_frac[0] * (grid.nx - 1)
    ey = epicenter_frac[1] * (grid.ny - 1)

    subs = []
    centroids = np.zeros((n_subpref, 2))
    for i in range(n_subpref):
        mask = labels == i
        cx = float(xs[mask].mean())
        cy = float(ys[mask].mean())
        centroids[i] = (cx, cy)

    epicenter_id = int(np.argmin((centroids[:, 0] - ex) ** 2 + (centroids[:, 1] - ey) ** 2))

    for i in range(n_subpref):
        pref = int(pref_of_sub[i])
        maj = pref_majority[pref]
        if len(languages) > 1 and rng.random() >= _SUBPREF_FOLLOWS_PREF:
            maj = str(rng.choice([g for g in languages if g != pref_majority[pref]]))
        shares = _draw_language_shares(rng, maj, languages)
        cx, cy = centroids[i]
        dist_epi = float(np.hypot(cx - ex, cy - ey) * grid.cell_size / 1000.0)
        subs.append(
            SubPrefecture(
                id=i,
                prefecture_id=pref,
                region_id=int(region_of_pref_arr[pref]),
                population=int(round(populations[i])),
                area_km2=float(counts[i] * cell_km2),
                centroid=(cx, cy),
                distance_to_epicenter_km=dist_epi,
                language_shares=shares,
                majority_language=maj,
            )
        )

    regions = RegionSet(
        grid=grid,
        labels=labels,
        subprefectures=subs,
        prefecture_of={sp.id: sp.prefecture_id for sp in subs},
        region_of_prefecture={p: int(region_of_pref_arr[p]) for p in range(n_pref)},
        prefecture_majority=dict(pref_majority),
        epicenter_id=epicenter_id,
    )
    if transmitters is not None:
        attach_language_match(regions, transmitters)
    return regions


def attach_language_match(regions: RegionSet, transmitters) -> None:
    """Fill lang_match_local: defined only where a local community station exists."""
    local_langs = {}
    for tx in transmitters:
        if tx.radio_class == "community":
            local_langs.setdefault(tx.home_prefecture, set()).add(tx.language)
    for sp in regions.subprefectures:
        langs = local_langs.get(sp.prefecture_id)
        sp.lang_match_local = (sp.majority_language in langs) if langs else None


def attach_coverage(regions: RegionSet, coverage: dict) -> None:
    for sp in regions.subprefectures:
        if sp.id not in coverage:
            raise ParameterError(f"coverage missing for sub-prefecture {sp.id}")
        sp.coverage = coverage[sp.id]


def aggregate_language_shares(regions: RegionSet, level: str) -> dict:
    """Population-weighted language shares per unit at the requested level.

    Levels: "country", "region", "prefecture", "subprefecture".
    """
    groups: dict[object, list[SubPrefecture]] = {}
    for sp in regions.subprefectures:
        if level == "country":
            key = 0
        elif level == "region":
            key = sp.region_id
        elif level == "prefecture":
            key = sp.prefecture_id
        elif level == "subprefecture":
            key = sp.id
        else:
            raise ParameterError(f"unknown aggregation level {level!r}")
        groups.setdefault(key, []).append(sp)

    out = {}
    for key, members in groups.items():
        total = float(sum(sp.population for sp in members))
        shares: dict[str, float] = {}
        for sp in members:
            for lang, s in sp.language_shares.items():
                shares[lang] = shares.get(lang, 0.0) + s * sp.population / total
        out[key] = shares
    return out
