"""Radio field strength over terrain and per-area coverage shares.

The propagation model is deliberately light: free-space inverse-distance
field, optionally reduced by a single knife-edge diffraction loss taken at
the worst obstruction along the straight transmitter-receiver path.  It is
terrain-sensitive and monotone, which is all the treatment construction
needs; the model sits behind ``PropagationParams.mode`` so a richer model
can be swapped in later.

Conventions:
- Field strength is in dBuV/m.  ``reference_field`` is the field at 1 km
  from a 1 kW transmitter (106.9 dBuV/m is the usual broadcast free-space
  constant; it is a convention, not a measured value).
- Distances shorter than one cell size are clamped to one cell size, which
  also defines the field at the transmitter's own cell.
- Diffraction loss is applied only when the direct path is actually
  obstructed (worst Fresnel parameter > 0); a grazing obstruction therefore
  costs ~6 dB while a barely-clear path costs nothing.  Flat terrain with a
  raised mast is never obstructed, so knife-edge mode reduces exactly to
  free space there.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError
from .terrain import ElevationGrid, interp_heights

RADIO_CLASSES = ("community", "national", "private", "international")

FREE_SPACE = "free_space"
KNIFE_EDGE = "free_space_plus_knife_edge"

# Path profile sampling step, in grid units.
_PROFILE_STEP = 0.5


@dataclass
class Transmitter:
    id: str
    x: float
    y: float
    mast_height: float
    power: float
    radio_class: str
    home_prefecture: int
    language: str = ""

    def __post_init__(self):
        if self.mast_height < 0:
            raise ParameterError(f"transmitter {self.id}: mast_height must be >= 0")
        if not self.power > 0:
            raise ParameterError(f"transmitter {self.id}: power must be > 0")
        if self.radio_class not in RADIO_CLASSES:
            raise ParameterError(
                f"transmitter {self.id}: unknown radio_class {self.radio_class!r}"
            )


@dataclass
class PropagationParams:
    mode: str = KNIFE_EDGE
    reference_field: float = 106.9
    frequency_proxy: float = 3.0  # wavelength in meters used by the diffraction term
    threshold: float = 43.0

    def __post_init__(self):
        if self.mode not in (FREE_SPACE, KNIFE_EDGE):
            raise ParameterError(f"unknown propagation mode {self.mode!r}")
        if not self.frequency_proxy > 0:
            raise ParameterError("frequency_proxy (wavelength) must be > 0")
        if not math.isfinite(self.threshold):
            raise ParameterError("threshold must be finite")


@dataclass
class CoverageShares:
    """Per-sub-prefecture treatment variables derived from the field maps."""

    share_local_community: float
    share_any_community: float
    share_national: float
    share_private: float
    share_ethnic_match: float
    dist_km: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        for name in (
            "share_local_community",
            "share_any_community",
            "share_national",
            "share_private",
            "share_ethnic_match",
        ):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ParameterError(f"{name} outside [0, 1]: {v}")
        if self.share_local_community > self.share_any_community + 1e-12:
            raise ParameterError(
                "share_local_community cannot exceed share_any_community"
            )


def knife_edge_loss_db(nu):
    """Single knife-edge diffraction loss for Fresnel parameter nu > 0."""
    nu = np.asarray(nu, dtype=float)
    return 6.9 + 20.0 * np.log10(np.sqrt((nu - 0.1) ** 2 + 1.0) + nu - 0.1)


def _check_tx_in_grid(grid: ElevationGrid, tx: Transmitter) -> None:
    if not grid.in_bounds(tx.x, tx.y):
        raise ParameterError(
            f"transmitter {tx.id} at ({tx.x}, {tx.y}) lies outside the grid"
        )


def _free_space_field(power_kw: float, dist_m, reference_field: float, cell_size: float):
    d_km = np.maximum(np.asarray(dist_m, dtype=float), cell_size) / 1000.0
    return reference_field + 10.0 * np.log10(power_kw) - 20.0 * np.log10(d_km)


def _worst_fresnel(grid, tx, cxs, cys, dist_m, wavelength):
    """Worst (largest) Fresnel parameter along each straight path.

    cxs/cys are arrays of receiver grid coordinates sharing one interior
    sample count, which keeps the profile scan fully vectorized.  The
    receiver sits at terrain height; the transmitter at terrain plus mast.
    """
    n = len(cxs)
    dist_cells = dist_m / grid.cell_size
    n_seg = max(2, int(np.ceil(dist_cells.max() / _PROFILE_STEP))) if n else 2
    t = (np.arange(1, n_seg) / n_seg)[:, None]

    tx_h = grid.height_at(tx.x, tx.y) + tx.mast_height
    rx_h = interp_heights(grid.heights, cxs, cys)

    px = tx.x + t * (cxs[None, :] - tx.x)
    py = tx.y + t * (cys[None, :] - tx.y)
    terrain = interp_heights(grid.heights, px.ravel(), py.ravel()).reshape(px.shape)
    line = tx_h + t * (rx_h[None, :] - tx_h)
    clearance = terrain - line

    d1 = t * dist_m[None, :]
    d2 = (1.0 - t) * dist_m[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        geom = np.sqrt(2.0 * (d1 + d2) / (wavelength * d1 * d2))
    nu = clearance * geom
    nu[~np.isfinite(nu)] = -np.inf
    return nu.max(axis=0)


def _field_at_points(grid, tx, cxs, cys, params):
    """Field strength at arbitrary grid points; single code path for scalar and map."""
    cxs = np.asarray(cxs, dtype=float)
    cys = np.asarray(cys, dtype=float)
    dist_m = np.hypot(cxs - tx.x, cys - tx.y) * grid.cell_size
    out = _free_space_field(tx.power, dist_m, params.reference_field, grid.cell_size)
    if params.mode == KNIFE_EDGE:
        # Group receivers by profile sample count so each group vectorizes.
        dist_cells = dist_m / grid.cell_size
        n_seg = np.maximum(2, np.ceil(dist_cells / _PROFILE_STEP).astype(int))
        loss = np.zeros_like(out)
        for n in np.unique(n_seg):
            sel = n_seg == n
            nu = _worst_fresnel(grid, tx, cxs[sel], cys[sel], dist_m[sel], params.frequency_proxy)
            blocked = nu > 0
            if blocked.any():
                sub = np.zeros(sel.sum())
                sub[blocked] = knife_edge_loss_db(nu[blocked])
                loss[sel] = sub
        out = out - loss
    return out


def field_strength(grid: ElevationGrid, tx: Transmitter, cell, params: PropagationParams) -> float:
    """Field strength in dBuV/m at one grid point."""
    _check_tx_in_grid(grid, tx)
    cx, cy = float(cell[0]), float(cell[1])
    if not grid.in_bounds(cx, cy):
        raise ParameterError(f"cell ({cx}, {cy}) lies outside the grid")
    return float(_field_at_points(grid, tx, np.array([cx]), np.array([cy]), params)[0])


def field_strength_map(grid: ElevationGrid, tx: Transmitter, params: PropagationParams) -> np.ndarray:
    """Field strength at every grid point, shape (nx, ny).

    Identical, value for value, to calling ``field_strength`` per cell; the
    map exists because coverage needs all cells anyway.
    """
    _check_tx_in_grid(grid, tx)
    xs, ys = np.meshgrid(
        np.arange(grid.nx, dtype=float), np.arange(grid.ny, dtype=float), indexing="ij"
    )
    return _field_at_points(grid, tx, xs.ravel(), ys.ravel(), params).reshape(grid.nx, grid.ny)


def _covered_map(grid, tx, params) -> np.ndarray:
    """Boolean map of cells at or above threshold for one transmitter.

    Knife-edge loss is nonnegative, so cells already below threshold in free
    space stay below it; the diffraction scan can skip them.
    """
    _check_tx_in_grid(grid, tx)
    xs, ys = np.meshgrid(
        np.arange(grid.nx, dtype=float), np.arange(grid.ny, dtype=float), indexing="ij"
    )
    xs = xs.ravel()
    ys = ys.ravel()
    dist_m = np.hypot(xs - tx.x, ys - tx.y) * grid.cell_size
    fs = _free_space_field(tx.power, dist_m, params.reference_field, grid.cell_size)
    covered = fs >= params.threshold
    if params.mode == KNIFE_EDGE and covered.any():
        idx = np.flatnonzero(covered)
        fields = _field_at_points(grid, tx, xs[idx], ys[idx], params)
        covered[idx] = fields >= params.threshold
    return covered.reshape(grid.nx, grid.ny)


def _region_shares(labels: np.ndarray, covered: np.ndarray, n_regions: int) -> np.ndarray:
    counts = np.bincount(labels.ravel(), minlength=n_regions)
    if (counts == 0).any():
        empty = np.flatnonzero(counts == 0)
        raise ParameterError(f"sub-prefectures with empty footprints: {empty.tolist()}")
    hits = np.bincount(labels.ravel(), weights=covered.ravel().astype(float), minlength=n_regions)
    return hits / counts


def coverage_share(grid: ElevationGrid, tx: Transmitter, regions, params: PropagationParams) -> dict:
    """Share of each sub-prefecture's cells at or above the field threshold."""
    covered = _covered_map(grid, tx, params)
    shares = _region_shares(regions.labels, covered, len(regions.subprefectures))
    return {sp.id: float(shares[i]) for i, sp in enumerate(regions.subprefectures)}


def aggregate_coverage(
    txs: list[Transmitter],
    regions,
    params: PropagationParams,
    language_map: dict | None = None,
    radio_language_map: dict | None = None,
) -> dict:
    """Build the full per-sub-prefecture CoverageShares from a transmitter roster.

    "Local" means the transmitter's home prefecture equals the
    sub-prefecture's prefecture.  The ethnic-match share is the largest
    single-station share among community stations whose main language
    matches the sub-prefecture's majority language.  Distances are from the
    sub-prefecture centroid to the nearest transmitter of each class, in km
    (inf when the class has no transmitter).
    """
    grid = regions.grid
    n = len(regions.subprefectures)
    labels = regions.labels
    for tx in txs:
        if tx.home_prefecture is None:
            raise ParameterError(f"transmitter {tx.id} has no home prefecture")

    lang_of_tx = {tx.id: tx.language for tx in txs}
    if radio_language_map:
        lang_of_tx.update(radio_language_map)
    majority_lang = {sp.id: sp.majority_language for sp in regions.subprefectures}
    if language_map:
        majority_lang.update(language_map)

    community = [tx for tx in txs if tx.radio_class == "community"]
    covered_by_tx = {tx.id: _covered_map(grid, tx, params) for tx in txs}

    def union_shares(group):
        if not group:
            return np.zeros(n)
        acc = np.zeros(grid.heights.shape, dtype=bool)
        for tx in group:
            acc |= covered_by_tx[tx.id]
        return _region_shares(labels, acc, n)

    any_comm = union_shares(community)
    national = union_shares([tx for tx in txs if tx.radio_class == "national"])
    private = union_shares([tx for tx in txs if tx.radio_class == "private"])

    local_by_pref = {}
    for pref in {tx.home_prefecture for tx in community}:
        local_by_pref[pref] = union_shares(
            [tx for tx in community if tx.home_prefecture == pref]
        )

    single_shares = {
        tx.id: _region_shares(labels, covered_by_tx[tx.id], n) for tx in community
    }

    out = {}
    for i, sp in enumerate(regions.subprefectures):
        local = local_by_pref.get(sp.prefecture_id)
        share_local = float(local[i]) if local is not None else 0.0
        ethnic = 0.0
        for tx in community:
            if lang_of_tx.get(tx.id) == majority_lang[sp.id]:
                ethnic = max(ethnic, float(single_shares[tx.id][i]))
        cx, cy = sp.centroid
        dist = {}
        for cls in RADIO_CLASSES:
            ds = [
                math.hypot(tx.x - cx, tx.y - cy) * grid.cell_size / 1000.0
                for tx in txs
                if tx.radio_class == cls
            ]
            dist[cls] = min(ds) if ds else math.inf
        out[sp.id] = CoverageShares(
            share_local_community=share_local,
            share_any_community=float(any_comm[i]),
            share_national=float(national[i]),
            share_private=float(private[i]),
            share_ethnic_match=ethnic,
            dist_km=dist,
        )
    return out


def write_transmitters_csv(txs: list[Transmitter], path) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "x", "y", "mast_height_m", "power_kw", "class", "home_prefecture", "language"])
        for tx in txs:
            w.writerow([tx.id, repr(tx.x), repr(tx.y), repr(tx.mast_height),
                        repr(tx.power), tx.radio_class, tx.home_prefecture, tx.language])


def read_transmitters_csv(path) -> list[Transmitter]:
    import csv

    txs = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            txs.append(
                Transmitter(
                    id=row["id"],
                    x=float(row["x"]),
                    y=float(row["y"]),
                    mast_height=float(row["mast_height_m"]),
                    power=float(row["power_kw"]),
                    radio_class=row["class"],
                    home_prefecture=int(row["home_prefecture"]),
                    language=row.get("language", ""),
                )
            )
    return txs


def write_coverage_csv(coverage: dict, regions, path) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(
            ["subpref_id", "pref_id", "share_local_community", "share_any_community",
             "share_national", "share_private", "share_ethnic_match",
             "dist_tx_community_km", "dist_tx_national_km", "dist_tx_private_km",
             "dist_tx_international_km"]
        )
        for sp in regions.subprefectures:
            cov = coverage[sp.id]
            w.writerow(
                [sp.id, sp.prefecture_id,
                 repr(cov.share_local_community), repr(cov.share_any_community),
                 repr(cov.share_national), repr(cov.share_private),
                 repr(cov.share_ethnic_match),
                 repr(cov.dist_km.get("community", math.inf)),
                 repr(cov.dist_km.get("national", math.inf)),
                 repr(cov.dist_km.get("private", math.inf)),
                 repr(cov.dist_km.get("international", math.inf))]
            )
