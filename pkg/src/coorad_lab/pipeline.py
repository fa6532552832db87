"""Scenario-driven orchestration: scenario in, stamped artifacts out.

Every command builds what it needs from the scenario deterministically,
writes its outputs into the requested directory, and stamps a
``manifest.json`` recording the scenario hash, seed, library versions, and
a content hash per output file.  Rerunning the same scenario and seed
reproduces the manifest byte for byte.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__
from .epidemic import simulate_panel, write_panel_csv
from .errors import ParameterError
from .estimators import DiffInDiff, EventStudy, parse_tau, tau_column
from .game import equilibrium_weights, fixed_point_oracle
from .inference import cluster_bootstrap, pretrend_test, with_bootstrap_se
from .metrics import fractionalization, prevented_cases
from .montecarlo import derive_seed, estimation_spec, run_recovery_study
from .propagation import (
    Transmitter,
    aggregate_coverage,
    read_transmitters_csv,
    write_coverage_csv,
    write_transmitters_csv,
)
from .regions import aggregate_language_shares, attach_coverage, attach_language_match, build_regions
from .scenario import Scenario, scenario_hash
from .survey import simulate_survey, write_survey_csv
from .terrain import synth_terrain, write_grid


@dataclass
class World:
    grid: object
    regions: object
    transmitters: list
    coverage: dict


def synth_transmitters(scenario: Scenario, regions) -> list[Transmitter]:
    """Deterministic synthetic roster.

    Community stations go to a random subset of prefectures, sited on the
    highest cell of the prefecture's seed sub-prefecture and speaking the
    prefecture majority language; national, private, and international
    stations scatter over random sub-prefectures, likewise sited on each
    host sub-prefecture's high ground.
    """
    t = scenario.transmitters
    rng = np.random.default_rng(derive_seed(scenario.base_seed, 3))
    subs = regions.subprefectures
    n_pref = regions.n_prefectures
    txs: list[Transmitter] = []

    # Station powers spread around the configured value so reach varies from
    # town-scale to prefecture-scale, as in observed rosters.  The upper tail
    # is clipped: one lucky draw must not blanket the whole map.
    def draw_power(mean_kw):
        drawn = mean_kw * np.exp(t.power_spread_sigma * rng.standard_normal())
        return float(min(drawn, 2.5 * mean_kw))

    def high_ground(sp):
        # Broadcasters site masts on hills: take the highest cell of the
        # station's sub-prefecture footprint.
        mask = regions.labels == sp.id
        flat = np.where(mask.ravel(), regions.grid.heights.ravel(), -np.inf)
        ix, iy = np.unravel_index(int(np.argmax(flat)), mask.shape)
        return float(ix), float(iy)

    n_comm = min(t.n_community, n_pref)
    comm_prefs = sorted(rng.choice(n_pref, size=n_comm, replace=False).tolist())
    for p in comm_prefs:
        sp = subs[p]  # prefecture p nests its seed sub-prefecture p
        x, y = high_ground(sp)
        txs.append(
            Transmitter(
                id=f"comm-{p}",
                x=x,
                y=y,
                mast_height=t.community_mast_m,
                power=draw_power(t.community_power_kw),
                radio_class="community",
                home_prefecture=p,
                language=regions.prefecture_majority.get(p, sp.majority_language),
            )
        )

    def scatter(n, prefix, mast, power, radio_class, language=None, spread=False, hills=True):
        if n <= 0:
            return
        spots = rng.choice(len(subs), size=min(n, len(subs)), replace=False)
        for j, s_idx in enumerate(sorted(spots.tolist())):
            sp = subs[s_idx]
            x, y = high_ground(sp) if hills else sp.centroid
            txs.append(
                Transmitter(
                    id=f"{prefix}-{j}",
                    x=x,
                    y=y,
                    mast_height=mast,
                    power=draw_power(power) if spread else power,
                    radio_class=radio_class,
                    home_prefecture=sp.prefecture_id,
                    language=language if language is not None else sp.majority_language,
                )
            )

    scatter(t.n_national, "nat", t.national_mast_m, t.national_power_kw, "national", "french")
    scatter(t.n_private, "priv", t.private_mast_m, t.private_power_kw, "private", spread=True)
    scatter(t.n_international, "intl", t.international_mast_m, t.international_power_kw,
            "international", "french")
    return txs


def build_world(scenario: Scenario) -> World:
    """Terrain, regions, roster, and coverage shares for a scenario."""
    ter = scenario.terrain
    grid = synth_terrain(
        seed=derive_seed(scenario.base_seed, 1),
        nx=ter.nx,
        ny=ter.ny,
        cell_size=ter.cell_size_m,
        ruggedness=ter.ruggedness,
        base_elevation=ter.base_elevation_m,
    )
    reg = scenario.regions
    regions = build_regions(
        seed=derive_seed(scenario.base_seed, 2),
        n_pref=reg.n_prefectures,
        n_subpref=reg.n_subprefectures,
        grid=grid,
        languages=reg.languages,
        n_regions=reg.n_regions,
        mean_population=reg.mean_population,
        epicenter_frac=(reg.epicenter_frac_x, reg.epicenter_frac_y),
    )
    if scenario.transmitters.roster_csv:
        txs = read_transmitters_csv(scenario.transmitters.roster_csv)
    else:
        txs = synth_transmitters(scenario, regions)
    attach_language_match(regions, txs)
    coverage = aggregate_coverage(txs, regions, scenario.propagation)
    attach_coverage(regions, coverage)
    return World(grid=grid, regions=regions, transmitters=txs, coverage=coverage)


# ---------------------------------------------------------------------------
# Manifests


def _hash_file(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_manifest(out_dir: Path, scenario: Scenario, outputs: list[Path]) -> Path:
    manifest = {
        "scenario_hash": scenario_hash(scenario),
        "base_seed": scenario.base_seed,
        "versions": {
            "coorad-lab": __version__,
            "numpy": np.__version__,
            "pandas": pd.__version__,
        },
        "outputs": {p.name: _hash_file(p) for p in outputs},
    }
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _ensure_dir(out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# Commands


def cmd_coverage(scenario: Scenario, out_dir) -> dict:
    out = _ensure_dir(out_dir)
    world = build_world(scenario)
    paths = []
    grid_path = out / "terrain.csv"
    write_grid(world.grid, grid_path)
    paths.append(grid_path)
    tx_path = out / "transmitters.csv"
    write_transmitters_csv(world.transmitters, tx_path)
    paths.append(tx_path)
    cov_path = out / "coverage.csv"
    write_coverage_csv(world.coverage, world.regions, cov_path)
    paths.append(cov_path)
    manifest = write_manifest(out, scenario, paths)
    return {"outputs": [str(p) for p in paths], "manifest": str(manifest)}


def cmd_simulate(scenario: Scenario, out_dir) -> dict:
    out = _ensure_dir(out_dir)
    world = build_world(scenario)
    panel = simulate_panel(
        world.regions, scenario.timeline, scenario.epidemic,
        seed=derive_seed(scenario.base_seed, 4),
    )
    survey = simulate_survey(world.regions, scenario.survey, seed=derive_seed(scenario.base_seed, 5))
    paths = []
    panel_path = out / "panel.csv"
    write_panel_csv(panel, panel_path)
    paths.append(panel_path)
    survey_path = out / "survey.csv"
    write_survey_csv(survey, survey_path)
    paths.append(survey_path)
    cov_path = out / "coverage.csv"
    write_coverage_csv(world.coverage, world.regions, cov_path)
    paths.append(cov_path)
    weights_path = out / "equilibrium_weights.json"
    _write_json(
        weights_path,
        {
            "closed_form": equilibrium_weights(scenario.game).to_dict(),
            "fixed_point_oracle": fixed_point_oracle(scenario.game).to_dict(),
        },
    )
    paths.append(weights_path)
    manifest = write_manifest(out, scenario, paths)
    return {"outputs": [str(p) for p in paths], "manifest": str(manifest)}


def _fit_result_json(did_info, esr, pretrend) -> dict:
    coef = {}
    for p in esr.entries:
        coef[tau_column(esr.treatment, p.tau)] = {
            "est": p.beta, "se": p.se, "ci_low": p.ci_low, "ci_high": p.ci_high,
        }
    return {
        "coef": coef,
        "n": esr.n,
        "n_clusters": esr.n_clusters,
        "diagnostics": {
            "treatment": esr.treatment,
            "omitted_tau": esr.omitted,
            "se_kind": esr.se_kind,
            "pretrend": pretrend,
            "did": did_info,
        },
    }


def cmd_estimate(scenario: Scenario, panel_path, out_dir) -> dict:
    out = _ensure_dir(out_dir)
    panel = pd.read_csv(panel_path)
    est = scenario.estimation
    if est.drop_initial_month:
        panel = panel[panel["month"] > 0]
    spec = estimation_spec(est)
    launch = scenario.timeline.official_launch

    study = EventStudy(spec, launch_month=launch, se="none").fit(panel)
    boot = cluster_bootstrap(
        study, panel, est.cluster, est.bootstrap_reps, seed=derive_seed(scenario.base_seed, 6)
    )
    esr = with_bootstrap_se(study.event_result_, boot, ci_level=est.ci_level)
    pt = pretrend_test(esr)

    dd = DiffInDiff(spec, post_col="post_official", se="cluster").fit(panel).result_
    did_name = f"{est.treatment}:post"
    did_info = {"est": dd.coef[did_name], "se": dd.se[did_name]}

    results = _fit_result_json(
        did_info, esr,
        {"stat": pt.stat, "df": pt.df, "p_value": pt.p_value, "reference": pt.reference},
    )
    paths = []
    results_path = out / "results.json"
    _write_json(results_path, results)
    paths.append(results_path)
    tidy_path = out / "event_study.csv"
    esr.to_frame().to_csv(tidy_path, index=False)
    paths.append(tidy_path)
    manifest = write_manifest(out, scenario, paths)
    return {"outputs": [str(p) for p in paths], "manifest": str(manifest), "results": results}


def cmd_montecarlo(scenario: Scenario, out_dir, reps: int | None = None, threads: int = 1) -> dict:
    out = _ensure_dir(out_dir)
    mc = scenario.montecarlo
    n_reps = reps if reps is not None else mc.reps
    if n_reps < 1:
        raise ParameterError(f"montecarlo needs at least 1 rep, got {n_reps}")
    world = build_world(scenario)
    summary = run_recovery_study(
        world.regions, scenario.timeline, scenario.epidemic, scenario.estimation,
        reps=n_reps, bootstrap_reps=mc.bootstrap_reps,
        base_seed=scenario.base_seed, threads=threads,
    )
    summary["per_tau"] = {str(k): v for k, v in summary["per_tau"].items()}
    paths = []
    summary_path = out / "montecarlo.json"
    _write_json(summary_path, summary)
    paths.append(summary_path)
    manifest = write_manifest(out, scenario, paths)
    return {"outputs": [str(p) for p in paths], "manifest": str(manifest), "summary": summary}


def default_untreated_filter(panel: pd.DataFrame) -> pd.Series:
    """Comparison set for the counterfactual: well covered by some community
    signal (at or above the median) but below the median local coverage
    within that group."""
    units = panel.drop_duplicates("subpref_id")[["subpref_id", "cov_local", "cov_comm"]]
    comm_median = units["cov_comm"].median()
    eligible = units[units["cov_comm"] >= comm_median]
    local_median = eligible["cov_local"].median()
    chosen = set(eligible.loc[eligible["cov_local"] <= local_median, "subpref_id"])
    return panel["subpref_id"].isin(chosen)


def esr_map_from_results(results: dict) -> dict[int, float]:
    coef = results["coef"]
    return {parse_tau(name): entry["est"] for name, entry in coef.items()}


def cmd_counterfactual(scenario: Scenario, results_path, panel_path, out_dir) -> dict:
    out = _ensure_dir(out_dir)
    with open(results_path) as fh:
        results = json.load(fh)
    panel = pd.read_csv(panel_path)
    tau_map = esr_map_from_results(results)
    cf = prevented_cases(
        tau_map,
        panel,
        coverage_gap_pp=scenario.counterfactual.coverage_gap_pp,
        untreated_filter=default_untreated_filter,
        launch_month=scenario.timeline.official_launch,
        method=scenario.counterfactual.method,
    )
    paths = []
    cf_path = out / "counterfactual.json"
    _write_json(cf_path, cf.to_dict())
    paths.append(cf_path)
    manifest = write_manifest(out, scenario, paths)
    return {"outputs": [str(p) for p in paths], "manifest": str(manifest), "result": cf}


def cmd_fractionalization(scenario: Scenario, out_dir) -> dict:
    out = _ensure_dir(out_dir)
    world = build_world(scenario)
    rows = []
    for level in ("country", "region", "prefecture", "subprefecture"):
        for key, shares in sorted(aggregate_language_shares(world.regions, level).items()):
            rows.append((level, key, fractionalization(shares)))
    df = pd.DataFrame(rows, columns=["level", "unit_id", "fractionalization"])
    paths = []
    frac_path = out / "fractionalization.csv"
    df.to_csv(frac_path, index=False)
    paths.append(frac_path)
    manifest = write_manifest(out, scenario, paths)
    return {"outputs": [str(p) for p in paths], "manifest": str(manifest)}
