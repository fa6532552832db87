"""Monte Carlo studies: effect recovery, CI calibration, pre-trend size.

Every reported number comes from repeated simulation with per-rep seeds
derived deterministically from a base seed.  Reps are independent given
their seeds, so they can fan out across processes; records are reduced in
rep order, making the summary identical however the work was split.  The
recovery study re-simulates the epidemic panel on a fixed world (coverage
is cross-sectional and does not vary across reps), fits the event study,
bootstraps the cluster covariance, and compares against the injected
truth; the truth accounts for persistence through the convolved event path
when rho > 0.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .epidemic import CampaignTimeline, EpidemicConfig, implied_event_path, simulate_panel
from .errors import ParameterError
from .estimators import DiffInDiff, EventStudy, RegressionSpec
from .inference import cluster_bootstrap, pretrend_test, with_bootstrap_se

_SEED_MIX = 1_000_003


def derive_seed(base_seed: int, tag: int, rep: int = 0) -> int:
    """Stable per-stage, per-rep integer seed."""
    return (base_seed * _SEED_MIX + tag * 7919 + rep) % (2**63)


def estimation_spec(estimation, outcome: str = "log_outcome") -> RegressionSpec:
    return RegressionSpec(
        outcome=outcome,
        treatment=estimation.treatment,
        interact_controls=tuple(estimation.interact_radio),
        controls=tuple(estimation.controls),
        unit_col="subpref_id",
        time_col="month",
        cluster_col=estimation.cluster,
        omit=estimation.omit,
        lagged_dependent=estimation.lagged_dependent,
    )


def _recovery_rep(args) -> dict:
    (regions, timeline, config, estimation, base_seed, rep, bootstrap_reps, include_did) = args
    launch = timeline.official_launch
    spec = estimation_spec(estimation)
    panel = simulate_panel(regions, timeline, config, seed=derive_seed(base_seed, 11, rep))
    if getattr(estimation, "drop_initial_month", False):
        panel = panel[panel["month"] > 0]
    est = EventStudy(spec, launch_month=launch, se="none")
    est.fit(panel)
    boot = cluster_bootstrap(
        est, panel, estimation.cluster, bootstrap_reps, seed=derive_seed(base_seed, 13, rep)
    )
    esr = with_bootstrap_se(est.event_result_, boot, ci_level=estimation.ci_level)
    record = {
        "points": {
            p.tau: (p.beta, p.se, p.ci_low, p.ci_high)
            for p in esr.entries
            if p.tau != estimation.omit
        },
        "pretrend_p": pretrend_test(esr).p_value,
    }
    if include_did:
        dd = DiffInDiff(spec, post_col="post_official", se="none").fit(panel)
        record["did"] = dd.result_.coef[f"{estimation.treatment}:post"]
    return record


def run_recovery_study(
    regions,
    timeline: CampaignTimeline,
    config: EpidemicConfig,
    estimation,
    reps: int,
    bootstrap_reps: int,
    base_seed: int,
    include_did: bool = True,
    threads: int = 1,
) -> dict:
    """Simulate, estimate, and summarize bias / RMSE / coverage per event month."""
    if reps < 1:
        raise ParameterError(f"need at least 1 Monte Carlo rep, got {reps}")
    if threads < 1:
        raise ParameterError(f"threads must be >= 1, got {threads}")
    launch = timeline.official_launch
    n_post = timeline.horizon - launch
    truth_post = implied_event_path(config, n_post)
    taus = list(range(-launch, timeline.horizon - launch))
    truth = {t: (float(truth_post[t]) if t >= 0 else 0.0) for t in taus}

    jobs = [
        (regions, timeline, config, estimation, base_seed, i, bootstrap_reps, include_did)
        for i in range(reps)
    ]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            records = list(pool.map(_recovery_rep, jobs, chunksize=max(1, reps // (4 * threads))))
    else:
        records = [_recovery_rep(job) for job in jobs]

    est_taus = sorted(records[0]["points"])
    betas = {t: np.array([r["points"][t][0] for r in records]) for t in est_taus}
    ses = {t: np.array([r["points"][t][1] for r in records]) for t in est_taus}
    ci_lo = {t: np.array([r["points"][t][2] for r in records]) for t in est_taus}
    ci_hi = {t: np.array([r["points"][t][3] for r in records]) for t in est_taus}

    per_tau = {}
    joint_pre = np.ones(reps, dtype=bool)
    for t in est_taus:
        b = betas[t]
        per_tau[t] = {
            "truth": truth[t],
            "mean_beta": float(b.mean()),
            "bias": float(b.mean() - truth[t]),
            "rmse": float(np.sqrt(np.mean((b - truth[t]) ** 2))),
            "mean_se": float(ses[t].mean()),
            "ci_coverage": float(np.mean((ci_lo[t] <= truth[t]) & (truth[t] <= ci_hi[t]))),
        }
        if t < 0:
            within = np.abs(b) <= 2.0 * ses[t]
            per_tau[t]["within_2se_of_zero"] = float(within.mean())
            joint_pre &= within

    pvals = np.array([r["pretrend_p"] for r in records])
    summary = {
        "reps": reps,
        "bootstrap_reps": bootstrap_reps,
        "per_tau": per_tau,
        "pretrend_rejection_rate": float(np.mean(pvals < 0.05)),
        "joint_pre_within_2se_rate": float(joint_pre.mean()),
    }
    if include_did:
        dd = np.array([r["did"] for r in records])
        did_truth = float(np.mean([truth[t] for t in range(n_post)]))
        summary["did"] = {
            "mean": float(dd.mean()),
            "sd": float(dd.std(ddof=1)) if len(dd) > 1 else 0.0,
            "truth_balanced": did_truth,
        }
    return summary
