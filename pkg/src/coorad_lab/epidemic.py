"""Monthly epidemic panel with coverage-dependent transmission.

The data-generating process is a log-linear recursion: this month's log
case rate is a persistence fraction of last month's, plus a baseline, a
common month effect, the treatment term (a per-event-month effect times
the sub-prefecture's coverage share, switched on at the campaign launch),
covariate loadings, and an i.i.d. shock.  The recursion runs on the latent
log level; integer case counts are materialized from it each month, and
the stored log outcome is recomputed from the integer counts so that the
published panel is internally consistent.

When persistence is positive the regression estimand for event month e is
the convolved path sum_{j<=e} rho^(e-j) * effect_j rather than effect_e;
``implied_event_path`` computes it.  Validation scenarios set rho = 0 so
the two coincide.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .errors import ParameterError
from .game import GameParams, behavior_response
from .regions import RegionSet

PANEL_COLUMNS = [
    "subpref_id", "pref_id", "month", "cases", "population", "log_outcome",
    "cov_local", "cov_comm", "cov_national", "cov_private", "cov_ethnic",
    "dist_epicenter_km", "dist_tx_comm_km", "dist_tx_nat_km", "lang_match",
    "post_official", "post_effective",
]

COVERAGE_FIELD = {
    "cov_local": "share_local_community",
    "cov_comm": "share_any_community",
    "cov_national": "share_national",
    "cov_private": "share_private",
    "cov_ethnic": "share_ethnic_match",
}

LINEAR = "linear"
STRUCTURAL = "structural"

# The headline outcome is log cases per capita-base plus a small offset; the
# count-based variant log(cases + 1) is kept behind this switch because the
# two appear interchangeably in descriptive uses and they do not agree.
RATE_OFFSET = "rate_offset"
COUNT_PLUS_ONE = "count_plus_one"


@dataclass
class CampaignTimeline:
    official_launch: int = 5
    effective_adoption: int = 8
    horizon: int = 29

    def __post_init__(self):
        if not 0 <= self.official_launch < self.effective_adoption < self.horizon:
            raise ParameterError(
                "need 0 <= official_launch < effective_adoption < horizon, got "
                f"{self.official_launch}/{self.effective_adoption}/{self.horizon}"
            )


@dataclass
class EpidemicConfig:
    rho: float = 0.9
    beta0: float = 0.35
    beta1_path: tuple[float, ...] = ()
    covariate_loadings: dict[str, float] = field(default_factory=dict)
    month_effects: tuple[float, ...] | None = None
    noise_sd: float = 0.35
    log_offset: float = 0.01
    per_capita_base: float = 100000.0
    seed_cases: int = 8
    treatment_col: str = "cov_local"
    pathway: str = LINEAR
    outcome_transform: str = RATE_OFFSET
    game: GameParams | None = None
    theta_pre: float = 0.0
    theta_campaign: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.rho <= 1.0:
            raise ParameterError(f"rho must be in [0, 1], got {self.rho}")
        if self.noise_sd < 0:
            raise ParameterError("noise_sd must be >= 0")
        if not self.log_offset > 0:
            raise ParameterError("log_offset must be > 0")
        if self.seed_cases < 0:
            raise ParameterError("seed_cases must be >= 0")
        if self.treatment_col not in COVERAGE_FIELD:
            raise ParameterError(f"unknown treatment_col {self.treatment_col!r}")
        if self.pathway not in (LINEAR, STRUCTURAL):
            raise ParameterError(f"unknown pathway {self.pathway!r}")
        if self.outcome_transform not in (RATE_OFFSET, COUNT_PLUS_ONE):
            raise ParameterError(f"unknown outcome_transform {self.outcome_transform!r}")
        if self.pathway == STRUCTURAL:
            if self.game is None:
                raise ParameterError("structural pathway needs game primitives")
            if self.theta_campaign == self.theta_pre:
                raise ParameterError("theta_campaign must differ from theta_pre")


def implied_event_path(config: EpidemicConfig, n_post: int) -> np.ndarray:
    """Event-study estimand per event month under the recursion's persistence."""
    path = np.zeros(n_post)
    b = np.asarray(config.beta1_path, dtype=float)
    for e in range(n_post):
        for j in range(min(e, len(b) - 1) + 1):
            path[e] += config.rho ** (e - j) * b[j]
    return path


def _covariate_values(sp) -> dict[str, float]:
    return {
        "log_pop_density": float(np.log(sp.population / max(sp.area_km2, 1e-9))),
        "log_population": float(np.log(sp.population)),
        "dist_epicenter_km": sp.distance_to_epicenter_km,
    }


def _materialize(latent: np.ndarray, population: float, config: EpidemicConfig):
    rate = np.maximum(np.exp(latent) - config.log_offset, 0.0)
    cases = np.maximum(np.rint(rate * population / config.per_capita_base), 0.0).astype(int)
    if config.outcome_transform == COUNT_PLUS_ONE:
        log_outcome = np.log(cases + 1.0)
    else:
        log_outcome = np.log(cases * config.per_capita_base / population + config.log_offset)
    return cases, log_outcome


def simulate_panel(
    regions: RegionSet,
    timeline: CampaignTimeline,
    config: EpidemicConfig,
    seed: int,
) -> pd.DataFrame:
    """Simulate the sub-prefecture-by-month panel.

    Deterministic for a fixed seed.  Shocks are drawn from streams derived
    per sub-prefecture from the base seed, so results do not depend on
    evaluation order and the same draws are reused when only effect sizes
    change (common random numbers).  Month 0 is the initial condition: the
    epicenter starts with ``seed_cases``, everyone else at zero.
    """
    subs = regions.subprefectures
    n = len(subs)
    horizon = timeline.horizon
    for sp in subs:
        if sp.coverage is None:
            raise ParameterError(f"sub-prefecture {sp.id} has no coverage shares attached")

    month_effects = np.zeros(horizon)
    if config.month_effects is not None:
        me = np.asarray(config.month_effects, dtype=float)
        if len(me) < horizon:
            raise ParameterError(
                f"month_effects has {len(me)} entries for a {horizon}-month horizon"
            )
        month_effects = me[:horizon]

    beta1 = np.asarray(config.beta1_path, dtype=float)
    populations = np.array([sp.population for sp in subs], dtype=float)
    treatment = np.array(
        [getattr(sp.coverage, COVERAGE_FIELD[config.treatment_col]) for sp in subs]
    )
    covar_term = np.zeros(n)
    if config.covariate_loadings:
        for i, sp in enumerate(subs):
            values = _covariate_values(sp)
            for name, loading in config.covariate_loadings.items():
                if name not in values:
                    raise ParameterError(f"unknown covariate {name!r} in loadings")
                covar_term[i] += loading * values[name]

    shocks = np.empty((n, horizon))
    for i, sp in enumerate(subs):
        rng = np.random.default_rng((seed, sp.id))
        shocks[i] = rng.standard_normal(horizon) * config.noise_sd

    exposure = np.tile(treatment[:, None], (1, horizon))
    if config.pathway == STRUCTURAL:
        alphas = np.asarray(config.game.public_precisions, dtype=float)
        sds = np.where(alphas > 0, 1.0 / np.sqrt(np.maximum(alphas, 1e-300)), 0.0)
        span = config.theta_campaign - config.theta_pre
        for i, sp in enumerate(subs):
            rng = np.random.default_rng((seed, sp.id, 7))
            eps = rng.standard_normal((horizon, len(alphas))) * sds
            for t in range(timeline.official_launch, horizon):
                draws = config.theta_campaign + eps[t]
                b = behavior_response(
                    config.game, treatment[i], config.theta_campaign,
                    theta_pre=config.theta_pre, public_draws=draws,
                )
                exposure[i, t] = (b - config.theta_pre) / span

    seed_rate = config.seed_cases * config.per_capita_base / populations
    latent = np.empty((n, horizon))
    latent[:, 0] = np.log(config.log_offset)
    epi = regions.epicenter_id
    latent[epi, 0] = np.log(seed_rate[epi] + config.log_offset)

    for t in range(1, horizon):
        e = t - timeline.official_launch
        effect = beta1[e] if 0 <= e < len(beta1) else 0.0
        latent[:, t] = (
            config.rho * latent[:, t - 1]
            + config.beta0
            + month_effects[t]
            + effect * exposure[:, t]
            + covar_term
            + shocks[:, t]
        )

    rows = []
    for i, sp in enumerate(subs):
        cases, log_outcome = _materialize(latent[i], populations[i], config)
        cov = sp.coverage
        pref_major = regions.prefecture_majority.get(sp.prefecture_id)
        lang_match = int(sp.majority_language == pref_major) if pref_major else 0
        for t in range(horizon):
            rows.append(
                (
                    sp.id, sp.prefecture_id, t, int(cases[t]), int(sp.population),
                    float(log_outcome[t]),
                    cov.share_local_community, cov.share_any_community,
                    cov.share_national, cov.share_private, cov.share_ethnic_match,
                    sp.distance_to_epicenter_km,
                    cov.dist_km.get("community", np.inf),
                    cov.dist_km.get("national", np.inf),
                    lang_match,
                    int(t >= timeline.official_launch),
                    int(t >= timeline.effective_adoption),
                )
            )
    return pd.DataFrame(rows, columns=PANEL_COLUMNS)


def validate_panel(panel: pd.DataFrame, config: EpidemicConfig | None = None) -> None:
    """Check the published-panel invariants; raises ParameterError on violation."""
    missing = [c for c in PANEL_COLUMNS if c not in panel.columns]
    if missing:
        raise ParameterError(f"panel missing columns: {missing}")
    if (panel["cases"] < 0).any():
        raise ParameterError("cases must be >= 0")
    if not np.array_equal(panel["cases"], panel["cases"].astype(int)):
        raise ParameterError("cases must be integers")
    offset = config.log_offset if config else 0.01
    base = config.per_capita_base if config else 100000.0
    if config is not None and config.outcome_transform == COUNT_PLUS_ONE:
        recomputed = np.log(panel["cases"] + 1.0)
    else:
        recomputed = np.log(panel["cases"] * base / panel["population"] + offset)
    if not np.allclose(recomputed, panel["log_outcome"], rtol=0, atol=1e-12):
        raise ParameterError("log_outcome inconsistent with cases and population")


def write_panel_csv(panel: pd.DataFrame, path) -> None:
    panel.to_csv(path, index=False, columns=PANEL_COLUMNS)


def read_panel_csv(path) -> pd.DataFrame:
    return pd.read_csv(path)
