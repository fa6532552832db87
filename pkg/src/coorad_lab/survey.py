"""Synthetic individual-level survey for the media-exposure regressions.

Each respondent either hears about the epidemic on the media (probability
rising with local radio coverage), hears through some other channel, or
not at all.  Beliefs about neighbors' treatment-seeking respond to own
media exposure and to the leave-one-out share of media-informed peers in
the sub-prefecture; chlorine use responds to any information with at most
a marginal extra media effect.  An optional latent health-interest trait
can be wired into both exposure and outcomes to create the selection
problem that the instrumental-variables estimator is meant to solve.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .errors import ParameterError
from .regions import RegionSet

SURVEY_COLUMNS = [
    "respondent_id", "subpref_id", "pref_id", "region_id",
    "heard_on_media", "heard_other_source",
    "peer_share_media", "belief_treatment", "chlorine_use",
    "age", "education", "wealth", "gender", "urban",
    "cov_local", "cov_comm", "cov_national", "cov_private",
]


def _logistic(z):
    return 1.0 / (1.0 + np.exp(-z))


@dataclass
class SurveyConfig:
    n_respondents: int = 2466
    # Exposure model: P(heard on media) = logistic(a0 + a1 * local coverage + sel * trait)
    media_intercept: float = -1.0
    media_coverage_slope: float = 2.5
    selection_strength: float = 0.0
    other_info_logit: float = 1.0
    # Belief outcome: b0 + b1 * media + b2-style peer term + controls + trait loading
    belief_intercept: float = 0.0
    belief_media_effect: float = 0.35
    belief_other_effect: float = 0.15
    peer_slopes: tuple[float, ...] = (0.3,)
    peer_bins: tuple[float, ...] = (0.5, 0.7)
    outcome_selection: float = 0.0
    belief_noise_sd: float = 1.0
    # Chlorine outcome: any information helps; media adds only the configured margin
    chlorine_info_effect: float = 0.3
    chlorine_media_extra: float = 0.0
    chlorine_noise_sd: float = 1.0
    demo_loadings: dict[str, float] = field(default_factory=lambda: {"education": 0.05, "wealth": 0.05})

    def __post_init__(self):
        if self.n_respondents < 2:
            raise ParameterError("n_respondents must be >= 2")
        if len(self.peer_slopes) not in (1, len(self.peer_bins) + 1):
            raise ParameterError(
                "peer_slopes must have one entry (flat) or one per peer-share bin"
            )


def _peer_slope(config: SurveyConfig, share: float) -> float:
    if len(config.peer_slopes) == 1:
        return config.peer_slopes[0]
    idx = int(np.searchsorted(config.peer_bins, share, side="right"))
    return config.peer_slopes[idx]


def simulate_survey(regions: RegionSet, config: SurveyConfig, seed: int) -> pd.DataFrame:
    """Draw the respondent-level survey; deterministic for a fixed seed.

    Respondents are allocated across sub-prefectures proportionally to
    population with a floor of two per sub-prefecture (the leave-one-out
    peer share is undefined below that, so a total too small to allow the
    floor is rejected).
    """
    subs = regions.subprefectures
    if config.n_respondents < 2 * len(subs):
        raise ParameterError(
            f"{config.n_respondents} respondents cannot give every one of "
            f"{len(subs)} sub-prefectures at least 2"
        )
    for sp in subs:
        if sp.coverage is None:
            raise ParameterError(f"sub-prefecture {sp.id} has no coverage shares attached")

    total_pop = float(sum(sp.population for sp in subs))
    alloc = {
        sp.id: max(2, int(round(config.n_respondents * sp.population / total_pop)))
        for sp in subs
    }

    rows = []
    rid = 0
    for sp in subs:
        n = alloc[sp.id]
        rng = np.random.default_rng((seed, sp.id, 11))
        cov = sp.coverage
        trait = rng.standard_normal(n)
        age = rng.normal(35.0, 12.0, n)
        education = rng.standard_normal(n)
        wealth = rng.standard_normal(n)
        gender = rng.integers(0, 2, n)
        urban = (rng.random(n) < 0.3).astype(int)

        p_media = _logistic(
            config.media_intercept
            + config.media_coverage_slope * cov.share_local_community
            + config.selection_strength * trait
        )
        heard_media = (rng.random(n) < p_media).astype(int)
        p_other = _logistic(config.other_info_logit + config.selection_strength * trait)
        heard_other = ((rng.random(n) < p_other) & (heard_media == 0)).astype(int)

        n_media = heard_media.sum()
        peer_share = (n_media - heard_media) / (n - 1)

        demo_values = {"education": education, "wealth": wealth,
                       "age": age, "urban": urban, "gender": gender}
        demo_term = np.zeros(n)
        for name, loading in config.demo_loadings.items():
            if name not in demo_values:
                raise ParameterError(f"unknown demographic {name!r} in demo_loadings")
            demo_term += loading * demo_values[name]

        peer_term = np.array(
            [_peer_slope(config, s) * s for s in peer_share]
        )
        belief = (
            config.belief_intercept
            + config.belief_media_effect * heard_media
            + config.belief_other_effect * heard_other
            + peer_term
            + demo_term
            + config.outcome_selection * trait
            + rng.standard_normal(n) * config.belief_noise_sd
        )
        any_info = ((heard_media == 1) | (heard_other == 1)).astype(int)
        chlorine = (
            config.chlorine_info_effect * any_info
            + config.chlorine_media_extra * heard_media
            + demo_term
            + config.outcome_selection * trait
            + rng.standard_normal(n) * config.chlorine_noise_sd
        )

        for j in range(n):
            rows.append(
                (
                    rid, sp.id, sp.prefecture_id, sp.region_id,
                    int(heard_media[j]), int(heard_other[j]),
                    float(peer_share[j]), float(belief[j]), float(chlorine[j]),
                    float(age[j]), float(education[j]), float(wealth[j]),
                    int(gender[j]), int(urban[j]),
                    cov.share_local_community, cov.share_any_community,
                    cov.share_national, cov.share_private,
                )
            )
            rid += 1
    return pd.DataFrame(rows, columns=SURVEY_COLUMNS)


def write_survey_csv(survey: pd.DataFrame, path) -> None:
    survey.to_csv(path, index=False, columns=SURVEY_COLUMNS)
