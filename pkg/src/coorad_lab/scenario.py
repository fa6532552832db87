"""Scenario configuration: one sectioned key-value file drives a whole run.

The file format is INI (configparser): flat keys inside named sections,
human-diffable, and every default is visible through the ``print-defaults``
command.  A scenario plus a base seed fully determines all outputs; the
scenario hash in run manifests is the SHA-256 of the canonical dump.
"""

from __future__ import annotations

import configparser
import hashlib
import io
from dataclasses import dataclass, field, fields, replace

from .epidemic import CampaignTimeline, EpidemicConfig
from .errors import ParameterError
from .game import GameParams
from .propagation import PropagationParams
from .regions import DEFAULT_LANGUAGES
from .survey import SurveyConfig

# Epidemic month profile: log case-rate levels common to every sub-prefecture
# (absorbed by time fixed effects in estimation).  The shape rises to a peak
# shortly after the campaign launch and decays through the tail, so the
# treatment window sits on the decline as in the observed outbreak.  Levels
# are set high enough that monthly counts stay in the dozens or more:
# integer-count discretization of the log outcome distorts estimates when
# counts drop to a handful, so the synthetic epidemic runs hotter than the
# observed one (the counterfactual targets are shares, which are scale-free).
DEFAULT_MONTH_LEVELS = (
    0.0,                                  # month 0 is the seeded initial condition
    4.2, 4.3, 4.4, 4.5,                   # pre-launch
    4.8, 5.2, 5.6, 6.0, 6.3,              # ramp-up after launch
    6.5, 6.6,                             # approach to the peak
    6.65, 6.5, 6.2, 5.8, 5.4, 5.0,        # peak and decline across the effect window
    4.6, 4.3, 4.0, 3.8, 3.6,              # late epidemic
    3.4, 3.2, 3.1, 3.0, 2.9, 2.8,         # tail
)

# Per-event-month treatment effects on log cases per unit coverage share
# (divide by 100 for the per-percentage-point effect).  Nothing for the
# first seven event months, then the active window, then a taper.
DEFAULT_EFFECT_PATH = (
    0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0,
    -1.5, -1.6, -1.8, -1.7, -1.4, -1.3,
    -0.6, -0.3,
)


@dataclass
class TerrainSection:
    nx: int = 160
    ny: int = 160
    cell_size_m: float = 3000.0
    ruggedness: float = 2.6
    base_elevation_m: float = 400.0


@dataclass
class RosterSection:
    """Synthetic transmitter roster, unless a CSV path is given.

    Powers are calibration knobs, not physical ERP claims: together with
    the free-space constant and the 43 dBuV/m threshold they set station
    reach, and the defaults are tuned so the local community coverage
    distribution lands near the observed median/mean (14%/28%).
    """

    roster_csv: str = ""
    power_spread_sigma: float = 1.1
    n_community: int = 23
    community_power_kw: float = 0.004
    community_mast_m: float = 20.0
    n_national: int = 20
    national_power_kw: float = 0.006
    national_mast_m: float = 60.0
    n_private: int = 100
    private_power_kw: float = 0.00015
    private_mast_m: float = 20.0
    n_international: int = 12
    international_power_kw: float = 0.02
    international_mast_m: float = 80.0


@dataclass
class RegionsSection:
    n_prefectures: int = 34
    n_subprefectures: int = 341
    n_regions: int = 4
    mean_population: float = 33000.0
    languages: tuple[str, ...] = DEFAULT_LANGUAGES
    epicenter_frac_x: float = 0.82
    epicenter_frac_y: float = 0.82


@dataclass
class EstimationSection:
    treatment: str = "cov_local"
    interact_radio: tuple[str, ...] = ("cov_comm", "cov_national", "cov_private")
    controls: tuple[str, ...] = ()
    cluster: str = "pref_id"
    omit: int = -1
    bootstrap_reps: int = 199
    ci_level: float = 0.95
    lagged_dependent: bool = False
    # Month 0 is the seeded initial condition: identical outcomes everywhere
    # except the epicenter, so it carries no usable cross-sectional variation
    # and its event-time interaction is degenerate.
    drop_initial_month: bool = True


@dataclass
class MonteCarloSection:
    reps: int = 200
    bootstrap_reps: int = 99


@dataclass
class CounterfactualSection:
    coverage_gap_pp: float = 62.0
    method: str = "linear"


@dataclass
class Scenario:
    base_seed: int = 42
    out_dir: str = "out"
    terrain: TerrainSection = field(default_factory=TerrainSection)
    propagation: PropagationParams = field(
        # Wavelength shortened below the FM default so diffraction bites at
        # the calibrated station reach.
        default_factory=lambda: PropagationParams(frequency_proxy=1.5)
    )
    transmitters: RosterSection = field(default_factory=RosterSection)
    regions: RegionsSection = field(default_factory=RegionsSection)
    game: GameParams = field(
        default_factory=lambda: GameParams(
            complementarity=0.6,
            private_precision=1.0,
            public_precisions=(2.0, 1.0, 0.0),
            informed_share=0.5,
        )
    )
    timeline: CampaignTimeline = field(default_factory=CampaignTimeline)
    epidemic: EpidemicConfig = field(
        default_factory=lambda: EpidemicConfig(
            rho=0.0,
            beta0=0.0,
            beta1_path=DEFAULT_EFFECT_PATH,
            covariate_loadings={"log_pop_density": 0.08, "dist_epicenter_km": -0.002},
            month_effects=DEFAULT_MONTH_LEVELS,
            noise_sd=0.35,
            seed_cases=8,
        )
    )
    survey: SurveyConfig = field(default_factory=SurveyConfig)
    estimation: EstimationSection = field(default_factory=EstimationSection)
    montecarlo: MonteCarloSection = field(default_factory=MonteCarloSection)
    counterfactual: CounterfactualSection = field(default_factory=CounterfactualSection)


def default_scenario() -> Scenario:
    return Scenario()


# ---------------------------------------------------------------------------
# Serialization

_GAME_KEYS = ("r", "beta_priv", "alpha_L", "alpha_N", "alpha_F", "P")


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (tuple, list)):
        return ",".join(_fmt(v) for v in value)
    if isinstance(value, dict):
        return ",".join(f"{k}:{_fmt(v)}" for k, v in sorted(value.items()))
    return str(value)


def _game_to_section(g: GameParams) -> dict:
    alphas = list(g.public_precisions) + [0.0, 0.0, 0.0]
    return {
        "r": _fmt(g.complementarity),
        "beta_priv": _fmt(g.private_precision),
        "alpha_L": _fmt(alphas[0]),
        "alpha_N": _fmt(alphas[1]),
        "alpha_F": _fmt(alphas[2]),
        "P": _fmt(g.informed_share),
    }


def _game_from_section(sec) -> GameParams:
    return GameParams(
        complementarity=sec.getfloat("r"),
        private_precision=sec.getfloat("beta_priv"),
        public_precisions=(
            sec.getfloat("alpha_L"),
            sec.getfloat("alpha_N"),
            sec.getfloat("alpha_F"),
        ),
        informed_share=sec.getfloat("P"),
    )


def scenario_to_text(s: Scenario) -> str:
    cp = configparser.ConfigParser()
    cp["run"] = {"base_seed": str(s.base_seed), "out_dir": s.out_dir}
    cp["terrain"] = {f.name: _fmt(getattr(s.terrain, f.name)) for f in fields(s.terrain)}
    cp["propagation"] = {f.name: _fmt(getattr(s.propagation, f.name)) for f in fields(s.propagation)}
    cp["transmitters"] = {f.name: _fmt(getattr(s.transmitters, f.name)) for f in fields(s.transmitters)}
    cp["regions"] = {f.name: _fmt(getattr(s.regions, f.name)) for f in fields(s.regions)}
    cp["game"] = _game_to_section(s.game)
    cp["timeline"] = {f.name: _fmt(getattr(s.timeline, f.name)) for f in fields(s.timeline)}
    epi = {
        f.name: _fmt(getattr(s.epidemic, f.name))
        for f in fields(s.epidemic)
        if f.name not in ("game", "month_effects", "beta1_path", "covariate_loadings")
    }
    epi["beta1_path"] = _fmt(s.epidemic.beta1_path)
    epi["month_effects"] = _fmt(s.epidemic.month_effects or ())
    epi["covariate_loadings"] = _fmt(s.epidemic.covariate_loadings)
    cp["epidemic"] = epi
    svy = {
        f.name: _fmt(getattr(s.survey, f.name))
        for f in fields(s.survey)
        if f.name != "demo_loadings"
    }
    svy["demo_loadings"] = _fmt(s.survey.demo_loadings)
    cp["survey"] = svy
    cp["estimation"] = {f.name: _fmt(getattr(s.estimation, f.name)) for f in fields(s.estimation)}
    cp["montecarlo"] = {f.name: _fmt(getattr(s.montecarlo, f.name)) for f in fields(s.montecarlo)}
    cp["counterfactual"] = {f.name: _fmt(getattr(s.counterfactual, f.name)) for f in fields(s.counterfactual)}
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def _floats(text: str) -> tuple[float, ...]:
    text = text.strip()
    if not text:
        return ()
    return tuple(float(v) for v in text.split(","))


def _strings(text: str) -> tuple[str, ...]:
    text = text.strip()
    if not text:
        return ()
    return tuple(v.strip() for v in text.split(","))


def _loadings(text: str) -> dict:
    out = {}
    for part in _strings(text):
        key, _, val = part.partition(":")
        if not val:
            raise ParameterError(f"malformed loading entry {part!r}")
        out[key] = float(val)
    return out


def scenario_from_text(text: str) -> Scenario:
    cp = configparser.ConfigParser()
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ParameterError(f"malformed scenario file: {exc}") from exc
    s = default_scenario()
    try:
        if "run" in cp:
            s = replace(
                s,
                base_seed=cp["run"].getint("base_seed", s.base_seed),
                out_dir=cp["run"].get("out_dir", s.out_dir),
            )
        if "terrain" in cp:
            sec = cp["terrain"]
            s.terrain = TerrainSection(
                nx=sec.getint("nx", s.terrain.nx),
                ny=sec.getint("ny", s.terrain.ny),
                cell_size_m=sec.getfloat("cell_size_m", s.terrain.cell_size_m),
                ruggedness=sec.getfloat("ruggedness", s.terrain.ruggedness),
                base_elevation_m=sec.getfloat("base_elevation_m", s.terrain.base_elevation_m),
            )
        if "propagation" in cp:
            sec = cp["propagation"]
            s.propagation = PropagationParams(
                mode=sec.get("mode", s.propagation.mode),
                reference_field=sec.getfloat("reference_field", s.propagation.reference_field),
                frequency_proxy=sec.getfloat("frequency_proxy", s.propagation.frequency_proxy),
                threshold=sec.getfloat("threshold", s.propagation.threshold),
            )
        if "transmitters" in cp:
            sec = cp["transmitters"]
            kwargs = {}
            for f in fields(RosterSection):
                if f.name not in sec:
                    kwargs[f.name] = getattr(s.transmitters, f.name)
                elif f.type == "str":
                    kwargs[f.name] = sec.get(f.name)
                elif f.type == "int":
                    kwargs[f.name] = sec.getint(f.name)
                else:
                    kwargs[f.name] = sec.getfloat(f.name)
            s.transmitters = RosterSection(**kwargs)
        if "regions" in cp:
            sec = cp["regions"]
            s.regions = RegionsSection(
                n_prefectures=sec.getint("n_prefectures", s.regions.n_prefectures),
                n_subprefectures=sec.getint("n_subprefectures", s.regions.n_subprefectures),
                n_regions=sec.getint("n_regions", s.regions.n_regions),
                mean_population=sec.getfloat("mean_population", s.regions.mean_population),
                languages=_strings(sec.get("languages", ",".join(s.regions.languages))),
                epicenter_frac_x=sec.getfloat("epicenter_frac_x", s.regions.epicenter_frac_x),
                epicenter_frac_y=sec.getfloat("epicenter_frac_y", s.regions.epicenter_frac_y),
            )
        if "game" in cp:
            s.game = _game_from_section(cp["game"])
        if "timeline" in cp:
            sec = cp["timeline"]
            s.timeline = CampaignTimeline(
                official_launch=sec.getint("official_launch", s.timeline.official_launch),
                effective_adoption=sec.getint("effective_adoption", s.timeline.effective_adoption),
                horizon=sec.getint("horizon", s.timeline.horizon),
            )
        if "epidemic" in cp:
            sec = cp["epidemic"]
            if "month_effects" in sec:
                month_effects = _floats(sec["month_effects"]) or None
            else:
                month_effects = s.epidemic.month_effects
            if "covariate_loadings" in sec:
                loadings = _loadings(sec["covariate_loadings"])
            else:
                loadings = dict(s.epidemic.covariate_loadings)
            s.epidemic = EpidemicConfig(
                rho=sec.getfloat("rho", s.epidemic.rho),
                beta0=sec.getfloat("beta0", s.epidemic.beta0),
                beta1_path=_floats(sec.get("beta1_path", _fmt(s.epidemic.beta1_path))),
                covariate_loadings=loadings,
                month_effects=month_effects,
                noise_sd=sec.getfloat("noise_sd", s.epidemic.noise_sd),
                log_offset=sec.getfloat("log_offset", s.epidemic.log_offset),
                per_capita_base=sec.getfloat("per_capita_base", s.epidemic.per_capita_base),
                seed_cases=sec.getint("seed_cases", s.epidemic.seed_cases),
                treatment_col=sec.get("treatment_col", s.epidemic.treatment_col),
                pathway=sec.get("pathway", s.epidemic.pathway),
                outcome_transform=sec.get("outcome_transform", s.epidemic.outcome_transform),
                game=s.game if sec.get("pathway", s.epidemic.pathway) == "structural" else None,
                theta_pre=sec.getfloat("theta_pre", s.epidemic.theta_pre),
                theta_campaign=sec.getfloat("theta_campaign", s.epidemic.theta_campaign),
            )
        if "survey" in cp:
            sec = cp["survey"]
            kwargs = {}
            for f in fields(SurveyConfig):
                if f.name == "demo_loadings":
                    kwargs[f.name] = (
                        _loadings(sec[f.name]) if f.name in sec else dict(s.survey.demo_loadings)
                    )
                elif f.name not in sec:
                    kwargs[f.name] = getattr(s.survey, f.name)
                elif f.name in ("n_respondents",):
                    kwargs[f.name] = sec.getint(f.name)
                elif f.name in ("peer_slopes", "peer_bins"):
                    kwargs[f.name] = _floats(sec.get(f.name))
                else:
                    kwargs[f.name] = sec.getfloat(f.name)
            s.survey = SurveyConfig(**kwargs)
        if "estimation" in cp:
            sec = cp["estimation"]
            s.estimation = EstimationSection(
                treatment=sec.get("treatment", s.estimation.treatment),
                interact_radio=_strings(sec.get("interact_radio", ",".join(s.estimation.interact_radio))),
                controls=_strings(sec.get("controls", ",".join(s.estimation.controls))),
                cluster=sec.get("cluster", s.estimation.cluster),
                omit=sec.getint("omit", s.estimation.omit),
                bootstrap_reps=sec.getint("bootstrap_reps", s.estimation.bootstrap_reps),
                ci_level=sec.getfloat("ci_level", s.estimation.ci_level),
                lagged_dependent=sec.getboolean("lagged_dependent", s.estimation.lagged_dependent),
                drop_initial_month=sec.getboolean(
                    "drop_initial_month", s.estimation.drop_initial_month
                ),
            )
        if "montecarlo" in cp:
            sec = cp["montecarlo"]
            s.montecarlo = MonteCarloSection(
                reps=sec.getint("reps", s.montecarlo.reps),
                bootstrap_reps=sec.getint("bootstrap_reps", s.montecarlo.bootstrap_reps),
            )
        if "counterfactual" in cp:
            sec = cp["counterfactual"]
            s.counterfactual = CounterfactualSection(
                coverage_gap_pp=sec.getfloat("coverage_gap_pp", s.counterfactual.coverage_gap_pp),
                method=sec.get("method", s.counterfactual.method),
            )
    except (ValueError, ParameterError) as exc:
        if isinstance(exc, ParameterError):
            raise
        raise ParameterError(f"invalid scenario value: {exc}") from exc
    return s


def load_scenario(path) -> Scenario:
    with open(path) as fh:
        return scenario_from_text(fh.read())


def scenario_hash(s: Scenario) -> str:
    return hashlib.sha256(scenario_to_text(s).encode()).hexdigest()
