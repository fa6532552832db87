"""coorad-lab: a synthetic laboratory for media-coverage treatments and their estimators.

Terrain synthesis and radio propagation construct coverage-share
treatments; a coordination game maps coverage into behavior; an epidemic
panel and a micro survey are simulated with known injected effects; and
the estimator suite (two-way fixed effects, event studies, cluster
bootstrap, 2SLS) is validated by recovering those effects.
"""

__version__ = "0.1.0"

from .epidemic import CampaignTimeline, EpidemicConfig, implied_event_path, simulate_panel
from .errors import ComputationError, ConvergenceError, CooradError, ParameterError
from .estimators import (
    DiffInDiff,
    EventStudy,
    EventStudyResult,
    FitResult,
    FixedEffectsOLS,
    HeterogeneousEventStudy,
    IVSpec,
    RegressionSpec,
    TwoSLS,
    binned_peer_effects,
    cross_section_ols,
    did,
    event_study,
    event_study_heterogeneous,
    fe_ols,
    two_sls,
)
from .game import (
    EquilibriumWeights,
    GameParams,
    SignalRealization,
    behavior_response,
    equilibrium_action,
    equilibrium_weights,
    expected_average_action,
    fixed_point_oracle,
    private_only_action,
)
from .inference import BootstrapResult, cluster_bootstrap, pretrend_test, with_bootstrap_se
from .metrics import CounterfactualResult, fractionalization, prevented_cases
from .propagation import (
    CoverageShares,
    PropagationParams,
    Transmitter,
    aggregate_coverage,
    coverage_share,
    field_strength,
    field_strength_map,
)
from .regions import RegionSet, SubPrefecture, aggregate_language_shares, build_regions
from .scenario import Scenario, default_scenario, load_scenario, scenario_hash, scenario_to_text
from .survey import SurveyConfig, simulate_survey
from .terrain import ElevationGrid, read_grid, synth_terrain, write_grid
