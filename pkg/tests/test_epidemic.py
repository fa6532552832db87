import numpy as np
import pandas as pd
import pytest

from conftest import flat_coverage, make_grid, make_regions
from coorad_lab.epidemic import (
    PANEL_COLUMNS,
    CampaignTimeline,
    EpidemicConfig,
    implied_event_path,
    read_panel_csv,
    simulate_panel,
    validate_panel,
    write_panel_csv,
)
from coorad_lab.errors import ParameterError
from coorad_lab.game import GameParams


def two_region_setup(cov0=0.62, cov1=0.0, populations=None):
    grid = make_grid(8, 8)
    coverage = {0: flat_coverage(cov0), 1: flat_coverage(cov1)}
    return make_regions(grid, n_split=2, coverage=coverage,
                        populations=populations or [50_000_000, 50_000_000])


TL = CampaignTimeline(official_launch=5, effective_adoption=8, horizon=20)


class TestTimelineAndConfig:
    def test_ordering_enforced(self):
        with pytest.raises(ParameterError):
            CampaignTimeline(official_launch=8, effective_adoption=5, horizon=20)
        with pytest.raises(ParameterError):
            CampaignTimeline(official_launch=2, effective_adoption=25, horizon=20)

    def test_config_validation(self):
        with pytest.raises(ParameterError):
            EpidemicConfig(rho=1.2)
        with pytest.raises(ParameterError):
            EpidemicConfig(noise_sd=-0.1)
        with pytest.raises(ParameterError):
            EpidemicConfig(log_offset=0.0)
        with pytest.raises(ParameterError):
            EpidemicConfig(treatment_col="cov_tv")
        with pytest.raises(ParameterError):
            EpidemicConfig(pathway="structural")  # needs game primitives


class TestSimulatePanel:
    def test_no_treatment_no_noise_identical_trajectories(self):
        regions = two_region_setup(cov0=0.9, cov1=0.0)
        config = EpidemicConfig(rho=0.3, beta0=2.0, beta1_path=(), noise_sd=0.0, seed_cases=0)
        panel = simulate_panel(regions, TL, config, seed=1)
        a = panel[panel.subpref_id == 0].sort_values("month")
        b = panel[panel.subpref_id == 1].sort_values("month")
        assert np.array_equal(a["cases"].values, b["cases"].values)
        assert np.allclose(a["log_outcome"].values, b["log_outcome"].values)

    def test_pure_doubling_until_rounding(self):
        grid = make_grid(8, 8)
        regions = make_regions(grid, n_split=1, populations=[100_000],
                               coverage={0: flat_coverage(0.0)})
        config = EpidemicConfig(rho=1.0, beta0=np.log(2.0), beta1_path=(),
                                noise_sd=0.0, seed_cases=4)
        panel = simulate_panel(regions, CampaignTimeline(1, 2, 8), config, seed=1)
        cases = panel.sort_values("month")["cases"].tolist()
        assert cases[0] == 4
        for t in range(1, 6):
            assert cases[t] == 2 * cases[t - 1]

    def test_two_region_analytic_shift(self):
        # With no persistence and no noise, a -1.5 per-unit-share effect at
        # 0.62 coverage shifts the log outcome by -0.93 against the
        # zero-coverage twin (populations large so count rounding is ~1e-4).
        regions = two_region_setup(cov0=0.62, cov1=0.0)
        path = (0.0,) * 7 + (-1.5, -1.5, -1.5)
        config = EpidemicConfig(rho=0.0, beta0=3.0, beta1_path=path,
                                noise_sd=0.0, seed_cases=0)
        panel = simulate_panel(regions, TL, config, seed=3)
        month = 5 + 7  # event month 7
        treated = panel[(panel.subpref_id == 0) & (panel.month == month)]["log_outcome"].iloc[0]
        control = panel[(panel.subpref_id == 1) & (panel.month == month)]["log_outcome"].iloc[0]
        assert treated - control == pytest.approx(-1.5 * 0.62, abs=1e-3)
        assert treated - control == pytest.approx(-0.93, abs=1e-3)

    def test_pre_launch_months_unaffected_by_coverage(self):
        regions = two_region_setup(cov0=0.9, cov1=0.0)
        config = EpidemicConfig(rho=0.0, beta0=3.0, beta1_path=(-2.0,), noise_sd=0.0, seed_cases=0)
        panel = simulate_panel(regions, TL, config, seed=3)
        pre = panel[panel.month.between(1, 4)]
        for m, grp in pre.groupby("month"):
            assert grp["log_outcome"].nunique() == 1

    def test_determinism_and_common_random_numbers(self):
        regions = two_region_setup()
        config = EpidemicConfig(rho=0.2, beta0=2.5, beta1_path=(-1.0,), noise_sd=0.4)
        a = simulate_panel(regions, TL, config, seed=11)
        b = simulate_panel(regions, TL, config, seed=11)
        pd.testing.assert_frame_equal(a, b)
        c = simulate_panel(regions, TL, config, seed=12)
        assert not a["cases"].equals(c["cases"])

    def test_monotone_harm_reduction_under_common_noise(self):
        regions = two_region_setup(cov0=0.8, cov1=0.3)
        mild = EpidemicConfig(rho=0.3, beta0=2.5, beta1_path=(0.0, -0.5, -0.5),
                              noise_sd=0.4, seed_cases=5)
        strong = EpidemicConfig(rho=0.3, beta0=2.5, beta1_path=(0.0, -1.5, -1.5),
                                noise_sd=0.4, seed_cases=5)
        a = simulate_panel(regions, TL, mild, seed=21)
        b = simulate_panel(regions, TL, strong, seed=21)
        assert (b["cases"] <= a["cases"]).all()

    def test_missing_coverage_rejected(self):
        grid = make_grid(8, 8)
        regions = make_regions(grid, n_split=2)  # no coverage attached
        with pytest.raises(ParameterError):
            simulate_panel(regions, TL, EpidemicConfig(), seed=1)

    def test_month_effects_length_checked(self):
        regions = two_region_setup()
        config = EpidemicConfig(month_effects=(0.0,) * 5)
        with pytest.raises(ParameterError):
            simulate_panel(regions, TL, config, seed=1)


class TestPanelInvariants:
    def test_columns_exact(self):
        regions = two_region_setup()
        panel = simulate_panel(regions, TL, EpidemicConfig(beta0=1.0, rho=0.0), seed=2)
        assert list(panel.columns) == PANEL_COLUMNS

    def test_log_outcome_recomputes_from_cases(self):
        regions = two_region_setup(populations=[40_000, 70_000])
        config = EpidemicConfig(rho=0.4, beta0=2.0, noise_sd=0.5, seed_cases=3)
        panel = simulate_panel(regions, TL, config, seed=5)
        validate_panel(panel, config)
        recomputed = np.log(panel["cases"] * 1e5 / panel["population"] + 0.01)
        assert np.allclose(recomputed, panel["log_outcome"], atol=1e-12, rtol=0)

    def test_cases_nonnegative_integers(self):
        regions = two_region_setup()
        panel = simulate_panel(regions, TL, EpidemicConfig(beta0=1.5, noise_sd=1.0), seed=9)
        assert (panel["cases"] >= 0).all()
        assert panel["cases"].dtype.kind == "i"

    def test_csv_roundtrip(self, tmp_path):
        regions = two_region_setup()
        panel = simulate_panel(regions, TL, EpidemicConfig(beta0=2.0, rho=0.1), seed=4)
        path = tmp_path / "panel.csv"
        write_panel_csv(panel, path)
        back = read_panel_csv(path)
        assert list(back.columns) == PANEL_COLUMNS
        assert np.array_equal(back["cases"].values, panel["cases"].values)
        with open(path) as fh:
            assert fh.readline().strip() == ",".join(PANEL_COLUMNS)


class TestOutcomeTransform:
    def test_count_plus_one_variant(self):
        regions = two_region_setup(populations=[40_000, 70_000])
        config = EpidemicConfig(rho=0.2, beta0=2.0, noise_sd=0.4, seed_cases=3,
                                outcome_transform="count_plus_one")
        panel = simulate_panel(regions, TL, config, seed=5)
        assert np.allclose(panel["log_outcome"], np.log(panel["cases"] + 1.0),
                           atol=1e-12, rtol=0)
        validate_panel(panel, config)
        # the same seeds give the same case counts under either transform
        base = simulate_panel(regions, TL, EpidemicConfig(rho=0.2, beta0=2.0,
                                                          noise_sd=0.4, seed_cases=3), seed=5)
        assert np.array_equal(panel["cases"], base["cases"])

    def test_unknown_transform_rejected(self):
        with pytest.raises(ParameterError):
            EpidemicConfig(outcome_transform="sqrt")


class TestImpliedPath:
    def test_no_persistence_returns_injected_path(self):
        # beyond the path the injection is zero, matching the simulator
        config = EpidemicConfig(rho=0.0, beta1_path=(0.0, -1.0, -2.0))
        assert np.allclose(implied_event_path(config, 5), [0.0, -1.0, -2.0, 0.0, 0.0])

    def test_persistence_convolves(self):
        config = EpidemicConfig(rho=0.5, beta1_path=(-1.0, -1.0, -1.0, -1.0))
        # a constant injection accumulates geometrically under persistence
        path = implied_event_path(config, 4)
        assert np.allclose(path, [-1.0, -1.5, -1.75, -1.875])

    def test_single_shock_decays(self):
        config = EpidemicConfig(rho=0.5, beta1_path=(-1.0,))
        assert np.allclose(implied_event_path(config, 3), [-1.0, -0.5, -0.25])


class TestStructuralPathway:
    def test_noiseless_structural_equals_linear(self):
        regions = two_region_setup(cov0=0.62, cov1=0.31)
        game = GameParams(0.5, 1.0, (1e12, 1e12), 0.5)  # effectively noiseless signals
        path = (0.0, -1.2, -1.2)
        linear = EpidemicConfig(rho=0.0, beta0=3.0, beta1_path=path, noise_sd=0.0, seed_cases=0)
        structural = EpidemicConfig(rho=0.0, beta0=3.0, beta1_path=path, noise_sd=0.0,
                                    seed_cases=0, pathway="structural", game=game)
        a = simulate_panel(regions, TL, linear, seed=6)
        b = simulate_panel(regions, TL, structural, seed=6)
        assert np.allclose(a["log_outcome"], b["log_outcome"], atol=1e-5)

    def test_noisy_structural_centers_on_linear(self):
        regions = two_region_setup(cov0=0.62, cov1=0.31)
        game = GameParams(0.5, 1.0, (4.0, 1.0), 0.5)
        path = (0.0, -1.2, -1.2, -1.2, -1.2)
        linear = EpidemicConfig(rho=0.0, beta0=3.0, beta1_path=path, noise_sd=0.0, seed_cases=0)
        structural = EpidemicConfig(rho=0.0, beta0=3.0, beta1_path=path, noise_sd=0.0,
                                    seed_cases=0, pathway="structural", game=game)
        a = simulate_panel(regions, TL, linear, seed=6)
        diffs = []
        for seed in range(30):
            b = simulate_panel(regions, TL, structural, seed=seed)
            diffs.append((b["log_outcome"] - a["log_outcome"]).mean())
        assert abs(np.mean(diffs)) < 0.05
