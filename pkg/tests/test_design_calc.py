"""Design-toolbox tests: event counts, noncentral chi-square, sample sizes."""

import math

import numpy as np
import pytest
from scipy import integrate, stats

from recwin import errors, presets
from recwin.design_calc import (
    accrual_event_prob,
    fisher_info_mc,
    jfm_power,
    lwr_sim_sample_size,
    ncp_for_power,
    noncentral_chisq_cdf,
    schoenfeld_events,
    schoenfeld_n,
    schoenfeld_pipeline,
    wr_model_based_n,
)


# reference design: 4-year study with 3-year uniform accrual; 30% 1-year
# control event risk; treated-arm rate chosen to give 11% absolute risk
# reduction at 2 years, i.e. HR ~ 0.848
RATE_C = -math.log(0.70)
RATE_T = -0.5 * math.log(1.0 - 0.89 * (1.0 - math.exp(-2.0 * RATE_C)))
HR_REF = RATE_T / RATE_C


class TestSchoenfeld:
    def test_event_counts(self):
        assert schoenfeld_events(HR_REF, power=0.80) == 1156
        assert schoenfeld_events(HR_REF, power=0.90) == 1548

    def test_null_hr_rejected(self):
        with pytest.raises(errors.NullHR):
            schoenfeld_events(1.0)
        with pytest.raises(errors.InvalidParams):
            schoenfeld_events(-0.5)

    def test_accrual_event_prob_matches_quad(self):
        # oracle: average P(T < end - entry) over uniform entry times
        rate, accrual, end = 0.17, 2.0, 5.0
        val, _ = integrate.quad(
            lambda e: 1.0 - math.exp(-rate * (end - e)), 0.0, accrual
        )
        assert accrual_event_prob(rate, accrual, end) == pytest.approx(
            val / accrual, abs=1e-12
        )

    def test_pipeline_reference_design(self):
        r80 = schoenfeld_pipeline(RATE_C, HR_REF, accrual=3.0, end=4.0, power=0.80)
        r90 = schoenfeld_pipeline(RATE_C, HR_REF, accrual=3.0, end=4.0, power=0.90)
        assert (r80.events, r80.n) == (1156, 2132)
        assert (r90.events, r90.n) == (1548, 2856)
        assert r80.event_prob_control == pytest.approx(0.5702, abs=5e-4)
        assert 0.540 <= r80.event_prob_mean <= 0.545
        assert r80.n % 2 == 0

    def test_inflation(self):
        assert schoenfeld_n(100, 0.5, inflation=0.10) == 220
        with pytest.raises(errors.InvalidParams):
            schoenfeld_n(100, 0.0)


class TestNoncentralChiSquare:
    def test_cdf_matches_scipy(self):
        for df in (1, 2, 5):
            for ncp in (0.0, 0.5, 3.0, 12.0, 40.0):
                for x in (0.1, 1.0, 4.0, 15.0, 60.0):
                    assert noncentral_chisq_cdf(x, df, ncp) == pytest.approx(
                        float(stats.ncx2.cdf(x, df, ncp)) if ncp > 0
                        else float(stats.chi2.cdf(x, df)),
                        abs=1e-10,
                    )

    def test_ncp_reference_values(self):
        assert ncp_for_power(1, 0.05, 0.80) == pytest.approx(7.8489, abs=1e-3)
        assert ncp_for_power(1, 0.05, 0.90) == pytest.approx(10.5074, abs=1e-3)

    def test_ncp_inverts_cdf(self):
        for df, power in ((1, 0.8), (2, 0.85), (3, 0.9)):
            mu = ncp_for_power(df, 0.05, power)
            crit = float(stats.chi2.ppf(0.95, df))
            assert 1.0 - noncentral_chisq_cdf(crit, df, mu) == pytest.approx(
                power, abs=1e-7
            )

    def test_ncp_monotone_in_power(self):
        vals = [ncp_for_power(1, 0.05, p) for p in (0.5, 0.7, 0.8, 0.9, 0.95)]
        assert vals == sorted(vals)

    def test_bad_inputs_rejected(self):
        with pytest.raises(errors.InvalidParams):
            noncentral_chisq_cdf(-1.0, 1, 1.0)
        with pytest.raises(errors.InvalidParams):
            ncp_for_power(1, 0.0, 0.8)


class TestWRModelBased:
    def test_power_rescaling(self):
        # raising target power from 80% to 90% multiplies n by the ratio of
        # the squared z-sums: 1272 -> 1702 in the reference design
        zeta0, delta0, xi = 1.162, (-0.357, -0.223), (1.0, 1.0)
        n80 = wr_model_based_n(zeta0, delta0, xi, power=0.80)
        n90 = wr_model_based_n(zeta0, delta0, xi, power=0.90)
        ratio = ((stats.norm.ppf(0.975) + stats.norm.ppf(0.90)) ** 2) / (
            (stats.norm.ppf(0.975) + stats.norm.ppf(0.80)) ** 2
        )
        assert n90 == pytest.approx(n80 * ratio, abs=2)
        assert n80 % 2 == 0 and n90 % 2 == 0

    def test_null_effect_rejected(self):
        with pytest.raises(errors.NullEffect):
            wr_model_based_n(1.0, (0.3, -0.3), (1.0, 1.0))


@pytest.fixture(scope="module")
def planning():
    return presets.hf_planning(increasing_hazards=False, n_per_dataset=200)


class TestFisherInfo:
    def test_info_symmetric_psd(self, planning):
        info, names = fisher_info_mc(
            planning.scenario, planning.jfm_spec, planning.true_params,
            n_datasets=20, seed=5,
        )
        np.testing.assert_allclose(info, info.T, atol=1e-10)
        eigs = np.linalg.eigvalsh(info)
        assert eigs.min() > 0
        assert len(names) == len(planning.true_params)

    def test_power_monotone_in_n(self, planning):
        info, _ = fisher_info_mc(
            planning.scenario, planning.jfm_spec, planning.true_params,
            n_datasets=20, seed=5,
        )
        pws = [
            jfm_power(n, info, planning.true_params, planning.contrast)
            for n in (200, 500, 1000, 2000)
        ]
        assert pws == sorted(pws)
        assert jfm_power(0, info, planning.true_params, planning.contrast) == pytest.approx(
            0.05, abs=1e-9
        )


class TestLWRSimSearch:
    def test_tiny_grid_smoke(self):
        spec = presets.lwr_design_scenario(n_subjects=300)
        res = lwr_sim_sample_size(spec, grid=[2000], n_sim=100, seed=4)
        assert res.n == 2000
        assert 0.0 <= res.type_i[0] <= 0.12
        assert res.power[0] >= 0.80
        assert res.mc_half_width == pytest.approx(
            1.96 * math.sqrt(0.8 * 0.2 / 100), abs=1e-12
        )

    def test_no_feasible_n(self):
        spec = presets.lwr_design_scenario(n_subjects=300)
        with pytest.raises(errors.NoFeasibleN):
            lwr_sim_sample_size(spec, grid=[20], n_sim=100, seed=1)

    def test_guards(self):
        spec = presets.lwr_design_scenario()
        with pytest.raises(errors.InvalidParams):
            lwr_sim_sample_size(spec, grid=[], n_sim=100)
        with pytest.raises(errors.InvalidParams):
            lwr_sim_sample_size(spec, grid=[100], n_sim=10)
