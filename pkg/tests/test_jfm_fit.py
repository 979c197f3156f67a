"""Joint frailty model tests: integral oracles, gradient checks, fitting."""

import math

import numpy as np
import pytest
from scipy import integrate

from recwin import errors, presets
from recwin.jfm_fit import (
    JFMModel,
    JFMSpec,
    contrast_selecting,
    fit_jfm,
    log_frailty_integral,
    marginal_loglik,
    wald_joint,
    wald_univariate,
)
from recwin.sim_engine import simulate_dataset


def quad_oracle(s, a, b, alpha):
    val, _ = integrate.quad(
        lambda w: w**s * math.exp(-a * w - b * w**alpha),
        0.0,
        np.inf,
        limit=400,
    )
    return math.log(val)


class TestFrailtyIntegral:
    def test_alpha_one_closed_form_matches_quadrature(self):
        rng = np.random.default_rng(8)
        s = rng.uniform(0.0, 12.0, 60)
        a = rng.uniform(0.2, 6.0, 60)
        b = rng.uniform(0.0, 4.0, 60)
        exact = log_frailty_integral(s, a, b, alpha=1.0)
        quad = log_frailty_integral(s, a, b, alpha=1.0, force_quadrature=True)
        np.testing.assert_allclose(quad, exact, atol=1e-8, rtol=1e-8)

    @pytest.mark.parametrize("alpha", [1.3, 0.7, 2.0])
    def test_against_scipy_quad(self, alpha):
        rng = np.random.default_rng(4)
        for _ in range(25):
            s = rng.uniform(0.0, 8.0)
            a = rng.uniform(0.3, 4.0)
            b = rng.uniform(0.05, 3.0)
            got = float(log_frailty_integral(np.array([s]), a, b, alpha=alpha)[0])
            assert got == pytest.approx(quad_oracle(s, a, b, alpha), abs=1e-6)

    def test_nonpositive_alpha_rejected(self):
        with pytest.raises(errors.NonFiniteLikelihood):
            log_frailty_integral(np.array([1.0]), 1.0, 1.0, alpha=0.0)
        with pytest.raises(errors.NonFiniteLikelihood):
            log_frailty_integral(np.array([1.0]), 1.0, 1.0, alpha=-0.5)


@pytest.fixture(scope="module")
def data400():
    return simulate_dataset(presets.scenario(1, n_subjects=400), seed=3)


@pytest.fixture(scope="module")
def spec():
    return presets.benchmark_jfm_spec()


class TestLikelihood:
    def test_theta_limit_matches_poisson_survival_likelihood(self, data400, spec):
        # as theta -> 0 the frailty degenerates at 1 and the marginal
        # likelihood factorizes into independent recurrent/terminal parts
        model = JFMModel(data400, spec)
        x = model.initial_values()
        i_theta = model.param_names.index("theta")
        x[i_theta] = 1e-7

        # oracle: direct Poisson-process + survival formula with u = 1
        from recwin.sim_engine import HazardSpec

        sl = model._slices
        beta_r = x[sl["beta_r"]]
        beta_d = x[sl["beta_d"]]
        rec_h = HazardSpec(family="weibull", shape=x[sl["base_r"]][0], scale=x[sl["base_r"]][1])
        death_h = HazardSpec(family="weibull", shape=x[sl["base_d"]][0], scale=x[sl["base_d"]][1])
        total = 0.0
        for i, subj in enumerate(data400.subjects):
            eta_r = float(model.z_rec[i] @ beta_r)
            eta_d = float(model.z_death[i] @ beta_d)
            tstar = subj.follow_up
            for t in subj.recurrent_times:
                total += float(rec_h.log_hazard(np.array([t]))[0]) + eta_r
            total -= float(rec_h.cum_hazard(np.array([tstar]))[0]) * math.exp(eta_r)
            if subj.died:
                total += float(death_h.log_hazard(np.array([tstar]))[0]) + eta_d
            total -= float(death_h.cum_hazard(np.array([tstar]))[0]) * math.exp(eta_d)
        # residual discrepancy is O(theta) per subject
        assert model.loglik(x) == pytest.approx(total, abs=1e-3)

    def test_gradient_matches_finite_difference(self, data400, spec):
        model = JFMModel(data400, spec)
        x = model.initial_values()
        x[: len(spec.recurrent_covariates) + len(spec.terminal_covariates)] = [-0.2, 0.1, -0.1]
        g = model.loglik_grad(x)
        # independent check with a different (smaller) step
        g2 = model.loglik_grad(x, rel_step=1e-5)
        np.testing.assert_allclose(g, g2, rtol=1e-4, atol=1e-4)
        assert np.all(np.isfinite(g))

    def test_loglik_node_stability(self, data400, spec):
        # alpha estimated forces quadrature; 32 vs 50 nodes must agree
        qspec = JFMSpec(
            recurrent_covariates=spec.recurrent_covariates,
            terminal_covariates=spec.terminal_covariates,
            alpha=None,
        )
        model = JFMModel(data400, qspec)
        x = model.initial_values()
        x[-1] = 0.9  # alpha != 1 so the quadrature path is exercised
        l50 = model.loglik(x, n_nodes=50)
        l32 = model.loglik(x, n_nodes=32)
        assert abs(l50 - l32) / model.n < 1e-6

    def test_subject_permutation_invariance(self, data400, spec):
        from recwin.core_data import Dataset

        rng = np.random.default_rng(0)
        perm = rng.permutation(len(data400.subjects))
        shuffled = Dataset(tuple(data400.subjects[i] for i in perm))
        x = JFMModel(data400, spec).initial_values()
        assert marginal_loglik(data400, spec, x) == pytest.approx(
            marginal_loglik(shuffled, spec, x), abs=1e-8
        )


class TestFit:
    def test_scenario1_single_fit_recovery(self, data400, spec):
        fit = fit_jfm(data400, spec)
        assert fit.converged and fit.failure is None
        # truth: beta_R1 = log(0.7), beta_D = log(0.8), theta = 0.5
        assert fit["rec_trt"] == pytest.approx(math.log(0.7), abs=0.25)
        assert fit["death_trt"] == pytest.approx(math.log(0.8), abs=0.35)
        assert 0.2 < fit["theta"] < 0.9
        assert all(fit.se(n) > 0 for n in fit.param_names)

    def test_mle_is_a_maximum(self, data400, spec):
        fit = fit_jfm(data400, spec)
        model = JFMModel(data400, spec)
        at_mle = model.loglik(fit.estimates)
        for name in ("rec_trt", "death_trt", "theta"):
            j = fit.param_names.index(name)
            for sign in (-1.0, 1.0):
                x = fit.estimates.copy()
                x[j] += sign * 3.0 * fit.se(name)
                if name == "theta" and x[j] <= 0:
                    continue
                assert model.loglik(x) < at_mle

    def test_ci95_and_to_dict(self, data400, spec):
        fit = fit_jfm(data400, spec)
        lo, hi = fit.ci95("rec_trt")
        assert lo < fit["rec_trt"] < hi
        d = fit.to_dict()
        assert d["converged"] is True
        assert set(d["estimates"]) == set(fit.param_names)

    def test_no_events_rejected(self, spec):
        from recwin.core_data import Arm, Dataset, SubjectHistory

        subs = tuple(
            SubjectHistory(
                str(i), Arm.EXPERIMENTAL if i % 2 else Arm.CONTROL, (),
                censor_time=1.0, covariates={"z2": 0.0},
            )
            for i in range(10)
        )
        with pytest.raises(errors.InvalidParams):
            fit_jfm(Dataset(subs), spec)


class TestWald:
    def test_univariate_trivia(self, data400, spec):
        fit = fit_jfm(data400, spec)
        w0 = wald_univariate(fit, "rec_trt", null=fit["rec_trt"])
        assert w0.stat == pytest.approx(0.0, abs=1e-12) and w0.p == pytest.approx(1.0)
        w = wald_univariate(fit, "rec_trt", null=fit["rec_trt"] - 1.96 * fit.se("rec_trt"))
        assert w.p == pytest.approx(0.05, abs=2e-3)

    def test_joint_single_coordinate_equals_univariate(self, data400, spec):
        fit = fit_jfm(data400, spec)
        c = contrast_selecting(fit, ["death_trt"])
        wj = wald_joint(fit, c)
        wu = wald_univariate(fit, "death_trt")
        assert wj.stat == pytest.approx(wu.stat, rel=1e-10)
        assert wj.df == 1 and wj.p == pytest.approx(wu.p, rel=1e-10)

    def test_rank_deficient_contrast_rejected(self, data400, spec):
        fit = fit_jfm(data400, spec)
        c = contrast_selecting(fit, ["rec_trt", "rec_trt"])
        with pytest.raises(errors.RankDeficientContrast):
            wald_joint(fit, c)

    def test_joint_treatment_test_has_two_df(self, data400, spec):
        fit = fit_jfm(data400, spec)
        c = contrast_selecting(fit, ["rec_trt", "death_trt"])
        w = wald_joint(fit, c)
        assert w.df == 2 and 0.0 <= w.p <= 1.0
