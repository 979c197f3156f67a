"""Recurrent-event win ratios, gamma-frailty joint models, and trial design.

Core entry points:

* :mod:`recwin.core_data` — subject histories, datasets, CSV I/O.
* :mod:`recwin.win_rules` — pairwise win rules and pair counting.
* :mod:`recwin.wr_inference` — win-ratio estimates with asymptotic SEs.
* :mod:`recwin.jfm_fit` — gamma-frailty joint model estimation and Wald tests.
* :mod:`recwin.sim_engine` — inverse-transform simulator for joint-model data.
* :mod:`recwin.design_calc` — sample-size and power calculators.
* :mod:`recwin.metrics` — replication summaries and large-sample references.
* :mod:`recwin.presets` — benchmark scenarios and planning configurations.
"""

from . import errors
from .core_data import (
    Arm,
    Dataset,
    SubjectHistory,
    export_counting_process,
    export_wide_csv,
    load_counting_process_csv,
    load_wide_csv,
)
from .design_calc import (
    LWRSampleSize,
    SchoenfeldResult,
    accrual_event_prob,
    fisher_info_mc,
    jfm_power,
    jfm_sample_size,
    lwr_sim_sample_size,
    ncp_for_power,
    noncentral_chisq_cdf,
    schoenfeld_events,
    schoenfeld_n,
    schoenfeld_pipeline,
    wr_model_based_n,
)
from .jfm_fit import (
    JFMFit,
    JFMModel,
    JFMSpec,
    contrast_selecting,
    fit_jfm,
    log_frailty_integral,
    marginal_loglik,
    wald_joint,
    wald_univariate,
)
from .metrics import (
    PerformanceRow,
    asymptotic_true_wr,
    empirical_power,
    replicate_summary,
    replicate_wr,
    wr_performance,
)
from .sim_engine import (
    TREATMENT,
    CovariateSpec,
    DesignCensoring,
    FixedCensoring,
    HazardSpec,
    ScenarioSpec,
    replicate_seeds,
    simulate_dataset,
    simulate_subject,
)
from .win_rules import PairCounts, WinRule, count_wins, evaluate, shared_horizon
from .wr_inference import WRResult, wald_test, wr_stratified, wr_unstratified

__version__ = "1.0.0"

__all__ = [name for name in dir() if not name.startswith("_")]
