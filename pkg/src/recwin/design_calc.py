"""Sample-size and power calculators.

Four routes to a trial size:

* Schoenfeld event counts for a terminal endpoint, converted to subjects
  with an event probability averaged over uniform staggered accrual.
* A model-based formula for the standard win ratio given a null variance
  and effect-projection inputs.
* A noncentral chi-square route for Wald tests in the gamma-frailty joint
  model, with the per-subject Fisher information estimated by Monte Carlo.
* A fully simulation-based grid search for the last-event-assisted win
  ratio.

The noncentral chi-square CDF is computed from scratch via the Poisson
mixture series so the power machinery has no distributional dependencies
beyond the central chi-square.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import optimize, stats

from . import errors
from .jfm_fit import JFMModel, JFMSpec
from .sim_engine import ScenarioSpec, replicate_seeds, simulate_dataset
from .win_rules import WinRule
from .wr_inference import wr_unstratified


def _round_up_even(x: float) -> int:
    n = math.ceil(x - 1e-12)
    return n if n % 2 == 0 else n + 1


def _z(p: float) -> float:
    return float(stats.norm.ppf(p))


# ---------------------------------------------------------------------------
# Schoenfeld route
# ---------------------------------------------------------------------------

def schoenfeld_events(
    hr: float, alpha: float = 0.05, power: float = 0.80, allocation: float = 0.5
) -> int:
    """Required event count for a two-sided level-alpha log-rank/Cox test."""
    if hr <= 0:
        raise errors.InvalidParams("hazard ratio must be positive")
    if hr == 1.0:
        raise errors.NullHR("hazard ratio 1 gives a zero effect")
    q = allocation
    d = (_z(1 - alpha / 2) + _z(power)) ** 2 / (math.log(hr) ** 2 * q * (1 - q))
    return math.ceil(d - 1e-9)


def accrual_event_prob(rate: float, accrual: float, end: float) -> float:
    """P(event before administrative censoring) for an exponential event
    time under uniform accrual over [0, accrual] and study end at ``end``."""
    if rate <= 0 or not 0 < accrual < end:
        raise errors.InvalidParams("need rate > 0 and 0 < accrual < end")
    return 1.0 - (math.exp(-rate * (end - accrual)) - math.exp(-rate * end)) / (
        accrual * rate
    )


def schoenfeld_n(events: int, event_prob: float, inflation: float = 0.0) -> int:
    """Subjects needed to observe ``events`` events, inflated for dropout
    and rounded up to the nearest even integer."""
    if not 0 < event_prob <= 1:
        raise errors.InvalidParams("event probability must be in (0, 1]")
    return _round_up_even(math.ceil(events / event_prob - 1e-9) * (1.0 + inflation))


@dataclass(frozen=True)
class SchoenfeldResult:
    hr: float
    events: int
    event_prob_control: float
    event_prob_treated: float
    event_prob_mean: float
    n: int

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def schoenfeld_pipeline(
    rate_control: float,
    hr: float,
    accrual: float,
    end: float,
    alpha: float = 0.05,
    power: float = 0.80,
    allocation: float = 0.5,
    inflation: float = 0.0,
) -> SchoenfeldResult:
    """Full chain: control rate and hazard ratio -> events -> accrual-
    averaged event probability -> total sample size."""
    d = schoenfeld_events(hr, alpha, power, allocation)
    pi_c = accrual_event_prob(rate_control, accrual, end)
    pi_t = accrual_event_prob(rate_control * hr, accrual, end)
    pi_bar = allocation * pi_t + (1 - allocation) * pi_c
    return SchoenfeldResult(
        hr=hr,
        events=d,
        event_prob_control=pi_c,
        event_prob_treated=pi_t,
        event_prob_mean=pi_bar,
        n=schoenfeld_n(d, pi_bar, inflation),
    )


# ---------------------------------------------------------------------------
# noncentral chi-square machinery
# ---------------------------------------------------------------------------

def noncentral_chisq_cdf(x: float, df: int, ncp: float) -> float:
    """CDF of the noncentral chi-square by the Poisson mixture series,
    truncated when the remaining Poisson tail is below 1e-12."""
    if x < 0 or df < 1 or ncp < 0:
        raise errors.InvalidParams("need x >= 0, df >= 1, ncp >= 0")
    if x == 0.0:
        return 0.0
    half = ncp / 2.0
    if half == 0.0:
        return float(stats.chi2.cdf(x, df))
    k = max(0, int(half) - 1)
    log_pk = -half + k * math.log(half) - math.lgamma(k + 1)
    # walk down from the modal Poisson weight, then up, so the dominant
    # terms are accumulated before truncation
    total = 0.0
    lp = log_pk
    for j in range(k, -1, -1):
        w = math.exp(lp)
        total += w * stats.chi2.cdf(x, df + 2 * j)
        if w < 1e-15 * max(total, 1e-300):
            break
        lp += math.log(j / half) if j > 0 else 0.0
    lp = log_pk
    mass = math.exp(log_pk)
    j = k
    while True:
        j += 1
        lp += math.log(half / j)
        w = math.exp(lp)
        total += w * stats.chi2.cdf(x, df + 2 * j)
        mass += w
        if w < 1e-12 * max(total, 1e-300) and j > half:
            break
        if j > k + 100000:
            break
    return min(total, 1.0)


def ncp_for_power(df: int, alpha: float, power: float, tol: float = 1e-8) -> float:
    """Noncentrality making the level-alpha chi-square test reject with
    the given probability."""
    if not (0 < alpha < 1 and 0 < power < 1):
        raise errors.InvalidParams("alpha and power must be in (0, 1)")
    crit = float(stats.chi2.ppf(1 - alpha, df))

    def gap(ncp: float) -> float:
        return (1.0 - noncentral_chisq_cdf(crit, df, ncp)) - power

    lo, hi = 0.0, 1.0
    while gap(hi) < 0:
        hi *= 2.0
        if hi > 1e6:
            raise errors.NumericalError("failed to bracket the noncentrality")
    return float(optimize.brentq(gap, lo, hi, xtol=tol))


# ---------------------------------------------------------------------------
# JFM route: Monte Carlo Fisher information
# ---------------------------------------------------------------------------

def fisher_info_mc(
    scenario: ScenarioSpec,
    jfm_spec: JFMSpec,
    true_params: Sequence[float],
    n_datasets: int,
    seed: int,
    score_step: float = 1e-5,
) -> tuple[np.ndarray, tuple[str, ...]]:
    """Per-subject Fisher information at the planning parameters.

    Simulates ``n_datasets`` trials from the scenario, computes each
    subject's score (central finite differences of the individual
    marginal log-likelihood on the natural scale) and averages the outer
    products over all simulated subjects.
    """
    theta0 = np.asarray(true_params, dtype=np.float64)
    p = theta0.size
    sum_outer = np.zeros((p, p))
    total = 0
    names: Optional[tuple[str, ...]] = None
    for rep_seed in replicate_seeds(seed, n_datasets):
        model = JFMModel(simulate_dataset(scenario, rep_seed), jfm_spec)
        if names is None:
            names = tuple(model.param_names)
            if len(names) != p:
                raise errors.InvalidParams(
                    f"expected {len(names)} planning parameters {names}"
                )
        scores = np.empty((model.n, p))
        for j in range(p):
            h = score_step * max(1.0, abs(theta0[j]))
            xp, xm = theta0.copy(), theta0.copy()
            xp[j] += h
            xm[j] -= h
            scores[:, j] = (
                model.loglik_by_subject(xp) - model.loglik_by_subject(xm)
            ) / (2.0 * h)
        if not np.all(np.isfinite(scores)):
            raise errors.NonFiniteScore("non-finite subject score encountered")
        sum_outer += scores.T @ scores
        total += model.n
    return sum_outer / total, names


@dataclass(frozen=True)
class JFMSampleSize:
    n: int
    n_uninflated: int
    ncp_target: float
    effect_quadratic: float  # (C Omega)' (C I^-1 C')^-1 (C Omega)
    df: int
    n_simulated_subjects: int

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _effect_quadratic(
    info: np.ndarray, omega: np.ndarray, contrast: np.ndarray
) -> tuple[float, int]:
    c = np.atleast_2d(np.asarray(contrast, dtype=np.float64))
    if np.linalg.matrix_rank(c) < c.shape[0]:
        raise errors.RankDeficientContrast("contrast matrix is rank deficient")
    v = c @ omega
    if not np.any(v):
        raise errors.NullEffect("contrast of the planning parameters is zero")
    inv_info = np.linalg.inv(info)
    mid = c @ inv_info @ c.T
    return float(v @ np.linalg.solve(mid, v)), c.shape[0]


def jfm_sample_size(
    scenario: ScenarioSpec,
    jfm_spec: JFMSpec,
    true_params: Sequence[float],
    contrast: np.ndarray,
    alpha: float = 0.05,
    power: float = 0.80,
    inflation: float = 0.0,
    n_datasets: int = 250,
    seed: int = 0,
) -> JFMSampleSize:
    """Total sample size for a Wald test of ``contrast @ params = 0`` in
    the joint frailty model, via the noncentral chi-square approximation
    with a Monte Carlo Fisher information."""
    info, _ = fisher_info_mc(scenario, jfm_spec, true_params, n_datasets, seed)
    quad, df = _effect_quadratic(info, np.asarray(true_params, float), contrast)
    mu = ncp_for_power(df, alpha, power)
    n_raw = mu / quad
    return JFMSampleSize(
        n=_round_up_even(n_raw * (1.0 + inflation)),
        n_uninflated=math.ceil(n_raw - 1e-9),
        ncp_target=mu,
        effect_quadratic=quad,
        df=df,
        n_simulated_subjects=n_datasets * scenario.n_subjects,
    )


def jfm_power(
    n: int,
    info: np.ndarray,
    true_params: Sequence[float],
    contrast: np.ndarray,
    alpha: float = 0.05,
) -> float:
    """Power of the level-alpha Wald test at total sample size n, given a
    per-subject information matrix."""
    if n < 0:
        raise errors.InvalidParams("n must be nonnegative")
    quad, df = _effect_quadratic(info, np.asarray(true_params, float), contrast)
    crit = float(stats.chi2.ppf(1 - alpha, df))
    return 1.0 - noncentral_chisq_cdf(crit, df, n * quad)


# ---------------------------------------------------------------------------
# model-based standard win ratio
# ---------------------------------------------------------------------------

def wr_model_based_n(
    zeta0: float,
    delta0: Sequence[float],
    xi: Sequence[float],
    allocation: float = 0.5,
    alpha: float = 0.05,
    power: float = 0.80,
) -> int:
    """Sample size for the standard win ratio from a null standard
    deviation ``zeta0`` and a projected log-win-ratio ``delta0' xi``."""
    effect = float(np.dot(delta0, xi))
    if effect == 0.0:
        raise errors.NullEffect("projected log win ratio is zero")
    q = allocation
    n = zeta0**2 * (_z(1 - alpha / 2) + _z(power)) ** 2 / (q * (1 - q) * effect**2)
    return _round_up_even(n)


# ---------------------------------------------------------------------------
# simulation-based LWR sample size
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LWRSampleSize:
    n: int
    grid: tuple[int, ...]
    power: tuple[float, ...]
    type_i: tuple[float, ...]
    n_sim: int
    alpha: float
    target_power: float
    mc_half_width: float  # 1.96 * binomial SE of a power estimate at n_sim

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _rejection_rate(
    scenario: ScenarioSpec, n: int, n_sim: int, alpha: float, seed: int
) -> float:
    spec = scenario.with_n(n)
    reject = 0
    for rep_seed in replicate_seeds(seed, n_sim):
        data = simulate_dataset(spec, rep_seed)
        try:
            res = wr_unstratified(data, WinRule.LWR)
        except errors.DegenerateWR:
            continue  # undefined statistic never rejects
        if res.se_log_wr > 0 and abs(res.log_wr / res.se_log_wr) > _z(1 - alpha / 2):
            reject += 1
    return reject / n_sim


def lwr_sim_sample_size(
    scenario_alt: ScenarioSpec,
    grid: Sequence[int],
    n_sim: int = 1000,
    alpha: float = 0.05,
    target_power: float = 0.80,
    seed: int = 0,
    scenario_null: Optional[ScenarioSpec] = None,
) -> LWRSampleSize:
    """Grid search for the smallest total n whose simulated last-event-
    assisted win-ratio test reaches the target power while the simulated
    type-I error stays at or below alpha."""
    if not grid:
        raise errors.InvalidParams("empty sample-size grid")
    if n_sim < 100:
        raise errors.InvalidParams("need n_sim >= 100 for stable rates")
    null = scenario_null if scenario_null is not None else scenario_alt.under_null()
    grid = tuple(sorted(int(n) for n in grid))
    powers, type_is = [], []
    chosen: Optional[int] = None
    for i, n in enumerate(grid):
        pw = _rejection_rate(scenario_alt, n, n_sim, alpha, seed + 2 * i)
        t1 = _rejection_rate(null, n, n_sim, alpha, seed + 2 * i + 1)
        powers.append(pw)
        type_is.append(t1)
        if chosen is None and pw >= target_power and t1 <= alpha:
            chosen = n
    if chosen is None:
        raise errors.NoFeasibleN(
            f"no n in {grid} reached power {target_power} with type I <= {alpha}"
        )
    half_width = 1.96 * math.sqrt(target_power * (1 - target_power) / n_sim)
    return LWRSampleSize(
        n=chosen,
        grid=grid,
        power=tuple(powers),
        type_i=tuple(type_is),
        n_sim=n_sim,
        alpha=alpha,
        target_power=target_power,
        mc_half_width=half_width,
    )
