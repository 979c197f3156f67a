"""Monte Carlo replication harness and operating-characteristic metrics.

Summarises replicate-level simulation output the way simulation studies
report it: absolute/relative bias, empirical vs mean asymptotic standard error,
95% coverage, and rejection rates with Monte Carlo standard errors.  Also
provides a large-sample "asymptotic true win ratio" for a scenario by
analysing a handful of very large simulated trials.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from . import errors
from .sim_engine import ScenarioSpec, replicate_seeds, simulate_dataset
from .win_rules import WinRule, count_wins
from .wr_inference import WRResult, wr_stratified, wr_unstratified


@dataclass(frozen=True)
class PerformanceRow:
    """Operating characteristics of one estimand over K replicates."""

    parameter: str
    true_value: float
    n_replicates: int
    n_fits: int  # replicates that produced an estimate
    n_with_se: int  # of those, how many carried an SE / CI
    mean_estimate: float
    abs_bias: float
    rel_bias_pct: Optional[float]  # None when the truth is exactly zero
    empirical_se: float
    mean_asymptotic_se: Optional[float]
    coverage_pct: Optional[float]  # 95% CI coverage, in percent

    def to_dict(self) -> dict:
        return dict(self.__dict__)


Replicate = tuple[float, Optional[float], Optional[tuple[float, float]]]


def replicate_summary(
    parameter: str,
    replicates: Sequence[Replicate],
    truth: float,
    n_attempted: Optional[int] = None,
) -> PerformanceRow:
    """Aggregate (estimate, asymptotic SE, 95% CI) triples against a known
    truth.  Replicates with a missing SE/CI still enter the bias and
    empirical-SE columns but are excluded from coverage and the mean
    asymptotic SE."""
    if not replicates:
        raise errors.EmptyInput("no replicates to summarise")
    est = np.array([r[0] for r in replicates], dtype=np.float64)
    ses = [r[1] for r in replicates if r[1] is not None]
    cis = [r[2] for r in replicates if r[2] is not None]
    mean = float(est.mean())
    bias = mean - truth
    coverage = (
        100.0 * sum(lo <= truth <= hi for lo, hi in cis) / len(cis) if cis else None
    )
    return PerformanceRow(
        parameter=parameter,
        true_value=truth,
        n_replicates=n_attempted if n_attempted is not None else len(replicates),
        n_fits=len(replicates),
        n_with_se=len(ses),
        mean_estimate=mean,
        abs_bias=bias,
        rel_bias_pct=None if truth == 0 else 100.0 * abs(bias) / abs(truth),
        empirical_se=float(est.std(ddof=1)) if est.size > 1 else math.nan,
        mean_asymptotic_se=float(np.mean(ses)) if ses else None,
        coverage_pct=coverage,
    )


@dataclass(frozen=True)
class PowerEstimate:
    power: float
    mcse: float
    ci95: tuple[float, float]
    n_rejections: int
    n_trials: int

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def empirical_power(p_values: Sequence[float], alpha: float = 0.05) -> PowerEstimate:
    """Rejection rate over replicate p-values, with its binomial Monte
    Carlo standard error and an exact (Clopper-Pearson) 95% interval."""
    p = np.asarray(p_values, dtype=np.float64)
    if p.size == 0:
        raise errors.EmptyInput("no p-values supplied")
    k = int(np.count_nonzero(p < alpha))
    m = p.size
    rate = k / m
    mcse = math.sqrt(rate * (1 - rate) / m)
    lo = 0.0 if k == 0 else float(stats.beta.ppf(0.025, k, m - k + 1))
    hi = 1.0 if k == m else float(stats.beta.ppf(0.975, k + 1, m - k))
    return PowerEstimate(power=rate, mcse=mcse, ci95=(lo, hi), n_rejections=k, n_trials=m)


def replicate_wr(
    scenario: ScenarioSpec,
    rule: WinRule,
    n_replicates: int,
    seed: int,
    stratify_by: Optional[str] = None,
) -> list[Optional[WRResult]]:
    """Win-ratio analysis on each simulated replicate; None where the
    statistic is degenerate (zero wins or zero losses)."""
    out: list[Optional[WRResult]] = []
    for rep_seed in replicate_seeds(seed, n_replicates):
        data = simulate_dataset(scenario, rep_seed)
        try:
            if stratify_by is None:
                out.append(wr_unstratified(data, rule))
            else:
                out.append(wr_stratified(data, rule, stratify_by=stratify_by))
        except errors.DegenerateWR:
            out.append(None)
    return out


def wr_performance(
    scenario: ScenarioSpec,
    rule: WinRule,
    n_replicates: int,
    seed: int,
    true_log_wr: float,
    stratify_by: Optional[str] = None,
) -> PerformanceRow:
    """Bias/coverage summary of the log win-ratio estimator."""
    fits = replicate_wr(scenario, rule, n_replicates, seed, stratify_by)
    rows: list[Replicate] = [
        (f.log_wr, f.se_log_wr, (f.log_wr - 1.96 * f.se_log_wr, f.log_wr + 1.96 * f.se_log_wr))
        for f in fits
        if f is not None
    ]
    return replicate_summary(
        parameter=f"log_wr[{rule.value}]",
        replicates=rows,
        truth=true_log_wr,
        n_attempted=n_replicates,
    )


def asymptotic_true_wr(
    scenario: ScenarioSpec,
    rule: WinRule,
    stratified: bool = False,
    stratify_by: Optional[str] = None,
    n_big: int = 20000,
    n_reps: int = 4,
    seed: int = 97,
) -> float:
    """Large-sample reference win ratio: the mean estimate over ``n_reps``
    simulated trials of ``n_big`` subjects each.  Pair counting streams in
    blocks, so memory stays O(n)."""
    if n_big < 10000:
        raise errors.InvalidParams("n_big below the large-sample regime")
    big = scenario.with_n(n_big)
    values = []
    for rep_seed in replicate_seeds(seed, n_reps):
        data = simulate_dataset(big, rep_seed)
        if stratified:
            pooled, per_stratum = count_wins(
                data, rule, stratified=True, stratify_by=stratify_by
            )
            num = den = 0.0
            for label, counts in per_stratum.items():
                if counts.n_pairs == 0:
                    continue
                sizes = {
                    s: sz for s, sz in data.stratum_sizes(stratify_by).items()
                }
                w = sizes[label] / data.n
                num += w * counts.wins / counts.n_pairs
                den += w * counts.losses / counts.n_pairs
        else:
            counts = count_wins(data, rule)
            num, den = counts.wins, counts.losses
        if num == 0 or den == 0:
            raise errors.DegenerateWR("no wins or no losses in a large-sample replicate")
        values.append(num / den)
    return float(np.mean(values))
