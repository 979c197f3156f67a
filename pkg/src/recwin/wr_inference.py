"""Win-ratio point estimates, U-statistic variances and Wald tests.

The log win ratio is asymptotically normal with variance sigma^2/n where
sigma^2 is assembled from per-subject influence vectors: each treated
subject contributes its mean win/loss indicator over all controls (centred
at the overall fractions) and symmetrically for controls.  The stratified
variant pools stratum fractions with weights n^(s)/n and weighs the
stratum influence blocks by those weights squared.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import stats

from . import errors
from .core_data import Dataset
from .win_rules import PairCounts, PairSums, WinRule, _strata, pair_sums


@dataclass(frozen=True)
class StratumResult:
    label: str
    weight: float
    win_frac: float
    loss_frac: float
    counts: PairCounts


@dataclass(frozen=True)
class WRResult:
    rule: WinRule
    counts: PairCounts
    win_frac: float
    loss_frac: float
    tie_frac: float
    wr: float
    log_wr: float
    se_log_wr: float
    z: float
    p_two_sided: float
    ci95: tuple[float, float]
    n: int
    stratified: bool = False
    per_stratum: Optional[tuple[StratumResult, ...]] = None

    @property
    def se_wr_delta(self) -> float:
        """Delta-method SE on the WR scale (wr * se of log wr)."""
        return self.wr * self.se_log_wr

    def to_dict(self) -> dict:
        d = {
            "rule": self.rule.value,
            "n_pairs": self.counts.n_pairs,
            "wins": self.counts.wins,
            "losses": self.counts.losses,
            "ties": self.counts.ties,
            "win_frac": self.win_frac,
            "loss_frac": self.loss_frac,
            "tie_frac": self.tie_frac,
            "wr": self.wr,
            "log_wr": self.log_wr,
            "se_log_wr": self.se_log_wr,
            "se_wr_delta": self.se_wr_delta,
            "z": self.z,
            "p": self.p_two_sided,
            "ci95": list(self.ci95),
            "stratified": self.stratified,
        }
        if self.per_stratum is not None:
            d["strata"] = [
                {
                    "label": s.label,
                    "weight": s.weight,
                    "win_frac": s.win_frac,
                    "loss_frac": s.loss_frac,
                    "n_pairs": s.counts.n_pairs,
                }
                for s in self.per_stratum
            ]
        return d


def _assemble_result(
    rule: WinRule,
    counts: PairCounts,
    w_hat: float,
    l_hat: float,
    sigma2: float,
    n: int,
    stratified: bool,
    per_stratum=None,
) -> WRResult:
    if counts.wins == 0 or counts.losses == 0:
        raise errors.DegenerateWR(
            f"wins={counts.wins}, losses={counts.losses}: win ratio undefined ({counts})"
        )
    wr = w_hat / l_hat
    log_wr = math.log(wr)
    se = math.sqrt(max(sigma2, 0.0) / n)
    z = log_wr / se if se > 0 else math.inf * np.sign(log_wr)
    p = 2.0 * stats.norm.sf(abs(z))
    ci = (math.exp(log_wr - 1.96 * se), math.exp(log_wr + 1.96 * se))
    return WRResult(
        rule=rule,
        counts=counts,
        win_frac=w_hat,
        loss_frac=l_hat,
        tie_frac=1.0 - w_hat - l_hat,
        wr=wr,
        log_wr=log_wr,
        se_log_wr=se,
        z=z,
        p_two_sided=p,
        ci95=ci,
        n=n,
        stratified=stratified,
        per_stratum=per_stratum,
    )


def _influence_sigma(
    sums: PairSums, w_hat: float, l_hat: float, n: int
) -> np.ndarray:
    """2x2 covariance of sqrt(n)*(what, lhat) from influence vectors."""
    n_e, n_c = sums.n_treated, sums.n_control
    u_t = np.stack([sums.row_wins / n_c - w_hat, sums.row_losses / n_c - l_hat], axis=1)
    u_c = np.stack([sums.col_wins / n_e - w_hat, sums.col_losses / n_e - l_hat], axis=1)
    return (n / n_e**2) * (u_t.T @ u_t) + (n / n_c**2) * (u_c.T @ u_c)


def _sigma2_from(cov: np.ndarray, w_hat: float, l_hat: float) -> float:
    return (
        cov[0, 0] / w_hat**2 - 2.0 * cov[0, 1] / (w_hat * l_hat) + cov[1, 1] / l_hat**2
    )


def wr_unstratified(dataset: Dataset, rule: WinRule) -> WRResult:
    """Unmatched win ratio over all n_E * n_C pairs with asymptotic SE."""
    exp, ctl = dataset.by_arm()
    if not exp or not ctl:
        raise errors.EmptyArm("both arms must be non-empty")
    sums = pair_sums(rule, exp, ctl)
    counts = sums.counts
    w_hat = counts.wins / counts.n_pairs
    l_hat = counts.losses / counts.n_pairs
    if counts.wins == 0 or counts.losses == 0:
        raise errors.DegenerateWR(
            f"wins={counts.wins}, losses={counts.losses}: win ratio undefined ({counts})"
        )
    cov = _influence_sigma(sums, w_hat, l_hat, dataset.n)
    sigma2 = _sigma2_from(cov, w_hat, l_hat)
    return _assemble_result(rule, counts, w_hat, l_hat, sigma2, dataset.n, False)


def wr_stratified(
    dataset: Dataset, rule: WinRule, stratify_by: Optional[str] = None
) -> WRResult:
    """Stratified win ratio: within-stratum pairs, size-weighted pooling.

    ``stratify_by`` names a baseline covariate; None uses the subjects'
    stratum labels.  Single-arm strata contribute zero pairs but their
    sizes still enter n and the weights.
    """
    n = dataset.n
    strata = _strata(dataset, stratify_by)
    results = []
    num = den = 0.0
    cov = np.zeros((2, 2))
    pooled = PairCounts(0, 0, 0, 0)
    stratum_sums = []
    any_pairs = False
    for label, group in sorted(strata.items()):
        exp = [s for s in group if s.arm.value == 1]
        ctl = [s for s in group if s.arm.value == 0]
        weight = len(group) / n
        if not exp or not ctl:
            warnings.warn(f"stratum {label!r} has a single arm: contributes zero pairs")
            results.append(StratumResult(label, weight, 0.0, 0.0, PairCounts(0, 0, 0, 0)))
            continue
        any_pairs = True
        sums = pair_sums(rule, exp, ctl)
        counts = sums.counts
        w_s = counts.wins / counts.n_pairs
        l_s = counts.losses / counts.n_pairs
        num += weight * w_s
        den += weight * l_s
        pooled = pooled + counts
        results.append(StratumResult(label, weight, w_s, l_s, counts))
        stratum_sums.append((weight, sums, w_s, l_s))
    if not any_pairs:
        raise errors.AllStrataSingleArm("no stratum has both arms represented")
    if num == 0.0 or den == 0.0:
        raise errors.DegenerateWR(f"pooled win fraction {num}, loss fraction {den}")
    for weight, sums, w_s, l_s in stratum_sums:
        n_e, n_c = sums.n_treated, sums.n_control
        u_t = np.stack([sums.row_wins / n_c - w_s, sums.row_losses / n_c - l_s], axis=1)
        u_c = np.stack([sums.col_wins / n_e - w_s, sums.col_losses / n_e - l_s], axis=1)
        cov += n * weight**2 * ((u_t.T @ u_t) / n_e**2 + (u_c.T @ u_c) / n_c**2)
    sigma2 = _sigma2_from(cov, num, den)
    return _assemble_result(
        rule, pooled, num, den, sigma2, n, True, tuple(results)
    )


@dataclass(frozen=True)
class WaldResult:
    z: float
    p: float
    reject: bool


def wald_test(
    log_wr: float,
    se_log_wr: float,
    sidedness: str = "two-sided",
    alpha: float = 0.05,
) -> WaldResult:
    """Normal-theory test of log WR = 0; rejection uses strict inequality."""
    if se_log_wr <= 0:
        raise errors.InvalidParams("se_log_wr must be positive")
    z = log_wr / se_log_wr
    if sidedness == "two-sided":
        p = 2.0 * stats.norm.sf(abs(z))
        reject = abs(z) > stats.norm.ppf(1.0 - alpha / 2.0)
    elif sidedness == "one-sided":
        p = stats.norm.sf(z)
        reject = z > stats.norm.ppf(1.0 - alpha)
    else:
        raise errors.InvalidParams(f"unknown sidedness {sidedness!r}")
    return WaldResult(z=z, p=float(p), reject=bool(reject))
