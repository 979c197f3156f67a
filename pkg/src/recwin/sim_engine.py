"""Gamma-frailty joint-model data generation by inverse transform sampling.

A subject draws a frailty u (gamma, unit mean, variance theta) and binary
covariates; the death time comes from the terminal hazard with linear
predictor beta_D'z + alpha*log(u) and recurrence gap times accumulate in
calendar time from the recurrent hazard with predictor beta_R'z + log(u)
until death or censoring.  Censoring is either a fixed administrative
cutoff or a trial design with uniform accrual and optional exponential
dropout.

Randomness is fully determined by (seed, subject index) through a Philox
substream per subject, so output never depends on scheduling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, Union

import numpy as np

from . import errors
from .core_data import Arm, Dataset, SubjectHistory

TREATMENT = "trt"


@dataclass(frozen=True)
class HazardSpec:
    """Parametric baseline hazard.

    Families and cumulative hazards H0(t):
      exponential(rate):        rate * t
      weibull(shape, scale):    (t / scale)^shape
      loglogistic(shape, scale): log(1 + (t / scale)^shape)
    The log-logistic scale equals the baseline median.
    """

    family: str
    rate: Optional[float] = None
    shape: Optional[float] = None
    scale: Optional[float] = None

    def __post_init__(self):
        if self.family == "exponential":
            if self.rate is None or self.rate <= 0:
                raise errors.InvalidParams("exponential hazard needs rate > 0")
        elif self.family in ("weibull", "loglogistic"):
            if not (self.shape and self.scale and self.shape > 0 and self.scale > 0):
                raise errors.InvalidParams(f"{self.family} hazard needs shape, scale > 0")
        else:
            raise errors.InvalidParams(f"unknown hazard family {self.family!r}")

    def cum_hazard(self, t):
        t = np.asarray(t, dtype=np.float64)
        if self.family == "exponential":
            return self.rate * t
        if self.family == "weibull":
            return (t / self.scale) ** self.shape
        return np.log1p((t / self.scale) ** self.shape)

    def inv_cum_hazard(self, h):
        h = np.asarray(h, dtype=np.float64)
        if self.family == "exponential":
            return h / self.rate
        if self.family == "weibull":
            return self.scale * h ** (1.0 / self.shape)
        with np.errstate(over="ignore"):  # expm1 overflow means "beyond any horizon"
            return self.scale * np.expm1(h) ** (1.0 / self.shape)

    def log_hazard(self, t):
        t = np.asarray(t, dtype=np.float64)
        if self.family == "exponential":
            return np.broadcast_to(np.log(self.rate), t.shape).copy()
        if self.family == "weibull":
            return (
                math.log(self.shape / self.scale)
                + (self.shape - 1.0) * np.log(t / self.scale)
            )
        x = (t / self.scale) ** self.shape
        return (
            math.log(self.shape / self.scale)
            + (self.shape - 1.0) * np.log(t / self.scale)
            - np.log1p(x)
        )

    @property
    def median(self) -> float:
        return float(self.inv_cum_hazard(math.log(2.0)))


@dataclass(frozen=True)
class FixedCensoring:
    time: float


@dataclass(frozen=True)
class DesignCensoring:
    """Uniform accrual over [0, accrual], study end at ``end`` (> accrual),
    exponential dropout at rate ``dropout`` (0 disables dropout)."""

    accrual: float
    end: float
    dropout: float = 0.0

    def __post_init__(self):
        if not (0 < self.accrual < self.end):
            raise errors.InvalidParams("need 0 < accrual < end")
        if self.dropout < 0:
            raise errors.InvalidParams("dropout rate must be >= 0")


Censoring = Union[FixedCensoring, DesignCensoring]


@dataclass(frozen=True)
class CovariateSpec:
    name: str
    bernoulli_p: float = 0.5


@dataclass(frozen=True)
class ScenarioSpec:
    """Complete generative description used by the simulator and the
    design calculators.

    Coefficient dicts map covariate names (and "trt" for the treatment
    indicator) to log hazard ratios.  ``hazard_overrides`` optionally maps
    levels of one binary covariate to (recurrent, terminal) baselines,
    replacing the defaults for subjects at that level.
    """

    n_subjects: int
    recurrent_hazard: HazardSpec
    terminal_hazard: HazardSpec
    beta_recurrent: dict[str, float] = field(default_factory=dict)
    beta_terminal: dict[str, float] = field(default_factory=dict)
    theta: float = 0.0
    alpha: float = 1.0
    allocation: float = 0.5
    covariates: tuple[CovariateSpec, ...] = ()
    censoring: Censoring = FixedCensoring(3.0)
    bernoulli_allocation: bool = False
    override_covariate: Optional[str] = None
    hazard_overrides: dict[float, tuple[HazardSpec, HazardSpec]] = field(default_factory=dict)
    # "gap": the recurrent baseline restarts after each event (renewal);
    # "calendar": the baseline runs on study time (counting-process model,
    # the scale the joint-model likelihood is written on)
    recurrence_timescale: str = "gap"
    # mean of a per-subject Poisson cap on the number of recurrences
    # (None = unlimited), as used in planning scenarios where subjects have
    # a bounded expected event count
    poisson_recurrence_cap: Optional[float] = None

    def __post_init__(self):
        if self.recurrence_timescale not in ("gap", "calendar"):
            raise errors.InvalidParams("recurrence_timescale must be 'gap' or 'calendar'")
        if self.poisson_recurrence_cap is not None and self.poisson_recurrence_cap <= 0:
            raise errors.InvalidParams("poisson_recurrence_cap must be positive")
        if self.theta < 0:
            raise errors.InvalidParams("theta must be >= 0")
        if not 0 < self.allocation < 1:
            raise errors.InvalidParams("allocation must be in (0, 1)")
        names = {TREATMENT} | {c.name for c in self.covariates}
        for d in (self.beta_recurrent, self.beta_terminal):
            unknown = set(d) - names
            if unknown:
                raise errors.InvalidParams(f"coefficients on unknown covariates: {unknown}")

    def with_n(self, n: int) -> "ScenarioSpec":
        return replace(self, n_subjects=n)

    def under_null(self) -> "ScenarioSpec":
        """Same design with the treatment effects removed."""
        br = {k: v for k, v in self.beta_recurrent.items() if k != TREATMENT}
        bd = {k: v for k, v in self.beta_terminal.items() if k != TREATMENT}
        return replace(self, beta_recurrent=br, beta_terminal=bd)


def subject_rng(seed: int, index: int) -> np.random.Generator:
    """Philox substream fully determined by (seed, subject index)."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence((seed, index))))


def draw_frailty(theta: float, rng: np.random.Generator) -> float:
    """Gamma draw with mean 1 and variance theta; exactly 1 at theta = 0."""
    if theta < 0:
        raise errors.InvalidParams("theta must be >= 0")
    if theta == 0.0:
        return 1.0
    return float(rng.gamma(shape=1.0 / theta, scale=theta))


def event_time_from_u(hazard: HazardSpec, eta: float, u: float) -> float:
    """Deterministic inverse-transform map T = H0^-1(-log(U) e^-eta)."""
    return float(hazard.inv_cum_hazard(-math.log(u) * math.exp(-eta)))


def sample_event_time(hazard: HazardSpec, eta: float, rng: np.random.Generator) -> float:
    """Inverse transform draw with survival S(t) = exp(-H0(t) e^eta)."""
    u = rng.uniform()
    while u == 0.0:  # measure-zero guard against log(0)
        u = rng.uniform()
    return event_time_from_u(hazard, eta, u)


def _linear_predictor(beta: dict[str, float], z: dict[str, float], trt: int) -> float:
    eta = 0.0
    for name, b in beta.items():
        eta += b * (trt if name == TREATMENT else z[name])
    return eta


def simulate_subject(
    spec: ScenarioSpec,
    rng: np.random.Generator,
    subject_id: str = "0",
    arm: Optional[Arm] = None,
) -> SubjectHistory:
    """Generate one subject; the arm is Bernoulli(allocation) unless given."""
    if arm is None:
        arm = Arm.EXPERIMENTAL if rng.uniform() < spec.allocation else Arm.CONTROL
    u = draw_frailty(spec.theta, rng)
    z = {c.name: float(rng.uniform() < c.bernoulli_p) for c in spec.covariates}
    rec_h, term_h = spec.recurrent_hazard, spec.terminal_hazard
    if spec.override_covariate is not None:
        level = z[spec.override_covariate]
        if level in spec.hazard_overrides:
            rec_h, term_h = spec.hazard_overrides[level]
    trt = arm.value
    eta_rec = _linear_predictor(spec.beta_recurrent, z, trt) + math.log(u)
    eta_death = _linear_predictor(spec.beta_terminal, z, trt) + spec.alpha * math.log(u)
    death = sample_event_time(term_h, eta_death, rng)
    if isinstance(spec.censoring, FixedCensoring):
        censor = spec.censoring.time
    else:
        entry = rng.uniform(0.0, spec.censoring.accrual)
        censor = spec.censoring.end - entry
        if spec.censoring.dropout > 0:
            censor = min(censor, rng.exponential(1.0 / spec.censoring.dropout))
    end = min(death, censor)
    times = []
    t = 0.0
    gap_scale = spec.recurrence_timescale == "gap"
    cap = (
        None
        if spec.poisson_recurrence_cap is None
        else int(rng.poisson(spec.poisson_recurrence_cap))
    )
    while cap is None or len(times) < cap:
        if gap_scale:
            t += sample_event_time(rec_h, eta_rec, rng)
        else:
            u = rng.uniform()
            while u == 0.0:
                u = rng.uniform()
            t = rec_h.inv_cum_hazard(
                rec_h.cum_hazard(t) - math.log(u) * math.exp(-eta_rec)
            )
        if t < end:
            times.append(t)
        else:
            break
    died = death < censor
    return SubjectHistory(
        id=subject_id,
        arm=arm,
        recurrent_times=tuple(times),
        censor_time=censor,
        death_time=death if died else None,
        covariates=z,
    )


def simulate_dataset(spec: ScenarioSpec, seed: int) -> Dataset:
    """Generate spec.n_subjects subjects with per-subject substreams.

    Deterministic allocation assigns the first round(q*n) indices to the
    experimental arm (subjects are otherwise i.i.d.); Bernoulli allocation
    is available via ``spec.bernoulli_allocation``.
    """
    n = spec.n_subjects
    n_exp = int(round(spec.allocation * n))
    subjects = []
    for i in range(n):
        rng = subject_rng(seed, i)
        arm = None
        if not spec.bernoulli_allocation:
            arm = Arm.EXPERIMENTAL if i < n_exp else Arm.CONTROL
        subjects.append(simulate_subject(spec, rng, subject_id=str(i), arm=arm))
    return Dataset(tuple(subjects))


def replicate_seeds(seed: int, n_reps: int) -> list[int]:
    """Independent dataset seeds derived from a master seed."""
    ss = np.random.SeedSequence(seed)
    return [int(s.generate_state(1)[0]) for s in ss.spawn(n_reps)]
