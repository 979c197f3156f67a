"""Gamma-frailty joint model: marginal likelihood, fitting, Wald tests.

The frailty is integrated out per subject, leaving an integral

    I = int_0^inf w^s exp(-A w - B w^alpha) dw,

with s = n_events + alpha*delta_death + 1/theta - 1,
A = 1/theta + exp(bR'z) R0(T*) and B = exp(bD'z) L0(T*).  At alpha = 1 the
integral is Gamma(s+1)/(A+B)^(s+1); otherwise it is computed by
generalised Gauss-Laguerre quadrature after rescaling w so the linear part
of the exponent matches the Laguerre weight exactly (the rescaling solves
A*w + alpha*B*w^alpha = s+1 at the quadrature scale).  For alpha < 1 the
substitution u = w^alpha first maps the problem to an exponent > 1, which
removes the branch singularity at zero.  Everything runs in the log
domain.

Fitting maximises the marginal log-likelihood over an unconstrained
reparameterisation (log for positive parameters) with BFGS and
central-difference gradients; standard errors come from the inverse
observed Hessian, delta-mapped back to the natural scale.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from scipy import optimize, special, stats
from scipy.special import gammaln, logsumexp

from . import errors
from .core_data import Dataset
from .sim_engine import TREATMENT, HazardSpec

_LADDER_DEFAULT = (50, 32, 20)


# ---------------------------------------------------------------------------
# frailty integral
# ---------------------------------------------------------------------------

@functools.lru_cache(maxsize=256)
def _genlaguerre_nodes(n: int, gamma: float):
    x, w = special.roots_genlaguerre(n, gamma)
    return x, np.log(w)


def _solve_scale(s, a, b, alpha):
    """Vectorised Newton for w solving a*w + alpha*b*w^alpha = s + 1."""
    target = s + 1.0
    w = np.maximum(target / (a + alpha * b), 1e-300)
    for _ in range(80):
        g = a * w + alpha * b * w**alpha - target
        dg = a + alpha * alpha * b * w ** (alpha - 1.0)
        step = g / dg
        w_new = np.where(w - step > 0, w - step, w / 2.0)
        if np.all(np.abs(w_new - w) <= 1e-15 * w):
            return w_new
        w = w_new
    return w


def log_frailty_integral(
    s: np.ndarray,
    a: np.ndarray,
    b: np.ndarray,
    alpha: float,
    n_nodes: int = 50,
    force_quadrature: bool = False,
) -> np.ndarray:
    """log of int_0^inf w^s exp(-a w - b w^alpha) dw, elementwise.

    Exact (closed-form gamma integral) at alpha = 1 unless
    ``force_quadrature`` is set; Gauss-Laguerre otherwise.  s > -1, a > 0,
    b >= 0 required.
    """
    if alpha <= 0.0:
        raise errors.NonFiniteLikelihood("frailty power alpha must be positive")
    s = np.atleast_1d(np.asarray(s, dtype=np.float64))
    a = np.broadcast_to(np.asarray(a, dtype=np.float64), s.shape).copy()
    b = np.broadcast_to(np.asarray(b, dtype=np.float64), s.shape).copy()
    if alpha == 1.0 and not force_quadrature:
        return gammaln(s + 1.0) - (s + 1.0) * np.log(a + b)
    offset = 0.0
    if alpha < 1.0:
        # u = w^alpha turns the w^alpha kernel into the linear one
        s, a, b = (s + 1.0) / alpha - 1.0, b, a
        offset = -math.log(alpha)
        alpha = 1.0 / alpha
    scale = _solve_scale(s, a, b, alpha)
    lam = scale / (s + 1.0)
    m = np.where(s >= 0, np.floor(s), 0.0)
    gam = s - m
    out = np.empty_like(s)
    for g in np.unique(gam):
        sel = gam == g
        x, logw = _genlaguerre_nodes(n_nodes, float(g))
        lam_s = lam[sel][:, None]
        terms = (
            logw[None, :]
            + m[sel][:, None] * np.log(x)[None, :]
            + (1.0 - a[sel][:, None] * lam_s) * x[None, :]
            - b[sel][:, None] * (lam_s * x[None, :]) ** alpha
        )
        out[sel] = (s[sel] + 1.0) * np.log(lam[sel]) + logsumexp(terms, axis=1)
    return out + offset


# ---------------------------------------------------------------------------
# model specification and prepared data
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class JFMSpec:
    """What to fit: baseline families, covariate lists, alpha handling."""

    recurrent_baseline: str = "weibull"  # "weibull" | "exponential"
    terminal_baseline: str = "weibull"
    recurrent_covariates: tuple[str, ...] = (TREATMENT,)
    terminal_covariates: tuple[str, ...] = (TREATMENT,)
    alpha: Optional[float] = 1.0  # None = estimate
    nodes: tuple[int, ...] = _LADDER_DEFAULT

    def __post_init__(self):
        for fam in (self.recurrent_baseline, self.terminal_baseline):
            if fam not in ("weibull", "exponential"):
                raise errors.InvalidParams(f"unsupported baseline family {fam!r}")
        if any(k <= 0 for k in self.nodes) or list(self.nodes) != sorted(self.nodes, reverse=True):
            raise errors.InvalidParams("quadrature ladder must be positive and decreasing")


def _baseline_param_names(prefix: str, family: str) -> list[str]:
    if family == "exponential":
        return [f"{prefix}_rate"]
    return [f"{prefix}_shape", f"{prefix}_scale"]


def _baseline_from(family: str, params: np.ndarray) -> HazardSpec:
    if family == "exponential":
        return HazardSpec("exponential", rate=float(params[0]))
    return HazardSpec("weibull", shape=float(params[0]), scale=float(params[1]))


class JFMModel:
    """Dataset prepared for likelihood evaluation under a JFMSpec."""

    def __init__(self, dataset: Dataset, spec: JFMSpec):
        self.spec = spec
        subs = dataset.subjects
        n = len(subs)
        for name in set(spec.recurrent_covariates) | set(spec.terminal_covariates):
            if name != TREATMENT and any(name not in s.covariates for s in subs):
                raise errors.MissingColumn(f"covariate {name!r} missing for some subjects")

        def design(names):
            cols = []
            for name in names:
                if name == TREATMENT:
                    cols.append([float(s.arm.value) for s in subs])
                else:
                    cols.append([float(s.covariates[name]) for s in subs])
            return np.array(cols, dtype=np.float64).T if cols else np.zeros((n, 0))

        self.z_rec = design(spec.recurrent_covariates)
        self.z_death = design(spec.terminal_covariates)
        self.n_events = np.array([len(s.recurrent_times) for s in subs], dtype=np.float64)
        self.death = np.array([s.died for s in subs], dtype=np.float64)
        self.t_star = np.array([s.follow_up for s in subs], dtype=np.float64)
        self.event_times = np.concatenate(
            [np.asarray(s.recurrent_times) for s in subs] or [np.empty(0)]
        )
        self.event_subject = np.concatenate(
            [np.full(len(s.recurrent_times), i) for i, s in enumerate(subs)] or [np.empty(0, int)]
        ).astype(np.intp)
        self.n = n
        self.param_names = (
            [f"rec_{c}" for c in spec.recurrent_covariates]
            + [f"death_{c}" for c in spec.terminal_covariates]
            + _baseline_param_names("rec", spec.recurrent_baseline)
            + _baseline_param_names("death", spec.terminal_baseline)
            + ["theta"]
            + (["alpha"] if spec.alpha is None else [])
        )
        p_r, p_d = self.z_rec.shape[1], self.z_death.shape[1]
        nb_r = 1 if spec.recurrent_baseline == "exponential" else 2
        nb_d = 1 if spec.terminal_baseline == "exponential" else 2
        self._slices = {
            "beta_r": slice(0, p_r),
            "beta_d": slice(p_r, p_r + p_d),
            "base_r": slice(p_r + p_d, p_r + p_d + nb_r),
            "base_d": slice(p_r + p_d + nb_r, p_r + p_d + nb_r + nb_d),
            "theta": p_r + p_d + nb_r + nb_d,
        }
        self.n_params = len(self.param_names)
        # natural-scale parameters that live on the log scale when transformed
        self._log_scale = np.zeros(self.n_params, dtype=bool)
        self._log_scale[self._slices["base_r"]] = True
        self._log_scale[self._slices["base_d"]] = True
        self._log_scale[self._slices["theta"]] = True

    # -- parameter plumbing -------------------------------------------------

    def to_transformed(self, natural: np.ndarray) -> np.ndarray:
        t = np.array(natural, dtype=np.float64)
        t[self._log_scale] = np.log(t[self._log_scale])
        return t

    def to_natural(self, transformed: np.ndarray) -> np.ndarray:
        x = np.array(transformed, dtype=np.float64)
        x[self._log_scale] = np.exp(x[self._log_scale])
        return x

    def _unpack(self, natural: np.ndarray):
        sl = self._slices
        beta_r = natural[sl["beta_r"]]
        beta_d = natural[sl["beta_d"]]
        base_r = _baseline_from(self.spec.recurrent_baseline, natural[sl["base_r"]])
        base_d = _baseline_from(self.spec.terminal_baseline, natural[sl["base_d"]])
        theta = float(natural[sl["theta"]])
        alpha = self.spec.alpha if self.spec.alpha is not None else float(natural[-1])
        return beta_r, beta_d, base_r, base_d, theta, alpha

    # -- likelihood ---------------------------------------------------------

    def loglik_by_subject(
        self,
        natural: np.ndarray,
        n_nodes: int = 50,
        force_quadrature: bool = False,
    ) -> np.ndarray:
        """Per-subject marginal log-likelihood contributions."""
        natural = np.asarray(natural, dtype=np.float64)
        if natural.shape != (self.n_params,):
            raise errors.InvalidParams(
                f"expected {self.n_params} parameters {self.param_names}"
            )
        beta_r, beta_d, base_r, base_d, theta, alpha = self._unpack(natural)
        if theta <= 0 or not np.all(np.isfinite(natural)):
            raise errors.InvalidParams("theta must be > 0 and parameters finite")
        eta_r = self.z_rec @ beta_r
        eta_d = self.z_death @ beta_d
        inv_theta = 1.0 / theta
        s = self.n_events + alpha * self.death + inv_theta - 1.0
        a = inv_theta + np.exp(eta_r) * base_r.cum_hazard(self.t_star)
        b = np.exp(eta_d) * base_d.cum_hazard(self.t_star)
        integral = log_frailty_integral(s, a, b, alpha, n_nodes, force_quadrature)
        ll = integral - gammaln(inv_theta) - inv_theta * math.log(theta)
        if self.event_times.size:
            ev = base_r.log_hazard(self.event_times)
            ll = ll + np.bincount(self.event_subject, weights=ev, minlength=self.n)
        ll = ll + self.n_events * eta_r
        ll = ll + self.death * (base_d.log_hazard(np.maximum(self.t_star, 1e-300)) + eta_d)
        if not np.all(np.isfinite(ll)):
            raise errors.NonFiniteLikelihood(
                f"{np.count_nonzero(~np.isfinite(ll))} non-finite subject contributions"
            )
        return ll

    def loglik(self, natural: np.ndarray, n_nodes: int = 50, **kw) -> float:
        return float(self.loglik_by_subject(natural, n_nodes, **kw).sum())

    def loglik_grad(
        self, natural: np.ndarray, n_nodes: int = 50, rel_step: float = 1e-6
    ) -> np.ndarray:
        """Central-difference gradient on the natural scale."""
        return _central_grad(lambda x: self.loglik(x, n_nodes), np.asarray(natural, float), rel_step)

    def initial_values(self) -> np.ndarray:
        """Cheap scale-free starting point: null betas, event-rate baselines."""
        total_time = float(self.t_star.sum())
        rate_r = max(float(self.n_events.sum()), 0.5) / total_time
        rate_d = max(float(self.death.sum()), 0.5) / total_time
        vals = []
        vals += [0.0] * (self.z_rec.shape[1] + self.z_death.shape[1])
        for fam, rate in ((self.spec.recurrent_baseline, rate_r), (self.spec.terminal_baseline, rate_d)):
            vals += [rate] if fam == "exponential" else [1.0, 1.0 / rate]
        vals.append(0.5)  # theta
        if self.spec.alpha is None:
            vals.append(1.0)
        return np.array(vals, dtype=np.float64)


def marginal_loglik(
    dataset: Dataset, spec: JFMSpec, natural_params: Sequence[float], n_nodes: int = 50
) -> float:
    """Marginal log-likelihood at natural-scale parameters (see
    JFMModel.param_names for the ordering)."""
    return JFMModel(dataset, spec).loglik(np.asarray(natural_params, float), n_nodes)


def _central_grad(fun, x: np.ndarray, rel_step: float) -> np.ndarray:
    g = np.empty_like(x)
    for j in range(x.size):
        h = rel_step * max(1.0, abs(x[j]))
        xp, xm = x.copy(), x.copy()
        xp[j] += h
        xm[j] -= h
        g[j] = (fun(xp) - fun(xm)) / (2.0 * h)
    return g


def _central_hessian(fun, x: np.ndarray, rel_step: float = 5e-5) -> np.ndarray:
    p = x.size
    hs = rel_step * np.maximum(1.0, np.abs(x))
    hess = np.empty((p, p))
    f0 = fun(x)
    for j in range(p):
        xp, xm = x.copy(), x.copy()
        xp[j] += hs[j]
        xm[j] -= hs[j]
        hess[j, j] = (fun(xp) - 2.0 * f0 + fun(xm)) / hs[j] ** 2
    for j in range(p):
        for k in range(j + 1, p):
            xpp, xpm, xmp, xmm = x.copy(), x.copy(), x.copy(), x.copy()
            xpp[[j, k]] += [hs[j], hs[k]]
            xpm[j] += hs[j]
            xpm[k] -= hs[k]
            xmp[j] -= hs[j]
            xmp[k] += hs[k]
            xmm[[j, k]] -= [hs[j], hs[k]]
            hess[j, k] = hess[k, j] = (fun(xpp) - fun(xpm) - fun(xmp) + fun(xmm)) / (
                4.0 * hs[j] * hs[k]
            )
    return hess


# ---------------------------------------------------------------------------
# fitting
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class JFMFit:
    param_names: tuple[str, ...]
    estimates: np.ndarray  # natural scale
    ses: Optional[np.ndarray]
    cov: Optional[np.ndarray]
    loglik: float
    converged: bool
    iterations: int
    nodes_used: int
    grad_norm: float
    failure: Optional[str]  # None | "not_converged" | "nonfinite_likelihood" | "singular_hessian"
    n: int

    def __getitem__(self, name: str) -> float:
        return float(self.estimates[self.param_names.index(name)])

    def se(self, name: str) -> float:
        if self.ses is None:
            raise errors.MissingSE(f"no standard errors available ({self.failure})")
        v = self.ses[self.param_names.index(name)]
        if not np.isfinite(v):
            raise errors.MissingSE(f"standard error for {name} unavailable")
        return float(v)

    def ci95(self, name: str) -> tuple[float, float]:
        est, se = self[name], self.se(name)
        return est - 1.96 * se, est + 1.96 * se

    def to_dict(self) -> dict:
        return {
            "estimates": dict(zip(self.param_names, map(float, self.estimates))),
            "ses": None
            if self.ses is None
            else dict(zip(self.param_names, map(float, self.ses))),
            "loglik": self.loglik,
            "converged": self.converged,
            "iterations": self.iterations,
            "nodes_used": self.nodes_used,
            "grad_norm": self.grad_norm,
            "failure": self.failure,
            "n": self.n,
        }


def fit_jfm(
    dataset: Dataset,
    spec: JFMSpec,
    max_iter: int = 100,
    grad_tol: float = 1e-5,
    init: Optional[Sequence[float]] = None,
) -> JFMFit:
    """Maximise the marginal log-likelihood; retry down the node ladder on
    numerical failure.  Estimates are always returned when the optimizer
    produced finite parameters; ``converged``/``failure`` carry the status.
    """
    model = JFMModel(dataset, spec)
    if model.n_events.sum() < 1 or model.death.sum() < 1:
        raise errors.InvalidParams("need at least one recurrent and one terminal event")
    x0 = model.to_transformed(np.asarray(init, float) if init is not None else model.initial_values())
    last_exc: Optional[Exception] = None
    for n_nodes in spec.nodes:
        try:
            fit = _fit_at_nodes(model, x0, n_nodes, max_iter, grad_tol)
        except errors.NonFiniteLikelihood as exc:
            last_exc = exc
            continue
        if fit.converged:
            return fit
        last_fit = fit
    if last_exc is not None and "last_fit" not in locals():
        return JFMFit(
            param_names=tuple(model.param_names),
            estimates=model.to_natural(x0),
            ses=None,
            cov=None,
            loglik=math.nan,
            converged=False,
            iterations=0,
            nodes_used=spec.nodes[-1],
            grad_norm=math.inf,
            failure="nonfinite_likelihood",
            n=model.n,
        )
    return last_fit


def _fit_at_nodes(model: JFMModel, x0: np.ndarray, n_nodes: int, max_iter: int, grad_tol: float) -> JFMFit:
    model.loglik(model.to_natural(x0), n_nodes)  # raises NonFiniteLikelihood at a bad start

    def neg(xt: np.ndarray) -> float:
        try:
            return -model.loglik(model.to_natural(xt), n_nodes)
        except (errors.NonFiniteLikelihood, errors.InvalidParams, FloatingPointError):
            return np.inf

    def neg_grad(xt: np.ndarray) -> np.ndarray:
        g = _central_grad(neg, xt, 1e-6)
        return np.where(np.isfinite(g), g, 0.0)

    res = optimize.minimize(
        neg, x0, jac=neg_grad, method="BFGS", options={"maxiter": max_iter, "gtol": grad_tol}
    )
    xt = res.x
    f = neg(xt)
    if not np.isfinite(f) or not np.all(np.isfinite(xt)):
        raise errors.NonFiniteLikelihood("optimizer left the finite-likelihood region")
    gnorm = float(np.max(np.abs(neg_grad(xt))))
    # absolute tolerance, loosened in proportion to the objective magnitude
    # because the numerical gradient carries O(|f| * eps / h) noise
    converged = res.success or gnorm < max(grad_tol, 1e-6 * abs(f))
    failure = None if converged else "not_converged"
    natural = model.to_natural(xt)
    ses = cov_nat = None
    try:
        hess = _central_hessian(neg, xt)
        cov_t = np.linalg.inv(hess)
        diag = np.diag(cov_t)
        if np.any(diag <= 0):
            raise np.linalg.LinAlgError("non-positive Hessian diagonal")
        jac = np.where(model._log_scale, natural, 1.0)
        cov_nat = cov_t * np.outer(jac, jac)
        ses = np.sqrt(np.diag(cov_nat))
    except (np.linalg.LinAlgError, ValueError):
        if converged:
            failure = "singular_hessian"
    return JFMFit(
        param_names=tuple(model.param_names),
        estimates=natural,
        ses=ses,
        cov=cov_nat,
        loglik=-f,
        converged=converged,
        iterations=int(res.nit),
        nodes_used=n_nodes,
        grad_norm=gnorm,
        failure=failure,
        n=model.n,
    )


# ---------------------------------------------------------------------------
# Wald inference
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WaldChi2:
    stat: float
    df: int
    p: float


def wald_univariate(fit: JFMFit, name: str, null: float = 0.0) -> WaldChi2:
    """1-df Wald test (psi_hat - psi_0)^2 / Var(psi_hat) ~ chi2_1."""
    se = fit.se(name)
    w = (fit[name] - null) ** 2 / se**2
    return WaldChi2(stat=float(w), df=1, p=float(stats.chi2.sf(w, 1)))


def wald_joint(fit: JFMFit, contrast: np.ndarray) -> WaldChi2:
    """Q-df Wald test of C Omega = 0 using the fit covariance."""
    if fit.cov is None:
        raise errors.MissingSE(f"no covariance available ({fit.failure})")
    c = np.atleast_2d(np.asarray(contrast, dtype=np.float64))
    if np.linalg.matrix_rank(c) < c.shape[0]:
        raise errors.RankDeficientContrast("contrast matrix is rank deficient")
    v = c @ fit.estimates
    mid = c @ fit.cov @ c.T
    try:
        sol = np.linalg.solve(mid, v)
    except np.linalg.LinAlgError as exc:
        raise errors.SingularBlock(str(exc))
    w = float(v @ sol)
    q = c.shape[0]
    return WaldChi2(stat=w, df=q, p=float(stats.chi2.sf(w, q)))


def contrast_selecting(fit_or_names, names: Sequence[str]) -> np.ndarray:
    """Rows of the identity selecting the named parameters."""
    all_names = list(fit_or_names.param_names if hasattr(fit_or_names, "param_names") else fit_or_names)
    c = np.zeros((len(names), len(all_names)))
    for i, name in enumerate(names):
        c[i, all_names.index(name)] = 1.0
    return c
