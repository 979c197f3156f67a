"""Command-line interface.

Subcommands cover the full pipeline: ``simulate`` datasets, analyse them
with ``wr`` (win ratio) or ``jfm`` (joint frailty model), size trials with
``ss-schoenfeld`` / ``ss-jfm`` / ``ss-wr`` / ``ss-lwr-sim``, compute
``power-jfm``, and run ``replicate-study`` Monte Carlo summaries.

Outputs are JSON on stdout.  Exit codes: 0 success, 2 usage error,
3 data validation error, 4 numerical failure; failures print a JSON
error taxonomy on stderr.

Scenario files are versioned JSON documents (``schema_version`` 1);
unknown fields are rejected so that studies stay reproducible as the
schema evolves.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, replace
from typing import Any, Optional

import numpy as np

from . import errors, metrics, presets
from .core_data import Dataset, export_counting_process, load_counting_process_csv, load_wide_csv
from .design_calc import (
    jfm_power,
    jfm_sample_size,
    lwr_sim_sample_size,
    fisher_info_mc,
    schoenfeld_pipeline,
    wr_model_based_n,
)
from .jfm_fit import JFMSpec, contrast_selecting, fit_jfm, wald_joint
from .sim_engine import (
    TREATMENT,
    CovariateSpec,
    DesignCensoring,
    FixedCensoring,
    HazardSpec,
    ScenarioSpec,
    replicate_seeds,
    simulate_dataset,
)
from .win_rules import WinRule
from .wr_inference import wr_stratified, wr_unstratified

SCHEMA_VERSION = 1

_PRESETS = {
    "scenario1": lambda: presets.scenario(1),
    "scenario2": lambda: presets.scenario(2),
    "scenario3": lambda: presets.scenario(3),
    "scenario4": lambda: presets.scenario(4),
    "scenario5": lambda: presets.scenario(5),
    "scenario6": lambda: presets.scenario(6),
    "lwr-design": presets.lwr_design_scenario,
}


# ---------------------------------------------------------------------------
# scenario JSON (de)serialisation
# ---------------------------------------------------------------------------

def _take(doc: dict, allowed: set[str], context: str) -> None:
    unknown = set(doc) - allowed
    if unknown:
        raise errors.MissingColumn(
            f"unknown fields in {context}: {sorted(unknown)} (allowed: {sorted(allowed)})"
        )


def _hazard_from_json(doc: dict, context: str) -> HazardSpec:
    _take(doc, {"family", "rate", "shape", "scale"}, context)
    return HazardSpec(
        family=doc["family"],
        rate=doc.get("rate"),
        shape=doc.get("shape"),
        scale=doc.get("scale"),
    )


def _censoring_from_json(doc: dict):
    kind = doc.get("type")
    if kind == "fixed":
        _take(doc, {"type", "time"}, "censoring")
        return FixedCensoring(doc["time"])
    if kind == "design":
        _take(doc, {"type", "accrual", "end", "dropout"}, "censoring")
        return DesignCensoring(doc["accrual"], doc["end"], doc.get("dropout", 0.0))
    raise errors.MissingColumn(f"censoring type must be 'fixed' or 'design', got {kind!r}")


def scenario_from_json(doc: dict) -> ScenarioSpec:
    """Build a ScenarioSpec from a versioned JSON document."""
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise errors.MissingColumn(
            f"scenario schema_version must be {SCHEMA_VERSION}, got {doc.get('schema_version')!r}"
        )
    allowed = {
        "schema_version",
        "n_subjects",
        "recurrent_hazard",
        "terminal_hazard",
        "beta_recurrent",
        "beta_terminal",
        "theta",
        "alpha",
        "allocation",
        "covariates",
        "censoring",
        "bernoulli_allocation",
        "recurrence_timescale",
        "poisson_recurrence_cap",
    }
    _take(doc, allowed, "scenario")
    covs = tuple(
        CovariateSpec(c["name"], c.get("bernoulli_p", 0.5)) for c in doc.get("covariates", ())
    )
    return ScenarioSpec(
        n_subjects=doc["n_subjects"],
        recurrent_hazard=_hazard_from_json(doc["recurrent_hazard"], "recurrent_hazard"),
        terminal_hazard=_hazard_from_json(doc["terminal_hazard"], "terminal_hazard"),
        beta_recurrent=dict(doc.get("beta_recurrent", {})),
        beta_terminal=dict(doc.get("beta_terminal", {})),
        theta=doc.get("theta", 0.0),
        alpha=doc.get("alpha", 1.0),
        allocation=doc.get("allocation", 0.5),
        covariates=covs,
        censoring=_censoring_from_json(doc.get("censoring", {"type": "fixed", "time": 3.0})),
        bernoulli_allocation=doc.get("bernoulli_allocation", False),
        recurrence_timescale=doc.get("recurrence_timescale", "gap"),
        poisson_recurrence_cap=doc.get("poisson_recurrence_cap"),
    )


def scenario_to_json(spec: ScenarioSpec) -> dict:
    """Inverse of scenario_from_json."""
    hazards = {}
    for key, h in (("recurrent_hazard", spec.recurrent_hazard), ("terminal_hazard", spec.terminal_hazard)):
        hazards[key] = {k: v for k, v in asdict(h).items() if v is not None}
    if isinstance(spec.censoring, FixedCensoring):
        cens = {"type": "fixed", "time": spec.censoring.time}
    else:
        cens = {
            "type": "design",
            "accrual": spec.censoring.accrual,
            "end": spec.censoring.end,
            "dropout": spec.censoring.dropout,
        }
    return {
        "schema_version": SCHEMA_VERSION,
        "n_subjects": spec.n_subjects,
        **hazards,
        "beta_recurrent": dict(spec.beta_recurrent),
        "beta_terminal": dict(spec.beta_terminal),
        "theta": spec.theta,
        "alpha": spec.alpha,
        "allocation": spec.allocation,
        "covariates": [{"name": c.name, "bernoulli_p": c.bernoulli_p} for c in spec.covariates],
        "censoring": cens,
        "bernoulli_allocation": spec.bernoulli_allocation,
        "recurrence_timescale": spec.recurrence_timescale,
        "poisson_recurrence_cap": spec.poisson_recurrence_cap,
    }


def _load_scenario(args) -> ScenarioSpec:
    if getattr(args, "preset", None):
        if args.preset not in _PRESETS:
            raise errors.MissingColumn(
                f"unknown preset {args.preset!r}; choose from {sorted(_PRESETS)}"
            )
        spec = _PRESETS[args.preset]()
    elif getattr(args, "scenario", None):
        with open(args.scenario) as fh:
            spec = scenario_from_json(json.load(fh))
    else:
        raise errors.MissingColumn("provide --scenario FILE or --preset NAME")
    if getattr(args, "n", None):
        spec = spec.with_n(args.n)
    return spec


def _load_dataset(args) -> Dataset:
    with open(args.data) as fh:
        if getattr(args, "wide", False):
            return load_wide_csv(fh)
        return load_counting_process_csv(fh)


def _emit(payload: Any, args) -> None:
    out = json.dumps(payload, indent=2, default=_json_default)
    if getattr(args, "out", None):
        with open(args.out, "w") as fh:
            fh.write(out + "\n")
    else:
        print(out)


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serialisable: {type(obj)}")


# ---------------------------------------------------------------------------
# subcommand implementations
# ---------------------------------------------------------------------------

def _cmd_simulate(args) -> int:
    spec = _load_scenario(args)
    data = simulate_dataset(spec, args.seed)
    if args.out:
        with open(args.out, "w") as fh:
            export_counting_process(data, fh)
    else:
        export_counting_process(data, sys.stdout)
    return 0


def _cmd_wr(args) -> int:
    data = _load_dataset(args)
    rule = WinRule(args.rule)
    if args.stratify:
        res = wr_stratified(data, rule, stratify_by=args.stratify)
    else:
        res = wr_unstratified(data, rule)
    _emit(res.to_dict(), args)
    return 0


def _cmd_jfm(args) -> int:
    data = _load_dataset(args)
    alpha = None if args.alpha == "estimate" else float(args.alpha.split(":", 1)[1])
    spec = JFMSpec(
        recurrent_baseline=args.baseline,
        terminal_baseline=args.baseline,
        recurrent_covariates=tuple(args.rec_covariates.split(",")) if args.rec_covariates else (TREATMENT,),
        terminal_covariates=tuple(args.death_covariates.split(",")) if args.death_covariates else (TREATMENT,),
        alpha=alpha,
    )
    fit = fit_jfm(data, spec)
    payload = fit.to_dict()
    if fit.cov is not None:
        joint = wald_joint(fit, contrast_selecting(fit, [f"rec_{TREATMENT}", f"death_{TREATMENT}"]))
        payload["joint_treatment_test"] = {"stat": joint.stat, "df": joint.df, "p": joint.p}
    _emit(payload, args)
    return 0


def _cmd_ss_schoenfeld(args) -> int:
    res = schoenfeld_pipeline(
        rate_control=args.rate_control,
        hr=args.hr,
        accrual=args.accrual,
        end=args.end,
        alpha=args.alpha,
        power=args.power,
        allocation=args.q,
        inflation=args.inflation,
    )
    _emit(res.to_dict(), args)
    return 0


def _planning(args) -> presets.JFMPlanning:
    if args.planning == "hf-constant":
        return presets.hf_planning(increasing_hazards=False)
    if args.planning == "hf-increasing":
        return presets.hf_planning(increasing_hazards=True)
    raise errors.MissingColumn("planning must be hf-constant or hf-increasing")


def _cmd_ss_jfm(args) -> int:
    plan = _planning(args)
    res = jfm_sample_size(
        plan.scenario,
        plan.jfm_spec,
        plan.true_params,
        plan.contrast,
        alpha=args.alpha,
        power=args.power,
        inflation=args.inflation,
        n_datasets=args.n_datasets,
        seed=args.seed,
    )
    _emit(res.to_dict(), args)
    return 0


def _cmd_power_jfm(args) -> int:
    plan = _planning(args)
    info, _ = fisher_info_mc(
        plan.scenario, plan.jfm_spec, plan.true_params, args.n_datasets, args.seed
    )
    power = jfm_power(args.n, info, plan.true_params, plan.contrast, alpha=args.alpha)
    _emit({"n": args.n, "power": power, "alpha": args.alpha}, args)
    return 0


def _cmd_ss_wr(args) -> int:
    n = wr_model_based_n(
        zeta0=args.zeta0,
        delta0=[float(x) for x in args.delta0.split(",")],
        xi=[float(x) for x in args.xi.split(",")],
        allocation=args.q,
        alpha=args.alpha,
        power=args.power,
    )
    _emit({"n": n}, args)
    return 0


def _cmd_ss_lwr_sim(args) -> int:
    spec = _load_scenario(args)
    lo, hi, step = (int(x) for x in args.grid.split(":"))
    res = lwr_sim_sample_size(
        spec,
        grid=range(lo, hi + 1, step),
        n_sim=args.n_sim,
        alpha=args.alpha,
        target_power=args.power,
        seed=args.seed,
    )
    payload = res.to_dict()
    if args.inflation:
        payload["n_inflated"] = int(math.ceil(res.n * (1 + args.inflation) / 2.0) * 2)
    _emit(payload, args)
    if args.curve_csv:
        with open(args.curve_csv, "w") as fh:
            fh.write("n,power,type_i\n")
            for n, pw, t1 in zip(res.grid, res.power, res.type_i):
                fh.write(f"{n},{pw},{t1}\n")
    return 0


def _replicate_one(payload: tuple[dict, str, Optional[str], int]) -> dict:
    """Worker: one simulated replicate analysed with one win rule."""
    doc, rule_name, stratify, seed = payload
    spec = scenario_from_json(doc)
    data = simulate_dataset(spec, seed)
    rule = WinRule(rule_name)
    try:
        res = (
            wr_stratified(data, rule, stratify_by=stratify)
            if stratify
            else wr_unstratified(data, rule)
        )
    except errors.DegenerateWR:
        return {"seed": seed, "ok": False}
    return {
        "seed": seed,
        "ok": True,
        "log_wr": res.log_wr,
        "se_log_wr": res.se_log_wr,
        "p": res.p_two_sided,
    }


def _cmd_replicate_study(args) -> int:
    spec = _load_scenario(args)
    doc = scenario_to_json(spec)
    seeds = replicate_seeds(args.seed, args.n_replicates)
    jobs = [(doc, args.rule, args.stratify, s) for s in seeds]
    threads = args.threads or int(os.environ.get("RECWIN_THREADS", "1"))
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(_replicate_one, jobs, chunksize=8))
    else:
        rows = [_replicate_one(j) for j in jobs]
    ok = [r for r in rows if r["ok"]]
    power = metrics.empirical_power([r["p"] for r in ok], args.alpha)
    payload: dict[str, Any] = {
        "rule": args.rule,
        "n_replicates": args.n_replicates,
        "n_fitted": len(ok),
        "power": power.to_dict(),
    }
    if args.true_log_wr is not None:
        summary = metrics.replicate_summary(
            parameter=f"log_wr[{args.rule}]",
            replicates=[
                (
                    r["log_wr"],
                    r["se_log_wr"],
                    (r["log_wr"] - 1.96 * r["se_log_wr"], r["log_wr"] + 1.96 * r["se_log_wr"]),
                )
                for r in ok
            ],
            truth=args.true_log_wr,
            n_attempted=args.n_replicates,
        )
        payload["summary"] = summary.to_dict()
    _emit(payload, args)
    if args.dump_csv:
        with open(args.dump_csv, "w") as fh:
            fh.write("seed,ok,log_wr,se_log_wr,p\n")
            for r in rows:
                if r["ok"]:
                    fh.write(f"{r['seed']},1,{r['log_wr']!r},{r['se_log_wr']!r},{r['p']!r}\n")
                else:
                    fh.write(f"{r['seed']},0,,,\n")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", help="write JSON/CSV output to this path instead of stdout")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="recwin",
        description="Recurrent-event win ratios, joint frailty models, and trial design",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate a dataset and write counting-process CSV")
    p.add_argument("--scenario", help="scenario JSON document")
    p.add_argument("--preset", help=f"named preset: {', '.join(sorted(_PRESETS))}")
    p.add_argument("--n", type=int, help="override the scenario's number of subjects")
    p.add_argument("--seed", type=int, required=True)
    _add_common(p)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("wr", help="win-ratio analysis of a dataset")
    p.add_argument("--data", required=True, help="counting-process CSV (or wide with --wide)")
    p.add_argument("--wide", action="store_true", help="input is in wide format")
    p.add_argument("--rule", choices=[r.value for r in WinRule], default="lwr")
    p.add_argument("--stratify", help="covariate/stratum column for stratified pairing")
    _add_common(p)
    p.set_defaults(func=_cmd_wr)

    p = sub.add_parser("jfm", help="fit the gamma-frailty joint model")
    p.add_argument("--data", required=True)
    p.add_argument("--wide", action="store_true")
    p.add_argument("--baseline", choices=["weibull", "exponential"], default="weibull")
    p.add_argument("--alpha", default="fixed:1", help="'fixed:VALUE' or 'estimate'")
    p.add_argument("--rec-covariates", help="comma-separated recurrent-model covariates")
    p.add_argument("--death-covariates", help="comma-separated terminal-model covariates")
    _add_common(p)
    p.set_defaults(func=_cmd_jfm)

    p = sub.add_parser("ss-schoenfeld", help="event-driven sample size with accrual averaging")
    p.add_argument("--rate-control", type=float, required=True)
    p.add_argument("--hr", type=float, required=True)
    p.add_argument("--accrual", type=float, required=True)
    p.add_argument("--end", type=float, required=True)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--power", type=float, default=0.80)
    p.add_argument("--q", type=float, default=0.5, help="allocation fraction")
    p.add_argument("--inflation", type=float, default=0.0)
    _add_common(p)
    p.set_defaults(func=_cmd_ss_schoenfeld)

    for name, fn in (("ss-jfm", _cmd_ss_jfm), ("power-jfm", _cmd_power_jfm)):
        p = sub.add_parser(name, help=f"{name} via Monte Carlo Fisher information")
        p.add_argument("--planning", required=True, choices=["hf-constant", "hf-increasing"])
        p.add_argument("--alpha", type=float, default=0.05)
        p.add_argument("--power", type=float, default=0.80)
        p.add_argument("--inflation", type=float, default=0.05)
        p.add_argument("--n-datasets", type=int, default=250)
        p.add_argument("--seed", type=int, default=0)
        if name == "power-jfm":
            p.add_argument("--n", type=int, required=True)
        _add_common(p)
        p.set_defaults(func=fn)

    p = sub.add_parser("ss-wr", help="model-based standard win-ratio sample size")
    p.add_argument("--zeta0", type=float, required=True)
    p.add_argument("--delta0", required=True, help="comma-separated vector")
    p.add_argument("--xi", required=True, help="comma-separated log hazard ratios")
    p.add_argument("--q", type=float, default=0.5)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--power", type=float, default=0.80)
    _add_common(p)
    p.set_defaults(func=_cmd_ss_wr)

    p = sub.add_parser("ss-lwr-sim", help="simulation-based LWR sample size over a grid")
    p.add_argument("--scenario")
    p.add_argument("--preset")
    p.add_argument("--grid", default="1000:1400:100", help="min:max:step")
    p.add_argument("--n-sim", type=int, default=1000)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--power", type=float, default=0.80)
    p.add_argument("--inflation", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--curve-csv", help="write the power/type-I curves as CSV")
    _add_common(p)
    p.set_defaults(func=_cmd_ss_lwr_sim)

    p = sub.add_parser("replicate-study", help="Monte Carlo replication summary")
    p.add_argument("--scenario")
    p.add_argument("--preset")
    p.add_argument("--n", type=int)
    p.add_argument("--rule", choices=[r.value for r in WinRule], default="lwr")
    p.add_argument("--stratify")
    p.add_argument("--n-replicates", type=int, default=500)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, help="worker processes (default RECWIN_THREADS or 1)")
    p.add_argument("--true-log-wr", type=float, help="reference value for bias/coverage")
    p.add_argument("--dump-csv", help="write per-replicate results as CSV")
    _add_common(p)
    p.set_defaults(func=_cmd_replicate_study)

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except errors.DataValidationError as exc:
        _print_error(exc, "data_validation")
        return 3
    except errors.NumericalError as exc:
        _print_error(exc, "numerical")
        return 4
    except FileNotFoundError as exc:
        print(json.dumps({"error": "FileNotFoundError", "category": "usage", "message": str(exc)}), file=sys.stderr)
        return 2


def _print_error(exc: Exception, category: str) -> None:
    print(
        json.dumps({"error": type(exc).__name__, "category": category, "message": str(exc)}),
        file=sys.stderr,
    )


if __name__ == "__main__":
    sys.exit(main())
