"""Command-line entry point.

    riskenv eval --model m.json [--measure NAME] [--t LEVEL]
    riskenv envelope | bsde | convergence | axioms | consistency | sensitivity ...
    riskenv --selftest

Every command prints (or writes with ``--out``) a RunReport as sorted,
indented JSON.  Exit codes: 0 all checks pass, 1 a check failed, 2 input
error, 3 numeric error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
import warnings

import numpy as np

from . import __version__
from .dynamics import check_sensitivity, consistency_sweep, find_inconsistency
from .envelope import dual_check, verify_attainment
from .errors import ComparisonWarning, InputError, RiskEnvError
from .gexp import convergence_csv, convergence_study, g_risk, generator_from_json, solve_bsde
from .measures import AXIOMS, axiom_report_json, check_axioms, evaluate
from .model import Model, load_model, parse_functional, spec_to_json
from .space import BINOMIAL

PASSING = ("pass", "pass_sampled")
COMMANDS = ("eval", "envelope", "bsde", "convergence", "axioms", "consistency", "sensitivity", "selftest")


def to_jsonable(obj):
    """numpy scalars/arrays to plain Python; non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isfinite(x):
            return x
        return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")
    return obj


def dumps(report) -> str:
    return json.dumps(to_jsonable(report), sort_keys=True, indent=2, allow_nan=False) + "\n"


def digest(doc) -> str:
    blob = json.dumps(to_jsonable(doc), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


# ---------------------------------------------------------------------------
# helpers


def _param(args, model: Model, name: str, default=None):
    v = getattr(args, name, None)
    if v is not None:
        return v
    return model.params.get(name, default)


def _select(mapping: dict, name, what: str) -> dict:
    if name is not None:
        if name not in mapping:
            raise InputError(f"unknown {what} {name!r}; model defines {sorted(mapping)}")
        return {name: mapping[name]}
    if not mapping:
        raise InputError(f"model defines no {what}s")
    return dict(mapping)


def _payoffs(args, model: Model) -> dict:
    return _select(model.payoffs, _param(args, model, "payoff"), "payoff")


def _measures(args, model: Model) -> dict:
    return _select(model.measures, _param(args, model, "measure"), "measure")


def _level(args, model: Model) -> int:
    t = int(_param(args, model, "t", 0))
    model.tree.check_level(t)
    return t


def _generators(args, model: Model) -> dict:
    name = _param(args, model, "generator")
    if name is None:
        return _select(model.generators, None, "generator")
    if isinstance(name, str) and name in model.generators:
        return {name: model.generators[name]}
    try:
        gen = generator_from_json(name)
    except InputError as exc:
        raise InputError(f"--generator: {exc}") from None
    return {gen.name: gen}


# ---------------------------------------------------------------------------
# commands; each returns (results, checks)


def cmd_eval(model: Model, args):
    t = _level(args, model)
    results = {}
    for mname, spec in _measures(args, model).items():
        results[mname] = {p: evaluate(spec, model.tree, X, t) for p, X in _payoffs(args, model).items()}
    return {"t": t, "profiles": results}, []


def cmd_envelope(model: Model, args):
    t = _level(args, model)
    kind = _param(args, model, "kind", "monetary")
    budget = int(_param(args, model, "budget", 50))
    seed = int(_param(args, model, "seed", 0))
    checks = []
    for mname, spec in _measures(args, model).items():
        for pname, X in _payoffs(args, model).items():
            rep = verify_attainment(spec, kind, model.tree, X, t, budget=budget, seed=seed)
            rep.update(measure=mname, payoff=pname)
            checks.append(rep)
            if kind == "monetary" and rep["status"] != "contract_violation":
                Z0 = np.asarray(X) + np.repeat(np.asarray(rep["rhs"]), model.tree.block_sizes(t))
                d = dual_check(model.tree, Z0, X, t, budget=min(budget, 100), seed=seed)
                d.update(measure=mname, payoff=pname)
                checks.append(d)
    return {"t": t, "kind": kind}, checks


def cmd_bsde(model: Model, args):
    if model.tree.kind != BINOMIAL:
        raise InputError("tree: bsde needs a binomial tree")
    t = _level(args, model)
    strict = bool(_param(args, model, "strict", False))
    results, checks = {}, []
    for gname, gen in _generators(args, model).items():
        results[gname] = {}
        for pname, X in _payoffs(args, model).items():
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", ComparisonWarning)
                sol = solve_bsde(model.tree, gen, X, strict=strict)
                risk = g_risk(gen, model.tree, X, t, strict=strict)
            results[gname][pname] = {"g_expectation": sol.Y[t], "g_risk": risk, "Y0": sol.Y[0][0],
                                     "slope_margin": sol.slope_margin}
            checks.append({"check": "comparison", "generator": gname, "payoff": pname,
                           "slope_margin": sol.slope_margin,
                           "status": "pass" if sol.verified else "unverified"})
    return {"t": t, "bsde": results}, checks


def cmd_convergence(model: Model, args):
    N_list = _param(args, model, "N_list", [4, 8, 16, 32])
    if isinstance(N_list, str):
        try:
            N_list = [int(x) for x in N_list.split(",") if x.strip()]
        except ValueError:
            raise InputError(f"--N-list: expected comma-separated integers, got {N_list!r}") from None
    gamma = _param(args, model, "gamma")
    gamma = None if gamma is None else float(gamma)
    T = float(_param(args, model, "T", model.tree.T if model.tree.kind == BINOMIAL else 1.0))
    fdoc = model.params.get("functional", {"functional": "of_terminal_sum"})
    try:
        functional = parse_functional(fdoc)
    except (InputError, KeyError, TypeError, ValueError) as exc:
        raise InputError(f"params.functional: {exc}") from None
    gens = _generators(args, model) if (args.generator or "generator" in model.params or model.generators) \
        else {"zero": generator_from_json("zero")}
    tables, checks = {}, []
    for gname, gen in gens.items():
        rows = convergence_study(gen, functional, N_list, gamma=gamma, T=T)
        tables[gname] = rows
        errs = [r["abs_error"] for r in rows]
        if gamma is None:
            ok = max(errs) <= 1e-12
            checks.append({"check": "error_zero", "generator": gname, "max_error": max(errs),
                           "status": "pass" if ok else "fail"})
        else:
            ok = all(b < a for a, b in zip(errs, errs[1:]))
            checks.append({"check": "error_decreasing", "generator": gname, "errors": errs,
                           "status": "pass" if ok else "fail"})
    return {"gamma": gamma, "functional": fdoc, "tables": tables}, checks


def cmd_axioms(model: Model, args):
    budget = int(_param(args, model, "budget", 1000))
    seed = int(_param(args, model, "seed", 0))
    which = _param(args, model, "axioms", list(AXIOMS))
    if isinstance(which, str):
        which = [a.strip() for a in which.split(",") if a.strip()]
    t = _param(args, model, "t")
    results, checks = {}, []
    for mname, spec in _measures(args, model).items():
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ComparisonWarning)
            rep = check_axioms(spec, model.tree, which, budget=budget, seed=seed,
                               t=None if t is None else int(t))
        results[mname] = axiom_report_json(rep)
        for r in results[mname]:
            checks.append({"check": f"axiom_{r['axiom']}", "measure": mname, **r})
    return {"budget": budget, "axioms": results}, [c for c in checks if c["status"] != "skipped"]


def cmd_consistency(model: Model, args):
    tol = float(_param(args, model, "tol", 1e-12))
    results, checks = {}, []
    payoffs = list(_payoffs(args, model).values()) if model.payoffs else []
    grid = model.params.get("grid")
    for mname, spec in _measures(args, model).items():
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ComparisonWarning)
            entry = {}
            status = "pass"
            if payoffs:
                rep = consistency_sweep(spec, model.tree, payoffs, tol)
                entry["sweep"] = rep.to_json()
                if not rep.consistent:
                    status = "fail"
            if grid is not None:
                s = model.params.get("s")
                w = find_inconsistency(spec, model.tree, [float(g) for g in grid], int(model.params.get("t", 0)),
                                       None if s is None else int(s))
                entry["grid_search"] = w
                if w is not None and w["gap"] > tol:
                    status = "fail"
        results[mname] = entry
        checks.append({"check": "time_consistency", "measure": mname, "status": status,
                       "witness": (entry.get("grid_search") or (entry.get("sweep") or {}).get("witness"))
                       if status == "fail" else None})
    return {"tol": tol, "consistency": results}, checks


def cmd_sensitivity(model: Model, args):
    t = _level(args, model)
    budget = int(_param(args, model, "budget", 64))
    seed = int(_param(args, model, "seed", 0))
    qname = _param(args, model, "Q")
    Q = None
    if qname is not None and qname != "P":
        if qname not in model.measure_changes:
            raise InputError(f"--Q: unknown measure change {qname!r}")
        Q = model.measure_changes[qname]
    results, checks = {}, []
    verdict_status = {"sensitive_evidence": "pass", "insensitive_witness": "fail", "inconclusive": "inconclusive"}
    for mname, spec in _measures(args, model).items():
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ComparisonWarning)
            rep = check_sensitivity(spec, model.tree, t, Q, budget=budget, seed=seed)
        results[mname] = rep.to_json()
        checks.append({"check": "sensitivity", "measure": mname, "verdict": rep.verdict, "mode": rep.mode,
                       "status": verdict_status[rep.verdict]})
    return {"t": t, "Q": qname or "P", "sensitivity": results}, checks


HANDLERS = {
    "eval": cmd_eval, "envelope": cmd_envelope, "bsde": cmd_bsde, "convergence": cmd_convergence,
    "axioms": cmd_axioms, "consistency": cmd_consistency, "sensitivity": cmd_sensitivity,
}


# ---------------------------------------------------------------------------
# driver


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="riskenv", description="Dynamic risk measures on scenario trees.")
    p.add_argument("--version", action="version", version=f"riskenv {__version__}")
    p.add_argument("--selftest", action="store_true", help="run the canonical example suite and exit")
    p.add_argument("command", nargs="?", choices=COMMANDS)
    p.add_argument("--model", help="model file (JSON)")
    p.add_argument("--measure", help="measure name from the model (default: all)")
    p.add_argument("--payoff", help="payoff name from the model (default: all)")
    p.add_argument("--t", type=int, help="evaluation level")
    p.add_argument("--seed", type=int, help="seed for randomized checks")
    p.add_argument("--budget", type=int, help="sample budget for randomized checks")
    p.add_argument("--kind", choices=("monetary", "star", "cone"), help="envelope member kind")
    p.add_argument("--generator", help="generator name from the model or the catalogue")
    p.add_argument("--gamma", type=float, help="entropic parameter for convergence studies")
    p.add_argument("--N-list", dest="N_list", help="comma-separated tree depths, e.g. 4,8,16,32")
    p.add_argument("--axioms", help="comma-separated subset of A1..A6")
    p.add_argument("--Q", help="measure change name for sensitivity (default P)")
    p.add_argument("--strict", action="store_true", default=None, help="treat a comparison failure as an error")
    p.add_argument("--out", help="write the report here instead of stdout")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    return p


def _csv(command: str, results: dict) -> str:
    if command == "convergence":
        out = []
        for gname, rows in sorted(results["tables"].items()):
            out.append(f"# generator={gname}\n" + convergence_csv(rows))
        return "".join(out)
    if command == "eval":
        lines = ["measure,payoff,node,value"]
        for m, per in sorted(results["profiles"].items()):
            for p, prof in sorted(per.items()):
                lines += [f"{m},{p},{i},{float(v)!r}" for i, v in enumerate(prof)]
        return "\n".join(lines) + "\n"
    raise InputError("--format csv is available for eval and convergence only")


def run(argv=None):
    """Parse ``argv`` and execute; returns ``(exit_code, text, report, args)``.

    For ``selftest`` the text is the scorecard and the report goes to ``--out``.
    """
    args = build_parser().parse_args(argv)
    if args.selftest or args.command == "selftest":
        from .selftest import format_scorecard, run_selftest

        report, ok = run_selftest(seed=args.seed or 0)
        return (0 if ok else 1), format_scorecard(report), report, args
    if args.command is None:
        raise InputError("no command given; see --help")
    if not args.model:
        raise InputError("--model is required")
    model = load_model(args.model)
    results, checks = HANDLERS[args.command](model, args)
    options = {k: v for k, v in sorted(vars(args).items()) if k not in ("out", "format", "model", "selftest")}
    report = {
        "command": args.command,
        "inputs_digest": digest({"command": args.command, "model": model.raw, "options": options}),
        "results": results,
        "checks": checks,
        "measures": {k: spec_to_json(v) for k, v in model.measures.items()},
        "seed": _param(args, model, "seed", 0),
        "version": __version__,
    }
    ok = all(c["status"] in PASSING for c in checks)
    text = _csv(args.command, results) if args.format == "csv" else dumps(report)
    return (0 if ok else 1), text, report, args


def main(argv=None) -> int:
    try:
        code, text, report, args = run(argv)
    except RiskEnvError as exc:
        print(f"riskenv: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except SystemExit as exc:  # argparse: --help/--version exit 0, usage errors 2
        return 0 if exc.code in (0, None) else 2
    selftest = args.selftest or args.command == "selftest"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(dumps(report) if selftest else text)
    if selftest or not args.out:
        sys.stdout.write(text)
    return code


if __name__ == "__main__":
    sys.exit(main())
