"""Canonical example suite behind ``riskenv --selftest``.

Each case returns ``(ok, detail)``; details hold only values, never timings,
so the JSON report is byte-identical across runs with the same seed.
``RISKENV_THREADS`` sets the worker count (default 1).
"""

from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from importlib import resources

import numpy as np

from . import __version__, oracles
from .dynamics import check_sensitivity, check_time_consistency, find_inconsistency
from .envelope import (
    EnvelopeMember,
    dual_check,
    lower_envelope,
    member_eval,
    penalty,
    shift_measure,
    sup_of_family,
    verify_attainment,
)
from .errors import ComparisonWarning
from .gexp import (
    PathFunctional,
    check_generator,
    convergence_study,
    entropic_bsde,
    entropic_dual_value,
    entropic_linear,
    entropic_maximizer,
    g_risk,
    make_generator,
    maxmin_dp,
    relative_entropy,
    solve_bsde,
)
from .measures import (
    ConditionalVaR,
    Entropic,
    Envelope,
    Linear,
    RobustVaR,
    WorstCase,
    check_axioms,
    evaluate,
    make_utility,
    robust_var,
    utility_shortfall,
    var_conditional,
)
from .space import (
    MeasureChange,
    build_binomial,
    cond_ess_extrema,
    cond_expect,
    lift,
    measure_from_density,
    one_period,
    random_measure,
    random_tree,
    reference_measure,
)

CASES = []
LN3 = math.log(3.0)


def case(name):
    def deco(fn):
        CASES.append((name, fn))
        return fn
    return deco


def _close(a, b, tol):
    return bool(np.max(np.abs(np.asarray(a, dtype=float) - np.asarray(b, dtype=float))) <= tol)


def _half():
    return one_period([0.5, 0.5])


# --- space -----------------------------------------------------------------


@case("build_binomial N=1 T=1")
def _(seed):
    tr = build_binomial(1, 1.0)
    return tr.n_leaves == 2 and list(tr.increments[1]) == [-1.0, 1.0], {"leaves": tr.n_leaves}


@case("build_binomial N=2 T=1")
def _(seed):
    tr = build_binomial(2, 1.0)
    return tr.n_leaves == 4 and tr.dt == 0.5, {"leaves": tr.n_leaves, "dt": tr.dt}


@case("build_binomial N=10 path sums and probabilities")
def _(seed):
    tr = build_binomial(10, 1.0)
    sq = math.sqrt(0.1)
    bits = (np.arange(1024)[:, None] >> np.arange(9, -1, -1)[None, :]) & 1
    expect = ((2 * bits - 1) * sq).sum(axis=1)
    total = float(cond_expect(tr, np.ones(1024), 0)[0])
    ok = _close(tr.path_sums(), expect, 1e-12) and abs(total - 1.0) <= 1e-12
    return ok, {"prob_total": total}


@case("cond_expect constant")
def _(seed):
    tr = random_tree(np.random.default_rng(seed), 3)
    return all(_close(cond_expect(tr, np.full(tr.n_leaves, 2.5), t), 2.5, 1e-12) for t in range(4)), {}


@case("cond_expect one-period (4,-2)")
def _(seed):
    v = float(cond_expect(_half(), [4.0, -2.0], 0)[0])
    return v == 1.0, {"value": v}


@case("cond_expect tower")
def _(seed):
    rng = np.random.default_rng(seed)
    tr = random_tree(rng, 4)
    X = rng.normal(size=tr.n_leaves)
    gap = max(float(np.max(np.abs(cond_expect(tr, lift(tr, cond_expect(tr, X, s), s), t) - cond_expect(tr, X, t))))
              for s in range(5) for t in range(s + 1))
    return gap <= 1e-12, {"gap": gap}


@case("cond_ess_extrema constant and two leaves")
def _(seed):
    tr = random_tree(np.random.default_rng(seed), 2)
    c = all(_close(cond_ess_extrema(tr, np.full(tr.n_leaves, -1.5), t, w), -1.5, 0)
            for t in range(3) for w in ("sup", "inf"))
    s = cond_ess_extrema(_half(), [4.0, -2.0], 0, "sup")[0]
    i = cond_ess_extrema(_half(), [4.0, -2.0], 0, "inf")[0]
    return c and s == 4.0 and i == -2.0, {"sup": s, "inf": i}


@case("cond_ess_extrema brackets cond_expect")
def _(seed):
    rng = np.random.default_rng(seed)
    tr = random_tree(rng, 3)
    X = rng.normal(size=tr.n_leaves)
    ok = all(np.all(cond_ess_extrema(tr, X, t, "inf") <= cond_expect(tr, X, t) + 1e-15)
             and np.all(cond_expect(tr, X, t) <= cond_ess_extrema(tr, X, t, "sup") + 1e-15) for t in range(4))
    return ok, {}


@case("lift scalar, identity, level-1 profile")
def _(seed):
    tr = build_binomial(2, 1.0)
    a = _close(lift(tr, [3.0], 0), [3.0] * 4, 0)
    X = np.arange(4.0)
    b = _close(lift(tr, X, 2), X, 0)
    c = _close(lift(tr, [1.0, 2.0], 1), [1, 1, 2, 2], 0)
    return a and b and c, {}


# --- measures ----------------------------------------------------------------


@case("evaluate Linear(P) = -cond_expect")
def _(seed):
    rng = np.random.default_rng(seed)
    tr = random_tree(rng, 3)
    X = rng.normal(size=tr.n_leaves)
    return all(_close(evaluate(Linear(None), tr, X, t), -cond_expect(tr, X, t), 0) for t in range(4)), {}


@case("evaluate WorstCase (4,-2)")
def _(seed):
    v = float(evaluate(WorstCase(), _half(), [4.0, -2.0], 0)[0])
    return v == 2.0, {"value": v}


@case("var_conditional deterministic")
def _(seed):
    tr = random_tree(np.random.default_rng(seed), 2)
    return all(_close(var_conditional(tr, np.full(tr.n_leaves, 0.7), t, lam), -0.7, 0)
               for t in range(3) for lam in (0.05, 0.3, 0.9)), {}


@case("var_conditional three-atom law")
def _(seed):
    tr = one_period([0.25, 0.25, 0.5])
    X = [-1.0, 0.0, 1.0]
    v = float(var_conditional(tr, X, 0, 0.3)[0])
    o = float(oracles.var_by_definition(tr, X, 0, 0.3)[0])
    return v == 0.0 and o == 0.0, {"value": v, "oracle": o}


@case("robust_var single scenario")
def _(seed):
    rng = np.random.default_rng(seed)
    tr = random_tree(rng, 3)
    X = rng.integers(-2, 3, tr.n_leaves).astype(float)
    return _close(robust_var(tr, X, 1, 0.3, [reference_measure(tr)]), var_conditional(tr, X, 1, 0.3), 0), {}


@case("robust_var tilted scenario dominates")
def _(seed):
    tr = _half()
    Q = MeasureChange((np.ones(1), np.array([0.9, 0.1])))
    X = [-1.0, 1.0]
    a, b = float(robust_var(tr, X, 0, 0.3, [reference_measure(tr), Q])[0]), float(var_conditional(tr, X, 0, 0.3)[0])
    return a >= b, {"robust": a, "var": b}


@case("robust_var star-shaped falsifier")
def _(seed):
    rng = np.random.default_rng(seed)
    tr = random_tree(rng, 3, min_children=2)
    spec = RobustVaR(0.3, (reference_measure(tr), random_measure(tr, rng)))
    r = check_axioms(spec, tr, ["A6"], budget=300, seed=seed)["A6"]
    return r.status == "pass", {"A6": r.status}


@case("entropic deterministic and two-leaf")
def _(seed):
    tr = random_tree(np.random.default_rng(seed), 2)
    a = all(_close(evaluate(Entropic(2.0), tr, np.full(tr.n_leaves, 1.25), t), -1.25, 1e-15) for t in range(3))
    v = float(evaluate(Entropic(1.0), _half(), [0.0, -LN3], 0)[0])
    return a and abs(v - math.log(2)) <= 1e-12, {"value": v}


@case("entropic convexity falsifier")
def _(seed):
    tr = random_tree(np.random.default_rng(seed), 3)
    r = check_axioms(Entropic(1.0), tr, ["A4"], budget=300, seed=seed)["A4"]
    return r.status == "pass", {"A4": r.status}


@case("utility_shortfall linear, exponential, deterministic")
def _(seed):
    rng = np.random.default_rng(seed)
    tr = random_tree(rng, 2)
    X = rng.normal(size=tr.n_leaves)
    lin = make_utility("linear")
    a = _close(utility_shortfall(tr, X, 1, lin), -cond_expect(tr, X, 1), 1e-9)
    v = float(utility_shortfall(_half(), [0.0, -LN3], 0, make_utility("exponential", a=1.0))[0])
    c = _close(utility_shortfall(tr, np.full(tr.n_leaves, 0.4), 0, make_utility("exponential", a=1.0)), -0.4, 1e-9)
    return a and c and abs(v - math.log(2)) <= 1e-9, {"value": v}


@case("axioms: Entropic A1-A4")
def _(seed):
    tr = random_tree(np.random.default_rng(seed), 3)
    rep = check_axioms(Entropic(1.0), tr, ["A1", "A2", "A3", "A4"], budget=1000, seed=seed)
    return all(r.status == "pass" for r in rep.values()), {k: r.status for k, r in rep.items()}


@case("axioms: ConditionalVaR three-atom A4 witness")
def _(seed):
    tr = one_period([0.25, 0.25, 0.5])
    rep = check_axioms(ConditionalVaR(0.3), tr, ["A4"], budget=1000, seed=seed)["A4"]
    grid = oracles.convexity_grid_witness(ConditionalVaR(0.3), tr, 0, [-1.0, 0.0, 1.0])
    return rep.status == "fail" and grid is not None, {"falsifier": rep.status, "grid_witness": grid}


@case("axioms: Linear A1-A6")
def _(seed):
    tr = random_tree(np.random.default_rng(seed), 3)
    rep = check_axioms(Linear(None), tr, budget=300, seed=seed)
    return all(r.status == "pass" for r in rep.values()), {k: r.status for k, r in rep.items()}


# --- envelope ----------------------------------------------------------------


@case("member_eval monetary Z=(1,-2) X=(0.5,0)")
def _(seed):
    v = float(member_eval(EnvelopeMember("monetary", np.array([1.0, -2.0]), 0), _half(), [0.5, 0.0], 0)[0])
    return v == 0.5, {"value": v}


@case("member_eval star Z=(2,-1) X=(1,-0.5)")
def _(seed):
    Z, X = np.array([2.0, -1.0]), np.array([1.0, -0.5])
    v = float(member_eval(EnvelopeMember("star", Z, 0), _half(), X, 0)[0])
    g = float(oracles.member_grid("star", _half(), Z, X, 0)[0])
    return abs(v) <= 1e-15 and abs(g - v) <= 1e-3 and v <= g, {"value": v, "grid": g}


@case("member_eval star X=0")
def _(seed):
    rng = np.random.default_rng(seed)
    tr = random_tree(rng, 3)
    Z = rng.normal(size=tr.n_leaves)
    Z = Z - lift(tr, np.minimum(cond_ess_extrema(tr, Z, 1, "sup"), 0), 1)
    v = member_eval(EnvelopeMember("star", Z, 1), tr, np.zeros(tr.n_leaves), 1)
    return bool(np.all(v == 0)), {}


@case("lower_envelope singleton and pair")
def _(seed):
    m1 = EnvelopeMember("monetary", np.array([1.0, -2.0]), 0)
    m2 = EnvelopeMember("monetary", np.zeros(2), 0)
    X = [0.5, 0.0]
    a = lower_envelope([m1], _half(), X, 0)[0] == member_eval(m1, _half(), X, 0)[0]
    b = float(lower_envelope([m1, m2], _half(), X, 0)[0])
    return bool(a) and b == 0.0, {"pair": b}


@case("verify_attainment entropic two-leaf")
def _(seed):
    r = verify_attainment(Entropic(1.0), "monetary", _half(), [0.0, -LN3], 0, seed=seed)
    return r["status"] == "pass" and abs(r["lhs"][0] - math.log(2)) <= 1e-12, {"lhs": r["lhs"], "status": r["status"]}


@case("verify_attainment WorstCase star")
def _(seed):
    rng = np.random.default_rng(seed)
    st = []
    for _ in range(5):
        tr = random_tree(rng, 3)
        for t in (0, 1, 2):
            st.append(verify_attainment(WorstCase(), "star", tr, rng.normal(size=tr.n_leaves), t, seed=seed)["status"])
    return set(st) == {"pass"}, {"statuses": sorted(set(st))}


@case("verify_attainment ConditionalVaR monetary, convex members")
def _(seed):
    rng = np.random.default_rng(seed)
    tr = build_binomial(3, 1.0)
    X = rng.normal(size=8)
    r = verify_attainment(ConditionalVaR(0.3), "monetary", tr, X, 0, seed=seed)
    Z0 = X + lift(tr, evaluate(ConditionalVaR(0.3), tr, X, 0), 0)
    a4 = check_axioms(EnvelopeMember("monetary", Z0, 0), tr, ["A4"], budget=300, seed=seed)["A4"]
    src = check_axioms(ConditionalVaR(0.3), tr, ["A4"], budget=1000, seed=seed)["A4"]
    ok = r["status"] == "pass" and a4.status == "pass" and src.status == "fail"
    return ok, {"attainment": r["status"], "member_A4": a4.status, "source_A4": src.status}


@case("penalty Z=0 and Z=(1,-2)")
def _(seed):
    tr = random_tree(np.random.default_rng(seed), 2)
    a = _close(penalty(tr, np.zeros(tr.n_leaves), None, 1), 0, 0)
    v = float(penalty(_half(), [1.0, -2.0], reference_measure(_half()), 0)[0])
    return a and v == 0.5, {"value": v}


@case("dual_check Z=(1,-2) X=(0.5,0)")
def _(seed):
    r = dual_check(_half(), [1.0, -2.0], [0.5, 0.0], 0, seed=seed)
    ok = r["status"] == "pass" and r["lhs"] == [0.5] and r["rhs"] == [0.5] and r["maximizer_leaves"] == [0]
    return ok, {"lhs": r["lhs"], "rhs": r["rhs"], "maximizer_leaves": r["maximizer_leaves"]}


@case("dual_check Z=X")
def _(seed):
    rng = np.random.default_rng(seed)
    tr = random_tree(rng, 3)
    X = rng.normal(size=tr.n_leaves)
    r = dual_check(tr, X, X, 1, seed=seed)
    return r["status"] == "pass" and _close(r["lhs"], 0, 0), {}


@case("dual_check random N=3")
def _(seed):
    rng = np.random.default_rng(seed)
    st, gap = set(), 0.0
    for _ in range(20):
        tr = random_tree(rng, 3)
        r = dual_check(tr, rng.normal(size=tr.n_leaves), rng.normal(size=tr.n_leaves), int(rng.integers(0, 4)),
                       budget=20, seed=seed)
        st.add(r["status"])
        gap = max(gap, r["max_gap"])
    return st == {"pass"} and gap <= 1e-12, {"max_gap": gap}


@case("sup_of_family Linear and WorstCase")
def _(seed):
    rng = np.random.default_rng(seed)
    tr = random_tree(rng, 3)
    X = rng.normal(size=tr.n_leaves)
    a = _close(sup_of_family([Linear(None)], tr, X, 1).value, -cond_expect(tr, X, 1), 0)
    b = _close(sup_of_family([Linear(None), WorstCase()], tr, X, 1).value, evaluate(WorstCase(), tr, X, 1), 0)
    return a and b, {}


@case("shift_measure Z=0 and entropic envelope A6")
def _(seed):
    rng = np.random.default_rng(seed)
    tr = random_tree(rng, 3)
    X = rng.normal(size=tr.n_leaves)
    inner = Envelope((Entropic(1.0), Entropic(2.0)))
    s = shift_measure(inner, np.zeros(tr.n_leaves))
    a = _close(evaluate(s, tr, X, 0), evaluate(inner, tr, X, 0), 0)
    r = check_axioms(s, tr, ["A6"], budget=1000, seed=seed)["A6"]
    return a and r.status == "pass", {"A6": r.status}


# --- gexp ----------------------------------------------------------------------


@case("solve_bsde g=0 is cond_expect")
def _(seed):
    rng = np.random.default_rng(seed)
    tr = build_binomial(4, 1.0)
    X = rng.normal(size=16)
    sol = solve_bsde(tr, make_generator("zero"), X)
    return all(_close(sol.Y[t], cond_expect(tr, X, t), 1e-15) for t in range(5)), {}


@case("solve_bsde abs(0.5) one step")
def _(seed):
    tr = build_binomial(1, 0.04)
    sol = solve_bsde(tr, make_generator("abs", kappa=0.5), [-1.0, 1.0])
    y, z = float(sol.Y[0][0]), float(sol.Z[0][0])
    o = oracles.one_step_bsde(make_generator("abs", kappa=0.5), 0.04, -1.0, 1.0)
    return abs(y - 0.1) <= 1e-15 and abs(z - 5.0) <= 1e-12 and abs(o - y) <= 1e-15, {"Y0": y, "Z0": z}


@case("g_risk deterministic and zero")
def _(seed):
    tr = build_binomial(3, 0.3)
    ok = True
    for name in ("abs", "asymmetric", "example41", "quadratic"):
        g = make_generator(name)
        ok &= all(_close(g_risk(g, tr, np.full(8, 0.6), t), -0.6, 1e-15) for t in range(4))
        ok &= all(_close(g_risk(g, tr, np.zeros(8), t), 0, 0) for t in range(4))
    return bool(ok), {}


@case("g_risk translation")
def _(seed):
    rng = np.random.default_rng(seed)
    tr = build_binomial(4, 0.4)
    gap = 0.0
    for name in ("abs", "asymmetric", "example41"):
        g = make_generator(name)
        X = 0.3 * rng.normal(size=16)
        for t in range(5):
            m = rng.normal(size=tr.level_size(t))
            gap = max(gap, float(np.max(np.abs(g_risk(g, tr, X + lift(tr, m, t), t) - (g_risk(g, tr, X, t) - m)))))
    return gap <= 1e-12, {"gap": gap}


@case("g_risk example41 star-shaped at alpha=1.7")
def _(seed):
    rng = np.random.default_rng(seed)
    tr = build_binomial(4, 0.4)
    g = make_generator("example41")
    worst = -np.inf
    for _ in range(50):
        X = 0.1 * rng.normal(size=16)
        for t in range(4):
            worst = max(worst, float(np.max(1.7 * g_risk(g, tr, X, t) - g_risk(g, tr, 1.7 * X, t))))
    return worst <= 1e-12, {"max_violation": worst}


@case("check_generator catalogue")
def _(seed):
    z = np.linspace(-3, 3, 121)
    a = np.linspace(1, 4, 13)
    e = check_generator(make_generator("example41"), [0.0], z, a)
    k = check_generator(make_generator("abs", kappa=0.7), [0.0], z, a)
    s = check_generator(make_generator("asymmetric", k1=0.5, k2=1.0), [0.0], z, a)
    ok = (e["C4_star_shaped"]["holds"] and not e["convex"]["holds"] and e["C3_normalized"]["holds"]
          and k["C4_star_shaped"]["holds"] and k["convex"]["holds"] and k["C2_lipschitz"]["sampled_K"] <= 0.7 + 1e-9
          and s["C4_star_shaped"]["holds"] and s["concave"]["holds"]
          and e["flags_consistent"] and k["flags_consistent"] and s["flags_consistent"])
    return bool(ok), {"example41_convex_witness": e["convex"]["witness"]}


@case("maxmin_dp one step")
def _(seed):
    tr = build_binomial(1, 0.04)
    xi = [-1.0, 1.0]
    s, i, h = (float(maxmin_dp(tr, 0.5, xi, 0, m)[0]) for m in ("sup", "inf", 0.5))
    es = oracles.maxmin_enumeration(tr, 0.5, xi, 1.0)
    ei = oracles.maxmin_enumeration(tr, 0.5, xi, -1.0)
    ok = abs(s - 0.1) <= 1e-15 and abs(i + 0.1) <= 1e-15 and abs(h) <= 1e-15 and abs(es - s) <= 1e-15 \
        and abs(ei - i) <= 1e-15
    return ok, {"sup": s, "inf": i, "alpha_half": h}


@case("maxmin_dp sup = bsde abs")
def _(seed):
    rng = np.random.default_rng(seed)
    gap = 0.0
    for N in range(1, 11):
        tr = build_binomial(N, 1.0)
        kappa = 0.9 / math.sqrt(tr.dt) * rng.random()
        xi = rng.normal(size=tr.n_leaves)
        gap = max(gap, float(np.max(np.abs(maxmin_dp(tr, kappa, xi, 0, "sup")
                                           - solve_bsde(tr, make_generator("abs", kappa=kappa), xi).Y[0]))))
    return gap <= 1e-12, {"gap": gap}


@case("maxmin_dp deterministic")
def _(seed):
    tr = build_binomial(3, 1.0)
    return all(_close(maxmin_dp(tr, 0.5, np.full(8, 1.5), t, m), 1.5, 1e-15)
               for t in range(4) for m in ("sup", "inf", 0.3)), {}


@case("entropic_bsde base zero oracle and deterministic")
def _(seed):
    rng = np.random.default_rng(seed)
    tr = build_binomial(4, 1.0)
    xi = rng.normal(size=16)
    r = entropic_bsde(tr, 1.0, make_generator("zero"), xi, 0)
    a = _close(r.oracle, oracles.entropic_direct(tr, xi, 0, 1.0), 1e-12)
    d = entropic_bsde(tr, 1.0, make_generator("asymmetric"), np.full(16, 0.8), 1)
    b = _close(d.bsde, -0.8, 1e-12) and _close(d.oracle, -0.8, 1e-12)
    return a and b, {"gap": r.gap}


@case("entropic_bsde asymmetric gap shrinks")
def _(seed):
    f = PathFunctional("of_terminal_sum")
    rows = convergence_study(make_generator("asymmetric"), f, [4, 8, 16], gamma=1.0)
    errs = [r["abs_error"] for r in rows]
    return errs[0] > errs[1] > errs[2], {"errors": errs}


@case("relative_entropy R=Q and one step")
def _(seed):
    rng = np.random.default_rng(seed)
    tr = random_tree(rng, 3)
    Q = random_measure(tr, rng)
    a = _close(relative_entropy(tr, Q, Q, 1), 0, 0)
    h = float(relative_entropy(_half(), MeasureChange((np.ones(1), np.array([0.75, 0.25]))),
                               reference_measure(_half()), 0)[0])
    ok = a and abs(h - (0.75 * math.log(1.5) + 0.25 * math.log(0.5))) <= 1e-15
    return ok, {"value": h}


@case("entropic variational identity")
def _(seed):
    rng = np.random.default_rng(seed)
    tr = random_tree(rng, 3)
    Q = random_measure(tr, rng)
    xi = rng.normal(size=tr.n_leaves)
    gap, excess = 0.0, -np.inf
    for t in range(4):
        lhs = entropic_linear(tr, xi, 1.5, t, Q)
        Rstar = entropic_maximizer(tr, xi, 1.5, Q)
        gap = max(gap, float(np.max(np.abs(entropic_dual_value(tr, xi, 1.5, Rstar, t, Q) - lhs))))
        for _ in range(20):
            R = random_measure(tr, rng)
            excess = max(excess, float(np.max(entropic_dual_value(tr, xi, 1.5, R, t, Q) - lhs)))
    return gap <= 1e-9 and excess <= 1e-12, {"gap": gap}


@case("convergence zero, entropic, abs")
def _(seed):
    f = PathFunctional("of_terminal_sum")
    z = convergence_study(make_generator("zero"), PathFunctional("of_terminal_sum", "sin"), [4, 8, 16, 32])
    e = convergence_study(make_generator("zero"), f, [4, 8, 16, 32], gamma=1.0)
    a = convergence_study(make_generator("abs", kappa=0.5), PathFunctional("of_terminal_sum", "tanh"), [4, 8, 16])
    ratios = [r["ratio"] for r in e[1:]]
    ok = (max(r["abs_error"] for r in z) <= 1e-12 and max(r["abs_error"] for r in a) <= 1e-12
          and all(q >= 1.3 for q in ratios))
    return ok, {"entropic_ratios": ratios}


# --- dynamics ------------------------------------------------------------------


@case("time consistency Linear(Q)")
def _(seed):
    rng = np.random.default_rng(seed)
    tr = random_tree(rng, 3)
    spec = Linear(random_measure(tr, rng))
    X = rng.normal(size=tr.n_leaves)
    gap = max(check_time_consistency(spec, tr, X, t, s)["gap"] for t in range(4) for s in range(t, 4))
    return gap <= 1e-12, {"gap": gap}


@case("time consistency VaR witness")
def _(seed):
    tr = build_binomial(2, 1.0)
    w = find_inconsistency(ConditionalVaR(0.3), tr, [-1.0, 0.0, 1.0], 0, 1)
    again = check_time_consistency(ConditionalVaR(0.3), tr, w["X"], 0, 1)["gap"] if w else None
    return w is not None and w["gap"] > 1e-6 and again == w["gap"], {"witness": w}


@case("sensitivity Linear and WorstCase")
def _(seed):
    tr = build_binomial(3, 1.0)
    a = check_sensitivity(Linear(None), tr, 0, None, budget=16, seed=seed)
    b = check_sensitivity(WorstCase(), tr, 1, None, budget=16, seed=seed)
    ok = a.verdict == "sensitive_evidence" and not a.data["atoms_failing"] and not b.data["atoms_failing"]
    return ok, {"linear": a.verdict, "worst_case": b.verdict}


@case("sensitivity inherited by envelope members")
def _(seed):
    rng = np.random.default_rng(seed)
    tr = build_binomial(3, 1.0)
    Q = measure_from_density(tr, rng.uniform(0.5, 2, 8))
    verdicts = []
    # Linear(P) is sensitive only for Q~ = P
    for src, Qt in ((Entropic(1.0), Q), (WorstCase(), Q), (Linear(None), None)):
        if check_sensitivity(src, tr, 0, Qt, budget=16, seed=seed).verdict == "insensitive_witness":
            return False, {}
        X = rng.normal(size=8)
        Z0 = X + lift(tr, evaluate(src, tr, X, 0), 0)
        for kind in ("monetary", "star"):
            verdicts.append(check_sensitivity(EnvelopeMember(kind, Z0, 0), tr, 0, Qt, budget=16, seed=seed).verdict)
    return "insensitive_witness" not in verdicts, {"member_verdicts": verdicts}


# --- cli -------------------------------------------------------------------------


def _model(name):
    return str(resources.files("riskenv").joinpath("models", name))


def _cli(argv):
    from .cli import run

    code, _, report, _ = run(argv)
    return code, report


@case("cli eval entropic two-leaf")
def _(seed):
    code, rep = _cli(["eval", "--model", _model("two_leaf_entropic.json"), "--measure", "entropic"])
    v = rep["results"]["profiles"]["entropic"]["X"][0]
    return code == 0 and abs(v - math.log(2)) <= 1e-12, {"value": float(v)}


@case("cli eval VaR three-atom")
def _(seed):
    code, rep = _cli(["eval", "--model", _model("three_atom_var.json")])
    v = rep["results"]["profiles"]["var"]["X"][0]
    return code == 0 and v == 0.0, {"value": float(v)}


@case("cli eval zero payoff")
def _(seed):
    from .model import load_model

    vals = []
    for name in ("two_leaf_entropic.json", "three_atom_var.json", "binomial_sensitivity.json"):
        m = load_model(_model(name))
        for spec in m.measures.values():
            vals.append(float(np.max(np.abs(evaluate(spec, m.tree, np.zeros(m.tree.n_leaves), 0)))))
    return max(vals) <= 1e-12, {"max_abs": max(vals)}


@case("cli envelope attainment examples")
def _(seed):
    code, rep = _cli(["envelope", "--model", _model("two_leaf_entropic.json"), "--measure", "entropic"])
    return code == 0, {"statuses": [c["status"] for c in rep["checks"]]}


@case("cli bsde abs(0.5)")
def _(seed):
    code, rep = _cli(["bsde", "--model", _model("one_step_bsde.json")])
    v = rep["results"]["bsde"]["abs"]["xi"]["Y0"]
    return code == 0 and abs(v - 0.1) <= 1e-15, {"Y0": float(v)}


@case("cli convergence entropic")
def _(seed):
    code, rep = _cli(["convergence", "--model", _model("entropic_convergence.json")])
    return code == 0, {"errors": rep["checks"][0]["errors"]}


@case("cli axioms VaR A4 witness")
def _(seed):
    code, rep = _cli(["axioms", "--model", _model("three_atom_var.json"), "--seed", str(seed)])
    a4 = [c for c in rep["checks"] if c["check"] == "axiom_A4"][0]
    return code == 1 and a4["status"] == "fail" and "witness" in a4, {"A4": a4["status"]}


@case("cli consistency and sensitivity")
def _(seed):
    c1, r1 = _cli(["consistency", "--model", _model("var_consistency.json"), "--measure", "var"])
    c2, r2 = _cli(["consistency", "--model", _model("var_consistency.json"), "--measure", "linear"])
    c3, r3 = _cli(["sensitivity", "--model", _model("binomial_sensitivity.json"), "--measure", "linear"])
    return (c1, c2, c3) == (1, 0, 0), {"codes": [c1, c2, c3]}


# ---------------------------------------------------------------------------


def _run_case(item, seed):
    name, fn = item
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ComparisonWarning)
        try:
            ok, detail = fn(seed)
        except Exception as exc:  # a crash is a failed case, reported not raised
            ok, detail = False, {"error": f"{type(exc).__name__}: {exc}"}
    return {"case": name, "status": "pass" if ok else "fail", "detail": detail}


def run_selftest(seed: int = 0, threads: int | None = None):
    """Run every case; returns ``(report, all_passed)``."""
    if threads is None:
        threads = max(1, int(os.environ.get("RISKENV_THREADS", "1") or 1))
    with ThreadPoolExecutor(max_workers=threads) as pool:
        results = list(pool.map(lambda it: _run_case(it, seed), CASES))
    passed = sum(r["status"] == "pass" for r in results)
    report = {"command": "selftest", "cases": results, "passed": passed, "failed": len(results) - passed,
              "seed": seed, "version": __version__}
    return report, passed == len(results)


def format_scorecard(report) -> str:
    lines = [f"{'PASS' if r['status'] == 'pass' else 'FAIL'}  {r['case']}" for r in report["cases"]]
    lines.append(f"{report['passed']}/{report['passed'] + report['failed']} cases passed")
    return "\n".join(lines) + "\n"
