"""Concrete dynamic risk measures and a randomized falsifier for the axioms.

Every evaluator maps a terminal variable ``X`` (leaf array) to a level-t
profile.  Axioms, with alpha and m level-t profiles:

    A1  X <= Y                 => rho(X) >= rho(Y)
    A2  rho(X + m)             =  rho(X) - m
    A3  rho(0)                 =  0
    A4  rho(aX + (1-a)Y)       <= a rho(X) + (1-a) rho(Y),   0 <= a <= 1
    A5  rho(aX)                =  a rho(X),                 a >= 0
    A6  rho(aX)                >= a rho(X),                 a >= 1
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np

from .errors import InputError, NumericError
from .gexp import Generator, g_risk, maxmin_dp
from .members import EnvelopeMember, member_eval
from .space import (
    MeasureChange,
    ScenarioTree,
    _as_rv,
    cond_expect,
    cond_inf,
    cond_sup,
    leaf_probs,
    lift,
)

AXIOMS = ("A1", "A2", "A3", "A4", "A5", "A6")
AXIOM_TOL = 1e-9
BISECTION_TOL = 1e-10
BISECTION_MAXITER = 200
# cumulative probabilities exceed lambda only by more than rounding
QUANTILE_SLACK = 1e-13


# ---------------------------------------------------------------------------
# utilities


@dataclass(frozen=True, eq=False)
class Utility:
    name: str
    evaluate: Callable
    declared_star_shaped: bool = False
    params: dict = field(default_factory=dict)

    def __call__(self, x):
        return self.evaluate(np.asarray(x, dtype=float))

    def check(self, grid=None, lambdas=None, tol: float = 1e-12) -> dict:
        """Sampled audit: increasing, u(0) = 0, and u(lx)/l non-increasing in l if declared."""
        x = np.linspace(-5, 5, 201) if grid is None else np.asarray(grid, dtype=float)
        lam = np.linspace(0.1, 5, 50) if lambdas is None else np.asarray(lambdas, dtype=float)
        u = self(np.sort(x))
        increasing = bool(np.all(np.diff(u) >= -tol))
        zero = abs(float(self(np.zeros(1))[0])) <= tol
        star = True
        if self.declared_star_shaped:
            L, XX = np.meshgrid(lam, x, indexing="ij")
            ratio = self(L * XX) / L
            star = bool(np.all(np.diff(ratio, axis=0) <= 1e-9 * (1 + np.abs(ratio[1:]))))
        return {"increasing": increasing, "zero_at_zero": zero, "star_shaped": star,
                "ok": increasing and zero and star}

    def to_json(self) -> dict:
        return {"name": self.name, **self.params}


def make_utility(name: str, **params) -> Utility:
    """Catalogue: linear, exponential (1 - exp(-a x)), piecewise_linear (gain x+ - loss x-)."""
    if name == "linear":
        return Utility("linear", lambda x: x, True, {})
    if name == "exponential":
        a = float(params.get("a", 1.0))
        if a <= 0:
            raise InputError("exponential utility needs a > 0")
        return Utility("exponential", lambda x: -np.expm1(-a * x), True, {"a": a})
    if name == "piecewise_linear":
        gain, loss = float(params.get("gain", 1.0)), float(params.get("loss", 2.0))
        if gain <= 0 or loss <= 0:
            raise InputError("piecewise_linear utility needs positive slopes")
        return Utility("piecewise_linear", lambda x: gain * np.maximum(x, 0) - loss * np.maximum(-x, 0), True,
                       {"gain": gain, "loss": loss})
    raise InputError(f"unknown utility {name!r}")


# ---------------------------------------------------------------------------
# specs


@dataclass(frozen=True, eq=False)
class ConditionalVaR:
    lam: float
    base: MeasureChange | None = None

    def __post_init__(self):
        if not 0 < self.lam < 1:
            raise InputError("VaR level lambda must lie in (0, 1)")


@dataclass(frozen=True, eq=False)
class RobustVaR:
    lam: float
    scenarios: tuple

    def __post_init__(self):
        if not 0 < self.lam < 1:
            raise InputError("VaR level lambda must lie in (0, 1)")
        if len(self.scenarios) == 0:
            raise InputError("robust VaR needs at least one scenario")


@dataclass(frozen=True, eq=False)
class Entropic:
    gamma: float
    base: MeasureChange | None = None

    def __post_init__(self):
        if not self.gamma > 0:
            raise InputError("entropic gamma must be > 0")


@dataclass(frozen=True, eq=False)
class UtilityShortfall:
    utility: Utility
    tol: float = BISECTION_TOL

    def __post_init__(self):
        if not self.tol > 0:
            raise InputError("bisection tolerance must be > 0")
        audit = self.utility.check()
        if not (audit["increasing"] and audit["zero_at_zero"]):
            raise InputError(f"utility {self.utility.name!r} must be increasing with u(0) = 0")


@dataclass(frozen=True, eq=False)
class Linear:
    Q: MeasureChange | None = None


@dataclass(frozen=True)
class WorstCase:
    pass


@dataclass(frozen=True, eq=False)
class GExpectation:
    generator: Generator


@dataclass(frozen=True)
class AlphaMaxmin:
    kappa: float
    alpha: float

    def __post_init__(self):
        if not self.kappa > 0 or not 0 <= self.alpha <= 1:
            raise InputError("alpha-maxmin needs kappa > 0 and alpha in [0, 1]")


@dataclass(frozen=True, eq=False)
class Shifted:
    inner: "RiskMeasureSpec"
    Z: np.ndarray


@dataclass(frozen=True, eq=False)
class Envelope:
    """Lower envelope (nodewise minimum) of arbitrary member specs."""

    members: tuple

    def __post_init__(self):
        if len(self.members) == 0:
            raise InputError("envelope needs at least one member")


@dataclass(frozen=True, eq=False)
class SupOfFamily:
    members: tuple

    def __post_init__(self):
        if len(self.members) == 0:
            raise InputError("family needs at least one member")


RiskMeasureSpec = Union[ConditionalVaR, RobustVaR, Entropic, UtilityShortfall, Linear, WorstCase,
                        GExpectation, AlphaMaxmin, Shifted, EnvelopeMember, Envelope, SupOfFamily]


# ---------------------------------------------------------------------------
# evaluators


def _require_equivalent(Q: MeasureChange | None, tree: ScenarioTree) -> None:
    if Q is None:
        return
    Q.validate(tree)
    if not Q.equivalent:
        raise InputError("measure change must be equivalent to P")


def var_conditional(tree: ScenarioTree, X, t: int, lam: float, Q: MeasureChange | None = None) -> np.ndarray:
    """Conditional VaR: least m with ``Q[X + m < 0 | node] <= lam``.

    The left quantile ``q = sup{c : Q[X < c] <= lam}`` equals the smallest atom
    whose cumulative probability exceeds ``lam``; the value is ``-q``.
    """
    X = _as_rv(tree, X)
    _require_equivalent(Q, tree)
    if not 0 < lam < 1:
        raise InputError("VaR level lambda must lie in (0, 1)")
    w = leaf_probs(tree, t, Q)
    offs = tree.leaf_offsets[t]
    out = np.empty(tree.level_size(t))
    for n in range(len(out)):
        vals, inv = np.unique(X[offs[n]:offs[n + 1]], return_inverse=True)
        F = np.cumsum(np.bincount(inv, weights=w[offs[n]:offs[n + 1]], minlength=len(vals)))
        out[n] = 0.0 - vals[int(np.argmax(F > lam + QUANTILE_SLACK))]
    return out


def robust_var(tree: ScenarioTree, X, t: int, lam: float, scenarios) -> np.ndarray:
    scenarios = list(scenarios)
    if not scenarios:
        raise InputError("robust VaR needs at least one scenario")
    return np.max([var_conditional(tree, X, t, lam, Q) for Q in scenarios], axis=0)


def entropic(tree: ScenarioTree, X, t: int, gamma: float, Q: MeasureChange | None = None) -> np.ndarray:
    """``(1/gamma) ln E_Q[exp(-gamma X) | F_t]``, shifted by the subtree max for overflow safety."""
    X = _as_rv(tree, X)
    if Q is not None:
        Q.validate(tree)
    a = -gamma * X
    m = cond_sup(tree, a, t)
    e = cond_expect(tree, np.exp(a - lift(tree, m, t)), t, Q)
    if not np.all(np.isfinite(e)) or np.any(e <= 0):
        raise NumericError("entropic evaluation overflowed")
    return (np.log(e) + m) / gamma


def utility_shortfall(tree: ScenarioTree, X, t: int, utility: Utility, tol: float = BISECTION_TOL) -> np.ndarray:
    """Least m per node with ``E[u(m + X) | node] >= 0``, by bisection to ``tol``.

    Returns the upper end of the final bracket, so the returned cash always
    satisfies the constraint.
    """
    X = _as_rv(tree, X)
    lo = -cond_sup(tree, X, t) - 1.0
    hi = -cond_inf(tree, X, t) + 1.0

    def h(m):
        with np.errstate(over="ignore"):
            return cond_expect(tree, utility(lift(tree, m, t) + X), t)

    if np.any(h(lo) >= 0) or np.any(h(hi) < 0):
        raise NumericError("utility shortfall: no sign change in the bisection bracket")
    for _ in range(BISECTION_MAXITER):
        if np.max(hi - lo) <= tol:
            break
        mid = 0.5 * (lo + hi)
        ok = h(mid) >= 0
        hi = np.where(ok, mid, hi)
        lo = np.where(ok, lo, mid)
    return hi


def linear(tree: ScenarioTree, X, t: int, Q: MeasureChange | None = None) -> np.ndarray:
    if Q is not None:
        Q.validate(tree)
    return -cond_expect(tree, X, t, Q)


def worst_case(tree: ScenarioTree, X, t: int) -> np.ndarray:
    return -cond_inf(tree, X, t)


def alpha_maxmin(tree: ScenarioTree, X, t: int, kappa: float, alpha: float) -> np.ndarray:
    """``alpha sup_theta E[-X | F_t] + (1 - alpha) inf_theta E[-X | F_t]``."""
    return maxmin_dp(tree, kappa, -_as_rv(tree, X), t, alpha)


def evaluate(spec, tree: ScenarioTree, X, t: int) -> np.ndarray:
    """Level-t profile of ``spec`` at the terminal variable ``X``."""
    tree.check_level(t)
    X = _as_rv(tree, X)
    match spec:
        case ConditionalVaR(lam=lam, base=Q):
            out = var_conditional(tree, X, t, lam, Q)
        case RobustVaR(lam=lam, scenarios=sc):
            out = robust_var(tree, X, t, lam, sc)
        case Entropic(gamma=g, base=Q):
            out = entropic(tree, X, t, g, Q)
        case UtilityShortfall(utility=u, tol=tol):
            out = utility_shortfall(tree, X, t, u, tol)
        case Linear(Q=Q):
            out = linear(tree, X, t, Q)
        case WorstCase():
            out = worst_case(tree, X, t)
        case GExpectation(generator=gen):
            out = g_risk(gen, tree, X, t)
        case AlphaMaxmin(kappa=k, alpha=a):
            out = alpha_maxmin(tree, X, t, k, a)
        case Shifted(inner=inner, Z=Z):
            out = evaluate(inner, tree, X + _as_rv(tree, Z), t)
        case EnvelopeMember():
            out = member_eval(spec, tree, X, t)
        case Envelope(members=ms):
            out = np.min([evaluate(m, tree, X, t) for m in ms], axis=0)
        case SupOfFamily(members=ms):
            out = np.max([evaluate(m, tree, X, t) for m in ms], axis=0)
        case _:
            raise InputError(f"unknown risk measure spec {type(spec).__name__}")
    if not np.all(np.isfinite(out)):
        raise NumericError(f"{type(spec).__name__} produced a non-finite value")
    return out


def spec_levels(spec, tree: ScenarioTree) -> list:
    """Levels at which ``spec`` can be evaluated (members are tied to their anchor level)."""
    levels = set(range(tree.N + 1))
    match spec:
        case EnvelopeMember(t=t):
            levels &= {t}
        case Shifted(inner=inner):
            levels &= set(spec_levels(inner, tree))
        case Envelope(members=ms) | SupOfFamily(members=ms):
            for m in ms:
                levels &= set(spec_levels(m, tree))
    return sorted(levels)


def spec_tolerance(spec) -> float:
    """Falsifier tolerance: 1e-9, loosened to cover bisection error where it enters."""
    match spec:
        case UtilityShortfall(tol=tol):
            return max(AXIOM_TOL, 8 * tol)
        case Shifted(inner=inner):
            return spec_tolerance(inner)
        case Envelope(members=ms) | SupOfFamily(members=ms):
            return max(spec_tolerance(m) for m in ms)
    return AXIOM_TOL


# ---------------------------------------------------------------------------
# falsifier


@dataclass
class AxiomResult:
    axiom: str
    status: str  # "pass" (no witness in budget), "fail" or "skipped"
    margin: float
    samples: int
    witness: dict | None = None

    def to_json(self) -> dict:
        out = {"axiom": self.axiom, "status": self.status, "margin": self.margin, "samples": self.samples}
        if self.witness is not None:
            out["witness"] = self.witness
        return out


def _payoff(rng: np.random.Generator, n: int) -> np.ndarray:
    r = rng.integers(6)
    if r == 0:
        return rng.uniform(-1, 1, n)
    if r == 1:
        return rng.normal(0, 2, n)
    if r == 2:
        return rng.integers(-2, 3, n).astype(float)
    if r == 3:
        return (rng.random(n) < 0.5).astype(float) * rng.choice([-1.0, 1.0]) * rng.uniform(0.5, 3)
    if r == 4:
        return np.full(n, rng.uniform(-2, 2))
    return rng.uniform(-3, 3) * rng.uniform(-1, 1, n) ** 3


def _profile(rng: np.random.Generator, n: int, lo: float, hi: float) -> np.ndarray:
    r = rng.integers(3)
    if r == 0:
        return rng.uniform(lo, hi, n)
    if r == 1:
        return rng.choice([lo, 0.5 * (lo + hi), hi], n)
    return np.full(n, rng.uniform(lo, hi))


def check_axioms(spec, tree: ScenarioTree, which=AXIOMS, budget: int = 1000, seed: int = 0,
                 t: int | None = None) -> dict:
    """Randomized falsification of the selected axioms.

    Each axiom gets its own seeded stream derived from ``seed`` so reports are
    reproducible whatever subset is requested.  The first violating sample is
    reported with its margin; ``pass`` only means no witness within budget.
    """
    if budget < 1:
        raise InputError("budget must be >= 1")
    tol = spec_tolerance(spec)
    levels = spec_levels(spec, tree)
    if t is not None:
        levels = [t] if t in levels else []
    if len(levels) > 1 and tree.N in levels:
        levels.remove(tree.N)
    report = {}
    n = tree.n_leaves
    for ax in which:
        if ax not in AXIOMS:
            raise InputError(f"unknown axiom {ax!r}")
        if not levels:
            report[ax] = AxiomResult(ax, "skipped", 0.0, 0)
            continue
        rng = np.random.default_rng([seed, AXIOMS.index(ax)])
        worst = -math.inf
        result = None
        samples = 1 if ax == "A3" else budget
        for i in range(samples):
            lv = levels[int(rng.integers(len(levels)))] if ax != "A3" else levels[0]
            nt = tree.level_size(lv)
            X = _payoff(rng, n)
            Y = _payoff(rng, n)
            wit = {"t": lv, "X": X.tolist()}
            if ax == "A1":
                Y = X + np.abs(_payoff(rng, n)) * (rng.random(n) < 0.7)
                lhs, rhs = evaluate(spec, tree, Y, lv), evaluate(spec, tree, X, lv)
                viol = lhs - rhs  # need rho(Y) <= rho(X)
                wit["Y"] = Y.tolist()
                scale = 1.0
            elif ax == "A2":
                m = _profile(rng, nt, -3, 3)
                lhs = evaluate(spec, tree, X + lift(tree, m, lv), lv)
                rhs = evaluate(spec, tree, X, lv) - m
                viol = np.abs(lhs - rhs)
                wit["m"] = m.tolist()
                scale = 1.0 + np.abs(rhs)
            elif ax == "A3":
                for lv in levels:
                    lhs = evaluate(spec, tree, np.zeros(n), lv)
                    v = float(np.max(np.abs(lhs)))
                    if v > tol:
                        break
                wit = {"t": lv, "X": np.zeros(n).tolist()}
                rhs = np.zeros_like(lhs)
                viol = np.abs(lhs)
                scale = 1.0
            elif ax == "A4":
                a = _profile(rng, nt, 0, 1)
                al = lift(tree, a, lv)
                lhs = evaluate(spec, tree, al * X + (1 - al) * Y, lv)
                rhs = a * evaluate(spec, tree, X, lv) + (1 - a) * evaluate(spec, tree, Y, lv)
                viol = lhs - rhs
                wit.update(Y=Y.tolist(), alpha=a.tolist())
                scale = 1.0 + np.abs(rhs)
            elif ax == "A5":
                a = _profile(rng, nt, 0, 4)
                lhs = evaluate(spec, tree, lift(tree, a, lv) * X, lv)
                rhs = a * evaluate(spec, tree, X, lv)
                viol = np.abs(lhs - rhs)
                wit["alpha"] = a.tolist()
                scale = 1.0 + np.abs(rhs)
            else:
                a = _profile(rng, nt, 1, 4)
                lhs = evaluate(spec, tree, lift(tree, a, lv) * X, lv)
                rhs = a * evaluate(spec, tree, X, lv)
                viol = rhs - lhs
                wit["alpha"] = a.tolist()
                scale = 1.0 + np.abs(rhs)
            rel = viol / scale
            node = int(np.argmax(rel))
            worst = max(worst, float(viol[node]))
            if rel[node] > tol:
                wit.update(node=node, lhs=float(lhs[node]), rhs=float(rhs[node]), sample=i)
                result = AxiomResult(ax, "fail", float(viol[node]), i + 1, wit)
                break
        report[ax] = result or AxiomResult(ax, "pass", max(worst, 0.0), samples)
    return report


def axiom_report_json(report: dict) -> list:
    return [report[k].to_json() for k in sorted(report)]
