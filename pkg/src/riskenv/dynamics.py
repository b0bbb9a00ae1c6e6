"""Time-consistency and sensitivity diagnostics for any risk measure spec."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError
from .measures import ConditionalVaR, Linear, RobustVaR, WorstCase, AlphaMaxmin, evaluate, spec_levels
from .members import EnvelopeMember
from .space import MeasureChange, ScenarioTree, _as_rv, cond_expect, lift

CONSISTENCY_TOL = 1e-12
RAY_SCALES = tuple(2.0**j for j in range(17))
DESCENT_PER_DOUBLING = 1.0


def check_time_consistency(spec, tree: ScenarioTree, X, t: int, s: int, tol: float = CONSISTENCY_TOL) -> dict:
    """Compare ``rho_t(-rho_s(X))`` (with ``-rho_s(X)`` lifted to a terminal variable) with ``rho_t(X)``."""
    if not 0 <= t <= s <= tree.N:
        raise InputError(f"need 0 <= t <= s <= N, got t={t}, s={s}")
    X = _as_rv(tree, X)
    direct = evaluate(spec, tree, X, t)
    nested = evaluate(spec, tree, lift(tree, -evaluate(spec, tree, X, s), s), t)
    gap = np.abs(nested - direct)
    return {"t": t, "s": s, "gap": float(gap.max()), "node": int(np.argmax(gap)),
            "direct": direct.tolist(), "nested": nested.tolist(), "consistent": bool(gap.max() <= tol)}


@dataclass
class ConsistencyReport:
    pairs: list = field(default_factory=list)
    max_gap: float = 0.0
    witness: dict | None = None
    tol: float = CONSISTENCY_TOL

    @property
    def consistent(self) -> bool:
        return self.max_gap <= self.tol

    def to_json(self) -> dict:
        return {"pairs": self.pairs, "max_gap": self.max_gap, "witness": self.witness,
                "tol": self.tol, "consistent": self.consistent}


def consistency_sweep(spec, tree: ScenarioTree, payoffs, tol: float = CONSISTENCY_TOL) -> ConsistencyReport:
    """All pairs ``0 <= t <= s <= N`` for every payoff; records the worst gap."""
    rep = ConsistencyReport(tol=tol)
    for X in payoffs:
        X = _as_rv(tree, X)
        for t in range(tree.N + 1):
            for s in range(t, tree.N + 1):
                e = check_time_consistency(spec, tree, X, t, s, tol)
                if (t, s) not in rep.pairs:
                    rep.pairs.append((t, s))
                if e["gap"] > rep.max_gap:
                    rep.max_gap = e["gap"]
                    rep.witness = {"X": X.tolist(), "t": t, "s": s, "node": e["node"], "gap": e["gap"]}
    return rep


def find_inconsistency(spec, tree: ScenarioTree, grid, t: int = 0, s: int | None = None) -> dict | None:
    """Exhaustive search over payoffs with leaf values in ``grid``; returns the
    first payoff attaining the largest gap, or None if every gap is zero."""
    s = 1 if s is None else s
    best = None
    for vals in itertools.product(grid, repeat=tree.n_leaves):
        X = np.array(vals, dtype=float)
        e = check_time_consistency(spec, tree, X, t, s)
        if e["gap"] > 0 and (best is None or e["gap"] > best["gap"]):
            best = {"X": X.tolist(), "t": t, "s": s, "gap": e["gap"], "node": e["node"],
                    "direct": e["direct"], "nested": e["nested"]}
    return best


def _coherent(spec) -> bool:
    match spec:
        case Linear() | WorstCase():
            return True
        case EnvelopeMember(kind="cone"):
            return True
    return False


def _positively_homogeneous(spec) -> bool:
    match spec:
        case ConditionalVaR() | RobustVaR() | AlphaMaxmin():
            return True
    return _coherent(spec)


@dataclass
class SensitivityReport:
    mode: str
    verdict: str  # sensitive_evidence | insensitive_witness | inconclusive
    data: dict

    def to_json(self) -> dict:
        return {"mode": self.mode, "verdict": self.verdict, "data": self.data}


def _ray(spec, tree, t, d, Qtilde):
    """Walk ``k d`` over the scale ladder; a witness if every step stays acceptable
    while ``E_Q[k d]`` keeps falling by at least one unit per doubling."""
    trace = []
    for k in RAY_SCALES:
        rho = evaluate(spec, tree, k * d, t)
        e = float(cond_expect(tree, k * d, 0, Qtilde)[0])
        trace.append((k, float(rho.max()), e))
        if rho.max() > 1e-9:
            return False, trace
    last_drop = trace[-2][2] - trace[-1][2]
    return last_drop >= DESCENT_PER_DOUBLING, trace


def check_sensitivity(spec, tree: ScenarioTree, t: int, Qtilde: MeasureChange | None = None,
                      budget: int = 64, seed: int = 0) -> SensitivityReport:
    """Atom test plus a seeded ray search for unbounded descent of ``E_Q~`` on the acceptance set.

    Atom test: for every leaf ``w``, ``rho_t(-1_w) > rho_t(0)`` at some level-t
    node.  Singletons suffice because monotonicity carries the strict
    inequality to every event containing ``w``.  For coherent specs this is a
    complete test; for the rest the report is a semi-decision.
    """
    if Qtilde is not None:
        Qtilde.validate(tree)
        if not Qtilde.equivalent:
            raise InputError("Q~ must be equivalent to P")
    if t not in spec_levels(spec, tree):
        raise InputError(f"spec cannot be evaluated at level {t}")
    n = tree.n_leaves
    zero = evaluate(spec, tree, np.zeros(n), t)
    failing = []
    for w in range(n):
        ind = np.zeros(n)
        ind[w] = 1.0
        if not np.any(evaluate(spec, tree, -ind, t) > zero + 1e-12):
            failing.append(w)
    atom_ok = not failing
    coherent = _coherent(spec)
    data = {"t": t, "atoms_tested": n, "atoms_failing": failing, "regime": "complete" if coherent else "semi-decision"}

    rng = np.random.default_rng(seed)
    candidates = []
    for w in failing:
        d = np.zeros(n)
        d[w] = -1.0
        candidates.append(d)
    for _ in range(budget):
        d = rng.normal(size=n)
        if _positively_homogeneous(spec) or rng.random() < 0.5:
            d = d + lift(tree, evaluate(spec, tree, d, t), t)
        candidates.append(d)
    witness = None
    for d in candidates:
        if cond_expect(tree, d, 0, Qtilde)[0] >= 0:
            continue
        hit, trace = _ray(spec, tree, t, d, Qtilde)
        if hit:
            witness = {"direction": d.tolist(), "trace": trace}
            break
    data["rays_tested"] = len(candidates)
    if witness is not None:
        data["witness"] = witness
        return SensitivityReport("ray_search", "insensitive_witness", data)
    if atom_ok:
        return SensitivityReport("atom_test", "sensitive_evidence", data)
    return SensitivityReport("ray_search", "inconclusive", data)
