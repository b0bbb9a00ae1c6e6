"""Lower-envelope representations and their checks.

Any monetary (resp. normalized star-shaped, positively homogeneous) measure is
the nodewise minimum of the member measures anchored at its acceptable
positions, and the minimum is attained at ``Z0 = X + rho_t(X)``.  Monetary
members are dual to the penalty ``E_Q[-Z | F_t]``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateAnchorError, InputError
from .measures import Shifted, evaluate
from .members import (  # noqa: F401  (re-exported)
    EnvelopeMember,
    lower_envelope,
    member_argmin,
    member_eval,
    minimize_upper_envelope,
    upper_envelope,
)
from .space import (
    MeasureChange,
    ScenarioTree,
    _as_rv,
    cond_expect,
    lift,
    random_measure,
)

ATTAIN_TOL = 1e-9
DUAL_TOL = 1e-12
ACCEPT_TOL = 1e-9
MAX_VERTICES = 2**12


def is_acceptable(source, tree: ScenarioTree, Z, t: int, tol: float = ACCEPT_TOL) -> bool:
    return bool(np.all(evaluate(source, tree, Z, t) <= tol))


def random_acceptable_anchor(source, tree: ScenarioTree, t: int, rng: np.random.Generator,
                             scale: float = 1.0) -> np.ndarray:
    """Random ``W`` pushed into the acceptance set: ``W + rho_t(W) + c`` with ``c >= 0``.

    ``scale`` sizes both ``W`` and ``c``; sources that are only monetary on a
    bounded range (g-expectations with fast-growing drivers) need it small.
    """
    W = rng.normal(0, 1.5 * scale, tree.n_leaves) * rng.uniform(0.2, 2)
    c = scale * rng.exponential(0.5, tree.level_size(t)) * (rng.random(tree.level_size(t)) < 0.6)
    return W + lift(tree, evaluate(source, tree, W, t) + c, t)


def verify_attainment(source, kind: str, tree: ScenarioTree, X, t: int, budget: int = 50,
                      seed: int = 0, tol: float = ATTAIN_TOL, anchor_scale: float = 1.0) -> dict:
    """Check that the member anchored at ``Z0 = X + rho_t(X)`` reproduces ``rho_t(X)``
    and that members at random acceptable anchors dominate it."""
    X = _as_rv(tree, X)
    r = evaluate(source, tree, X, t)
    Z0 = X + lift(tree, r, t)
    report = {"check": "attainment", "kind": kind, "t": t, "rhs": r.tolist(), "anchors_tested": 0}
    if not is_acceptable(source, tree, Z0, t):
        report.update(status="contract_violation",
                      detail="Z0 = X + rho(X) is not acceptable; the source is not monetary",
                      witness={"X": X.tolist()})
        return report
    try:
        at = member_eval(EnvelopeMember(kind, Z0, t), tree, X, t)
    except DegenerateAnchorError as exc:
        report.update(status="contract_violation", detail=str(exc), witness={"X": X.tolist()})
        return report
    gap = np.abs(at - r)
    report.update(lhs=at.tolist(), max_gap=float(gap.max()))
    if gap.max() > tol:
        node = int(np.argmax(gap))
        report.update(status="fail", node=node, witness={"X": X.tolist(), "Z": Z0.tolist()})
        return report
    rng = np.random.default_rng(seed)
    worst = np.inf
    for _ in range(budget):
        Z = random_acceptable_anchor(source, tree, t, rng, anchor_scale)
        if not is_acceptable(source, tree, Z, t):
            continue
        report["anchors_tested"] += 1
        try:
            v = member_eval(EnvelopeMember(kind, Z, t), tree, X, t)
        except DegenerateAnchorError as exc:
            report.update(status="contract_violation", detail=str(exc), witness={"Z": Z.tolist()})
            return report
        margin = v - r
        worst = min(worst, float(margin.min()))
        if margin.min() < -tol:
            node = int(np.argmin(margin))
            report.update(status="fail", node=node, domination_margin=float(margin.min()),
                          witness={"X": X.tolist(), "Z": Z.tolist()})
            return report
    report.update(status="pass", domination_margin=worst if np.isfinite(worst) else None)
    return report


def penalty(tree: ScenarioTree, Z, Q: MeasureChange | None, t: int) -> np.ndarray:
    """Minimal penalty of the monetary member anchored at ``Z``: ``E_Q[-Z | F_t]``."""
    if Q is not None:
        Q.validate(tree)
    return cond_expect(tree, -_as_rv(tree, Z), t, Q)


def vertex_measure(tree: ScenarioTree, leaves, t: int) -> MeasureChange:
    """Point mass on one chosen leaf inside each level-t subtree; P elsewhere."""
    on = [None] * (tree.N + 1)
    on[tree.N] = np.zeros(tree.n_leaves, dtype=bool)
    on[tree.N][np.asarray(leaves)] = True
    for k in range(tree.N, t, -1):
        up = np.zeros(tree.level_size(k - 1), dtype=bool)
        up[tree.parents[k][on[k]]] = True
        on[k - 1] = up
    probs = [np.array(p) for p in tree.probs]
    for k in range(t + 1, tree.N + 1):
        probs[k] = np.where(on[k - 1][tree.parents[k]], on[k].astype(float), probs[k])
    return MeasureChange(tuple(probs))


def dual_value(tree: ScenarioTree, Z, X, Q: MeasureChange, t: int) -> np.ndarray:
    """``E_Q[-X | F_t] - penalty(Z, Q)``."""
    return cond_expect(tree, -_as_rv(tree, X), t, Q) - penalty(tree, Z, Q, t)


def dual_check(tree: ScenarioTree, Z, X, t: int, budget: int = 100, seed: int = 0,
               max_vertices: int = MAX_VERTICES, tol: float = DUAL_TOL) -> dict:
    """Compare the monetary member with the maximum of its dual objective over
    vertex measures, and check that interior measures never exceed it."""
    if budget < 1:
        raise InputError("budget must be >= 1")
    Z, X = _as_rv(tree, Z), _as_rv(tree, X)
    lhs = member_eval(EnvelopeMember("monetary", Z, t), tree, X, t)
    offs = tree.leaf_offsets[t]
    sizes = np.diff(offs)
    rng = np.random.default_rng(seed)
    n_rounds = int(min(sizes.max(), max_vertices))
    if sizes.max() <= max_vertices:
        picks = [offs[:-1] + np.minimum(j, sizes - 1) for j in range(n_rounds)]
    else:
        picks = [offs[:-1] + rng.integers(0, sizes) for _ in range(n_rounds)]
    rhs = np.full(len(sizes), -np.inf)
    arg = np.zeros(len(sizes), dtype=np.intp)
    for leaves in picks:
        v = dual_value(tree, Z, X, vertex_measure(tree, leaves, t), t)
        better = v > rhs
        rhs = np.where(better, v, rhs)
        arg = np.where(better, leaves, arg)
    coverage = float(np.mean(np.minimum(1.0, n_rounds / sizes)))
    gap = np.abs(lhs - rhs)
    report = {"check": "duality", "t": t, "lhs": lhs.tolist(), "rhs": rhs.tolist(),
              "max_gap": float(gap.max()), "maximizer_leaves": arg.tolist(), "coverage": coverage,
              "interior_checked": 0}
    exact = coverage == 1.0
    if exact and gap.max() > tol:
        node = int(np.argmax(gap))
        report.update(status="fail", node=node, witness={"Z": Z.tolist(), "X": X.tolist()})
        return report
    for _ in range(budget):
        Q = random_measure(tree, rng, equivalent=bool(rng.random() < 0.7))
        v = dual_value(tree, Z, X, Q, t)
        report["interior_checked"] += 1
        excess = v - lhs
        if excess.max() > tol:
            node = int(np.argmax(excess))
            report.update(status="fail", node=node, witness={"Z": Z.tolist(), "X": X.tolist(),
                                                             "Q": [p.tolist() for p in Q.probs]})
            return report
    report["status"] = "pass" if exact else "pass_sampled"
    return report


@dataclass(frozen=True)
class FamilySup:
    value: np.ndarray
    gate: np.ndarray  # sup over the family of rho(0)
    finite: bool


def sup_of_family(members, tree: ScenarioTree, X, t: int) -> FamilySup:
    """Nodewise maximum over a finite family, with the finiteness gate ``sup rho(0)``."""
    members = list(members)
    if not members:
        raise InputError("family needs at least one member")
    vals = np.max([evaluate(m, tree, X, t) for m in members], axis=0)
    gate = np.max([evaluate(m, tree, np.zeros(tree.n_leaves), t) for m in members], axis=0)
    return FamilySup(vals, gate, bool(np.all(np.isfinite(gate))))


def shift_measure(inner, Z) -> Shifted:
    """``X -> rho(X + Z)``."""
    return Shifted(inner, np.asarray(Z, dtype=float))


def common_acceptable_constant(members, tree: ScenarioTree) -> float:
    """A constant position acceptable for every member at every level."""
    zero = np.zeros(tree.n_leaves)
    return max(float(np.max(evaluate(m, tree, zero, k))) for m in members for k in range(tree.N + 1))


__all__ = [
    "EnvelopeMember", "member_eval", "member_argmin", "lower_envelope", "verify_attainment", "penalty",
    "dual_check", "dual_value", "vertex_measure", "sup_of_family", "shift_measure", "FamilySup",
    "minimize_upper_envelope", "upper_envelope", "is_acceptable", "random_acceptable_anchor",
    "common_acceptable_constant",
]
