"""Brute-force references used by the tests and the selftest scorecard.

Everything here is deliberately naive: direct enumeration or bisection,
nothing shared with the fast paths beyond the tree bookkeeping.
"""

from __future__ import annotations

import numpy as np

from .measures import evaluate
from .space import ScenarioTree, _as_rv, leaf_probs, lift

GRID_STEP = 1e-4


def member_grid(kind: str, tree: ScenarioTree, Z, X, t: int, step: float = GRID_STEP,
                alpha_max: float = 10.0) -> np.ndarray:
    """``min_a max_subtree (a Z - X)`` over a uniform grid of ``a``.

    Star members scan [0, 1]; cone members scan [0, alpha_max].  A grid minimum
    is an upper bound for the exact minimum.
    """
    Z, X = _as_rv(tree, Z), _as_rv(tree, X)
    hi = 1.0 if kind == "star" else alpha_max
    alphas = np.linspace(0.0, hi, int(round(hi / step)) + 1)
    offs = tree.leaf_offsets[t]
    out = np.empty(len(offs) - 1)
    for n in range(len(out)):
        z, x = Z[offs[n]:offs[n + 1]], X[offs[n]:offs[n + 1]]
        out[n] = np.min(np.max(alphas[:, None] * z[None, :] - x[None, :], axis=1))
    return out


def var_by_definition(tree: ScenarioTree, X, t: int, lam: float, Q=None) -> np.ndarray:
    """Least ``m`` among the candidates ``-X(w)`` with ``Q[X + m < 0 | node] <= lam``."""
    X = _as_rv(tree, X)
    w = leaf_probs(tree, t, Q)
    offs = tree.leaf_offsets[t]
    out = np.empty(len(offs) - 1)
    for n in range(len(out)):
        x, p = X[offs[n]:offs[n + 1]], w[offs[n]:offs[n + 1]]
        best = np.inf
        for m in -x:
            if p[x + m < 0].sum() <= lam + 1e-13:
                best = min(best, m)
        out[n] = best
    return out


def entropic_direct(tree: ScenarioTree, X, t: int, gamma: float, Q=None) -> np.ndarray:
    """``(1/gamma) ln E[exp(-gamma X) | node]`` summed naively, no overflow guard."""
    X = _as_rv(tree, X)
    w = leaf_probs(tree, t, Q)
    offs = tree.leaf_offsets[t]
    return np.array([np.log(np.sum(w[a:b] * np.exp(-gamma * X[a:b]))) / gamma
                     for a, b in zip(offs[:-1], offs[1:])])


def acceptance_bisection(members, tree: ScenarioTree, X, t: int, lo: float = -1e3, hi: float = 1e3,
                         iters: int = 200) -> np.ndarray:
    """Least cash ``y`` per node making ``X + y`` acceptable for every member at once."""
    X = _as_rv(tree, X)
    lo = np.full(tree.level_size(t), lo)
    hi = np.full(tree.level_size(t), hi)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        Y = X + lift(tree, mid, t)
        ok = np.all([evaluate(m, tree, Y, t) <= 0 for m in members], axis=0)
        hi = np.where(ok, mid, hi)
        lo = np.where(ok, lo, mid)
    return hi


def one_step_bsde(gen, dt: float, xi_down: float, xi_up: float, t: float = 0.0) -> float:
    """Y0 of the explicit scheme on a single binomial step, written out longhand."""
    z = (xi_up - xi_down) / (2 * np.sqrt(dt))
    return 0.5 * (xi_up + xi_down) + float(gen(t, np.array(z))) * dt


def maxmin_enumeration(tree: ScenarioTree, kappa: float, xi, sign: float = 1.0) -> float:
    """Root value of sup (sign=1) or inf (sign=-1) of ``E_theta[xi]`` over every
    node-wise choice ``theta in {-kappa, kappa}``; exponential, desk scale only."""
    xi = _as_rv(tree, xi)
    sq = np.sqrt(tree.dt)
    inner = [n for k in range(tree.N) for n in [(k, j) for j in range(tree.level_size(k))]]
    best = None
    for bits in range(2 ** len(inner)):
        theta = {node: (kappa if bits >> i & 1 else -kappa) for i, node in enumerate(inner)}
        v = xi.copy()
        for k in range(tree.N - 1, -1, -1):
            th = np.array([theta[(k, j)] for j in range(tree.level_size(k))])
            v = 0.5 * (1 - th * sq) * v[0::2] + 0.5 * (1 + th * sq) * v[1::2]
        val = float(v[0])
        best = val if best is None else (max(best, val) if sign > 0 else min(best, val))
    return best


def convexity_grid_witness(spec, tree: ScenarioTree, t: int, grid, weights=(0.5,)):
    """Exhaustive search over payoffs with values in ``grid`` for a violation of
    ``rho(aX + (1-a)Y) <= a rho(X) + (1-a) rho(Y)``; largest violation or None."""
    import itertools

    cands = [np.array(v, dtype=float) for v in itertools.product(grid, repeat=tree.n_leaves)]
    vals = [evaluate(spec, tree, X, t) for X in cands]
    best = None
    for i, j in itertools.combinations(range(len(cands)), 2):
        for a in weights:
            lhs = evaluate(spec, tree, a * cands[i] + (1 - a) * cands[j], t)
            gap = float(np.max(lhs - (a * vals[i] + (1 - a) * vals[j])))
            if gap > 1e-12 and (best is None or gap > best["gap"]):
                best = {"X": cands[i].tolist(), "Y": cands[j].tolist(), "alpha": a, "gap": gap}
    return best
