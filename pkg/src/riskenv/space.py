"""Finite filtered probability spaces.

A scenario tree stores its nodes level by level.  Children of a node are
contiguous at the next level and ordered by parent, so the leaves below any
node form a contiguous block.  That layout turns conditional expectations and
conditional extrema into ``reduceat`` calls.

Random variables are plain float arrays indexed by leaf; a level-t profile is
a float array indexed by the level-t nodes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import InputError, TreeSizeError

PROB_TOL = 1e-12
MAX_LEVELS = 22

BINOMIAL = "binomial"
EXPLICIT = "explicit"


@dataclass(frozen=True, eq=False)
class ScenarioTree:
    """Non-recombining scenario tree.

    ``parents[k]`` maps each level-k node to its level-(k-1) parent and
    ``probs[k]`` holds the transition probability of the edge into it.  Level 0
    is the root; ``parents[0]`` is empty and ``probs[0] == [1.0]``.
    ``increments[k]`` labels edges of binomial trees with ``+-sqrt(dt)``.
    """

    kind: str
    dt: float
    parents: tuple
    probs: tuple
    increments: tuple | None = None
    _check: bool = field(default=True, repr=False)

    def __post_init__(self):
        if self._check:
            self.validate()

    @property
    def N(self) -> int:
        return len(self.parents) - 1

    @property
    def T(self) -> float:
        return self.N * self.dt

    @property
    def n_leaves(self) -> int:
        return len(self.parents[-1]) if self.N > 0 else 1

    def level_size(self, k: int) -> int:
        return 1 if k == 0 else len(self.parents[k])

    def times(self) -> np.ndarray:
        return np.arange(self.N + 1) * self.dt

    @cached_property
    def child_starts(self) -> tuple:
        """Offsets of each level-k node's children inside level k+1 (length n_k + 1)."""
        out = []
        for k in range(self.N):
            out.append(np.searchsorted(self.parents[k + 1], np.arange(self.level_size(k) + 1)))
        return tuple(out)

    @cached_property
    def leaf_offsets(self) -> tuple:
        """Offsets of each level-t node's leaf block (length n_t + 1)."""
        offs = [None] * (self.N + 1)
        offs[self.N] = np.arange(self.level_size(self.N) + 1)
        for k in range(self.N - 1, -1, -1):
            offs[k] = offs[k + 1][self.child_starts[k]]
        return tuple(offs)

    def block_sizes(self, t: int) -> np.ndarray:
        return np.diff(self.leaf_offsets[t])

    def ancestors(self, t: int) -> np.ndarray:
        """Level-t ancestor index of every leaf."""
        self.check_level(t)
        return np.repeat(np.arange(self.level_size(t)), self.block_sizes(t))

    def check_level(self, t: int) -> None:
        if not (isinstance(t, (int, np.integer)) and 0 <= t <= self.N):
            raise InputError(f"level {t!r} out of range 0..{self.N}")

    def path_sums(self) -> np.ndarray:
        """Sum of edge increments along each root-to-leaf path."""
        if self.increments is None:
            raise InputError("tree has no edge increments")
        s = np.zeros(1)
        for k in range(1, self.N + 1):
            s = s[self.parents[k]] + self.increments[k]
        return s

    def path_maxima(self) -> np.ndarray:
        """Running maximum of the partial increment sums (starting at 0) per leaf."""
        if self.increments is None:
            raise InputError("tree has no edge increments")
        s = np.zeros(1)
        m = np.zeros(1)
        for k in range(1, self.N + 1):
            s = s[self.parents[k]] + self.increments[k]
            m = np.maximum(m[self.parents[k]], s)
        return m

    def validate(self) -> None:
        if self.kind not in (BINOMIAL, EXPLICIT):
            raise InputError(f"unknown tree kind {self.kind!r}")
        if len(self.parents) < 2:
            raise InputError("tree needs at least one period")
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise InputError("dt must be positive")
        if len(self.probs) != len(self.parents):
            raise InputError("probs and parents disagree on the number of levels")
        if not np.allclose(self.probs[0], [1.0]):
            raise InputError("root must carry probability 1")
        for k in range(1, self.N + 1):
            par, p = self.parents[k], self.probs[k]
            n_prev = self.level_size(k - 1)
            if len(par) != len(p) or len(par) == 0:
                raise InputError(f"level {k}: parent/probability arrays malformed")
            if np.any(np.diff(par) < 0) or par[0] < 0 or par[-1] >= n_prev:
                raise InputError(f"level {k}: children must be contiguous and ordered by parent")
            counts = np.bincount(par, minlength=n_prev)
            if np.any(counts == 0):
                raise InputError(f"level {k - 1}: every non-leaf node needs a child (leaves sit at level N)")
            if not np.all(np.isfinite(p)) or np.any(p <= 0):
                raise InputError(f"level {k}: transition probabilities must be > 0")
            sums = np.bincount(par, weights=p, minlength=n_prev)
            if np.max(np.abs(sums - 1.0)) > PROB_TOL:
                raise InputError(f"level {k}: transition probabilities must sum to 1")
            if self.kind == BINOMIAL:
                if np.any(counts != 2) or np.any(p != 0.5):
                    raise InputError(f"level {k}: binomial nodes need two children with probability 1/2")
                inc = self.increments[k] if self.increments is not None else None
                sq = math.sqrt(self.dt)
                if inc is None or not (np.all(inc[0::2] == -sq) and np.all(inc[1::2] == sq)):
                    raise InputError(f"level {k}: binomial increments must be (-sqrt(dt), +sqrt(dt))")


def build_binomial(N: int, T: float, max_levels: int = MAX_LEVELS) -> ScenarioTree:
    """Binary tree with ``dt = T/N``; child 0 is the down move, child 1 the up move."""
    if N < 1 or not T > 0:
        raise InputError("binomial tree needs N >= 1 and T > 0")
    if N > max_levels:
        raise TreeSizeError(f"N={N} exceeds the cap of {max_levels} levels")
    dt = T / N
    sq = math.sqrt(dt)
    parents, probs, incs = [np.zeros(0, dtype=np.intp)], [np.ones(1)], [np.zeros(1)]
    for k in range(1, N + 1):
        n = 2**k
        parents.append(np.arange(n, dtype=np.intp) // 2)
        probs.append(np.full(n, 0.5))
        incs.append(np.tile([-sq, sq], n // 2))
    return ScenarioTree(BINOMIAL, dt, tuple(parents), tuple(probs), tuple(incs))


def build_tree(branching: list, probs: list | None = None, dt: float = 1.0) -> ScenarioTree:
    """Explicit tree from per-level child counts.

    ``branching[k]`` lists the child count of every level-k node (a single
    integer applies to all of them).  ``probs[k]``
    (optional) lists the edge probabilities into level-(k+1) nodes; uniform if
    omitted.
    """
    parents, pr = [np.zeros(0, dtype=np.intp)], [np.ones(1)]
    for k, counts in enumerate(branching):
        counts = np.asarray(counts, dtype=np.intp)
        if counts.ndim == 0:
            counts = np.full(len(pr[-1]), counts)
        if len(counts) != len(pr[-1]):
            raise InputError(f"level {k}: expected {len(pr[-1])} child counts, got {len(counts)}")
        par = np.repeat(np.arange(len(counts), dtype=np.intp), counts)
        if probs is None:
            p = 1.0 / counts[par]
        else:
            p = np.asarray(probs[k], dtype=float)
        parents.append(par)
        pr.append(p)
    return ScenarioTree(EXPLICIT, dt, tuple(parents), tuple(pr))


def one_period(p, dt: float = 1.0) -> ScenarioTree:
    """Root with ``len(p)`` children carrying probabilities ``p``."""
    return build_tree([[len(p)]], [p], dt=dt)


def random_tree(rng: np.random.Generator, N: int, max_children: int = 3, min_children: int = 1,
                floor: float = 0.05) -> ScenarioTree:
    """Explicit tree with random branching and probabilities bounded below by ``floor / children``."""
    branching, probs = [], []
    n = 1
    for _ in range(N):
        counts = rng.integers(min_children, max_children + 1, size=n)
        branching.append(counts)
        p = []
        for c in counts:
            w = rng.dirichlet(np.ones(c)) if c > 1 else np.ones(1)
            w = (1 - floor) * w + floor / c
            p.append(w / w.sum())
        probs.append(np.concatenate(p))
        n = int(counts.sum())
    return build_tree(branching, probs)


# ---------------------------------------------------------------------------
# measure changes


@dataclass(frozen=True, eq=False)
class MeasureChange:
    """Alternative transition probabilities, laid out like ``ScenarioTree.probs``."""

    probs: tuple

    @property
    def equivalent(self) -> bool:
        return all(np.all(p > 0) for p in self.probs[1:])

    def validate(self, tree: ScenarioTree) -> None:
        if len(self.probs) != tree.N + 1:
            raise InputError("measure change has the wrong number of levels")
        for k in range(1, tree.N + 1):
            p = self.probs[k]
            if p.shape != tree.probs[k].shape:
                raise InputError(f"measure change level {k}: expected {tree.probs[k].shape[0]} entries")
            if not np.all(np.isfinite(p)) or np.any(p < 0):
                raise InputError(f"measure change level {k}: probabilities must be >= 0")
            sums = np.add.reduceat(p, tree.child_starts[k - 1][:-1])
            if np.max(np.abs(sums - 1.0)) > PROB_TOL:
                raise InputError(f"measure change level {k}: rows must sum to 1")


def reference_measure(tree: ScenarioTree) -> MeasureChange:
    return MeasureChange(tuple(np.array(p) for p in tree.probs))


def measure_from_density(tree: ScenarioTree, density, base: MeasureChange | None = None) -> MeasureChange:
    """Measure with leaf density ``density`` relative to ``base`` (P if omitted).

    Only ratios of subtree masses enter the transitions, so ``density`` need not
    be normalised.  Zero-mass subtrees keep the base transitions.
    """
    density = np.asarray(density, dtype=float)
    if density.shape != (tree.n_leaves,) or np.any(density < 0) or not np.all(np.isfinite(density)):
        raise InputError("density must be a finite non-negative leaf array")
    bp = (base or reference_measure(tree)).probs
    mass = density * leaf_probs(tree, 0, base)
    masses = [None] * (tree.N + 1)
    masses[tree.N] = mass
    for k in range(tree.N, 0, -1):
        masses[k - 1] = np.add.reduceat(masses[k], tree.child_starts[k - 1][:-1])
    if masses[0][0] <= 0:
        raise InputError("density has zero total mass")
    out = [np.ones(1)]
    for k in range(1, tree.N + 1):
        pm = masses[k - 1][tree.parents[k]]
        with np.errstate(invalid="ignore", divide="ignore"):
            p = np.where(pm > 0, masses[k] / np.where(pm > 0, pm, 1.0), bp[k])
        # renormalise rows against rounding so the result is row-stochastic
        sums = np.add.reduceat(p, tree.child_starts[k - 1][:-1])
        out.append(p / sums[tree.parents[k]])
    return MeasureChange(tuple(out))


def random_measure(tree: ScenarioTree, rng: np.random.Generator, equivalent: bool = True,
                   floor: float = 0.02) -> MeasureChange:
    out = [np.ones(1)]
    for k in range(1, tree.N + 1):
        w = rng.gamma(1.0, size=len(tree.parents[k]))
        if equivalent:
            w = w + floor
        else:
            w = np.where(rng.random(len(w)) < 0.3, 0.0, w)
        starts = tree.child_starts[k - 1][:-1]
        sums = np.add.reduceat(w, starts)
        empty = sums[tree.parents[k]] == 0
        w = np.where(empty, 1.0, w)
        sums = np.add.reduceat(w, starts)
        out.append(w / sums[tree.parents[k]])
    return MeasureChange(tuple(out))


def point_mass_measure(tree: ScenarioTree, leaf: int, t: int, base: MeasureChange | None = None) -> MeasureChange:
    """Keep ``base`` everywhere except below ``leaf``'s level-t ancestor, where all
    mass follows the path to ``leaf``.  Equivalent to the base on level t."""
    probs = [np.array(p) for p in (base or reference_measure(tree)).probs]
    node = leaf
    path = [None] * (tree.N + 1)
    for k in range(tree.N, -1, -1):
        path[k] = node
        if k > 0:
            node = tree.parents[k][node]
    for k in range(t + 1, tree.N + 1):
        a, b = tree.child_starts[k - 1][path[k - 1]], tree.child_starts[k - 1][path[k - 1] + 1]
        probs[k][a:b] = 0.0
        probs[k][path[k]] = 1.0
    return MeasureChange(tuple(probs))


# ---------------------------------------------------------------------------
# conditional calculus


def _as_rv(tree: ScenarioTree, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.shape != (tree.n_leaves,):
        raise InputError(f"random variable needs {tree.n_leaves} leaf values, got shape {X.shape}")
    return X


def leaf_probs(tree: ScenarioTree, t: int, Q: MeasureChange | None = None) -> np.ndarray:
    """Probability of each leaf conditional on its level-t ancestor."""
    tree.check_level(t)
    probs = Q.probs if Q is not None else tree.probs
    w = np.ones(tree.level_size(t))
    for k in range(t + 1, tree.N + 1):
        w = w[tree.parents[k]] * probs[k]
    return w


def cond_expect(tree: ScenarioTree, X, t: int, Q: MeasureChange | None = None) -> np.ndarray:
    """E[X | F_t] under P, or under ``Q``'s transitions below level t."""
    tree.check_level(t)
    v = _as_rv(tree, X)
    probs = Q.probs if Q is not None else tree.probs
    for k in range(tree.N, t, -1):
        v = np.add.reduceat(probs[k] * v, tree.child_starts[k - 1][:-1])
    return np.array(v, dtype=float)


def cond_ess_extrema(tree: ScenarioTree, X, t: int, which: str = "sup") -> np.ndarray:
    """Conditional essential sup/inf: the max/min over each level-t subtree."""
    tree.check_level(t)
    X = _as_rv(tree, X)
    starts = tree.leaf_offsets[t][:-1]
    if which == "sup":
        return np.maximum.reduceat(X, starts)
    if which == "inf":
        return np.minimum.reduceat(X, starts)
    raise InputError(f"which must be 'sup' or 'inf', not {which!r}")


def cond_sup(tree, X, t):
    return cond_ess_extrema(tree, X, t, "sup")


def cond_inf(tree, X, t):
    return cond_ess_extrema(tree, X, t, "inf")


def lift(tree: ScenarioTree, profile, s: int) -> np.ndarray:
    """Embed a level-s profile as a terminal variable (each leaf takes its ancestor's value)."""
    tree.check_level(s)
    profile = np.asarray(profile, dtype=float)
    if profile.ndim == 0:
        profile = np.full(tree.level_size(s), float(profile))
    if profile.shape != (tree.level_size(s),):
        raise InputError(f"level-{s} profile needs {tree.level_size(s)} values, got shape {profile.shape}")
    return np.repeat(profile, tree.block_sizes(s))


def node_ids(tree: ScenarioTree, t: int) -> list:
    return [(t, i) for i in range(tree.level_size(t))]


# ---------------------------------------------------------------------------
# serialization


def tree_to_json(tree: ScenarioTree) -> dict:
    nodes = []
    for k in range(tree.N + 1):
        for i in range(tree.level_size(k)):
            rec = {"level": k, "index": i}
            if k < tree.N:
                a, b = tree.child_starts[k][i], tree.child_starts[k][i + 1]
                rec["children"] = list(range(int(a), int(b)))
                rec["probs"] = tree.probs[k + 1][a:b].tolist()
            else:
                rec["children"] = []
                rec["probs"] = []
            rec["increment"] = float(tree.increments[k][i]) if (tree.increments is not None and k > 0) else None
            nodes.append(rec)
    return {"kind": tree.kind, "N": tree.N, "dt": tree.dt, "nodes": nodes}


def tree_from_json(doc: dict, max_levels: int = MAX_LEVELS) -> ScenarioTree:
    """Inverse of :func:`tree_to_json`.

    Node records may come in any order; within a level the children lists,
    read in parent order, must enumerate the next level's indices 0, 1, 2, ...
    """
    try:
        kind = doc.get("kind", EXPLICIT)
        N = int(doc["N"])
        dt = float(doc.get("dt", 1.0))
        records = doc["nodes"]
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"tree: missing or malformed field ({exc})") from None
    if N < 1:
        raise InputError("tree.N must be >= 1")
    if N > max_levels:
        raise TreeSizeError(f"N={N} exceeds the cap of {max_levels} levels")
    by_level: dict = {}
    for pos, rec in enumerate(records):
        try:
            by_level.setdefault(int(rec["level"]), {})[int(rec["index"])] = rec
        except (KeyError, TypeError, ValueError):
            raise InputError(f"tree.nodes[{pos}]: needs integer 'level' and 'index'") from None
    parents, probs, incs = [np.zeros(0, dtype=np.intp)], [np.ones(1)], [np.zeros(1)]
    have_incs = True
    for k in range(N):
        level = by_level.get(k, {})
        if sorted(level) != list(range(len(level))) or not level:
            raise InputError(f"tree level {k}: node indices must be 0..n-1")
        par, p, expect = [], [], 0
        for i in range(len(level)):
            rec = level[i]
            ch, pr = list(rec.get("children", [])), list(rec.get("probs", []))
            if len(ch) != len(pr) or not ch:
                raise InputError(f"tree node ({k},{i}): needs matching non-empty children/probs")
            if ch != list(range(expect, expect + len(ch))):
                raise InputError(f"tree node ({k},{i}): children must be contiguous, expected start {expect}")
            expect += len(ch)
            par += [i] * len(ch)
            p += [float(x) for x in pr]
        parents.append(np.asarray(par, dtype=np.intp))
        probs.append(np.asarray(p))
        nxt = by_level.get(k + 1, {})
        if len(nxt) != expect:
            raise InputError(f"tree level {k + 1}: expected {expect} nodes, found {len(nxt)}")
        inc = [nxt[j].get("increment") for j in range(expect)]
        if any(v is None for v in inc):
            have_incs = False
        else:
            incs.append(np.asarray(inc, dtype=float))
    return ScenarioTree(kind, dt, tuple(parents), tuple(probs), tuple(incs) if have_incs else None)
