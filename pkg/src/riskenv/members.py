"""Risk measures induced by anchored acceptance sets.

For an anchor ``Z`` acceptable at level ``t`` three convex acceptance sets are
used: ``{Y >= Z}`` (monetary), ``{Y >= a Z, a in [0,1]}`` (star) and
``{Y >= a Z, a >= 0}`` (cone), with ``a`` a level-t profile.  The induced
measure at a node is ``min_a max_w (a Z_w - X_w)`` over the node's subtree;
for the monetary set ``a`` is pinned to 1.  The inner max is the upper
envelope of the lines ``a -> Z_w a - X_w``, a convex piecewise-linear function
whose minimum sits at an endpoint or a breakpoint, so it is computed exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateAnchorError, InputError
from .space import ScenarioTree, _as_rv, cond_sup

MEMBER_KINDS = ("monetary", "star", "cone")


@dataclass(frozen=True, eq=False)
class EnvelopeMember:
    kind: str
    Z: np.ndarray
    t: int

    def __post_init__(self):
        if self.kind not in MEMBER_KINDS:
            raise InputError(f"member kind must be one of {MEMBER_KINDS}, not {self.kind!r}")
        object.__setattr__(self, "Z", np.asarray(self.Z, dtype=float))


def upper_envelope(slopes, intercepts):
    """Lines of the upper envelope of ``{x -> a x + b}`` in increasing slope order,
    and the breakpoints between consecutive envelope lines."""
    a = np.asarray(slopes, dtype=float)
    b = np.asarray(intercepts, dtype=float)
    order = np.lexsort((b, a))
    a, b = a[order], b[order]
    # equal slopes: keep the highest intercept (last after the sort)
    keep = np.append(a[1:] != a[:-1], True)
    a, b = a[keep], b[keep]
    ha, hb = [], []
    for ai, bi in zip(a, b):
        while len(ha) >= 2:
            # drop the middle line when the new one overtakes the first before it does;
            # cross-multiplied (slopes strictly increase) so near-equal slopes cannot overflow
            if (hb[-2] - bi) * (ha[-1] - ha[-2]) <= (hb[-2] - hb[-1]) * (ai - ha[-2]):
                ha.pop()
                hb.pop()
            else:
                break
        ha.append(ai)
        hb.append(bi)
    ha, hb = np.array(ha), np.array(hb)
    with np.errstate(over="ignore"):
        breaks = (hb[:-1] - hb[1:]) / (ha[1:] - ha[:-1])
    return ha, hb, breaks


def minimize_upper_envelope(slopes, intercepts, lo: float = 0.0, hi: float = 1.0):
    """Exact ``min_{x in [lo, hi]} max_i (a_i x + b_i)``; returns ``(value, argmin)``.

    ``hi`` may be ``inf``; the minimum is then finite unless every slope is
    negative, which raises :class:`DegenerateAnchorError`.
    """
    ha, hb, breaks = upper_envelope(slopes, intercepts)
    if math.isinf(hi) and ha[-1] < 0:
        raise DegenerateAnchorError("degenerate anchor: acceptance set has no finite cash floor")
    cand = [lo]
    if math.isfinite(hi):
        cand.append(hi)
    inner = breaks[(breaks > lo) & (breaks < hi)]
    cand = np.concatenate([cand, inner])
    seg = np.searchsorted(breaks, cand)
    vals = ha[seg] * cand + hb[seg]
    i = int(np.argmin(vals))
    return float(vals[i]), float(cand[i])


def member_eval(member: EnvelopeMember, tree: ScenarioTree, X, t: int) -> np.ndarray:
    """Level-t profile of the measure induced by ``member``'s acceptance set."""
    if member.t != t:
        raise InputError(f"member is anchored at level {member.t}, evaluated at level {t}")
    X = _as_rv(tree, X)
    Z = _as_rv(tree, member.Z)
    if member.kind == "monetary":
        return cond_sup(tree, Z - X, t)
    hi = 1.0 if member.kind == "star" else math.inf
    offs = tree.leaf_offsets[t]
    out = np.empty(tree.level_size(t))
    for n in range(len(out)):
        blk = slice(offs[n], offs[n + 1])
        out[n], _ = minimize_upper_envelope(Z[blk], -X[blk], 0.0, hi)
    return out


def member_argmin(member: EnvelopeMember, tree: ScenarioTree, X, t: int) -> np.ndarray:
    """Optimal scaling profile ``a`` per level-t node (1 for monetary members)."""
    if member.kind == "monetary":
        return np.ones(tree.level_size(t))
    X = _as_rv(tree, X)
    hi = 1.0 if member.kind == "star" else math.inf
    offs = tree.leaf_offsets[t]
    return np.array([
        minimize_upper_envelope(member.Z[offs[n]:offs[n + 1]], -X[offs[n]:offs[n + 1]], 0.0, hi)[1]
        for n in range(tree.level_size(t))
    ])


def lower_envelope(members, tree: ScenarioTree, X, t: int) -> np.ndarray:
    """Nodewise minimum of the member measures."""
    members = list(members)
    if not members:
        raise InputError("lower envelope needs at least one member")
    return np.min([member_eval(m, tree, X, t) for m in members], axis=0)
