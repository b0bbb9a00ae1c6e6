"""g-expectations on binomial trees.

The backward recursion

    Z_n = (Y_up - Y_down) / (2 sqrt(dt)),    Y_n = (Y_up + Y_down) / 2 + g(t_n, Z_n) dt

is the explicit one-step scheme for ``Y_t = xi + int g(s, Z_s) ds - int Z_s dB_s``.
One step is monotone in (Y_up, Y_down) while ``sqrt(dt) |dg/dz| <= 1``; that
is the discrete comparison principle every order-based property relies on.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ComparisonWarning, InputError, NumericError
from .space import (
    BINOMIAL,
    MeasureChange,
    ScenarioTree,
    _as_rv,
    build_binomial,
    cond_expect,
    leaf_probs,
    measure_from_density,
)

SLOPE_SAFETY = 1.1


@dataclass(frozen=True, eq=False)
class Generator:
    """Driver ``g(t, z)`` with owner-declared property flags.

    ``func`` must accept a float ``t`` and an array ``z``.  Flags are claims;
    :func:`check_generator` audits them on a grid.
    """

    name: str
    func: Callable
    params: dict = field(default_factory=dict)
    normalized: bool = True
    lipschitz_K: float | None = None
    growth_C: float | None = None
    star_shaped: bool = False
    convex: bool = False
    concave: bool = False
    positively_homogeneous: bool = False

    def __call__(self, t, z):
        return self.func(t, np.asarray(z, dtype=float))

    def slope(self, t, z):
        """Central-difference estimate of dg/dz."""
        z = np.asarray(z, dtype=float)
        h = 1e-6 * (1.0 + np.abs(z))
        return (self(t, z + h) - self(t, z - h)) / (2 * h)

    def to_json(self) -> dict:
        return {"name": self.name, **self.params}


def _example41(t, z):
    a = np.abs(z)
    return np.where(a <= 1.0, a**4, a**2)


def make_generator(name: str, **params) -> Generator:
    """Catalogue: zero, abs, neg_abs, asymmetric, example41, quadratic,
    quadratic_entropic, saturated, neg_quadratic."""
    p = dict(params)
    if name == "zero":
        return Generator("zero", lambda t, z: np.zeros_like(z), p, lipschitz_K=0.0, growth_C=0.0,
                         star_shaped=True, convex=True, concave=True, positively_homogeneous=True)
    if name in ("abs", "neg_abs"):
        k = float(p.setdefault("kappa", 1.0))
        if k < 0:
            raise InputError(f"{name}: kappa must be >= 0")
        sign = 1.0 if name == "abs" else -1.0
        return Generator(name, lambda t, z: sign * k * np.abs(z), p, lipschitz_K=k, growth_C=k,
                         star_shaped=True, convex=sign > 0, concave=sign < 0, positively_homogeneous=True)
    if name == "asymmetric":
        k1, k2 = float(p.setdefault("k1", 0.5)), float(p.setdefault("k2", 1.0))
        if not 0 < k1 < k2:
            raise InputError("asymmetric: need 0 < k1 < k2")
        return Generator(name, lambda t, z: k1 * np.maximum(z, 0) - k2 * np.maximum(-z, 0), p,
                         lipschitz_K=k2, growth_C=k2, star_shaped=True, concave=True,
                         positively_homogeneous=True)
    if name == "example41":
        return Generator(name, _example41, p, lipschitz_K=4.0, growth_C=1.0, star_shaped=True)
    if name == "quadratic":
        g = float(p.setdefault("gamma", 1.0))
        if g <= 0:
            raise InputError("quadratic: gamma must be > 0")
        return Generator(name, lambda t, z: 0.5 * g * z * z, p, lipschitz_K=g / 2, growth_C=g / 2,
                         star_shaped=True, convex=True)
    if name == "neg_quadratic":
        g = float(p.setdefault("gamma", 1.0))
        if g <= 0:
            raise InputError("neg_quadratic: gamma must be > 0")
        return Generator(name, lambda t, z: -0.5 * g * z * z, p, lipschitz_K=g / 2, growth_C=g / 2,
                         concave=True)
    if name == "saturated":
        k, cap = float(p.setdefault("kappa", 1.0)), float(p.setdefault("cap", 0.5))
        if k <= 0 or cap <= 0:
            raise InputError("saturated: kappa and cap must be > 0")
        return Generator(name, lambda t, z: np.minimum(k * np.abs(z), cap), p, lipschitz_K=k, growth_C=max(k, cap))
    if name == "quadratic_entropic":
        g = float(p.setdefault("gamma", 1.0))
        base_spec = p.setdefault("base", {"name": "zero"})
        base = generator_from_json(base_spec) if isinstance(base_spec, dict) else make_generator(base_spec)
        if g <= 0:
            raise InputError("quadratic_entropic: gamma must be > 0")
        return with_quadratic(base, g)
    raise InputError(f"unknown generator {name!r}")


def with_quadratic(base: Generator, gamma: float) -> Generator:
    """``base(z) + gamma/2 z^2``: the driver of the entropic transform of ``base``."""
    params = {"gamma": gamma, "base": base.to_json()}
    return Generator(
        "quadratic_entropic",
        lambda t, z: base(t, z) + 0.5 * gamma * z * z,
        params,
        normalized=base.normalized,
        lipschitz_K=None if base.lipschitz_K is None else base.lipschitz_K + gamma / 2,
        growth_C=None if base.growth_C is None else base.growth_C + gamma / 2,
        star_shaped=base.star_shaped,
        convex=base.convex,
    )


def generator_from_json(doc) -> Generator:
    if isinstance(doc, str):
        return make_generator(doc)
    if not isinstance(doc, dict) or "name" not in doc:
        raise InputError("generator must be a name or an object with a 'name' field")
    params = {k: v for k, v in doc.items() if k != "name"}
    try:
        return make_generator(doc["name"], **params)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, InputError):
            raise
        raise InputError(f"generator {doc['name']!r}: {exc}") from None


# ---------------------------------------------------------------------------
# solver


@dataclass(frozen=True, eq=False)
class BsdeSolution:
    Y: list
    Z: list
    slope_margin: float
    verified: bool

    def at(self, t: int) -> np.ndarray:
        return self.Y[t]


def _require_binomial(tree: ScenarioTree) -> None:
    if tree.kind != BINOMIAL:
        raise InputError("g-expectations need a binomial tree")


def _step(gen: Generator, tk: float, dt: float, yd, yu):
    sq = math.sqrt(dt)
    z = (yu - yd) / (2 * sq)
    return 0.5 * (yu + yd) + gen(tk, z) * dt, z


def solve_bsde(tree: ScenarioTree, gen: Generator, terminal, strict: bool = False) -> BsdeSolution:
    """Backward recursion for the driver ``gen`` and terminal variable ``terminal``.

    When the realised slopes break one-step monotonicity the result carries
    ``verified=False`` and a :class:`ComparisonWarning` is issued (raised as
    :class:`NumericError` with ``strict=True``).
    """
    _require_binomial(tree)
    y = _as_rv(tree, terminal).copy()
    if not np.all(np.isfinite(y)):
        raise InputError("terminal variable must be finite")
    Ys, Zs = [None] * (tree.N + 1), [None] * tree.N
    Ys[tree.N] = y
    times = tree.times()
    L = 0.0
    for k in range(tree.N - 1, -1, -1):
        pair = Ys[k + 1].reshape(-1, 2)
        Ys[k], Zs[k] = _step(gen, times[k], tree.dt, pair[:, 0], pair[:, 1])
        if not np.all(np.isfinite(Ys[k])):
            raise NumericError(f"BSDE recursion overflowed at level {k}")
        L = max(L, float(np.max(np.abs(gen.slope(times[k], Zs[k])))))
    margin = 1.0 - math.sqrt(tree.dt) * SLOPE_SAFETY * L
    sol = BsdeSolution(Ys, Zs, margin, margin > 0)
    if not sol.verified:
        msg = f"comparison not guaranteed at this dt (slope margin {margin:.3g})"
        if strict:
            raise NumericError(msg)
        warnings.warn(msg, ComparisonWarning, stacklevel=2)
    return sol


def g_expectation(tree: ScenarioTree, gen: Generator, xi, t: int, strict: bool = False) -> np.ndarray:
    tree.check_level(t)
    return solve_bsde(tree, gen, xi, strict).Y[t]


def g_risk(gen: Generator, tree: ScenarioTree, xi, t: int, strict: bool = False) -> np.ndarray:
    """``rho_t(xi) = E_g[-xi | F_t]``."""
    return g_expectation(tree, gen, -_as_rv(tree, xi), t, strict)


def maxmin_dp(tree: ScenarioTree, kappa: float, xi, t: int, mode="sup") -> np.ndarray:
    """Upper/lower expectation over drift changes ``|theta| <= kappa``.

    Under ``theta`` the up move has probability ``(1 + theta sqrt(dt)) / 2``.  The
    one-step objective is affine in ``theta`` so the optimum is ``+-kappa``.
    ``mode`` is "sup", "inf" or a weight ``alpha`` in [0, 1] mixing the two.
    """
    _require_binomial(tree)
    tree.check_level(t)
    sq = math.sqrt(tree.dt)
    if kappa < 0 or kappa * sq > 1:
        raise InputError(f"need 0 <= kappa*sqrt(dt) <= 1, got {kappa * sq:.3g}")
    xi = _as_rv(tree, xi)

    def run(sign):
        v = xi
        for _ in range(tree.N, t, -1):
            pair = v.reshape(-1, 2)
            v = 0.5 * (pair[:, 1] + pair[:, 0]) + sign * kappa * np.abs(pair[:, 1] - pair[:, 0]) * sq / 2
        return np.array(v)

    if mode == "sup":
        return run(1.0)
    if mode == "inf":
        return run(-1.0)
    alpha = float(mode)
    if not 0 <= alpha <= 1:
        raise InputError("alpha must lie in [0, 1]")
    return alpha * run(1.0) + (1 - alpha) * run(-1.0)


# ---------------------------------------------------------------------------
# entropic transforms


@dataclass(frozen=True)
class EntropicRoutes:
    bsde: np.ndarray
    oracle: np.ndarray
    gap: float


def entropic_bsde(tree: ScenarioTree, gamma: float, base_gen: Generator, xi, t: int) -> EntropicRoutes:
    """Robust entropic risk two ways: the quadratic-driver BSDE with terminal
    ``-xi``, and ``(1/gamma) ln E_base[exp(-gamma xi) | F_t]``."""
    if gamma <= 0:
        raise InputError("gamma must be > 0")
    if not (base_gen.positively_homogeneous and base_gen.normalized):
        raise InputError("base generator must be positively homogeneous and normalized")
    xi = _as_rv(tree, xi)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ComparisonWarning)
        route1 = solve_bsde(tree, with_quadratic(base_gen, gamma), -xi).Y[t]
        shift = float(np.max(-gamma * xi))
        inner = solve_bsde(tree, base_gen, np.exp(-gamma * xi - shift)).Y[t]
    if np.any(inner <= 0):
        raise NumericError("inner g-expectation lost positivity")
    route2 = (np.log(inner) + shift) / gamma
    return EntropicRoutes(route1, route2, float(np.max(np.abs(route1 - route2))))


def relative_entropy(tree: ScenarioTree, R: MeasureChange, Q: MeasureChange, t: int) -> np.ndarray:
    """Conditional relative entropy ``E_Q[dR/dQ ln dR/dQ | F_t]`` per level-t node."""
    r = leaf_probs(tree, t, R)
    q = leaf_probs(tree, t, Q)
    if np.any((q == 0) & (r > 0)):
        raise InputError("R is not absolutely continuous with respect to Q")
    pos = r > 0
    terms = np.zeros_like(r)
    terms[pos] = r[pos] * np.log(r[pos] / q[pos])
    return np.add.reduceat(terms, tree.leaf_offsets[t][:-1])


def entropic_linear(tree: ScenarioTree, xi, gamma: float, t: int, Q: MeasureChange | None = None) -> np.ndarray:
    """``(1/gamma) ln E_Q[exp(-gamma xi) | F_t]`` with a max-shift per subtree."""
    xi = _as_rv(tree, xi)
    a = -gamma * xi
    m = np.maximum.reduceat(a, tree.leaf_offsets[t][:-1])
    e = cond_expect(tree, np.exp(a - np.repeat(m, tree.block_sizes(t))), t, Q)
    return (np.log(e) + m) / gamma


def entropic_maximizer(tree: ScenarioTree, xi, gamma: float, Q: MeasureChange | None = None) -> MeasureChange:
    """The measure with ``dR/dQ`` proportional to ``exp(-gamma xi)``."""
    xi = _as_rv(tree, xi)
    a = -gamma * xi
    return measure_from_density(tree, np.exp(a - a.max()), base=Q)


def entropic_dual_value(tree: ScenarioTree, xi, gamma: float, R: MeasureChange, t: int,
                        Q: MeasureChange | None = None) -> np.ndarray:
    """``E_R[-xi | F_t] - (1/gamma) H_t(R | Q)``; at most the entropic value for every R."""
    from .space import reference_measure

    Qm = Q if Q is not None else reference_measure(tree)
    return cond_expect(tree, -_as_rv(tree, xi), t, R) - relative_entropy(tree, R, Qm, t) / gamma


# ---------------------------------------------------------------------------
# generator audit


def check_generator(gen: Generator, t_grid, z_grid, alpha_grid, tol: float = 1e-12) -> dict:
    """Grid audit of (C1)-(C4), convexity, concavity and positive homogeneity."""
    t_grid = np.atleast_1d(np.asarray(t_grid, dtype=float))
    z = np.atleast_1d(np.asarray(z_grid, dtype=float))
    alphas = np.atleast_1d(np.asarray(alpha_grid, dtype=float))
    if len(t_grid) == 0 or len(z) == 0 or len(alphas) == 0:
        raise InputError("grids must be non-empty")
    if np.any(alphas < 1):
        raise InputError("alpha grid must lie in [1, inf)")
    out = {"generator": gen.to_json()}

    def worst(viol, witness):
        i = int(np.argmax(viol))
        return float(viol.flat[i]), (witness(i) if viol.flat[i] > tol else None)

    norm = np.abs(np.array([gen(t, np.zeros(1))[0] for t in t_grid]))
    out["C3_normalized"] = {"declared": gen.normalized, "max_violation": float(norm.max()),
                            "holds": bool(norm.max() <= tol)}
    C = 0.0
    K = 0.0
    star_m, star_w = -np.inf, None
    cvx_m, cvx_w = -np.inf, None
    ccv_m, ccv_w = -np.inf, None
    ph_m, ph_w = -np.inf, None
    z1, z2 = np.meshgrid(z, z, indexing="ij")
    off = z1 != z2
    for t in t_grid:
        g = gen(t, z)
        C = max(C, float(np.max(np.abs(g) / (1 + z * z))))
        g1, g2 = gen(t, z1), gen(t, z2)
        if off.any():
            K = max(K, float(np.max(np.abs(g1 - g2)[off] / ((1 + np.abs(z1) + np.abs(z2)) * np.abs(z1 - z2))[off])))
        A, ZZ = np.meshgrid(alphas, z, indexing="ij")
        s = A * gen(t, ZZ) - gen(t, A * ZZ)
        m, w = worst(s, lambda i: {"t": float(t), "z": float(ZZ.flat[i]), "alpha": float(A.flat[i]),
                                   "g_alpha_z": float(gen(t, A.flat[i] * ZZ.flat[i:i + 1])[0]),
                                   "alpha_g_z": float(A.flat[i] * gen(t, ZZ.flat[i:i + 1])[0])})
        if m > star_m:
            star_m, star_w = m, w
        h = np.abs(gen(t, A * ZZ) - A * gen(t, ZZ))
        m, w = worst(h, lambda i: {"t": float(t), "z": float(ZZ.flat[i]), "alpha": float(A.flat[i])})
        if m > ph_m:
            ph_m, ph_w = m, w
        mid = gen(t, 0.5 * (z1 + z2))
        chord = 0.5 * (g1 + g2)
        m, w = worst(mid - chord, lambda i: {"t": float(t), "z1": float(z1.flat[i]), "z2": float(z2.flat[i]),
                                             "g_mid": float(mid.flat[i]), "chord": float(chord.flat[i])})
        if m > cvx_m:
            cvx_m, cvx_w = m, w
        m, w = worst(chord - mid, lambda i: {"t": float(t), "z1": float(z1.flat[i]), "z2": float(z2.flat[i]),
                                             "g_mid": float(mid.flat[i]), "chord": float(chord.flat[i])})
        if m > ccv_m:
            ccv_m, ccv_w = m, w
    out["C1_growth"] = {"declared": gen.growth_C, "sampled_C": C,
                        "holds": gen.growth_C is None or C <= gen.growth_C + tol}
    out["C2_lipschitz"] = {"declared": gen.lipschitz_K, "sampled_K": K,
                           "holds": gen.lipschitz_K is None or K <= gen.lipschitz_K + tol}
    out["C4_star_shaped"] = {"declared": gen.star_shaped, "max_violation": max(star_m, 0.0),
                             "holds": star_w is None, "witness": star_w}
    out["convex"] = {"declared": gen.convex, "max_violation": max(cvx_m, 0.0), "holds": cvx_w is None,
                     "witness": cvx_w}
    out["concave"] = {"declared": gen.concave, "max_violation": max(ccv_m, 0.0), "holds": ccv_w is None,
                      "witness": ccv_w}
    out["positively_homogeneous"] = {"declared": gen.positively_homogeneous, "max_violation": max(ph_m, 0.0),
                                     "holds": ph_w is None}
    consistent = True
    for key in ("C3_normalized", "C4_star_shaped", "convex", "concave", "positively_homogeneous"):
        if out[key]["declared"] and not out[key]["holds"]:
            consistent = False
    for key in ("C1_growth", "C2_lipschitz"):
        consistent &= out[key]["holds"]
    out["flags_consistent"] = bool(consistent)
    return out


def star_violation_search(gen: Generator, t_grid, z_grid, alpha_grid, dt: float = 0.01) -> dict | None:
    """Turn a (C4) grid violation into a one-period star-shapedness witness of the
    induced risk measure.

    With terminal ``-xi = (-z sqrt(dt), z sqrt(dt))`` the one-step solution has
    ``Z = z`` and ``rho_0(xi) = g(0, z) dt``, so ``rho_0(alpha xi) < alpha rho_0(xi)``
    exactly when ``g(alpha z) < alpha g(z)``.
    """
    report = check_generator(gen, t_grid, z_grid, alpha_grid)
    w = report["C4_star_shaped"]["witness"]
    if w is None:
        return None
    tree = build_binomial(1, dt)
    sq = math.sqrt(dt)
    xi = np.array([w["z"] * sq, -w["z"] * sq])
    alpha = w["alpha"]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ComparisonWarning)
        lhs = float(g_risk(gen, tree, alpha * xi, 0)[0])
        rhs = float(alpha * g_risk(gen, tree, xi, 0)[0])
    if lhs >= rhs:
        return None
    return {"dt": dt, "xi": xi.tolist(), "alpha": alpha, "rho_alpha_xi": lhs, "alpha_rho_xi": rhs,
            "gap": rhs - lhs, "generator_witness": w}


# ---------------------------------------------------------------------------
# convergence


TRANSFORMS = {
    "identity": lambda s: s,
    "sin": np.sin,
    "tanh": np.tanh,
    "abs": np.abs,
    "positive_part": lambda s: np.maximum(s, 0.0),
    "indicator_positive": lambda s: (s > 0).astype(float),
}


@dataclass(frozen=True)
class PathFunctional:
    """``scale * f(S) + shift`` with ``S`` the terminal sum or the running maximum of the path."""

    kind: str = "of_terminal_sum"
    transform: str = "identity"
    scale: float = 1.0
    shift: float = 0.0

    def __post_init__(self):
        if self.kind not in ("of_terminal_sum", "of_path_max"):
            raise InputError(f"unknown functional {self.kind!r}")
        if self.transform not in TRANSFORMS:
            raise InputError(f"unknown transform {self.transform!r}; choose from {sorted(TRANSFORMS)}")

    def apply(self, s):
        return self.scale * TRANSFORMS[self.transform](np.asarray(s, dtype=float)) + self.shift

    def on_tree(self, tree: ScenarioTree) -> np.ndarray:
        s = tree.path_sums() if self.kind == "of_terminal_sum" else tree.path_maxima()
        return self.apply(s)


def _lattice_sums(k: int, dt: float) -> np.ndarray:
    return (2 * np.arange(k + 1) - k) * math.sqrt(dt)


def _lattice_bsde(gen: Generator, N: int, T: float, terminal: np.ndarray) -> float:
    """Same scheme as :func:`solve_bsde` on the recombining lattice (state = number of up moves).

    Valid when the terminal value depends on the terminal sum only; the
    non-recombining solution is then a function of (level, up count) and the two
    agree node for node.
    """
    dt = T / N
    y = terminal
    for k in range(N - 1, -1, -1):
        y, _ = _step(gen, k * dt, dt, y[:-1], y[1:])
    return float(y[0])


def _lattice_maxmin(kappa: float, N: int, T: float, xi: np.ndarray) -> float:
    sq = math.sqrt(T / N)
    v = xi
    for _ in range(N):
        v = 0.5 * (v[1:] + v[:-1]) + kappa * np.abs(v[1:] - v[:-1]) * sq / 2
    return float(v[0])


def convergence_study(gen: Generator, payoff: PathFunctional, N_list, gamma: float | None = None,
                      T: float = 1.0) -> list:
    """Rows ``{N, value, oracle, abs_error, ratio}`` at t=0 for the risk of ``payoff``.

    With ``gamma`` the value is the quadratic-driver route ``gen + gamma/2 z^2``
    and the oracle is ``(1/gamma) ln E_gen[exp(-gamma xi)]``.  Without it the
    value is ``g_risk`` and the oracle is the linear expectation (``zero``) or
    the maxmin recursion (``abs``).
    """
    if gamma is None and gen.name not in ("zero", "abs"):
        raise InputError("no oracle for this generator without gamma")
    if gamma is not None and not (gen.positively_homogeneous and gen.normalized):
        raise InputError("entropic oracle needs a positively homogeneous, normalized generator")
    rows = []
    prev = None
    for N in N_list:
        N = int(N)
        dt = T / N
        if payoff.kind == "of_terminal_sum":
            xi = payoff.apply(_lattice_sums(N, dt))
            if gamma is None:
                value = _lattice_bsde(gen, N, T, -xi)
                if gen.name == "zero":
                    # binomial weights from log-gamma to stay exact for large N
                    j = np.arange(N + 1)
                    logw = (math.lgamma(N + 1) - np.array([math.lgamma(i + 1) + math.lgamma(N - i + 1) for i in j])
                            - N * math.log(2))
                    oracle = float(np.sum(np.exp(logw) * -xi))
                else:
                    oracle = _lattice_maxmin(gen.params["kappa"], N, T, -xi)
            else:
                value = _lattice_bsde(with_quadratic(gen, gamma), N, T, -xi)
                shift = float(np.max(-gamma * xi))
                inner = _lattice_bsde(gen, N, T, np.exp(-gamma * xi - shift))
                if inner <= 0:
                    raise NumericError("inner g-expectation lost positivity")
                oracle = (math.log(inner) + shift) / gamma
        else:
            tree = build_binomial(N, T)
            xi = payoff.on_tree(tree)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", ComparisonWarning)
                if gamma is None:
                    value = float(g_risk(gen, tree, xi, 0)[0])
                    oracle = (float(cond_expect(tree, -xi, 0)[0]) if gen.name == "zero"
                              else float(maxmin_dp(tree, gen.params["kappa"], -xi, 0, "sup")[0]))
                else:
                    r = entropic_bsde(tree, gamma, gen, xi, 0)
                    value, oracle = float(r.bsde[0]), float(r.oracle[0])
        err = abs(value - oracle)
        ratio = prev / err if (prev is not None and err > 0) else None
        rows.append({"N": N, "value": value, "oracle": oracle, "abs_error": err, "ratio": ratio})
        prev = err
    return rows


def convergence_csv(rows) -> str:
    lines = ["N,value,abs_error,ratio"]
    for r in rows:
        ratio = "" if r["ratio"] is None else repr(r["ratio"])
        lines.append(f"{r['N']},{r['value']!r},{r['abs_error']!r},{ratio}")
    return "\n".join(lines) + "\n"
