"""Model files: JSON documents naming a tree, payoffs, measure changes,
generators, risk measures and command parameters.  See ``docs/model_schema.md``."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError
from .gexp import Generator, PathFunctional, generator_from_json
from .measures import (
    AlphaMaxmin,
    ConditionalVaR,
    Entropic,
    Envelope,
    GExpectation,
    Linear,
    RobustVaR,
    Shifted,
    SupOfFamily,
    UtilityShortfall,
    WorstCase,
    make_utility,
)
from .members import EnvelopeMember
from .space import (
    MAX_LEVELS,
    MeasureChange,
    ScenarioTree,
    build_binomial,
    build_tree,
    measure_from_density,
    one_period,
    random_tree,
    tree_from_json,
)


@dataclass
class Model:
    tree: ScenarioTree
    payoffs: dict = field(default_factory=dict)
    measure_changes: dict = field(default_factory=dict)
    generators: dict = field(default_factory=dict)
    measures: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)


def _wrap(path: str, fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except InputError as exc:
        raise InputError(f"{path}: {exc}") from None
    except (TypeError, ValueError, KeyError) as exc:
        raise InputError(f"{path}: {type(exc).__name__}: {exc}") from None


def load_json(path: str) -> dict:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise InputError(f"cannot read model file: {exc}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise InputError(f"{path}: top level must be an object")
    return doc


def parse_tree(doc) -> ScenarioTree:
    if not isinstance(doc, dict):
        raise InputError("must be an object")
    if "binomial" in doc:
        b = doc["binomial"]
        return build_binomial(int(b["N"]), float(b.get("T", 1.0)), int(b.get("max_levels", MAX_LEVELS)))
    if "one_period" in doc:
        return one_period(doc["one_period"]["probs"], float(doc["one_period"].get("dt", 1.0)))
    if "branching" in doc:
        return build_tree(doc["branching"], doc.get("probs"), float(doc.get("dt", 1.0)))
    if "random" in doc:
        r = doc["random"]
        rng = np.random.default_rng(int(r.get("seed", 0)))
        return random_tree(rng, int(r["N"]), int(r.get("max_children", 3)), int(r.get("min_children", 1)))
    if "nodes" in doc:
        return tree_from_json(doc)
    raise InputError("expected one of 'binomial', 'one_period', 'branching', 'random', 'nodes'")


def parse_payoff(doc, tree: ScenarioTree) -> np.ndarray:
    if isinstance(doc, list):
        doc = {"leaf_values": doc}
    if not isinstance(doc, dict):
        raise InputError("payoff must be a list or an object")
    if "leaf_values" in doc:
        v = np.asarray(doc["leaf_values"], dtype=float)
        if v.shape != (tree.n_leaves,):
            raise InputError(f"leaf_values needs {tree.n_leaves} entries, got {v.size}")
        if not np.all(np.isfinite(v)):
            raise InputError("leaf_values must be finite")
        return v
    if "functional" in doc:
        return parse_functional(doc).on_tree(tree)
    if "constant" in doc:
        return np.full(tree.n_leaves, float(doc["constant"]))
    raise InputError("payoff needs 'leaf_values', 'functional' or 'constant'")


def parse_functional(doc) -> PathFunctional:
    params = dict(doc.get("params", {}))
    return PathFunctional(doc["functional"], params.get("transform", "identity"),
                          float(params.get("scale", 1.0)), float(params.get("shift", 0.0)))


def parse_measure_change(doc, tree: ScenarioTree) -> MeasureChange:
    if isinstance(doc, dict) and "transitions" in doc:
        levels = doc["transitions"]
        if len(levels) != tree.N:
            raise InputError(f"transitions needs {tree.N} levels")
        Q = MeasureChange(tuple([np.ones(1)] + [np.asarray(p, dtype=float) for p in levels]))
        Q.validate(tree)
        return Q
    if isinstance(doc, dict) and "density" in doc:
        return measure_from_density(tree, doc["density"])
    raise InputError("measure change needs 'transitions' or 'density'")


class _Context:
    def __init__(self, tree, payoffs, qs, gens):
        self.tree, self.payoffs, self.qs, self.gens = tree, payoffs, qs, gens

    def payoff(self, ref, path):
        if isinstance(ref, str):
            if ref not in self.payoffs:
                raise InputError(f"{path}: unknown payoff {ref!r}")
            return self.payoffs[ref]
        return _wrap(path, parse_payoff, ref, self.tree)

    def measure_change(self, ref, path):
        if ref is None or ref == "P":
            return None
        if isinstance(ref, str):
            if ref not in self.qs:
                raise InputError(f"{path}: unknown measure change {ref!r}")
            return self.qs[ref]
        return _wrap(path, parse_measure_change, ref, self.tree)

    def generator(self, ref, path) -> Generator:
        if isinstance(ref, str) and ref in self.gens:
            return self.gens[ref]
        return _wrap(path, generator_from_json, ref)


def spec_from_json(doc, ctx: _Context, path: str = "measure"):
    if not isinstance(doc, dict) or "type" not in doc:
        raise InputError(f"{path}: needs a 'type' field")
    kind = doc["type"]

    def num(key, default=None):
        if key not in doc and default is None:
            raise InputError(f"{path}.{key}: required")
        try:
            return float(doc.get(key, default))
        except (TypeError, ValueError):
            raise InputError(f"{path}.{key}: must be a number") from None

    def build(cls, *args, **kw):
        return _wrap(path, cls, *args, **kw)

    if kind == "ConditionalVaR":
        return build(ConditionalVaR, num("lambda"), ctx.measure_change(doc.get("base"), f"{path}.base"))
    if kind == "RobustVaR":
        sc = doc.get("scenarios", [])
        qs = tuple(ctx.measure_change(q, f"{path}.scenarios[{i}]") for i, q in enumerate(sc))
        qs = tuple(q if q is not None else _reference(ctx.tree) for q in qs)
        return build(RobustVaR, num("lambda"), qs)
    if kind == "Entropic":
        return build(Entropic, num("gamma"), ctx.measure_change(doc.get("base"), f"{path}.base"))
    if kind == "UtilityShortfall":
        u = doc.get("utility", {"name": "exponential"})
        if isinstance(u, str):
            u = {"name": u}
        util = _wrap(f"{path}.utility", make_utility, u.get("name"), **{k: v for k, v in u.items() if k != "name"})
        return build(UtilityShortfall, util, num("tol", 1e-10))
    if kind == "Linear":
        return Linear(ctx.measure_change(doc.get("Q"), f"{path}.Q"))
    if kind == "WorstCase":
        return WorstCase()
    if kind == "GExpectation":
        return GExpectation(ctx.generator(doc.get("generator"), f"{path}.generator"))
    if kind == "AlphaMaxmin":
        return build(AlphaMaxmin, num("kappa"), num("alpha"))
    if kind == "Shifted":
        return Shifted(spec_from_json(doc.get("inner"), ctx, f"{path}.inner"), ctx.payoff(doc.get("Z"), f"{path}.Z"))
    if kind == "EnvelopeMember":
        return build(EnvelopeMember, doc.get("kind", "monetary"), ctx.payoff(doc.get("Z"), f"{path}.Z"),
                     int(doc.get("t", 0)))
    if kind in ("Envelope", "SupOfFamily"):
        members = tuple(spec_from_json(m, ctx, f"{path}.members[{i}]") for i, m in enumerate(doc.get("members", [])))
        return build(Envelope if kind == "Envelope" else SupOfFamily, members)
    raise InputError(f"{path}.type: unknown risk measure type {kind!r}")


def _reference(tree):
    from .space import reference_measure

    return reference_measure(tree)


def spec_to_json(spec) -> dict:
    """JSON encoding mirroring :func:`spec_from_json`; measure changes are inlined."""

    def q(m):
        return None if m is None else {"transitions": [p.tolist() for p in m.probs[1:]]}

    match spec:
        case ConditionalVaR(lam=lam, base=b):
            return {"type": "ConditionalVaR", "lambda": lam, "base": q(b)}
        case RobustVaR(lam=lam, scenarios=sc):
            return {"type": "RobustVaR", "lambda": lam, "scenarios": [q(s) for s in sc]}
        case Entropic(gamma=g, base=b):
            return {"type": "Entropic", "gamma": g, "base": q(b)}
        case UtilityShortfall(utility=u, tol=tol):
            return {"type": "UtilityShortfall", "utility": u.to_json(), "tol": tol}
        case Linear(Q=Q):
            return {"type": "Linear", "Q": q(Q)}
        case WorstCase():
            return {"type": "WorstCase"}
        case GExpectation(generator=g):
            return {"type": "GExpectation", "generator": g.to_json()}
        case AlphaMaxmin(kappa=k, alpha=a):
            return {"type": "AlphaMaxmin", "kappa": k, "alpha": a}
        case Shifted(inner=inner, Z=Z):
            return {"type": "Shifted", "inner": spec_to_json(inner), "Z": {"leaf_values": np.asarray(Z).tolist()}}
        case EnvelopeMember(kind=k, Z=Z, t=t):
            return {"type": "EnvelopeMember", "kind": k, "Z": {"leaf_values": Z.tolist()}, "t": t}
        case Envelope(members=ms):
            return {"type": "Envelope", "members": [spec_to_json(m) for m in ms]}
        case SupOfFamily(members=ms):
            return {"type": "SupOfFamily", "members": [spec_to_json(m) for m in ms]}
    raise InputError(f"cannot encode {type(spec).__name__}")


def parse_model(doc: dict) -> Model:
    if "tree" not in doc:
        raise InputError("model: missing 'tree'")
    tree = _wrap("tree", parse_tree, doc["tree"])
    payoffs = {}
    for name, p in (doc.get("payoffs") or {}).items():
        payoffs[name] = _wrap(f"payoffs.{name}", parse_payoff, p, tree)
    qs = {}
    for name, q in (doc.get("measure_changes") or {}).items():
        qs[name] = _wrap(f"measure_changes.{name}", parse_measure_change, q, tree)
    gens = {}
    for name, g in (doc.get("generators") or {}).items():
        gens[name] = _wrap(f"generators.{name}", generator_from_json, g)
    ctx = _Context(tree, payoffs, qs, gens)
    measures = {}
    for name, m in (doc.get("measures") or {}).items():
        measures[name] = spec_from_json(m, ctx, f"measures.{name}")
    params = doc.get("params") or {}
    if not isinstance(params, dict):
        raise InputError("params: must be an object")
    return Model(tree, payoffs, qs, gens, measures, params, doc)


def load_model(path: str) -> Model:
    return parse_model(load_json(path))
