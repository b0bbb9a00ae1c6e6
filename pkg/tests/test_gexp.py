import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from riskenv import oracles
from riskenv.errors import ComparisonWarning, InputError, NumericError
from riskenv.gexp import (
    PathFunctional,
    check_generator,
    convergence_csv,
    convergence_study,
    entropic_bsde,
    entropic_dual_value,
    entropic_linear,
    entropic_maximizer,
    g_expectation,
    g_risk,
    generator_from_json,
    make_generator,
    maxmin_dp,
    relative_entropy,
    solve_bsde,
    star_violation_search,
)
from riskenv.measures import Entropic, GExpectation, check_axioms, evaluate
from riskenv.space import build_binomial, cond_expect, lift, one_period, random_measure, random_tree, reference_measure

from .strategies import finite

CATALOGUE = ["zero", "abs", "neg_abs", "asymmetric", "example41", "quadratic", "neg_quadratic", "saturated"]
Z_GRID = np.linspace(-3, 3, 61)
A_GRID = np.linspace(1, 4, 13)


def test_one_step_abs():
    # dt = 0.04: Z = (1 - (-1)) / 0.4 = 5, Y = 0 + 0.5 * 5 * 0.04 = 0.1
    tr = build_binomial(1, 0.04)
    y = g_expectation(tr, make_generator("abs", kappa=0.5), [-1.0, 1.0], 0)[0]
    assert abs(y - 0.1) <= 1e-15
    assert y == oracles.one_step_bsde(make_generator("abs", kappa=0.5), 0.04, -1.0, 1.0)


def test_zero_generator_is_expectation(rng):
    tr = build_binomial(5, 1.0)
    xi = rng.normal(size=32)
    sol = solve_bsde(tr, make_generator("zero"), xi)
    for t in range(6):
        np.testing.assert_allclose(sol.at(t), cond_expect(tr, xi, t), atol=1e-12)
    assert sol.verified and sol.slope_margin == 1.0


@pytest.mark.parametrize("N", [1, 3, 6, 10])
def test_abs_bsde_equals_maxmin(N, rng):
    tr = build_binomial(N, 1.0)
    kappa = 0.9 / math.sqrt(tr.dt)
    xi = rng.normal(size=tr.n_leaves)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ComparisonWarning)
        for t in range(N + 1):
            np.testing.assert_allclose(g_expectation(tr, make_generator("abs", kappa=kappa), xi, t),
                                       maxmin_dp(tr, kappa, xi, t, "sup"), atol=1e-12)
            np.testing.assert_allclose(g_expectation(tr, make_generator("neg_abs", kappa=kappa), xi, t),
                                       maxmin_dp(tr, kappa, xi, t, "inf"), atol=1e-12)


def test_maxmin_matches_enumeration(rng):
    tr = build_binomial(3, 1.0)
    xi = rng.normal(size=8)
    for sign, mode in ((1.0, "sup"), (-1.0, "inf")):
        assert abs(maxmin_dp(tr, 0.8, xi, 0, mode)[0] - oracles.maxmin_enumeration(tr, 0.8, xi, sign)) <= 1e-12


def test_maxmin_validation():
    tr = build_binomial(4, 1.0)
    with pytest.raises(InputError):
        maxmin_dp(tr, 3.0, np.zeros(16), 0)
    with pytest.raises(InputError):
        maxmin_dp(tr, 1.0, np.zeros(16), 0, 1.5)
    with pytest.raises(InputError):
        g_expectation(random_tree(np.random.default_rng(0), 2, min_children=2), make_generator("zero"), np.zeros(4), 0)


@pytest.mark.parametrize("name", ["zero", "abs", "asymmetric", "example41", "quadratic"])
@given(seed=st.integers(0, 2**32 - 1), N=st.integers(1, 6), c=finite)
def test_translation_and_normalization(name, seed, N, c):
    rng = np.random.default_rng(seed)
    tr = build_binomial(N, 1.0)
    gen = make_generator(name)
    xi = 0.3 * rng.normal(size=tr.n_leaves)
    t = int(rng.integers(0, N + 1))
    m = np.round(rng.normal(size=tr.level_size(t)), 3)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ComparisonWarning)
        base = g_risk(gen, tr, xi, t)
        np.testing.assert_allclose(g_risk(gen, tr, xi + lift(tr, m, t), t), base - m, atol=1e-12)
        assert np.all(np.abs(g_risk(gen, tr, np.full(tr.n_leaves, c), t) + c) <= 1e-12 * (1 + abs(c)))
        assert np.all(g_risk(gen, tr, np.zeros(tr.n_leaves), t) == 0.0)


def test_comparison_warning_and_strict():
    tr = build_binomial(1, 1.0)
    gen = make_generator("abs", kappa=2.0)
    with pytest.warns(ComparisonWarning):
        sol = solve_bsde(tr, gen, [0.0, 1.0])
    assert not sol.verified and sol.slope_margin < 0
    with pytest.raises(NumericError):
        solve_bsde(tr, gen, [0.0, 1.0], strict=True)
    with pytest.raises(InputError):
        solve_bsde(tr, gen, [0.0, np.inf])


def test_comparison_holds_when_verified(rng):
    tr = build_binomial(6, 1.0)
    gen = make_generator("abs", kappa=1.0)
    for _ in range(50):
        a = rng.normal(size=64)
        b = a + np.abs(rng.normal(size=64))
        sa, sb = solve_bsde(tr, gen, a), solve_bsde(tr, gen, b)
        assert sa.verified and sb.verified
        for t in range(7):
            assert np.all(sa.at(t) <= sb.at(t) + 1e-12)


@pytest.mark.parametrize("name", ["example41", "asymmetric"])
def test_star_shaped_g_risk(name):
    rng = np.random.default_rng(17)
    gen = make_generator(name)
    checked = 0
    for _ in range(200):
        N = int(rng.integers(1, 7))
        tr = build_binomial(N, 1.0)
        xi = 0.1 * rng.normal(size=tr.n_leaves)
        a = float(rng.uniform(1, 3))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ComparisonWarning)
            s1 = solve_bsde(tr, gen, -a * xi)
            s2 = solve_bsde(tr, gen, -xi)
        if s1.slope_margin > 0 and s2.slope_margin > 0:
            checked += 1
            for t in range(N + 1):
                assert np.all(s1.at(t) >= a * s2.at(t) - 1e-12)
    assert checked >= 150


def test_gexpectation_spec_star_axiom():
    tr = build_binomial(3, 1.0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ComparisonWarning)
        rep = check_axioms(GExpectation(make_generator("asymmetric")), tr, ["A1", "A2", "A6"], budget=200, seed=0)
    assert {r.status for r in rep.values()} == {"pass"}


def test_check_generator_flags_catalogue():
    for name in CATALOGUE:
        rep = check_generator(make_generator(name), [0.0, 0.5], Z_GRID, A_GRID)
        assert rep["C3_normalized"]["holds"]
        assert rep["C1_growth"]["holds"] and rep["C2_lipschitz"]["holds"], name
        assert rep["flags_consistent"], name


def test_check_generator_rejects_bad_grids():
    with pytest.raises(InputError):
        check_generator(make_generator("zero"), [0.0], Z_GRID, [0.5])
    with pytest.raises(InputError):
        check_generator(make_generator("zero"), [], Z_GRID, A_GRID)


def test_check_generator_catches_false_claim():
    g = make_generator("neg_quadratic")
    from dataclasses import replace

    liar = replace(g, star_shaped=True)
    rep = check_generator(liar, [0.0], Z_GRID, A_GRID)
    assert not rep["C4_star_shaped"]["holds"] and not rep["flags_consistent"]
    w = rep["C4_star_shaped"]["witness"]
    assert w["g_alpha_z"] < w["alpha_g_z"]


@pytest.mark.parametrize("name", CATALOGUE)
def test_star_violation_search(name):
    w = star_violation_search(make_generator(name), [0.0], Z_GRID, A_GRID)
    if name in ("neg_quadratic", "saturated"):
        assert w is not None and w["gap"] > 0
        tr = build_binomial(1, w["dt"])
        xi = np.array(w["xi"])
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ComparisonWarning)
            assert g_risk(make_generator(name), tr, w["alpha"] * xi, 0)[0] < w["alpha"] * g_risk(
                make_generator(name), tr, xi, 0)[0]
    else:
        assert w is None


def test_generator_json():
    g = generator_from_json({"name": "abs", "kappa": 0.5})
    assert g.params["kappa"] == 0.5 and g(0.0, np.array([-2.0]))[0] == 1.0
    q = generator_from_json({"name": "quadratic_entropic", "gamma": 2.0, "base": {"name": "abs", "kappa": 1.0}})
    assert q(0.0, np.array([1.0]))[0] == 2.0
    with pytest.raises(InputError):
        generator_from_json({"name": "abs", "kappa": -1})
    with pytest.raises(InputError):
        generator_from_json({"kappa": 1})
    with pytest.raises(InputError):
        make_generator("asymmetric", k1=2.0, k2=1.0)


# --- entropic -------------------------------------------------------------------


@pytest.mark.parametrize("base", [("zero", {}), ("abs", {"kappa": 0.5})])
def test_entropic_routes_agree_as_dt_shrinks(base):
    name, params = base
    gaps = []
    for N in (4, 8, 16):
        tr = build_binomial(N, 1.0)
        xi = np.sin(tr.path_sums())
        gaps.append(entropic_bsde(tr, 1.0, make_generator(name, **params), xi, 0).gap)
    assert gaps[0] > gaps[1] > gaps[2]


def test_entropic_zero_base_oracle_is_closed_form(rng):
    tr = build_binomial(4, 1.0)
    xi = rng.normal(size=16)
    r = entropic_bsde(tr, 1.5, make_generator("zero"), xi, 0)
    np.testing.assert_allclose(r.oracle, evaluate(Entropic(1.5), tr, xi, 0), atol=1e-12)


def test_entropic_bsde_rejects_bad_base():
    tr = build_binomial(2, 1.0)
    with pytest.raises(InputError):
        entropic_bsde(tr, 1.0, make_generator("example41"), np.zeros(4), 0)
    with pytest.raises(InputError):
        entropic_bsde(tr, 0.0, make_generator("zero"), np.zeros(4), 0)


def test_relative_entropy_basics(rng):
    tr = random_tree(rng, 3)
    P = reference_measure(tr)
    assert np.all(np.abs(relative_entropy(tr, P, P, 1)) <= 1e-15)
    Q = random_measure(tr, rng)
    assert np.all(relative_entropy(tr, Q, P, 0) >= -1e-15)
    R = random_measure(tr, rng, equivalent=False)
    with pytest.raises(InputError):
        relative_entropy(tr, P, R, 0)


def test_relative_entropy_one_period():
    tr = one_period([0.5, 0.5])
    R = random_measure(tr, np.random.default_rng(0))
    r = R.probs[1]
    assert abs(relative_entropy(tr, R, reference_measure(tr), 0)[0] - np.sum(r * np.log(2 * r))) <= 1e-15


@given(st.integers(0, 2**32 - 1), st.floats(0.1, 3.0))
def test_variational_identity(seed, gamma):
    rng = np.random.default_rng(seed)
    tr = random_tree(rng, 3, min_children=1)
    xi = 2 * rng.normal(size=tr.n_leaves)
    Q = random_measure(tr, rng)
    val = entropic_linear(tr, xi, gamma, 0, Q)
    R = entropic_maximizer(tr, xi, gamma, Q)
    np.testing.assert_allclose(entropic_dual_value(tr, xi, gamma, R, 0, Q), val, atol=1e-9)
    # any other equivalent measure stays below
    for _ in range(5):
        assert np.all(entropic_dual_value(tr, xi, gamma, random_measure(tr, rng), 0, Q) <= val + 1e-12)


def test_entropic_linear_matches_measure(rng):
    tr = random_tree(rng, 3)
    xi = rng.normal(size=tr.n_leaves)
    for t in range(4):
        np.testing.assert_allclose(entropic_linear(tr, xi, 0.7, t), evaluate(Entropic(0.7), tr, xi, t), atol=1e-12)


# --- convergence ----------------------------------------------------------------


def test_convergence_zero_generator_exact():
    rows = convergence_study(make_generator("zero"), PathFunctional(transform="sin"), [4, 8, 16])
    assert all(r["abs_error"] <= 1e-12 for r in rows)


def test_convergence_abs_matches_maxmin():
    rows = convergence_study(make_generator("abs", kappa=0.5), PathFunctional(transform="tanh"), [4, 16])
    assert all(r["abs_error"] <= 1e-12 for r in rows)


def test_convergence_entropic_rates():
    rows = convergence_study(make_generator("zero"), PathFunctional(transform="sin"), [4, 8, 16, 32], gamma=1.0)
    errs = [r["abs_error"] for r in rows]
    assert all(a > b for a, b in zip(errs, errs[1:]))
    assert all(r["ratio"] >= 1.3 for r in rows[1:])
    assert rows[0]["ratio"] is None


def test_convergence_lattice_matches_tree():
    # the recombining fast path and the full tree give the same number
    pf = PathFunctional(transform="sin", scale=0.5)
    gen = make_generator("abs", kappa=0.5)
    rows = convergence_study(gen, pf, [6], gamma=1.0)
    tr = build_binomial(6, 1.0)
    r = entropic_bsde(tr, 1.0, gen, pf.on_tree(tr), 0)
    assert abs(rows[0]["value"] - r.bsde[0]) <= 1e-12
    assert abs(rows[0]["oracle"] - r.oracle[0]) <= 1e-12


def test_convergence_path_max_functional():
    rows = convergence_study(make_generator("zero"), PathFunctional("of_path_max", "identity"), [2, 4])
    assert all(r["abs_error"] <= 1e-12 for r in rows)


def test_convergence_errors():
    with pytest.raises(InputError):
        convergence_study(make_generator("example41"), PathFunctional(), [4])
    with pytest.raises(InputError):
        convergence_study(make_generator("example41"), PathFunctional(), [4], gamma=1.0)
    with pytest.raises(InputError):
        PathFunctional(transform="cube")
    with pytest.raises(InputError):
        PathFunctional(kind="of_average")


def test_convergence_csv():
    rows = [{"N": 4, "value": 0.5, "oracle": 0.4, "abs_error": 0.1, "ratio": None},
            {"N": 8, "value": 0.45, "oracle": 0.4, "abs_error": 0.05, "ratio": 2.0}]
    assert convergence_csv(rows) == "N,value,abs_error,ratio\n4,0.5,0.1,\n8,0.45,0.05,2.0\n"
