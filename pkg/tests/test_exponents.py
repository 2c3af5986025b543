import random
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ca_lyapunov.ca_core import (Config, MeasureSpec, WindowError, builtin_rule, coven_rule, default_measure,
                                 example2_f2_rule, identity_rule, make_rule, rule_from_function, sample_config,
                                 shift_rule)
from ca_lyapunov.exponents import (SIDES, ExponentBudgetError, I_exact, I_mu_estimate, capital_lambda,
                                   exponent_sequence, lambda_mu_exact, lambda_mu_sampled, lambda_mu_upper,
                                   lambda_tilde_bounds, lambda_tilde_exact)
import oracles


def _window(rule, n, seed, extra=4):
    half = 2 * rule.radius * n + extra
    return sample_config(default_measure(rule), -half, half, seed)


def test_shift_and_identity_values():
    s, ident = shift_rule(), identity_rule()
    for n in (1, 3, 5):
        x = _window(s, n, n)
        assert lambda_tilde_exact(s, x, n, "minus") == n
        assert lambda_tilde_exact(s, x, n, "plus") == 0
        assert I_exact(s, x, n, "minus") == n
        assert I_exact(s, x, n, "plus") == 0
        for side in SIDES:
            assert lambda_tilde_exact(ident, x, n, side) == 0
            assert I_exact(ident, x, n, side) == 0


@given(st.integers(0, 10 ** 6), st.integers(1, 3))
@settings(max_examples=25, deadline=None)
def test_random_rules_match_the_brute_force_oracle(seed, n):
    rng = random.Random(seed)
    k = rng.choice([2, 3])
    r = 1 if k == 3 else rng.choice([1, 2])
    n = min(n, 2) if r == 2 else n
    table = {}
    rule = rule_from_function(k, r, lambda t: table.setdefault(t, rng.randrange(k)))
    x = _window(rule, n, seed)
    for side in SIDES:
        lt = oracles.lambda_tilde(rule, x, n, side)
        iv = oracles.I_value(rule, x, n, side)
        for method in ("enumerate", "symbolic"):
            assert lambda_tilde_exact(rule, x, n, side, method=method) == lt
            assert I_exact(rule, x, n, side, method=method) == iv
        for search in ("binary", "linear"):
            assert I_exact(rule, x, n, side, method="enumerate", search=search) == iv


@pytest.mark.parametrize("spec,ns", [("coven:10", [3, 5]), ("f2:2", [2, 3]), ("f2:1", [4]), ("coven:011", [2])])
def test_engines_agree_on_the_example_rules(spec, ns):
    rule = builtin_rule(spec)
    for n in ns:
        for j in range(15):
            x = _window(rule, n, 100 + j)
            for side in SIDES:
                assert I_exact(rule, x, n, side, method="symbolic") == \
                    I_exact(rule, x, n, side, method="enumerate", search="binary")
                assert lambda_tilde_exact(rule, x, n, side, method="symbolic") == \
                    lambda_tilde_exact(rule, x, n, side, method="enumerate")


def test_product_exponents_are_per_track_maxima():
    p = builtin_rule("product:shift,f2:1")
    a, b = p.factors
    for j in range(10):
        x = _window(p, 3, j)
        for side in SIDES:
            views = [(a, Config(x.cells // 3, x.origin)), (b, Config(x.cells % 3, x.origin))]
            assert lambda_tilde_exact(p, x, 3, side) == max(lambda_tilde_exact(f, c, 3, side) for f, c in views)
            assert I_exact(p, x, 3, side) == max(I_exact(f, c, 3, side) for f, c in views)


def test_bracket_is_consistent():
    for spec in ("coven:10", "f2:2", "shift"):
        rule = builtin_rule(spec)
        for j in range(5):
            x = _window(rule, 3, j)
            for side in SIDES:
                b = lambda_tilde_bounds(rule, x, 3, side, seed=j)
                assert 0 <= b.lower <= b.exact <= b.upper <= rule.radius * 3
                assert b.exact == lambda_tilde_exact(rule, x, 3, side)


def test_window_too_small_is_rejected():
    s = shift_rule()
    with pytest.raises(WindowError):
        lambda_tilde_exact(s, Config(np.zeros(5, dtype=int), -2), 3, "minus")
    with pytest.raises(ValueError):
        I_exact(s, _window(s, 1, 0), 1, "left")


def test_capital_lambda_dominates_pointwise_depth():
    c = coven_rule("10")
    x = _window(c, 2, 4, extra=20)
    v, shifts = capital_lambda(c, x, 2, "minus")
    assert shifts > 1
    assert v >= lambda_tilde_exact(c, x, 2, "minus")
    assert v <= c.radius * 2


@pytest.mark.parametrize("spec,n", [("coven:10", 1), ("shift", 2), ("f2:1", 2), ("identity", 2)])
def test_lambda_mu_exact_matches_word_enumeration(spec, n):
    rule = builtin_rule(spec)
    for side in SIDES:
        assert lambda_mu_exact(rule, None, n, side) == oracles.lambda_hat(rule, n, side)


def test_lambda_mu_values_and_budget():
    c = coven_rule("10")
    assert lambda_mu_exact(c, None, 2, "minus") == Fraction(2)
    assert lambda_mu_exact(c, None, 2, "plus") == 0
    assert lambda_mu_upper(c, 2, "plus") == (Fraction(0), "enumeration")
    with pytest.raises(ExponentBudgetError):
        lambda_mu_exact(c, None, 2, "minus", budget=16)


def test_lambda_mu_budget_env(monkeypatch):
    monkeypatch.setenv("CA_LYAPUNOV_BUDGET", "64")
    with pytest.raises(ExponentBudgetError):
        lambda_mu_exact(coven_rule("10"), None, 3, "minus")
    v, method = lambda_mu_upper(coven_rule("10"), 3, "minus")
    assert method == "trivial_rn" and v == 2


def test_sampled_lambda_is_a_lower_bound():
    c = coven_rule("10")
    e = lambda_mu_sampled(c, default_measure(c), 2, 50, seed=1, side="minus")
    assert e.flags["lower_bound"] and e.value <= lambda_mu_exact(c, None, 2, "minus")


def test_I_mu_estimate_is_worker_independent():
    c = coven_rule("10")
    mu = default_measure(c)
    a = I_mu_estimate(c, mu, 4, 64, seed=9, side="minus", workers=1)
    b = I_mu_estimate(c, mu, 4, 64, seed=9, side="minus", workers=3)
    assert a.to_json() == b.to_json()
    assert 0 <= a.value <= c.radius
    with pytest.raises(ValueError):
        I_mu_estimate(c, MeasureSpec.uniform(3), 4, 8, 0, "minus")


def test_exponent_sequence_rows():
    c = coven_rule("10")
    rows = exponent_sequence(c, default_measure(c), [2, 4], "I", "minus", 50, 3)
    assert [r["n"] for r in rows] == [2, 4]
    assert all("non_monotone" in r for r in rows)
    exact = exponent_sequence(c, None, [1, 2], "lambda_exact", "minus")
    assert [r["value"] for r in exact] == [2.0, 2.0]
    with pytest.raises(ValueError):
        exponent_sequence(c, default_measure(c), [4, 2])
