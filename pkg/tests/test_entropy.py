import itertools
import math
import warnings

import numpy as np
import pytest

from ca_lyapunov.ca_core import MeasureSpec, builtin_rule, coven_rule, identity_rule, shift_rule, step_array
from ca_lyapunov.entropy import (EntropyEstimate, analytic_shift_entropy, count_spacetime_patterns,
                                 empirical_automaton_entropy, empirical_shift_entropy, topological_upper_bound)
from oracles import step_py


def _brute_patterns(rule, p, n):
    """Distinct (2p+1) x (n+1) space-time patterns, by enumerating every word of the full light cone."""
    r, k = rule.radius, rule.k
    W = 2 * p + 1 + 2 * r * n
    seen = set()
    for w in itertools.product(range(k), repeat=W):
        rows, cur = [], list(w)
        for t in range(n + 1):
            o = r * (n - t)
            rows.append(tuple(cur[o:o + 2 * p + 1]))
            if t < n:
                cur = step_py(rule, cur)
        seen.add(tuple(rows))
    return len(seen)


def test_analytic_shift_entropy():
    assert analytic_shift_entropy(MeasureSpec.uniform(2)) == math.log(2)
    assert math.isclose(analytic_shift_entropy(MeasureSpec.uniform(2, 3)), math.log(6))
    m = MeasureSpec(((0.25, 0.75),))
    assert math.isclose(analytic_shift_entropy(m), -(0.25 * math.log(0.25) + 0.75 * math.log(0.75)))


def test_empirical_shift_entropy_is_close_and_seeded():
    m = MeasureSpec(((0.3, 0.7),))
    a = empirical_shift_entropy(m, 6, 50_000, seed=1)
    assert abs(a.value - analytic_shift_entropy(m)) < 0.02
    assert a.to_json() == empirical_shift_entropy(m, 6, 50_000, seed=1).to_json()
    small = empirical_shift_entropy(m, 10, 100, seed=1)
    assert small.warnings
    with pytest.raises(ValueError):
        empirical_shift_entropy(m, 0, 10, 1)


@pytest.mark.parametrize("spec,p,n", [("shift", 1, 3), ("coven:10", 2, 2), ("f2:1", 1, 2), ("identity", 1, 3)])
def test_pattern_counts_match_brute_force(spec, p, n):
    rule = builtin_rule(spec)
    est = count_spacetime_patterns(rule, p, n)
    assert est.params["exact"]
    assert est.pattern_count == _brute_patterns(rule, p, n)


def test_product_pattern_count_multiplies():
    p = builtin_rule("product:shift,f2:1")
    a, b = p.factors
    est = count_spacetime_patterns(p, 1, 2)
    assert est.pattern_count == _brute_patterns(a, 1, 2) * _brute_patterns(b, 1, 2)


def test_pattern_rates():
    s = count_spacetime_patterns(shift_rule(), 1, 6)
    # each row adds exactly one free cell
    assert math.isclose(s.value, math.log(2))
    ident = count_spacetime_patterns(identity_rule(), 1, 6)
    assert ident.value == 0 and ident.pattern_count == 8
    assert all(math.isclose(d, math.log(2)) for d in s.increments)


def test_pattern_count_over_budget_is_a_sampled_lower_bound():
    c = coven_rule("10")
    exact = count_spacetime_patterns(c, 2, 4)
    rough = count_spacetime_patterns(c, 2, 4, budget=64, samples=500, seed=1)
    assert not rough.params["exact"] and rough.warnings
    assert rough.pattern_count <= exact.pattern_count


def test_automaton_entropy_of_simple_rules():
    mu = MeasureSpec.uniform(2)
    ident = empirical_automaton_entropy(identity_rule(), mu, 1, 6, 20_000, seed=2)
    assert ident.value < 0.01
    s = empirical_automaton_entropy(shift_rule(), mu, 1, 6, 50_000, seed=2)
    assert abs(s.value - math.log(2)) < 0.05
    assert ident.params["estimator"] == "increment"


def test_automaton_entropy_warns_when_undersampled():
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        e = empirical_automaton_entropy(shift_rule(), MeasureSpec.uniform(2), 1, 8, 200, seed=0)
    assert e.warnings and any(issubclass(x.category, RuntimeWarning) for x in w)
    assert e.params["horizon"][0] < 8


def test_automaton_entropy_rejects_bad_arguments():
    c = coven_rule("10")
    with pytest.raises(ValueError):
        empirical_automaton_entropy(c, MeasureSpec.uniform(2), 1, 4, 100, 0)
    with pytest.raises(ValueError):
        empirical_automaton_entropy(c, MeasureSpec.uniform(3), 2, 4, 100, 0)


def test_estimate_validation():
    with pytest.raises(ValueError):
        EntropyEstimate("nope", 0.0, {})
    with pytest.raises(ValueError):
        EntropyEstimate("shift_analytic", -1.0, {})
    assert EntropyEstimate("shift_analytic", -1e-12, {}).value == 0.0


def test_topological_upper_bound():
    assert math.isclose(topological_upper_bound(coven_rule("10"), 2), 2 * math.log(2))
    assert math.isclose(topological_upper_bound(shift_rule(), 2), math.log(2))
