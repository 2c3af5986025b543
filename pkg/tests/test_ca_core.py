import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ca_lyapunov.ca_core import (Config, MeasureSpec, RuleError, WindowError, Word, apply, builtin_rule,
                                 coven_rule, default_measure, evolve, example2_f2_rule, make_rule,
                                 product_rule, rule_from_function, rule_from_json, sample_cells,
                                 sample_config, shift_config, shift_rule, split_symbols, step_array, widen)
from oracles import step_py


@st.composite
def rules(draw, max_k=3, max_r=2):
    k = draw(st.integers(2, max_k))
    r = draw(st.integers(1, max_r if k == 2 else 1))
    table = draw(st.lists(st.integers(0, k - 1), min_size=k ** (2 * r + 1), max_size=k ** (2 * r + 1)))
    return make_rule(k, r, table)


@given(rules(), st.data())
@settings(max_examples=60, deadline=None)
def test_step_matches_pure_python(rule, data):
    cells = data.draw(st.lists(st.integers(0, rule.k - 1), min_size=2 * rule.radius + 1, max_size=30))
    out = step_array(rule.table, rule.k, rule.radius, np.array(cells))
    assert out.tolist() == step_py(rule, cells)


@given(rules(), st.data())
@settings(max_examples=40, deadline=None)
def test_mirror_is_an_involution_and_commutes_with_reflection(rule, data):
    assert rule.mirrored().mirrored() == rule
    cells = data.draw(st.lists(st.integers(0, rule.k - 1), min_size=2 * rule.radius + 1, max_size=20))
    fwd = step_py(rule, cells)
    back = step_py(rule.mirrored(), cells[::-1])
    assert back == fwd[::-1]


def test_make_rule_accepts_mapping_and_rejects_bad_tables():
    r = make_rule(2, 0, {(0,): 1, (1,): 0})
    assert r.table.tolist() == [1, 0]
    with pytest.raises(RuleError):
        make_rule(2, 1, [0] * 7)
    with pytest.raises(RuleError):
        make_rule(2, 0, [0, 2])
    with pytest.raises(RuleError):
        make_rule(2, 0, {(0,): 1})
    with pytest.raises(RuleError):
        make_rule(2, -1, [0])


def test_builtins():
    s = builtin_rule("builtin:shift")
    assert step_py(s, [0, 1, 1, 0]) == [1, 0]
    c = builtin_rule("coven:10")
    assert c.radius == 2 and c.one_sided
    assert c.local(1, 1, 0, 1, 0) == 1 and c.local(1, 1, 0, 1, 1) == 0
    with pytest.raises(RuleError):
        coven_rule("11")
    f2 = example2_f2_rule(2)
    assert f2.k == 3 and f2.local(0, 0, 1, 0, 1) == 0 and f2.local(0, 0, 1, 2, 1) == 1
    p = builtin_rule("product:shift,f2:2")
    assert p.k == 6 and p.radius == 2 and len(p.factors) == 2
    with pytest.raises(RuleError):
        builtin_rule("nope")


def test_product_acts_componentwise():
    a, b = shift_rule(2), example2_f2_rule(1)
    p = product_rule(a, b)
    rng = np.random.default_rng(0)
    x1, x2 = rng.integers(0, 2, 20), rng.integers(0, 3, 20)
    out = step_array(p.table, p.k, p.radius, x1 * 3 + x2)
    o1, o2 = split_symbols(p, out)
    assert o1.tolist() == step_py(a, x1.tolist())
    assert o2.tolist() == step_py(b, x2.tolist())


def test_widen_keeps_the_map():
    c = coven_rule("10")
    w = widen(c, 3)
    x = np.random.default_rng(1).integers(0, 2, 30)
    assert step_array(w.table, 2, 3, x).tolist() == step_array(c.table, 2, 2, x)[1:-1].tolist()


def test_rule_json_roundtrip():
    c = coven_rule("10")
    again = rule_from_json(json.loads(json.dumps(c.to_json())))
    assert again == c
    with pytest.raises(RuleError):
        rule_from_json({"radius": 1, "table": []})


def test_config_text_roundtrip_and_validity():
    x = Config(np.array([0, 1, 2, 1, 0]), -2, -1, 1)
    y = Config.from_text(x.to_text())
    assert y == x
    assert x[0] == 2 and x.segment(-1, 1).tolist() == [1, 2, 1]
    with pytest.raises(WindowError):
        x.segment(-2, 0)
    with pytest.raises(WindowError):
        Config(np.array([0, 1]), 0, -1, 1)
    m = x.mirrored()
    assert m[1] == x[-1] and m.mirrored() == x


def test_apply_and_evolve_shrink_the_valid_interval():
    s = shift_rule()
    x = Config(np.arange(10) % 2, -5)
    rows = evolve(s, x, 2)
    assert [(r.valid_lo, r.valid_hi) for r in rows] == [(-5, 4), (-4, 3), (-3, 2)]
    # the shift moves every symbol one place left
    for i in range(-4, 4):
        assert rows[1][i] == x[i + 1]
    with pytest.raises(WindowError):
        evolve(s, x, 5)


def test_shift_config_commutes_with_apply():
    c = coven_rule("10")
    x = sample_config(default_measure(c), -20, 20, seed=3)
    a = apply(c, shift_config(x, 3))
    b = shift_config(apply(c, x), 3)
    lo, hi = max(a.valid_lo, b.valid_lo), min(a.valid_hi, b.valid_hi)
    assert a.segment(lo, hi).tolist() == b.segment(lo, hi).tolist()


def test_word_parse():
    w = Word.parse("0 1 1", anchor=-1)
    assert w.symbols == (0, 1, 1) and w.end == 1 and str(w) == "011"
    assert Word.parse("011").symbols == (0, 1, 1)


def test_measure_validation():
    with pytest.raises(ValueError):
        MeasureSpec(((0.5, 0.6),))
    with pytest.raises(ValueError):
        MeasureSpec(((1.0, 0.0),))
    m = MeasureSpec.uniform(2, 3)
    assert m.alphabet_size == 6 and np.isclose(m.symbol_probs().sum(), 1)


@given(st.integers(0, 2 ** 32), st.integers(-1000, 1000), st.integers(1, 50), st.integers(0, 20))
@settings(max_examples=50, deadline=None)
def test_sampling_depends_only_on_seed_stream_and_coordinate(seed, lo, width, cut):
    m = MeasureSpec(((0.2, 0.8), (0.3, 0.3, 0.4)))
    whole = sample_cells(m, lo, lo + width, seed)
    cut = min(cut, width)
    assert np.array_equal(whole[cut:], sample_cells(m, lo + cut, lo + width, seed))
    assert np.array_equal(whole, sample_cells(m, lo, lo + width, seed))


def test_sampling_frequencies():
    m = MeasureSpec(((0.2, 0.8),))
    x = sample_cells(m, 0, 99_999, seed=7)
    assert abs(x.mean() - 0.8) < 0.01
    other = sample_cells(m, 0, 99_999, seed=7, stream=1)
    assert not np.array_equal(x, other)
