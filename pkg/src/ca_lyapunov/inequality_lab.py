"""Inequality checks, randomized property suites and the two worked examples.

Every check compares estimator outputs with a declared tolerance; the verdict
depends on the margin rhs - lhs and that tolerance only.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .ca_core import (Config, MeasureSpec, Rule, Word, apply, builtin_rule, default_measure,
                      sample_config, shift_config, step_array)
from .entropy import (analytic_shift_entropy, count_spacetime_patterns, empirical_automaton_entropy,
                      empirical_shift_entropy, topological_upper_bound)
from .exponents import (ExponentBudgetError, I_exact, I_mu_estimate, lambda_mu_exact, lambda_mu_upper,
                        lambda_tilde_bounds, lambda_tilde_exact)
from .set_dynamics import certify_blocking, decide_surjective, has_equicontinuous_points, search_blocking_words

INEQUALITIES = ("thm_5_5", "cor_5_6", "prop_5_7", "prop_3_2")
METRIC_TOL = 0.1
TOPOLOGICAL_TOL = 0.2
SHIFT_REL_TOL = 0.02


@dataclass
class InequalityReport:
    inequality_id: str
    lhs: float
    rhs: float
    verdict: str
    tolerance: float
    params: dict
    provenance: list = field(default_factory=list)

    @property
    def margin(self) -> float:
        return self.rhs - self.lhs

    def to_json(self) -> dict:
        d = asdict(self)
        d["margin"] = self.margin
        return d


@dataclass
class PropertyReport:
    property_id: str
    trials: int
    failures: list = field(default_factory=list)
    skipped: int = 0
    params: dict = field(default_factory=dict)

    @property
    def status(self) -> str:
        return "pass" if not self.failures else "fail"

    def to_json(self) -> dict:
        d = asdict(self)
        d["status"] = self.status
        return d


def verdict(lhs: float, rhs: float, tolerance: float) -> str:
    margin = rhs - lhs
    # equal sides computed along different float paths still count as holding
    if margin >= -1e-12:
        return "holds"
    if margin >= -tolerance:
        return "holds_within_tolerance"
    return "violated"


def _report(iid, lhs, rhs, tol, params, provenance) -> InequalityReport:
    return InequalityReport(iid, float(lhs), float(rhs), verdict(lhs, rhs, tol), tol, params, provenance)


def _exponent_sum(rule, measure, n, samples, seed, workers):
    ests = {s: I_mu_estimate(rule, measure, n, samples, seed, s, workers) for s in ("plus", "minus")}
    prov = [dict(op="I_mu_estimate", side=s, seed=seed, method=e.method, n=n, samples=samples,
                 value=e.value, stderr=e.stderr) for s, e in ests.items()]
    return ests["plus"].value + ests["minus"].value, prov


def _lambda_sum(rule, lambda_n):
    total = 0.0
    prov = []
    for side in ("plus", "minus"):
        v, method = lambda_mu_upper(rule, lambda_n, side)
        total += float(v)
        prov.append(dict(op="lambda_mu", side=side, seed=None, method=method, n=lambda_n, value=float(v)))
    return total, prov


def _entropy_lhs(rule, measure, n, p, samples, seed):
    e = empirical_automaton_entropy(rule, measure, p, n, samples, seed)
    prov = dict(op="empirical_automaton_entropy", seed=seed, method=e.params["estimator"], n=n, p=p,
                samples=samples, value=e.value, ratio=e.ratio, warnings=e.warnings)
    return e.value, prov


def check_average_inequality(rule: Rule, measure: MeasureSpec, n: int, p: int, samples: int, seed: int,
                             exponent_samples: int | None = None, tolerance: float = METRIC_TOL,
                             workers: int = 1) -> InequalityReport:
    """h_mu(F) <= h_mu(sigma) (I+ + I-) with sampled entropy and sampled exponents."""
    exponent_samples = exponent_samples or min(samples, 2000)
    lhs, p_lhs = _entropy_lhs(rule, measure, n, p, samples, seed)
    h_sigma = analytic_shift_entropy(measure)
    isum, p_rhs = _exponent_sum(rule, measure, n, exponent_samples, seed, workers)
    params = dict(n=n, p=p, samples=samples, exponent_samples=exponent_samples, seed=seed,
                  h_sigma=h_sigma, exponent_sum=isum)
    return _report("thm_5_5", lhs, h_sigma * isum, tolerance, params, [p_lhs] + p_rhs)


def check_max_inequality(rule: Rule, measure: MeasureSpec, n: int, p: int, samples: int, seed: int,
                         lambda_n: int = 2, tolerance: float = METRIC_TOL) -> InequalityReport:
    """h_mu(F) <= h_mu(sigma) (lambda+ + lambda-), exponents exact at horizon ``lambda_n``.

    The finite-horizon maximum over words is subadditive in n, so its value at
    any horizon bounds the limit from above.
    """
    lhs, p_lhs = _entropy_lhs(rule, measure, n, p, samples, seed)
    h_sigma = analytic_shift_entropy(measure)
    lsum, p_rhs = _lambda_sum(rule, lambda_n)
    params = dict(n=n, p=p, samples=samples, seed=seed, lambda_n=lambda_n, h_sigma=h_sigma,
                  exponent_sum=lsum)
    return _report("cor_5_6", lhs, h_sigma * lsum, tolerance, params, [p_lhs] + p_rhs)


def max_pattern_horizon(rule: Rule, p: int, budget: int | None = None, cap: int = 64) -> int:
    """Largest n whose space-time pattern count is exact within the budget."""
    from .entropy import _free_width
    from .exponents import enum_budget
    budget = budget or enum_budget()
    n = 0
    while n < cap and all(f.k ** _free_width(f, p, n + 1) <= budget for f in (rule.factors or (rule,))):
        n += 1
    return max(n, 1)


def check_topological_inequality(rule: Rule, n: int | None = None, p: int | None = None,
                                 lambda_n: int = 2, tolerance: float = TOPOLOGICAL_TOL,
                                 budget: int | None = None) -> InequalityReport:
    """h_top(F) <= (lambda+ + lambda-) log #A, lhs from exact pattern counts.

    lhs is the last growth step log D(n) - log D(n-1) at the largest exact
    horizon (by default); the full increment sequence sits in params.
    """
    p = rule.radius if p is None else p
    n = max_pattern_horizon(rule, p, budget) if n is None else n
    est = count_spacetime_patterns(rule, p, n, budget=budget)
    rhs = topological_upper_bound(rule, lambda_n)
    incs = est.increments
    params = dict(n=n, p=p, lambda_n=lambda_n, pattern_count=est.pattern_count, ratio=est.ratio,
                  increments=incs, exact=est.params["exact"],
                  decreasing=all(b <= a + 1e-12 for a, b in zip(incs, incs[1:])))
    prov = [dict(op="count_spacetime_patterns", seed=None, method="enumeration" if est.params["exact"]
                 else "sampled_lower_bound", n=n, p=p, value=est.value),
            dict(op="topological_upper_bound", seed=None, method="lambda_mu_upper", n=lambda_n, value=rhs)]
    return _report("prop_5_7", est.value, rhs, tolerance, params, prov)


def check_exponent_inequality(rule: Rule, measure: MeasureSpec, n: int, samples: int, seed: int,
                              lambda_n: int = 2, tolerance: float = METRIC_TOL,
                              workers: int = 1) -> InequalityReport:
    """I+ + I- <= lambda+ + lambda-."""
    isum, p_lhs = _exponent_sum(rule, measure, n, samples, seed, workers)
    lsum, p_rhs = _lambda_sum(rule, lambda_n)
    params = dict(n=n, samples=samples, seed=seed, lambda_n=lambda_n)
    return _report("prop_3_2", isum, lsum, tolerance, params, p_lhs + p_rhs)


# -- two-sided containment ------------------------------------------------------------

def _all_assignments(k: int, m: int) -> np.ndarray:
    idx = np.arange(k ** m, dtype=np.int64)
    return (idx[:, None] // (k ** np.arange(m - 1, -1, -1, dtype=np.int64))) % k


def _containment_trial(rule: Rule, x: Config, p: int, n: int, budget: int):
    """None on success, 'skip' over budget, else a failure summary."""
    k, r = rule.k, rule.radius
    rn = r * n
    s_plus = I_exact(rule, shift_config(x, -p), n, "plus")
    s_minus = I_exact(rule, shift_config(x, p), n, "minus")
    lo, hi = -p - rn, p + rn
    free = [c for c in range(lo, hi + 1) if c < -p - s_plus or c > p + s_minus]
    if k ** len(free) > budget:
        return "skip"
    base = x.segment(lo, hi)
    Y = np.repeat(base[None, :], k ** len(free), axis=0)
    if free:
        Y[:, np.array(free) - lo] = _all_assignments(k, len(free))
    ref = base[None, :]
    for i in range(1, n + 1):
        Y = step_array(rule.table, k, r, Y)
        ref = step_array(rule.table, k, r, ref)
        off = rn - r * i
        seg = Y[:, off:off + 2 * p + 1]
        if np.any(seg != ref[:, off:off + 2 * p + 1]):
            return dict(step=i, s_plus=s_plus, s_minus=s_minus)
    return None


def check_independence_containment(rule: Rule, measure: MeasureSpec, p: int, n: int, trials: int, seed: int,
                                   budget: int = 1 << 16) -> PropertyReport:
    """Agreement on [-p - I+, p + I-] keeps the central (2p+1)-block for n steps (brute force)."""
    if p < rule.radius:
        raise ValueError(f"p={p} must be >= radius {rule.radius}")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rn = rule.radius * n
    rep = PropertyReport("containment", trials, params=dict(p=p, n=n, seed=seed, budget=budget))
    for j in range(trials):
        x = sample_config(measure, -p - 2 * rn, p + 2 * rn, seed, stream=j)
        res = _containment_trial(rule, x, p, n, budget)
        if res == "skip":
            rep.skipped += 1
        elif res is not None:
            rep.failures.append(dict(seed=seed, stream=j, n=n, **res))
    if rep.skipped:
        rep.params["reduced_trials"] = trials - rep.skipped
    return rep


# -- randomized exponent properties --------------------------------------------------

def _n_max(rule: Rule, cap: int = 4, limit: int = 1 << 12) -> int:
    n = 1
    while n < cap and rule.k ** (rule.radius * (n + 1)) <= limit:
        n += 1
    return n


def run_property_suite(rule: Rule, measure: MeasureSpec | None = None, trials: int = 1000, seed: int = 0,
                       n_max: int | None = None, budget: int = 1 << 16) -> list[PropertyReport]:
    """Randomized checks of the exponent invariants plus the containment property.

    Instances draw n uniformly from 1..n_max (default: largest n <= 4 with
    k^(rn) <= 4096) and x from the measure, keyed by (seed, trial).
    """
    measure = measure or default_measure(rule)
    n_max = n_max or _n_max(rule)
    r = rule.radius
    rng = np.random.default_rng(seed)
    ns = rng.integers(1, n_max + 1, size=trials)
    ms = rng.integers(1, n_max + 1, size=trials)
    js = rng.integers(-3, 4, size=trials)
    ids = ("bounds", "lambda_ge_I_minus_1", "subadditivity", "bracket", "shift_invariance")
    reps = {pid: PropertyReport(pid, trials, params=dict(seed=seed, n_max=n_max)) for pid in ids}

    for t in range(trials):
        n, m, j = int(ns[t]), int(ms[t]), int(js[t])
        rn = r * n
        W = 3 * r * (n + m) + 8
        x = sample_config(measure, -W, W, seed, stream=t)
        info = dict(seed=seed, stream=t, n=n)
        for side in ("plus", "minus"):
            lt = lambda_tilde_exact(rule, x, n, side)
            I = I_exact(rule, x, n, side)
            if not (0 <= lt <= rn and 0 <= I <= rn):
                reps["bounds"].failures.append(dict(info, side=side, lt=lt, I=I))
            # perturbations beyond the cut I - 1 do reach the centre, so the depth at that shift is >= I
            if I >= 1:
                z = shift_config(x, (I - 1) if side == "minus" else -(I - 1))
                if lambda_tilde_exact(rule, z, n, side) < I - 1:
                    reps["lambda_ge_I_minus_1"].failures.append(dict(info, side=side, I=I))
            # depth over n + m steps splits at the frontier reached after n steps
            lt_nm = lambda_tilde_exact(rule, x, n + m, side)
            fx = x
            for _ in range(n):
                fx = apply(rule, fx)
            z = shift_config(fx, -lt if side == "minus" else lt)
            bound = lt + lambda_tilde_exact(rule, z, m, side)
            if lt_nm > bound:
                reps["subadditivity"].failures.append(dict(info, side=side, m=m, lhs=lt_nm, rhs=bound))
            try:
                br = lambda_tilde_bounds(rule, x, n, side, sample_budget=32, seed=seed + t)
                if br.exact is not None and br.exact != lt:
                    raise ValueError("bracket exact value disagrees")
            except ValueError as e:
                reps["bracket"].failures.append(dict(info, side=side, error=str(e)))
            # sigma^j x as a shifted window and as a cropped, rebased copy of just the light cone
            zs = shift_config(x, j)
            fresh = Config(np.array(zs.segment(-2 * rn, 2 * rn)), -2 * rn)
            same = (lambda_tilde_exact(rule, zs, n, side) == lambda_tilde_exact(rule, fresh, n, side)
                    and I_exact(rule, zs, n, side) == I_exact(rule, fresh, n, side))
            if side == "minus":
                same &= apply(rule, zs) == shift_config(apply(rule, x), j)
            if not same:
                reps["shift_invariance"].failures.append(dict(info, side=side, j=j))

    p = max(r, 1)
    cont = check_independence_containment(rule, measure, p, n_max, trials, seed, budget)
    if cont.skipped:
        # fall back to the shortest horizon for instances over the enumeration budget
        cont = check_independence_containment(rule, measure, p, 1, trials, seed, budget)
    return list(reps.values()) + [cont]


# -- bounded/growing diagnostic --------------------------------------------------------------

def diagnose_dichotomy(rule: Rule, measure: MeasureSpec | None, n_list, samples: int, seed: int,
                       max_word_len: int | None = None, slope_tol: float = 0.1) -> dict:
    """Is I+(sigma^-p x) + I-(sigma^p x) bounded in n on typical points?  Advisory only."""
    measure = measure or default_measure(rule)
    n_list = sorted(n_list)
    if len(n_list) < 2:
        raise ValueError("need at least two horizons")
    p = rule.radius
    means = []
    for n in n_list:
        rn = rule.radius * n
        tot = 0
        for j in range(samples):
            x = sample_config(measure, -p - 2 * rn, p + 2 * rn, seed, stream=j)
            tot += I_exact(rule, shift_config(x, -p), n, "plus") + I_exact(rule, shift_config(x, p), n, "minus")
        means.append(tot / samples)
    slope = float(np.polyfit(np.array(n_list, dtype=float), np.array(means), 1)[0])
    trend = "bounded" if slope <= slope_tol else "growing"
    if max_word_len is None:
        max_word_len = max(rule.radius, 1) + 1
        while rule.k ** (max_word_len + 1) <= 64:
            max_word_len += 1
    cert = has_equicontinuous_points(rule, max_word_len)
    if cert is not None:
        consistency = "consistent" if trend == "bounded" else "inconsistent"
    else:
        consistency = "consistent" if trend == "growing" else "undetermined"
    return dict(n_list=n_list, mean_sum=means, slope=slope, trend=trend, samples=samples, seed=seed,
                certificate=None if cert is None else cert.to_json(), max_word_len=max_word_len,
                consistency=consistency)


# -- worked examples ---------------------------------------------------------------------

EXAMPLES = {"coven": "coven:10", "product": "product:shift,f2:2"}


def _row(rows, quantity, computed, expected, ok, note=""):
    rows.append(dict(quantity=quantity, computed=computed, expected=expected, passed=bool(ok), note=note))


def reproduce_example(example_id: str, seed: int = 2024, samples: int = 10_000, entropy_samples: int = 100_000,
                      workers: int = 1) -> dict:
    """Run the pinned pipeline for one worked example and compare with the published values."""
    if example_id not in EXAMPLES:
        raise ValueError(f"unknown example {example_id!r}; choose from {sorted(EXAMPLES)}")
    rule = builtin_rule(EXAMPLES[example_id])
    mu = default_measure(rule)
    rows: list[dict] = []
    reports: list[dict] = []
    log2, log3, log6 = math.log(2), math.log(3), math.log(6)
    h_sigma = analytic_shift_entropy(mu)
    ns = (8, 16, 32)

    if example_id == "coven":
        for n in (1, 2, 3):
            v = lambda_mu_exact(rule, mu, n, "minus")
            _row(rows, f"lambda_minus(n={n})", float(v), 2.0, v == 2)
        v = lambda_mu_exact(rule, mu, 3, "plus")
        _row(rows, "lambda_plus(n=3)", float(v), 0.0, v == 0)
        cert = certify_blocking(rule, Word.parse("000"))
        _row(rows, "blocking(000)", cert.status, "certified",
             cert.status == "certified" and cert.period is not None,
             f"preperiod={cert.preperiod} period={cert.period} method={cert.method}")
        _row(rows, "surjective", decide_surjective(rule), True, decide_surjective(rule))
        for side in ("minus", "plus"):
            vals = [I_mu_estimate(rule, mu, n, samples, seed, side, workers).value for n in ns]
            ok = vals[-1] <= 0.2 and all(b <= a for a, b in zip(vals, vals[1:]))
            _row(rows, f"I_{side}(n=8,16,32)", vals, "<= 0.2, non-increasing", ok)
        _row(rows, "h_sigma", h_sigma, log2, h_sigma == log2)
        es = empirical_shift_entropy(mu, 8, entropy_samples, seed).value
        _row(rows, "h_sigma_empirical(block=8)", es, log2, abs(es - log2) <= SHIFT_REL_TOL * log2)
        hf = empirical_automaton_entropy(rule, mu, 2, 10, entropy_samples, seed).value
        _row(rows, "h_F(p=2,n=10)", hf, 0.0, hf <= METRIC_TOL)
        r55 = check_average_inequality(rule, mu, 10, 2, entropy_samples, seed, samples, workers=workers)
        r56 = check_max_inequality(rule, mu, 10, 2, entropy_samples, seed)
        r57 = check_topological_inequality(rule)
        _row(rows, "thm_5_5", r55.verdict, "holds", r55.verdict != "violated")
        _row(rows, "cor_5_6 margin", r56.margin, 2 * log2,
             r56.verdict != "violated" and abs(r56.margin - 2 * log2) <= METRIC_TOL)
        _row(rows, "prop_5_7 rhs", r57.rhs, 2 * log2, abs(r57.rhs - 2 * log2) < 1e-12)
        _row(rows, "prop_5_7 lhs", r57.lhs, "<= rhs + 0.2, decreasing",
             r57.lhs <= r57.rhs + TOPOLOGICAL_TOL and r57.params["decreasing"])
    else:
        f2 = rule.factors[1]
        _row(rows, "surjective(f2)", decide_surjective(f2), True, decide_surjective(f2))
        _row(rows, "surjective(F)", decide_surjective(rule), True, decide_surjective(rule))
        vals = [I_mu_estimate(rule, mu, n, samples, seed, "minus", workers).value for n in ns]
        _row(rows, "I_minus(n=32)", vals[-1], 1.0, 0.85 <= vals[-1] <= 1.10, f"n=8,16,32: {vals}")
        vp = I_mu_estimate(rule, mu, 32, samples, seed, "plus", workers).value
        _row(rows, "I_plus(n=32)", vp, 0.0, vp == 0)
        small = builtin_rule("product:shift,f2:1")
        for n in (1, 2):
            v = lambda_mu_exact(small, None, n, "minus")
            _row(rows, f"lambda_minus(r=1,n={n})", float(v), 1.0, v == 1)
        v = lambda_mu_exact(rule, None, 2, "minus")
        _row(rows, "lambda_minus(r=2,n=2)", float(v), 2.0, v == 2)
        found, complete = search_blocking_words(rule, 2)
        _row(rows, "blocking words (len<=2)", len(found), 0, not found and complete)
        _row(rows, "h_sigma", h_sigma, log6, abs(h_sigma - log6) < 1e-12)
        es = empirical_shift_entropy(mu, 6, entropy_samples, seed).value
        _row(rows, "h_sigma_empirical(block=6)", es, log6, abs(es - log6) <= SHIFT_REL_TOL * log6)
        hf = empirical_automaton_entropy(rule, mu, 2, 10, entropy_samples, seed).value
        _row(rows, "h_F(p=2,n=10)", hf, log2, abs(hf - log2) <= 0.15 * log2)
        r55 = check_average_inequality(rule, mu, 10, 2, entropy_samples, seed, samples, workers=workers)
        r56 = check_max_inequality(rule, mu, 10, 2, entropy_samples, seed)
        r57 = check_topological_inequality(rule)
        _row(rows, "thm_5_5 margin", r55.margin, log3,
             r55.verdict != "violated" and abs(r55.margin - log3) <= METRIC_TOL)
        _row(rows, "cor_5_6", r56.verdict, "holds", r56.verdict != "violated")
        _row(rows, "prop_5_7 gap", r57.margin, "> 0 (strict)", r57.margin > 0)
    reports = [r55.to_json(), r56.to_json(), r57.to_json()]
    return dict(example=example_id, rule=EXAMPLES[example_id], seed=seed, samples=samples,
                entropy_samples=entropy_samples, rows=rows, reports=reports,
                passed=all(r["passed"] for r in rows))
