"""Pointwise propagation quantities and their averages.

Every computation is reduced to the minus side: the plus side of (F, x) is the
minus side of the mirrored rule acting on the mirrored configuration.  On the
minus side everything is phrased through one primitive, the leftmost
coordinate <= 0 that some perturbation of x to the right of a cut s can change
within n steps.  That primitive has two exact implementations: explicit
enumeration of the perturbations (small cases, and the reference for tests)
and the reachable-set construction in :mod:`propagation`.
"""

from __future__ import annotations

import itertools
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from fractions import Fraction

import numpy as np

from .ca_core import Config, MeasureSpec, Rule, WindowError, sample_config, split_symbols, step_array
from .propagation import BudgetExceeded, reach, reference_rows
from .set_dynamics import blocking_table, default_budget, mask_step

SIDES = ("plus", "minus")
# above this many perturbations the symbolic engine is used by default
FAST_ENUM = 1 << 12
WORD_BUDGET = 1 << 24


def enum_budget() -> int:
    env = os.environ.get("CA_LYAPUNOV_BUDGET")
    return int(env) if env else 1 << 22


class ExponentBudgetError(RuntimeError):
    pass


@dataclass
class ExponentBracket:
    n: int
    lower: int
    upper: int
    exact: int | None = None
    methods: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (0 <= self.lower <= self.upper):
            raise ValueError("inconsistent bracket")
        if self.exact is not None and not (self.lower <= self.exact <= self.upper):
            raise ValueError("exact value outside bracket")


@dataclass
class ExponentEstimate:
    n: int
    value: float
    stderr: float
    samples: int
    seed: int
    kind: str
    method: str = ""
    flags: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return asdict(self)


# -- orientation -----------------------------------------------------------------

def _check_side(side: str):
    if side not in SIDES:
        raise ValueError(f"side must be one of {SIDES}")


def _orient(rule: Rule, x: Config, side: str):
    _check_side(side)
    if side == "minus":
        return rule, x
    return rule.mirrored(), x.mirrored()


def _blind_to_right(rule: Rule) -> bool:
    """True when outputs ignore the r right inputs (nothing travels leftwards)."""
    return rule.mirrored().one_sided


def _factor_views(rule: Rule, x: Config):
    """Per-track (rule, config) pairs for product rules, else the pair itself."""
    if not rule.factors:
        return [(rule, x)]
    parts = split_symbols(rule, x.cells)
    return [(f, Config(p, x.origin, x.valid_lo, x.valid_hi)) for f, p in zip(rule.factors, parts)]


def _window(rule: Rule, x: Config, n: int):
    rn = rule.radius * n
    x.require(-2 * rn, 2 * rn, f"horizon n={n}")
    return x.segment(-2 * rn, 2 * rn)


# -- the two exact engines for the minus-side primitive ---------------------------

def _enum_leftmost(rule: Rule, cells: np.ndarray, n: int, s: int, bound: int = 0,
                   budget: int | None = None):
    """Leftmost coordinate <= bound changed by some perturbation right of s (enumeration).

    ``cells`` covers [-2rn, 2rn].  Returns None when nothing is changed.
    """
    k, r = rule.k, rule.radius
    rn = r * n
    m = rn - s
    if m <= 0:
        return None
    budget = budget or enum_budget()
    if k ** m > budget:
        raise ExponentBudgetError(f"{k}^{m} perturbations exceed the enumeration budget {budget}")
    lo = -2 * rn
    base = cells[: rn - lo + 1]  # [-2rn, rn]
    Y = np.repeat(base[None, :], k ** m, axis=0)
    Y[:, s + 1 - lo:] = np.array(list(itertools.product(range(k), repeat=m)), dtype=np.int64)
    best = None
    for i in range(1, n + 1):
        Y = step_array(rule.table, k, r, Y)
        first = lo + r * i
        hi = min(bound, rn - r * i)
        if hi < first:
            continue
        seg = Y[:, : hi - first + 1]
        diff = np.nonzero((seg != seg[0]).any(axis=0))[0]
        if diff.size:
            d = first + int(diff[0])
            best = d if best is None else min(best, d)
            bound = best - 1
    return best


def _witness_lower(rule: Rule, cells: np.ndarray, n: int, draws: int = 8, seed: int = 0,
                   cuts_below: int | None = None) -> int:
    """Largest s + 1 for which a random perturbation right of s reaches <= 0; a lower bound on I."""
    k, r = rule.k, rule.radius
    rn = r * n
    ncut = rn if cuts_below is None else min(rn, cuts_below)
    if ncut <= 0:
        return 0
    lo = -2 * rn
    base = cells[: rn - lo + 1]
    rng = np.random.default_rng(seed)
    cuts = np.repeat(np.arange(ncut), draws)
    Y = np.repeat(base[None, :], cuts.size, axis=0)
    noise = rng.integers(0, k, size=(cuts.size, rn), dtype=np.int64)
    cols = np.arange(1, rn + 1)
    mask = cols[None, :] > cuts[:, None]
    Y[:, 1 - lo:] = np.where(mask, noise, Y[:, 1 - lo:])
    ref = base[None, :]
    hit = np.zeros(cuts.size, dtype=bool)
    for i in range(1, n + 1):
        Y = step_array(rule.table, k, r, Y)
        ref = step_array(rule.table, k, r, ref)
        width = 0 - (lo + r * i) + 1
        hit |= (Y[:, :width] != ref[:, :width]).any(axis=1)
    return int(cuts[hit].max()) + 1 if hit.any() else 0


def _cell_blocked(rule: Rule, cells: np.ndarray, n: int, s: int) -> bool:
    """Per-cell over-approximation: True proves no perturbation right of s reaches <= 0."""
    k, r = rule.k, rule.radius
    rn = r * n
    lo = -2 * rn
    M = np.left_shift(1, cells[: rn - lo + 1]).astype(np.int64)
    M[s + 1 - lo:] = (1 << k) - 1
    for i in range(1, n + 1):
        M = mask_step(rule, M)
        seg = M[: 0 - (lo + r * i) + 1]
        if np.any(seg & (seg - 1)):
            return False
    return True


def _cell_leftmost(rule: Rule, cells: np.ndarray, n: int) -> int | None:
    """Leftmost possibly-changed coordinate <= 0 for perturbations right of 0 (over-approximate)."""
    k, r = rule.k, rule.radius
    rn = r * n
    lo = -2 * rn
    M = np.left_shift(1, cells[: rn - lo + 1]).astype(np.int64)
    M[1 - lo:] = (1 << k) - 1
    best = None
    for i in range(1, n + 1):
        M = mask_step(rule, M)
        seg = M[: 0 - (lo + r * i) + 1]
        idx = np.nonzero(seg & (seg - 1))[0]
        if idx.size:
            d = lo + r * i + int(idx[0])
            best = d if best is None else min(best, d)
    return best


def _blocking_upper(rule: Rule, cells: np.ndarray, n: int) -> int:
    """Smallest cut s whose left side already holds a blocking word covering 0."""
    rn = rule.radius * n
    blockers = blocking_table(rule)
    if not blockers:
        return rn
    lo = -2 * rn
    maxlen = max(map(len, blockers))
    seg = cells[-maxlen + 1 - lo: rn - lo + 1].tolist()
    best = rn
    for q in range(len(seg)):
        p = q - maxlen + 1
        if max(0, p) >= best:
            break
        for L in range(1, min(maxlen, len(seg) - q) + 1):
            c1 = blockers.get(tuple(seg[q:q + L]))
            if c1 is not None and p + c1 >= 0:
                best = min(best, max(0, p + L - 1))
    return best


def _choose(rule: Rule, n: int, method: str) -> str:
    if method not in ("auto", "enumerate", "symbolic"):
        raise ValueError(f"unknown method {method!r}")
    if method != "auto":
        return method
    return "enumerate" if rule.k ** (rule.radius * n) <= FAST_ENUM else "symbolic"


def _leftmost(rule, cells, n, s, method, budget, rows=None, first_only=True):
    if method == "enumerate":
        return _enum_leftmost(rule, cells, n, s, budget=budget)
    rn = rule.radius * n
    if rows is None:
        rows = reference_rows(rule.table, rule.k, rule.radius, cells, -2 * rn, n)
    try:
        return reach(rule, rows, n, s, first_only=first_only, budget=budget or default_budget(),
                     blockers=blocking_table(rule))
    except BudgetExceeded as e:
        raise ExponentBudgetError(str(e)) from None


# -- pointwise quantities ------------------------------------------------------------

def _lt_minus(rule: Rule, x: Config, n: int, method: str, budget) -> int:
    if n == 0 or _blind_to_right(rule):
        return 0
    cells = _window(rule, x, n)
    d = _leftmost(rule, cells, n, 0, _choose(rule, n, method), budget, first_only=False)
    return 0 if d is None else 1 - d


def lambda_tilde_exact(rule: Rule, x: Config, n: int, side: str, method: str = "auto",
                       budget: int | None = None) -> int:
    """Exact one-sided propagation depth of perturbations over n steps."""
    rule_o, x_o = _orient(rule, x, side)
    return max(_lt_minus(f, c, n, method, budget) for f, c in _factor_views(rule_o, x_o))


def _I_minus(rule: Rule, x: Config, n: int, method: str, search: str, budget) -> int:
    if n == 0 or _blind_to_right(rule):
        return 0
    rn = rule.radius * n
    cells = _window(rule, x, n)
    method = _choose(rule, n, method)
    rows = None if method == "enumerate" else reference_rows(rule.table, rule.k, rule.radius,
                                                             cells, -2 * rn, n)

    def holds(s):
        return _leftmost(rule, cells, n, s, method, budget, rows) is None

    if search == "linear":
        for s in range(rn + 1):
            if holds(s):
                return s
        return rn
    if search == "binary":
        lo, hi = 0, rn  # holds(rn) is always true
        while lo < hi:
            mid = (lo + hi) // 2
            if holds(mid):
                hi = mid
            else:
                lo = mid + 1
        return lo
    if search != "auto":
        raise ValueError(f"unknown search {search!r}")
    upper = _blocking_upper(rule, cells, n)
    s = _witness_lower(rule, cells, n, cuts_below=upper)
    while s < upper:
        if _cell_blocked(rule, cells, n, s) or holds(s):
            return s
        s += 1
    return upper


def I_exact(rule: Rule, x: Config, n: int, side: str, method: str = "auto", search: str = "auto",
            budget: int | None = None) -> int:
    """Smallest agreement radius that keeps coordinate 0 (and beyond) unchanged for n steps.

    ``search`` is ``binary`` (monotone predicate), ``linear`` (reference scan)
    or ``auto`` (start from a sampled lower bound, certify upwards).
    """
    rule_o, x_o = _orient(rule, x, side)
    return max(_I_minus(f, c, n, method, search, budget) for f, c in _factor_views(rule_o, x_o))


def lambda_tilde_bounds(rule: Rule, x: Config, n: int, side: str, sample_budget: int = 256,
                        seed: int = 0, exact: bool = True) -> ExponentBracket:
    """Sampled lower bound, set-valued upper bound and (budget permitting) the exact value."""
    rule_o, x_o = _orient(rule, x, side)
    lower = upper = 0
    ex = 0 if exact else None
    for f, c in _factor_views(rule_o, x_o):
        lo_f, up_f = _bounds_minus(f, c, n, sample_budget, seed)
        lower, upper = max(lower, lo_f), max(upper, up_f)
        if exact:
            if f.k ** (f.radius * n) <= enum_budget():
                ex = max(ex, _lt_minus(f, c, n, "auto", None))
            else:
                ex = None
                exact = False
    methods = {"lower": "sampling", "upper": "set_valued" if upper < rule.radius * n else "trivial_rn"}
    if ex is not None:
        methods["exact"] = "enumeration"
    return ExponentBracket(n, lower, upper, ex, methods)


def _bounds_minus(rule: Rule, x: Config, n: int, draws: int, seed: int):
    rn = rule.radius * n
    if n == 0 or _blind_to_right(rule):
        return 0, 0
    k, r = rule.k, rule.radius
    cells = _window(rule, x, n)
    lo = -2 * rn
    base = cells[: rn - lo + 1]
    rng = np.random.default_rng(seed)
    Y = np.repeat(base[None, :], draws, axis=0)
    Y[:, 1 - lo:] = rng.integers(0, k, size=(draws, rn))
    ref = base[None, :]
    best = None
    for i in range(1, n + 1):
        Y = step_array(rule.table, k, r, Y)
        ref = step_array(rule.table, k, r, ref)
        seg = (Y[:, : 0 - (lo + r * i) + 1] != ref[:, : 0 - (lo + r * i) + 1]).any(axis=0)
        idx = np.nonzero(seg)[0]
        if idx.size:
            d = lo + r * i + int(idx[0])
            best = d if best is None else min(best, d)
    lower = 0 if best is None else 1 - best
    d_up = _cell_leftmost(rule, cells, n)
    upper = 0 if d_up is None else min(rn, 1 - d_up)
    return lower, upper


def admissible_shifts(rule: Rule, x: Config, n: int) -> range:
    rn = rule.radius * n
    return range(x.valid_lo + 2 * rn, x.valid_hi - 2 * rn + 1)


def capital_lambda(rule: Rule, x: Config, n: int, side: str, method: str = "auto"):
    """Max of the pointwise depth over all shifts the window admits.

    Returns (value, number of shifts covered).  A finite window only sees
    finitely many shifts, so the value is a lower bound for the supremum.
    """
    _check_side(side)
    shifts = admissible_shifts(rule, x, n)
    if len(shifts) == 0:
        raise WindowError(f"window too narrow for any shift at n={n}")
    best = 0
    views = _factor_views(*_orient(rule, x, side))
    for f, c in views:
        if _blind_to_right(f) or n == 0:
            continue
        rn = f.radius * n
        L = 2 * rn
        # the minus-side depth only reads coordinates [-2rn+1, 0]
        if f.k ** (rn) <= FAST_ENUM or method == "enumerate":
            shifts_o = admissible_shifts(f, c, n)
            words = np.stack([c.segment(i - L + 1, i) for i in shifts_o])
            best = max(best, int(_depth_of_words(f, words, n).max()))
        else:
            for i in admissible_shifts(f, c, n):
                sc = Config(c.cells, c.origin - i, c.valid_lo - i, c.valid_hi - i)
                best = max(best, _lt_minus(f, sc, n, method, None))
    return best, len(shifts)


# -- word-level depth (all configurations sharing a left context) -------------------

def _depth_of_words(rule: Rule, words: np.ndarray, n: int, chunk_rows: int = 1 << 21) -> np.ndarray:
    """Minus-side depth for every word on [-(L-1), 0], L = 2rn + r, perturbing [1, rn]."""
    k, r = rule.k, rule.radius
    rn = r * n
    W, L = words.shape
    if n == 0 or _blind_to_right(rule):
        return np.zeros(W, dtype=np.int64)
    P = k ** rn
    perts = np.array(list(itertools.product(range(k), repeat=rn)), dtype=np.int64).reshape(P, rn)
    out = np.zeros(W, dtype=np.int64)
    per = max(1, chunk_rows // P)
    lo = -(L - 1)
    for a in range(0, W, per):
        wb = words[a:a + per]
        m = len(wb)
        Y = np.concatenate([np.repeat(wb, P, axis=0), np.tile(perts, (m, 1))], axis=1)
        best = np.full(m, 1, dtype=np.int64)  # leftmost changed coordinate, 1 = none
        for i in range(1, n + 1):
            Y = step_array(rule.table, k, r, Y)
            first = lo + r * i
            width = 0 - first + 1
            seg = Y[:, :width].reshape(m, P, width)
            changed = (seg != seg[:, :1, :]).any(axis=1)
            has = changed.any(axis=1)
            idx = np.where(has, changed.argmax(axis=1) + first, 1)
            best = np.minimum(best, idx)
        out[a:a + m] = 1 - best
    return out


def lambda_mu_exact(rule: Rule, measure: MeasureSpec | None, n: int, side: str,
                    budget: int | None = None) -> Fraction:
    """Maximum of the depth over all words of length 2rn + r, divided by n.

    Minus-side words end at coordinate 0; plus-side words start at 0 (mirror).
    Requires a full-support measure, so the maximum runs over every word.
    """
    _check_side(side)
    if measure is not None and measure.alphabet_size != rule.k:
        raise ValueError("measure alphabet does not match the rule")
    if n <= 0:
        raise ValueError("n must be positive")
    rule_o = rule if side == "minus" else rule.mirrored()
    best = 0
    for f in (rule_o.factors or (rule_o,)):
        if _blind_to_right(f):
            continue
        rn = f.radius * n
        L = 2 * rn + f.radius
        budget_w = budget or int(os.environ.get("CA_LYAPUNOV_BUDGET", WORD_BUDGET))
        if f.k ** L > budget_w or f.k ** rn > enum_budget():
            raise ExponentBudgetError(f"{f.k}^{L} words exceed the word budget; use lambda_mu_sampled")
        words = np.array(list(itertools.product(range(f.k), repeat=L)), dtype=np.int64).reshape(-1, L)
        best = max(best, int(_depth_of_words(f, words, n).max()))
    return Fraction(best, n)


def lambda_mu_upper(rule: Rule, n: int, side: str) -> tuple[Fraction, str]:
    """Exact value when the word budget allows, else the a-priori bound r."""
    try:
        return lambda_mu_exact(rule, None, n, side), "enumeration"
    except ExponentBudgetError:
        rule_o = rule if side == "minus" else rule.mirrored()
        if all(_blind_to_right(f) for f in (rule_o.factors or (rule_o,))):
            return Fraction(0), "one_sided"
        return Fraction(rule.radius), "trivial_rn"


# -- Monte-Carlo averages ----------------------------------------------------------------

def _sample_window(rule: Rule, measure: MeasureSpec, n: int, seed: int, j: int, extra: int = 0) -> Config:
    rn = rule.radius * n
    return sample_config(measure, -2 * rn - extra, 2 * rn + extra, seed, stream=j)


def _I_task(args):
    rule, measure, n, seed, side, lo, hi = args
    return [I_exact(rule, _sample_window(rule, measure, n, seed, j), n, side) for j in range(lo, hi)]


def _lam_task(args):
    rule, measure, n, seed, side, lo, hi, extra = args
    return [capital_lambda(rule, _sample_window(rule, measure, n, seed, j, extra), n, side)[0]
            for j in range(lo, hi)]


def _run_chunks(fn, make_args, samples: int, workers: int):
    """Evaluate per-sample integers in index order; the worker count never changes the result."""
    chunk = max(1, min(256, math.ceil(samples / max(1, workers) / 4)))
    spans = [(a, min(samples, a + chunk)) for a in range(0, samples, chunk)]
    if workers <= 1 or len(spans) == 1:
        parts = [fn(make_args(a, b)) for a, b in spans]
    else:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(fn, [make_args(a, b) for a, b in spans]))
    return [v for part in parts for v in part]


def _mean_stderr(values, n: int):
    arr = np.asarray(values, dtype=np.int64)
    total = int(arr.sum())
    mean = total / (n * arr.size)
    if arr.size > 1:
        # integer-exact sums keep the reduction independent of ordering
        sq = int((arr * arr).sum())
        var = (sq - total * total / arr.size) / (arr.size - 1) / (n * n)
        stderr = math.sqrt(max(var, 0.0) / arr.size)
    else:
        stderr = 0.0
    return mean, stderr


def I_mu_estimate(rule: Rule, measure: MeasureSpec, n: int, samples: int, seed: int, side: str,
                  workers: int = 1) -> ExponentEstimate:
    """Monte-Carlo mean of the exact pointwise value divided by n."""
    _check_side(side)
    if samples <= 0:
        raise ValueError("samples must be positive")
    if measure.alphabet_size != rule.k:
        raise ValueError("measure alphabet does not match the rule")
    vals = _run_chunks(_I_task, lambda a, b: (rule, measure, n, seed, side, a, b), samples, workers)
    mean, se = _mean_stderr(vals, n)
    return ExponentEstimate(n, mean, se, samples, seed, f"I_{side}", "exact_per_sample")


def lambda_mu_sampled(rule: Rule, measure: MeasureSpec, n: int, samples: int, seed: int, side: str,
                      workers: int = 1, extra: int | None = None) -> ExponentEstimate:
    """Max over sampled windows of the shift-maximised depth, divided by n (a lower bound)."""
    _check_side(side)
    if samples <= 0:
        raise ValueError("samples must be positive")
    extra = 2 * rule.radius * n if extra is None else extra
    vals = _run_chunks(_lam_task, lambda a, b: (rule, measure, n, seed, side, a, b, extra), samples, workers)
    best = max(vals)
    return ExponentEstimate(n, best / n, 0.0, samples, seed, f"lambda_{side}", "sampled_max",
                            {"lower_bound": True})


def exponent_sequence(rule: Rule, measure: MeasureSpec, n_list, estimator: str = "I", side: str = "minus",
                      samples: int = 1000, seed: int = 0, workers: int = 1) -> list[dict]:
    """Per-n rows for inspecting trends; flags non-monotone sequences."""
    n_list = list(n_list)
    if not n_list or n_list != sorted(n_list):
        raise ValueError("n_list must be non-empty and ascending")
    rows = []
    for n in n_list:
        if estimator == "I":
            e = I_mu_estimate(rule, measure, n, samples, seed, side, workers)
            rows.append(dict(n=n, method="exact_per_sample", lower=None, exact=None, upper=None,
                             value=e.value, stderr=e.stderr, samples=samples, seed=seed))
        elif estimator == "lambda_sampled":
            e = lambda_mu_sampled(rule, measure, n, samples, seed, side, workers)
            rows.append(dict(n=n, method="sampled_max", lower=None, exact=None, upper=None,
                             value=e.value, stderr=0.0, samples=samples, seed=seed))
        elif estimator == "lambda_exact":
            v = lambda_mu_exact(rule, measure, n, side)
            rows.append(dict(n=n, method="enumeration", lower=None, exact=None, upper=None,
                             value=float(v), stderr=0.0, samples=0, seed=seed))
        else:
            raise ValueError(f"unknown estimator {estimator!r}")
    vals = [r["value"] for r in rows]
    inc = any(b > a + 1e-12 for a, b in zip(vals, vals[1:]))
    dec = any(b < a - 1e-12 for a, b in zip(vals, vals[1:]))
    for r in rows:
        r["non_monotone"] = bool(inc and dec)
    return rows
