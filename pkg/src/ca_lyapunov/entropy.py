"""Entropy of the shift and of the automaton: analytic, sampled and counted.

Natural logarithms throughout.  Automaton entropies are read off the
space-time patterns of the central (2p+1)-block over n + 1 rows.  Both the
sampled and the counted estimators return the growth of the log-count (or of
the plug-in entropy) over the last step they can trust, which converges much
faster than the ratio to n; the ratio is reported alongside.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from .ca_core import MeasureSpec, Rule, sample_cells, step_array
from .exponents import enum_budget, lambda_mu_upper

KINDS = ("shift_analytic", "shift_empirical", "automaton_empirical", "topological_rate")


@dataclass
class EntropyEstimate:
    kind: str
    value: float
    params: dict
    pattern_count: int | None = None
    ratio: float | None = None
    increments: list[float] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown entropy kind {self.kind!r}")
        if self.value < 0:
            # plug-in differences can dip a hair below zero
            if self.value < -1e-9:
                raise ValueError("entropy must be non-negative")
            self.value = 0.0

    def to_json(self) -> dict:
        return asdict(self)


def _plugin(counts: np.ndarray) -> float:
    p = counts / counts.sum()
    return float(-(p * np.log(p)).sum())


def analytic_shift_entropy(measure: MeasureSpec) -> float:
    """Entropy rate of the product Bernoulli measure under the shift."""
    return float(sum(-sum(w * math.log(w) for w in t) for t in measure.tracks))


def empirical_shift_entropy(measure: MeasureSpec, block_len: int, samples: int, seed: int) -> EntropyEstimate:
    """Plug-in block entropy divided by the block length.

    Tracks of a product measure are independent, so each track's block
    distribution is estimated on its own and the rates are summed.
    """
    if block_len < 1:
        raise ValueError("block_len must be >= 1")
    if samples < 1:
        raise ValueError("samples must be positive")
    notes = []
    h = 0.0
    distinct = 1
    for j, t in enumerate(measure.tracks):
        k = len(t)
        if samples < 10 * k ** block_len:
            notes.append(f"undersampled: {samples} samples for {k ** block_len} possible blocks")
        # disjoint blocks of one long sample are independent under a product measure
        cells = sample_cells(MeasureSpec((t,)), 0, samples * block_len - 1, seed, stream=j)
        codes = cells.reshape(samples, block_len) @ (k ** np.arange(block_len - 1, -1, -1, dtype=np.int64))
        _, counts = np.unique(codes, return_counts=True)
        h += _plugin(counts) / block_len
        distinct *= int(counts.size)
    return EntropyEstimate("shift_empirical", h,
                           dict(block_len=block_len, samples=samples, seed=seed,
                                factorised=len(measure.tracks) > 1),
                           pattern_count=distinct, warnings=notes)


# -- space-time patterns ---------------------------------------------------------------

def _reach(rule: Rule) -> tuple[int, int]:
    """Which sides of the neighbourhood the rule actually reads (left, right)."""
    r = rule.radius
    left = 0 if rule.one_sided else r
    right = 0 if rule.mirrored().one_sided else r
    return left, right


def _pattern_codes(rule: Rule, X: np.ndarray, p: int, n: int):
    """Per-row pattern ids for heights 1..n+1; X covers [-p - rn, p + rn]."""
    k, r = rule.k, rule.radius
    w = 2 * p + 1
    small = k ** w <= 1 << 20
    pw = k ** np.arange(w - 1, -1, -1, dtype=np.int64)
    code = np.zeros(X.shape[0], dtype=np.int64)
    cur = X
    for t in range(n + 1):
        o = r * (n - t)
        if small:
            blk, base = cur[:, o:o + w] @ pw, k ** w
        else:
            blk = np.unique(cur[:, o:o + w], axis=0, return_inverse=True)[1].reshape(-1)
            base = int(blk.max()) + 1
        _, inv, counts = np.unique(code * base + blk, return_inverse=True, return_counts=True)
        code = inv.reshape(-1)
        yield t, counts
        if t < n:
            cur = step_array(rule.table, k, r, cur)


def _pad(rule: Rule, free: np.ndarray, p: int, n: int) -> np.ndarray:
    """Embed free cells into the full window, zero-filling coordinates the rule never reads."""
    r = rule.radius
    left, right = _reach(rule)
    rn = r * n
    X = np.zeros((free.shape[0], 2 * p + 1 + 2 * rn), dtype=np.int64)
    a = rn - (left * n)
    X[:, a:a + free.shape[1]] = free
    return X


def _free_width(rule: Rule, p: int, n: int) -> int:
    left, right = _reach(rule)
    return 2 * p + 1 + (left + right) * n


def _automaton_one(rule: Rule, measure: MeasureSpec, p: int, n: int, samples: int, seed: int,
                   stream: int):
    W = _free_width(rule, p, n)
    free = sample_cells(measure, 0, samples * W - 1, seed, stream=stream).reshape(samples, W)
    X = _pad(rule, free, p, n)
    H, distinct = [], []
    for t, counts in _pattern_codes(rule, X, p, n):
        H.append(_plugin(counts))
        distinct.append(int(counts.size))
    return H, distinct


def _track_measures(rule: Rule, measure: MeasureSpec):
    """Factor rules with their own measures when both split the same way."""
    if rule.factors and len(measure.tracks) == len(rule.factors) and \
            all(f.k == len(t) for f, t in zip(rule.factors, measure.tracks)):
        return [(f, MeasureSpec((t,))) for f, t in zip(rule.factors, measure.tracks)]
    return [(rule, measure)]


def empirical_automaton_entropy(rule: Rule, measure: MeasureSpec, p: int, n: int, samples: int,
                                seed: int) -> EntropyEstimate:
    """Sampled entropy of the automaton relative to the central (2p+1)-cylinders.

    H(t, p) is the plug-in entropy of the height-(t+1) pattern distribution.
    ``value`` is the increment H(t, p) - H(t-1, p) at the largest t <= n whose
    distinct-pattern count stays within samples / 10; ``ratio`` is H(n, p) / n.
    Product rules under a matching product measure are estimated factor by
    factor and summed, since the pattern distribution factorises exactly.
    """
    if p < rule.radius:
        raise ValueError(f"p={p} must be >= radius {rule.radius}")
    if n < 1 or samples < 1:
        raise ValueError("n and samples must be positive")
    if measure.alphabet_size != rule.k:
        raise ValueError("measure alphabet does not match the rule")
    parts = _track_measures(rule, measure)
    value = ratio = 0.0
    incs = np.zeros(n)
    notes, horizons, distinct_total = [], [], 0
    for j, (f, m) in enumerate(parts):
        H, distinct = _automaton_one(f, m, p, n, samples, seed, stream=1 + j)
        good = [t for t in range(1, n + 1) if distinct[t] <= samples / 10]
        t_star = good[-1] if good else 1
        if distinct[n] > samples / 10:
            notes.append(f"undersampled{'' if len(parts) == 1 else f' on track {j}'}: "
                         f"{distinct[n]} distinct patterns at n={n} for {samples} samples; "
                         f"increment taken at t={t_star}")
        value += H[t_star] - H[t_star - 1]
        ratio += H[n] / n
        incs += np.diff(H)
        horizons.append(t_star)
        distinct_total = distinct[n] if j == 0 else distinct_total * distinct[n]
    for msg in notes:
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
    params = dict(p=p, n=n, samples=samples, seed=seed, horizon=horizons,
                  factorised=len(parts) > 1, estimator="increment")
    return EntropyEstimate("automaton_empirical", value, params, pattern_count=int(distinct_total),
                           ratio=ratio, increments=[float(v) for v in incs], warnings=notes)


def _all_words(k: int, L: int) -> np.ndarray:
    idx = np.arange(k ** L, dtype=np.int64)
    return (idx[:, None] // (k ** np.arange(L - 1, -1, -1, dtype=np.int64))) % k


def _count_one(rule: Rule, p: int, n: int, budget: int, samples: int, seed: int):
    """Distinct-pattern counts for heights 1..n+1, exact when the word budget allows."""
    k = rule.k
    W = _free_width(rule, p, n)
    if k ** W <= budget:
        free, exact = _all_words(k, W), True
    else:
        rng = np.random.default_rng(seed)
        free, exact = rng.integers(0, k, size=(samples, W), dtype=np.int64), False
    counts = [int(c.size) for _, c in _pattern_codes(rule, _pad(rule, free, p, n), p, n)]
    return counts, exact


def count_spacetime_patterns(rule: Rule, p: int, n: int, budget: int | None = None,
                             samples: int = 1 << 16, seed: int = 0) -> EntropyEstimate:
    """Distinct (2p+1)-wide, (n+1)-high space-time patterns over all inputs.

    Enumerates every determining word (only the sides the rule reads).  Product
    rules multiply the factor counts.  ``value`` is log(D(n)) - log(D(n-1)),
    the growth over the last step; ``ratio`` is log(D(n)) / n.  Over budget the
    count comes from random words and is a lower bound.
    """
    if p < rule.radius:
        raise ValueError(f"p={p} must be >= radius {rule.radius}")
    if n < 1:
        raise ValueError("n must be positive")
    budget = budget or enum_budget()
    total = [1] * (n + 1)
    exact = True
    for f in (rule.factors or (rule,)):
        counts, ex = _count_one(f, p, n, budget, samples, seed)
        total = [a * b for a, b in zip(total, counts)]
        exact &= ex
    log_d = [math.log(c) for c in total]
    count = total[n]
    notes = [] if exact else [f"budget {budget} exceeded: sampled lower bound from {samples} words"]
    params = dict(p=p, n=n, exact=exact, estimator="increment")
    return EntropyEstimate("topological_rate", log_d[n] - log_d[n - 1], params, pattern_count=count,
                           ratio=log_d[n] / n, increments=[b - a for a, b in zip(log_d, log_d[1:])], warnings=notes)


def topological_upper_bound(rule: Rule, n: int) -> float:
    """(lambda+ + lambda-) log #A with the exponents taken at horizon n."""
    plus, _ = lambda_mu_upper(rule, n, "plus")
    minus, _ = lambda_mu_upper(rule, n, "minus")
    return float(plus + minus) * math.log(rule.k)
