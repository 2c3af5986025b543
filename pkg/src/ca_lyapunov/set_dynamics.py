"""Set-valued evolution, blocking-word certificates and surjectivity.

Symbol sets are bitmasks (bit a set when symbol a is possible).
"""

from __future__ import annotations

import itertools
import os
from dataclasses import dataclass, field

import numpy as np

from .ca_core import Rule, Word, step_array


def default_budget() -> int:
    env = os.environ.get("CA_LYAPUNOV_BUDGET")
    return int(env) if env else 10 ** 6


class SubsetBudgetExceeded(RuntimeError):
    pass


# -- per-cell sets -----------------------------------------------------------

_DIGITS: dict = {}


def _digit_table(k: int, r: int) -> np.ndarray:
    key = (k, r)
    if key not in _DIGITS:
        w = 2 * r + 1
        codes = np.arange(k ** w)
        _DIGITS[key] = np.stack([(codes // k ** (w - 1 - d)) % k for d in range(w)])
    return _DIGITS[key]


def mask_step(rule: Rule, masks: np.ndarray) -> np.ndarray:
    """Per-cell image of a window of symbol sets; output is 2r cells shorter."""
    k, r = rule.k, rule.radius
    masks = np.asarray(masks, dtype=np.int64)
    L = masks.shape[0] - 2 * r
    if L <= 0:
        return np.zeros(0, dtype=np.int64)
    digits = _digit_table(k, r)
    present = np.ones((L, digits.shape[1]), dtype=bool)
    for d in range(2 * r + 1):
        present &= ((masks[d:d + L, None] >> digits[d][None, :]) & 1).astype(bool)
    out = np.zeros(L, dtype=np.int64)
    for a in range(k):
        sel = rule.table == a
        out |= np.where(present[:, sel].any(axis=1), 1 << a, 0)
    return out


@dataclass(frozen=True, eq=False)
class SetConfig:
    """Window of non-empty symbol sets; cells outside hold the full alphabet."""

    masks: np.ndarray
    origin: int = 0

    def __post_init__(self):
        m = np.asarray(self.masks, dtype=np.int64)
        if (m <= 0).any():
            raise ValueError("every cell set must be non-empty")
        m.setflags(write=False)
        object.__setattr__(self, "masks", m)

    @classmethod
    def from_sets(cls, sets, origin: int = 0) -> "SetConfig":
        return cls(np.array([sum(1 << int(a) for a in s) for s in sets], dtype=np.int64), origin)

    @classmethod
    def from_word(cls, word: Word, k: int, pad: int = 0) -> "SetConfig":
        full = (1 << k) - 1
        m = [full] * pad + [1 << s for s in word.symbols] + [full] * pad
        return cls(np.array(m, dtype=np.int64), word.anchor - pad)

    def sets(self) -> list[set[int]]:
        return [{a for a in range(int(m).bit_length()) if m >> a & 1} for m in self.masks]

    def singleton(self, j: int) -> bool:
        m = int(self.masks[j - self.origin])
        return m & (m - 1) == 0


def set_apply(rule: Rule, cfg: SetConfig, k: int | None = None) -> SetConfig:
    """One over-approximate step; the window keeps its coordinates."""
    k = rule.k
    full = (1 << k) - 1
    pad = np.full(rule.radius, full, dtype=np.int64)
    return SetConfig(mask_step(rule, np.concatenate([pad, cfg.masks, pad])), cfg.origin)


# -- exact strips and anchored languages ---------------------------------------

def _strip_certify(rule: Rule, word: Word, column: tuple[int, int], margin: int, max_steps: int):
    """Exact word sets on a strip around the word; boundary cells re-freed each step."""
    k, r = rule.k, rule.radius
    lo = min(word.anchor, column[0]) - margin
    hi = max(word.end, column[1]) + margin
    L = hi - lo + 1
    if k ** (L + 2 * r) > 1 << 22:
        return None
    cells = [[word.symbols[j - word.anchor]] if word.anchor <= j <= word.end else range(k)
             for j in range(lo, hi + 1)]
    W = np.array(list(itertools.product(*cells)), dtype=np.int64)
    pw = k ** np.arange(L - 1, -1, -1, dtype=np.int64)
    borders = np.array(list(itertools.product(range(k), repeat=2 * r)), dtype=np.int64).reshape(-1, 2 * r)
    c0, c1 = column[0] - lo, column[1] - lo + 1
    seen = {}
    for t in range(max_steps + 1):
        codes = np.unique(W @ pw)
        W = (codes[:, None] // pw[None, :]) % k
        if len(np.unique(W[:, c0:c1], axis=0)) > 1:
            return ("lost", t)
        key = codes.tobytes()
        if key in seen:
            return ("certified", seen[key], t - seen[key])
        seen[key] = t
        m = len(W)
        ext = np.concatenate([np.repeat(borders[:, :r], m, 0), np.tile(W, (len(borders), 1)),
                              np.repeat(borders[:, r:], m, 0)], 1)
        W = step_array(rule.table, k, r, ext)
    return ("horizon", max_steps)


def _minimize(trans, k):
    n = len(trans)
    part = [0] * n
    count = 1
    while True:
        sig = {}
        new = [sig.setdefault((part[q],) + tuple(part[c] if c >= 0 else -1 for c in trans[q]), len(sig))
               for q in range(n)]
        if len(sig) == count:
            break
        part, count = new, len(sig)
    order = {part[0]: 0}
    for q in range(n):
        order.setdefault(part[q], len(order))
    out = [None] * count
    for q in range(n):
        p = order[part[q]]
        if out[p] is None:
            out[p] = tuple(order[part[c]] if c >= 0 else -1 for c in trans[q])
    return _canon(out)


def _canon(trans):
    order = {0: 0}
    queue = [0]
    i = 0
    while i < len(queue):
        for c in trans[queue[i]]:
            if c >= 0 and c not in order:
                order[c] = len(order)
                queue.append(c)
        i += 1
    return tuple(tuple(order[c] if c >= 0 else -1 for c in trans[s]) for s in queue)


def _determinize(nfa, k, start, budget):
    ids = {start: 0}
    order = [start]
    out = []
    i = 0
    while i < len(order):
        S = order[i]
        i += 1
        row = []
        for a in range(k):
            T = frozenset(c for q in S for c in nfa[q][a])
            if T:
                j = ids.get(T)
                if j is None:
                    if len(order) >= budget:
                        raise SubsetBudgetExceeded(f"more than {budget} subset states")
                    j = ids[T] = len(order)
                    order.append(T)
                row.append(j)
            else:
                row.append(-1)
        out.append(tuple(row))
    return _minimize(out, k)


def _anchored_image(trans, rule: Rule, budget):
    """Image of a right-infinite language under a rule that ignores its left inputs.

    Words are read from the anchor rightwards; every state has a successor.
    """
    k, r = rule.k, rule.radius
    tab = rule.table.tolist()  # left inputs ignored, so codes with zero left part suffice
    kw = k ** r
    cur = {(0, 0)}
    for _ in range(r):
        cur = {(c, (win * k + a) % kw) for q, win in cur for a, c in enumerate(trans[q]) if c >= 0}
    start = frozenset(cur)
    ids = {start: 0}
    order = [start]
    out = []
    i = 0
    while i < len(order):
        S = order[i]
        i += 1
        groups = [set() for _ in range(k)]
        for q, win in S:
            for a, c in enumerate(trans[q]):
                if c >= 0:
                    code = win * k + a
                    groups[tab[code]].add((c, code % kw))
        row = []
        for g in groups:
            if g:
                fg = frozenset(g)
                j = ids.get(fg)
                if j is None:
                    if len(order) >= budget:
                        raise SubsetBudgetExceeded(f"more than {budget} subset states")
                    j = ids[fg] = len(order)
                    order.append(fg)
                row.append(j)
            else:
                row.append(-1)
        out.append(tuple(row))
    return _minimize(out, k)


def _union(d1, d2, k, budget):
    n1 = len(d1)
    nfa = [[{c} if c >= 0 else set() for c in row] for row in d1]
    nfa += [[{c + n1} if c >= 0 else set() for c in row] for row in d2]
    return _determinize(nfa, k, frozenset([0, n1]), budget)


def _widen(trans, k, m, budget):
    """Merge states accepting the same words of length <= m (k-tails abstraction)."""
    sig = [frozenset([()]) for _ in trans]
    for _ in range(m):
        sig = [frozenset([()] + [(a,) + w for a, c in enumerate(row) if c >= 0 for w in sig[c]])
               for row in trans]
    cls = {}
    cid = [cls.setdefault(s, len(cls)) for s in sig]
    nfa = [[set() for _ in range(k)] for _ in cls]
    for q, row in enumerate(trans):
        for a, c in enumerate(row):
            if c >= 0:
                nfa[cid[q]][a].add(cid[c])
    return _determinize(nfa, k, frozenset([cid[0]]), budget)


def _column_constant(trans, offset, width):
    S = {0}
    for p in range(offset + width):
        outs = {a for q in S for a, c in enumerate(trans[q]) if c >= 0}
        if p >= offset and len(outs) != 1:
            return False
        S = {trans[q][a] for q in S for a in outs if trans[q][a] >= 0}
    return True


def _invariant_certify(rule: Rule, word: Word, column, max_tail: int, max_steps: int, budget: int):
    """Search a regular forward-invariant language containing the word's cylinder.

    Valid for rules blind to their left inputs: coordinates >= anchor evolve on
    their own.  Returns ("certified", iterations, 1) on a fixpoint whose column
    is constant, else None.
    """
    k = rule.k
    if column[0] < word.anchor:
        return None
    offset = column[0] - word.anchor
    width = column[1] - column[0] + 1
    base = [tuple(i + 1 if a == s else -1 for a in range(k)) for i, s in enumerate(word.symbols)]
    base.append(tuple([len(word.symbols)] * k))
    base = _canon(base)
    for m in range(1, max_tail + 1):
        L = base
        try:
            for it in range(max_steps):
                if not _column_constant(L, offset, width):
                    break
                N = _widen(_union(L, _anchored_image(L, rule, budget), k, budget), k, m, budget)
                if N == L:
                    return ("certified", it, 1)
                L = N
        except SubsetBudgetExceeded:
            return None
    return None


def _witness(rule: Rule, word: Word, column, horizon: int, budget: int):
    """Exact counterexample: two completions whose columns differ at some step."""
    k, r = rule.k, rule.radius
    for t in range(1, horizon + 1):
        lo, hi = column[0] - r * t, column[1] + r * t
        free = [j for j in range(lo, hi + 1) if not word.anchor <= j <= word.end]
        if k ** len(free) > budget:
            break
        X = np.zeros((k ** len(free), hi - lo + 1), dtype=np.int64)
        for j in range(word.anchor, word.end + 1):
            if lo <= j <= hi:
                X[:, j - lo] = word.symbols[j - word.anchor]
        if free:
            combos = np.array(list(itertools.product(range(k), repeat=len(free))), dtype=np.int64)
            X[:, [j - lo for j in free]] = combos
        Y = X
        for _ in range(t):
            Y = step_array(rule.table, k, r, Y)
        diff = np.nonzero((Y != Y[0]).any(axis=1))[0]
        if diff.size:
            a, b = X[0], X[diff[0]]
            return {"step": t, "coords": [lo, hi], "a": a.tolist(), "b": b.tolist()}
    return None


@dataclass
class BlockingCertificate:
    word: Word
    column: tuple[int, int]
    status: str  # certified | not_blocking | horizon_exceeded
    preperiod: int | None = None
    period: int | None = None
    method: str = ""
    witness: dict | None = field(default=None)

    @property
    def center_width(self) -> int:
        return (self.column[1] - self.column[0]) // 2

    def to_json(self) -> dict:
        d = {"word": str(self.word), "anchor": self.word.anchor, "column": list(self.column),
             "center_width": self.center_width, "status": self.status,
             "preperiod": self.preperiod, "period": self.period, "method": self.method}
        if self.witness is not None:
            d["witness"] = self.witness
        return d


def _columns(rule: Rule, word: Word, center_width: int | None):
    w_min = max(rule.radius, 1)
    if center_width is not None:
        if 2 * center_width + 1 < rule.radius:
            raise ValueError(f"column width {2 * center_width + 1} is narrower than radius {rule.radius}")
        widths = [2 * center_width + 1]
    else:
        widths = range(len(word), w_min - 1, -1)
    out = []
    for w in widths:
        for lo in range(word.anchor, word.end - w + 2):
            out.append((lo, lo + w - 1))
    if center_width is not None:
        # a centred column first, then any placement inside the word
        c = word.anchor + len(word) // 2
        centred = (c - center_width, c + center_width)
        out = [centred] + [col for col in out if col != centred]
    return out


def certify_blocking(rule: Rule, word: Word, center_width: int | None = None, max_steps: int = 200,
                     column: tuple[int, int] | None = None, budget: int | None = None) -> BlockingCertificate:
    """Certify that ``word`` fixes a column of width >= r for all time.

    Tries, per candidate column: an exact strip with free boundary cells and
    cycle detection, then (for one-sided rules) a regular invariant found by
    k-tails widening.  Negative verdicts come only from exact counterexamples.
    """
    budget = budget or default_budget()
    if column is not None:
        if column[1] - column[0] + 1 < max(rule.radius, 1):
            raise ValueError("column narrower than the radius")
        cols = [tuple(column)]
    else:
        cols = _columns(rule, word, center_width)
        if not cols:
            raise ValueError(f"word of length {len(word)} has no column of width >= {rule.radius}")
    variants = [(rule, word, lambda c: c)]
    mirror = rule.mirrored()
    if mirror.one_sided and not rule.one_sided:
        mw = Word(word.symbols[::-1], -word.end)
        variants.append((mirror, mw, lambda c: (-c[1], -c[0])))
    for col in cols:
        for margin in (0, 1, 2):
            res = _strip_certify(rule, word, col, margin, max_steps)
            if res and res[0] == "certified":
                return BlockingCertificate(word, col, "certified", res[1], res[2], "strip")
        if _witness(rule, word, col, 4, 1 << 14) is not None:
            continue
        for rl, wd, tr in variants:
            if rl.one_sided:
                res = _invariant_certify(rl, wd, tr(col), 4, max_steps, budget)
                if res:
                    return BlockingCertificate(word, col, "certified", res[1], res[2], "invariant")
    for col in cols:
        wit = _witness(rule, word, col, 6, min(budget, 1 << 18))
        if wit is None:
            break
    else:
        return BlockingCertificate(word, cols[0], "not_blocking", method="enumeration", witness=wit)
    return BlockingCertificate(word, cols[0], "horizon_exceeded", method="none")


def search_blocking_words(rule: Rule, max_word_len: int, max_steps: int = 200,
                          budget: int | None = None):
    """All certified words up to ``max_word_len`` (anchored at 0).

    Returns (certificates, complete); ``complete`` is False when the word
    budget cut the enumeration short.
    """
    budget = budget or default_budget()
    found = []
    examined = 0
    for length in range(max(rule.radius, 1), max_word_len + 1):
        for syms in itertools.product(range(rule.k), repeat=length):
            examined += 1
            if examined > budget:
                return found, False
            cert = certify_blocking(rule, Word(syms, 0), max_steps=max_steps, budget=budget)
            if cert.status == "certified":
                found.append(cert)
    return found, True


def has_equicontinuous_points(rule: Rule, max_word_len: int = 4, max_steps: int = 200):
    """Semi-decision: a certificate when a blocking word is found, else None."""
    for length in range(max(rule.radius, 1), max_word_len + 1):
        for syms in itertools.product(range(rule.k), repeat=length):
            cert = certify_blocking(rule, Word(syms, 0), max_steps=max_steps)
            if cert.status == "certified":
                return cert
    return None


_BLOCKERS: dict = {}


def blocking_table(rule: Rule) -> dict:
    """Short certified blocking words, as {symbols: right end of the fixed column}.

    Cached per rule.  Word lengths run from r to r + 1, and further while the
    count of words stays at 16 or below, which keeps the search cheap.
    """
    key = (rule.k, rule.radius, rule.table.tobytes())
    table = _BLOCKERS.get(key)
    if table is None:
        r, k = rule.radius, rule.k
        top = max(r, 1) + 1
        while top < 2 * r + 1 and k ** (top + 1) <= 16:
            top += 1
        found, _ = search_blocking_words(rule, top)
        table = {}
        for c in found:
            off = c.column[1] - c.word.anchor
            table[c.word.symbols] = max(off, table.get(c.word.symbols, off))
        _BLOCKERS[key] = table
    return table


# -- surjectivity --------------------------------------------------------------

def decide_surjective(rule: Rule, budget: int | None = None) -> bool:
    """Subset construction on the de Bruijn graph, started from all vertices.

    The rule is onto exactly when no finite word leads to the empty set.
    """
    budget = budget or default_budget()
    k, r = rule.k, rule.radius
    if r == 0:
        return len(set(rule.table.tolist())) == k
    nv = k ** (2 * r)
    # bitsets over vertices: succ[b][v] = mask of vertices reached from v reading output b
    succ = [[0] * nv for _ in range(k)]
    tab = rule.table.tolist()
    for v in range(nv):
        for a in range(k):
            code = v * k + a
            succ[tab[code]][v] |= 1 << (code % nv)
    start = (1 << nv) - 1
    seen = {start}
    stack = [start]
    while stack:
        S = stack.pop()
        for b in range(k):
            T = 0
            bits = S
            row = succ[b]
            while bits:
                low = bits & -bits
                T |= row[low.bit_length() - 1]
                bits ^= low
            if T == 0:
                return False
            if T not in seen:
                if len(seen) >= budget:
                    raise SubsetBudgetExceeded(f"surjectivity search exceeded {budget} subsets; "
                                               "try a smaller radius or alphabet")
                seen.add(T)
                stack.append(T)
    return True
