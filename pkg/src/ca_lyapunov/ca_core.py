"""Alphabets, radius-r rules, finite-window configurations and sampling."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

# largest flattened alphabet accepted by product_rule
MAX_ALPHABET = 64


class RuleError(ValueError):
    pass


class WindowError(ValueError):
    """Raised when a finite window cannot support a requested computation."""


@dataclass(frozen=True)
class Alphabet:
    size: int
    labels: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.size < 1:
            raise RuleError("alphabet size must be positive")
        if self.labels is not None:
            if len(self.labels) != self.size:
                raise RuleError("one label per symbol required")
            if len(set(self.labels)) != self.size:
                raise RuleError("labels must be distinct")

    def label(self, s: int) -> str:
        return self.labels[s] if self.labels is not None else str(s)


@dataclass(frozen=True, eq=False)
class Rule:
    """Block map over (2r+1)-tuples; ``table`` is indexed lexicographically.

    ``factors`` keeps the component rules of a product so that exponent
    computations can run per track.
    """

    alphabet: Alphabet
    radius: int
    table: np.ndarray
    one_sided: bool
    name: str = "rule"
    factors: tuple["Rule", ...] | None = field(default=None, repr=False)

    @property
    def k(self) -> int:
        return self.alphabet.size

    @property
    def width(self) -> int:
        return 2 * self.radius + 1

    def local(self, *cells: int) -> int:
        code = 0
        for c in cells:
            code = code * self.k + int(c)
        return int(self.table[code])

    def mirrored(self) -> "Rule":
        """Rule acting on reflected configurations (coordinate j -> -j)."""
        cube = self.table.reshape((self.k,) * self.width)
        cube = np.ascontiguousarray(cube.transpose(tuple(range(self.width))[::-1]))
        factors = None if self.factors is None else tuple(f.mirrored() for f in self.factors)
        return _build(self.alphabet, self.radius, cube.reshape(-1), f"mirror({self.name})", factors)

    def to_json(self) -> dict:
        return {"alphabet_size": self.k, "radius": self.radius, "table": [int(v) for v in self.table]}

    def __eq__(self, other):
        return (isinstance(other, Rule) and self.k == other.k and self.radius == other.radius
                and np.array_equal(self.table, other.table))

    def __hash__(self):
        return hash((self.k, self.radius, self.table.tobytes()))


def _left_independent(table: np.ndarray, k: int, r: int) -> bool:
    if r == 0:
        return True
    t = table.reshape(k ** r, k ** (r + 1))
    return bool((t == t[0]).all())


def _build(alphabet, radius, table, name, factors=None) -> Rule:
    table = np.asarray(table, dtype=np.int64).copy()
    table.setflags(write=False)
    return Rule(alphabet, radius, table, _left_independent(table, alphabet.size, radius), name, factors)


def make_rule(alphabet: Alphabet | int, radius: int, table_entries, name: str = "rule") -> Rule:
    """Validate a local rule.

    ``table_entries`` is either a flat sequence of ``size**(2r+1)`` outputs in
    lexicographic tuple order, a mapping from tuples to outputs, or an
    iterable of ``(tuple, output)`` pairs.
    """
    if isinstance(alphabet, int):
        alphabet = Alphabet(alphabet)
    if radius < 0:
        raise RuleError("radius must be non-negative")
    k, w = alphabet.size, 2 * radius + 1
    n_entries = k ** w
    if isinstance(table_entries, Mapping):
        pairs = list(table_entries.items())
    else:
        entries = list(table_entries)
        pairs = entries if entries and isinstance(entries[0], tuple) and len(entries[0]) == 2 \
            and isinstance(entries[0][0], (tuple, list)) else None
        if pairs is None:
            if len(entries) != n_entries:
                raise RuleError(f"table needs {n_entries} entries, got {len(entries)}")
            table = np.asarray(entries, dtype=np.int64)
            if table.min(initial=0) < 0 or table.max(initial=0) >= k:
                raise RuleError("output symbol out of range")
            return _build(alphabet, radius, table, name)
    table = np.full(n_entries, -1, dtype=np.int64)
    for tup, out in pairs:
        tup = tuple(int(a) for a in tup)
        if len(tup) != w or any(a < 0 or a >= k for a in tup):
            raise RuleError(f"bad neighbourhood {tup}")
        if not 0 <= int(out) < k:
            raise RuleError(f"output symbol {out} out of range")
        code = 0
        for a in tup:
            code = code * k + a
        if table[code] >= 0:
            raise RuleError(f"duplicate entry for {tup}")
        table[code] = int(out)
    if (table < 0).any():
        raise RuleError(f"table is missing {int((table < 0).sum())} entries")
    return _build(alphabet, radius, table, name)


def rule_from_function(k: int, radius: int, fn, name: str = "rule") -> Rule:
    outs = [fn(t) for t in itertools.product(range(k), repeat=2 * radius + 1)]
    return make_rule(Alphabet(k), radius, outs, name)


def shift_rule(k: int = 2) -> Rule:
    return rule_from_function(k, 1, lambda t: t[2], "shift")


def identity_rule(k: int = 2) -> Rule:
    return rule_from_function(k, 1, lambda t: t[1], "identity")


def is_aperiodic(word: Sequence[int]) -> bool:
    r = len(word)
    return not any(all(word[i + p] == word[i] for i in range(r - p)) for p in range(1, r))


def coven_rule(word: Sequence[int] | str) -> Rule:
    """Coven automaton: flip x0 exactly when x1..xr spells ``word``."""
    if isinstance(word, str):
        if set(word) - {"0", "1"}:
            raise RuleError("Coven word must be binary")
        word = [int(c) for c in word]
    word = tuple(int(b) for b in word)
    if not word or any(b not in (0, 1) for b in word):
        raise RuleError("Coven word must be a non-empty binary word")
    if not is_aperiodic(word):
        raise RuleError(f"word {word} is periodic")
    r = len(word)
    name = "coven:" + "".join(map(str, word))
    return rule_from_function(2, r, lambda t: t[r] ^ (tuple(t[r + 1:]) == word), name)


def example2_f2_rule(radius: int) -> Rule:
    """Three-letter rule: x0 + x_r (mod 2) on 2-free neighbourhoods, 2 freezes.

    The output keeps x0 whenever 2 occurs among x0..x_r.
    """
    if radius < 1:
        raise RuleError("radius must be at least 1")
    r = radius

    def f(t):
        right = t[r:]
        if 2 in right:
            return t[r]
        return (t[r] + t[2 * r]) % 2

    return rule_from_function(3, r, f, f"f2:{r}")


def widen(rule: Rule, radius: int) -> Rule:
    """Same map, read through a larger neighbourhood."""
    if radius < rule.radius:
        raise RuleError("cannot shrink a radius")
    d = radius - rule.radius
    k = rule.k
    cube = rule.table.reshape((k,) * rule.width)
    big = np.broadcast_to(cube.reshape((1,) * d + cube.shape + (1,) * d), (k,) * (2 * radius + 1))
    return _build(rule.alphabet, radius, big.reshape(-1), rule.name, rule.factors)


def product_rule(rule1: Rule, rule2: Rule) -> Rule:
    """Componentwise product; symbol s = s1 * size2 + s2."""
    k1, k2 = rule1.k, rule2.k
    if k1 * k2 > MAX_ALPHABET:
        raise RuleError(f"product alphabet {k1 * k2} exceeds limit {MAX_ALPHABET}")
    r = max(rule1.radius, rule2.radius)
    a, b = widen(rule1, r), widen(rule2, r)
    w = 2 * r + 1
    tuples = np.array(list(itertools.product(range(k1 * k2), repeat=w)), dtype=np.int64)
    p1 = k1 ** np.arange(w - 1, -1, -1)
    p2 = k2 ** np.arange(w - 1, -1, -1)
    out = a.table[(tuples // k2) @ p1] * k2 + b.table[(tuples % k2) @ p2]
    facs = (rule1.factors or (rule1,)) + (rule2.factors or (rule2,))
    return _build(Alphabet(k1 * k2), r, out, f"product({rule1.name},{rule2.name})", facs)


def split_symbols(rule: Rule, cells: np.ndarray) -> list[np.ndarray]:
    """Decode flattened product symbols into one array per factor."""
    if not rule.factors:
        return [np.asarray(cells)]
    sizes = [f.k for f in rule.factors]
    out = []
    rest = np.asarray(cells, dtype=np.int64)
    for i in range(len(sizes)):
        tail = int(np.prod(sizes[i + 1:], dtype=np.int64))
        out.append(rest // tail)
        rest = rest % tail
    return out


def step_array(table: np.ndarray, k: int, r: int, cells: np.ndarray) -> np.ndarray:
    """One application on the last axis; output is 2r cells shorter."""
    L = cells.shape[-1] - 2 * r
    if L <= 0:
        raise WindowError(f"need more than {2 * r} cells")
    code = cells[..., 0:L].astype(np.int64)
    for d in range(1, 2 * r + 1):
        code = code * k + cells[..., d:d + L]
    return table[code]


@dataclass(frozen=True, eq=False)
class Config:
    cells: np.ndarray
    origin: int = 0
    valid_lo: int | None = None
    valid_hi: int | None = None

    def __post_init__(self):
        cells = np.asarray(self.cells, dtype=np.int64)
        if cells.ndim != 1 or cells.size == 0:
            raise WindowError("configuration must be a non-empty 1-d window")
        cells.setflags(write=False)
        object.__setattr__(self, "cells", cells)
        if self.valid_lo is None:
            object.__setattr__(self, "valid_lo", self.origin)
        if self.valid_hi is None:
            object.__setattr__(self, "valid_hi", self.origin + cells.size - 1)
        if self.valid_lo < self.origin or self.valid_hi > self.hi:
            raise WindowError("validity interval must lie inside the window")

    @property
    def hi(self) -> int:
        return self.origin + self.cells.size - 1

    def __len__(self):
        return self.cells.size

    def __getitem__(self, i: int) -> int:
        return int(self.cells[i - self.origin])

    def segment(self, lo: int, hi: int) -> np.ndarray:
        """Cells on [lo, hi]; the range must be valid."""
        if lo < self.valid_lo or hi > self.valid_hi:
            raise WindowError(f"coordinates [{lo},{hi}] outside valid [{self.valid_lo},{self.valid_hi}]")
        return self.cells[lo - self.origin: hi - self.origin + 1]

    def covers(self, lo: int, hi: int) -> bool:
        return self.valid_lo <= lo and hi <= self.valid_hi

    def require(self, lo: int, hi: int, what: str = "computation"):
        if not self.covers(lo, hi):
            raise WindowError(f"{what} needs valid coordinates [{lo},{hi}]; "
                              f"have [{self.valid_lo},{self.valid_hi}]")

    def mirrored(self) -> "Config":
        return Config(self.cells[::-1].copy(), -self.hi, -self.valid_hi, -self.valid_lo)

    def __eq__(self, other):
        return (isinstance(other, Config) and self.origin == other.origin
                and self.valid_lo == other.valid_lo and self.valid_hi == other.valid_hi
                and np.array_equal(self.cells, other.cells))

    def to_text(self, alphabet: Alphabet | None = None) -> str:
        lab = alphabet.label if alphabet is not None else str
        return f"origin={self.origin} valid=[{self.valid_lo},{self.valid_hi}]\n" + \
            " ".join(lab(int(c)) for c in self.cells) + "\n"

    @classmethod
    def from_text(cls, text: str, alphabet: Alphabet | None = None) -> "Config":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines:
            raise WindowError("empty configuration text")
        origin, valid = 0, None
        if lines[0].startswith("origin="):
            head = lines.pop(0).split()
            origin = int(head[0].split("=")[1])
            if len(head) > 1:
                lo, hi = head[1].split("=")[1].strip("[]").split(",")
                valid = (int(lo), int(hi))
        toks = lines[0].split()
        if alphabet is not None and alphabet.labels is not None:
            index = {l: i for i, l in enumerate(alphabet.labels)}
            cells = [index[t] for t in toks]
        else:
            cells = [int(t) for t in toks]
        if valid is None:
            return cls(np.array(cells), origin)
        return cls(np.array(cells), origin, valid[0], valid[1])


@dataclass(frozen=True)
class Word:
    symbols: tuple[int, ...]
    anchor: int = 0

    def __post_init__(self):
        object.__setattr__(self, "symbols", tuple(int(s) for s in self.symbols))
        if not self.symbols:
            raise ValueError("word must be non-empty")

    def __len__(self):
        return len(self.symbols)

    @property
    def end(self) -> int:
        return self.anchor + len(self.symbols) - 1

    @classmethod
    def parse(cls, text: str, anchor: int = 0) -> "Word":
        text = text.strip()
        syms = [int(t) for t in text.split()] if " " in text else [int(c) for c in text]
        return cls(tuple(syms), anchor)

    def __str__(self):
        return "".join(str(s) for s in self.symbols) if max(self.symbols) < 10 else \
            " ".join(str(s) for s in self.symbols)


def apply(rule: Rule, config: Config) -> Config:
    r = rule.radius
    if config.valid_hi - config.valid_lo + 1 <= 2 * r:
        raise WindowError(f"apply needs a valid interval wider than {2 * r} cells")
    # a rule blind to its left inputs can also fill the first r cells
    left = 0 if rule.one_sided else r
    cells = config.cells
    padded = cells if left == r else np.concatenate([np.zeros(r, dtype=np.int64), cells])
    out = step_array(rule.table, rule.k, r, padded)
    return Config(out, config.origin + left, config.valid_lo + r, config.valid_hi - r)


def evolve(rule: Rule, config: Config, n: int) -> list[Config]:
    if n < 0:
        raise ValueError("n must be non-negative")
    need = 2 * rule.radius * n
    if config.valid_hi - config.valid_lo + 1 <= need:
        raise WindowError(f"evolving {n} steps needs more than {need} valid cells "
                          f"(required width 2rn + output span)")
    rows = [config]
    for _ in range(n):
        rows.append(apply(rule, rows[-1]))
    return rows


def shift_config(config: Config, k: int) -> Config:
    """sigma^k: the cell at coordinate i moves to coordinate i - k."""
    return Config(config.cells, config.origin - k, config.valid_lo - k, config.valid_hi - k)


def diagram_to_text(rows: Sequence[Config], alphabet: Alphabet | None = None) -> str:
    return "".join(row.to_text(alphabet) for row in rows)


# -- measures and sampling --------------------------------------------------

@dataclass(frozen=True)
class MeasureSpec:
    """Product Bernoulli measure; one weight vector per product factor."""

    tracks: tuple[tuple[float, ...], ...]

    def __post_init__(self):
        tracks = tuple(tuple(float(w) for w in t) for t in self.tracks)
        object.__setattr__(self, "tracks", tracks)
        if not tracks:
            raise ValueError("at least one track required")
        for t in tracks:
            if len(t) < 1 or any(not w > 0 for w in t):
                raise ValueError("every weight must be positive (full support)")
            if abs(sum(t) - 1.0) > 1e-12:
                raise ValueError("track weights must sum to 1")

    @classmethod
    def uniform(cls, *sizes: int) -> "MeasureSpec":
        return cls(tuple(tuple([1.0 / s] * s) for s in sizes))

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(len(t) for t in self.tracks)

    @property
    def alphabet_size(self) -> int:
        return int(np.prod(self.sizes))

    def symbol_probs(self) -> np.ndarray:
        p = np.array([1.0])
        for t in self.tracks:
            p = np.outer(p, np.array(t)).reshape(-1)
        return p

    def to_json(self) -> dict:
        return {"tracks": [list(t) for t in self.tracks]}


_COORD_OFFSET = 1 << 62


def _uniforms(seed: int, stream: int, lo: int, hi: int) -> np.ndarray:
    """Counter-based uniforms: entry for coordinate i depends only on (seed, stream, i)."""
    start = lo + _COORD_OFFSET
    block, lane = divmod(start, 4)
    count = hi - lo + 1
    gen = np.random.Philox(key=np.array([seed & ((1 << 64) - 1), stream], dtype=np.uint64),
                           counter=np.array([block, 0, 0, 0], dtype=np.uint64))
    raw = gen.random_raw(count + lane)[lane:]
    return (raw >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))


def sample_cells(measure: MeasureSpec, lo: int, hi: int, seed: int, stream: int = 0) -> np.ndarray:
    if lo > hi:
        raise ValueError("empty coordinate range")
    sym = np.zeros(hi - lo + 1, dtype=np.int64)
    for t, weights in enumerate(measure.tracks):
        u = _uniforms(seed, stream * 64 + t, lo, hi)
        cdf = np.cumsum(weights)
        cdf[-1] = 1.0
        s = np.minimum(np.searchsorted(cdf, u, side="right"), len(weights) - 1)
        sym = sym * len(weights) + s
    return sym


def sample_config(measure: MeasureSpec, coord_lo: int, coord_hi: int, seed: int,
                  stream: int = 0) -> Config:
    """Draw a window from the measure; ``stream`` separates independent samples."""
    return Config(sample_cells(measure, coord_lo, coord_hi, seed, stream), coord_lo)


def rule_from_json(obj: dict) -> Rule:
    try:
        return make_rule(Alphabet(int(obj["alphabet_size"])), int(obj["radius"]), obj["table"])
    except KeyError as e:
        raise RuleError(f"rule file missing field {e}") from None


def builtin_rule(spec: str) -> Rule:
    """Parse ``shift``, ``identity``, ``coven:<B>``, ``f2:<r>``, ``product:<a>,<b>``."""
    spec = spec.strip()
    if spec.startswith("builtin:"):
        spec = spec[len("builtin:"):]
    head, _, arg = spec.partition(":")
    if head == "shift":
        return shift_rule(int(arg) if arg else 2)
    if head == "identity":
        return identity_rule(int(arg) if arg else 2)
    if head == "coven":
        return coven_rule(arg or "10")
    if head == "f2":
        return example2_f2_rule(int(arg) if arg else 2)
    if head == "product":
        parts = _split_top(arg)
        if len(parts) != 2:
            raise RuleError("product needs two comma-separated rules")
        return product_rule(builtin_rule(parts[0]), builtin_rule(parts[1]))
    raise RuleError(f"unknown builtin rule {spec!r}")


def _split_top(s: str) -> list[str]:
    depth, cur, out = 0, "", []
    for ch in s:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        if ch == "," and depth == 0:
            out.append(cur)
            cur = ""
        else:
            cur += ch
    out.append(cur)
    return [p.strip().strip("()") for p in out]


def default_measure(rule: Rule) -> MeasureSpec:
    """Uniform measure, split per track for product rules."""
    if rule.factors:
        return MeasureSpec.uniform(*(f.k for f in rule.factors))
    return MeasureSpec.uniform(rule.k)
