"""Independent brute-force references.

Pure-Python rule application (through ``Rule.local``), exhaustive
perturbation enumeration, no light-cone pruning, no search shortcuts.
"""

from __future__ import annotations

import itertools
from fractions import Fraction

import numpy as np


def step_py(rule, cells):
    r = rule.radius
    return [rule.local(*cells[i - r:i + r + 1]) for i in range(r, len(cells) - r)]


def _rows(rule, cells, lo, n):
    """Rows 1..n as (origin, cells) with the centred window."""
    out, cur, o = [], list(cells), lo
    for _ in range(n):
        cur = step_py(rule, cur)
        o += rule.radius
        out.append((o, cur))
    return out


def _changed(rule, cells, lo, n, coords):
    """Coordinates that differ from the reference at some step 1..n, over every assignment of ``coords``."""
    ref = _rows(rule, cells, lo, n)
    out = set()
    for vals in itertools.product(range(rule.k), repeat=len(coords)):
        y = list(cells)
        for c, v in zip(coords, vals):
            y[c - lo] = v
        for (o, a), (_, b) in zip(ref, _rows(rule, y, lo, n)):
            out.update(o + j for j in range(len(a)) if a[j] != b[j])
    return out


def lambda_tilde(rule, x, n, side):
    """Pointwise propagation depth, perturbing every cell strictly beyond 0 that can matter."""
    R = rule.radius * n + 2
    cells, lo = [int(c) for c in x.cells], x.valid_lo
    if side == "minus":
        D = [d for d in _changed(rule, cells, lo, n, list(range(1, R + 1))) if d <= 0]
        return 0 if not D else 1 - min(D)
    D = [d for d in _changed(rule, cells, lo, n, list(range(-R, 0))) if d >= 0]
    return 0 if not D else max(D) + 1


def I_value(rule, x, n, side):
    """Smallest s for which perturbations beyond s never reach coordinate 0 (linear scan)."""
    R = rule.radius * n + 2
    cells, lo = [int(c) for c in x.cells], x.valid_lo
    for s in range(rule.radius * n + 1):
        if side == "minus":
            D = _changed(rule, cells, lo, n, list(range(s + 1, s + R + 1)))
            if not any(d <= 0 for d in D):
                return s
        else:
            D = _changed(rule, cells, lo, n, list(range(-s - R, -s)))
            if not any(d >= 0 for d in D):
                return s
    return rule.radius * n


def lambda_hat(rule, n, side):
    """Max of the pointwise depth over every word around the origin, divided by n."""
    from ca_lyapunov.ca_core import Config
    r = rule.radius
    half = r * n + 2 + r * n
    best = 0
    # every perturbed cell is enumerated anyway; the reference matters within 2rn of 0
    span = range(-2 * r * n, 1) if side == "minus" else range(0, 2 * r * n + 1)
    for vals in itertools.product(range(rule.k), repeat=len(span)):
        cells = np.zeros(2 * half + 1, dtype=np.int64)
        for c, v in zip(span, vals):
            cells[c + half] = v
        best = max(best, lambda_tilde(rule, Config(cells, -half), n, side))
    return Fraction(best, n)


def image_words(rule, L):
    """All words of length L in the image of the rule."""
    r = rule.radius
    return {tuple(step_py(rule, list(w))) for w in itertools.product(range(rule.k), repeat=L + 2 * r)}
