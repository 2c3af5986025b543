"""Exact one-sided perturbation reach via layered decision diagrams.

The set of configurations agreeing with x left of a cut and arbitrary to its
right is a regular language.  We carry the exact set of words F^i(y) over a
finite interval as a reduced layered diagram (one layer per coordinate) and
push it through the block map with a subset construction over de Bruijn
windows.  This decides "can any perturbation right of the cut change a
coordinate <= b within n steps" without enumerating perturbations.

Diagram layout: ``layers[t]`` is a list of nodes for coordinate ``A + t``;
each node is a tuple of k child indices into the next layer (-1 = no edge).
The last layer's children point to a single implicit terminal (index 0).
"""

from __future__ import annotations

import numpy as np

from .set_dynamics import mask_step


class BudgetExceeded(RuntimeError):
    pass


def reference_rows(table: np.ndarray, k: int, r: int, cells: np.ndarray, lo: int, n: int):
    """Rows F^i(x) as (first coordinate, cells) for i = 0..n."""
    from .ca_core import step_array
    rows = [(lo, np.asarray(cells, dtype=np.int64))]
    cur = rows[0][1]
    for i in range(1, n + 1):
        cur = step_array(table, k, r, cur)
        rows.append((lo + r * i, cur))
    return rows


def _chain(vals, k):
    return [[tuple(0 if a == v else -1 for a in range(k))] for v in vals]


def _reduce(layers, k):
    """Merge equivalent nodes bottom-up and drop nodes without outgoing edges."""
    out = [None] * len(layers)
    remap = None
    for t in range(len(layers) - 1, -1, -1):
        index = {}
        mp = []
        for ch in layers[t]:
            if remap is not None:
                ch = tuple(remap[c] if c >= 0 else -1 for c in ch)
            if max(ch) < 0:
                mp.append(-1)
                continue
            j = index.get(ch)
            if j is None:
                j = index[ch] = len(index)
            mp.append(j)
        out[t] = list(index)
        remap = mp
    return out


_MEMO: dict = {}


def _window_memo(k, r, tab):
    key = (k, r, tuple(tab))
    memo = _MEMO.get(key)
    if memo is None:
        if len(_MEMO) > 16:
            _MEMO.clear()
        memo = _MEMO[key] = {}
    return memo


def _advance(memo, tab, k, kw, a, mask):
    """Window bitmask after reading input a, split by block-map output."""
    hit = memo.get((a, mask))
    if hit is None:
        out = [0] * k
        m = mask
        while m:
            low = m & -m
            win = low.bit_length() - 1
            m ^= low
            code = win * k + a
            out[tab[code]] |= 1 << (code % kw)
        hit = memo[(a, mask)] = tuple(out)
    return hit


def _image(layers, k, r, tab, nout, budget, memo):
    """Diagram of block-map outputs at the first ``nout`` admissible coordinates.

    A subset-construction state maps each input-diagram node to the bitmask of
    de Bruijn windows (last 2r inputs) that can sit there.
    """
    w = 2 * r
    kw = k ** w
    cur = {(0, 0)}
    for t in range(w):
        lay = layers[t]
        cur = {(ch, (win * k + a) % kw) for u, win in cur for a, ch in enumerate(lay[u]) if ch >= 0}
    first = {}
    for u, win in cur:
        first[u] = first.get(u, 0) | (1 << win)
    states = {tuple(sorted(first.items())): 0}
    out = []
    total = 0
    for j in range(nout):
        lay = layers[w + j]
        edges = [[(a, ch) for a, ch in enumerate(node) if ch >= 0] for node in lay]
        newst = {}
        row = []
        for S in states:
            groups = [{} for _ in range(k)]
            for u, mask in S:
                for a, ch in edges[u]:
                    hit = memo.get((a, mask))
                    if hit is None:
                        hit = _advance(memo, tab, k, kw, a, mask)
                    for b in range(k):
                        m = hit[b]
                        if m:
                            g = groups[b]
                            g[ch] = g.get(ch, 0) | m
            ch = []
            for g in groups:
                if g:
                    key = tuple(sorted(g.items()))
                    idx = newst.get(key)
                    if idx is None:
                        idx = newst[key] = len(newst)
                    ch.append(idx)
                else:
                    ch.append(-1)
            row.append(tuple(ch))
        total += len(newst)
        if total > budget:
            raise BudgetExceeded(f"reachable-set construction exceeded {budget} states")
        out.append(row)
        states = newst
    out[-1] = [tuple(0 if c >= 0 else -1 for c in ch) for ch in out[-1]]
    return _reduce(out, k)


def _first_disagreement(layers, ref, ref_lo, A, bound):
    """Leftmost coordinate p <= bound where some word differs from the reference."""
    stop = min(len(layers), bound - A + 1)
    for t in range(stop):
        v = ref[A + t - ref_lo]
        for node in layers[t]:
            for a, c in enumerate(node):
                if c >= 0 and a != v:
                    return A + t
    return None


def _blocked(row, lo, D, bound, blockers, maxlen):
    """A certified word sits left of D in ``row`` and its fixed column reaches ``bound``.

    Every cell left of D agrees with the reference for all perturbations, so
    the column stays fixed from now on and nothing right of it gets past.
    """
    a = max(lo, bound - maxlen + 1)
    if D - a <= 0:
        return False
    seg = row[a - lo:D - lo].tolist()
    for L in range(1, maxlen + 1):
        for q in range(0, len(seg) - L + 1):
            c1 = blockers.get(tuple(seg[q:q + L]))
            if c1 is not None and a + q + c1 >= bound:
                return True
    return False


def _masks_certify(rule, layers, A, B, i, n, rows, bound):
    """Per-cell over-approximation from step i on; True if nothing can reach <= bound."""
    k, r = rule.k, rule.radius
    lo_i, row_i = rows[i]
    left = max(lo_i, A - 2 * r * (n - i))
    masks = [1 << int(v) for v in row_i[left - lo_i:A - lo_i]]
    for lay in layers:
        m = 0
        for node in lay:
            for a, c in enumerate(node):
                if c >= 0:
                    m |= 1 << a
        masks.append(m)
    M = np.array(masks, dtype=np.int64)
    pos = left
    for t in range(i + 1, n + 1):
        M = mask_step(rule, M)
        pos += r
        hi = min(bound, pos + len(M) - 1)
        if hi >= pos:
            seg = M[:hi - pos + 1]
            if np.any(seg & (seg - 1)):
                return False
    return True


def reach(rule, rows, n: int, s: int, bound: int = 0, first_only: bool = True,
          budget: int = 10 ** 6, certify: bool = True, blockers: dict | None = None):
    """Leftmost coordinate <= ``bound`` that some perturbation right of ``s`` changes.

    Perturbations range over all configurations equal to x on coordinates <= s;
    scanned steps are 1..n.  ``rows`` are reference rows from
    :func:`reference_rows` covering [-2rn, 2rn] at step 0.  Returns None when
    no such coordinate exists.  With ``first_only`` the scan stops at the first
    hit; otherwise the minimum over all steps is returned.  ``blockers`` (see
    :func:`set_dynamics.blocking_table`) enables the blocking-word stop test.
    """
    k, r = rule.k, rule.radius
    tab = rule.table.tolist()
    memo = _window_memo(k, r, tab)
    rn = r * n

    def ref(i, lo, hi):
        o, row = rows[i]
        return row[lo - o:hi - o + 1]

    A, B = s + 1 - 2 * r, rn
    if B <= s:
        return None
    maxlen = max(map(len, blockers)) if blockers else 0
    if certify and maxlen and _blocked(rows[0][1], rows[0][0], s + 1, bound, blockers, maxlen):
        return None
    layers = _chain(ref(0, A, s).tolist(), k) + [[tuple([0] * k)] for _ in range(s + 1, B + 1)]
    layers = _reduce(layers, k)
    best = None
    for i in range(1, n + 1):
        nout = (B - r) - (A + r) + 1
        if nout <= 0:
            break
        layers = _image(layers, k, r, tab, nout, budget, memo)
        A += r
        B -= r
        o, row = rows[i]
        d = _first_disagreement(layers, row, o, A, bound)
        if d is not None:
            best = d
            if first_only:
                return d
            bound = d - 1
        if i < n:
            if certify and maxlen:
                D = _first_disagreement(layers, row, o, A, B)
                if _blocked(row, o, B + 1 if D is None else D, bound, blockers, maxlen):
                    break
            elif certify and _masks_certify(rule, layers, A, B, i, n, rows, bound):
                break
            layers = _chain(ref(i, A - 2 * r, A - 1).tolist(), k) + layers
            A -= 2 * r
    return best
