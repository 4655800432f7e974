"""Exact circuit-class counting at finite dimension.

A circuit of length p is a map pi: {0..p} -> [N] with pi(p) = pi(0). For a
sentence W, the star class contains the k-tuples of circuits whose L-value
coincidences refine W (equal letters force equal L-values); the exact class
additionally forces distinct letters to take distinct L-values. Both come
masked (every step inside Delta_N) or raw.

Counting walks vertices in generating-vertex order, propagating the L-value
constraint: a vertex whose letter is already realized has at most B
candidate values (the preimage of the required L-value in one row), which
is what keeps the search polynomial. The search frontier is kept as a
weighted table of partial-assignment states so whole levels advance as
vectorized array operations, and states that agree on everything the future
can see are merged.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from .combinat import Sentence, cluster_decompose, coarsenings
from .links import LinkSpec
from .masks import MaskSpec

__all__ = [
    "CircuitCountRecord",
    "ScalingProfile",
    "BudgetExceededError",
    "count_circuits",
    "count_circuits_bruteforce",
    "full_count_record",
    "normalized_count",
    "scaling_profile",
    "step_branching_bound",
    "DEFAULT_NODE_BUDGET",
    "DEFAULT_BRUTEFORCE_CAP",
]

DEFAULT_NODE_BUDGET = 80_000_000  # frontier cells (rows x state width)
DEFAULT_BRUTEFORCE_CAP = 40_000_000
_TABLE_ROW_CAP = 3_000_000  # per-slab frontier rows when building word tables
_DEDUPE_THRESHOLD = 3_500_000  # mid-word state merge, above the slab cap


class BudgetExceededError(RuntimeError):
    def __init__(self, nodes: int, budget: int, where: str):
        super().__init__(
            f"enumeration budget exhausted in {where}: {nodes} nodes > {budget}"
        )
        self.nodes = nodes
        self.budget = budget


@dataclass(frozen=True)
class CircuitCountRecord:
    """Counts of the circuit classes of one sentence at one dimension."""

    n: int
    p: int
    k: int
    raw_exact: Optional[int] = None
    raw_star: Optional[int] = None
    masked: Optional[int] = None
    masked_star: Optional[int] = None
    normalized: Optional[object] = None  # Fraction when the exponent is integral


# -- interned link / mask tables ----------------------------------------------

class _Tables:
    """L-value ids, mask and candidate lookups for one (link, mask, N)."""

    def __init__(self, link: LinkSpec, mask: Optional[MaskSpec], n: int):
        grid = link.eval_grid(n).reshape(n * n, -1)
        _, inv = np.unique(grid, axis=0, return_inverse=True)
        inv = inv.reshape(-1)
        self.n = n
        self.lid = inv.reshape(n, n).astype(np.int64)
        self.n_values = int(inv.max()) + 1
        mm = np.ones((n, n), dtype=bool) if mask is None else mask.matrix(n)
        self.mask = mm
        deg = mm.sum(axis=1).astype(np.int64)
        self.free_deg = deg
        self.free_starts = np.concatenate(([0], np.cumsum(deg)[:-1]))
        rows, cols = np.nonzero(mm)  # row-major order
        self.free_cols = cols.astype(np.int64)
        keys = rows.astype(np.int64) * self.n_values + self.lid[rows, cols]
        order = np.argsort(keys, kind="stable")
        self.skeys = keys[order]
        self.scols = cols[order].astype(np.int64)

    def branching_bound(self) -> int:
        """Largest candidate set for a constrained step; <= B when the mask
        is full."""
        if len(self.skeys) == 0:
            return 0
        _, counts = np.unique(self.skeys, return_counts=True)
        return int(counts.max())


@functools.lru_cache(maxsize=128)
def _tables(link: LinkSpec, mask: Optional[MaskSpec], n: int) -> _Tables:
    return _Tables(link, mask, n)


def step_branching_bound(link: LinkSpec, n: int) -> int:
    """max over (row, value) of the preimage size: the realized branching
    bound of a constrained step (Assumption-B constant at this N)."""
    return _tables(link, None, n).branching_bound()


# -- frontier engine -----------------------------------------------------------

def _ragged_take(starts: np.ndarray, counts: np.ndarray):
    """Row indices and flat source indices for per-row variable-length
    candidate lists."""
    total = int(counts.sum())
    rows = np.repeat(np.arange(len(counts)), counts)
    within = np.arange(total, dtype=np.int64) - np.repeat(
        np.cumsum(counts) - counts, counts
    )
    return rows, np.repeat(starts, counts) + within


def _dedupe(vals: np.ndarray, w: np.ndarray):
    if len(vals) == 0:
        return vals, w
    cols = vals.shape[1]
    if cols == 0:
        return vals[:1], np.array([int(w.sum())], dtype=np.int64)
    base = int(vals.max()) + 2
    if cols * np.log2(max(base, 2)) < 62:
        # pack rows into one key; 1-d unique is much faster than axis=0
        powers = base ** np.arange(cols - 1, -1, -1, dtype=np.int64)
        keys = (vals + 1) @ powers  # shift so -1 sentinels pack too
        _, first, inv = np.unique(keys, return_index=True, return_inverse=True)
        uniq = vals[first]
    else:
        uniq, inv = np.unique(vals, axis=0, return_inverse=True)
    inv = inv.reshape(-1)
    acc = np.zeros(len(uniq), dtype=np.int64)
    np.add.at(acc, inv, w)
    return uniq, acc


def _weighted_dot(wa: np.ndarray, wb: np.ndarray) -> int:
    """Sum of elementwise products, falling back to python ints if the
    int64 dot could overflow."""
    if len(wa) == 0:
        return 0
    ma, mb = int(wa.max()), int(wb.max())
    if ma * mb * len(wa) < 2**62:
        return int(np.dot(wa, wb))
    return sum(int(x) * int(y) for x, y in zip(wa, wb))


class _NodeMeter:
    def __init__(self, budget: int):
        self.nodes = 0
        self.budget = budget

    def charge(self, rows: int, where: str):
        self.nodes += rows
        if self.nodes > self.budget:
            raise BudgetExceededError(self.nodes, self.budget, where)


def _count_frontier(
    words: Sequence[Sequence[int]],
    tab: _Tables,
    exact: bool,
    meter: _NodeMeter,
    shared_keep: Optional[Sequence[int]] = None,
    start_values: Optional[np.ndarray] = None,
):
    """Weighted count of (masked) circuit tuples for ``words`` under star
    semantics, or exact semantics when ``exact``.

    Returns the total count as a python int, unless ``shared_keep`` is
    given, in which case the deduped table (value ids of those letters,
    weights) is returned for joining. ``start_values`` restricts pi(0) of
    the first word, so callers can slab huge single-word expansions.
    """
    n = tab.n
    letters = sorted({x for w in words for x in w})
    col_of = {a: i for i, a in enumerate(letters)}
    m = len(letters)
    last_word = {a: max(u for u, w in enumerate(words) if a in w) for a in letters}
    p = len(words[0])

    vals = np.full((1, m), -1, dtype=np.int64)
    w = np.ones(1, dtype=np.int64)
    active = list(range(m))  # positions into `letters` still in `vals`

    for u, word in enumerate(words):
        rows = len(w)
        starts = (
            np.asarray(start_values, dtype=np.int64)
            if (u == 0 and start_values is not None)
            else np.arange(n, dtype=np.int64)
        )
        meter.charge(rows * len(starts) * (len(active) + 2), f"word {u} open")
        idx = np.repeat(np.arange(rows), len(starts))
        start = np.tile(starts, rows)
        vals = vals[idx]
        w = w[idx]
        prev = start.copy()

        for j, letter in enumerate(word, start=1):
            c = active.index(col_of[letter]) if col_of[letter] in active else -1
            known = c >= 0 and bool(len(vals)) and (vals[:, c] != -1).all()
            # letters are tracked from the start, so "known" is simply
            # whether this letter already has a value in every row
            if len(w) == 0:
                if shared_keep is not None:
                    empty = np.zeros((0, len(shared_keep)), dtype=np.int64)
                    return empty, np.zeros(0, dtype=np.int64)
                return 0
            if j == p:
                cand = start
                keep = tab.mask[prev, cand]
                prev_k, cand_k = prev[keep], cand[keep]
                vals, w, start = vals[keep], w[keep], start[keep]
                t = tab.lid[prev_k, cand_k]
                prev = cand_k
            else:
                width = len(active) + 2
                if known:
                    t_req = vals[:, c]
                    q = prev * tab.n_values + t_req
                    left = np.searchsorted(tab.skeys, q, side="left")
                    right = np.searchsorted(tab.skeys, q, side="right")
                    counts = right - left
                    rows_i, flat = _ragged_take(left, counts)
                    meter.charge(len(rows_i) * width + len(q), f"word {u} step {j}")
                    cand = tab.scols[flat]
                    vals, w, start = vals[rows_i], w[rows_i], start[rows_i]
                    prev = cand
                    t = None  # already consistent by construction
                else:
                    counts = tab.free_deg[prev]
                    rows_i, flat = _ragged_take(tab.free_starts[prev], counts)
                    meter.charge(len(rows_i) * width + len(prev), f"word {u} step {j}")
                    cand = tab.free_cols[flat]
                    prev_k = prev[rows_i]
                    vals, w, start = vals[rows_i], w[rows_i], start[rows_i]
                    t = tab.lid[prev_k, cand]
                    prev = cand
            if t is not None:
                if known:
                    keep = t == vals[:, c]
                    vals, w, start, prev = vals[keep], w[keep], start[keep], prev[keep]
                else:
                    if exact:
                        clash = (vals == t[:, None]).any(axis=1)
                        if clash.any():
                            keep = ~clash
                            vals, w, start, prev, t = (
                                vals[keep],
                                w[keep],
                                start[keep],
                                prev[keep],
                                t[keep],
                            )
                    if len(vals):
                        # fancy indexing above already produced a fresh array
                        vals[:, c] = t
            if len(w) > _DEDUPE_THRESHOLD and j < p:
                state = np.column_stack([vals, start, prev])
                state, w = _dedupe(state, w)
                vals = state[:, : len(active)]
                start = state[:, len(active)]
                prev = state[:, len(active) + 1]

        # close word u: forget start/prev, drop dead letters, merge states
        if not exact and u < len(words) - 1:
            new_active = [
                ci for ci in active if last_word[letters[ci]] > u
            ]
            if shared_keep is not None:
                keep_set = set(new_active) | {col_of[a] for a in shared_keep}
                new_active = [ci for ci in active if ci in keep_set]
            if new_active != active:
                sel = [active.index(ci) for ci in new_active]
                vals = vals[:, sel]
                active = new_active
        if len(vals):
            vals, w = _dedupe(vals, w)

    if shared_keep is not None:
        sel = [active.index(col_of[a]) for a in shared_keep]
        vals = vals[:, sel]
        vals, w = _dedupe(vals, w)
        return vals, w
    return int(w.sum())


@functools.lru_cache(maxsize=128)
def _word_table(
    link: LinkSpec,
    mask: Optional[MaskSpec],
    n: int,
    word: tuple,
    keep: tuple,
    budget: int,
):
    """Deduped table (value ids of the ``keep`` letters, weights) over all
    masked circuits of one canonical word. Built in start-value slabs to
    bound the transient frontier; cached because many sentences of one
    sweep share word patterns."""
    tab = _tables(link, mask, n)
    free = len({a for j, a in enumerate(word, start=1) if j < len(word)})
    per_start = max(1, n ** min(free, len(word) - 1))
    slab = max(1, min(n, _TABLE_ROW_CAP // per_start))
    parts_k, parts_w = [], []
    meter = _NodeMeter(budget)
    for lo in range(0, n, slab):
        sv = np.arange(lo, min(lo + slab, n), dtype=np.int64)
        ka, wa = _count_frontier(
            [word], tab, False, meter, shared_keep=list(keep), start_values=sv
        )
        if len(wa):
            parts_k.append(ka)
            parts_w.append(wa)
    if not parts_k:
        empty = np.zeros((0, len(keep)), dtype=np.int64)
        return empty, np.zeros(0, dtype=np.int64)
    return _dedupe(np.concatenate(parts_k), np.concatenate(parts_w))


def _join_two_word_star(
    words, link: LinkSpec, mask: Optional[MaskSpec], n: int, budget: int
) -> int:
    """Star count for a two-word cluster: per-word tables keyed by the
    shared letters, inner-joined."""
    shared = sorted(set(words[0]) & set(words[1]))
    tabs = []
    for word in words:
        local = {}
        canon = []
        for a in word:
            local.setdefault(a, len(local))
            canon.append(local[a])
        keep_local = sorted(local[a] for a in shared)
        ka, wa = _word_table(link, mask, n, tuple(canon), tuple(keep_local), budget)
        if len(wa) == 0:
            return 0
        # reorder columns to the global order of `shared`
        perm = [keep_local.index(local[a]) for a in shared]
        tabs.append((np.ascontiguousarray(ka[:, perm]), wa))
    (ka, wa), (kb, wb) = tabs
    n_vals = _tables(link, mask, n).n_values
    if n_vals ** len(shared) <= 30_000_000:
        # dense join: direct-address one side, gather with the other
        dense = np.zeros(n_vals ** len(shared), dtype=np.int64)
        powers = n_vals ** np.arange(len(shared) - 1, -1, -1, dtype=np.int64)
        dense[kb @ powers] = wb
        return _weighted_dot(wa, dense[ka @ powers])
    va = ka.view([("", ka.dtype)] * ka.shape[1]).ravel()
    vb = kb.view([("", kb.dtype)] * kb.shape[1]).ravel()
    # ka rows are unique but may be permuted out of sorted order
    oa, ob = np.argsort(va), np.argsort(vb)
    common, ia, ib = np.intersect1d(va[oa], vb[ob], return_indices=True)
    if len(common) == 0:
        return 0
    return _weighted_dot(wa[oa][ia], wb[ob][ib])


def _count_star(
    sentence: Sentence,
    link: LinkSpec,
    mask: Optional[MaskSpec],
    n: int,
    budget: int,
) -> int:
    """Star count factorizes over the clusters of the letter-sharing graph."""
    comps = cluster_decompose(sentence).components
    total = 1
    for comp in comps:
        idx = sorted(comp)
        words = [sentence.words[i] for i in idx]
        if len(words) == 2:
            c = _join_two_word_star(words, link, mask, n, budget)
        else:
            tab = _tables(link, mask, n)
            c = _count_frontier(words, tab, False, _NodeMeter(budget))
        if c == 0:
            return 0
        total *= c
    return total


def _count_exact_moebius(
    sentence: Sentence,
    link: LinkSpec,
    mask: Optional[MaskSpec],
    n: int,
    budget: int,
) -> int:
    """#exact(W) = #star(W) - sum over strictly coarser patterns of their
    exact counts (every star tuple has a unique coarsest-true pattern).
    Recursion goes through the count cache so coarse patterns shared by
    many sentences are counted once."""
    total = _count_cached(sentence.flat, sentence.k, link, mask, n, "star", budget)
    if total:
        for coarse in coarsenings(sentence, strict=True):
            total -= _count_cached(coarse.flat, coarse.k, link, mask, n, "exact", budget)
    return total


_EXACT_SEQUENTIAL_MAX_N = 16
_MOEBIUS_MAX_LETTERS = 9


def _count_one(
    sentence: Sentence,
    link: LinkSpec,
    mask: Optional[MaskSpec],
    n: int,
    variant: str,
    budget: int,
) -> int:
    if variant == "star":
        return _count_star(sentence, link, mask, n, budget)
    if variant == "exact":
        if n > _EXACT_SEQUENTIAL_MAX_N and sentence.n_letters <= _MOEBIUS_MAX_LETTERS:
            return _count_exact_moebius(sentence, link, mask, n, budget)
        tab = _tables(link, mask, n)
        return _count_frontier(sentence.words, tab, True, _NodeMeter(budget))
    raise ValueError(f"unknown variant {variant!r}")


@functools.lru_cache(maxsize=200_000)
def _count_cached(flat, k, link, mask, n, variant, budget):
    return _count_one(Sentence.from_flat(flat, k), link, mask, n, variant, budget)


def count_circuits(
    link: LinkSpec,
    mask: MaskSpec,
    sentence: Sentence,
    n: int,
    variant: str = "star",
    masked: bool = True,
    budget: int = DEFAULT_NODE_BUDGET,
) -> CircuitCountRecord:
    """Exact cardinality of one circuit class by constrained enumeration.

    variant 'star' counts tuples whose L-matches refine the sentence;
    'exact' counts tuples whose L-match pattern equals it. ``masked``
    restricts every circuit step to the mask.
    """
    count = _count_cached(
        sentence.flat, sentence.k, link, mask if masked else None, n, variant, budget
    )
    rec = {"raw_exact": None, "raw_star": None, "masked": None, "masked_star": None}
    if masked:
        rec["masked" if variant == "exact" else "masked_star"] = count
    else:
        rec["raw_exact" if variant == "exact" else "raw_star"] = count
    p, k = sentence.p, sentence.k
    return CircuitCountRecord(
        n=n, p=p, k=k, normalized=_normalize(count, n, p, k), **rec
    )


def full_count_record(
    link: LinkSpec,
    mask: MaskSpec,
    sentence: Sentence,
    n: int,
    budget: int = DEFAULT_NODE_BUDGET,
) -> CircuitCountRecord:
    """All four counts (raw/masked x exact/star) for one sentence."""
    args = (sentence.flat, sentence.k)
    raw_star = _count_cached(*args, link, None, n, "star", budget)
    raw_exact = _count_cached(*args, link, None, n, "exact", budget)
    masked_star = _count_cached(*args, link, mask, n, "star", budget)
    masked_exact = _count_cached(*args, link, mask, n, "exact", budget)
    p, k = sentence.p, sentence.k
    return CircuitCountRecord(
        n=n,
        p=p,
        k=k,
        raw_exact=raw_exact,
        raw_star=raw_star,
        masked=masked_exact,
        masked_star=masked_star,
        normalized=_normalize(masked_star, n, p, k),
    )


def _normalize(count: int, n: int, p: int, k: int):
    """count / N^((p+1)k/2), exact when the exponent is an integer."""
    twice = (p + 1) * k
    if twice % 2 == 0:
        return Fraction(count, n ** (twice // 2))
    return float(count) / float(n) ** (twice / 2.0)


def normalized_count(record: CircuitCountRecord, variant: str = "star"):
    """Masked count of the requested variant over N^((pk+k)/2)."""
    count = record.masked_star if variant == "star" else record.masked
    if count is None:
        count = record.raw_star if variant == "star" else record.raw_exact
    if count is None:
        raise ValueError("record does not hold the requested count")
    return _normalize(count, record.n, record.p, record.k)


# -- scaling diagnostics --------------------------------------------------------

@dataclass(frozen=True)
class ScalingProfile:
    values: tuple  # (N, normalized float) pairs
    slope: float
    classification: str  # bounded | vanishing | growing


def scaling_profile(
    link: LinkSpec,
    mask: MaskSpec,
    sentence: Sentence,
    n_grid: Sequence[int],
    variant: str = "star",
    masked: bool = True,
    budget: int = DEFAULT_NODE_BUDGET,
) -> ScalingProfile:
    """Least-squares slope of log(normalized count) against log N, with the
    sign (within a +-0.1 band) deciding bounded / vanishing / growing."""
    ns = sorted(int(n) for n in n_grid)
    if len(ns) < 2:
        raise ValueError("need at least two dimensions")
    pairs = []
    for n in ns:
        rec = count_circuits(link, mask, sentence, n, variant, masked, budget)
        pairs.append((n, float(rec.normalized)))
    pos = [(n, v) for n, v in pairs if v > 0]
    if len(pos) < 2:
        return ScalingProfile(tuple(pairs), float("-inf"), "vanishing")
    logs_n = np.log([n for n, _ in pos])
    logs_v = np.log([v for _, v in pos])
    slope = float(np.polyfit(logs_n, logs_v, 1)[0])
    if slope > 0.1:
        cls = "growing"
    elif slope < -0.1:
        cls = "vanishing"
    else:
        cls = "bounded"
    return ScalingProfile(tuple(pairs), slope, cls)


# -- brute-force oracle ----------------------------------------------------------

def _canonical_pattern_rows(lm: np.ndarray) -> np.ndarray:
    """Row-wise first-occurrence labels of the L-id matrix (the induced
    partition of positions in canonical form)."""
    rows, width = lm.shape
    lab = np.zeros((rows, width), dtype=np.int64)
    nd = np.ones(rows, dtype=np.int64)  # distinct count so far (col 0 done)
    for j in range(1, width):
        unset = np.ones(rows, dtype=bool)
        for i in range(j):
            hit = unset & (lm[:, i] == lm[:, j])
            if hit.any():
                lab[hit, j] = lab[hit, i]
                unset &= ~hit
        if unset.any():
            lab[unset, j] = nd[unset]
            nd[unset] += 1
    return lab


@functools.lru_cache(maxsize=48)
def _pattern_histograms(
    link: LinkSpec, mask: Optional[MaskSpec], p: int, k: int, n: int, cap: int
):
    """Histogram of the exact L-match pattern over every k-tuple of circuits
    of length p at dimension N: pattern flat-tuple -> count. Returns the
    (unmasked, masked) pair of dicts."""
    word_count = n**p
    total = word_count**k
    if total > cap:
        raise BudgetExceededError(total, cap, "brute force tuple space")
    tab = _tables(link, mask, n)

    # per-word step L-ids and mask validity
    digits = np.arange(word_count, dtype=np.int64)
    pos = np.empty((word_count, p + 1), dtype=np.int64)
    rem = digits
    for j in range(p):
        rem, r = np.divmod(rem, n)
        pos[:, j] = r
    pos[:, p] = pos[:, 0]
    steps = np.empty((word_count, p), dtype=np.int64)
    valid = np.ones(word_count, dtype=bool)
    for j in range(p):
        steps[:, j] = tab.lid[pos[:, j], pos[:, j + 1]]
        valid &= tab.mask[pos[:, j], pos[:, j + 1]]

    base = p * k + 1
    powers = base ** np.arange(p * k, dtype=np.int64)
    hist_full: dict = {}
    hist_masked: dict = {}
    chunk = 1 << 19
    for lo in range(0, total, chunk):
        ids = np.arange(lo, min(lo + chunk, total), dtype=np.int64)
        lm = np.empty((len(ids), p * k), dtype=np.int64)
        ok = np.ones(len(ids), dtype=bool)
        rem = ids
        for u in range(k):
            rem, wid = np.divmod(rem, word_count)
            lm[:, u * p : (u + 1) * p] = steps[wid]
            ok &= valid[wid]
        lab = _canonical_pattern_rows(lm)
        keys = lab @ powers
        for target, sel in ((hist_full, slice(None)), (hist_masked, ok)):
            uk, uc = np.unique(keys[sel], return_counts=True)
            for key, cnt in zip(uk.tolist(), uc.tolist()):
                target[key] = target.get(key, 0) + cnt

    def decode(h):
        out = {}
        for key, cnt in h.items():
            flat = []
            q = key
            for _ in range(p * k):
                q, r = divmod(q, base)
                flat.append(r)
            out[tuple(flat)] = cnt
        return out

    return decode(hist_full), decode(hist_masked)


def count_circuits_bruteforce(
    link: LinkSpec,
    mask: MaskSpec,
    sentence: Sentence,
    n: int,
    variant: str = "star",
    masked: bool = True,
    cap: int = DEFAULT_BRUTEFORCE_CAP,
) -> int:
    """Ground-truth count: iterate all N^(pk) circuit tuples, classify each
    by its realized L-match pattern, and read the class off the histogram.
    The per-(p, k, link, mask, N) pass is cached, so checking many sentences
    shares one sweep."""
    p, k = sentence.p, sentence.k
    hist_full, hist_masked = _pattern_histograms(
        link, mask if masked else None, p, k, n, cap
    )
    hist = hist_masked if masked else hist_full
    if variant == "exact":
        return hist.get(sentence.flat, 0)
    if variant == "star":
        total = 0
        for coarse in coarsenings(sentence, strict=False):
            total += hist.get(coarse.flat, 0)
        return total
    raise ValueError(f"unknown variant {variant!r}")
