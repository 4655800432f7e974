"""Words, sentences and the partition classes driving the moment limits.

A word of length p encodes a set partition of [p] in canonical letter form
(letter m first appears only after 1..m-1 have appeared). A sentence is k
words sharing one letter space, encoding a partition of [k] x [p]. Letters
are 0-based integers internally; strings use 'a', 'b', ...
"""

from __future__ import annotations

import itertools
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Iterator, Optional, Sequence

__all__ = [
    "Word",
    "Sentence",
    "ClusterInfo",
    "CombinatError",
    "canonicalize",
    "enumerate_words",
    "enumerate_sentences",
    "enumerate_P2",
    "enumerate_P24",
    "pair_partitions",
    "cluster_decompose",
    "classify_sentence",
    "is_P2_pair",
    "is_P24_pair",
    "is_clique_sentence",
    "generating_vertices",
    "enumerate_special_partitions",
    "enumerate_clique_sentences",
    "coarsenings",
    "merge_letters",
]

_ABC = "abcdefghijklmnopqrstuvwxyz"


class CombinatError(ValueError):
    pass


def _letters_to_str(letters: Sequence[int]) -> str:
    return "".join(_ABC[x] if x < 26 else f"<{x}>" for x in letters)


def canonicalize(flat: Sequence[int]) -> tuple:
    """Relabel so letters appear in first-occurrence order 0, 1, 2, ..."""
    seen: dict = {}
    out = []
    for x in flat:
        if x not in seen:
            seen[x] = len(seen)
        out.append(seen[x])
    return tuple(out)


def _is_canonical(flat: Sequence[int]) -> bool:
    nxt = 0
    for x in flat:
        if x == nxt:
            nxt += 1
        elif x > nxt:
            return False
    return True


@dataclass(frozen=True)
class Word:
    """A canonical word; equivalently a set partition of [p]."""

    letters: tuple

    def __post_init__(self):
        if len(self.letters) < 1:
            raise CombinatError("words must have length >= 1")
        if not _is_canonical(self.letters):
            raise CombinatError(f"word {self.letters} is not canonical")

    @property
    def p(self) -> int:
        return len(self.letters)

    @property
    def n_letters(self) -> int:
        return max(self.letters) + 1

    @staticmethod
    def from_string(s: str) -> "Word":
        return Word(tuple(_ABC.index(ch) for ch in s))

    def __str__(self) -> str:
        return _letters_to_str(self.letters)


@dataclass(frozen=True)
class Sentence:
    """k canonical words over a shared letter space: a partition of [k] x [p]."""

    words: tuple  # tuple of tuples of letter ids

    def __post_init__(self):
        if not self.words:
            raise CombinatError("sentences need at least one word")
        p = len(self.words[0])
        if any(len(w) != p for w in self.words):
            raise CombinatError("all words must have equal length")
        if not _is_canonical(self.flat):
            raise CombinatError(f"sentence {self.words} is not canonical")

    @property
    def p(self) -> int:
        return len(self.words[0])

    @property
    def k(self) -> int:
        return len(self.words)

    @property
    def flat(self) -> tuple:
        return tuple(x for w in self.words for x in w)

    @property
    def n_letters(self) -> int:
        return max(self.flat) + 1

    def multiset(self) -> Counter:
        """S_W: letter -> total occurrence count."""
        return Counter(self.flat)

    def word_letter_sets(self) -> list:
        return [set(w) for w in self.words]

    def subsentence(self, indices: Iterable[int]) -> "Sentence":
        ws = [self.words[i] for i in sorted(indices)]
        return Sentence.from_flat(tuple(x for w in ws for x in w), len(ws))

    @staticmethod
    def from_flat(flat: Sequence[int], k: int) -> "Sentence":
        flat = canonicalize(flat)
        p, rem = divmod(len(flat), k)
        if rem:
            raise CombinatError("flat length not divisible by k")
        return Sentence(tuple(flat[i * p : (i + 1) * p] for i in range(k)))

    @staticmethod
    def from_words(words: Sequence[Word]) -> "Sentence":
        return Sentence.from_flat([x for w in words for x in w.letters], len(words))

    @staticmethod
    def from_string(s: str) -> "Sentence":
        parts = [w.strip() for w in s.replace("(", "").replace(")", "").split(",")]
        return Sentence.from_flat([_ABC.index(ch) for w in parts for ch in w], len(parts))

    def __str__(self) -> str:
        return "(" + ",".join(_letters_to_str(w) for w in self.words) + ")"


# -- enumeration ---------------------------------------------------------------

def _rgs(n: int) -> Iterator[tuple]:
    """Restricted growth strings of length n (canonical set partitions)."""
    a = [0] * n
    b = [1] * n  # b[i] = 1 + max(a[:i]); b[0] unused sentinel
    while True:
        yield tuple(a)
        # rightmost position that can still grow
        i = n - 1
        while i > 0 and a[i] == b[i]:
            i -= 1
        if i == 0:
            return
        a[i] += 1
        m = max(b[i], a[i] + 1)
        for j in range(i + 1, n):
            a[j] = 0
            b[j] = m


def enumerate_words(p: int) -> Iterator[Word]:
    """All canonical words of length p; Bell(p) of them."""
    if p < 1:
        raise CombinatError("p must be >= 1")
    for rgs in _rgs(p):
        yield Word(rgs)


def enumerate_sentences(p: int, k: int) -> Iterator[Sentence]:
    """All canonical sentences in W_{p,k}; Bell(p*k) of them."""
    if p < 1 or k < 1:
        raise CombinatError("p and k must be >= 1")
    for rgs in _rgs(p * k):
        yield Sentence(tuple(rgs[i * p : (i + 1) * p] for i in range(k)))


def pair_partitions(m: int) -> Iterator[tuple]:
    """Pair partitions of range(m) as tuples of 2-tuples; (m-1)!! of them."""
    yield from pair_partitions_of(range(m))


def _pairs_to_sentence(pairs: Iterable, p: int, q: int) -> Sentence:
    flat = [0] * (p + q)
    for letter, (x, y) in enumerate(pairs):
        flat[x] = letter
        flat[y] = letter
    flat = canonicalize(flat)
    return Sentence((tuple(flat[:p]), tuple(flat[p:])))


def enumerate_P2(p: int, q: int) -> Iterator[Sentence]:
    """Pair partitions of [p+q] with at least one pair crossing the p|q
    boundary, as 2-word sentences. Empty when p+q is odd."""
    if (p + q) % 2:
        return
    for prs in pair_partitions(p + q):
        if any(x < p <= y for x, y in prs):
            yield _pairs_to_sentence(prs, p, q)


def enumerate_P24(p: int, q: int) -> Iterator[Sentence]:
    """Partitions of [p+q] with one 4-block taking two elements from each
    side and all remaining blocks side-internal pairs. Empty unless p and q
    are both even."""
    if p % 2 or q % 2:
        return
    left = list(range(p))
    right = list(range(p, p + q))
    for l4 in itertools.combinations(left, 2):
        for r4 in itertools.combinations(right, 2):
            rest_l = [x for x in left if x not in l4]
            rest_r = [x for x in right if x not in r4]
            for pl in pair_partitions_of(rest_l):
                for pr in pair_partitions_of(rest_r):
                    blocks = [l4 + r4] + list(pl) + list(pr)
                    flat = [0] * (p + q)
                    for letter, blk in enumerate(blocks):
                        for pos in blk:
                            flat[pos] = letter
                    yield Sentence.from_flat(flat, 2)


def pair_partitions_of(items: Sequence[int]) -> Iterator[tuple]:
    items = list(items)
    if len(items) % 2:
        return
    if not items:
        yield ()
        return
    first = items[0]
    for idx in range(1, len(items)):
        mate = items[idx]
        sub = items[1:idx] + items[idx + 1 :]
        for tail in pair_partitions_of(sub):
            yield ((first, mate),) + tail


# -- cluster structure ---------------------------------------------------------

@dataclass(frozen=True)
class ClusterInfo:
    """Connected components of the letter-sharing graph on words, with the
    per-component classification used by the moment formulas."""

    components: tuple  # tuple of frozensets of 0-based word indices
    kinds: tuple  # per component: 'pair_P2' | 'pair_P24' | 'clique' | 'other'
    is_special_partition: bool


def cluster_decompose(sentence: Sentence) -> ClusterInfo:
    sets = sentence.word_letter_sets()
    k = sentence.k
    parent = list(range(k))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for i in range(k):
        for j in range(i + 1, k):
            if sets[i] & sets[j]:
                ri, rj = find(i), find(j)
                if ri != rj:
                    parent[ri] = rj
    groups: dict = {}
    for i in range(k):
        groups.setdefault(find(i), []).append(i)
    comps = tuple(
        sorted((frozenset(g) for g in groups.values()), key=lambda s: min(s))
    )
    return ClusterInfo(components=comps, kinds=(), is_special_partition=False)


def is_P2_pair(sub: Sentence) -> bool:
    """Two-word sentence in P2(p, p): a pair partition with a cross pair."""
    if sub.k != 2:
        return False
    counts = sub.multiset()
    if any(c != 2 for c in counts.values()):
        return False
    s1, s2 = sub.word_letter_sets()
    return bool(s1 & s2)


def is_P24_pair(sub: Sentence) -> bool:
    """Two-word sentence in P2,4(p, p): one letter four times split 2+2
    across the words, every other letter twice within a single word."""
    if sub.k != 2:
        return False
    counts = sub.multiset()
    fours = [a for a, c in counts.items() if c == 4]
    if len(fours) != 1 or any(c not in (2, 4) for c in counts.values()):
        return False
    four = fours[0]
    c1 = Counter(sub.words[0])
    c2 = Counter(sub.words[1])
    if c1[four] != 2 or c2[four] != 2:
        return False
    for a, c in counts.items():
        if a == four:
            continue
        if c1[a] not in (0, 2):  # both occurrences on one side
            return False
    return True


def is_clique_sentence(sub: Sentence) -> bool:
    """k >= 3 words pairwise sharing exactly one common letter, the common
    letter appearing exactly k times and every other letter exactly twice."""
    if sub.k < 3:
        return False
    sets = sub.word_letter_sets()
    inter = set.intersection(*sets)
    if len(inter) != 1:
        return False
    (common,) = inter
    for i in range(sub.k):
        for j in range(i + 1, sub.k):
            if sets[i] & sets[j] != {common}:
                return False
    counts = sub.multiset()
    if counts[common] != sub.k:
        return False
    return all(c == 2 for a, c in counts.items() if a != common)


def classify_sentence(sentence: Sentence) -> ClusterInfo:
    comps = cluster_decompose(sentence).components
    kinds = []
    special = True
    for comp in comps:
        if len(comp) == 1:
            kinds.append("other")
            special = False
            continue
        sub = sentence.subsentence(comp)
        if len(comp) == 2:
            if is_P2_pair(sub):
                kinds.append("pair_P2")
            elif is_P24_pair(sub):
                kinds.append("pair_P24")
            else:
                kinds.append("other")
                special = False
        else:
            if is_clique_sentence(sub):
                kinds.append("clique")
            else:
                kinds.append("other")
                special = False
    return ClusterInfo(components=comps, kinds=tuple(kinds), is_special_partition=special)


# -- generating vertices ---------------------------------------------------------

def generating_vertices(
    sentence: Sentence,
    suppressed: frozenset = frozenset(),
    renumbering: Optional[Sequence[int]] = None,
):
    """Vertices (u, j), u in 1..k, j in 0..p, that are free during
    constrained circuit assignment.

    (u, 0) is always generating; (u, j) is generating when its letter is not
    suppressed and has not occurred at an earlier vertex. Order is
    dictionary order, optionally composed with a renumbering (a permutation
    of word indices 1..k).

    Returns (frozenset of vertices, count F).
    """
    k, p = sentence.k, sentence.p
    if renumbering is None:
        order = list(range(k))
    else:
        if sorted(renumbering) != list(range(1, k + 1)):
            raise CombinatError("renumbering must be a permutation of 1..k")
        order = [u - 1 for u in renumbering]
    gen = set()
    seen = set(suppressed)
    for u in order:
        gen.add((u + 1, 0))
        for j in range(1, p + 1):
            a = sentence.words[u][j - 1]
            if a not in seen:
                gen.add((u + 1, j))
                seen.add(a)
    return frozenset(gen), len(gen)


# -- special partitions ----------------------------------------------------------

def _set_partitions_min2(items: Sequence[int], allow_large: bool) -> Iterator[tuple]:
    """Set partitions with every block of size >= 2; blocks of size >= 3
    only when allow_large."""
    items = list(items)
    if not items:
        yield ()
        return
    first = items[0]
    rest = items[1:]
    max_extra = len(rest) if allow_large else 1
    for r in range(1, max_extra + 1):
        for mates in itertools.combinations(rest, r):
            block = (first,) + mates
            remaining = [x for x in rest if x not in mates]
            for tail in _set_partitions_min2(remaining, allow_large):
                yield (block,) + tail


def enumerate_clique_sentences(p: int, k: int) -> Iterator[Sentence]:
    """All clique sentences on k >= 3 words of length p (possible only for
    odd p: one common-letter slot plus internally paired slots per word)."""
    if k < 3 or p % 2 == 0:
        return
    word_shapes = []
    for cpos in range(p):
        rest = [j for j in range(p) if j != cpos]
        for pairing in pair_partitions_of(rest):
            word_shapes.append((cpos, pairing))
    for combo in itertools.product(word_shapes, repeat=k):
        flat = []
        nxt = 1
        for cpos, pairing in combo:
            w = [0] * p
            w[cpos] = 0  # common letter id 0
            for x, y in pairing:
                w[x] = w[y] = nxt
                nxt += 1
            flat.extend(w)
        yield Sentence.from_flat(flat, k)


def enumerate_special_partitions(p: int, k: int, budget: int = 24) -> Iterator[Sentence]:
    """The sentences surviving in the k-th moment limit: every component of
    the cluster graph is a P2/P2,4 pair (size 2) or a clique sentence
    (size >= 3, odd p only)."""
    if p * k > budget:
        raise CombinatError(f"p*k = {p * k} exceeds enumeration budget {budget}")
    if k < 2:
        return
    pair_pool = None
    clique_pool: dict = {}
    for part in _set_partitions_min2(list(range(k)), allow_large=(p % 2 == 1)):
        choice_lists = []
        feasible = True
        for block in part:
            if len(block) == 2:
                if pair_pool is None:
                    pair_pool = list(enumerate_P2(p, p)) + list(enumerate_P24(p, p))
                pool = pair_pool
            else:
                r = len(block)
                if r not in clique_pool:
                    clique_pool[r] = list(enumerate_clique_sentences(p, r))
                pool = clique_pool[r]
            if not pool:
                feasible = False
                break
            choice_lists.append(pool)
        if not feasible:
            continue
        for choices in itertools.product(*choice_lists):
            words = [None] * k
            offset = 0
            for block, sub in zip(part, choices):
                shift = offset
                for widx, w in zip(block, sub.words):
                    words[widx] = tuple(x + shift for x in w)
                offset += sub.n_letters
            yield Sentence.from_flat([x for w in words for x in w], k)


# -- coarsenings (letter merges) -------------------------------------------------

def merge_letters(sentence: Sentence, groups: Sequence[Sequence[int]]) -> Sentence:
    """Coarser sentence obtained by identifying each group of letters."""
    relabel = {}
    for g in groups:
        rep = min(g)
        for a in g:
            relabel[a] = rep
    flat = [relabel.get(x, x) for x in sentence.flat]
    return Sentence.from_flat(flat, sentence.k)


def coarsenings(sentence: Sentence, strict: bool = True) -> Iterator[Sentence]:
    """All sentences obtained by merging letters (set partitions of the
    letter space); each coarser partition of positions exactly once."""
    m = sentence.n_letters
    for part in _set_partitions(list(range(m))):
        if strict and all(len(b) == 1 for b in part):
            continue
        yield merge_letters(sentence, part)


def _set_partitions(items: Sequence[int]) -> Iterator[tuple]:
    items = list(items)
    if not items:
        yield ()
        return
    first, rest = items[0], items[1:]
    for sub in _set_partitions(rest):
        yield ((first,),) + sub
        for i, block in enumerate(sub):
            yield sub[:i] + ((first,) + block,) + sub[i + 1 :]
