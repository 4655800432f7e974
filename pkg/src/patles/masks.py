"""Index-set families (masks) restricting which matrix entries are active.

A mask is a symmetric subset of [N]^2 per dimension N, optionally paired
with a limit region in [0,1]^2 that the rescaled sets converge to. Limit
regions are conjunctions of finitely many linear inequalities, which keeps
them serializable and keeps the limiting integrals polytopes.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Optional

import numpy as np

__all__ = [
    "MaskSpec",
    "MaskError",
    "LimitRegion",
    "full_mask",
    "hollow_mask",
    "band_mask",
    "antiband_mask",
    "custom_mask",
    "mod_k_mask_pairs",
    "full_square",
    "band_region",
    "antiband_region",
    "empty_region",
    "assumption_V_distance",
]


class MaskError(ValueError):
    """Invalid mask parameters or evaluation."""


@dataclass(frozen=True)
class LimitRegion:
    """Region {(x, y) in [0,1]^2 : ax*x + ay*y <= c for all rows}.

    ``empty`` short-circuits to the empty set (no inequality encodes it).
    """

    inequalities: tuple  # ((ax, ay, c) Fractions, ...)
    empty: bool = False
    name: str = ""

    def contains(self, x, y) -> bool:
        if self.empty:
            return False
        return all(ax * Fraction(x) + ay * Fraction(y) <= c for ax, ay, c in self.inequalities)

    def contains_grid(self, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
        if self.empty:
            return np.zeros(np.broadcast(xs, ys).shape, dtype=bool)
        ok = np.ones(np.broadcast(xs, ys).shape, dtype=bool)
        for ax, ay, c in self.inequalities:
            ok &= float(ax) * xs + float(ay) * ys <= float(c) + 1e-12
        return ok

    def to_config(self) -> dict:
        return {
            "empty": self.empty,
            "name": self.name,
            "inequalities": [[str(a), str(b), str(c)] for a, b, c in self.inequalities],
        }

    @staticmethod
    def from_config(cfg: dict) -> "LimitRegion":
        return LimitRegion(
            inequalities=tuple(
                (Fraction(a), Fraction(b), Fraction(c)) for a, b, c in cfg["inequalities"]
            ),
            empty=bool(cfg.get("empty", False)),
            name=cfg.get("name", ""),
        )


def full_square() -> LimitRegion:
    return LimitRegion(inequalities=(), name="full")


def empty_region() -> LimitRegion:
    return LimitRegion(inequalities=(), empty=True, name="empty")


def band_region(c) -> LimitRegion:
    """{|x - y| <= c}"""
    c = Fraction(c)
    one = Fraction(1)
    return LimitRegion(
        inequalities=((one, -one, c), (-one, one, c)), name=f"abs_diff_le({c})"
    )


def antiband_region(c) -> LimitRegion:
    """{|x + y - 1| <= c}"""
    c = Fraction(c)
    one = Fraction(1)
    return LimitRegion(
        inequalities=((one, one, 1 + c), (-one, -one, c - 1)),
        name=f"abs_antidiag_le({c})",
    )


_KINDS = ("full", "hollow", "band", "antiband", "custom")


@dataclass(frozen=True)
class MaskSpec:
    """A symmetric Delta_N family.

    Band-type bandwidths are restricted to b_N = floor(c*N) + a with
    rational c and integer a; ``custom`` masks carry an explicit symmetric
    pair table for one fixed N.
    """

    kind: str
    c: Fraction = Fraction(0)
    a: int = 0
    pairs: tuple = ()  # custom: sorted (i, j) tuples
    table_n: int = 0
    limit: Optional[LimitRegion] = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise MaskError(f"unknown mask kind {self.kind!r}")
        if self.kind in ("band", "antiband"):
            if not isinstance(self.c, Fraction):
                object.__setattr__(self, "c", Fraction(self.c))
        if self.kind == "custom":
            if self.table_n < 1:
                raise MaskError("custom mask requires a dimension")
            ps = set(self.pairs)
            for i, j in ps:
                if not (1 <= i <= self.table_n and 1 <= j <= self.table_n):
                    raise MaskError("custom mask index out of range")
                if (j, i) not in ps:
                    raise MaskError(f"custom mask not symmetric at {(i, j)}")

    def bandwidth(self, n: int) -> int:
        return int(self.c * n) + self.a  # floor for nonneg c*n

    def contains(self, i: int, j: int, n: int) -> bool:
        if not (1 <= i <= n and 1 <= j <= n):
            raise MaskError(f"index ({i}, {j}) out of range for N={n}")
        k = self.kind
        if k == "full":
            return True
        if k == "hollow":
            return i != j
        if k == "band":
            return abs(i - j) <= self.bandwidth(n)
        if k == "antiband":
            return abs(i + j - (n + 1)) <= self.bandwidth(n)
        if k == "custom":
            if n != self.table_n:
                raise MaskError(f"custom mask defined only at N={self.table_n}")
            return (i, j) in set(self.pairs)
        raise AssertionError(k)

    def matrix(self, n: int) -> np.ndarray:
        """Boolean (N, N) membership matrix, [i-1, j-1] for (i, j)."""
        return _mask_matrix_cached(self, n).copy()

    def to_config(self) -> dict:
        cfg: dict = {"kind": self.kind}
        if self.kind in ("band", "antiband"):
            cfg["c"] = str(self.c)
            cfg["a"] = self.a
        if self.kind == "custom":
            cfg["n"] = self.table_n
            cfg["pairs"] = [list(p) for p in self.pairs]
        if self.limit is not None:
            cfg["limit"] = self.limit.to_config()
        return cfg

    @staticmethod
    def from_config(cfg: dict) -> "MaskSpec":
        kind = cfg["kind"]
        limit = LimitRegion.from_config(cfg["limit"]) if "limit" in cfg else None
        if kind == "full":
            return full_mask() if limit is None else MaskSpec("full", limit=limit)
        if kind == "hollow":
            return hollow_mask() if limit is None else MaskSpec("hollow", limit=limit)
        if kind in ("band", "antiband"):
            c = Fraction(cfg.get("c", 0))
            a = int(cfg.get("a", 0))
            if limit is None:
                return band_mask(c, a) if kind == "band" else antiband_mask(c, a)
            return MaskSpec(kind, c=c, a=a, limit=limit)
        if kind == "custom":
            pairs = tuple(sorted((int(i), int(j)) for i, j in cfg["pairs"]))
            return MaskSpec("custom", pairs=pairs, table_n=int(cfg["n"]), limit=limit)
        raise MaskError(f"unknown mask kind {kind!r}")


@functools.lru_cache(maxsize=256)
def _mask_matrix_cached(mask: MaskSpec, n: int) -> np.ndarray:
    idx = np.arange(1, n + 1)
    i = idx[:, None]
    j = idx[None, :]
    k = mask.kind
    if k == "full":
        return np.ones((n, n), dtype=bool)
    if k == "hollow":
        return i != j
    if k == "band":
        return np.abs(i - j) <= mask.bandwidth(n)
    if k == "antiband":
        return np.abs(i + j - (n + 1)) <= mask.bandwidth(n)
    if k == "custom":
        if n != mask.table_n:
            raise MaskError(f"custom mask defined only at N={mask.table_n}")
        m = np.zeros((n, n), dtype=bool)
        for a, b in mask.pairs:
            m[a - 1, b - 1] = True
        return m
    raise AssertionError(k)


# -- constructors ------------------------------------------------------------

def full_mask() -> MaskSpec:
    return MaskSpec("full", limit=full_square())


def hollow_mask() -> MaskSpec:
    # the diagonal is measure zero, so the limit region is the full square
    return MaskSpec("hollow", limit=full_square())


def band_mask(c, a: int = 0) -> MaskSpec:
    c = Fraction(c)
    return MaskSpec("band", c=c, a=a, limit=band_region(c))


def antiband_mask(c, a: int = 0) -> MaskSpec:
    c = Fraction(c)
    return MaskSpec("antiband", c=c, a=a, limit=antiband_region(c))


def custom_mask(pairs: Iterable, n: int, limit: Optional[LimitRegion] = None) -> MaskSpec:
    return MaskSpec(
        "custom", pairs=tuple(sorted(tuple(p) for p in pairs)), table_n=n, limit=limit
    )


def mod_k_mask_pairs(n: int, k: int):
    """Pairs (i, j) with i != j (mod k): the zero pattern of a (k, 0)
    checkerboard ensemble, for use with custom_mask."""
    return [(i, j) for i in range(1, n + 1) for j in range(1, n + 1) if (i - j) % k]


# -- Assumption-V distance ----------------------------------------------------

def assumption_V_distance(mask: MaskSpec, n: int) -> float:
    """Uniform-measure size of the symmetric difference between Delta_N / N
    and the limit region, on the grid {1/N, ..., 1}^2."""
    if mask.limit is None:
        raise MaskError("mask has no limit region")
    m = _mask_matrix_cached(mask, n)
    xs = np.arange(1, n + 1) / n
    gx = xs[:, None] + np.zeros((1, n))
    gy = xs[None, :] + np.zeros((n, 1))
    r = mask.limit.contains_grid(gx, gy)
    return float(np.count_nonzero(m ^ r)) / (n * n)
