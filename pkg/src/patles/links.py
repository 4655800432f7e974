"""Symmetric link function families.

A link function maps an index pair (i, j) of an N x N matrix to a point in
Z^d; the matrix entry at (i, j) is the input variate indexed by that point.
All families here are symmetric: eval(i, j, N) == eval(j, i, N).
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

__all__ = [
    "LinkSpec",
    "LinkError",
    "BoundReport",
    "wigner",
    "toeplitz_abs",
    "toeplitz_signed",
    "hankel",
    "reverse_circulant",
    "symmetric_circulant",
    "palindromic_toeplitz",
    "palindromic_hankel",
    "generalized_toeplitz",
    "generalized_hankel",
    "compose_block",
    "checkerboard",
    "custom_link",
    "verify_assumption_B",
]


class LinkError(ValueError):
    """Invalid link parameters or out-of-range evaluation."""


_SIMPLE_KINDS = (
    "wigner",
    "toeplitz_abs",
    "toeplitz_signed",
    "hankel",
    "reverse_circulant",
    "symmetric_circulant",
    "palindromic_toeplitz",
    "palindromic_hankel",
)
_PARAM_KINDS = ("generalized_toeplitz", "generalized_hankel")
_KINDS = _SIMPLE_KINDS + _PARAM_KINDS + ("block", "checkerboard", "custom")


@dataclass(frozen=True)
class LinkSpec:
    """An evaluable symmetric link function family L_N : [N]^2 -> Z^d.

    ``block`` composes an outer and an inner spec on indices written as
    x = (r-1)*m + s with r the outer (block) index and s in [m] the inner
    one; its value is the concatenation of the factor values.
    ``custom`` carries an explicit table for one fixed dimension, used for
    constructions with no closed-form link (e.g. swirls of permutations).
    """

    kind: str
    alpha: int = 0
    beta: int = 0
    inner_dim: int = 0
    outer: Optional["LinkSpec"] = None
    inner: Optional["LinkSpec"] = None
    mod_k: int = 0
    base: Optional["LinkSpec"] = None
    table: tuple = field(default=())  # ((i, j, value-tuple), ...) for custom
    table_n: int = 0

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise LinkError(f"unknown link kind {self.kind!r}")
        if self.kind in _PARAM_KINDS and (self.alpha < 1 or self.beta < 1):
            raise LinkError(f"{self.kind} requires positive alpha, beta")
        if self.kind == "block":
            if self.outer is None or self.inner is None:
                raise LinkError("block link requires outer and inner specs")
            if self.inner_dim < 1:
                raise LinkError("block inner dimension must be >= 1")
        if self.kind == "checkerboard":
            if self.base is None or self.mod_k < 1:
                raise LinkError("checkerboard requires base spec and k >= 1")
        if self.kind == "custom":
            if not self.table or self.table_n < 1:
                raise LinkError("custom link requires a table and dimension")
            vals = {}
            for i, j, v in self.table:
                if not (1 <= i <= self.table_n and 1 <= j <= self.table_n):
                    raise LinkError("custom table index out of range")
                vals[(i, j)] = tuple(v)
            if len(vals) != self.table_n**2:
                raise LinkError("custom table must cover all index pairs")
            for (i, j), v in vals.items():
                if vals[(j, i)] != v:
                    raise LinkError(f"custom table not symmetric at {(i, j)}")

    @property
    def codomain_dim(self) -> int:
        if self.kind == "wigner":
            return 2
        if self.kind == "block":
            return self.outer.codomain_dim + self.inner.codomain_dim
        if self.kind == "checkerboard":
            return self.base.codomain_dim
        if self.kind == "custom":
            return len(self.table[0][2])
        return 1

    def eval(self, i: int, j: int, n: int) -> tuple:
        """L_n(i, j) as an integer tuple in Z^d."""
        if not (1 <= i <= n and 1 <= j <= n):
            raise LinkError(f"index ({i}, {j}) out of range for N={n}")
        k = self.kind
        if k == "wigner":
            return (min(i, j), max(i, j))
        if k == "toeplitz_abs":
            return (abs(i - j),)
        if k == "toeplitz_signed":
            return (min(i, j) - max(i, j),)
        if k == "hankel":
            return (i + j,)
        if k == "reverse_circulant":
            return ((i + j - 2) % n,)
        if k == "symmetric_circulant":
            return (min(abs(i - j), n - abs(i - j)),)
        if k == "palindromic_toeplitz":
            t = abs(i - j)
            return (min(t, (n - 1) - t),)
        if k == "palindromic_hankel":
            s = i + j
            return (min(s, n + 3 - s) if s <= n + 1 else s,)
        if k == "generalized_toeplitz":
            a, b = self.alpha, self.beta
            return (a * i - b * j if i <= j else -b * i + a * j,)
        if k == "generalized_hankel":
            a, b = self.alpha, self.beta
            return (a * i + b * j if i <= j else b * i + a * j,)
        if k == "block":
            m = self.inner_dim
            if n % m:
                raise LinkError(f"block link needs m | N, got N={n}, m={m}")
            r1, s1 = divmod(i - 1, m)
            r2, s2 = divmod(j - 1, m)
            return self.outer.eval(r1 + 1, r2 + 1, n // m) + self.inner.eval(
                s1 + 1, s2 + 1, m
            )
        if k == "checkerboard":
            return self.base.eval(i, j, n)
        if k == "custom":
            if n != self.table_n:
                raise LinkError(f"custom link defined only at N={self.table_n}")
            return dict(((a, b), tuple(v)) for a, b, v in self.table)[(i, j)]
        raise AssertionError(k)

    def eval_grid(self, n: int) -> np.ndarray:
        """All values at once: int64 array of shape (N, N, d), 1-based indices
        at [i-1, j-1]."""
        return _eval_grid_cached(self, n).copy()

    # -- config round trip -------------------------------------------------

    def to_config(self) -> dict:
        cfg: dict = {"kind": self.kind, "params": {}}
        if self.kind in _PARAM_KINDS:
            cfg["params"] = {"alpha": self.alpha, "beta": self.beta}
        elif self.kind == "block":
            cfg["params"] = {
                "outer": self.outer.to_config(),
                "inner": self.inner.to_config(),
                "inner_dim": self.inner_dim,
            }
        elif self.kind == "checkerboard":
            cfg["params"] = {"base": self.base.to_config(), "k": self.mod_k}
        elif self.kind == "custom":
            cfg["params"] = {
                "n": self.table_n,
                "table": [[i, j, list(v)] for i, j, v in self.table],
            }
        return cfg

    @staticmethod
    def from_config(cfg: dict) -> "LinkSpec":
        kind = cfg["kind"]
        params = cfg.get("params", {}) or {}
        if kind in _SIMPLE_KINDS:
            return LinkSpec(kind)
        if kind in _PARAM_KINDS:
            return LinkSpec(kind, alpha=int(params["alpha"]), beta=int(params["beta"]))
        if kind == "block":
            return compose_block(
                LinkSpec.from_config(params["outer"]),
                LinkSpec.from_config(params["inner"]),
                int(params["inner_dim"]),
            )
        if kind == "checkerboard":
            return checkerboard(LinkSpec.from_config(params["base"]), int(params["k"]))
        if kind == "custom":
            table = tuple(
                (int(i), int(j), tuple(int(x) for x in v)) for i, j, v in params["table"]
            )
            return LinkSpec("custom", table=table, table_n=int(params["n"]))
        raise LinkError(f"unknown link kind {kind!r}")


@functools.lru_cache(maxsize=256)
def _eval_grid_cached(link: LinkSpec, n: int) -> np.ndarray:
    k = link.kind
    idx = np.arange(1, n + 1, dtype=np.int64)
    i = idx[:, None]
    j = idx[None, :]
    if k == "wigner":
        return np.stack([np.minimum(i, j), np.maximum(i, j)], axis=-1)
    if k == "toeplitz_abs":
        vals = np.abs(i - j)
    elif k == "toeplitz_signed":
        vals = -np.abs(i - j)
    elif k == "hankel":
        vals = i + j
    elif k == "reverse_circulant":
        vals = (i + j - 2) % n
    elif k == "symmetric_circulant":
        t = np.abs(i - j)
        vals = np.minimum(t, n - t)
    elif k == "palindromic_toeplitz":
        t = np.abs(i - j)
        vals = np.minimum(t, (n - 1) - t)
    elif k == "palindromic_hankel":
        s = i + j
        vals = np.where(s <= n + 1, np.minimum(s, n + 3 - s), s)
    elif k == "generalized_toeplitz":
        a, b = link.alpha, link.beta
        vals = np.where(i <= j, a * i - b * j, -b * i + a * j)
    elif k == "generalized_hankel":
        a, b = link.alpha, link.beta
        vals = np.where(i <= j, a * i + b * j, b * i + a * j)
    elif k == "block":
        m = link.inner_dim
        if n % m:
            raise LinkError(f"block link needs m | N, got N={n}, m={m}")
        d = n // m
        og = _eval_grid_cached(link.outer, d)
        ig = _eval_grid_cached(link.inner, m)
        r = (idx - 1) // m
        s = (idx - 1) % m
        out = og[r[:, None], r[None, :]]
        inn = ig[s[:, None], s[None, :]]
        return np.concatenate([out, inn], axis=-1)
    elif k == "checkerboard":
        return _eval_grid_cached(link.base, n)
    elif k == "custom":
        if n != link.table_n:
            raise LinkError(f"custom link defined only at N={link.table_n}")
        d = link.codomain_dim
        arr = np.zeros((n, n, d), dtype=np.int64)
        for a, b, v in link.table:
            arr[a - 1, b - 1] = v
        return arr
    else:
        raise AssertionError(k)
    return np.ascontiguousarray(vals.astype(np.int64)[:, :, None])


# -- constructors ------------------------------------------------------------

def wigner() -> LinkSpec:
    return LinkSpec("wigner")


def toeplitz_abs() -> LinkSpec:
    return LinkSpec("toeplitz_abs")


def toeplitz_signed() -> LinkSpec:
    return LinkSpec("toeplitz_signed")


def hankel() -> LinkSpec:
    return LinkSpec("hankel")


def reverse_circulant() -> LinkSpec:
    return LinkSpec("reverse_circulant")


def symmetric_circulant() -> LinkSpec:
    return LinkSpec("symmetric_circulant")


def palindromic_toeplitz() -> LinkSpec:
    return LinkSpec("palindromic_toeplitz")


def palindromic_hankel() -> LinkSpec:
    return LinkSpec("palindromic_hankel")


def generalized_toeplitz(alpha: int, beta: int) -> LinkSpec:
    return LinkSpec("generalized_toeplitz", alpha=alpha, beta=beta)


def generalized_hankel(alpha: int, beta: int) -> LinkSpec:
    return LinkSpec("generalized_hankel", alpha=alpha, beta=beta)


def compose_block(outer: LinkSpec, inner: LinkSpec, inner_dim: int) -> LinkSpec:
    """Block composition: outer spec over blocks of size inner_dim."""
    return LinkSpec("block", outer=outer, inner=inner, inner_dim=inner_dim)


def checkerboard(base: LinkSpec, k: int) -> LinkSpec:
    """Checkerboard variant of ``base``: same L-values; the i = j (mod k)
    entries are zeroed by the companion mask, not by the link."""
    return LinkSpec("checkerboard", base=base, mod_k=k)


def custom_link(values: dict, n: int) -> LinkSpec:
    """Explicit link table {(i, j): tuple}, symmetry checked at construction."""
    table = tuple(
        sorted((i, j, tuple(int(x) for x in v)) for (i, j), v in values.items())
    )
    return LinkSpec("custom", table=table, table_n=n)


# -- Assumption-B verification ------------------------------------------------

@dataclass(frozen=True)
class BoundReport:
    """Row-wise L-value multiplicity bound observed over a dimension grid."""

    bounded: bool
    B: Optional[int]
    per_n: tuple  # ((N, max multiplicity), ...)


def row_value_bound(link: LinkSpec, n: int) -> int:
    """max over rows k and values t of #{l : L_n(k, l) = t}."""
    grid = _eval_grid_cached(link, n)
    flat = grid.reshape(n * n, -1)
    _, inv = np.unique(flat, axis=0, return_inverse=True)
    ids = inv.reshape(n, n)
    best = 0
    for row in ids:
        counts = np.bincount(row)
        best = max(best, int(counts.max()))
    return best


def verify_assumption_B(link: LinkSpec, n_grid: Iterable[int]) -> BoundReport:
    """Check the uniform row-multiplicity bound over a grid of dimensions.

    Returns the observed per-N maxima; bounded=True (with B = the common
    value) when the maximum is flat over the tail of the grid.
    """
    ns = sorted(set(int(n) for n in n_grid))
    if not ns:
        raise LinkError("empty dimension grid")
    per_n = tuple((n, row_value_bound(link, n)) for n in ns)
    vals = [b for _, b in per_n]
    tail_flat = len(vals) == 1 or vals[-1] == vals[-2]
    if tail_flat and max(vals) == vals[-1]:
        return BoundReport(bounded=True, B=vals[-1], per_n=per_n)
    return BoundReport(bounded=False, B=None, per_n=per_n)
