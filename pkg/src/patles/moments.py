"""Limit-theorem outputs assembled from theta values.

For even powers the centered trace statistic converges to N(0, sigma_p^2)
(or to 0) with

    sigma_p^2 = sum over cross pair-partitions of theta(W)
              + (kappa - 1) * sum over one-4-block partitions of theta(W),

kappa the common fourth moment of the unit-variance inputs. For odd powers
only the limiting moment sequence is produced: the k-th moment sums over
special partitions, every cluster contributing m_{|C|} * theta(cluster).
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .combinat import (
    Sentence,
    _set_partitions_min2,
    enumerate_clique_sentences,
    enumerate_P2,
    enumerate_P24,
)
from .limits import ThetaEstimate, theta
from .links import LinkSpec, row_value_bound
from .masks import MaskSpec

__all__ = [
    "MomentReport",
    "GaussianWitness",
    "WitnessFailure",
    "standard_normal_moments",
    "double_factorial",
    "sigma_p_squared",
    "theta_table",
    "wick_moments",
    "odd_moment_limits",
    "verify_gaussian_conditions",
    "witness_sigma_lower_bound",
    "WITNESS_STRATEGIES",
]


def double_factorial(m: int) -> int:
    out = 1
    while m > 1:
        out *= m
        m -= 2
    return out


def standard_normal_moments(max_r: int) -> dict:
    """m_r of N(0,1): odd zero, even (r-1)!!."""
    return {r: 0 if r % 2 else double_factorial(r - 1) for r in range(1, max_r + 1)}


@dataclass(frozen=True)
class MomentReport:
    p: int
    parity: str
    kappa: Optional[float] = None
    sigma2: Optional[float] = None
    p2_subtotal: Optional[float] = None
    p24_subtotal: Optional[float] = None
    odd_moments: Optional[dict] = None  # k -> limiting E[eta_p^k]
    input_moments: Optional[dict] = None
    provenance: dict = field(default_factory=dict)
    error: float = 0.0
    low_confidence: bool = False


# -- theta tables -----------------------------------------------------------------

def cross_count(sentence: Sentence) -> int:
    """Number of letters shared by the two words."""
    s1, s2 = sentence.word_letter_sets()
    return len(s1 & s2)


@dataclass(frozen=True)
class ThetaTable:
    """theta for every sentence of the p-th variance classes."""

    p: int
    p2: tuple  # ((sentence, c0, ThetaEstimate), ...)
    p24: tuple  # ((sentence, ThetaEstimate), ...)

    @property
    def p2_sum(self) -> float:
        return sum(e.value for _, _, e in self.p2)

    @property
    def p24_sum(self) -> float:
        return sum(e.value for _, e in self.p24)

    @property
    def total_error(self) -> float:
        return sum(e.error for _, _, e in self.p2) + sum(e.error for _, e in self.p24)

    @property
    def low_confidence(self) -> bool:
        return any(e.low_confidence for _, _, e in self.p2) or any(
            e.low_confidence for _, e in self.p24
        )


@functools.lru_cache(maxsize=64)
def theta_table(
    link: LinkSpec,
    mask: MaskSpec,
    p: int,
    theta_method: str = "auto",
    n_grid: Optional[tuple] = None,
    variant: str = "exact",
) -> ThetaTable:
    p2 = []
    for w in enumerate_P2(p, p):
        est = theta(link, mask, w, theta_method, n_grid, variant)
        p2.append((w, cross_count(w), est))
    p24 = []
    for w in enumerate_P24(p, p):
        est = theta(link, mask, w, theta_method, n_grid, variant)
        p24.append((w, est))
    return ThetaTable(p=p, p2=tuple(p2), p24=tuple(p24))


def sigma_p_squared(
    link: LinkSpec,
    mask: MaskSpec,
    p: int,
    kappa: float = 3.0,
    theta_method: str = "auto",
    n_grid: Optional[Sequence[int]] = None,
) -> MomentReport:
    """Limiting variance of the centered trace statistic for even p."""
    if p % 2:
        raise ValueError("sigma_p^2 is defined for even p")
    if kappa < 1.0:
        raise ValueError("kappa is a fourth moment of a unit-variance variable")
    table = theta_table(
        link, mask, p, theta_method, tuple(n_grid) if n_grid else None, "exact"
    )
    s2 = table.p2_sum + (kappa - 1.0) * table.p24_sum
    methods = sorted({e.method for _, _, e in table.p2} | {e.method for _, e in table.p24})
    return MomentReport(
        p=p,
        parity="even",
        kappa=kappa,
        sigma2=s2,
        p2_subtotal=table.p2_sum,
        p24_subtotal=table.p24_sum,
        provenance={"theta_methods": methods, "n_p2": len(table.p2), "n_p24": len(table.p24)},
        error=table.total_error * max(1.0, kappa - 1.0),
        low_confidence=table.low_confidence,
    )


def wick_moments(sigma2: float, k_max: int) -> dict:
    """Moments of N(0, sigma2): beta_{2k} = (2k-1)!! sigma2^k, odd zero."""
    if sigma2 < 0:
        raise ValueError("sigma2 must be nonnegative")
    return {
        k: (0.0 if k % 2 else double_factorial(k - 1) * sigma2 ** (k // 2))
        for k in range(1, k_max + 1)
    }


# -- odd-p moment limits ------------------------------------------------------------

_CLIQUE_BUDGET = 2000


@functools.lru_cache(maxsize=64)
def _cluster_theta_sum(
    link: LinkSpec,
    mask: MaskSpec,
    p: int,
    r: int,
    n_grid: Optional[tuple],
) -> tuple:
    """Sum of theta over all admissible r-word cluster sentences."""
    if r == 2:
        table = theta_table(link, mask, p, "auto", n_grid, "exact")
        return (table.p2_sum + table.p24_sum, table.total_error, table.low_confidence)
    total, err, low = 0.0, 0.0, False
    count = 0
    for w in enumerate_clique_sentences(p, r):
        count += 1
        if count > _CLIQUE_BUDGET:
            raise ValueError(f"clique enumeration for r={r} exceeds budget")
        est = theta(link, mask, w, "extrapolation", n_grid, "exact")
        total += est.value
        err += est.error
        low = low or est.low_confidence
    return (total, err, low)


def odd_moment_limits(
    link: LinkSpec,
    mask: MaskSpec,
    p: int,
    k_max: int,
    input_moments: Optional[dict] = None,
    n_grid: Optional[Sequence[int]] = None,
) -> MomentReport:
    """Limiting E[eta_p^k] for odd p and k <= k_max.

    Convergence in distribution is not claimed: the moment sequence may be
    M-indeterminate (it is for the plain Toeplitz link).
    """
    if p % 2 == 0:
        raise ValueError("odd_moment_limits is defined for odd p")
    m = dict(input_moments) if input_moments else standard_normal_moments(p * k_max + 1)
    m[1], m[2] = 0, 1  # centering and unit variance are structural
    grid = tuple(n_grid) if n_grid else None
    moments = {0: 1.0, 1: 0.0}
    err_total, low = 0.0, False
    for k in range(2, k_max + 1):
        total = 0.0
        for part in _set_partitions_min2(list(range(k)), allow_large=True):
            term = 1.0
            for block in part:
                r = len(block)
                mult = m.get(r, 0)
                if mult == 0:
                    term = 0.0
                    break
                t_sum, t_err, t_low = _cluster_theta_sum(link, mask, p, r, grid)
                err_total += t_err
                low = low or t_low
                term *= mult * t_sum
            total += term
        moments[k] = total
    return MomentReport(
        p=p,
        parity="odd",
        odd_moments=moments,
        input_moments=m,
        provenance={"theta_method": "extrapolation/auto"},
        error=err_total,
        low_confidence=low,
    )


# -- gaussianity witnesses ------------------------------------------------------------

class WitnessFailure(Exception):
    def __init__(self, n: int, kind: str, detail: str):
        super().__init__(f"witness floor violated at N={n} ({kind}): {detail}")
        self.n = n
        self.kind = kind
        self.detail = detail


@dataclass(frozen=True)
class GaussianWitness:
    strategy: str
    z_description: str
    s_description: str
    c1: float
    c2: float
    verified_at: tuple  # ((N, c1_N, c2_N), ...)


def _toeplitz_half(link: LinkSpec, mask: MaskSpec, n: int):
    idx = np.arange(1, n + 1)
    s = np.abs(idx[:, None] - idx[None, :]) <= n // 2
    return s, f"band |i-j| <= {n // 2}", "values 0..floor(N/2)"


def _hankel_band(link: LinkSpec, mask: MaskSpec, n: int):
    idx = np.arange(1, n + 1)
    tot = idx[:, None] + idx[None, :]
    s = (tot >= n // 2 + 2) & (tot <= (3 * n) // 2 + 2)
    return s, "antidiagonal band floor(N/2)+2 <= i+j <= floor(3N/2)+2", "values in the band"


def _full_image(link: LinkSpec, mask: MaskSpec, n: int):
    return mask.matrix(n), "all of Delta_N", "full image of L_N"


WITNESS_STRATEGIES: dict = {
    "toeplitz_half": _toeplitz_half,
    "hankel_band": _hankel_band,
    "full_image": _full_image,
}


def verify_gaussian_conditions(
    link: LinkSpec,
    mask: MaskSpec,
    witness_builder: str = "full_image",
    n_grid: Sequence[int] = (64, 128, 256),
    floor: float = 1e-9,
    custom_builder: Optional[Callable] = None,
) -> GaussianWitness:
    """Materialize the witness sets at each N and certify the two counting
    conditions: every chosen value is hit >= c1*N times inside S_n, and
    every touched row meets S_n in >= c2*N entries.

    Only finitely many N are certified; extrapolating the certificate to
    all n is the caller's judgment.
    """
    if witness_builder == "custom":
        if custom_builder is None:
            raise ValueError("custom witness requires a builder callable")
        builder = custom_builder
    else:
        builder = WITNESS_STRATEGIES[witness_builder]
    per_n = []
    for n in sorted(int(x) for x in n_grid):
        s_set, s_desc, z_desc = builder(link, mask, n)
        s_set = s_set & mask.matrix(n)
        if not s_set.any():
            raise WitnessFailure(n, "row", "witness set is empty")
        grid = link.eval_grid(n).reshape(n * n, -1)
        _, inv = np.unique(grid, axis=0, return_inverse=True)
        ids = inv.reshape(n, n)
        sel = ids[s_set]
        counts = np.bincount(sel)
        z_counts = counts[counts > 0]  # Z_n = values realized on S_n
        c1_n = float(z_counts.min()) / n
        row_counts = s_set.sum(axis=1)
        touched = row_counts > 0
        c2_n = float(row_counts[touched].min()) / n
        if c1_n < floor:
            r = int(np.argmin(np.where(counts > 0, counts, np.iinfo(np.int64).max)))
            raise WitnessFailure(n, "value", f"value id {r} hit only {counts[r]} times")
        if c2_n < floor:
            i = int(np.argmin(np.where(touched, row_counts, np.iinfo(np.int64).max)))
            raise WitnessFailure(n, "row", f"row {i + 1} meets S_n in {row_counts[i]} entries")
        per_n.append((n, c1_n, c2_n))
    return GaussianWitness(
        strategy=witness_builder,
        z_description=z_desc,
        s_description=s_desc,
        c1=min(c1 for _, c1, _ in per_n),
        c2=min(c2 for _, _, c2 in per_n),
        verified_at=tuple(per_n),
    )


def witness_sigma_lower_bound(witness: GaussianWitness, p: int, link: LinkSpec, n: int = 64) -> float:
    """c1 * c2^p / B: the constructive lower bound on sigma_p^2 that a
    successful witness certifies."""
    b = row_value_bound(link, n)
    return witness.c1 * witness.c2**p / b
