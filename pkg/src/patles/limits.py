"""Limits theta(W) of normalized circuit counts, by two independent routes.

Route one rebuilds the limit as an integral: matching constraints between
circuit steps become linear equations in the rescaled vertex values
v = pi/N, solved by forward substitution over the free (generating)
coordinates. Every vertex value is then an integer-coefficient linear form
of the p+1 free coordinates, and the limit is the volume of the region of
the unit cube where all forms and all mask constraints are satisfied,
summed over the finitely many sign / modular-offset branches of the link
kind. Route two fits normalized finite-N counts against 1/N.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from math import gcd, isfinite
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import linprog
from scipy.spatial import ConvexHull, HalfspaceIntersection, QhullError
from scipy.stats import qmc

from .circuits import count_circuits
from .combinat import Sentence, coarsenings, is_P2_pair, is_P24_pair
from .links import LinkSpec
from .masks import LimitRegion, MaskSpec, full_square

__all__ = [
    "ThetaEstimate",
    "ConstraintSystem",
    "LimitsError",
    "build_constraint_system",
    "branch_vectors",
    "integral_link_kind",
    "theta_integral",
    "theta_extrapolate",
    "theta",
]

QMC_SEED = 20240901  # fixed seed for the low-discrepancy fallback


class LimitsError(ValueError):
    pass


@dataclass(frozen=True)
class ThetaEstimate:
    value: float
    method: str  # 'integral' | 'extrapolation'
    error: float
    diagnostics: dict = field(default_factory=dict)
    branch_count: int = 0
    low_confidence: bool = False


# -- linear forms over the free coordinates -------------------------------------

class _Form:
    """Linear form sum(coef[v] * x_v) + const with Fraction coefficients."""

    __slots__ = ("coef", "const")

    def __init__(self, coef=None, const=Fraction(0)):
        self.coef = dict(coef or {})
        self.const = Fraction(const)

    @staticmethod
    def var(v):
        return _Form({v: Fraction(1)})

    def __add__(self, other):
        if isinstance(other, _Form):
            out = dict(self.coef)
            for k, c in other.coef.items():
                out[k] = out.get(k, Fraction(0)) + c
                if out[k] == 0:
                    del out[k]
            return _Form(out, self.const + other.const)
        return _Form(self.coef, self.const + Fraction(other))

    def __sub__(self, other):
        return self + (other * -1 if isinstance(other, _Form) else -Fraction(other))

    def __mul__(self, s):
        s = Fraction(s)
        return _Form({k: c * s for k, c in self.coef.items() if c * s != 0}, self.const * s)

    def is_zero(self):
        return not self.coef and self.const == 0

    def is_const(self):
        return not self.coef

    def key(self, order):
        return tuple(self.coef.get(v, Fraction(0)) for v in order) + (self.const,)


@dataclass(frozen=True)
class ConstraintSystem:
    """Forward-substitution solution of one branch of the matching system.

    Every vertex value is a linear form over the free coordinates; residuals
    are forms that must vanish identically for the branch to contribute
    (a residual that is not the zero form cuts the solution set down by a
    dimension, which vanishes under the N^(p+1) normalization).
    """

    free_vertices: tuple  # ordered (u, j) pairs, 1-based u
    forms: dict  # (u, j) -> _Form over free vertices
    residuals: tuple  # forms required to vanish
    branch: tuple
    consistent: bool  # all residuals identically zero


_KIND_SUM = ("sum", "mod_sum")
_KIND_DIFF = ("diff_signed", "abs_diff", "mod_absdiff")
_BRANCH_OPTIONS = {
    "sum": ((1, 0),),
    "diff_signed": ((1, 0),),
    "abs_diff": ((1, 0), (-1, 0)),
    "mod_sum": tuple((1, o) for o in range(-2, 3)),
    "mod_absdiff": tuple((s, o) for s in (1, -1) for o in range(-2, 3)),
}


def integral_link_kind(link: LinkSpec) -> Optional[str]:
    """The constraint-system family implementing a built-in link, if any."""
    return {
        "hankel": "sum",
        "toeplitz_abs": "abs_diff",
        "toeplitz_signed": "abs_diff",
        "reverse_circulant": "mod_sum",
        "symmetric_circulant": "mod_absdiff",
    }.get(link.kind)


def _visit_plan(sentence: Sentence):
    """Vertex visit order: dictionary order for P2,4; for P2 the first word
    runs forward to the last cross-matched position r, then wraps from the
    closure backwards to r, which absorbs the word-1 closure into the
    construction and keeps exactly p+1 free coordinates."""
    p, k = sentence.p, sentence.k
    if is_P24_pair(sentence):
        plan = []
        for u in range(k):
            plan.append(("set0", u, 0))
            plan.extend(("fwd", u, j) for j in range(1, p))
            plan.append(("closure", u, p))
        return plan
    if is_P2_pair(sentence):
        w1 = sentence.words[0]
        cross = set(w1) & set(sentence.words[1])
        r = max(j for j in range(1, p + 1) if w1[j - 1] in cross)
        plan = [("set0", 0, 0)]
        plan.extend(("fwd", 0, j) for j in range(1, r))
        plan.extend(("bwd", 0, j) for j in range(p, r, -1))
        plan.append(("stepr", 0, r))
        plan.append(("set0", 1, 0))
        plan.extend(("fwd", 1, j) for j in range(1, p))
        plan.append(("closure", 1, p))
        return plan
    raise LimitsError(f"{sentence} is not in P2(p,p) or P2,4(p,p)")


def _equation_count(sentence: Sentence) -> int:
    return sum(c - 1 for c in sentence.multiset().values())


def branch_vectors(sentence: Sentence, link_kind: str):
    """All (sign, offset) tuples, one entry per matching equation."""
    opts = _BRANCH_OPTIONS[link_kind]
    return itertools.product(opts, repeat=_equation_count(sentence))


def _step_expr(prev: _Form, cur: _Form, kind: str) -> _Form:
    return prev + cur if kind in _KIND_SUM else prev - cur


def build_constraint_system(
    sentence: Sentence, link_kind: str, branch: Sequence = ()
) -> ConstraintSystem:
    """Solve the matching system of one branch by forward substitution.

    The branch supplies one (sign, offset) pair per matching equation
    (equations ordered by visit order); sign is +-1, offsets are the
    modular wrap multiples in -2..2. For 'sum' and 'diff_signed' the branch
    may be empty.
    """
    if link_kind not in _BRANCH_OPTIONS:
        raise LimitsError(f"unknown link kind {link_kind!r}")
    p = sentence.p
    n_eq = _equation_count(sentence)
    branch = tuple(branch)
    if not branch and link_kind in ("sum", "diff_signed"):
        branch = ((1, 0),) * n_eq
    if len(branch) != n_eq:
        raise LimitsError(f"branch vector needs {n_eq} entries, got {len(branch)}")
    for s, o in branch:
        if s not in (1, -1) or not (-2 <= o <= 2):
            raise LimitsError(f"malformed branch entry {(s, o)}")

    plan = _visit_plan(sentence)
    forms: dict = {}
    free: list = []
    residuals: list = []
    letter_expr: dict = {}
    eq_idx = 0

    def new_free(vertex):
        free.append(vertex)
        forms[vertex] = _Form.var(vertex)

    for op, u, j in plan:
        letter = sentence.words[u][j - 1] if j >= 1 else None
        if op == "set0":
            new_free((u + 1, 0))
            continue
        if op == "closure" or (u + 1, p) not in forms and j == p:
            # circuit closure ties the last vertex to the first
            forms[(u + 1, p)] = forms[(u + 1, 0)]
        prev_v, cur_v = (u + 1, j - 1), (u + 1, j)
        if op == "fwd":
            known, unknown = prev_v, cur_v
        elif op == "bwd":
            known, unknown = cur_v, prev_v
        else:  # closure or stepr: both endpoints already have forms
            known, unknown = prev_v, None
        if letter not in letter_expr:
            # first occurrence: the step defines the letter's L-value form
            if unknown is not None:
                new_free(unknown)
            letter_expr[letter] = _step_expr(forms[prev_v], forms[cur_v], link_kind)
        else:
            s, o = branch[eq_idx]
            eq_idx += 1
            target = letter_expr[letter] * s + o
            if unknown is None:
                residuals.append(_step_expr(forms[prev_v], forms[cur_v], link_kind) - target)
            elif link_kind in _KIND_SUM:
                forms[unknown] = target - forms[known]
            else:  # prev - cur = target
                if unknown is cur_v:
                    forms[unknown] = forms[known] - target
                else:
                    forms[unknown] = target + forms[known]
    # count equations consumed: first occurrences don't branch
    consistent = all(r.is_zero() for r in residuals)
    return ConstraintSystem(
        free_vertices=tuple(free),
        forms=forms,
        residuals=tuple(residuals),
        branch=branch,
        consistent=consistent,
    )


# -- polytope volume -------------------------------------------------------------

def _normalize_row(coeffs, rhs):
    nums = [c.numerator for c in coeffs] + [rhs.numerator]
    dens = [c.denominator for c in coeffs] + [rhs.denominator]
    scale = Fraction(int(np.lcm.reduce([int(d) for d in dens])), 1)
    ints = [int(c * scale) for c in coeffs] + [int(rhs * scale)]
    g = 0
    for x in ints:
        g = gcd(g, abs(x))
    if g > 1:
        ints = [x // g for x in ints]
    return tuple(ints)


def _system_rows(system: ConstraintSystem, sentence: Sentence, region: LimitRegion):
    """Inequality rows a.x <= b over the free coordinates: cube bounds for
    every vertex form plus the mask-limit constraints per circuit step."""
    order = system.free_vertices
    dim = len(order)
    rows = []

    def add(form: _Form, upper: Fraction):
        # form <= upper
        coeffs = [form.coef.get(v, Fraction(0)) for v in order]
        rhs = Fraction(upper) - form.const
        if all(c == 0 for c in coeffs):
            if rhs < 0:
                return False  # infeasible constant constraint
            return True
        rows.append(_normalize_row(coeffs, rhs))
        return True

    p, k = sentence.p, sentence.k
    for u in range(1, k + 1):
        for j in range(0, p + 1):
            f = system.forms[(u, j)]
            if not add(f, Fraction(1)):
                return None, dim
            if not add(f * -1, Fraction(0)):
                return None, dim
    if region.empty:
        return None, dim
    for u in range(1, k + 1):
        for j in range(1, p + 1):
            fp, fc = system.forms[(u, j - 1)], system.forms[(u, j)]
            for ax, ay, c in region.inequalities:
                if not add(fp * ax + fc * ay, c):
                    return None, dim
    return sorted(set(rows)), dim


def _chebyshev_center(A: np.ndarray, b: np.ndarray, dim: int):
    norms = np.linalg.norm(A, axis=1)
    res = linprog(
        c=np.concatenate([np.zeros(dim), [-1.0]]),
        A_ub=np.hstack([A, norms[:, None]]),
        b_ub=b,
        bounds=[(None, None)] * dim + [(0, None)],
        method="highs",
    )
    if not res.success or res.x[-1] <= 1e-10:
        return None
    return res.x[:dim]


def _volume_exact(rows, dim):
    """Volume of {a.x <= b} via vertex enumeration; None if qhull fails."""
    A = np.array([[float(x) for x in r[:-1]] for r in rows])
    b = np.array([float(r[-1]) for r in rows])
    center = _chebyshev_center(A, b, dim)
    if center is None:
        return 0.0
    try:
        hs = HalfspaceIntersection(np.hstack([A, -b[:, None]]), center)
        return float(ConvexHull(hs.intersections).volume)
    except (QhullError, ValueError):
        return None


def _volume_qmc(rows, dim, m: int = 13, reps: int = 8, seed: int = QMC_SEED):
    A = np.array([[float(x) for x in r[:-1]] for r in rows])
    b = np.array([float(r[-1]) for r in rows])
    vals = []
    for rep in range(reps):
        pts = qmc.Sobol(dim, scramble=True, seed=seed + rep).random(2**m)
        ok = np.all(pts @ A.T <= b + 1e-12, axis=1)
        vals.append(float(np.mean(ok)))
    return float(np.mean(vals)), float(np.std(vals) / np.sqrt(reps))


def _volume_grid(rows, dim, n_side: int):
    A = np.array([[float(x) for x in r[:-1]] for r in rows])
    b = np.array([float(r[-1]) for r in rows])
    axes = [(np.arange(n_side) + 0.5) / n_side] * dim
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, dim)
    ok = np.all(grid @ A.T <= b + 1e-12, axis=1)
    return float(np.mean(ok)), 2.0 * dim / n_side


# -- theta routes -----------------------------------------------------------------

def theta_integral(
    sentence: Sentence,
    link_kind: str,
    region: Optional[LimitRegion] = None,
    variant: str = "star",
    method: str = "auto",
    grid_side: int = 48,
) -> ThetaEstimate:
    """theta(W) as a sum of unit-cube polytope volumes over the branch
    systems of the link kind.

    'star' integrates the matching system as-is; 'exact' subtracts the
    star limits of the coarser patterns that keep the N^(p+1) order (the
    coarsenings landing in P2,4), which is the only correction surviving
    the limit.
    """
    region = region if region is not None else full_square()
    if variant == "exact":
        base = theta_integral(sentence, link_kind, region, "star", method, grid_side)
        value, err, branches = base.value, base.error, base.branch_count
        corrections = []
        if is_P2_pair(sentence):
            for coarse in coarsenings(sentence, strict=True):
                if is_P24_pair(coarse):
                    sub = theta_integral(coarse, link_kind, region, "star", method, grid_side)
                    value -= sub.value
                    err += sub.error
                    corrections.append(str(coarse))
        diag = dict(base.diagnostics)
        diag["exact_corrections"] = corrections
        return ThetaEstimate(value, "integral", err, diag, branches, base.low_confidence)

    seen_signatures = set()
    total = 0.0
    total_err = 0.0
    contributing = 0
    examined = 0
    degenerate = 0
    fallback = 0
    for branch in branch_vectors(sentence, link_kind):
        examined += 1
        system = build_constraint_system(sentence, link_kind, branch)
        if not system.consistent:
            degenerate += 1
            continue
        rows, dim = _system_rows(system, sentence, region)
        if rows is None:
            continue
        sig = tuple(rows)
        if sig in seen_signatures:
            continue  # identical reduced system reached via another branch
        seen_signatures.add(sig)
        if not rows:
            total += 1.0
            contributing += 1
            continue
        if method == "grid":
            vol, err = _volume_grid(rows, dim, grid_side)
        elif method == "qmc":
            vol, err = _volume_qmc(rows, dim)
        else:
            vol, err = _volume_exact(rows, dim), 0.0
            if vol is None:
                vol, err = _volume_qmc(rows, dim)
                fallback += 1
        if vol > 0:
            contributing += 1
            total += vol
            total_err += err
    diagnostics = {
        "branches_examined": examined,
        "branches_inconsistent": degenerate,
        "qmc_fallbacks": fallback,
    }
    return ThetaEstimate(
        value=total,
        method="integral",
        error=total_err,
        diagnostics=diagnostics,
        branch_count=contributing,
        low_confidence=False,
    )


def theta_extrapolate(
    link: LinkSpec,
    mask: MaskSpec,
    sentence: Sentence,
    n_grid: Sequence[int],
    variant: str = "star",
    budget: Optional[int] = None,
) -> ThetaEstimate:
    """theta(W) from normalized counts on a dimension grid, fitting
    theta + c/N (plus c2/N^2 chosen by AIC when enough points)."""
    ns = sorted(int(n) for n in n_grid)
    if len(ns) < 3:
        raise LimitsError("extrapolation needs at least 3 grid points")
    kwargs = {} if budget is None else {"budget": budget}
    values = []
    for n in ns:
        rec = count_circuits(link, mask, sentence, n, variant, True, **kwargs)
        values.append(float(rec.normalized))
    y = np.array(values)
    x = 1.0 / np.array(ns, dtype=float)

    def fit(deg):
        X = np.vander(x, deg + 1, increasing=True)
        coef, res, *_ = np.linalg.lstsq(X, y, rcond=None)
        resid = y - X @ coef
        rss = float(resid @ resid)
        return coef, rss, resid

    lin, rss_lin, resid_lin = fit(1)
    if len(ns) >= 3:
        quad, rss_quad, resid_quad = fit(2)
    else:
        quad, rss_quad, resid_quad = lin, rss_lin, resid_lin
    if len(ns) >= 4:
        n_pts = len(ns)
        aic_lin = n_pts * np.log(max(rss_lin, 1e-28) / n_pts) + 2 * 2
        aic_quad = n_pts * np.log(max(rss_quad, 1e-28) / n_pts) + 2 * 3
        use_quad = aic_quad < aic_lin
    else:
        use_quad = True  # 3 points: quadratic interpolation, linear as control
    theta_sel = float((quad if use_quad else lin)[0])
    theta_alt = float((lin if use_quad else quad)[0])
    resid = resid_quad if use_quad else resid_lin
    dof = len(ns) - (3 if use_quad else 2)
    se = float(np.sqrt(max(rss_quad if use_quad else rss_lin, 0.0) / dof)) if dof > 0 else 0.0
    error = max(abs(theta_sel - theta_alt), se, 1e-12)
    # oscillation: residual sign changes on the larger half of the grid
    signs = np.sign(np.diff(y))
    low_conf = bool(len(set(signs[signs != 0])) > 1 and abs(theta_sel) > 0 and error > 0.05 * max(abs(theta_sel), 1e-9))
    if not isfinite(theta_sel):
        theta_sel, low_conf = 0.0, True
    return ThetaEstimate(
        value=theta_sel,
        method="extrapolation",
        error=error,
        diagnostics={
            "grid": ns,
            "normalized": values,
            "model": "quadratic" if use_quad else "linear",
            "residuals": [float(r) for r in resid],
        },
        branch_count=0,
        low_confidence=low_conf,
    )


def theta(
    link: LinkSpec,
    mask: MaskSpec,
    sentence: Sentence,
    method: str = "auto",
    n_grid: Optional[Sequence[int]] = None,
    variant: str = "exact",
) -> ThetaEstimate:
    """Dispatch: the integral route when the link kind supports it and the
    mask has a linear-inequality limit region, else extrapolation."""
    kind = integral_link_kind(link)
    integral_ok = (
        kind is not None
        and mask.limit is not None
        and (is_P2_pair(sentence) or is_P24_pair(sentence))
    )
    if integral_ok and method == "auto":
        # the branch product must stay tractable, else extrapolate
        n_branches = len(_BRANCH_OPTIONS[kind]) ** _equation_count(sentence)
        integral_ok = n_branches <= 1200
    if method == "integral" and not integral_ok:
        raise LimitsError(f"integral route unavailable for {link.kind} / {sentence}")
    if method in ("integral", "auto") and integral_ok:
        return theta_integral(sentence, kind, mask.limit, variant=variant)
    if n_grid is None:
        n_grid = _default_grid(sentence.p, sentence.k)
    return theta_extrapolate(link, mask, sentence, n_grid, variant=variant)


def _default_grid(p: int, k: int):
    if p * k <= 4:
        return (48, 64, 96, 128)
    if p * k <= 6:
        return (32, 48, 64, 96)
    return (24, 32, 48)
