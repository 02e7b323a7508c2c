"""Exact certificates for the binomial-matrix lemma and the constants built on it.

Everything on the matrix side runs in Python integers and ``Fraction``; only
the Lagrange (Lebesgue) factors and sup-norm sampling use floating point.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import NamedTuple, Sequence

import numpy as np

from .errors import CapacityError, InvariantError, ValidationError

MAX_MATRIX_ORDER = 40
LEBESGUE_TOL = 1e-6


def binom(r: int, m: int) -> int:
    return math.comb(r, m) if 0 <= m <= r else 0


@dataclass(frozen=True)
class ExactMatrix:
    rows: tuple[tuple[int, ...], ...]
    r: int | None = None

    @property
    def size(self) -> int:
        return len(self.rows)

    def tolist(self) -> list[list[int]]:
        return [list(row) for row in self.rows]


def lemma_matrix(r: int) -> ExactMatrix:
    """The (r-1)x(r-1) matrix taking odd-node values v_j to the r-th differences.

    Entry (i, j), 1-based, is ``(-1)**(r+i) * C(r, 2j - i)``: row ``i`` gives
    ``Delta^r_h g(a + (i-1) h)`` when g vanishes on the even nodes ``a + 2kh``
    and equals ``v_j`` at ``a + (2j-1) h``.
    """
    if not isinstance(r, int) or not 2 <= r <= MAX_MATRIX_ORDER:
        raise CapacityError(f"lemma matrix order r={r} outside 2..{MAX_MATRIX_ORDER}")
    rows = tuple(
        tuple((-1) ** (r + i) * binom(r, 2 * j - i) for j in range(1, r))
        for i in range(1, r)
    )
    return ExactMatrix(rows, r)


def _as_rows(m) -> list[list[int]]:
    rows = m.tolist() if isinstance(m, ExactMatrix) else [list(row) for row in m]
    if any(len(row) != len(rows) for row in rows):
        raise ValidationError("matrix must be square")
    return [[int(v) for v in row] for row in rows]


def exact_determinant(m) -> int:
    """Determinant by Bareiss fraction-free elimination; every division is exact."""
    a = _as_rows(m)
    n = len(a)
    if n == 0:
        return 1
    sign, prev = 1, 1
    for k in range(n - 1):
        if a[k][k] == 0:
            for p in range(k + 1, n):
                if a[p][k] != 0:
                    a[k], a[p] = a[p], a[k]
                    sign = -sign
                    break
            else:
                return 0
        pivot = a[k][k]
        for i in range(k + 1, n):
            for j in range(k + 1, n):
                a[i][j] = (a[i][j] * pivot - a[i][k] * a[k][j]) // prev
            a[i][k] = 0
        prev = pivot
    return sign * a[n - 1][n - 1]


class DeterminantCheck(NamedTuple):
    r: int
    det: int
    expected: int
    passed: bool


def verify_determinant_identity(r: int) -> DeterminantCheck:
    """Check |det(lemma_matrix(r))| == 2**(r(r-1)/2) exactly; returns both sides."""
    det = exact_determinant(lemma_matrix(r))
    expected = 1 << (r * (r - 1) // 2)
    return DeterminantCheck(r, det, expected, abs(det) == expected)


def adjugate_scaled(m) -> tuple[list[list[int]], int]:
    """Fraction-free Gauss-Jordan on ``[A | I]``.

    Returns ``(B, D)`` with ``B = D * inverse(A)`` in integers and
    ``|D| = |det A|``.
    """
    a = _as_rows(m)
    n = len(a)
    aug = [row + [int(i == j) for j in range(n)] for i, row in enumerate(a)]
    prev = 1
    for k in range(n):
        p = next((i for i in range(k, n) if aug[i][k] != 0), None)
        if p is None:
            raise InvariantError("singular matrix: the determinant identity would be false")
        if p != k:
            aug[k], aug[p] = aug[p], aug[k]
        pivot = aug[k][k]
        for i in range(n):
            if i == k:
                continue
            f = aug[i][k]
            row = aug[i]
            for j in range(2 * n):
                num = row[j] * pivot - f * aug[k][j]
                q, rem = divmod(num, prev)
                if rem:
                    raise InvariantError("inexact division in fraction-free elimination")
                row[j] = q
        prev = pivot
    for i in range(n):
        if aug[i][i] != prev:
            raise InvariantError("fraction-free Gauss-Jordan did not reach D*I")
    return [row[n:] for row in aug], prev


def inverse_infinity_norm(m) -> Fraction:
    """``||A^-1||_inf`` exactly: max absolute row sum of ``D A^-1`` over ``|D|``."""
    b, det = adjugate_scaled(m)
    return Fraction(max(sum(abs(v) for v in row) for row in b), abs(det))


def exact_rank(rows: Sequence[Sequence[int]]) -> int:
    """Rank of an integer matrix (any shape) by fraction-free elimination."""
    a = [[int(v) for v in row] for row in rows]
    if not a:
        return 0
    n_rows, n_cols = len(a), len(a[0])
    rank, prev = 0, 1
    for c in range(n_cols):
        p = next((i for i in range(rank, n_rows) if a[i][c] != 0), None)
        if p is None:
            continue
        a[rank], a[p] = a[p], a[rank]
        pivot = a[rank][c]
        for i in range(rank + 1, n_rows):
            f = a[i][c]
            for j in range(c, n_cols):
                a[i][j] = (a[i][j] * pivot - f * a[rank][j]) // prev
        prev = pivot
        rank += 1
        if rank == n_rows:
            break
    return rank


class Lebesgue(NamedTuple):
    value: float
    resolution: int


def _lebesgue_function(r: int, x: np.ndarray) -> np.ndarray:
    nodes = np.arange(r, dtype=float)
    total = np.zeros_like(x)
    for i in range(r):
        li = np.ones_like(x)
        for j in range(r):
            if j != i:
                li = li * (x - nodes[j]) / (nodes[i] - nodes[j])
        total += np.abs(li)
    return total


@lru_cache(maxsize=None)
def lebesgue_constant_uniform(r: int, resolution: int = 1024) -> Lebesgue:
    """Max of sum_i |l_i(x)| over [0, r-1] for the nodes 0, 1, ..., r-1.

    The dense grid is doubled until two successive maxima agree to 1e-6;
    the returned resolution is the number of grid intervals at that point.
    """
    if r < 1:
        raise ValidationError("r must be positive")
    if resolution < 1024:
        raise ValidationError("resolution must be at least 1024")
    if r <= 2:
        return Lebesgue(1.0, resolution)
    prev = None
    res = resolution
    while True:
        x = np.linspace(0.0, r - 1.0, res + 1)
        value = float(_lebesgue_function(r, x).max())
        if prev is not None and abs(value - prev) < LEBESGUE_TOL:
            return Lebesgue(value, res)
        if res > 1 << 24:
            raise InvariantError(f"Lebesgue constant for r={r} did not stabilize")
        prev, res = value, res * 2


class LemmaConstant(NamedTuple):
    value: float
    factors: dict


def _lebesgue_bound(r: int) -> float:
    # sampled maximum plus the stabilization tolerance
    if r <= 2:
        return 1.0
    return lebesgue_constant_uniform(r).value + LEBESGUE_TOL


@lru_cache(maxsize=None)
def lemma_constant_1d(r: int) -> LemmaConstant:
    """Constructive c(r): sup-norm of the two-piece g over max |Delta^r_h g|.

    For r >= 2 it is ``Lambda_r * ||M_r^-1||_inf`` where ``Lambda_r`` bounds
    each polynomial piece by its node values and the inverse matrix bounds
    the odd-node values by the differences.  For r = 1 a piecewise constant
    g with g(a) = 0 has ``||g|| = |Delta_h g(a)|`` exactly, so c(1) = 1.
    """
    if r < 1:
        raise ValidationError("r must be positive")
    if r == 1:
        return LemmaConstant(1.0, {"formula": "1 (piecewise constants)", "r": 1})
    lam = _lebesgue_bound(r)
    inv = inverse_infinity_norm(lemma_matrix(r))
    value = lam * float(inv)
    return LemmaConstant(value, {
        "formula": "lebesgue(r) * inv_inf_norm(r)",
        "r": r,
        "lebesgue": lam,
        "inv_inf_norm": f"{inv.numerator}/{inv.denominator}",
        "value": value,
    })


@lru_cache(maxsize=None)
def lemma_constant_dd(r: int, d: int) -> LemmaConstant:
    """Constructive c(r, d) following the induction on the dimension.

    Integer points on a fiber along the last axis are bounded by the 1-d
    lemma applied to ``g - P`` (``c(r,1)``) plus the interpolant ``P`` of the
    even-node values (``Lambda_r`` times the (d-1)-dimensional bound).  The
    tensor Lebesgue factor ``Lambda_r**d`` then passes from mesh values to the
    sup over the whole cube:

        c(r, d) = Lambda_r**d * (c(r, 1) + Lambda_r * c(r, d-1)).

    For r = 1 the bound is d (a path of at most d axis steps).
    """
    if d < 1:
        raise ValidationError("d must be positive")
    base = lemma_constant_1d(r)
    if d == 1:
        return base
    if r == 1:
        return LemmaConstant(float(d), {"formula": "d (axis path of length <= d)", "r": 1, "d": d})
    lam = _lebesgue_bound(r)
    lower = lemma_constant_dd(r, d - 1)
    value = lam**d * (base.value + lam * lower.value)
    return LemmaConstant(value, {
        "formula": "lebesgue(r)**d * (c(r,1) + lebesgue(r) * c(r,d-1))",
        "r": r,
        "d": d,
        "lebesgue": lam,
        "c(r,1)": base.factors,
        "c(r,d-1)": lower.factors,
        "value": value,
    })


@dataclass
class ConstantLedger:
    """Proven-constructive constants for one (r, d) plus labeled measurements."""

    r: int
    d: int
    det_abs: int
    inv_inf_norm: Fraction
    lebesgue_1d: float
    lemma_c_1d: float
    lemma_c_dd: float
    factors: dict = field(default_factory=dict)
    empirical_M1: float | None = None
    empirical_M2: float | None = None
    empirical_M: float | None = None

    def as_dict(self) -> dict:
        return {
            "r": self.r,
            "d": self.d,
            "det_abs": str(self.det_abs),
            "inv_inf_norm": f"{self.inv_inf_norm.numerator}/{self.inv_inf_norm.denominator}",
            "lebesgue": self.lebesgue_1d,
            "c_1d": self.lemma_c_1d,
            "c_dd": self.lemma_c_dd,
            "factors": self.factors,
            "measured": {
                "label": "measured lower bounds on what the true constants must cover",
                "M1": self.empirical_M1,
                "M2": self.empirical_M2,
                "M": self.empirical_M,
            },
        }


def build_ledger(r: int, d: int) -> ConstantLedger:
    if r >= 2:
        det_abs = abs(exact_determinant(lemma_matrix(r)))
        inv = inverse_infinity_norm(lemma_matrix(r))
    else:
        det_abs, inv = 1, Fraction(1)
    cdd = lemma_constant_dd(r, d)
    return ConstantLedger(
        r=r, d=d, det_abs=det_abs, inv_inf_norm=inv,
        lebesgue_1d=_lebesgue_bound(r), lemma_c_1d=lemma_constant_1d(r).value,
        lemma_c_dd=cdd.value, factors=cdd.factors,
    )


def certify_row(r: int, max_d: int = 3) -> dict:
    """One row of the ``certify`` report."""
    check = verify_determinant_identity(r)
    inv = inverse_infinity_norm(lemma_matrix(r))
    return {
        "r": r,
        "det_abs": str(abs(check.det)),
        "expected_pow2": str(check.expected),
        "inv_inf_norm": f"{inv.numerator}/{inv.denominator}",
        "lebesgue": _lebesgue_bound(r),
        "c_1d": lemma_constant_1d(r).value,
        "c_dd": {str(d): lemma_constant_dd(r, d).value for d in range(1, max_d + 1)},
        "status": "pass" if check.passed else "fail",
    }


# --- local lemma instances ---------------------------------------------------------


def difference_rows(r: int, d: int) -> tuple[list[list[int]], list[tuple[int, ...]]]:
    """Integer matrix of the map from free node values to the lemma's differences.

    Nodes are the integer offsets ``{0..2(r-1)}**d``; the free ones are those
    with at least one odd coordinate (the all-even ones are forced to zero).
    One row per axis ``i`` and base offset ``v`` with ``v_i <= r - 2``.
    """
    side = 2 * r - 1
    nodes = list(itertools.product(range(side), repeat=d))
    free = [v for v in nodes if any(c % 2 for c in v)]
    col = {v: j for j, v in enumerate(free)}
    coef = [(-1) ** (r - k) * math.comb(r, k) for k in range(r + 1)]
    rows = []
    for i in range(d):
        for v in nodes:
            if v[i] > r - 2:
                continue
            row = [0] * len(free)
            for k in range(r + 1):
                w = list(v)
                w[i] += k
                w = tuple(w)
                if w in col:
                    row[col[w]] += coef[k]
            rows.append(row)
    return rows, free


@lru_cache(maxsize=None)
def difference_map_injective(r: int, d: int) -> bool:
    """True when zero differences force all free node values to vanish."""
    rows, free = difference_rows(r, d)
    return exact_rank(rows) == len(free)


class LemmaCheck(NamedTuple):
    sup_norm: float
    max_difference: float
    ratio: float
    bound: float
    passed: bool
    density: int


def lemma_bound_check(instance, ledger: ConstantLedger | None = None) -> LemmaCheck:
    """Ratio ``||g|| / max |Delta^r_{h e_i} g(a + v_i h)|`` for a local lemma instance.

    ``||g||`` is sampled with 4r points per axis per cell.  0/0 is reported
    as 0.  Passes when the ratio does not exceed the constructive c(r, d).
    """
    from .cascade import LemmaInstance, lemma_differences, spline_sup_norm

    if not isinstance(instance, LemmaInstance):
        raise ValidationError("lemma_bound_check needs a LemmaInstance")
    instance.validate()
    bound = ledger.lemma_c_dd if ledger is not None else lemma_constant_dd(instance.r, instance.d).value
    if ledger is not None and (ledger.r, ledger.d) != (instance.r, instance.d):
        raise ValidationError("ledger (r, d) does not match the instance")
    spline = instance.spline()
    norm, density = spline_sup_norm(spline)
    diff = float(np.max(np.abs(lemma_differences(instance)))) if instance.values.size else 0.0
    if diff == 0.0:
        ratio = 0.0 if norm == 0.0 else math.inf
    else:
        ratio = norm / diff
    return LemmaCheck(norm, diff, ratio, bound, ratio <= bound, density)
