"""Forward differences of order r along one direction.

The scalar routine and the array routine accumulate the terms in the same
order, so a difference computed over a whole grid is bit-identical to the
one computed for a single multi-index.
"""

from __future__ import annotations

from math import comb
from typing import Sequence

import numpy as np

from .errors import ArityError, BoundsError, CapacityError, DomainError, ValidationError
from .mesh import POINT_TOL, SampleField

MAX_ORDER = 30
KAHAN_FROM = 8

# (-1)**(r-k) * C(r, k), exact in int64 for r <= 30
_SIGNED_BINOMIALS = [
    np.array([(-1) ** (r - k) * comb(r, k) for k in range(r + 1)], dtype=np.int64)
    for r in range(MAX_ORDER + 1)
]


def signed_binomials(r: int) -> np.ndarray:
    _check_order(r)
    return _SIGNED_BINOMIALS[r]


def _check_order(r: int) -> None:
    if not isinstance(r, (int, np.integer)) or r < 1:
        raise ValidationError(f"order r must be a positive integer, got {r!r}")
    if r > MAX_ORDER:
        raise CapacityError(f"order r={r} exceeds the cap {MAX_ORDER}")


def _accumulate(terms):
    """Sum an iterable of equally-shaped terms; compensated when there are many."""
    terms = list(terms)
    if len(terms) < KAHAN_FROM + 1:
        acc = np.zeros_like(terms[0])
        for term in terms:
            acc = acc + term
        return acc
    acc = np.zeros_like(terms[0])
    comp = np.zeros_like(terms[0])
    for term in terms:
        y = term - comp
        t = acc + y
        comp = (t - acc) - y
        acc = t
    return acc


def forward_diff(values: Sequence[float], r: int) -> float:
    """``sum_k (-1)**(r-k) C(r,k) values[k]`` for exactly ``r + 1`` values."""
    _check_order(r)
    v = np.asarray(values, dtype=float).reshape(-1)
    if v.size != r + 1:
        raise ArityError(f"order {r} needs {r + 1} values, got {v.size}")
    coef = _SIGNED_BINOMIALS[r].astype(float)
    return float(_accumulate(coef[k] * v[k] for k in range(r + 1)))


def diff_along_axis(arr: np.ndarray, axis: int, r: int, stride: int = 1) -> np.ndarray:
    """All order-``r`` differences of ``arr`` along ``axis`` with the given index stride.

    Entry ``j`` along ``axis`` of the result is the difference based at index
    ``j``; the result is shorter than ``arr`` by ``r * stride`` on that axis.
    """
    _check_order(r)
    arr = np.asarray(arr, dtype=float)
    length = arr.shape[axis] - r * stride
    if length <= 0:
        shape = list(arr.shape)
        shape[axis] = 0
        return np.zeros(shape)
    coef = _SIGNED_BINOMIALS[r].astype(float)

    def term(k):
        idx = [slice(None)] * arr.ndim
        idx[axis] = slice(k * stride, k * stride + length)
        return coef[k] * arr[tuple(idx)]

    return _accumulate(term(k) for k in range(r + 1))


def grid_diff(field: SampleField, k: Sequence[int], i: int, r: int, stride: int = 1) -> float:
    """Order-``r`` difference of ``field`` along axis ``i`` (0-based) based at ``k``."""
    _check_order(r)
    if stride < 1:
        raise ValidationError("stride must be a positive integer")
    top = 1 << field.n
    k = [int(v) for v in k]
    if len(k) != field.d:
        raise ValidationError(f"multi-index needs {field.d} components")
    if not 0 <= i < field.d:
        raise BoundsError(f"axis {i} outside 0..{field.d - 1}")
    for j, kj in enumerate(k):
        if not 0 <= kj <= top:
            raise BoundsError(f"index {kj} on axis {j} outside 0..{top}")
    if k[i] + r * stride > top:
        raise BoundsError(
            f"axis {i}: offset {k[i]} + {r}*{stride} exceeds the last mesh index {top}"
        )
    arr = field.array
    vals = []
    for m in range(r + 1):
        kk = list(k)
        kk[i] += m * stride
        vals.append(arr[tuple(kk)])
    return forward_diff(vals, r)


def unit_direction(direction, d: int) -> np.ndarray:
    """Axis index or vector -> unit vector of length ``d``."""
    if isinstance(direction, (int, np.integer)):
        if not 0 <= direction < d:
            raise ValidationError(f"axis {direction} outside 0..{d - 1}")
        e = np.zeros(d)
        e[direction] = 1.0
        return e
    e = np.asarray(direction, dtype=float).reshape(-1)
    if e.size != d:
        raise ValidationError(f"direction has {e.size} components, expected {d}")
    if abs(np.linalg.norm(e) - 1.0) > 1e-12:
        raise ValidationError(f"direction {e.tolist()} is not a unit vector")
    return e


def continuous_diff(source, base, direction, h: float, r: int) -> float:
    """Order-``r`` difference of an analytic source at ``base`` with step ``h`` along ``direction``."""
    _check_order(r)
    if not h > 0:
        raise ValidationError("step h must be positive")
    d = source.d
    e = unit_direction(direction, d)
    base = np.asarray(base, dtype=float).reshape(-1)
    if base.size != d:
        raise ValidationError(f"base point needs {d} coordinates")
    pts = base[None, :] + (np.arange(r + 1) * h)[:, None] * e[None, :]
    for label, p in (("base", pts[0]), ("endpoint", pts[-1])):
        if np.any(p < -POINT_TOL) or np.any(p > 1 + POINT_TOL):
            raise DomainError(f"segment leaves the unit cube: {label} {p.tolist()}")
    pts = np.clip(pts, 0.0, 1.0)
    return forward_diff(source(pts), r)
