"""The discrete modulus Psi_r(f, n), estimators of omega^r, and bound assembly.

``discrete_modulus`` scans every axis difference of step ``2**-n`` on the
level-``n`` mesh.  ``omega_estimate`` and ``directional_modulus_estimate``
approximate the continuous moduli from below by deterministic sampling, and
``axis_bound_rhs`` / ``omega_bound_rhs`` assemble the right-hand sides that
bound them in terms of Psi.
"""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from ._parallel import pmap, worker_count
from .errors import LevelTooCoarseError, RangeError, ValidationError
from .fdiff import _check_order, diff_along_axis
from .mesh import DyadicGrid, SampledSource, SampleField, evaluate_on_axes, sample

THEOREM = "theorem-statement"
PROOF = "proof-final-line"
WEIGHTINGS = (THEOREM, PROOF)

TAIL_RATIO_MAX = 0.95
PARALLEL_MIN_POINTS = 1 << 20
SHIFT_SUBDIVISION = 2


class CoverageWarning(UserWarning):
    """A bound needed Psi below the profile's range and used Psi(n_min) instead."""


class DiscreteModulus(NamedTuple):
    value: float
    per_axis: tuple[float, ...]
    argmax: tuple[int, tuple[int, ...]]
    per_axis_argmax: tuple[tuple[int, ...], ...]


def min_level(r: int) -> int:
    """Smallest n with 2**n >= r."""
    return max(0, (r - 1).bit_length())


def _axis_max(arr: np.ndarray, axis: int, r: int) -> tuple[float, tuple[int, ...]]:
    """Max |difference| along ``axis`` and the first multi-index attaining it."""
    d = arr.ndim
    chunk_axis = 0 if axis != 0 else (1 if d > 1 else None)
    workers = worker_count()
    if chunk_axis is None or workers <= 1 or arr.size < PARALLEL_MIN_POINTS:
        diffs = np.abs(diff_along_axis(arr, axis, r))
        flat = int(np.argmax(diffs))
        return float(diffs.reshape(-1)[flat]), tuple(int(v) for v in np.unravel_index(flat, diffs.shape))

    length = arr.shape[chunk_axis]
    bounds = np.linspace(0, length, min(workers, length) + 1).astype(int)

    def work(span):
        lo, hi = span
        idx = [slice(None)] * d
        idx[chunk_axis] = slice(lo, hi)
        diffs = np.abs(diff_along_axis(arr[tuple(idx)], axis, r))
        flat = int(np.argmax(diffs))
        k = list(np.unravel_index(flat, diffs.shape))
        k[chunk_axis] += lo
        return float(diffs.reshape(-1)[flat]), tuple(int(v) for v in k)

    parts = pmap(work, [(lo, hi) for lo, hi in zip(bounds[:-1], bounds[1:]) if hi > lo], workers)
    # order-independent reduction: largest value, then smallest multi-index
    return min(parts, key=lambda p: (-p[0], p[1]))


def discrete_modulus(field: SampleField, r: int) -> DiscreteModulus:
    """Psi_r(f, n): the largest |axis difference| of step 2**-n on the level-n mesh.

    Ties are broken towards the smallest axis, then the lexicographically
    smallest base multi-index, so the result never depends on how the scan
    was partitioned.
    """
    _check_order(r)
    if (1 << field.n) < r:
        raise LevelTooCoarseError(f"level {field.n} has 2**n = {1 << field.n} < r = {r}")
    arr = field.array
    per_axis, where = [], []
    for i in range(field.d):
        value, k = _axis_max(arr, i, r)
        per_axis.append(value)
        where.append(k)
    best = max(range(field.d), key=lambda i: (per_axis[i], -i))
    return DiscreteModulus(per_axis[best], tuple(per_axis), (best, where[best]), tuple(where))


@dataclass(frozen=True)
class ModulusProfile:
    """Psi_r(f, n) over a contiguous range of levels."""

    r: int
    d: int
    levels: tuple[int, ...]
    psi: tuple[float, ...]
    per_axis: tuple[tuple[float, ...], ...] = ()
    argmax: tuple[tuple[int, tuple[int, ...]] | None, ...] = ()
    scale: float = 1.0
    source: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        levels = tuple(int(n) for n in self.levels)
        if not levels:
            raise ValidationError("profile needs at least one level")
        if levels != tuple(range(levels[0], levels[0] + len(levels))):
            raise ValidationError("profile levels must be a contiguous increasing range")
        if len(self.psi) != len(levels):
            raise ValidationError("psi length does not match the level range")
        object.__setattr__(self, "levels", levels)
        object.__setattr__(self, "psi", tuple(float(p) for p in self.psi))
        if any(p < 0 or not math.isfinite(p) for p in self.psi):
            raise ValidationError("psi values must be finite and non-negative")
        if not self.per_axis:
            object.__setattr__(self, "per_axis", tuple((p,) for p in self.psi))
        if not self.argmax:
            object.__setattr__(self, "argmax", (None,) * len(levels))

    @classmethod
    def from_values(cls, r: int, psi: Sequence[float], n_min: int, d: int = 1, scale: float = 1.0):
        """A profile from known values, e.g. a closed form."""
        return cls(r, d, tuple(range(n_min, n_min + len(psi))), tuple(psi), scale=scale)

    @property
    def n_min(self) -> int:
        return self.levels[0]

    @property
    def n_max(self) -> int:
        return self.levels[-1]

    def __getitem__(self, n: int) -> float:
        if not self.n_min <= n <= self.n_max:
            raise RangeError(f"level {n} outside the profile range {self.n_min}..{self.n_max}")
        return self.psi[n - self.n_min]

    def as_dict(self) -> dict:
        rows = []
        for n, p, axes, am in zip(self.levels, self.psi, self.per_axis, self.argmax):
            row = {"n": n, "psi": p, "per_axis": list(axes)}
            if am is not None:
                row["argmax"] = {"axis": am[0] + 1, "k": list(am[1])}
            rows.append(row)
        return {"r": self.r, "d": self.d, "scale": self.scale, "source": self.source, "levels": rows}

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        width = max(len(a) for a in self.per_axis)
        writer.writerow(["n", "psi"] + [f"psi_axis_{i + 1}" for i in range(width)])
        for n, p, axes in zip(self.levels, self.psi, self.per_axis):
            writer.writerow([n, repr(p)] + [repr(a) for a in axes])
        return buf.getvalue()


def modulus_profile(source, r: int, n_min: int, n_max: int) -> ModulusProfile:
    """Psi_r at every level in ``n_min..n_max``.

    Analytic sources are sampled afresh per level; sampled sources are
    sub-sampled from their own mesh, so ``n_max`` cannot exceed their level.
    """
    _check_order(r)
    if n_min < min_level(r):
        raise LevelTooCoarseError(f"n_min={n_min} below ceil(log2 r) = {min_level(r)}")
    if n_max < n_min:
        raise RangeError(f"empty level range {n_min}..{n_max}")
    if isinstance(source, SampledSource) and n_max > source.level:
        raise RangeError(f"n_max={n_max} exceeds the sampled source level {source.level}")
    psi, per_axis, argmax = [], [], []
    scale = 0.0
    for n in range(n_min, n_max + 1):
        fld = sample(source, DyadicGrid(source.d, n))
        res = discrete_modulus(fld, r)
        psi.append(res.value)
        per_axis.append(res.per_axis)
        argmax.append(res.argmax)
        if n == n_max:
            scale = float(np.max(np.abs(fld.values)))
    desc = source.describe() if hasattr(source, "describe") else {}
    return ModulusProfile(r, source.d, tuple(range(n_min, n_max + 1)), tuple(psi),
                          tuple(per_axis), tuple(argmax), scale, desc)


def n_zero(r: int, n: int) -> int:
    """Largest m >= 0 with r * 2**(m - n - 1) <= 1, i.e. r * 2**m <= 2**(n + 1).

    Clamped to 0 when no such m exists (r > 2**(n + 1)); see ``n_zero_defined``.
    """
    if r < 1 or n < 0:
        raise ValidationError("n_zero needs r >= 1 and n >= 0")
    m = 0
    while r << (m + 1) <= 1 << (n + 1):
        m += 1
    return m


def n_zero_defined(r: int, n: int) -> bool:
    return r <= 1 << (n + 1)


def axis_bound_rhs(profile: ModulusProfile, n: int) -> tuple[float, bool]:
    """``sum_{k>=0} Psi(n + k)`` over the available levels, plus a geometric tail.

    The tail ``psi[n_max] * rho / (1 - rho)`` is added when the last three
    ratios ``psi[m+1] / psi[m]`` are all at most ``rho < 0.95``.  Returns the
    sum and a flag that is set when the series had to be truncated instead.
    """
    if n < profile.n_min:
        raise RangeError(f"level {n} below the profile start {profile.n_min}")
    if n > profile.n_max:
        raise RangeError(f"level {n} beyond the profile end {profile.n_max}")
    total = math.fsum(profile[m] for m in range(n, profile.n_max + 1))
    tail, truncated = _geometric_tail(profile)
    return total + tail, truncated


def _geometric_tail(profile: ModulusProfile) -> tuple[float, bool]:
    last = profile.psi[-4:]
    if len(last) < 4:
        return 0.0, not all(p == 0.0 for p in last)
    if all(p == 0.0 for p in last):
        return 0.0, False
    if any(p == 0.0 for p in last[:-1]):
        return 0.0, True
    rho = max(b / a for a, b in zip(last[:-1], last[1:]))
    if rho >= TAIL_RATIO_MAX:
        return 0.0, True
    return last[-1] * rho / (1.0 - rho), False


@dataclass(frozen=True)
class BoundReport:
    n: int
    t: float
    n0: int
    n0_defined: bool
    axis_rhs: float
    middle_sum: float
    omega_rhs: float
    omega1_rhs: float | None
    sup_norm: float
    tail_truncated: bool
    weighting: str
    coverage_warning: bool

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def omega_bound_rhs(profile: ModulusProfile, n: int, t: float, sup_norm: float,
                    weighting: str = THEOREM) -> BoundReport:
    """Bracketed right-hand side of the omega^r bound for ``2**-(n+1) < t <= 2**-n``.

    ``theorem-statement`` weights the coarse-level terms by ``2**(k r)``,
    ``proof-final-line`` by ``2**(-k r)``; both sum over ``k = 1..n0``.
    """
    if weighting not in WEIGHTINGS:
        raise ValidationError(f"weighting must be one of {WEIGHTINGS}, got {weighting!r}")
    if not (2.0 ** -(n + 1) < t <= 2.0**-n):
        raise ValidationError(f"step t={t} does not satisfy 2**-{n + 1} < t <= 2**-{n}")
    if sup_norm < 0:
        raise ValidationError("sup_norm must be non-negative")
    r = profile.r
    axis_rhs, truncated = axis_bound_rhs(profile, n)
    n0 = n_zero(r, n)
    defined = n_zero_defined(r, n)
    terms, covered = [], True
    for k in range(1, n0 + 1 if defined else 1):
        m = n - k
        if m < profile.n_min:
            covered = False
            m = profile.n_min
        weight = 2.0 ** (k * r) if weighting == THEOREM else 2.0 ** (-k * r)
        terms.append(weight * profile[m])
    if not covered:
        warnings.warn(
            f"Psi below level {profile.n_min} needed for n={n}; substituted Psi({profile.n_min})",
            CoverageWarning, stacklevel=2,
        )
    middle = math.fsum(terms)
    omega_rhs = axis_rhs + middle + t**r * sup_norm
    return BoundReport(
        n=n, t=t, n0=n0, n0_defined=defined, axis_rhs=axis_rhs, middle_sum=middle,
        omega_rhs=omega_rhs, omega1_rhs=axis_rhs if r == 1 else None, sup_norm=sup_norm,
        tail_truncated=truncated, weighting=weighting, coverage_warning=not covered,
    )


# --- sampling estimators of the continuous moduli ---------------------------------


def _scan(source, r: int, base: np.ndarray, vecs: np.ndarray,
          sub: int = 0) -> tuple[np.ndarray, float]:
    """Per step vector ``v``: max |Delta^r_v f(x)| over admissible base points.

    With ``sub = 0`` the base points are the rows of ``base``.  With
    ``sub > 0`` each segment is also slid back through its lattice point:
    base points ``p - (j / sub) v`` for ``j = 0..r*sub``, so every node of
    the segment visits ``p``.  A base point is admissible when ``x`` and
    ``x + r v`` lie in the cube.  Also returns max |f| over the evaluated
    points.
    """
    coef = np.array([(-1) ** (r - k) * math.comb(r, k) for k in range(r + 1)], dtype=float)
    step = max(sub, 1)
    shifts = range(r * sub + 1)
    # node k of shift j sits at offset (k*step - j) / step along v
    offsets = range(-r * sub, r * step + 1)
    best = np.zeros(len(vecs))
    fmax = 0.0
    chunk = max(1, (1 << 20) // max(1, base.shape[0] * len(offsets)))
    for s0 in range(0, len(vecs), chunk):
        v = vecs[s0:s0 + chunk]
        vals, inside = {}, {}
        for i in offsets:
            pts = base[None, :, :] + (i / step) * v[:, None, :]
            ins = np.all(np.abs(pts - 0.5) <= 0.5 + 1e-12, axis=-1)
            inside[i] = ins
            if not ins.any():
                continue
            np.clip(pts, 0.0, 1.0, out=pts)
            vals[i] = np.asarray(source(pts), dtype=float)
            fmax = max(fmax, float(np.max(np.abs(vals[i][ins]))))
        got = np.zeros(len(v))
        for j in shifts:
            lo, hi = -j, r * step - j
            if lo not in vals or hi not in vals:
                continue
            ok = inside[lo] & inside[hi]
            acc = coef[0] * vals[lo]
            for k in range(1, r + 1):
                acc = acc + coef[k] * vals[k * step - j]
            np.abs(acc, out=acc)
            acc[~ok] = 0.0
            np.maximum(got, acc.max(axis=1), out=got)
        best[s0:s0 + chunk] = got
    return best, fmax


def _lattice(d: int, level: int) -> np.ndarray:
    ax = np.arange((1 << level) + 1, dtype=float) / (1 << level)
    return np.stack(np.meshgrid(*[ax] * d, indexing="ij"), -1).reshape(-1, d)


def _uniform_lattice(d: int, res: int) -> np.ndarray:
    ax = np.arange(res + 1, dtype=float) / res
    return np.stack(np.meshgrid(*[ax] * d, indexing="ij"), -1).reshape(-1, d)


def directional_modulus_estimate(source, r: int, i: int, u: float, base_res: int = 16) -> float:
    """Lower estimate of the axis modulus ``omega^r_{e_i}(f, u)``.

    Maximum of |Delta^r_{h e_i} f(x)| over base points ``x`` on the lattice
    ``{j / base_res}**d``, slid along the axis in half steps, and steps
    ``h = u j / base_res`` for ``j = 1..base_res``.  Multiplying ``base_res``
    by an integer refines both sets, so the estimate never decreases under
    such refinement.
    """
    _check_order(r)
    if not u > 0:
        raise ValidationError("u must be positive")
    if base_res < 16:
        raise ValidationError("base_res must be at least 16")
    e = np.zeros(source.d)
    if not 0 <= i < source.d:
        raise ValidationError(f"axis {i} outside 0..{source.d - 1}")
    e[i] = 1.0
    steps = u * (np.arange(1, base_res + 1) / base_res)
    best, _ = _scan(source, r, _uniform_lattice(source.d, base_res), steps[:, None] * e[None, :],
                    SHIFT_SUBDIVISION)
    return float(best.max())


def sample_directions(d: int, dir_count: int, seed: int) -> np.ndarray:
    """The ``d`` axis directions followed by ``dir_count - d`` quasi-random unit vectors.

    In 2-d the extra directions are equally spaced angles on a half circle
    with a seeded random offset; in higher dimensions they come from a
    scrambled Sobol sequence pushed onto the sphere.  Antipodal directions
    are redundant for |Delta^r| and are not generated.
    """
    if dir_count < 2 * d:
        raise ValidationError(f"dir_count must be at least 2d = {2 * d}")
    axes = np.eye(d)
    extra = dir_count - d
    if d == 1:
        return axes
    rng = np.random.default_rng(seed)
    if d == 2:
        theta = np.pi * (rng.random() + np.arange(extra)) / extra
        more = np.stack([np.cos(theta), np.sin(theta)], -1)
    else:
        from scipy.stats import norm, qmc

        # draw a power-of-two block (keeps scipy's balance check quiet), keep the prefix
        m = max(0, math.ceil(math.log2(extra)))
        pts = qmc.Sobol(d, scramble=True, seed=rng).random_base2(m)[:extra]
        g = norm.ppf(np.clip(pts, 1e-12, 1 - 1e-12))
        more = g / np.linalg.norm(g, axis=1, keepdims=True)
    return np.vstack([axes, more])


def step_octaves(t: float, base_res: int, min_step: float):
    """Yield ``(m, steps)`` for the step set ``{j 2**-m / base_res : base_res/2 < j <= base_res}``.

    Only steps in ``[min_step, t]`` are kept.  The set does not depend on
    ``t``, which makes ``omega_estimate`` non-decreasing in ``t``.
    """
    js = np.arange(base_res // 2 + 1, base_res + 1)
    m = 0
    while 2.0**-m >= min_step:
        hs = js / base_res * 2.0**-m
        hs = hs[(hs <= t) & (hs >= min_step)]
        if hs.size:
            yield m, hs
        m += 1


def _lattice_level(m: int, base_res: int, d: int, lattice_budget: int) -> int:
    want = max(math.ceil(math.log2(base_res)), m + math.ceil(math.log2(base_res)))
    cap = max(math.ceil(math.log2(base_res)), int(math.log2(lattice_budget)) // d)
    return min(want, cap)


def omega_estimate(source, r: int, t: float, dir_count: int = 64, base_res: int = 16,
                   seed: int = 0, min_step: float = 2.0**-10,
                   lattice_budget: int = 1 << 13) -> float:
    """Lower estimate of ``omega^r(f, t)`` by deterministic sampling.

    Directions come from ``sample_directions``; steps from ``step_octaves``;
    for steps in octave ``m`` the base points form the dyadic lattice of
    level ``m + log2(base_res)``, capped so that it holds about
    ``lattice_budget`` points.  Where the cap bites, each segment is also
    slid through the lattice points in half steps, so features on the
    coarse lattice stay visible at small steps.  Deterministic for fixed
    arguments.
    """
    return omega_curve(source, r, [t], dir_count, base_res, seed, min_step, lattice_budget)[0][0]


def omega_curve(source, r: int, ts: Sequence[float], dir_count: int = 64, base_res: int = 16,
                seed: int = 0, min_step: float = 2.0**-10,
                lattice_budget: int = 1 << 13) -> tuple[list[float], float]:
    """``omega_estimate`` at several ``t`` sharing one scan, plus max |f| seen."""
    _check_order(r)
    if base_res < 2:
        raise ValidationError("base_res must be at least 2")
    if any(not t > 0 for t in ts):
        raise ValidationError("t must be positive")
    d = source.d
    dirs = sample_directions(d, dir_count, seed)
    t_max = max(ts)
    by_octave = []  # (step, best value over directions and base points)
    fmax = 0.0
    for m, hs in step_octaves(t_max, base_res, min_step):
        level = _lattice_level(m, base_res, d, lattice_budget)
        capped = level < m + math.ceil(math.log2(base_res))
        base = _lattice(d, level)
        vecs = (hs[:, None, None] * dirs[None, :, :]).reshape(-1, d)
        best, fm = _scan(source, r, base, vecs, SHIFT_SUBDIVISION if capped else 0)
        fmax = max(fmax, fm)
        for h, val in zip(hs, best.reshape(len(hs), len(dirs)).max(axis=1)):
            by_octave.append((float(h), float(val)))
    out = []
    for t in ts:
        vals = [v for h, v in by_octave if h <= t]
        out.append(max(vals, default=0.0))
    return out, fmax
