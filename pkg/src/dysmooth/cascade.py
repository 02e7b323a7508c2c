"""Basic cubes, the nested tensor-product Lagrange spline stages, and their telescoping sum.

For ``r >= 2`` the basic cube has side ``2 (r-1) 2**-n`` and stage ``k``
splits it into ``2**k`` cells per axis.  Each cell carries the tensor
Lagrange interpolant of ``f`` on its ``r**d`` uniform nodes, spaced
``h_k = 2**(-n-k+1)``.  Neighbouring cells share their face nodes, so node
values are stored once on the stage lattice of ``2**k (r-1) + 1`` points per
axis.  For ``r = 1`` each cell holds the value of ``f`` at its lowest corner.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .certificates import lemma_constant_dd
from .errors import DomainError, InvariantError, ResolutionError, ValidationError
from .fdiff import _check_order, diff_along_axis, forward_diff
from .mesh import POINT_TOL, DyadicGrid, SampledSource, check_point, evaluate_on_axes, sample
from .moduli import discrete_modulus

SAMPLE_BLOCK = 1 << 20


@dataclass(frozen=True)
class Cube:
    """Axis-parallel cube ``anchor + side * [0, 1]**d``.

    ``half_open`` marks the r = 1 cubes, whose cells are closed on the left;
    the cube's own right face still belongs to its last cell.
    """

    anchor: tuple[float, ...]
    side: float
    half_open: bool = False
    index: tuple[int, ...] | None = None
    n: int | None = None

    @property
    def d(self) -> int:
        return len(self.anchor)

    def contains(self, x, tol: float = POINT_TOL) -> bool:
        x = np.asarray(x, dtype=float)
        lo = np.asarray(self.anchor)
        return bool(np.all(x >= lo - tol) and np.all(x <= lo + self.side + tol))

    def as_dict(self) -> dict:
        return {
            "anchor": list(self.anchor),
            "side": self.side,
            "half_open": self.half_open,
            "index": list(self.index) if self.index is not None else None,
            "n": self.n,
        }


def select_basic_cube(u: Sequence[float], i: int, t: float, r: int, n: int) -> Cube:
    """Mesh-anchored cube inside ``[0, 1]**d`` holding both ``u`` and ``u + r t e_i``.

    ``i`` is a 0-based axis.  Coordinates at or below 1/2 anchor from the
    left, ``k_j = min(floor(2**n u_j), 2**n - 2(r-1))``; coordinates above 1/2
    anchor from the right using ``u_j + r t``.  All arithmetic is exact.
    """
    _check_order(r)
    d = len(u)
    if not 0 <= i < d:
        raise ValidationError(f"axis {i} outside 0..{d - 1}")
    if n < 0:
        raise ValidationError("level n must be non-negative")
    uq = [Fraction(float(c)) for c in u]
    tq = Fraction(float(t))
    scale = 1 << n
    if not tq > 0:
        raise ValidationError("constraint violated: t > 0")
    if tq > Fraction(1, 2 * scale):
        raise ValidationError(f"constraint violated: t <= 2**-(n+1) (t={t}, n={n})")
    if r >= 2 and 2 * (r - 1) > scale:
        raise ValidationError(f"constraint violated: r - 1 <= 2**(n-1) (r={r}, n={n})")
    if r == 1 and n < 1:
        raise ValidationError("constraint violated: n >= 1 so that a side-2**(1-n) cube fits for r = 1")
    end = list(uq)
    end[i] += r * tq
    for label, p in (("u", uq), ("u + r t e_i", end)):
        if any(c < 0 or c > 1 for c in p):
            raise ValidationError(f"constraint violated: {label} must lie in the unit cube")

    width = 2 * (r - 1) if r >= 2 else 2
    k = []
    for j, uj in enumerate(uq):
        if uj <= Fraction(1, 2):
            kj = min(math.floor(scale * uj), scale - width)
        else:
            u_tilde = uj + r * tq
            # the right-anchored count cannot go negative: clamp at the right face
            k_tilde = max(0, min(math.floor(scale * (1 - u_tilde)), scale - width))
            kj = scale - k_tilde - width
        k.append(kj)

    anchor = tuple(float(Fraction(kj, scale)) for kj in k)
    cube = Cube(anchor, width / scale, half_open=(r == 1), index=tuple(k), n=n)
    lo = [Fraction(kj, scale) for kj in k]
    for p in (uq, end):
        if not all(l <= c <= l + Fraction(width, scale) for l, c in zip(lo, p)):
            raise InvariantError(f"basic cube {cube} misses a segment endpoint")
    if any(l < 0 or l + Fraction(width, scale) > 1 for l in lo):
        raise InvariantError(f"basic cube {cube} leaves the unit cube")
    return cube


def lagrange_basis(s: np.ndarray, r: int) -> np.ndarray:
    """Values of the r Lagrange basis polynomials for nodes 0..r-1 at ``s``; shape (len(s), r)."""
    s = np.asarray(s, dtype=float)
    out = np.ones((s.size, r))
    for a in range(r):
        for b in range(r):
            if b != a:
                out[:, a] *= (s - b) / (a - b)
    return out


@dataclass(frozen=True, eq=False)
class PiecewiseSpline:
    """Tensor-product piecewise polynomial of coordinate degree < r on a cube.

    ``values`` lives on the node lattice: ``cells * (r-1) + 1`` points per axis
    spaced ``h`` for r >= 2, or one value per cell (at its lowest corner)
    for r = 1, where ``h`` is the cell side.
    """

    r: int
    cube: Cube
    cells: int
    h: float
    values: np.ndarray = field(repr=False)
    stage: int = 0
    analytic = True

    def __post_init__(self):
        per_axis = self.cells * (self.r - 1) + 1 if self.r >= 2 else self.cells
        vals = np.array(self.values, dtype=float)
        if vals.shape != (per_axis,) * self.cube.d:
            raise ValidationError(f"node values have shape {vals.shape}, expected {(per_axis,) * self.cube.d}")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def d(self) -> int:
        return self.cube.d

    @property
    def cell_side(self) -> float:
        return self.h * (self.r - 1) if self.r >= 2 else self.h

    def node_axis(self, axis: int) -> np.ndarray:
        return self.cube.anchor[axis] + np.arange(self.values.shape[axis]) * self.h

    def cell_values(self, cell: Sequence[int]) -> np.ndarray:
        """The r**d node values of one cell (a single value when r = 1)."""
        if self.r == 1:
            return self.values[tuple(cell)].reshape((1,) * self.d)
        idx = tuple(slice(c * (self.r - 1), c * (self.r - 1) + self.r) for c in cell)
        return self.values[idx]

    def axis_weights(self, x: np.ndarray, axis: int) -> tuple[np.ndarray, np.ndarray]:
        """Node indices and Lagrange weights, each (len(x), r), along one axis.

        Points on a shared face go to the lower cell (r >= 2); for r = 1 the
        cells are half-open on the right, except the last one.
        """
        x = np.asarray(x, dtype=float)
        lo = self.cube.anchor[axis]
        if np.any(x < lo - POINT_TOL) or np.any(x > lo + self.cube.side + POINT_TOL):
            raise DomainError(f"coordinate outside the spline's cube on axis {axis}")
        s = (x - lo) / self.cell_side
        if self.r == 1:
            c = np.clip(np.floor(s), 0, self.cells - 1).astype(np.int64)
            return c[:, None], np.ones((x.size, 1))
        c = np.clip(np.ceil(s) - 1, 0, self.cells - 1).astype(np.int64)
        local = (x - (lo + c * self.cell_side)) / self.h
        idx = c[:, None] * (self.r - 1) + np.arange(self.r)[None, :]
        return idx, lagrange_basis(local, self.r)

    def on_axes(self, axes: Sequence[np.ndarray]) -> np.ndarray:
        """Values on the tensor grid spanned by ``axes``."""
        out = self.values
        for a, coords in enumerate(axes):
            idx, w = self.axis_weights(np.asarray(coords, dtype=float).reshape(-1), a)
            shape = [1] * out.ndim
            shape[a] = -1
            acc = None
            for m in range(idx.shape[1]):
                term = np.take(out, idx[:, m], axis=a) * w[:, m].reshape(shape)
                acc = term if acc is None else acc + term
            out = acc
        return out

    def __call__(self, points) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        if points.shape[-1] != self.d:
            raise ValidationError(f"points need {self.d} coordinates")
        flat = points.reshape(-1, self.d)
        per_axis = [self.axis_weights(flat[:, a], a) for a in range(self.d)]
        width = per_axis[0][0].shape[1]
        total = np.zeros(len(flat))
        for combo in itertools.product(range(width), repeat=self.d):
            idx = tuple(per_axis[a][0][:, m] for a, m in enumerate(combo))
            w = np.ones(len(flat))
            for a, m in enumerate(combo):
                w = w * per_axis[a][1][:, m]
            total += w * self.values[idx]
        return total.reshape(points.shape[:-1])

    def describe(self) -> dict:
        return {"kind": "spline", "r": self.r, "stage": self.stage, "cube": self.cube.as_dict()}


def evaluate(spline: PiecewiseSpline, x) -> float:
    """Value of the spline at one point of its cube."""
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != spline.d:
        raise ValidationError(f"point needs {spline.d} coordinates")
    if not spline.cube.contains(x):
        raise DomainError(f"point {x.tolist()} lies outside the spline's cube")
    return float(spline(x[None, :])[0])


def build_stage(source, cube: Cube, n: int, k: int, r: int) -> PiecewiseSpline:
    """Stage-k spline ``S_{n+k}`` of ``source`` on ``cube`` (2**k cells per axis)."""
    _check_order(r)
    if k < 0:
        raise ValidationError("stage k must be non-negative")
    cells = 1 << k
    h = 2.0 ** (-n + 1 - k)
    per_axis = cells * (r - 1) + 1 if r >= 2 else cells
    axes = [cube.anchor[a] + np.arange(per_axis) * h for a in range(cube.d)]
    for a, coords in enumerate(axes):
        scaled = coords * 2.0 ** (n + k)
        if not np.array_equal(scaled, np.round(scaled)):
            raise InvariantError(f"stage-{k} nodes on axis {a} are off the level-{n + k} mesh")
    if isinstance(source, SampledSource) and source.level < n + k:
        first = [float(c[1] if len(c) > 1 else c[0]) for c in axes]
        raise ResolutionError(
            f"stage {k} needs level {n + k} data, source has level {source.level}; first missing node {first}"
        )
    values = evaluate_on_axes(source, axes)
    return PiecewiseSpline(r, cube, cells, h, values, stage=k)


def dense_axes(spline: PiecewiseSpline, density: int | None = None) -> list[np.ndarray]:
    """Per-axis sample points: ``density`` (default 4r) per cell, cell faces included for r >= 2."""
    density = density or 4 * spline.r
    if spline.r == 1:
        frac = np.arange(density) / density
    else:
        frac = np.linspace(0.0, 1.0, density)
    out = []
    for a in range(spline.d):
        starts = spline.cube.anchor[a] + np.arange(spline.cells) * spline.cell_side
        out.append((starts[:, None] + spline.cell_side * frac[None, :]).reshape(-1))
    return out


def _blocked_max(fn, axes: list[np.ndarray]) -> float:
    """max |fn(axes)| evaluated in blocks along the first axis."""
    rest = int(np.prod([len(a) for a in axes[1:]])) if len(axes) > 1 else 1
    block = max(1, SAMPLE_BLOCK // rest)
    best = 0.0
    for s in range(0, len(axes[0]), block):
        part = [axes[0][s:s + block]] + list(axes[1:])
        best = max(best, float(np.max(np.abs(fn(part)))))
    return best


def spline_sup_norm(spline: PiecewiseSpline, density: int | None = None) -> tuple[float, int]:
    density = density or 4 * spline.r
    return _blocked_max(spline.on_axes, dense_axes(spline, density)), density


def _same_cube(a: Cube, b: Cube) -> bool:
    return a.anchor == b.anchor and a.side == b.side


def stage_diff_norm(next: PiecewiseSpline, prev: PiecewiseSpline, density: int | None = None) -> float:
    """Sampled ``||S_next - S_prev||`` on the cube, 4r points per axis per finer cell."""
    if next.r != prev.r or not _same_cube(next.cube, prev.cube):
        raise ValidationError("stage pairing error: splines live on different cubes or orders")
    if next.stage not in (prev.stage, prev.stage + 1):
        raise ValidationError(f"stage pairing error: stages {prev.stage} and {next.stage} are not consecutive")
    axes = dense_axes(next, density)
    return _blocked_max(lambda ax: next.on_axes(ax) - prev.on_axes(ax), axes)


def reconstruction_error(source, spline: PiecewiseSpline, density: int | None = None,
                         axes: list[np.ndarray] | None = None) -> float:
    """Sampled ``||f - S||`` on the spline's cube.

    Analytic sources are compared on the dense per-cell samples (or on
    ``axes`` when given, so several stages can share one grid); sampled
    sources only on their own mesh points inside the cube.
    """
    if axes is not None:
        pass
    elif isinstance(source, SampledSource):
        step = 2.0**-source.level
        axes = []
        for a in range(spline.d):
            lo, hi = spline.cube.anchor[a], spline.cube.anchor[a] + spline.cube.side
            first = math.ceil(lo / step - 1e-9)
            last = math.floor(hi / step + 1e-9)
            axes.append(np.arange(first, last + 1) * step)
    else:
        axes = dense_axes(spline, density)
    return _blocked_max(lambda ax: evaluate_on_axes(source, ax) - spline.on_axes(ax), axes)


@dataclass
class CascadeReport:
    cube: Cube
    r: int
    n: int
    axis: int
    u: tuple[float, ...]
    t: float
    diff_norms: list[float]
    psi: list[float | None]
    constant: float
    margins: list[float | None]
    reconstruction_errors: list[float]
    stage0_difference: float
    lhs: float | None
    rhs: float
    scale: float
    density: int

    @property
    def bound_holds(self) -> bool:
        tol = 1e-10 * max(self.scale, 1e-300)
        return all(m is None or m >= -tol for m in self.margins)

    @property
    def stage0_annihilated(self) -> bool:
        return abs(self.stage0_difference) <= 1e-9 * max(self.scale, 1.0)

    @property
    def mechanism_holds(self) -> bool:
        return self.lhs is None or self.lhs <= self.rhs + 1e-12 * max(self.scale, 1.0)

    def as_dict(self) -> dict:
        return {
            "cube": self.cube.as_dict(),
            "r": self.r,
            "n": self.n,
            "axis": self.axis + 1,
            "u": list(self.u),
            "t": self.t,
            "constant_c_r_d": self.constant,
            "stages": [
                {"k": k + 1, "diff_norm": dn, "psi_n_k_minus_1": p, "margin": m,
                 "reconstruction_error": e}
                for k, (dn, p, m, e) in enumerate(
                    zip(self.diff_norms, self.psi, self.margins, self.reconstruction_errors[1:]))
            ],
            "reconstruction_error_stage0": self.reconstruction_errors[0],
            "stage0_difference": self.stage0_difference,
            "difference_at_u": self.lhs,
            "telescoped_bound": self.rhs,
            "checks": {
                "stage_bound": self.bound_holds,
                "stage0_annihilated": self.stage0_annihilated,
                "difference_mechanism": self.mechanism_holds,
            },
            "sampling_density": self.density,
        }

    def to_csv(self) -> str:
        lines = ["k,diff_norm,psi,margin,reconstruction_error"]
        for k, (dn, p, m, e) in enumerate(zip(self.diff_norms, self.psi, self.margins,
                                              self.reconstruction_errors[1:])):
            lines.append(f"{k + 1},{dn!r},{p!r},{m!r},{e!r}")
        return "\n".join(lines) + "\n"


def cascade_reconstruct(source, u: Sequence[float], i: int, t: float, r: int, n: int, K: int,
                        density: int | None = None, with_psi: bool = True) -> CascadeReport:
    """Run stages 0..K on the basic cube of ``(u, i, t)`` and collect the bound's ingredients.

    Reports the stage differences against ``c(r, d) * Psi_r(n + k - 1)``,
    the reconstruction errors ``||f - S_{n+k}||``, the vanishing of
    ``Delta^r_{t e_i} S_n(u)``, and ``|Delta^r_{t e_i} f(u)|`` next to the
    telescoped bound ``2**r * (sum_k ||S_{n+k} - S_{n+k-1}|| + ||f - S_{n+K}||)``.
    """
    if K < 0:
        raise ValidationError("K must be non-negative")
    u = tuple(float(c) for c in check_point(u, source.d))
    cube = select_basic_cube(u, i, t, r, n)
    density = density or 4 * r
    stages = [build_stage(source, cube, n, k, r) for k in range(K + 1)]
    norms = [stage_diff_norm(stages[k], stages[k - 1], density) for k in range(1, K + 1)]
    # one grid for every stage, fine enough for the last one, so the errors compare
    shared = None if isinstance(source, SampledSource) else dense_axes(stages[-1], density)
    errors = [reconstruction_error(source, s, density, shared) for s in stages]
    const = lemma_constant_dd(r, source.d).value

    psi: list[float | None] = []
    for k in range(1, K + 1):
        level = n + k - 1
        if not with_psi or (1 << level) < r or level * source.d > 24:
            psi.append(None)
            continue
        psi.append(discrete_modulus(sample(source, DyadicGrid(source.d, level)), r).value)
    margins = [None if p is None else const * p - dn for p, dn in zip(psi, norms)]

    e = np.zeros(source.d)
    e[i] = 1.0
    seg = np.asarray(u)[None, :] + (np.arange(r + 1) * t)[:, None] * e[None, :]
    stage0_diff = forward_diff(stages[0](seg), r)
    try:
        lhs = abs(forward_diff(np.asarray(source(seg), dtype=float), r))
    except ResolutionError:
        lhs = None
    rhs = abs(stage0_diff) + 2**r * (math.fsum(norms) + errors[-1])
    scale = float(np.max(np.abs(stages[-1].values))) if stages[-1].values.size else 0.0
    return CascadeReport(cube, r, n, i, u, t, norms, psi, const, margins, errors,
                         stage0_diff, lhs, rhs, scale, density)


# --- local lemma configurations ------------------------------------------------


@dataclass(frozen=True, eq=False)
class LemmaInstance:
    """A function g on ``a + 2(r-1) h [0,1]**d``, piecewise in P_{r,d} on 2**d cells.

    ``values`` holds g on the integer-offset nodes ``a + v h``,
    ``v in {0..2(r-1)}**d``; it must vanish wherever every ``v_j`` is even.
    """

    r: int
    d: int
    h: float
    anchor: tuple[float, ...]
    values: np.ndarray = field(repr=False)

    def validate(self) -> None:
        side = 2 * self.r - 1
        if self.r < 2:
            raise ValidationError("Lemma instances need r >= 2")
        if self.values.shape != (side,) * self.d:
            raise ValidationError(f"values must have shape {(side,) * self.d}")
        if len(self.anchor) != self.d or not self.h > 0:
            raise ValidationError("anchor needs d coordinates and h must be positive")
        even = self.values[(slice(None, None, 2),) * self.d]
        if np.any(even != 0.0):
            bad = np.argwhere(even != 0.0)[0] * 2
            raise ValidationError(f"value at all-even node {bad.tolist()} must be zero")

    def spline(self) -> PiecewiseSpline:
        cube = Cube(tuple(self.anchor), 2 * (self.r - 1) * self.h)
        return PiecewiseSpline(self.r, cube, 2, self.h, self.values, stage=1)

    def as_dict(self) -> dict:
        return {"r": self.r, "d": self.d, "h": self.h, "anchor": list(self.anchor),
                "values": self.values.reshape(-1).tolist()}

    @classmethod
    def from_dict(cls, doc: dict) -> "LemmaInstance":
        r, d = int(doc["r"]), int(doc["d"])
        vals = np.asarray(doc["values"], dtype=float).reshape((2 * r - 1,) * d)
        inst = cls(r, d, float(doc["h"]), tuple(float(a) for a in doc["anchor"]), vals)
        inst.validate()
        return inst


def make_lemma_instance(r: int, d: int, h: float = 1.0, a: Sequence[float] | None = None,
                        seed: int | None = None, values=None) -> LemmaInstance:
    """A valid instance: zeros on all-even nodes, seeded uniform [-1, 1] elsewhere (or given values)."""
    if r < 2:
        raise ValidationError("make_lemma_instance needs r >= 2; r = 1 is the trivial constant case")
    side = 2 * r - 1
    anchor = tuple(float(c) for c in (a if a is not None else (0.0,) * d))
    if values is None:
        rng = np.random.default_rng(seed)
        vals = rng.uniform(-1.0, 1.0, (side,) * d)
        vals[(slice(None, None, 2),) * d] = 0.0
    else:
        vals = np.array(values, dtype=float).reshape((side,) * d)
    inst = LemmaInstance(r, d, float(h), anchor, vals)
    inst.validate()
    return inst


def lemma_differences(instance: LemmaInstance) -> np.ndarray:
    """All ``Delta^r_{h e_i} g(a + v_i h)`` with ``v_{i,i} <= r-2``, flattened."""
    parts = [diff_along_axis(instance.values, i, instance.r).reshape(-1) for i in range(instance.d)]
    return np.concatenate(parts)
