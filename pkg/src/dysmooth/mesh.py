"""Dyadic grids on the unit cube, sampled fields and their JSON file format.

A level-``n`` grid in dimension ``d`` holds the points ``k / 2**n`` for every
multi-index ``k`` with ``0 <= k_j <= 2**n``.  Sample values are stored flat in
lexicographic order with the last axis varying fastest, which is exactly
``numpy``'s C order for an array of shape ``(2**n + 1,) * d``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np

from .errors import CapacityError, DomainError, FormatError, ResolutionError, ValidationError

MAX_DIMENSION = 4
MAX_POINTS_LOG2 = 24  # n * d <= 24
POINT_TOL = 1e-12
FILE_ORDER = "lex-last-fastest"


@dataclass(frozen=True)
class DyadicGrid:
    d: int
    n: int

    def __post_init__(self):
        if not isinstance(self.d, (int, np.integer)) or not isinstance(self.n, (int, np.integer)):
            raise ValidationError("grid dimension and level must be integers")
        if not 1 <= self.d <= MAX_DIMENSION:
            raise CapacityError(f"dimension {self.d} outside 1..{MAX_DIMENSION}")
        if self.n < 0:
            raise ValidationError(f"level must be non-negative, got {self.n}")
        if self.n * self.d > MAX_POINTS_LOG2:
            raise CapacityError(
                f"level {self.n} exceeds the memory cap n <= {MAX_POINTS_LOG2 // self.d} for d={self.d}"
            )

    @property
    def size(self) -> int:
        """Points per axis, ``2**n + 1``."""
        return (1 << self.n) + 1

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.size,) * self.d

    @property
    def num_points(self) -> int:
        return self.size**self.d

    @property
    def step(self) -> float:
        return 1.0 / (1 << self.n)

    def axis(self) -> np.ndarray:
        """Coordinates along one axis; exact dyadic rationals."""
        return np.arange(self.size, dtype=float) / (1 << self.n)

    def point(self, k: Sequence[int]) -> np.ndarray:
        k = self._check_index(k)
        return np.asarray(k, dtype=float) / (1 << self.n)

    def flat(self, k: Sequence[int]) -> int:
        return int(np.ravel_multi_index(self._check_index(k), self.shape))

    def unflat(self, index: int) -> tuple[int, ...]:
        if not 0 <= index < self.num_points:
            raise ValidationError(f"flat index {index} outside 0..{self.num_points - 1}")
        return tuple(int(v) for v in np.unravel_index(index, self.shape))

    def _check_index(self, k: Sequence[int]) -> tuple[int, ...]:
        k = tuple(int(v) for v in k)
        if len(k) != self.d:
            raise ValidationError(f"multi-index has {len(k)} components, grid has d={self.d}")
        for j, kj in enumerate(k):
            if not 0 <= kj <= (1 << self.n):
                raise ValidationError(f"index component {kj} on axis {j} outside 0..{1 << self.n}")
        return k


def make_grid(d: int, n: int) -> DyadicGrid:
    return DyadicGrid(d, n)


@dataclass(frozen=True, eq=False)
class SampleField:
    """Values of a function on every point of a dyadic grid."""

    grid: DyadicGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        values = np.array(self.values, dtype=float).reshape(-1)
        if values.size != self.grid.num_points:
            raise FormatError(
                f"expected {self.grid.num_points} values for d={self.grid.d}, n={self.grid.n}, got {values.size}"
            )
        bad = np.flatnonzero(~np.isfinite(values))
        if bad.size:
            raise FormatError(f"non-finite value at flat index {int(bad[0])}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def d(self) -> int:
        return self.grid.d

    @property
    def n(self) -> int:
        return self.grid.n

    @property
    def array(self) -> np.ndarray:
        """Read-only view of shape ``(2**n + 1,) * d``."""
        return self.values.reshape(self.grid.shape)

    def __getitem__(self, k: Sequence[int]) -> float:
        return float(self.values[self.grid.flat(k)])

    def subsample(self, n: int) -> "SampleField":
        if n > self.n:
            raise ResolutionError(f"cannot sample level {n} from a level-{self.n} field")
        stride = 1 << (self.n - n)
        arr = self.array[(slice(None, None, stride),) * self.d]
        return SampleField(DyadicGrid(self.d, n), arr)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, SampleField)
            and self.grid == other.grid
            and np.array_equal(self.values, other.values)
        )


class FunctionSource(Protocol):
    """Anything that can be evaluated on points of ``[0, 1]**d``."""

    d: int

    def __call__(self, points: np.ndarray) -> np.ndarray: ...


class SampledSource:
    """A ``SampleField`` viewed as a function that only exists on its mesh."""

    analytic = False

    def __init__(self, field: SampleField):
        self.field = field
        self.d = field.d

    @property
    def level(self) -> int:
        return self.field.n

    def indices(self, points: np.ndarray) -> np.ndarray:
        """Integer mesh indices of ``points``; raises if any point is off-mesh."""
        points = np.asarray(points, dtype=float)
        scaled = points * (1 << self.level)
        idx = np.rint(scaled)
        off = np.abs(scaled - idx) > 1e-9 * (1 << self.level)
        off |= (idx < 0) | (idx > (1 << self.level))
        if np.any(off):
            first = np.argwhere(off.reshape(-1, self.d).any(axis=1))[0, 0]
            bad = points.reshape(-1, self.d)[first]
            raise ResolutionError(
                f"point {bad.tolist()} is not on the level-{self.level} mesh of the sampled source"
            )
        return idx.astype(np.int64)

    def __call__(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        idx = self.indices(points)
        flat = idx.reshape(-1, self.d)
        out = self.field.array[tuple(flat.T)]
        return out.reshape(points.shape[:-1])

    def on_axes(self, axes: Sequence[np.ndarray]) -> np.ndarray:
        """Values on the tensor grid spanned by per-axis coordinates."""
        idx = [self.indices(np.asarray(a)[:, None])[:, 0] for a in axes]
        return self.field.array[np.ix_(*idx)]

    def describe(self) -> dict:
        return {"kind": "sampled", "d": self.d, "level": self.level}


def check_point(x: Sequence[float], d: int | None = None) -> np.ndarray:
    x = np.asarray(x, dtype=float).reshape(-1)
    if d is not None and x.size != d:
        raise ValidationError(f"point has {x.size} coordinates, expected {d}")
    if np.any(x < -POINT_TOL) or np.any(x > 1 + POINT_TOL):
        raise DomainError(f"point {x.tolist()} lies outside the unit cube")
    return np.clip(x, 0.0, 1.0)


def evaluate_on_axes(source, axes: Sequence[np.ndarray]) -> np.ndarray:
    """Evaluate a source on the tensor grid spanned by ``axes`` (``ij`` order)."""
    if hasattr(source, "on_axes"):
        return np.asarray(source.on_axes(axes), dtype=float)
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    return np.asarray(source(mesh), dtype=float)


def sample(source, grid: DyadicGrid) -> SampleField:
    """Sample ``source`` on every point of ``grid``.

    Sampled sources are sub-sampled by index stride, which requires their
    level to be at least the grid's.
    """
    if source.d != grid.d:
        raise ValidationError(f"source has d={source.d}, grid has d={grid.d}")
    if isinstance(source, SampledSource):
        return source.field.subsample(grid.n)
    values = evaluate_on_axes(source, [grid.axis()] * grid.d)
    return SampleField(grid, values)


def store_samples(field: SampleField, path) -> None:
    values = ", ".join(format(float(v), ".17g") for v in field.values)
    text = (
        "{"
        f'"dimension": {field.d}, "level": {field.n}, "order": "{FILE_ORDER}", '
        f'"values": [{values}]'
        "}\n"
    )
    Path(path).write_text(text)


def load_samples(path) -> SampleField:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not valid JSON ({exc.msg} at line {exc.lineno})") from None
    return field_from_document(doc)


def field_from_document(doc) -> SampleField:
    if not isinstance(doc, dict):
        raise FormatError("sample file must hold a JSON object")
    for key in ("dimension", "level", "values"):
        if key not in doc:
            raise FormatError(f"sample file is missing '{key}'")
    order = doc.get("order", FILE_ORDER)
    if order != FILE_ORDER:
        raise FormatError(f"unsupported value order '{order}', expected '{FILE_ORDER}'")
    d, n, values = doc["dimension"], doc["level"], doc["values"]
    if not isinstance(d, int) or not isinstance(n, int):
        raise FormatError("'dimension' and 'level' must be integers")
    if not isinstance(values, list):
        raise FormatError("'values' must be an array")
    grid = DyadicGrid(d, n)
    if len(values) != grid.num_points:
        raise FormatError(
            f"expected {grid.num_points} values for dimension {d}, level {n}; found {len(values)}"
        )
    for i, v in enumerate(values):
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise FormatError(f"non-numeric value at flat index {i}")
        if not math.isfinite(v):
            raise FormatError(f"non-finite value {v!r} at flat index {i}")
    return SampleField(grid, np.asarray(values, dtype=float))
