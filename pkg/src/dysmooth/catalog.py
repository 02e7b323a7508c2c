"""Built-in analytic test functions on ``[0, 1]**d``.

Every entry evaluates arrays of points of shape ``(..., d)`` and, more
cheaply, tensor grids given by per-axis coordinate vectors.  Axes are
0-based here; the CLI translates from the 1-based flags.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import ValidationError


def _ipow(x: np.ndarray, e: int) -> np.ndarray:
    # repeated products stay exact on dyadic inputs, unlike libm pow
    out = np.ones_like(x)
    for _ in range(e):
        out = out * x
    return out


class Analytic:
    """Base class: subclasses implement ``_eval`` on broadcastable coordinates."""

    analytic = True
    name = "analytic"
    d: int

    def _eval(self, coords: Sequence[np.ndarray]) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, points) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        if points.shape[-1] != self.d:
            raise ValidationError(f"{self.name} expects points with {self.d} coordinates")
        coords = [points[..., j] for j in range(self.d)]
        return np.broadcast_to(self._eval(coords), points.shape[:-1]).astype(float)

    def on_axes(self, axes: Sequence[np.ndarray]) -> np.ndarray:
        coords = np.meshgrid(*[np.asarray(a, dtype=float) for a in axes], indexing="ij", sparse=True)
        shape = tuple(len(a) for a in axes)
        return np.array(np.broadcast_to(self._eval(coords), shape), dtype=float)

    def describe(self) -> dict:
        raise NotImplementedError

    @property
    def holder_exponent(self) -> float | None:
        return None


@dataclass(frozen=True)
class Poly(Analytic):
    """Sum of monomials ``coef * prod_j x_j**e_j``."""

    d: int
    coefficients: Mapping[tuple[int, ...], float] = field(default_factory=dict)
    name = "poly"

    def __post_init__(self):
        coeffs = {}
        for exps, c in dict(self.coefficients).items():
            exps = tuple(int(e) for e in exps)
            if len(exps) != self.d or min(exps, default=0) < 0:
                raise ValidationError(f"monomial exponent {exps} invalid for d={self.d}")
            coeffs[exps] = coeffs.get(exps, 0.0) + float(c)
        object.__setattr__(self, "coefficients", dict(sorted(coeffs.items())))

    @classmethod
    def random(cls, rng: np.random.Generator, d: int, r: int) -> "Poly":
        """Random member of P_{r,d}: every exponent < r, coefficients in [-1, 1]."""
        exps = np.stack(np.meshgrid(*[np.arange(r)] * d, indexing="ij"), -1).reshape(-1, d)
        coefs = rng.uniform(-1.0, 1.0, len(exps))
        return cls(d, {tuple(int(v) for v in e): float(c) for e, c in zip(exps, coefs)})

    @classmethod
    def monomial(cls, d: int, exponents: Sequence[int], coef: float = 1.0) -> "Poly":
        return cls(d, {tuple(exponents): coef})

    def coordinate_degree(self, axis: int) -> int:
        live = [e[axis] for e, c in self.coefficients.items() if c != 0.0]
        return max(live, default=-1)

    def _eval(self, coords):
        total = np.zeros(())
        cache: dict[tuple[int, int], np.ndarray] = {}
        for exps, c in self.coefficients.items():
            term = np.asarray(c)
            for j, e in enumerate(exps):
                if e:
                    if (j, e) not in cache:
                        cache[j, e] = _ipow(coords[j], e)
                    term = term * cache[j, e]
            total = total + term
        return total

    def abs_sum(self) -> float:
        """Sum of |coefficients|; bounds |f| on the unit cube."""
        return float(sum(abs(c) for c in self.coefficients.values()))

    def describe(self) -> dict:
        return {
            "name": self.name,
            "d": self.d,
            "coefficients": [[list(e), c] for e, c in self.coefficients.items()],
        }


@dataclass(frozen=True)
class AbsPower(Analytic):
    """``|x_axis - center| ** alpha``."""

    d: int
    axis: int = 0
    center: float = 0.5
    alpha: float = 1.0
    name = "abs-power"

    def __post_init__(self):
        if not 0 <= self.axis < self.d:
            raise ValidationError(f"axis {self.axis} outside 0..{self.d - 1}")
        if not self.alpha > 0:
            raise ValidationError("alpha must be positive")

    def _eval(self, coords):
        return np.abs(coords[self.axis] - self.center) ** self.alpha

    @property
    def holder_exponent(self) -> float:
        return self.alpha

    def describe(self) -> dict:
        return {"name": self.name, "d": self.d, "axis": self.axis, "center": self.center, "alpha": self.alpha}


@dataclass(frozen=True)
class RadialPower(Analytic):
    """``||x - center||_2 ** alpha``."""

    d: int
    center: tuple[float, ...] = ()
    alpha: float = 1.0
    name = "radial-power"

    def __post_init__(self):
        center = tuple(float(c) for c in self.center) or (0.5,) * self.d
        if len(center) == 1 and self.d > 1:
            center = center * self.d
        if len(center) != self.d:
            raise ValidationError(f"center needs {self.d} coordinates")
        if not self.alpha > 0:
            raise ValidationError("alpha must be positive")
        object.__setattr__(self, "center", center)

    def _eval(self, coords):
        sq = sum((c - x0) ** 2 for c, x0 in zip(coords, self.center))
        return np.sqrt(sq) ** self.alpha

    @property
    def holder_exponent(self) -> float:
        return self.alpha

    def describe(self) -> dict:
        return {"name": self.name, "d": self.d, "center": list(self.center), "alpha": self.alpha}


@dataclass(frozen=True)
class DiagBilinear(Analytic):
    """``x_1 * x_2``: invisible to second differences along the axes."""

    d: int = 2
    name = "diag-bilinear"

    def __post_init__(self):
        if self.d < 2:
            raise ValidationError("diag-bilinear needs d >= 2")

    def _eval(self, coords):
        return coords[0] * coords[1]

    def describe(self) -> dict:
        return {"name": self.name, "d": self.d}


@dataclass(frozen=True)
class WeierstrassTruncated(Analytic):
    """``sum_{m=0}^{M} a**m cos(b**m pi x_1)``."""

    d: int = 1
    a: float = 0.5
    b: float = 3.0
    terms: int = 12
    name = "weierstrass-truncated"

    def __post_init__(self):
        if not 0 < self.a < 1:
            raise ValidationError("weierstrass needs 0 < a < 1")
        if self.a * self.b < 1:
            raise ValidationError("weierstrass needs a*b >= 1")
        if not 0 <= self.terms <= 30:
            raise ValidationError("weierstrass needs 0 <= M <= 30")

    def _eval(self, coords):
        x = coords[0]
        total = np.zeros_like(x, dtype=float)
        for m in range(self.terms + 1):
            total = total + self.a**m * np.cos(self.b**m * math.pi * x)
        return total

    @property
    def holder_exponent(self) -> float:
        return math.log(1.0 / self.a) / math.log(self.b)

    def describe(self) -> dict:
        return {"name": self.name, "d": self.d, "a": self.a, "b": self.b, "M": self.terms}


CATALOG = ("poly", "abs-power", "radial-power", "diag-bilinear", "weierstrass-truncated")


def make_function(name: str, d: int, **params) -> Analytic:
    """Build a catalog entry by name; unknown parameters are rejected."""
    try:
        if name == "poly":
            return Poly(d, params.pop("coefficients", {}), **params)
        if name == "abs-power":
            return AbsPower(d, **params)
        if name == "radial-power":
            return RadialPower(d, **params)
        if name == "diag-bilinear":
            return DiagBilinear(d, **params)
        if name == "weierstrass-truncated":
            return WeierstrassTruncated(d, **params)
    except TypeError as exc:
        raise ValidationError(f"bad parameters for {name}: {exc}") from None
    raise ValidationError(f"unknown catalog function '{name}'; choose from {', '.join(CATALOG)}")
