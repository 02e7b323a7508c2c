"""Decay fits, saturation verdicts and end-to-end checks of the smoothness bounds."""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .catalog import DiagBilinear
from .certificates import ConstantLedger, build_ledger
from .errors import InsufficientDataError, ValidationError
from .fdiff import _check_order
from .mesh import SampledSource
from .moduli import (
    THEOREM,
    WEIGHTINGS,
    CoverageWarning,
    ModulusProfile,
    directional_modulus_estimate,
    min_level,
    modulus_profile,
    omega_bound_rhs,
    omega_curve,
)

ZERO_TOL = 1e-12
SATURATION_WINDOW = 4
SATURATION_SLACK = 4.0
MIN_FIT_LEVELS = 4
TREND_TOL = 0.1

POLYNOMIAL = "polynomial-class"
SATURATED = "saturated"
BELOW = "below-saturation"
INCONCLUSIVE = "inconclusive"


def _zero_tol(profile: ModulusProfile) -> float:
    return ZERO_TOL * max(profile.scale, 0.0)


@dataclass(frozen=True)
class DecayFit:
    """``Psi_r(n) ~ M 2**(-n alpha)`` fitted over ``window``."""

    alpha: float
    M: float
    residual: float
    window: tuple[int, int]
    intercept: float = 0.0

    def as_dict(self) -> dict:
        return {"alpha": self.alpha, "M": self.M, "residual": self.residual,
                "window": list(self.window)}


def fit_exponent(profile: ModulusProfile) -> DecayFit:
    """Least squares of ``log2 psi`` against ``n`` over the levels with ``psi > 0``.

    Levels whose value is zero (within ``1e-12 * scale``) carry no rate
    information and are dropped; an all-zero profile belongs to
    ``saturation_test`` instead.
    """
    tol = _zero_tol(profile)
    pts = [(n, p) for n, p in zip(profile.levels, profile.psi) if p > tol and p > 0]
    if len(pts) < MIN_FIT_LEVELS:
        raise InsufficientDataError(
            f"need at least {MIN_FIT_LEVELS} levels with psi > 0 to fit a rate, got {len(pts)}; "
            "use saturation_test for vanishing profiles"
        )
    ns = np.array([n for n, _ in pts], dtype=float)
    ys = np.log2([p for _, p in pts])
    slope, intercept = np.polyfit(ns, ys, 1)
    alpha = float(-slope)
    resid = float(np.max(np.abs(ys - (slope * ns + intercept))))
    # M is the sup of psi * 2**(n alpha) over the window, so it is a true envelope
    M = max(p * 2.0 ** (n * alpha) for n, p in pts)
    return DecayFit(alpha, float(M), resid, (pts[0][0], pts[-1][0]), float(intercept))


@dataclass(frozen=True)
class SaturationVerdict:
    klass: str
    evidence: tuple[float, ...]
    levels: tuple[int, ...]
    trend: str

    def as_dict(self) -> dict:
        return {"class": self.klass, "levels": list(self.levels),
                "psi_times_2_nr": list(self.evidence), "trend": self.trend}


def saturation_test(profile: ModulusProfile, r: int) -> SaturationVerdict:
    """Classify the profile against the saturation rate ``2**(-n r)``.

    The evidence is ``psi[n] * 2**(n r)``.  Finite data cannot witness an
    ``o(.)`` statement, so the verdict reads the last four levels only.
    """
    _check_order(r)
    eps = tuple(p * 2.0 ** (n * r) for n, p in zip(profile.levels, profile.psi))
    tol = _zero_tol(profile)
    if all(p <= tol for p in profile.psi):
        return SaturationVerdict(POLYNOMIAL, eps, profile.levels, "identically zero")
    tail = eps[-SATURATION_WINDOW:]
    if len(tail) < SATURATION_WINDOW:
        return SaturationVerdict(INCONCLUSIVE, eps, profile.levels,
                                 f"fewer than {SATURATION_WINDOW} levels")
    lo, hi = min(tail), max(tail)
    if lo > 0 and hi / lo <= SATURATION_SLACK:
        return SaturationVerdict(SATURATED, eps, profile.levels,
                                 f"bounded: max/min = {hi / lo:.6g} over the last {SATURATION_WINDOW} levels")
    if all(b > a for a, b in zip(tail, tail[1:])):
        return SaturationVerdict(BELOW, eps, profile.levels,
                                 f"growing over the last {SATURATION_WINDOW} levels")
    return SaturationVerdict(INCONCLUSIVE, eps, profile.levels, "no consistent trend")


@dataclass(frozen=True)
class GeometricDecay:
    lam: float
    mu: float
    equivalence: bool

    def as_dict(self) -> dict:
        return {"lambda": self.lam, "mu": self.mu, "equivalence": self.equivalence}


def geometric_decay_check(profile: ModulusProfile, r: int) -> GeometricDecay:
    """``lambda = max psi[n+1]/psi[n]`` and ``mu = max psi[n-1]/psi[n]``.

    When ``lambda < 1`` and ``mu < 2**r`` (both strict) the continuous
    modulus on ``[2**-(n+1), 2**-n]`` is comparable to ``Psi_r(n)``.
    """
    _check_order(r)
    if len(profile.psi) < 2:
        raise InsufficientDataError("geometric decay needs at least two levels")
    if any(p <= 0 for p in profile.psi):
        raise ValidationError("zero psi in the window makes the ratios undefined; "
                              "run saturation_test on this profile instead")
    ps = profile.psi
    lam = max(b / a for a, b in zip(ps, ps[1:]))
    mu = max(a / b for a, b in zip(ps, ps[1:]))
    return GeometricDecay(lam, mu, lam < 1.0 and mu < 2.0**r)


def log2_slope(levels: Sequence[int], values: Sequence[float]) -> float | None:
    """Least-squares slope of ``log2(values)`` against ``levels``; None if any value is 0."""
    if len(levels) < 2 or any(not v > 0 for v in values):
        return None
    return float(np.polyfit(np.asarray(levels, float), np.log2(values), 1)[0])


# --- theorem verification ---------------------------------------------------------


@dataclass(frozen=True)
class LevelCheck:
    n: int
    t: float
    omega_estimate: float
    directional: tuple[float, ...]
    axis_rhs: float
    omega_rhs: float
    omega1_rhs: float | None
    ratio_axis: float | None
    ratio_omega: float | None
    ratio_omega1: float | None
    tail_truncated: bool
    coverage_warning: bool

    def as_dict(self) -> dict:
        return dict(self.__dict__, directional=list(self.directional))


@dataclass
class VerificationReport:
    source: dict
    r: int
    d: int
    levels: tuple[int, int]
    seed: int
    weighting: str
    dir_count: int
    base_res: int
    profile: ModulusProfile
    checks: list[LevelCheck]
    sup_norm: float
    ledger: ConstantLedger
    ratio_slope: float | None
    fit: DecayFit | None
    witness: dict | None = None
    notes: list[str] = field(default_factory=list)

    @property
    def non_trending(self) -> bool | None:
        return None if self.ratio_slope is None else abs(self.ratio_slope) <= TREND_TOL

    def as_dict(self) -> dict:
        return {
            "source": self.source,
            "r": self.r,
            "d": self.d,
            "levels": list(self.levels),
            "seed": self.seed,
            "weighting": self.weighting,
            "dir_count": self.dir_count,
            "base_res": self.base_res,
            "sup_norm_estimate": self.sup_norm,
            "profile": self.profile.as_dict(),
            "checks": [c.as_dict() for c in self.checks],
            "ratio_log2_slope": self.ratio_slope,
            "non_trending": self.non_trending,
            "fit": None if self.fit is None else self.fit.as_dict(),
            "constants": self.ledger.as_dict(),
            "witness": self.witness,
            "flags": {
                "tail_truncated": any(c.tail_truncated for c in self.checks),
                "coverage_warning": any(c.coverage_warning for c in self.checks),
            },
            "notes": list(self.notes),
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "t", "psi", "omega_estimate", "axis_rhs", "omega_rhs",
                    "ratio_axis", "ratio_omega", "ratio_omega1"])
        for c in self.checks:
            psi = self.profile[c.n] if self.profile.n_min <= c.n <= self.profile.n_max else ""
            w.writerow([c.n, repr(c.t), repr(psi), repr(c.omega_estimate), repr(c.axis_rhs),
                        repr(c.omega_rhs), _cell(c.ratio_axis), _cell(c.ratio_omega),
                        _cell(c.ratio_omega1)])
        return buf.getvalue()


def _cell(x) -> str:
    return "" if x is None else repr(x)


def _ratio(num: float, den: float) -> float | None:
    if den > 0:
        return num / den
    return 0.0 if num == 0 else None


def _profile_top(d: int, n_hi: int, depth: int) -> int:
    # keep single meshes near 4M points
    return max(n_hi, min(n_hi + depth, 22 // d))


def xy_witness(levels: Sequence[int], dir_count: int = 64, base_res: int = 16, seed: int = 0,
               d: int = 2) -> dict:
    """``x1 x2`` at r = 2: zero discrete modulus next to ``omega_estimate(t) ~ t**2``."""
    f = DiagBilinear(d)
    lo, hi = min(levels), max(levels)
    prof = modulus_profile(f, 2, max(lo, min_level(2)), hi)
    ts = [2.0**-n for n in range(lo, hi + 1)]
    est, _ = omega_curve(f, 2, ts, dir_count, base_res, seed)
    psi_max = max(prof.psi)
    ratios = [e / t**2 for e, t in zip(est, ts)]
    return {
        "function": f.describe(),
        "psi_max": psi_max,
        "psi_vanishes": psi_max <= ZERO_TOL,
        "omega_over_t2": ratios,
        "min_omega_over_t2": min(ratios),
        "holds": psi_max <= ZERO_TOL and min(ratios) >= 0.99,
    }


def theorem_verification(source, r: int, d: int | None = None, levels: tuple[int, int] = (3, 8),
                         seed: int = 0, weighting: str = THEOREM, dir_count: int = 64,
                         base_res: int = 16, depth: int = 12, witness: bool | None = None
                         ) -> VerificationReport:
    """Measure the estimators against the assembled right-hand sides level by level.

    For each ``n`` in ``levels`` with ``t = 2**-n`` this records the omega
    estimate, the axis-direction estimates, the three right-hand sides and
    the ratios between them.  The maxima of those ratios are stored as the
    measured ``M1``, ``M2`` and ``M``.  The Psi profile runs ``depth`` levels
    past the range so the infinite sums are well resolved.
    """
    _check_order(r)
    if isinstance(source, SampledSource):
        raise ValidationError("theorem verification needs an analytic source (off-mesh evaluation)")
    d = source.d if d is None else d
    if d != source.d:
        raise ValidationError(f"d={d} does not match the source dimension {source.d}")
    if weighting not in WEIGHTINGS:
        raise ValidationError(f"weighting must be one of {WEIGHTINGS}, got {weighting!r}")
    n_lo, n_hi = levels
    if n_lo < 0 or n_hi < n_lo:
        raise ValidationError(f"bad level range {n_lo}..{n_hi}")
    p_lo = max(min_level(r), 1)
    profile = modulus_profile(source, r, p_lo, _profile_top(d, n_hi, depth))
    ns = list(range(n_lo, n_hi + 1))
    ts = [2.0**-n for n in ns]
    est, fmax = omega_curve(source, r, ts, dir_count, base_res, seed)
    sup_norm = max(fmax, profile.scale)

    checks = []
    for n, t, om in zip(ns, ts, est):
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", CoverageWarning)
            b = omega_bound_rhs(profile, n, t, sup_norm, weighting)
        dirs = tuple(directional_modulus_estimate(source, r, i, t, max(16, base_res))
                     for i in range(d))
        checks.append(LevelCheck(
            n=n, t=t, omega_estimate=om, directional=dirs, axis_rhs=b.axis_rhs,
            omega_rhs=b.omega_rhs, omega1_rhs=b.omega1_rhs,
            ratio_axis=_ratio(max(dirs), b.axis_rhs),
            ratio_omega=_ratio(om, b.omega_rhs),
            ratio_omega1=None if b.omega1_rhs is None else _ratio(om, b.omega1_rhs),
            tail_truncated=b.tail_truncated,
            coverage_warning=b.coverage_warning or bool(caught),
        ))

    ledger = build_ledger(r, d)
    ledger.empirical_M1 = _max_or_none(c.ratio_axis for c in checks)
    ledger.empirical_M2 = _max_or_none(c.ratio_omega for c in checks)
    ledger.empirical_M = _max_or_none(c.ratio_omega1 for c in checks)

    ratios = [c.ratio_omega for c in checks]
    slope = None if any(x is None for x in ratios) else log2_slope(ns, ratios)
    try:
        fit = fit_exponent(profile)
    except InsufficientDataError:
        fit = None
    notes = []
    if any(c.coverage_warning for c in checks):
        notes.append(f"Psi below level {p_lo} was needed; the coarsest computed level was substituted")
    if witness is None:
        witness = d >= 2 and r == 2
    wit = xy_witness(ns, dir_count, base_res, seed, d) if witness else None
    return VerificationReport(
        source=source.describe() if hasattr(source, "describe") else {},
        r=r, d=d, levels=(n_lo, n_hi), seed=seed, weighting=weighting,
        dir_count=dir_count, base_res=base_res, profile=profile, checks=checks,
        sup_norm=sup_norm, ledger=ledger, ratio_slope=slope, fit=fit, witness=wit, notes=notes,
    )


def _max_or_none(values) -> float | None:
    vals = [v for v in values if v is not None]
    return max(vals) if vals else None


# --- chart -------------------------------------------------------------------------


def decay_svg(profile: ModulusProfile, fit: DecayFit | None = None, title: str = "") -> str:
    """Static log2-log2 chart of ``(n, Psi_r(n))`` with the fitted line."""
    W, H, pad = 480, 320, 48
    pts = [(n, math.log2(p)) for n, p in zip(profile.levels, profile.psi) if p > 0]
    ys = [y for _, y in pts]
    if fit is not None:
        ys += [fit.intercept - fit.alpha * n for n in (profile.n_min, profile.n_max)]
    x0, x1 = profile.n_min, max(profile.n_max, profile.n_min + 1)
    y0, y1 = (min(ys), max(ys)) if ys else (-1.0, 0.0)
    if y1 - y0 < 1e-9:
        y0, y1 = y0 - 1, y1 + 1

    def px(n):
        return pad + (n - x0) / (x1 - x0) * (W - 2 * pad)

    def py(y):
        return H - pad - (y - y0) / (y1 - y0) * (H - 2 * pad)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
        f'<rect width="{W}" height="{H}" fill="white"/>',
        f'<line x1="{pad}" y1="{H - pad}" x2="{W - pad}" y2="{H - pad}" stroke="black"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{H - pad}" stroke="black"/>',
        f'<text x="{W / 2:.1f}" y="{H - 12}" text-anchor="middle" font-size="12">level n</text>',
        f'<text x="14" y="{H / 2:.1f}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 14 {H / 2:.1f})">log2 Psi_{profile.r}(n)</text>',
    ]
    if title:
        out.append(f'<text x="{W / 2:.1f}" y="20" text-anchor="middle" font-size="13">{_esc(title)}</text>')
    for n in profile.levels:
        out.append(f'<text x="{px(n):.1f}" y="{H - pad + 14}" text-anchor="middle" font-size="10">{n}</text>')
    if pts:
        poly = " ".join(f"{px(n):.2f},{py(y):.2f}" for n, y in pts)
        out.append(f'<polyline points="{poly}" fill="none" stroke="#1f4e9c" stroke-width="1.5"/>')
        for n, y in pts:
            out.append(f'<circle cx="{px(n):.2f}" cy="{py(y):.2f}" r="2.5" fill="#1f4e9c"/>')
    if fit is not None:
        a, b = profile.n_min, profile.n_max
        out.append(
            f'<line x1="{px(a):.2f}" y1="{py(fit.intercept - fit.alpha * a):.2f}" '
            f'x2="{px(b):.2f}" y2="{py(fit.intercept - fit.alpha * b):.2f}" '
            f'stroke="#c0392b" stroke-dasharray="5,3"/>'
        )
        out.append(f'<text x="{W - pad}" y="{pad - 8}" text-anchor="end" font-size="11">'
                   f'fitted alpha = {fit.alpha:.4f}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _esc(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
