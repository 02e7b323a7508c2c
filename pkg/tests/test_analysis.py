from __future__ import annotations

import json
import math
import xml.etree.ElementTree as ET

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dysmooth import catalog
from dysmooth.analysis import (
    BELOW,
    INCONCLUSIVE,
    POLYNOMIAL,
    SATURATED,
    decay_svg,
    fit_exponent,
    geometric_decay_check,
    log2_slope,
    saturation_test,
    theorem_verification,
)
from dysmooth.errors import InsufficientDataError, ValidationError
from dysmooth.mesh import DyadicGrid, SampledSource, sample
from dysmooth.moduli import PROOF, ModulusProfile, modulus_profile

profile = ModulusProfile.from_values


def test_fit_abs_power():
    fit = fit_exponent(profile(2, [2.0 ** (-n + 1) for n in range(1, 11)], 1))
    assert fit.alpha == pytest.approx(1.0)
    assert fit.M == pytest.approx(2.0)
    assert fit.window == (1, 10)
    assert fit.residual < 1e-12


def test_fit_sqrt_from_samples():
    prof = modulus_profile(catalog.AbsPower(1, 0, 0.0, 0.5), 1, 0, 16)
    fit = fit_exponent(prof)
    assert fit.alpha == pytest.approx(0.5, abs=1e-9)
    assert fit.M == pytest.approx(1.0)


@pytest.mark.parametrize("r", [1, 2, 3, 4])
def test_fit_saturated_rate(r):
    psi = [math.factorial(r) * 2.0 ** (-n * r) for n in range(2, 10)]
    assert fit_exponent(profile(r, psi, 2)).alpha == pytest.approx(r)


def test_fit_drops_zero_levels_and_needs_data():
    psi = [0.0, 0.0] + [2.0**-n for n in range(2, 8)]
    assert fit_exponent(profile(2, psi, 0)).window == (2, 7)
    with pytest.raises(InsufficientDataError):
        fit_exponent(profile(2, [0.0] * 6, 1))
    with pytest.raises(InsufficientDataError):
        fit_exponent(profile(2, [0.5, 0.25, 0.125], 1))


@settings(max_examples=60, deadline=None)
@given(st.floats(0.05, 4.0), st.floats(0.01, 100.0), st.integers(0, 5))
def test_fit_recovers_power_law(alpha, M, n0):
    psi = [M * 2.0 ** (-alpha * n) for n in range(n0, n0 + 8)]
    fit = fit_exponent(profile(2, psi, n0))
    assert fit.alpha == pytest.approx(alpha, rel=1e-9, abs=1e-9)
    assert fit.M == pytest.approx(M, rel=1e-8)
    # M is an envelope over the window
    assert all(p <= fit.M * 2.0 ** (-fit.alpha * n) * (1 + 1e-9) for n, p in zip(range(n0, n0 + 8), psi))


def test_saturation_classes():
    assert saturation_test(profile(2, [0.0] * 6, 1), 2).klass == POLYNOMIAL
    sat = saturation_test(profile(2, [2.0 * 4.0**-n for n in range(1, 9)], 1), 2)
    assert sat.klass == SATURATED
    below = saturation_test(profile(2, [2.0**-n for n in range(1, 9)], 1), 2)
    assert below.klass == BELOW
    short = saturation_test(profile(2, [0.25, 0.0625], 1), 2)
    assert short.klass == INCONCLUSIVE
    zigzag = [4.0**-n * (1 if n % 2 else 100) for n in range(1, 9)]
    assert saturation_test(profile(2, zigzag, 1), 2).klass == INCONCLUSIVE


def test_saturation_on_catalog_functions():
    quad = modulus_profile(catalog.Poly.monomial(1, (2,)), 2, 1, 12)
    assert saturation_test(quad, 2).klass == SATURATED
    lin = modulus_profile(catalog.Poly.monomial(1, (1,)), 2, 1, 12)
    assert saturation_test(lin, 2).klass == POLYNOMIAL
    assert saturation_test(modulus_profile(catalog.AbsPower(1), 2, 1, 12), 2).klass == BELOW


@pytest.mark.parametrize("r", [1, 2, 3])
def test_geometric_examples(r):
    g = geometric_decay_check(profile(r, [2.0**-n for n in range(1, 10)], 1), r)
    assert (g.lam, g.mu) == pytest.approx((0.5, 2.0))
    assert g.equivalence == (r >= 2)
    g = geometric_decay_check(profile(r, [2.0 ** (-n * r) for n in range(1, 10)], 1), r)
    assert (g.lam, g.mu) == pytest.approx((2.0**-r, 2.0**r))
    assert not g.equivalence
    g = geometric_decay_check(profile(r, [0.3] * 5, 1), r)
    assert g.lam == 1.0 and not g.equivalence


def test_geometric_rejects_zero_and_short():
    with pytest.raises(ValidationError):
        geometric_decay_check(profile(2, [0.5, 0.0, 0.1], 1), 2)
    with pytest.raises(InsufficientDataError):
        geometric_decay_check(profile(2, [0.5], 1), 2)


def test_log2_slope():
    assert log2_slope([1, 2, 3], [2.0, 4.0, 8.0]) == pytest.approx(1.0)
    assert log2_slope([1, 2], [1.0, 0.0]) is None
    assert log2_slope([1], [1.0]) is None


def test_verification_abs_power_d1():
    rep = theorem_verification(catalog.AbsPower(1), 2, levels=(3, 7), weighting=PROOF)
    assert rep.non_trending
    assert rep.ledger.empirical_M1 == pytest.approx(0.5)
    assert 0 < rep.ledger.empirical_M2 < 1
    assert rep.ledger.empirical_M is None
    assert rep.fit.alpha == pytest.approx(1.0)
    doc = rep.as_dict()
    json.dumps(doc)
    assert doc["constants"]["measured"]["M1"] == rep.ledger.empirical_M1
    assert rep.to_csv().count("\n") == 6


def test_verification_r1_reports_omega1_ratio():
    rep = theorem_verification(catalog.AbsPower(1), 1, levels=(3, 7), weighting=PROOF)
    assert rep.ledger.empirical_M is not None
    assert all(c.omega1_rhs is not None for c in rep.checks)


def test_verification_abs_power_d2():
    rep = theorem_verification(catalog.AbsPower(2), 2, levels=(3, 7), weighting=PROOF,
                               dir_count=8, witness=False)
    assert abs(rep.ratio_slope) <= 0.1
    assert rep.witness is None


def test_verification_xy_witness():
    rep = theorem_verification(catalog.DiagBilinear(2), 2, levels=(3, 6), dir_count=16)
    assert rep.witness["holds"]
    assert rep.witness["psi_vanishes"]
    assert rep.fit is None
    assert all(c.directional == pytest.approx((0.0, 0.0), abs=1e-14) for c in rep.checks)


def test_verification_polynomial_is_zero():
    rep = theorem_verification(catalog.Poly(1, {(1,): 2.0, (0,): 1.0}), 2, levels=(3, 6))
    assert all(c.omega_estimate <= 1e-14 and c.axis_rhs == 0.0 for c in rep.checks)
    assert rep.ratio_slope is None


def test_verification_input_errors():
    f = catalog.AbsPower(1)
    with pytest.raises(ValidationError):
        theorem_verification(f, 2, d=2)
    with pytest.raises(ValidationError):
        theorem_verification(f, 2, weighting="other")
    with pytest.raises(ValidationError):
        theorem_verification(f, 2, levels=(5, 3))
    with pytest.raises(ValidationError):
        theorem_verification(SampledSource(sample(f, DyadicGrid(1, 6))), 2)


def test_svg_is_well_formed():
    prof = modulus_profile(catalog.AbsPower(1), 2, 1, 12)
    svg = decay_svg(prof, fit_exponent(prof), "abs <power> & r = 2")
    root = ET.fromstring(svg)
    assert root.tag.endswith("svg")
    assert "&lt;power&gt;" in svg
    # a profile with zeros and no fit still renders
    ET.fromstring(decay_svg(profile(2, [0.0, 0.5, 0.25], 1)))


def test_verification_deterministic():
    f = catalog.RadialPower(2, (0.4, 0.55), 0.5)
    kw = dict(levels=(3, 5), dir_count=8, seed=3, witness=False)
    a = theorem_verification(f, 2, **kw).as_dict()
    b = theorem_verification(f, 2, **kw).as_dict()
    assert a == b
    assert np.isfinite(a["sup_norm_estimate"])
