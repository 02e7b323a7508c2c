from __future__ import annotations

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dysmooth import catalog
from dysmooth.cascade import (
    Cube,
    LemmaInstance,
    PiecewiseSpline,
    build_stage,
    cascade_reconstruct,
    evaluate,
    lemma_differences,
    make_lemma_instance,
    reconstruction_error,
    select_basic_cube,
    stage_diff_norm,
)
from dysmooth.certificates import lebesgue_constant_uniform
from dysmooth.errors import DomainError, ResolutionError, ValidationError
from dysmooth.mesh import DyadicGrid, SampledSource, sample

from oracles import lagrange_interpolate


def test_cube_example():
    c = select_basic_cube([0.30], 0, 2**-4, 2, 3)
    assert c.index == (2,)
    assert (c.anchor[0], c.anchor[0] + c.side) == (0.25, 0.5)


def test_cube_right_face_clamps():
    r, n = 3, 3
    c = select_basic_cube([0.2, 1.0], 0, 2**-5, r, n)
    assert c.index[1] == 2**n - 2 * (r - 1)


def test_cube_tie_at_half_anchors_left():
    c = select_basic_cube([0.5], 0, 2**-4, 2, 3)
    assert c.index == (4,)


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 4), st.integers(3, 7), st.floats(0, 1), st.floats(0, 1), st.integers(1, 64))
def test_cube_holds_segment(r, n, x, y, j):
    t = j * 2.0 ** -(n + 7)
    u = [min(x * (1 - r * t), 1 - r * t), y]
    c = select_basic_cube(u, 0, t, r, n)
    end = [u[0] + r * t, u[1]]
    assert c.contains(u, 0) and c.contains(end, 0)
    assert 0 <= c.anchor[0] and c.anchor[0] + c.side <= 1
    assert c.side == (2 * (r - 1) if r >= 2 else 2) * 2.0**-n


@pytest.mark.parametrize("args", [
    ([0.3], 0, 0.1, 2, 3),      # t too large
    ([0.3], 0, 0.0, 2, 3),      # t not positive
    ([0.3], 1, 0.01, 2, 3),     # axis out of range
    ([0.3], 0, 0.01, 5, 2),     # r - 1 > 2**(n-1)
    ([0.99], 0, 2**-5, 2, 3),   # segment leaves the cube
    ([0.3], 0, 0.01, 1, 0),     # r = 1 needs n >= 1
])
def test_cube_preconditions(args):
    with pytest.raises(ValidationError):
        select_basic_cube(*args)


def test_stage0_reproduces_polynomials():
    f = catalog.Poly(2, {(2, 1): 1.5, (0, 2): -1.0, (1, 0): 0.25, (0, 0): 2.0})
    cube = select_basic_cube([0.3, 0.6], 1, 2**-5, 3, 3)
    s = build_stage(f, cube, 3, 0, 3)
    assert reconstruction_error(f, s) < 1e-13


def test_r1_cell_value_is_lowest_corner():
    f = catalog.RadialPower(2, (0.3, 0.7), 0.5)
    cube = select_basic_cube([0.3, 0.4], 0, 2**-5, 1, 3)
    s = build_stage(f, cube, 3, 2, 1)
    h = s.h
    corner = np.array(cube.anchor) + h * np.array([1, 2])
    inside = corner + h * np.array([0.3, 0.9])
    assert evaluate(s, inside) == pytest.approx(float(f(corner[None, :])[0]))


def test_nodes_reproduced_and_spline_continuous():
    f = catalog.WeierstrassTruncated(1)
    cube = select_basic_cube([0.4], 0, 2**-6, 3, 3)
    s = build_stage(f, cube, 3, 3, 3)
    nodes = s.node_axis(0)
    assert np.allclose(s(nodes[:, None]), f(nodes[:, None]), atol=1e-14)
    faces = cube.anchor[0] + np.arange(1, s.cells) * s.cell_side
    eps = 1e-9
    assert np.allclose(s((faces - eps)[:, None]), s((faces + eps)[:, None]), atol=1e-6)


def test_r2_linear_interpolation_value():
    f = catalog.Poly.monomial(1, (2,))
    cube = Cube((0.0,), 0.5)
    s = build_stage(f, cube, 2, 0, 2)
    assert evaluate(s, [0.25]) == pytest.approx(0.125)
    with pytest.raises(DomainError):
        evaluate(s, [0.75])


@pytest.mark.parametrize("r", [2, 3, 4])
def test_spline_matches_lagrange_oracle(r):
    rng = np.random.default_rng(r)
    cube = Cube((0.25,), 0.5)
    cells, h = 2, 0.5 / (2 * (r - 1))
    vals = rng.uniform(-1, 1, cells * (r - 1) + 1)
    s = PiecewiseSpline(r, cube, cells, h, vals)
    nodes = 0.25 + np.arange(r) * h
    for x in rng.uniform(0.25, 0.25 + (r - 1) * h, 5):
        assert s(np.array([[x]]))[0] == pytest.approx(lagrange_interpolate(nodes, vals[:r], x), abs=1e-12)


def test_identical_stages_have_zero_difference():
    f = catalog.AbsPower(1)
    cube = select_basic_cube([0.3], 0, 2**-5, 2, 3)
    s = build_stage(f, cube, 3, 2, 2)
    assert stage_diff_norm(s, s) == 0.0


def test_stage_pairing_errors():
    f = catalog.AbsPower(1)
    a = select_basic_cube([0.3], 0, 2**-5, 2, 3)
    b = select_basic_cube([0.7], 0, 2**-5, 2, 3)
    with pytest.raises(ValidationError):
        stage_diff_norm(build_stage(f, a, 3, 1, 2), build_stage(f, b, 3, 0, 2))
    with pytest.raises(ValidationError):
        stage_diff_norm(build_stage(f, a, 3, 3, 2), build_stage(f, a, 3, 0, 2))


def test_abs_stage_differences_halve():
    f = catalog.AbsPower(1, 0, 1 / 3)
    rep = cascade_reconstruct(f, [0.3], 0, 2**-5, 2, 3, 8)
    ratios = [b / a for a, b in zip(rep.diff_norms, rep.diff_norms[1:])]
    assert ratios == pytest.approx([0.5] * len(ratios), rel=1e-9)


@pytest.mark.parametrize("name", ["abs-power", "radial-power", "weierstrass-truncated"])
@pytest.mark.parametrize("r", [1, 2, 3])
def test_telescoping_and_stage_bound(name, r):
    f = catalog.make_function(name, 2)
    rep = cascade_reconstruct(f, [0.4, 0.35], 1, 2**-5, r, 3, 5)
    assert rep.bound_holds
    assert rep.stage0_annihilated
    assert rep.mechanism_holds
    json.dumps(rep.as_dict())
    assert rep.to_csv().count("\n") == 6


def test_projection_property():
    # interpolating a stage-k spline at stage k gives the same spline
    f = catalog.RadialPower(2)
    cube = select_basic_cube([0.3, 0.3], 0, 2**-5, 3, 3)
    s = build_stage(f, cube, 3, 2, 3)
    again = build_stage(s, cube, 3, 2, 3)
    assert np.allclose(again.values, s.values, atol=1e-15)
    assert stage_diff_norm(again, s) < 1e-13


@pytest.mark.parametrize("r", [1, 2, 3])
def test_reconstruction_errors_quasi_monotone(r):
    # best-approximation argument: err_{k+1} <= (1 + Lambda**d) err_k on nested spaces
    f = catalog.WeierstrassTruncated(2)
    lam = lebesgue_constant_uniform(max(r, 1)).value
    for u in (0.45, 0.6, 0.21):
        errs = cascade_reconstruct(f, [u, 0.4], 0, 2**-5, r, 3, 5, with_psi=False).reconstruction_errors
        assert all(b <= (1 + lam**2) * a + 1e-12 for a, b in zip(errs, errs[1:]))
        assert errs[-1] < errs[0]


def test_sampled_source_cascade():
    f = catalog.AbsPower(1, 0, 1 / 3)
    src = SampledSource(sample(f, DyadicGrid(1, 9)))
    rep = cascade_reconstruct(src, [0.3125], 0, 2**-5, 2, 3, 6)
    ana = cascade_reconstruct(f, [0.3125], 0, 2**-5, 2, 3, 6)
    assert rep.diff_norms == pytest.approx(ana.diff_norms)
    assert rep.lhs == pytest.approx(ana.lhs)
    # an off-mesh segment has no sampled difference
    assert cascade_reconstruct(src, [0.3], 0, 2**-5, 2, 3, 6).lhs is None
    with pytest.raises(ResolutionError):
        cascade_reconstruct(src, [0.3], 0, 2**-5, 2, 3, 7)


def test_negative_K_rejected():
    with pytest.raises(ValidationError):
        cascade_reconstruct(catalog.AbsPower(1), [0.3], 0, 2**-5, 2, 3, -1)


def test_lemma_instance_round_trip():
    inst = make_lemma_instance(3, 2, h=0.25, a=(0.1, 0.2), seed=4)
    back = LemmaInstance.from_dict(json.loads(json.dumps(inst.as_dict())))
    assert np.array_equal(back.values, inst.values)
    assert (back.r, back.d, back.h, back.anchor) == (3, 2, 0.25, (0.1, 0.2))


def test_lemma_single_odd_value():
    inst = make_lemma_instance(2, 1, values=[0.0, 1.0, 0.0])
    assert np.abs(lemma_differences(inst)).tolist() == [2.0]


def test_lemma_difference_count():
    inst = make_lemma_instance(3, 2, seed=0)
    # per axis: (r - 1) base offsets along it, 2r - 1 across
    assert lemma_differences(inst).size == 2 * 2 * 5
    assert math.isfinite(float(np.abs(lemma_differences(inst)).max()))
