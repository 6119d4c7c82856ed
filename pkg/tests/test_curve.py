import math
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from patchdyn.curve import (
    Curve,
    CurveError,
    SelfIntersectionError,
    arc_resample,
    area,
    bilipschitz_constant,
    derivative,
    holder_seminorm,
    marker_gaps,
    preset_shape,
    read_curve_csv,
    spectral_derivative,
    tangent_normal,
    trig_interpolate,
    uniform_params,
    upsample,
    write_curve_csv,
)


def brute_holder(field, gamma, dist):
    """Plain double loop, the oracle for the vectorized pair scan."""
    best = 0.0
    for i in range(len(field)):
        for j in range(len(field)):
            if i != j:
                best = max(best, np.linalg.norm(field[i] - field[j]) / dist(i, j) ** gamma)
    return best


# -- construction ------------------------------------------------------------


def test_circle_points(unit_circle):
    th = uniform_params(64)
    assert np.allclose(unit_circle.points, np.column_stack([np.cos(th), np.sin(th)]), atol=1e-15)
    assert np.allclose(unit_circle.params, th)
    assert unit_circle.spacing == pytest.approx(2 * np.pi / 64)


def test_ellipse_points():
    c = preset_shape("ellipse", n=128, a=2.0, b=1.0)
    th = uniform_params(128)
    assert np.allclose(c.points, np.column_stack([2 * np.cos(th), np.sin(th)]), atol=1e-15)


def test_perturbed_circle_radius():
    c = preset_shape("perturbed_circle", n=96, eps=0.1, m=3)
    r = np.linalg.norm(c.points, axis=1)
    assert r[0] == pytest.approx(1.1, abs=1e-15)
    # theta = pi/3 is marker 16 of 96
    assert r[16] == pytest.approx(0.9, abs=1e-14)


@pytest.mark.parametrize("n", [10, 15, 17])
def test_marker_count_must_be_even_and_large(n):
    pts = np.column_stack([np.cos(uniform_params(n)), np.sin(uniform_params(n))])
    with pytest.raises(CurveError):
        Curve(pts)


def test_rejects_bad_parameters():
    with pytest.raises(CurveError):
        preset_shape("circle", radius=-1.0)
    with pytest.raises(CurveError):
        preset_shape("ellipse", a=1.0, b=2.0)
    with pytest.raises(CurveError):
        preset_shape("perturbed_circle", eps=1.2, m=3)
    with pytest.raises(CurveError):
        preset_shape("square")


def test_rejects_self_intersection():
    th = uniform_params(64)
    figure_eight = np.column_stack([np.sin(th), np.sin(th) * np.cos(th)])
    with pytest.raises(SelfIntersectionError):
        Curve(figure_eight)


def test_rejects_coincident_markers(unit_circle):
    pts = unit_circle.points.copy()
    pts[3] = pts[2]
    with pytest.raises(CurveError):
        Curve(pts)


# -- spectral calculus --------------------------------------------------------


def test_derivative_circle_and_ellipse(unit_circle, ellipse):
    th = unit_circle.params
    assert np.max(np.abs(derivative(unit_circle) - np.column_stack([-np.sin(th), np.cos(th)]))) < 1e-12
    th = ellipse.params
    assert np.max(np.abs(derivative(ellipse) - np.column_stack([-2 * np.sin(th), np.cos(th)]))) < 1e-12


def test_derivative_of_constant_is_zero():
    vals = np.ones((32, 2)) * [3.0, -1.0]
    assert np.max(np.abs(spectral_derivative(vals))) < 1e-14


def test_second_derivative_of_band_limited_signal():
    th = uniform_params(32)
    f = np.sin(3 * th) + 0.5 * np.cos(5 * th)
    assert np.max(np.abs(spectral_derivative(f, order=2) + 9 * np.sin(3 * th) + 12.5 * np.cos(5 * th))) < 1e-11


def test_trig_interpolation_and_upsampling(ellipse):
    theta = np.array([0.1, 1.7, 4.0])
    vals = trig_interpolate(ellipse.points, theta)
    assert np.allclose(vals, np.column_stack([2 * np.cos(theta), np.sin(theta)]), atol=1e-13)
    up = upsample(ellipse.points, 3)
    th = uniform_params(3 * ellipse.n_markers)
    assert np.allclose(up, np.column_stack([2 * np.cos(th), np.sin(th)]), atol=1e-13)


def test_tangent_normal_axis_points(unit_circle, ellipse):
    for c in (unit_circle, ellipse):
        t, n = tangent_normal(c)
        assert np.allclose(t[0], [0.0, 1.0], atol=1e-13)
        assert np.allclose(n[0], [1.0, 0.0], atol=1e-13)


def test_normals_point_outward(perturbed, ellipse):
    for c in (perturbed, ellipse):
        _, n = tangent_normal(c)
        assert np.all(np.sum(n * (c.points - c.points.mean(axis=0)), axis=1) > 0)


def test_tangent_normal_polar_formula(perturbed):
    # oracle: for r(theta) the outward normal is (r e_r - r' e_theta) / sqrt(r^2 + r'^2)
    th = perturbed.params
    r = 1 + 0.1 * np.cos(3 * th)
    dr = -0.3 * np.sin(3 * th)
    er = np.column_stack([np.cos(th), np.sin(th)])
    et = np.column_stack([-np.sin(th), np.cos(th)])
    expect = (r[:, None] * er - dr[:, None] * et) / np.hypot(r, dr)[:, None]
    _, n = tangent_normal(perturbed)
    assert np.max(np.abs(n - expect)) < 1e-10


def test_degenerate_derivative_raises():
    # tangent_normal only reads .points; a constant "curve" has zero speed
    with pytest.raises(CurveError):
        tangent_normal(SimpleNamespace(points=np.ones((32, 2))))


# -- Hoelder seminorm ---------------------------------------------------------


def test_holder_constant_field_is_zero():
    assert holder_seminorm(np.ones((32, 2)), 0.5) == 0.0


@pytest.mark.parametrize("gamma", [0.25, 0.5, 0.75])
def test_holder_of_unit_circle_identity(gamma):
    n = 64
    th = uniform_params(n)
    field = np.column_stack([np.cos(th), np.sin(th)])
    expect = 2.0 ** (1.0 - gamma)
    got = holder_seminorm(field, gamma)
    assert got == pytest.approx(expect, rel=1e-12)
    chord = lambda i, j: 2 * abs(math.sin(0.5 * (th[i] - th[j])))  # noqa: E731
    assert got == pytest.approx(brute_holder(field, gamma, chord), rel=1e-12)
    if gamma == 0.5:
        assert got == pytest.approx(1.41421, abs=1e-5)


def test_holder_ambient_distance_matches_brute_force(perturbed, rng):
    pts = perturbed.points[::4]
    field = rng.normal(size=pts.shape)
    ambient = lambda i, j: np.linalg.norm(pts[i] - pts[j])  # noqa: E731
    assert holder_seminorm(field, 0.3, points=pts) == pytest.approx(brute_holder(field, 0.3, ambient), rel=1e-12)


@settings(max_examples=25, deadline=None)
@given(scale=st.floats(0.01, 100.0), gamma=st.floats(0.05, 0.95), seed=st.integers(0, 10_000))
def test_holder_homogeneous_and_symmetric(scale, gamma, seed):
    field = np.random.default_rng(seed).normal(size=(20, 2))
    base = holder_seminorm(field, gamma)
    assert holder_seminorm(scale * field, gamma) == pytest.approx(scale * base, rel=1e-12)
    # reversing the marker order maps the parameter grid to itself
    rev = np.roll(field[::-1], 1, axis=0)
    assert holder_seminorm(rev, gamma) == pytest.approx(base, rel=1e-12)


def test_holder_monotone_in_gamma_for_contractive_fields():
    th = uniform_params(48)
    field = 0.5 * np.column_stack([np.cos(th), np.sin(th)])  # |F_i - F_j| <= chordal distance
    values = [holder_seminorm(field, g) for g in (0.1, 0.3, 0.5, 0.7, 0.9)]
    assert all(a >= b - 1e-15 for a, b in zip(values, values[1:]))


# -- bilipschitz --------------------------------------------------------------


def test_bilipschitz_identity_scale_rotation(ellipse):
    assert bilipschitz_constant(ellipse, ellipse) == pytest.approx(1.0)
    assert bilipschitz_constant(2.0 * ellipse.points, ellipse) == pytest.approx(2.0)
    for angle in (0.3, 2.0, -1.1):
        rot = np.array([[np.cos(angle), -np.sin(angle)], [np.sin(angle), np.cos(angle)]])
        assert bilipschitz_constant(ellipse.points @ rot.T, ellipse) == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=20, deadline=None)
@given(angle=st.floats(-3.0, 3.0), dx=st.floats(-5, 5), dy=st.floats(-5, 5))
def test_bilipschitz_invariant_under_joint_rigid_motion(angle, dx, dy):
    ref = preset_shape("ellipse", n=32, a=1.5, b=1.0)
    cur = preset_shape("perturbed_circle", n=32, eps=0.2, m=2)
    rot = np.array([[np.cos(angle), -np.sin(angle)], [np.sin(angle), np.cos(angle)]])
    move = lambda p: p @ rot.T + [dx, dy]  # noqa: E731
    assert bilipschitz_constant(move(cur.points), move(ref.points)) == pytest.approx(
        bilipschitz_constant(cur, ref), rel=1e-9)


def test_bilipschitz_collapse_signal(unit_circle):
    pts = unit_circle.points.copy()
    pts[5] = pts[4]
    assert bilipschitz_constant(pts, unit_circle) == 0.0


# -- area ---------------------------------------------------------------------


def test_area_presets(unit_circle, ellipse):
    assert area(unit_circle) == pytest.approx(np.pi, abs=1e-10)
    assert area(ellipse) == pytest.approx(2 * np.pi, abs=1e-10)


def test_area_perturbed_circle_against_polar_quadrature():
    c = preset_shape("perturbed_circle", n=64, eps=0.1, m=3)
    oracle = quad(lambda t: 0.5 * (1 + 0.1 * np.cos(3 * t)) ** 2, 0, 2 * np.pi, epsabs=1e-14)[0]
    assert oracle == pytest.approx(np.pi * 1.005, rel=1e-13)
    assert area(c) == pytest.approx(oracle, abs=1e-10)


def test_area_sign_follows_orientation(ellipse):
    assert area(ellipse.points[::-1]) == pytest.approx(-2 * np.pi)


# -- resampling and I/O --------------------------------------------------------


def test_arc_resample_circle_upsampling():
    c = arc_resample(preset_shape("circle", n=64), 128)
    assert c.n_markers == 128
    assert np.max(np.abs(np.linalg.norm(c.points, axis=1) - 1.0)) < 1e-8
    assert c.meta["reparametrized"] is True


def test_arc_resample_equalizes_gaps_on_ellipse():
    c = preset_shape("ellipse", n=64, a=2.0, b=1.0)
    before = marker_gaps(c)
    new = arc_resample(c, 64)
    # oracle: exact arclength between the new markers by adaptive quadrature
    angles = np.unwrap(np.arctan2(new.points[:, 1], new.points[:, 0] / 2.0))
    angles = np.append(angles, angles[0] + 2 * np.pi)
    speed = lambda t: math.hypot(2 * math.sin(t), math.cos(t))  # noqa: E731
    arcs = np.array([quad(speed, a, b)[0] for a, b in zip(angles[:-1], angles[1:])])
    assert before.max() / before.min() > 1.5
    assert arcs.max() / arcs.min() - 1 < 1e-2


def test_arc_resample_rejects_bad_size(unit_circle):
    with pytest.raises(CurveError):
        arc_resample(unit_circle, 10)


def test_curve_csv_round_trip(tmp_path, perturbed):
    path = tmp_path / "c.csv"
    write_curve_csv(perturbed, path)
    assert path.read_text().splitlines()[0] == "theta,x,y"
    back = read_curve_csv(path)
    assert np.array_equal(back.points, perturbed.points)


def test_curve_csv_rejects_bad_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("t,x,y\n0,1,0\n")
    with pytest.raises(CurveError):
        read_curve_csv(path)
