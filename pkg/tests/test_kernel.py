import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from patchdyn.kernel import (
    KernelError,
    KernelSingularityError,
    KernelSpec,
    _from_profile_unchecked,
    biot_savart,
    combination,
    delta_constants,
    euler_decomposition_check,
    eval_kernel,
    grad_kernel,
    grad_N,
    validate,
)

INV_2PI = 1.0 / (2.0 * np.pi)


def bs_closed(x):
    x = np.asarray(x, dtype=float)
    r2 = np.sum(x**2, axis=-1, keepdims=True)
    return INV_2PI * np.stack([-x[..., 1], x[..., 0]], axis=-1) / r2


def gn_closed(x):
    x = np.asarray(x, dtype=float)
    return INV_2PI * x / np.sum(x**2, axis=-1, keepdims=True)


def fd_jacobian(func, x, h=1e-5):
    cols = []
    for j in range(2):
        e = np.zeros(2)
        e[j] = h
        cols.append((func(x + e) - func(x - e)) / (2 * h))
    return np.stack(cols, axis=-1)


def odd_fourier():
    return KernelSpec("angular_fourier", fourier={"c1sin": [0.1, 0.0, -0.05], "c2cos": [0.2, 0.0, 0.0, 0.0, 0.03]})


ALL_SPECS = {
    "biot_savart": biot_savart(),
    "grad_N": grad_N(),
    "fourier": odd_fourier(),
    "mixed": combination((0.3, biot_savart()), (0.7, grad_N())),
}


def test_biot_savart_values():
    assert np.allclose(eval_kernel(biot_savart(), [1.0, 0.0]), [0.0, INV_2PI], atol=1e-17)
    assert eval_kernel(biot_savart(), [1.0, 0.0])[1] == pytest.approx(0.159155, abs=1e-6)
    assert np.allclose(eval_kernel(biot_savart(), [2.0, 0.0]), [0.0, 0.5 * INV_2PI], atol=1e-17)


def test_grad_N_value():
    assert np.allclose(eval_kernel(grad_N(), [1.0, 0.0]), [INV_2PI, 0.0], atol=1e-17)


def test_presets_match_closed_forms(rng):
    x = rng.normal(size=(100, 2))
    assert np.allclose(eval_kernel(biot_savart(), x), bs_closed(x), rtol=1e-13)
    assert np.allclose(eval_kernel(grad_N(), x), gn_closed(x), rtol=1e-13)


def test_strength_scales_kernel(rng):
    x = rng.normal(size=(10, 2))
    assert np.allclose(eval_kernel(biot_savart(3.0), x), 3.0 * bs_closed(x), rtol=1e-13)


def test_singularity_error():
    with pytest.raises(KernelSingularityError):
        eval_kernel(biot_savart(), [0.0, 0.0])
    with pytest.raises(KernelSingularityError):
        grad_kernel(grad_N(), [1e-15, 0.0])


def test_even_harmonic_is_rejected():
    with pytest.raises(KernelError):
        KernelSpec("angular_fourier", fourier={"c1cos": [0.0, 1.0]})
    with pytest.raises(KernelError):
        KernelSpec("angular_fourier", fourier={"c3sin": [1.0]})
    with pytest.raises(KernelError):
        KernelSpec("quadratic")


@pytest.mark.parametrize("name", sorted(ALL_SPECS))
def test_oddness_and_homogeneity(name, rng):
    spec = ALL_SPECS[name]
    phi = rng.uniform(0, 2 * np.pi, 256)
    x = np.column_stack([np.cos(phi), np.sin(phi)])
    k = eval_kernel(spec, x)
    assert np.max(np.abs(eval_kernel(spec, -x) + k)) < 1e-11
    for lam in (1 / 3, 1.0, 7.0):
        assert np.max(np.abs(eval_kernel(spec, lam * x) - k / lam)) < 1e-11


def test_grad_biot_savart_at_unit_point():
    jac = grad_kernel(biot_savart(), [1.0, 0.0])
    # d/dx of (-y, x)/(2 pi r^2) at (1, 0): [[0, -1], [-1, 0]] / (2 pi)
    assert np.allclose(jac, INV_2PI * np.array([[0.0, -1.0], [-1.0, 0.0]]), atol=1e-15)
    assert np.allclose(jac, fd_jacobian(bs_closed, np.array([1.0, 0.0])), atol=1e-8)


@pytest.mark.parametrize("name", sorted(ALL_SPECS))
def test_grad_matches_finite_differences(name, rng):
    spec = ALL_SPECS[name]
    r = rng.uniform(0.5, 2.0, 64)
    phi = rng.uniform(0, 2 * np.pi, 64)
    x = r[:, None] * np.column_stack([np.cos(phi), np.sin(phi)])
    jac = grad_kernel(spec, x)
    fd = np.array([fd_jacobian(lambda z: eval_kernel(spec, z), xi) for xi in x])
    rel = np.linalg.norm(jac - fd, axis=(1, 2)) / np.linalg.norm(jac, axis=(1, 2))
    assert np.max(rel) < 1e-6


@settings(max_examples=30, deadline=None)
@given(x1=st.floats(-3, 3), x2=st.floats(-3, 3))
def test_grad_even_and_degree_minus_two(x1, x2):
    x = np.array([x1, x2])
    if np.hypot(x1, x2) < 1e-3:
        return
    for spec in ALL_SPECS.values():
        jac = grad_kernel(spec, x)
        assert np.allclose(grad_kernel(spec, 2 * x), jac / 4, rtol=1e-12, atol=1e-14)
        assert np.allclose(grad_kernel(spec, -x), jac, rtol=1e-12, atol=1e-14)


def test_delta_constants_presets():
    dense = 20000
    phi = 2 * np.pi * (np.arange(dense) + 0.5) / dense
    e = np.column_stack([np.cos(phi), np.sin(phi)])
    for spec, closed, expect in (
        (biot_savart(), bs_closed, [[0.0, -0.5], [0.5, 0.0]]),
        (grad_N(), gn_closed, [[0.5, 0.0], [0.0, 0.5]]),
    ):
        oracle = closed(e).T @ e * (2 * np.pi / dense)
        assert np.allclose(oracle, expect, atol=1e-12)
        assert np.allclose(delta_constants(spec), expect, atol=1e-10)


def test_delta_constants_empty_combination_and_linearity():
    assert np.array_equal(delta_constants(combination()), np.zeros((2, 2)))
    mix = combination((0.3, biot_savart()), (-1.7, odd_fourier()))
    lin = 0.3 * delta_constants(biot_savart()) - 1.7 * delta_constants(odd_fourier())
    assert np.allclose(delta_constants(mix), lin, atol=1e-14)


def test_validate_presets_pass():
    for spec in ALL_SPECS.values():
        report = validate(spec)
        assert report.passed, report.failures
    bs = validate(biot_savart())
    assert bs.residuals["oddness"] < 1e-12 and bs.residuals["homogeneity"] < 1e-12


def test_validate_reports_even_harmonic():
    bad = _from_profile_unchecked([[0.0, 0.1], [0.0, 0.0]], [[0.0, 0.0], [INV_2PI, 0.0]])
    report = validate(bad)
    assert not report.passed
    assert any("oddness" in f for f in report.failures)
    assert report.as_dict()["passed"] is False


def test_validate_flags_rough_profile():
    rough = KernelSpec("angular_fourier", fourier={"c1sin": [0.0] * 2000 + [1.0]})
    report = validate(rough)
    assert not report.passed
    assert any("second difference" in f for f in report.failures)


def test_euler_decomposition():
    assert euler_decomposition_check(biot_savart(), np.array([1.0, 1.0])) < 1e-10
    assert euler_decomposition_check(grad_N(), np.array([0.3, -2.0])) < 1e-10


def test_euler_decomposition_all_specs(rng):
    x = rng.uniform(-2, 2, size=(64, 2))
    for spec in ALL_SPECS.values():
        assert np.max(euler_decomposition_check(spec, x)) < 1e-9
        # residual is homogeneous of degree -1 like k itself
        assert np.allclose(euler_decomposition_check(spec, 3 * x), euler_decomposition_check(spec, x) / 3, atol=1e-15)
