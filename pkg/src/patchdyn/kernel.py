"""Odd kernels in the plane that are homogeneous of degree -1.

Every kernel is stored through its angular profile on the unit circle,

    k(x) = Omega(phi) / |x|,   x = |x| (cos phi, sin phi),

where each component of Omega is a trigonometric polynomial in odd harmonics
only. Oddness and homogeneity then hold by construction, and the Jacobian is
obtained by differentiating the profile in polar form.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

VARIANTS = ("biot_savart", "grad_N", "angular_fourier", "linear_combination")
FOURIER_KEYS = ("c1sin", "c1cos", "c2sin", "c2cos")
SINGULAR_RADIUS = 1e-14
QUADRATURE_NODES = 2048

_INV_2PI = 1.0 / (2.0 * np.pi)


class KernelError(ValueError):
    pass


class KernelSingularityError(KernelError):
    pass


def _pad(arr, m):
    out = np.zeros(arr.shape[:-1] + (m,))
    out[..., : arr.shape[-1]] = arr
    return out


@dataclass(frozen=True)
class KernelSpec:
    """An odd, degree -1 homogeneous kernel.

    ``fourier`` (angular_fourier only) maps the keys c1sin, c1cos, c2sin, c2cos
    to amplitude lists indexed by harmonic 1, 2, 3, ...; entries at even
    harmonics must be zero. ``members`` (linear_combination only) is a sequence
    of (weight, KernelSpec) pairs.
    """

    variant: str = "biot_savart"
    strength: float = 1.0
    fourier: dict | None = None
    members: tuple = ()
    # compiled profile: sin/cos amplitudes, shape (2 components, M harmonics)
    sin_coef: np.ndarray = field(init=False, repr=False, compare=False)
    cos_coef: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise KernelError(f"unknown kernel variant {self.variant!r}; expected one of {VARIANTS}")
        s, c = self._compile()
        s = s * float(self.strength)
        c = c * float(self.strength)
        s.setflags(write=False)
        c.setflags(write=False)
        object.__setattr__(self, "members", tuple(self.members))
        object.__setattr__(self, "sin_coef", s)
        object.__setattr__(self, "cos_coef", c)

    def _compile(self):
        if self.variant == "biot_savart":
            # (1/2pi) (-y, x) / |x|^2
            return np.array([[-_INV_2PI], [0.0]]), np.array([[0.0], [_INV_2PI]])
        if self.variant == "grad_N":
            # (1/2pi) x / |x|^2
            return np.array([[0.0], [_INV_2PI]]), np.array([[_INV_2PI], [0.0]])
        if self.variant == "angular_fourier":
            four = dict(self.fourier or {})
            unknown = set(four) - set(FOURIER_KEYS)
            if unknown:
                raise KernelError(f"unknown fourier keys {sorted(unknown)}")
            lists = [np.asarray(four.get(key, []), dtype=float) for key in FOURIER_KEYS]
            m = max([1] + [len(v) for v in lists])
            lists = [_pad(v, m) for v in lists]
            for key, v in zip(FOURIER_KEYS, lists):
                even = v[1::2]
                if np.any(even != 0):
                    harm = 2 * (np.flatnonzero(even)[0] + 1)
                    raise KernelError(f"fourier.{key}: harmonic {harm} is even; only odd harmonics keep k odd")
            return np.vstack([lists[0], lists[2]]), np.vstack([lists[1], lists[3]])
        # linear combination
        m = max([1] + [mem.sin_coef.shape[1] for _, mem in self.members])
        s = np.zeros((2, m))
        c = np.zeros((2, m))
        for weight, mem in self.members:
            if not isinstance(mem, KernelSpec):
                raise KernelError("linear_combination members must be KernelSpec instances")
            s += float(weight) * _pad(mem.sin_coef, m)
            c += float(weight) * _pad(mem.cos_coef, m)
        return s, c

    @property
    def harmonics(self):
        return np.arange(1, self.sin_coef.shape[1] + 1)

    def scaled(self, factor):
        return KernelSpec("linear_combination", members=((factor, self),))


def biot_savart(strength=1.0):
    return KernelSpec("biot_savart", strength=strength)


def grad_N(strength=1.0):
    return KernelSpec("grad_N", strength=strength)


def combination(*pairs):
    return KernelSpec("linear_combination", members=tuple(pairs))


def _from_profile_unchecked(sin_coef, cos_coef):
    """Build a spec from raw profile amplitudes, bypassing the odd-harmonic guard.

    Only meant for constructing counterexamples for :func:`validate`.
    """
    spec = KernelSpec("linear_combination")
    object.__setattr__(spec, "sin_coef", np.atleast_2d(np.asarray(sin_coef, dtype=float)))
    object.__setattr__(spec, "cos_coef", np.atleast_2d(np.asarray(cos_coef, dtype=float)))
    return spec


def profile(spec, phi, derivative=0):
    """Angular profile Omega(phi) (or its phi-derivative), shape phi.shape + (2,)."""
    phi = np.asarray(phi, dtype=float)
    m = spec.harmonics.astype(float)
    arg = np.multiply.outer(phi, m)
    sn, cs = np.sin(arg), np.cos(arg)
    if derivative == 0:
        return sn @ spec.sin_coef.T + cs @ spec.cos_coef.T
    if derivative == 1:
        return (cs * m) @ spec.sin_coef.T - (sn * m) @ spec.cos_coef.T
    if derivative == 2:
        return -(sn * m**2) @ spec.sin_coef.T - (cs * m**2) @ spec.cos_coef.T
    raise ValueError("derivative order must be 0, 1 or 2")


def _polar(x):
    x = np.asarray(x, dtype=float)
    r = np.hypot(x[..., 0], x[..., 1])
    if np.any(r < SINGULAR_RADIUS):
        raise KernelSingularityError("kernel evaluated at (or too close to) the origin")
    return x, r, np.arctan2(x[..., 1], x[..., 0])


def eval_kernel(spec, x):
    """k(x) = Omega(phi)/|x| for nonzero x of shape (..., 2)."""
    x, r, phi = _polar(x)
    return profile(spec, phi) / r[..., None]


def eval_angular(spec, unit):
    """Omega at unit vectors, shape (..., 2); no singularity check."""
    unit = np.asarray(unit, dtype=float)
    return profile(spec, np.arctan2(unit[..., 1], unit[..., 0]))


def grad_kernel(spec, x):
    """Jacobian J[..., i, j] = d k_i / d x_j; even and homogeneous of degree -2."""
    x, r, phi = _polar(x)
    om = profile(spec, phi)
    dom = profile(spec, phi, derivative=1)
    c = np.cos(phi)[..., None]
    s = np.sin(phi)[..., None]
    r2 = (r**2)[..., None]
    dx = (-c * om - s * dom) / r2
    dy = (-s * om + c * dom) / r2
    return np.stack([dx, dy], axis=-1)


def delta_constants(spec, nodes=QUADRATURE_NODES):
    """c[i][j] = integral over the unit circle of k_i(x) x_j dsigma."""
    phi = 2.0 * np.pi * np.arange(nodes) / nodes
    om = profile(spec, phi)
    e = np.column_stack([np.cos(phi), np.sin(phi)])
    return om.T @ e * (2.0 * np.pi / nodes)


@dataclass
class ValidationReport:
    passed: bool
    residuals: dict
    failures: list

    def as_dict(self):
        return {"passed": self.passed, "residuals": dict(self.residuals), "failures": list(self.failures)}


def validate(spec, n_samples=256, tol=1e-12, c2_step=1e-3, c2_bound=1e6):
    """Sampled checks of oddness, degree -1 homogeneity and C^2 regularity.

    Never raises for a bad kernel; failures are collected in the report.
    """
    residuals = {}
    failures = []
    try:
        phi = 2.0 * np.pi * (np.arange(n_samples) + 0.5) / n_samples
        x = np.column_stack([np.cos(phi), np.sin(phi)])
        kx = eval_kernel(spec, x)
        residuals["oddness"] = float(np.max(np.abs(eval_kernel(spec, -x) + kx)))
        hom = 0.0
        for lam in (0.5, 2.0, 10.0):
            hom = max(hom, float(np.max(np.abs(eval_kernel(spec, lam * x) - kx / lam))))
        residuals["homogeneity"] = hom
        h = c2_step
        second = (profile(spec, phi + h) - 2.0 * profile(spec, phi) + profile(spec, phi - h)) / h**2
        residuals["second_difference"] = float(np.max(np.abs(second)))
        residuals["finite"] = float(np.all(np.isfinite(kx)))
    except Exception as exc:  # report, never abort
        failures.append(f"evaluation failed: {exc}")
        return ValidationReport(False, residuals, failures)
    if residuals["oddness"] > tol:
        failures.append(f"oddness residual {residuals['oddness']:.3e} exceeds {tol:g}")
    if residuals["homogeneity"] > tol:
        failures.append(f"homogeneity residual {residuals['homogeneity']:.3e} exceeds {tol:g}")
    if residuals["second_difference"] > c2_bound:
        failures.append(f"second difference {residuals['second_difference']:.3e} exceeds {c2_bound:g}")
    if residuals["finite"] != 1.0:
        failures.append("non-finite kernel values on the unit circle")
    return ValidationReport(not failures, residuals, failures)


def euler_decomposition(spec, x):
    """d1(x1 k) + d2(x2 k) = 2k + J x, by the product rule."""
    k = eval_kernel(spec, x)
    jac = grad_kernel(spec, x)
    return 2.0 * k + np.einsum("...ij,...j->...i", jac, np.asarray(x, dtype=float))


def euler_decomposition_check(spec, x):
    """|d1(x1 k) + d2(x2 k) - k| at x; zero up to round-off for degree -1 kernels."""
    resid = euler_decomposition(spec, x) - eval_kernel(spec, x)
    return np.linalg.norm(resid, axis=-1)
