"""Boundary-integral velocity of a patch and the maximal truncated singular integral.

For a patch D with positively oriented boundary X(theta) the velocity of
v = chi_D * k is the contour integral

    v(z) = int k(z - w) <R(z - w), dw>,    R(a, b) = (b, -a),

evaluated with the trapezoid rule on the marker grid. Its Jacobian off the
curve follows from the divergence theorem, dv_i/dz_j = -int k_i(z - w) n_j dsigma.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import kernel as kern
from .curve import diameter, spectral_derivative, trig_interpolate, upsample


class ProximityError(ValueError):
    """Evaluation point too close to the boundary for the smooth quadrature."""


def _as_points(curve):
    return np.asarray(getattr(curve, "points", curve), dtype=float)


def _pair_geometry(z, pts, self_tol):
    """Differences z - X_j, their lengths, and a mask of coincident pairs."""
    diff = z[:, None, :] - pts[None, :, :]
    r = np.hypot(diff[..., 0], diff[..., 1])
    coincide = r <= self_tol
    return diff, np.where(coincide, 1.0, r), coincide


def velocity_from_points(pts, spec, z, dpts=None, self_tol=None):
    """Trapezoid-rule v(z) for raw marker arrays; z has shape (M, 2)."""
    pts = np.asarray(pts, dtype=float)
    z = np.atleast_2d(np.asarray(z, dtype=float))
    n = len(pts)
    if dpts is None:
        dpts = spectral_derivative(pts)
    if self_tol is None:
        self_tol = 1e-13 * max(1.0, float(np.max(np.abs(pts))))
    diff, r, coincide = _pair_geometry(z, pts, self_tol)
    unit = diff / r[..., None]
    om = kern.eval_angular(spec, unit)
    # <R(unit), X'> with R(a, b) = (b, -a)
    flux = unit[..., 1] * dpts[None, :, 0] - unit[..., 0] * dpts[None, :, 1]
    # self-term is the limit of the integrand along a C^2 curve, which is 0
    weight = np.where(coincide, 0.0, flux)
    return np.einsum("mnc,mn->mc", om, weight) * (2.0 * np.pi / n)


def boundary_velocity(curve, spec, z):
    """Velocity of chi_D * k at z (a 2-vector or an (M, 2) array)."""
    z = np.asarray(z, dtype=float)
    out = velocity_from_points(_as_points(curve), spec, z.reshape(-1, 2))
    return out[0] if z.ndim == 1 else out


def velocity_on_markers(curve, spec, max_speed=None):
    """F(X): the velocity at every marker, self-term set to zero."""
    pts = _as_points(curve)
    v = velocity_from_points(pts, spec, pts)
    if max_speed is not None:
        top = float(np.max(np.linalg.norm(v, axis=1)))
        if top > max_speed:
            warnings.warn(f"marker speed {top:.3e} exceeds runaway bound {max_speed:.3e}", RuntimeWarning)
    return v


def gradient_from_points(pts, spec, z, dpts=None):
    """J[m, i, j] = -sum_k k_i(z_m - X_k) n_j |X'_k| dtheta (trapezoid)."""
    pts = np.asarray(pts, dtype=float)
    z = np.atleast_2d(np.asarray(z, dtype=float))
    n = len(pts)
    if dpts is None:
        dpts = spectral_derivative(pts)
    # outward normal times speed: (y', -x')
    nds = np.column_stack([dpts[:, 1], -dpts[:, 0]])
    kv = kern.eval_kernel(spec, z[:, None, :] - pts[None, :, :])
    return -np.einsum("mki,kj->mij", kv, nds) * (2.0 * np.pi / n)


def _distance_to_markers(pts, z):
    return np.min(np.linalg.norm(z[:, None, :] - pts[None, :, :], axis=-1), axis=1)


def grad_velocity_offcurve(curve, spec, z, eps_geom=None):
    """Jacobian dv_i/dz_j at points off the boundary.

    Raises ProximityError if a point lies within ``eps_geom`` (default
    1e-3 * diameter) of the boundary markers.
    """
    pts = _as_points(curve)
    z = np.asarray(z, dtype=float)
    zz = z.reshape(-1, 2)
    if eps_geom is None:
        eps_geom = 1e-3 * diameter(pts)
    dense = upsample(pts, 8)
    dist = _distance_to_markers(dense, zz)
    if np.any(dist <= eps_geom):
        raise ProximityError(f"point within {eps_geom:.3e} of the boundary")
    jac = gradient_from_points(pts, spec, zz)
    return jac[0] if z.ndim == 1 else jac


def tangential_gradient(curve, spec, v=None):
    """grad v(X) applied to the unit tangent, via d/dtheta of the marker velocity."""
    pts = _as_points(curve)
    if v is None:
        v = velocity_on_markers(pts, spec)
    speed = np.linalg.norm(spectral_derivative(pts), axis=1)
    return spectral_derivative(v) / speed[:, None]


def sup_grad_velocity(curve, spec, probe_spacings=3.0, tangential=True, v=None):
    """Estimate of sup |grad v| (operator norm) from probes on both sides of the curve.

    Probes sit at X_i +/- eps_i n_i with eps_i = ``probe_spacings`` local grid
    spacings; the on-curve tangential derivative is folded in when available.
    """
    pts = _as_points(curve)
    n = len(pts)
    dpts = spectral_derivative(pts)
    speed = np.linalg.norm(dpts, axis=1)
    tangent = dpts / speed[:, None]
    normal = np.column_stack([tangent[:, 1], -tangent[:, 0]])
    eps = probe_spacings * speed * (2.0 * np.pi / n)
    probes = np.vstack([pts + eps[:, None] * normal, pts - eps[:, None] * normal])
    jac = gradient_from_points(pts, spec, probes, dpts=dpts)
    best = float(np.max(np.linalg.norm(jac, ord=2, axis=(-2, -1))))
    if tangential:
        tg = tangential_gradient(pts, spec, v=v)
        best = max(best, float(np.max(np.linalg.norm(tg, axis=1))))
    return best


def boundary_flux(curve, v):
    """integral of <v, n> dsigma over the curve for marker values v."""
    pts = _as_points(curve)
    d = spectral_derivative(pts)
    n = len(pts)
    return float(np.sum(v[:, 0] * d[:, 1] - v[:, 1] * d[:, 0])) * 2.0 * np.pi / n


# ---------------------------------------------------------------------------
# maximal singular integral of chi_D


@dataclass(frozen=True)
class EvenKernel:
    """Even, zero-mean kernel homogeneous of degree -2: K(x) = Theta(phi)/|x|^2.

    ``cos_coef[j]`` and ``sin_coef[j]`` are the amplitudes of harmonic 2(j+1).
    """

    cos_coef: np.ndarray
    sin_coef: np.ndarray
    name: str = ""

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.cos_coef, dtype=float))
        s = np.atleast_1d(np.asarray(self.sin_coef, dtype=float))
        m = max(len(c), len(s))
        object.__setattr__(self, "cos_coef", np.pad(c, (0, m - len(c))))
        object.__setattr__(self, "sin_coef", np.pad(s, (0, m - len(s))))

    @property
    def harmonics(self):
        return 2 * np.arange(1, len(self.cos_coef) + 1)

    def angular(self, phi):
        arg = np.multiply.outer(np.asarray(phi, dtype=float), self.harmonics)
        return np.cos(arg) @ self.cos_coef + np.sin(arg) @ self.sin_coef

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        r2 = x[..., 0] ** 2 + x[..., 1] ** 2
        return self.angular(np.arctan2(x[..., 1], x[..., 0])) / r2

    @property
    def sup_angular(self):
        phi = np.linspace(0.0, 2.0 * np.pi, 4096, endpoint=False)
        return float(np.max(np.abs(self.angular(phi))))

    @classmethod
    def from_profile(cls, func, n=256, tol=1e-12, name=""):
        """Fit the even harmonics of an angular profile sampled at n points.

        Raises ValueError if the profile has odd harmonics or a nonzero mean.
        """
        phi = 2.0 * np.pi * np.arange(n) / n
        vals = np.asarray(func(phi), dtype=float)
        coef = np.fft.rfft(vals) / n
        scale = max(1.0, float(np.max(np.abs(vals))))
        if abs(coef[0]) > tol * scale:
            raise ValueError(f"profile has nonzero circle mean {coef[0].real:.3e}")
        odd = np.abs(coef[1::2])
        if np.any(odd > tol * scale):
            raise ValueError("profile is not even (odd harmonics present)")
        even = coef[2::2][: n // 4 - 1]
        return cls(2.0 * even.real, -2.0 * even.imag, name=name)

    @classmethod
    def from_gradient(cls, spec, i, j, n=256):
        """Entry (i, j) of the Jacobian of an odd degree -1 kernel (0-based indices)."""

        def prof(phi):
            unit = np.column_stack([np.cos(phi), np.sin(phi)])
            return kern.grad_kernel(spec, unit)[:, i, j]

        return cls.from_profile(prof, n=n, tol=1e-10, name=f"d{j + 1}k{i + 1}")


def named_even_kernel(name):
    """Entry kernels by short name: bs11..bs22, gn11..gn22 (grad of the preset), cos2, sin2."""
    if name == "cos2":
        return EvenKernel([1.0], [0.0], name=name)
    if name == "sin2":
        return EvenKernel([0.0], [1.0], name=name)
    presets = {"bs": kern.biot_savart(), "gn": kern.grad_N()}
    if len(name) == 4 and name[:2] in presets and name[2] in "12" and name[3] in "12":
        return EvenKernel.from_gradient(presets[name[:2]], int(name[2]) - 1, int(name[3]) - 1)
    raise ValueError(f"unknown kernel entry {name!r}; use bsIJ, gnIJ, cos2 or sin2")


@dataclass
class TruncationSweep:
    epsilons: np.ndarray
    values: np.ndarray
    running_sup: np.ndarray
    n_angles: int = 0
    budget_exceeded: bool = False
    meta: dict = field(default_factory=dict)

    @property
    def sup(self):
        return float(self.running_sup[-1])

    def rows(self):
        return list(zip(self.epsilons.tolist(), self.values.tolist(), self.running_sup.tolist()))


def _ray_crossings(x, poly, phi, rho_tol):
    """Crossing radii of rays x + rho*e(phi) with the closed polygon; inf where none."""
    e = np.column_stack([np.cos(phi), np.sin(phi)])
    w = poly - x
    # signed distance of each vertex from the ray's line; the half-open side
    # test counts a vertex lying exactly on the line once
    side = e[:, None, 0] * w[None, :, 1] - e[:, None, 1] * w[None, :, 0]
    side_next = np.roll(side, -1, axis=1)
    cross = (side >= 0) != (side_next >= 0)
    along = e[:, None, 0] * w[None, :, 0] + e[:, None, 1] * w[None, :, 1]
    along_next = np.roll(along, -1, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = side / (side - side_next)
    rho = along + t * (along_next - along)
    ok = cross & (rho > rho_tol)
    return np.where(ok, rho, np.inf)


def graded_polygon(pts, x, boundary_points=4096, ratio=1.03):
    """Boundary polygon on the trigonometric interpolant, refined geometrically
    toward the marker nearest to x.

    Near-tangent rays from a boundary point exit at distances comparable to
    their angle, so the polygon spacing must shrink in proportion to the
    distance from x.
    """
    n = len(pts)
    factor = max(1, int(np.ceil(boundary_points / n)))
    m = n * factor
    base = 2.0 * np.pi * np.arange(m) / m
    i0 = int(np.argmin(np.linalg.norm(pts - x, axis=1)))
    theta0 = 2.0 * np.pi * i0 / n
    count = int(np.ceil(np.log(np.pi / 1e-8) / np.log(ratio)))
    offsets = 1e-8 * ratio ** np.arange(count)
    offsets = offsets[offsets < np.pi]
    near = np.concatenate([theta0 + offsets, theta0 - offsets]) % (2.0 * np.pi)
    # keep the uniform vertices away from the refined zone, all refined ones inside it
    keep = np.abs((base - theta0 + np.pi) % (2.0 * np.pi) - np.pi) > 32 * (2.0 * np.pi / m)
    theta = np.unique(np.concatenate([base[keep], near, [theta0]]))
    out = trig_interpolate(pts, theta)
    out[np.isclose(theta, theta0, rtol=0, atol=1e-15)] = pts[i0]
    return out


def sigmoid_nodes(n, q=3):
    """Midpoint nodes on (0, 1) graded toward both ends, with weights."""
    t = (np.arange(n) + 0.5) / n
    a, b = t**q, (1.0 - t) ** q
    u = a / (a + b)
    du = q * t ** (q - 1) * (1.0 - t) ** (q - 1) / (a + b) ** 2
    return u, du / n


def angular_rule(pts, x, n_angles):
    """Angular nodes/weights for polar quadrature around x.

    At a boundary point the integrand has logarithmic endpoint behaviour at the
    two tangent directions, so each half circle gets sigmoidally graded nodes.
    Elsewhere the plain midpoint rule is used.
    """
    gaps = np.linalg.norm(pts - x, axis=1)
    i0 = int(np.argmin(gaps))
    if gaps[i0] > 1e-10 * diameter(pts):
        phi = 2.0 * np.pi * (np.arange(n_angles) + 0.5) / n_angles
        return phi, np.full(n_angles, 2.0 * np.pi / n_angles)
    d = spectral_derivative(pts)[i0]
    start = np.arctan2(d[1], d[0])
    u, w = sigmoid_nodes(n_angles // 2)
    phi = np.concatenate([start + np.pi * u, start + np.pi + np.pi * u])
    return phi, np.concatenate([np.pi * w, np.pi * w])


def inside_log_measure(crossings, epsilons):
    """For each ray: integral of d rho / rho over the inside part of (eps, inf).

    ``crossings`` has shape (rays, k) with inf padding; the ray starts inside the
    domain iff it crosses the boundary an odd number of times.
    """
    cr = np.sort(crossings, axis=1)
    count = np.sum(np.isfinite(cr), axis=1)
    kmax = int(np.max(count)) if len(count) else 0
    cr = cr[:, :kmax]
    start_inside = (count % 2 == 1).astype(float)
    idx = np.arange(kmax)
    # sorted crossings alternate end/start; the first is an end iff the ray starts inside
    sign = np.where(idx % 2 == 0, 1.0, -1.0)[None, :] * np.where(start_inside > 0, 1.0, -1.0)[:, None]
    valid = np.isfinite(cr)
    eps = np.asarray(epsilons, dtype=float)
    logs = np.log(np.maximum(np.where(valid, cr, 1.0)[:, :, None], eps[None, None, :]))
    total = np.sum(np.where(valid[:, :, None], sign[:, :, None] * logs, 0.0), axis=1)
    return total - start_inside[:, None] * np.log(eps)[None, :]


def default_epsilons(curve, count=40, hi=None, lo=None):
    diam = diameter(curve)
    hi = diam / 2.0 if hi is None else hi
    lo = diam * 1e-4 if lo is None else lo
    return np.geomspace(hi, lo, count)


def tstar(curve, even_kernel, x, epsilons=None, n_angles=4096, boundary_points=4096, budget=4.0e7):
    """epsilon-sweep of the truncated integrals of K(x - y) over D minus B(x, eps).

    Polar quadrature centred at x: midpoint rule in angle (graded toward the
    tangent directions when x is on the boundary), exact radial integration of
    d rho / rho between the ray's boundary crossings (found on a spectrally
    upsampled boundary polygon). Returns a TruncationSweep whose running_sup
    is the running maximum of |value| as eps decreases. ``even_kernel`` may
    also be a sequence of kernels, which then share one set of rays and give
    a list of sweeps.
    """
    pts = _as_points(curve)
    x = np.asarray(x, dtype=float)
    kernels = list(even_kernel) if isinstance(even_kernel, (list, tuple)) else [even_kernel]
    if epsilons is None:
        epsilons = default_epsilons(pts)
    epsilons = np.asarray(epsilons, dtype=float)
    if np.any(np.diff(epsilons) >= 0):
        raise ValueError("epsilon grid must be strictly decreasing")
    poly = graded_polygon(pts, x, boundary_points)
    exceeded = False
    if n_angles * len(poly) > budget:
        exceeded = True
        n_angles = max(64, int(budget // len(poly)))
        warnings.warn(f"tstar node budget exceeded; angular nodes reduced to {n_angles}", RuntimeWarning)
    rho_tol = 1e-12 * diameter(pts)
    phi, weights = angular_rule(pts, x, n_angles)
    theta_k = np.array([k.angular(phi) * weights for k in kernels])
    values = np.zeros((len(kernels), len(epsilons)))
    chunk = max(1, int(2_000_000 // len(poly)))
    for start in range(0, n_angles, chunk):
        sl = slice(start, start + chunk)
        cr = _ray_crossings(x, poly, phi[sl], rho_tol)
        meas = inside_log_measure(cr, epsilons)
        values += theta_k[:, sl] @ meas
    sweeps = [
        TruncationSweep(epsilons, val, np.maximum.accumulate(np.abs(val)), n_angles=n_angles,
                        budget_exceeded=exceeded, meta={"kernel": k.name})
        for k, val in zip(kernels, values)
    ]
    return sweeps if isinstance(even_kernel, (list, tuple)) else sweeps[0]


def log_bound_rhs(area, q, A):
    """A * (1 + log+(sqrt(area) * q))."""
    if area <= 0 or q <= 0 or A <= 0:
        raise ValueError("area, q and A must be positive")
    return A * (1.0 + max(0.0, float(np.log(np.sqrt(area) * q))))
