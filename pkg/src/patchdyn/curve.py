"""Closed curves sampled at uniform parameter values.

A curve is stored as N marker positions X(theta_i), theta_i = 2*pi*i/N.
Derivatives, areas and interpolation are all computed spectrally from the
periodic samples, so smooth (band-limited) shapes are handled to round-off.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import brentq


class CurveError(ValueError):
    """Invalid curve data or shape parameters."""


class SelfIntersectionError(CurveError):
    pass


def uniform_params(n):
    return 2.0 * np.pi * np.arange(n) / n


def spectral_derivative(values, order=1):
    """d^order/dtheta^order of periodic samples along axis 0."""
    values = np.asarray(values, dtype=float)
    n = values.shape[0]
    k = np.fft.fftfreq(n, d=1.0 / n)
    if order % 2 == 1:
        # the Nyquist mode has no well-defined odd derivative
        k[n // 2] = 0.0
    mult = (1j * k) ** order
    coef = np.fft.fft(values, axis=0)
    shape = (n,) + (1,) * (values.ndim - 1)
    return np.real(np.fft.ifft(coef * mult.reshape(shape), axis=0))


def trig_interpolate(values, theta):
    """Evaluate the trigonometric interpolant of periodic samples at ``theta``.

    The Nyquist coefficient is split symmetrically so the interpolant is real.
    """
    values = np.asarray(values, dtype=float)
    theta = np.asarray(theta, dtype=float)
    n = values.shape[0]
    coef = np.fft.fft(values, axis=0) / n
    k = np.fft.fftfreq(n, d=1.0 / n)
    if n % 2 == 0:
        # real data: the Nyquist coefficient c is real and contributes c*cos(n*theta/2)
        k[n // 2] = n / 2.0
    phase = np.multiply.outer(theta, k)
    return np.cos(phase) @ coef.real - np.sin(phase) @ coef.imag


def upsample(points, factor):
    """Spectrally upsample periodic samples by an integer factor (zero padding)."""
    points = np.asarray(points, dtype=float)
    n = points.shape[0]
    m = n * factor
    coef = np.fft.fft(points, axis=0)
    padded = np.zeros((m,) + points.shape[1:], dtype=complex)
    half = n // 2
    padded[:half] = coef[:half]
    padded[m - half + 1 :] = coef[half + 1 :]
    # split the Nyquist mode between +n/2 and -n/2
    padded[half] = 0.5 * coef[half]
    padded[m - half] = 0.5 * coef[half]
    return np.real(np.fft.ifft(padded, axis=0)) * factor


def _segments_intersect(points):
    """True if the closed polygon through ``points`` has two crossing edges."""
    p = points
    q = np.roll(points, -1, axis=0)
    n = len(p)

    def orient(a, b, c):
        return (b[..., 0] - a[..., 0]) * (c[..., 1] - a[..., 1]) - (b[..., 1] - a[..., 1]) * (
            c[..., 0] - a[..., 0]
        )

    pa, qa = p[:, None, :], q[:, None, :]
    pb, qb = p[None, :, :], q[None, :, :]
    d1 = orient(pa, qa, pb)
    d2 = orient(pa, qa, qb)
    d3 = orient(pb, qb, pa)
    d4 = orient(pb, qb, qa)
    crossing = (d1 * d2 < 0) & (d3 * d4 < 0)
    i, j = np.indices((n, n))
    gap = np.abs(i - j)
    adjacent = (gap <= 1) | (gap == n - 1)
    return bool(np.any(crossing & ~adjacent))


@dataclass(frozen=True)
class Curve:
    """A closed curve sampled at N uniform parameter values on the circle.

    Attributes:
        points: (N, 2) marker positions.
        gamma: Hoelder exponent carried along for diagnostics.
        meta: free-form metadata (e.g. reparametrization events).
    """

    points: np.ndarray
    gamma: float = 0.5
    meta: dict = field(default_factory=dict, compare=False)
    check: bool = field(default=True, compare=False, repr=False)

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise CurveError("points must have shape (N, 2)")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        n = len(pts)
        if n < 16 or n % 2:
            raise CurveError(f"marker count must be even and >= 16, got {n}")
        if not 0.0 < self.gamma < 1.0:
            raise CurveError(f"gamma must lie in (0, 1), got {self.gamma}")
        if self.check:
            gaps = np.linalg.norm(pts - np.roll(pts, -1, axis=0), axis=1)
            if np.min(gaps) <= 0.0:
                raise SelfIntersectionError("two consecutive markers coincide")
            if _segments_intersect(pts):
                raise SelfIntersectionError("marker polygon self-intersects")

    @property
    def n_markers(self):
        return len(self.points)

    @property
    def params(self):
        return uniform_params(self.n_markers)

    @property
    def spacing(self):
        return 2.0 * np.pi / self.n_markers

    def with_points(self, points, check=True):
        return Curve(points, gamma=self.gamma, meta=dict(self.meta), check=check)


def preset_shape(name, n=128, gamma=0.5, **params):
    """Sample one of the analytic preset shapes at ``n`` markers.

    Supported names and parameters:
        circle: radius (default 1), center (default (0, 0)).
        ellipse: a, b with a >= b > 0.
        perturbed_circle: r(theta) = 1 + eps*cos(m*theta); requires |eps| < 1.
    """
    theta = uniform_params(n)
    center = np.asarray(params.pop("center", (0.0, 0.0)), dtype=float)
    if name == "circle":
        r = float(params.pop("radius", 1.0))
        if r <= 0:
            raise CurveError(f"circle radius must be positive, got {r}")
        pts = r * np.column_stack([np.cos(theta), np.sin(theta)])
    elif name == "ellipse":
        a = float(params.pop("a", 2.0))
        b = float(params.pop("b", 1.0))
        if not a >= b > 0:
            raise CurveError(f"ellipse needs a >= b > 0, got a={a}, b={b}")
        pts = np.column_stack([a * np.cos(theta), b * np.sin(theta)])
    elif name == "perturbed_circle":
        eps = float(params.pop("eps", 0.1))
        m = int(params.pop("m", 3))
        if abs(eps) >= 1.0:
            raise CurveError(f"perturbation |eps| must be < 1 for a positive radius, got {eps}")
        if m < 1:
            raise CurveError(f"perturbation mode m must be >= 1, got {m}")
        r = 1.0 + eps * np.cos(m * theta)
        pts = r[:, None] * np.column_stack([np.cos(theta), np.sin(theta)])
    else:
        raise CurveError(f"unknown preset shape {name!r}")
    if params:
        raise CurveError(f"unexpected parameters for {name}: {sorted(params)}")
    return Curve(pts + center, gamma=gamma)


def derivative(curve):
    """dX/dtheta at each marker by Fourier differentiation."""
    return spectral_derivative(curve.points)


def tangent_normal(curve):
    """Unit tangent and outward unit normal (tangent rotated by -90 degrees)."""
    d = derivative(curve)
    speed = np.linalg.norm(d, axis=1)
    if np.min(speed) < 1e-12:
        raise CurveError("degenerate parametrization: |dX/dtheta| vanishes at a marker")
    tangent = d / speed[:, None]
    normal = np.column_stack([tangent[:, 1], -tangent[:, 0]])
    return tangent, normal


def chordal_distance(theta_a, theta_b):
    return 2.0 * np.abs(np.sin(0.5 * (theta_a - theta_b)))


def holder_seminorm(field, gamma, points=None):
    """Discrete Hoelder seminorm sup |F_i - F_j| / dist_ij**gamma over marker pairs.

    Without ``points`` the distance is the chordal distance of the parameters on
    the unit circle; with ``points`` it is the ambient distance between them.
    """
    field = np.asarray(field, dtype=float)
    if field.ndim == 1:
        field = field[:, None]
    n = len(field)
    if points is None:
        theta = uniform_params(n)
        dist = chordal_distance(theta[:, None], theta[None, :])
    else:
        points = np.asarray(points, dtype=float)
        dist = np.linalg.norm(points[:, None, :] - points[None, :, :], axis=-1)
    num = np.linalg.norm(field[:, None, :] - field[None, :, :], axis=-1)
    off = ~np.eye(n, dtype=bool)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = num[off] / dist[off] ** gamma
    if np.any(dist[off] == 0):
        return np.inf
    return float(np.max(ratio))


def bilipschitz_constant(current, reference):
    """min over marker pairs of |X_i - X_j| / |alpha_i - alpha_j|.

    Returns 0.0 when two current markers coincide (blow-up signal).
    """
    x = np.asarray(getattr(current, "points", current), dtype=float)
    a = np.asarray(getattr(reference, "points", reference), dtype=float)
    if x.shape != a.shape:
        raise CurveError("current and reference curves must share marker count")
    n = len(x)
    off = ~np.eye(n, dtype=bool)
    da = np.linalg.norm(a[:, None, :] - a[None, :, :], axis=-1)[off]
    if np.any(da == 0):
        raise CurveError("reference markers must be pairwise distinct")
    dx = np.linalg.norm(x[:, None, :] - x[None, :, :], axis=-1)[off]
    return float(np.min(dx / da))


def area(curve):
    """Signed area 1/2 * integral of (x y' - y x') dtheta, trapezoid rule.

    With spectral derivatives this is exact for band-limited curves.
    """
    pts = np.asarray(getattr(curve, "points", curve), dtype=float)
    d = spectral_derivative(pts)
    n = len(pts)
    return 0.5 * float(np.sum(pts[:, 0] * d[:, 1] - pts[:, 1] * d[:, 0])) * 2.0 * np.pi / n


def diameter(curve):
    pts = np.asarray(getattr(curve, "points", curve), dtype=float)
    return float(np.max(np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=-1)))


def marker_gaps(curve):
    pts = np.asarray(getattr(curve, "points", curve), dtype=float)
    return np.linalg.norm(np.roll(pts, -1, axis=0) - pts, axis=1)


def _arclength_function(points):
    """Return (s(theta), total length) for the trigonometric interpolant."""
    n = len(points)
    factor = max(8, int(np.ceil(4096 / n)))
    dense = upsample(points, factor)
    speed = np.linalg.norm(spectral_derivative(dense), axis=1)
    m = len(speed)
    coef = np.fft.fft(speed) / m
    k = np.fft.fftfreq(m, d=1.0 / m)
    mean = coef[0].real
    total = 2.0 * np.pi * mean
    nz = k != 0
    kk = k[nz]
    cc = coef[nz]

    def s_of(theta):
        periodic = np.sum(cc * (np.exp(1j * kk * theta) - 1.0) / (1j * kk)).real
        return mean * theta + periodic

    return s_of, total


def arc_resample(curve, n_new):
    """Redistribute markers uniformly in arclength.

    The new markers are placed on the trigonometric interpolant of the old ones;
    the returned curve carries ``meta['reparametrized'] = True``.
    """
    n_new = int(n_new)
    if n_new < 16 or n_new % 2:
        raise CurveError(f"n_new must be even and >= 16, got {n_new}")
    s_of, total = _arclength_function(curve.points)
    targets = total * np.arange(n_new) / n_new
    theta_new = np.empty(n_new)
    theta_new[0] = 0.0
    for i in range(1, n_new):
        # s is strictly increasing; bracket using the mean speed bound
        theta_new[i] = brentq(lambda th: s_of(th) - targets[i], theta_new[i - 1], 2.0 * np.pi)
    pts = trig_interpolate(curve.points, theta_new)
    meta = dict(curve.meta)
    meta["reparametrized"] = True
    return Curve(pts, gamma=curve.gamma, meta=meta)


def write_curve_csv(curve, path):
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["theta", "x", "y"])
        for th, (x, y) in zip(curve.params, curve.points):
            writer.writerow([repr(float(th)), repr(float(x)), repr(float(y))])


def read_curve_csv(path, gamma=0.5):
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if [h.strip() for h in header] != ["theta", "x", "y"]:
            raise CurveError(f"{path}: expected header theta,x,y, got {header}")
        rows = [[float(v) for v in row] for row in reader if row]
    data = np.array(rows)
    theta = data[:, 0]
    if not np.allclose(theta, uniform_params(len(theta)), atol=1e-9):
        raise CurveError(f"{path}: theta column must be uniform 2*pi*i/N starting at 0")
    return Curve(data[:, 1:], gamma=gamma)
