"""Two-sided check of the commutator identity on the patch boundary.

For a divergence-free g that equals the unit tangent tau on the curve,

    grad v(x) tau(x) = int_D grad k(x - y) (g(x) - g(y)) dy,   x on the curve,

with grad k applied row-wise (component i of the result is
sum_j d_j k_i(x - y) (g_j(x) - g_j(y))). The left side is computed spectrally
from the boundary velocity; the right side is an area integral over the patch.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .curve import area, holder_seminorm, spectral_derivative, upsample
from .extension import _smoothstep, divergence_free_field, unit_tangent, whitney_extend
from .kernel import grad_kernel
from .velocity import _ray_crossings, angular_rule, graded_polygon, sup_grad_velocity, velocity_on_markers


class QuadratureError(ValueError):
    pass


def direct_tangential(curve, spec, v=None):
    """grad v(x) tau(x) at the markers: d/dtheta of the marker velocity over |X'|."""
    if v is None:
        v = velocity_on_markers(curve, spec)
    d = spectral_derivative(curve.points)
    speed = np.linalg.norm(d, axis=1)
    if np.min(speed) < 1e-12:
        raise QuadratureError("degenerate parametrization: |dX/dtheta| vanishes at a marker")
    return spectral_derivative(v) / speed[:, None]


@dataclass(frozen=True)
class PatchQuadrature:
    """Curved-fan quadrature of the patch: y = c + s (X(theta) - c).

    Trapezoid rule in theta on the spectrally upsampled boundary, composite
    Gauss-Legendre panels in s graded toward the boundary s = 1. Requires the
    patch to be star-shaped with respect to the fan center.
    """

    nodes: np.ndarray
    weights: np.ndarray
    center: np.ndarray
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def total_area(self):
        return float(np.sum(self.weights))

    @classmethod
    def build(cls, curve, theta_factor=8, panel_order=8, level=1, center=None):
        pts = np.asarray(curve.points, dtype=float)
        n = len(pts)
        factor = int(theta_factor * level)
        bnd = upsample(pts, factor)
        dbnd = spectral_derivative(bnd)
        c = np.mean(bnd, axis=0) if center is None else np.asarray(center, dtype=float)
        rel = bnd - c
        jac = rel[:, 0] * dbnd[:, 1] - rel[:, 1] * dbnd[:, 0]
        if np.min(jac) <= 0:
            raise QuadratureError("patch is not star-shaped with respect to the fan center")
        # s panels [1 - 2^-k, 1 - 2^-(k+1)] down to the boundary sample scale
        reach = float(np.max(np.linalg.norm(rel, axis=1)))
        fine = np.min(np.linalg.norm(np.diff(bnd, axis=0), axis=1))
        depth = max(1, int(np.ceil(np.log2(reach / fine))))
        breaks = np.concatenate([[0.0], 1.0 - 0.5 ** np.arange(1, depth + 1), [1.0]])
        order = int(panel_order * level)
        gx, gw = np.polynomial.legendre.leggauss(order)
        lo, hi = breaks[:-1, None], breaks[1:, None]
        s = (0.5 * (hi - lo) * (gx + 1.0) + lo).ravel()
        ws = (0.5 * (hi - lo) * gw).ravel()
        nodes = c + s[None, :, None] * rel[:, None, :]
        weights = (jac[:, None] * s[None, :] * ws[None, :]) * (2.0 * np.pi / len(bnd))
        meta = {"theta_nodes": len(bnd), "s_nodes": len(s), "markers": n, "level": level}
        return cls(nodes.reshape(-1, 2), weights.ravel(), c, meta)


def _near_cutoff(r, radius):
    """chi = 1 for r <= radius/2, 0 for r >= radius, smooth in between."""
    return _smoothstep((radius - r) / (0.5 * radius))[0]


def _inner_polar(curve, spec, ext, x, gx, radius, n_angles, n_radial, poly):
    """int over D near x of chi(|x-y|) grad k(x-y)(g(x) - g(y)) dy in polar coordinates.

    With y = x + rho e, grad k(x - y) = grad k(e) / rho**2 and dy = rho drho dpsi.
    The inside part of each ray comes from its boundary crossings; radial
    nodes are Gauss-Legendre in t with rho = a + (b - a) t**2.
    """
    pts = curve.points
    phi, wphi = angular_rule(pts, x, n_angles)
    cr = np.sort(_ray_crossings(x, poly, phi, 1e-12 * radius), axis=1)
    count = np.sum(np.isfinite(cr), axis=1)
    kmax = int(np.max(count))
    cr = cr[:, :kmax]
    start_inside = count % 2 == 1
    # interval endpoints: inside from 0 when the ray starts inside
    starts = np.where(start_inside[:, None], np.concatenate([np.zeros((len(phi), 1)), cr], axis=1),
                      np.concatenate([cr, np.full((len(phi), 1), np.inf)], axis=1))
    a = starts[:, 0::2]
    b = starts[:, 1::2]
    m = min(a.shape[1], b.shape[1])
    a, b = np.minimum(a[:, :m], radius), np.minimum(b[:, :m], radius)
    b = np.where(np.isfinite(b), b, radius)
    live = b > a
    tx, tw = np.polynomial.legendre.leggauss(n_radial)
    t = 0.5 * (tx + 1.0)
    wt = 0.5 * tw
    rho = a[:, :, None] + (b - a)[:, :, None] * t**2
    wrho = (b - a)[:, :, None] * 2.0 * t * wt
    wrho = np.where(live[:, :, None], wrho, 0.0)
    e = np.column_stack([np.cos(phi), np.sin(phi)])
    y = x + rho[..., None] * e[:, None, None, :]
    mask = wrho > 0
    diff = np.zeros(y.shape)
    diff[mask] = gx - divergence_free_field(ext, y[mask])
    jac = grad_kernel(spec, e)  # (rays, 2, 2)
    chi = _near_cutoff(rho, radius)
    weight = np.where(mask, chi * wrho / np.where(mask, rho, 1.0), 0.0) * wphi[:, None, None]
    return np.einsum("rij,rkqj,rkq->i", jac, diff, weight)


@dataclass
class CommutatorEngine:
    """Precomputed fan nodes and g values for repeated commutator evaluations."""

    curve: object
    spec: object
    ext: object
    quad: PatchQuadrature
    g_nodes: np.ndarray
    n_angles: int = 256
    n_radial: int = 16
    radius_spacings: float = 3.0
    boundary_points: int = 2048

    @classmethod
    def build(cls, curve, spec, ext, level=1, budget=5.0e6, **kw):
        quad = PatchQuadrature.build(curve, level=level)
        n_angles = int(kw.pop("n_angles", 256) * level)
        n_radial = int(kw.pop("n_radial", 16) * level)
        if len(quad.weights) + n_angles * n_radial > budget:
            warnings.warn("commutator node budget exceeded; results may be inaccurate", RuntimeWarning)
        g_nodes = divergence_free_field(ext, quad.nodes)
        return cls(curve, spec, ext, quad, g_nodes, n_angles=n_angles, n_radial=n_radial, **kw)

    def evaluate(self, index):
        """Commutator integral at marker ``index``."""
        pts = self.curve.points
        x = pts[index]
        gx = divergence_free_field(self.ext, x)
        d = spectral_derivative(pts)
        radius = self.radius_spacings * np.linalg.norm(d[index]) * self.curve.spacing
        # outer part on the fan, damped near x by 1 - chi
        rel = x - self.quad.nodes
        r = np.hypot(rel[:, 0], rel[:, 1])
        w = self.quad.weights * (1.0 - _near_cutoff(r, radius))
        use = w != 0
        jac = grad_kernel(self.spec, rel[use])
        outer = np.einsum("nij,nj,n->i", jac, gx - self.g_nodes[use], w[use])
        poly = graded_polygon(pts, x, self.boundary_points)
        inner = _inner_polar(self.curve, self.spec, self.ext, x, gx, radius, self.n_angles, self.n_radial, poly)
        return outer + inner


def commutator_integral(curve, spec, ext, index, level=1):
    """int_D grad k(x - y)(g(x) - g(y)) dy at the marker x = curve.points[index]."""
    return CommutatorEngine.build(curve, spec, ext, level=level).evaluate(index)


@dataclass
class Lemma3Report:
    indices: list
    direct: np.ndarray
    commutator: np.ndarray
    discrepancy: np.ndarray
    tol: float
    holder_commutator: float
    holder_tangent: float
    sup_grad_v: float
    fitted_C: float
    meta: dict = field(default_factory=dict)

    @property
    def max_discrepancy(self):
        return float(np.max(self.discrepancy))

    @property
    def passed(self):
        return bool(self.max_discrepancy < self.tol)

    def as_dict(self):
        return {
            "passed": self.passed,
            "tol": self.tol,
            "max_discrepancy": self.max_discrepancy,
            "holder_commutator": self.holder_commutator,
            "holder_tangent": self.holder_tangent,
            "sup_grad_v": self.sup_grad_v,
            "fitted_C": self.fitted_C,
            "markers": [
                {"index": int(i), "direct": dv.tolist(), "commutator": cv.tolist(), "discrepancy": float(r)}
                for i, dv, cv, r in zip(self.indices, self.direct, self.commutator, self.discrepancy)
            ],
            "meta": dict(self.meta),
        }


def lemma3_check(curve, spec, gamma, stride=4, tol=5e-2, level=1, ext=None):
    """Evaluate both sides of the identity at every ``stride``-th marker.

    Also reports the sampled Hoelder seminorm of the commutator side and the
    constant C that makes it equal C (1 + ||grad v||_inf) ||tau||_gamma.
    """
    tau = unit_tangent(curve)
    if ext is None:
        ext = whitney_extend(curve, tau, gamma)
    v = velocity_on_markers(curve, spec)
    direct = direct_tangential(curve, spec, v=v)
    engine = CommutatorEngine.build(curve, spec, ext, level=level)
    idx = list(range(0, curve.n_markers, int(stride)))
    comm = np.array([engine.evaluate(i) for i in idx])
    dsel = direct[idx]
    disc = np.linalg.norm(dsel - comm, axis=1) / (np.linalg.norm(dsel, axis=1) + 1e-12)
    h_comm = holder_seminorm(comm, gamma, points=curve.points[idx])
    h_tau = holder_seminorm(tau, gamma, points=curve.points)
    sg = sup_grad_velocity(curve, spec, v=v)
    fitted = h_comm / ((1.0 + sg) * h_tau) if h_tau > 0 else np.inf
    meta = dict(engine.quad.meta, n_angles=engine.n_angles, n_radial=engine.n_radial, squares=ext.n_squares)
    return Lemma3Report(idx, dsel, comm, disc, tol, h_comm, h_tau, sg, float(fitted), meta)


def fan_area_error(curve, level=1):
    """|sum of fan weights - area(curve)|, the quadrature's sanity check."""
    quad = PatchQuadrature.build(curve, level=level)
    return abs(quad.total_area - area(curve))


__all__ = [
    "CommutatorEngine",
    "Lemma3Report",
    "PatchQuadrature",
    "QuadratureError",
    "commutator_integral",
    "direct_tangential",
    "fan_area_error",
    "lemma3_check",
]
