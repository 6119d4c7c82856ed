"""Jet inequality verifier and divergence-free Whitney extension of a tangent field.

The extension is built for the first-order jet

    phi = 0,   grad phi = (-tau_2, tau_1)   on the curve,

so that g = (d2 phi, -d1 phi) is divergence free everywhere and equals tau on
the curve. The closed set carrying the jet is a dense sample of the curve: the
markers plus trigonometric-interpolation points between them.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .curve import (
    diameter,
    holder_seminorm,
    marker_gaps,
    spectral_derivative,
    tangent_normal,
    trig_interpolate,
    upsample,
)

TANGENCY_TOL = 1e-10
OVERLAP_LIMIT = 64
WHITNEY_RATIO = 3.0  # keep a square once dist(center, E) >= 3 * side
BUMP_REACH = 1.5  # bump support in units of the half-side


class ExtensionError(ValueError):
    pass


class Lemma1ViolationError(AssertionError):
    pass


def lemma1_constant(gamma):
    return 2.0 ** (3.0 + 0.5 * gamma)


@dataclass(frozen=True)
class Lemma1Result:
    empirical_sup: float
    holder_norm: float
    ratio: float
    bound_A: float

    @property
    def passed(self):
        return self.ratio <= self.bound_A

    def as_dict(self):
        return {
            "empirical_sup": self.empirical_sup,
            "holder_norm": self.holder_norm,
            "ratio": self.ratio,
            "bound_A": self.bound_A,
            "passed": self.passed,
        }


def jet_constant_verify(curve, normal_field, gamma):
    """Pair scan of |(y - x).N(x)| / |y - x|**(1 + gamma) against ||N||_gamma.

    The Hoelder seminorm uses ambient distances between curve points. Raises
    :class:`Lemma1ViolationError` if the ratio exceeds 2**(3 + gamma/2).
    """
    pts = np.asarray(curve.points, dtype=float)
    nrm = np.asarray(normal_field, dtype=float)
    if nrm.shape != pts.shape:
        raise ValueError("normal field must have one 2-vector per marker")
    if np.min(np.linalg.norm(nrm, axis=1)) == 0.0:
        raise ValueError("normal field must not vanish")
    diff = pts[None, :, :] - pts[:, None, :]  # y - x, x indexes rows
    dist = np.linalg.norm(diff, axis=-1)
    off = ~np.eye(len(pts), dtype=bool)
    num = np.abs(np.einsum("ijk,ik->ij", diff, nrm))
    sup = float(np.max(num[off] / dist[off] ** (1.0 + gamma)))
    hn = holder_seminorm(nrm, gamma, points=pts)
    ratio = sup / hn if hn > 0 else np.inf
    res = Lemma1Result(sup, hn, float(ratio), lemma1_constant(gamma))
    if not res.passed:
        raise Lemma1ViolationError(
            f"jet ratio {res.ratio:.6g} exceeds 2^(3+gamma/2) = {res.bound_A:.6g}; "
            "the field is probably not normal to the curve"
        )
    return res


def jet_compatibility(points, grads, gamma):
    """Sup of the two Whitney compatibility ratios for the jet (0, grads)."""
    diff = points[None, :, :] - points[:, None, :]
    dist = np.linalg.norm(diff, axis=-1)
    off = ~np.eye(len(points), dtype=bool)
    taylor = np.abs(np.einsum("ijk,ik->ij", diff, grads))[off] / dist[off] ** (1.0 + gamma)
    slope = np.linalg.norm(grads[None] - grads[:, None], axis=-1)[off] / dist[off] ** gamma
    return float(max(np.max(taylor), np.max(slope)))


# ---------------------------------------------------------------------------
# smooth bumps


def _smoothstep(y):
    """C-infinity step, 0 for y <= 0 and 1 for y >= 1, with its derivative."""
    y = np.clip(y, 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        f0 = np.where(y > 0, np.exp(-1.0 / np.where(y > 0, y, 1.0)), 0.0)
        f1 = np.where(y < 1, np.exp(-1.0 / np.where(y < 1, 1.0 - y, 1.0)), 0.0)
        df0 = np.where(y > 0, f0 / np.where(y > 0, y, 1.0) ** 2, 0.0)
        df1 = np.where(y < 1, -f1 / np.where(y < 1, 1.0 - y, 1.0) ** 2, 0.0)
    den = f0 + f1
    s = f0 / den
    ds = (df0 * den - f0 * (df0 + df1)) / den**2
    return s, ds


def flat_bump(u):
    """beta(u) = 1 for |u| <= 1, 0 for |u| >= BUMP_REACH, smooth in between; and beta'."""
    a = np.abs(u)
    s, ds = _smoothstep((BUMP_REACH - a) / (BUMP_REACH - 1.0))
    return s, -ds * np.sign(u) / (BUMP_REACH - 1.0)


def radial_cutoff(x, center, r1, r2):
    """eta = 1 inside radius r1, 0 beyond r2, with exact gradient."""
    d = np.asarray(x, dtype=float) - center
    r = np.hypot(d[..., 0], d[..., 1])
    s, ds = _smoothstep((r2 - r) / (r2 - r1))
    safe = np.where(r > 0, r, 1.0)
    grad = (-ds / (r2 - r1) / safe)[..., None] * d
    return s, grad


# ---------------------------------------------------------------------------
# Whitney extension


@dataclass(frozen=True)
class WhitneyExtension:
    """Dyadic squares, their affine pieces and the far-field cutoff.

    Squares are stored per level as sorted integer keys into a grid of side
    ``root_side / 2**level`` anchored at ``origin``. Square q carries the
    polynomial P_q(x) = grad_q . (x - anchor_q), anchor_q being the nearest
    point of the jet set to the square's center.
    """

    origin: np.ndarray
    root_side: float
    levels: tuple  # per level: (sorted keys, anchors (m,2), grads (m,2))
    stride: int
    centroid: np.ndarray
    r_inner: float
    r_outer: float
    jet_points: np.ndarray
    jet_grads: np.ndarray
    gamma: float
    jet_constant: float
    max_overlap: int
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def n_squares(self):
        return int(sum(len(lv[0]) for lv in self.levels))

    @property
    def finest_side(self):
        return self.root_side / 2 ** (len(self.levels) - 1)


def _encode(ij, stride):
    return ij[..., 0].astype(np.int64) * stride + ij[..., 1].astype(np.int64)


def _jet_set(curve, tangent_field, refine):
    """Dense jet carrier: markers plus spectral interpolation points."""
    pts = np.asarray(curve.points, dtype=float)
    tau = np.asarray(tangent_field, dtype=float)
    if refine > 1:
        pts = upsample(pts, refine)
        tau = upsample(tau, refine)
    return pts, np.column_stack([-tau[:, 1], tau[:, 0]])


def whitney_extend(curve, tangent_field, gamma, max_depth=12, refine=4, collar=None):
    """Build the stream-function extension phi of the jet (0, (-tau_2, tau_1)).

    Args:
        curve: the boundary curve.
        tangent_field: tangent vectors at the markers (not necessarily unit).
        gamma: Hoelder exponent of the jet.
        max_depth: cap on the dyadic depth below the root squares.
        refine: the jet set is the curve upsampled by this factor.
        collar: width of the region around the curve where phi is kept before
            the smooth cutoff (default: the curve diameter).
    """
    tau = np.asarray(tangent_field, dtype=float)
    if tau.shape != curve.points.shape:
        raise ExtensionError("tangent field must have one 2-vector per marker")
    _, nrm = tangent_normal(curve)
    off_normal = np.abs(np.sum(tau * nrm, axis=1))
    if np.max(off_normal) >= TANGENCY_TOL * max(1.0, float(np.max(np.linalg.norm(tau, axis=1)))):
        raise ExtensionError(
            f"field is not tangent to the curve: max |<tau, n>| = {np.max(off_normal):.3e}"
        )
    jet_pts, jet_grads = _jet_set(curve, tau, refine)
    jet_c = jet_compatibility(jet_pts, jet_grads, gamma) if np.any(jet_grads) else 0.0
    if not np.isfinite(jet_c):
        raise ExtensionError("jet constant is not finite")

    diam = diameter(curve)
    width = diam if collar is None else float(collar)
    centroid = np.mean(jet_pts, axis=0)
    rho = float(np.max(np.linalg.norm(jet_pts - centroid, axis=1)))
    r_inner, r_outer = rho + 0.5 * width, rho + width
    root = 0.5 * diam
    gap = float(np.min(marker_gaps(jet_pts)))
    # stop refining once squares are well below the jet-set spacing
    depth = min(int(max_depth), max(0, int(np.ceil(np.log2(8.0 * root / gap)))))
    finest = root / 2**depth
    if finest > 0.25 * gap:
        raise ExtensionError(
            f"finest square side {finest:.3e} exceeds a quarter of the jet spacing {gap:.3e}; "
            "increase max_depth"
        )

    half_cov = r_outer + root
    n_root = int(np.ceil(2.0 * half_cov / root))
    origin = centroid - 0.5 * n_root * root
    stride = n_root * 2 ** (depth + 1) + 4
    tree = cKDTree(jet_pts)

    gi, gj = np.meshgrid(np.arange(n_root), np.arange(n_root), indexing="ij")
    active = np.column_stack([gi.ravel(), gj.ravel()])
    levels = []
    for level in range(depth + 1):
        side = root / 2**level
        centers = origin + (active + 0.5) * side
        # drop squares whose bumps cannot reach inside the cutoff radius
        reach = BUMP_REACH * side / np.sqrt(2.0)
        inside = np.linalg.norm(centers - centroid, axis=1) - reach < r_outer
        active, centers = active[inside], centers[inside]
        dist, idx = tree.query(centers)
        keep = (dist >= WHITNEY_RATIO * side) | (level == depth)
        keys = _encode(active[keep], stride)
        order = np.argsort(keys)
        levels.append(
            (keys[order], jet_pts[idx[keep]][order], jet_grads[idx[keep]][order])
        )
        split = active[~keep]
        active = np.concatenate(
            [2 * split + np.array(o) for o in ((0, 0), (0, 1), (1, 0), (1, 1))]
        )
        if len(active) == 0:
            break

    ext = WhitneyExtension(
        origin=origin,
        root_side=root,
        levels=tuple(levels),
        stride=stride,
        centroid=centroid,
        r_inner=r_inner,
        r_outer=r_outer,
        jet_points=jet_pts,
        jet_grads=jet_grads,
        gamma=float(gamma),
        jet_constant=jet_c,
        max_overlap=0,
        meta={"depth": len(levels) - 1, "refine": int(refine), "collar": width},
    )
    overlap = _max_overlap(ext)
    if overlap > OVERLAP_LIMIT:
        raise ExtensionError(f"square overlap {overlap} exceeds the bound {OVERLAP_LIMIT}")
    object.__setattr__(ext, "max_overlap", overlap)
    return ext


def _accumulate(ext, x):
    """Sums over squares of psi, grad psi, psi*P, grad(psi*P)-parts at points x.

    Returns (S, dS, F, dF, count) with F = sum psi_q P_q and
    dF = sum (grad psi_q) P_q + psi_q grad P_q.
    """
    m = len(x)
    S = np.zeros(m)
    dS = np.zeros((m, 2))
    F = np.zeros(m)
    dF = np.zeros((m, 2))
    count = np.zeros(m, dtype=int)
    for level, (keys, anchors, grads) in enumerate(ext.levels):
        if len(keys) == 0:
            continue
        side = ext.root_side / 2**level
        base = np.floor((x - ext.origin) / side).astype(np.int64)
        for di in (-1, 0, 1):
            for dj in (-1, 0, 1):
                ij = base + np.array([di, dj])
                k = _encode(ij, ext.stride)
                pos = np.searchsorted(keys, k)
                pos = np.minimum(pos, len(keys) - 1)
                hit = (keys[pos] == k) & (ij >= 0).all(axis=1)
                if not np.any(hit):
                    continue
                rows = np.flatnonzero(hit)
                q = pos[rows]
                center = ext.origin + (ij[rows] + 0.5) * side
                u = (x[rows] - center) / (0.5 * side)
                bx, dbx = flat_bump(u[:, 0])
                by, dby = flat_bump(u[:, 1])
                psi = bx * by
                live = psi > 0
                if not np.any(live):
                    continue
                rows, q, psi = rows[live], q[live], psi[live]
                dpsi = np.column_stack([dbx[live] * by[live], bx[live] * dby[live]]) / (0.5 * side)
                poly = np.sum(grads[q] * (x[rows] - anchors[q]), axis=1)
                np.add.at(S, rows, psi)
                np.add.at(dS, rows, dpsi)
                np.add.at(F, rows, psi * poly)
                np.add.at(dF, rows, dpsi * poly[:, None] + psi[:, None] * grads[q])
                np.add.at(count, rows, 1)
    return S, dS, F, dF, count


def _max_overlap(ext, samples=20000, seed=0):
    rng = np.random.default_rng(seed)
    probes = [ext.jet_points]
    # points at a range of distances from the jet set, plus a uniform cloud
    for scale in ext.root_side * 2.0 ** -np.arange(len(ext.levels)):
        probes.append(ext.jet_points + rng.normal(scale=scale, size=ext.jet_points.shape))
    ang = rng.uniform(0, 2 * np.pi, samples)
    rad = ext.r_outer * np.sqrt(rng.uniform(0, 1, samples))
    probes.append(ext.centroid + rad[:, None] * np.column_stack([np.cos(ang), np.sin(ang)]))
    pts = np.concatenate(probes)
    pts = pts[np.linalg.norm(pts - ext.centroid, axis=1) < ext.r_outer]
    count = _accumulate(ext, pts)[4]
    return int(np.max(count)) if len(count) else 0


def eval_extension(ext, x):
    """phi and its exact gradient at points x of shape (..., 2).

    Outside the cutoff radius both vanish.
    """
    x = np.asarray(x, dtype=float)
    shape = x.shape[:-1]
    pts = x.reshape(-1, 2)
    phi = np.zeros(len(pts))
    grad = np.zeros((len(pts), 2))
    eta, deta = radial_cutoff(pts, ext.centroid, ext.r_inner, ext.r_outer)
    live = eta > 0
    if np.any(live):
        y = pts[live]
        S, dS, F, dF, count = _accumulate(ext, y)
        if np.any(S <= 0):
            raise ExtensionError("evaluation point not covered by any square")
        p = F / S
        dp = dF / S[:, None] - (F / S**2)[:, None] * dS
        phi[live] = eta[live] * p
        grad[live] = eta[live][:, None] * dp + p[:, None] * deta[live]
    return phi.reshape(shape), grad.reshape(shape + (2,))


def divergence_free_field(ext, x):
    """g = (d2 phi, -d1 phi)."""
    _, grad = eval_extension(ext, x)
    return np.stack([grad[..., 1], -grad[..., 0]], axis=-1)


def fd_divergence(ext, x, h):
    """Central-difference divergence of g, the independent check of div g = 0."""
    x = np.asarray(x, dtype=float)
    ex = np.array([h, 0.0])
    ey = np.array([0.0, h])
    gxp = divergence_free_field(ext, x + ex)[..., 0]
    gxm = divergence_free_field(ext, x - ex)[..., 0]
    gyp = divergence_free_field(ext, x + ey)[..., 1]
    gym = divergence_free_field(ext, x - ey)[..., 1]
    return (gxp - gxm + gyp - gym) / (2.0 * h)


def collar_probes(curve, count=64, depth=0.25, seed=0):
    """Points off the curve, offset along +-normal from random curve parameters.

    Parameters are drawn uniformly on the circle and evaluated on the
    trigonometric interpolant, so the same seed gives the same physical probes
    at any marker count. Offsets are uniform in (0.05, 1) * depth * diameter,
    alternately inside and outside the patch.
    """
    rng = np.random.default_rng(seed)
    theta = rng.uniform(0.0, 2.0 * np.pi, count)
    off = rng.uniform(0.05, 1.0, count) * depth * diameter(curve)
    sign = np.where(np.arange(count) % 2 == 0, 1.0, -1.0)
    pts = trig_interpolate(curve.points, theta)
    d = trig_interpolate(spectral_derivative(curve.points), theta)
    d /= np.linalg.norm(d, axis=1)[:, None]
    nrm = np.column_stack([d[:, 1], -d[:, 0]])
    return pts + (sign * off)[:, None] * nrm


def sampled_holder_ratio(ext, curve, tangent_field, gamma, count=400, seed=0):
    """Sampled ||g||_gamma over a probe cloud divided by ||tau||_gamma on the curve.

    The cloud mixes points on the curve (uniform in the parameter) with collar
    points on both sides, so the pair scan sees the on-curve behavior as well as
    the transition into the collar.
    """
    theta = 2.0 * np.pi * np.arange(count // 2) / (count // 2)
    on = trig_interpolate(curve.points, theta)
    probes = np.concatenate([on, collar_probes(curve, count - len(on), depth=0.5, seed=seed)])
    g = divergence_free_field(ext, probes)
    g_norm = holder_seminorm(g, gamma, points=probes)
    t_norm = holder_seminorm(np.asarray(tangent_field, dtype=float), gamma, points=curve.points)
    return g_norm / t_norm, g_norm, t_norm


def jet_residuals(ext, curve, tangent_field):
    """max |phi| and max |grad phi - (-tau_2, tau_1)| at the markers."""
    tau = np.asarray(tangent_field, dtype=float)
    phi, grad = eval_extension(ext, curve.points)
    target = np.column_stack([-tau[:, 1], tau[:, 0]])
    return float(np.max(np.abs(phi))), float(np.max(np.linalg.norm(grad - target, axis=1)))


def unit_tangent(curve):
    return tangent_normal(curve)[0]

