"""Contour dynamics: RK4 time stepping of the markers plus the run diagnostics.

The markers follow dX/dt = F(X), F being the boundary-integral velocity at the
markers. Diagnostics are always measured against the frozen initial curve
(the reference for the bilipschitz constant b(t)), and the Gronwall monitor
fits the constant C in q(t) <= C exp(C int_0^t (1 + |grad v|) ds).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace

import numpy as np
from scipy.special import lambertw

from .curve import (
    Curve,
    CurveError,
    SelfIntersectionError,
    arc_resample,
    area,
    bilipschitz_constant,
    derivative,
    holder_seminorm,
    marker_gaps,
    spectral_derivative,
    tangent_normal,
)
from .velocity import boundary_flux, sup_grad_velocity, velocity_on_markers

CFL_FRACTION = 0.25
B_COLLAPSE = 1e-3

# machine-readable guard reasons
CFL_VIOLATION = "cfl_violation"
SELF_INTERSECTION = "self_intersection"
BILIPSCHITZ_COLLAPSE = "bilipschitz_collapse"
RUNAWAY = "runaway_speed"
NON_FINITE = "non_finite"


class GuardError(RuntimeError):
    """A guard refused to continue; ``reason`` is a machine-readable code."""

    def __init__(self, reason, message, state=None, suggested_dt=None):
        super().__init__(message)
        self.reason = reason
        self.state = state
        self.suggested_dt = suggested_dt


@dataclass(frozen=True)
class SimState:
    t: float
    curve: Curve
    initial: Curve
    spec: object
    step_count: int = 0
    resample_events: tuple = ()

    @classmethod
    def start(cls, curve, spec, t=0.0):
        return cls(float(t), curve, curve, spec)


@dataclass(frozen=True)
class DiagnosticsRecord:
    t: float
    area: float
    b: float
    holder: float
    q: float
    sup_grad_v: float
    max_speed: float
    gronwall_rhs: float
    area_flux: float

    @classmethod
    def columns(cls):
        return [f.name for f in fields(cls)]

    def row(self):
        return [getattr(self, name) for name in self.columns()]


def rhs(state, max_speed=None):
    """F(X) at the markers of the current curve."""
    return velocity_on_markers(state.curve, state.spec, max_speed=max_speed)


def stable_dt(curve, v, fraction=CFL_FRACTION):
    """Largest dt with dt * max|v| < fraction * (min marker gap)."""
    top = float(np.max(np.linalg.norm(v, axis=1)))
    gap = float(np.min(marker_gaps(curve)))
    return np.inf if top == 0.0 else fraction * gap / top


def step(state, dt, v0=None, cfl=CFL_FRACTION):
    """One classical RK4 step; refuses steps that break the CFL-like guard."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    pts = state.curve.points
    k1 = rhs(state) if v0 is None else v0
    limit = stable_dt(state.curve, k1, cfl)
    if dt >= limit:
        raise GuardError(
            CFL_VIOLATION,
            f"dt={dt:g} violates dt*max_speed < {cfl}*min_gap; use dt < {limit:.4g}",
            state=state,
            suggested_dt=0.9 * limit,
        )

    def field_at(p):
        return velocity_on_markers(p, state.spec)

    k2 = field_at(pts + 0.5 * dt * k1)
    k3 = field_at(pts + 0.5 * dt * k2)
    k4 = field_at(pts + dt * k3)
    new = pts + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(new)):
        raise GuardError(NON_FINITE, "non-finite marker positions after step", state=state)
    try:
        curve = state.curve.with_points(new)
    except SelfIntersectionError as exc:
        raise GuardError(SELF_INTERSECTION, f"curve self-intersects after step: {exc}", state=state) from exc
    return replace(state, t=state.t + dt, curve=curve, step_count=state.step_count + 1)


def measure(state, gamma, v=None, probe_spacings=3.0):
    """Instantaneous diagnostics (everything except the running Gronwall value)."""
    curve = state.curve
    if v is None:
        v = rhs(state)
    b = bilipschitz_constant(curve, state.initial)
    holder = holder_seminorm(derivative(curve), gamma)
    q = holder / b ** (1.0 + gamma) if b > 0 else np.inf
    return {
        "t": state.t,
        "area": area(curve),
        "b": b,
        "holder": holder,
        "q": q,
        "sup_grad_v": sup_grad_velocity(curve, state.spec, probe_spacings=probe_spacings, v=v),
        "max_speed": float(np.max(np.linalg.norm(v, axis=1))),
        "area_flux": boundary_flux(curve, v),
    }


@dataclass(frozen=True)
class RunSettings:
    dt: float
    t_final: float
    gamma: float = 0.5
    record_every: int = 1
    snapshot_every: int = 0
    b_collapse: float = B_COLLAPSE
    max_speed: float = np.inf
    cfl: float = CFL_FRACTION
    probe_spacings: float = 3.0
    resample_ratio: float = 0.0  # max gap / min gap that triggers resampling; 0 disables

    def __post_init__(self):
        if not (self.dt > 0 and self.t_final > 0):
            raise ValueError("dt and t_final must be positive")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")


@dataclass
class RunResult:
    records: list
    snapshots: list  # (step, t, Curve)
    events: list  # guard and resample events as dicts
    state: SimState
    halted: str | None = None

    def table(self):
        return np.array([r.row() for r in self.records], dtype=float)


class _RunningIntegral:
    """Trapezoid accumulation of int (1 + sup|grad v|) dt over recorded values."""

    def __init__(self):
        self.value = 0.0
        self._last = None

    def add(self, t, g):
        if self._last is not None:
            t0, g0 = self._last
            self.value += 0.5 * (t - t0) * ((1.0 + g0) + (1.0 + g))
        self._last = (t, g)
        return self.value


def _record(state, settings, integral, q0, v):
    m = measure(state, settings.gamma, v=v, probe_spacings=settings.probe_spacings)
    big_i = integral.add(m["t"], m["sup_grad_v"])
    q0 = m["q"] if q0 is None else q0
    return DiagnosticsRecord(gronwall_rhs=q0 * math.exp(big_i), **m), q0


def run(curve, spec, settings, on_record=None):
    """Integrate to t_final or until a guard fires.

    Diagnostics are recorded every ``record_every`` steps (and at the final
    time); ``gronwall_rhs`` is q(0) exp(int_0^t (1 + sup|grad v|) ds), the
    reference bound shape with unit constant, using the recorded values.
    Guard events never raise: they end the run and are listed in ``events``.
    """
    state = SimState.start(curve, spec)
    n_steps = int(round(settings.t_final / settings.dt))
    if not math.isclose(n_steps * settings.dt, settings.t_final, rel_tol=1e-9):
        raise ValueError("t_final must be an integer multiple of dt")
    records, snapshots, events = [], [], []
    integral = _RunningIntegral()
    b0 = None
    q0 = None
    halted = None
    v = rhs(state)
    rec, q0 = _record(state, settings, integral, q0, v)
    records.append(rec)
    b0 = rec.b
    if settings.snapshot_every:
        snapshots.append((0, state.t, state.curve))
    for k in range(1, n_steps + 1):
        try:
            top = float(np.max(np.linalg.norm(v, axis=1)))
            if not np.isfinite(top):
                raise GuardError(NON_FINITE, "non-finite velocity", state=state)
            if top > settings.max_speed:
                raise GuardError(RUNAWAY, f"marker speed {top:.3e} exceeds {settings.max_speed:.3e}", state=state)
            state = step(state, settings.dt, v0=v, cfl=settings.cfl)
            # keep the nominal time grid exact
            state = replace(state, t=k * settings.dt)
            if settings.resample_ratio:
                gaps = marker_gaps(state.curve)
                if np.max(gaps) > settings.resample_ratio * np.min(gaps):
                    fresh = arc_resample(state.curve, state.curve.n_markers)
                    state = replace(state, curve=fresh, initial=fresh,
                                    resample_events=state.resample_events + (state.t,))
                    events.append({"kind": "resample", "t": state.t, "step": k})
            b = bilipschitz_constant(state.curve, state.initial)
            if b < settings.b_collapse * b0:
                raise GuardError(BILIPSCHITZ_COLLAPSE, f"b={b:.3e} fell below {settings.b_collapse:g}*b(0)", state=state)
            v = rhs(state)
        except GuardError as exc:
            halted = exc.reason
            events.append({"kind": "guard", "reason": exc.reason, "t": state.t, "step": k, "message": str(exc)})
            break
        except CurveError as exc:
            halted = NON_FINITE
            events.append({"kind": "guard", "reason": NON_FINITE, "t": state.t, "step": k, "message": str(exc)})
            break
        if k % settings.record_every == 0 or k == n_steps:
            rec, q0 = _record(state, settings, integral, q0, v)
            records.append(rec)
            if on_record is not None:
                on_record(rec)
        if settings.snapshot_every and (k % settings.snapshot_every == 0 or k == n_steps):
            snapshots.append((k, state.t, state.curve))
    if halted and settings.snapshot_every:
        snapshots.append((state.step_count, state.t, state.curve))
    return RunResult(records, snapshots, events, state, halted)


def recompute_records(curves, times, initial, spec, gamma, probe_spacings=3.0):
    """Diagnostics for stored snapshots, through the same code path as ``run``."""
    integral = _RunningIntegral()
    q0 = None
    settings = RunSettings(dt=1.0, t_final=1.0, gamma=gamma, probe_spacings=probe_spacings)
    out = []
    for t, c in zip(times, curves):
        state = SimState(float(t), c, initial, spec)
        rec, q0 = _record(state, settings, integral, q0, rhs(state))
        out.append(rec)
    return out


# ---------------------------------------------------------------------------
# Gronwall monitor


@dataclass
class GronwallReport:
    C: float
    finite: bool
    t: np.ndarray
    q: np.ndarray
    integral: np.ndarray
    bound: np.ndarray
    margin: np.ndarray  # bound - q, never negative for the fitted C

    @property
    def inverted(self):
        return bool(np.any(self.margin < -1e-12 * np.maximum(1.0, np.abs(self.bound))))

    def as_dict(self):
        return {
            "C": self.C if self.finite else "inf",
            "finite": self.finite,
            "min_margin": float(np.min(self.margin)) if self.finite else None,
            "inverted": self.inverted if self.finite else None,
        }


def smallest_constant(q, integral):
    """Smallest C >= 1 with q <= C exp(C I) for every pair (q, I).

    C exp(C I) = q is solved in closed form, C = W(q I) / I (C = q when I = 0).
    """
    q = np.asarray(q, dtype=float)
    big_i = np.asarray(integral, dtype=float)
    if not np.all(np.isfinite(q)):
        return np.inf
    c = np.where(
        big_i > 0,
        np.real(lambertw(q * big_i)) / np.where(big_i > 0, big_i, 1.0),
        q,
    )
    return float(max(1.0, np.max(c)))


def gronwall_monitor(series, c_max=1e6):
    """Fit C in q(t) <= C exp(C int_0^t (1 + sup|grad v|) ds) over a record series."""
    if len(series) == 0:
        raise ValueError("empty diagnostics series")
    t = np.array([r.t for r in series], dtype=float)
    q = np.array([r.q for r in series], dtype=float)
    g = np.array([r.sup_grad_v for r in series], dtype=float)
    integrand = 1.0 + g
    integral = np.concatenate([[0.0], np.cumsum(0.5 * np.diff(t) * (integrand[1:] + integrand[:-1]))])
    c = smallest_constant(q, integral)
    finite = bool(np.isfinite(c) and c <= c_max)
    if finite:
        bound = c * np.exp(c * integral)
    else:
        bound = np.full_like(q, np.inf)
    with np.errstate(invalid="ignore"):  # inf - inf when q itself blew up
        margin = bound - q
    return GronwallReport(c if finite else np.inf, finite, t, q, integral, bound, margin)


# ---------------------------------------------------------------------------
# checks


def area_rate_check(state, probe_dt=None):
    """(dA/dt by centered RK4 probe steps, boundary flux, |difference| / |D|)."""
    v = rhs(state)
    flux = boundary_flux(state.curve, v)
    top = float(np.max(np.linalg.norm(v, axis=1)))
    a0 = area(state.curve)
    if top == 0.0:
        return 0.0, flux, abs(flux) / abs(a0)
    if probe_dt is None:
        probe_dt = 1e-3 * float(np.min(marker_gaps(state.curve))) / top
    fwd = _probe(state, state.spec, probe_dt)
    back = _probe(state, _negated(state.spec), probe_dt)
    rate = (area(fwd) - area(back)) / (2.0 * probe_dt)
    return rate, flux, abs(rate - flux) / abs(a0)


def _negated(spec):
    return spec.scaled(-1.0)


def _probe(state, spec, dt):
    s = replace(state, spec=spec)
    return step(s, dt).curve.points


def fit_ellipse(curve):
    """(a, b, orientation, centroid) from the area moments of the patch.

    The moments are boundary integrals evaluated spectrally, so for an exact
    ellipse the fit is exact to round-off. The orientation is in (-pi/2, pi/2].
    """
    pts = np.asarray(curve.points, dtype=float)
    d = spectral_derivative(pts)
    w = 2.0 * np.pi / len(pts)
    x, y = pts[:, 0], pts[:, 1]
    dx, dy = d[:, 0], d[:, 1]
    m0 = 0.5 * np.sum(x * dy - y * dx) * w
    cx = np.sum(0.5 * x**2 * dy) * w / m0
    cy = -np.sum(0.5 * y**2 * dx) * w / m0
    xc, yc = x - cx, y - cy
    ixx = np.sum(xc**3 / 3.0 * dy) * w
    iyy = -np.sum(yc**3 / 3.0 * dx) * w
    ixy = np.sum(0.5 * xc**2 * yc * dy) * w
    lam = np.linalg.eigvalsh(np.array([[ixx, ixy], [ixy, iyy]]))
    l2, l1 = lam
    ab = (16.0 * l1 * l2 / np.pi**2) ** 0.25
    a = math.sqrt(ab * math.sqrt(l1 / l2))
    return a, ab / a, 0.5 * math.atan2(2.0 * ixy, ixx - iyy), (cx, cy)


def kirchhoff_rate(a, b):
    return a * b / (a + b) ** 2


def rigid_rotation_residual(curve, spec, omega, center=(0.0, 0.0)):
    """max |<v - omega (-(y - c_y), x - c_x), n>| over the markers.

    A uniformly rotating patch has boundary velocity whose normal component
    equals that of the rigid rotation; the tangential part is free.
    """
    v = velocity_on_markers(curve, spec)
    rel = curve.points - np.asarray(center, dtype=float)
    rot = omega * np.column_stack([-rel[:, 1], rel[:, 0]])
    _, nrm = tangent_normal(curve)
    return float(np.max(np.abs(np.sum((v - rot) * nrm, axis=1))))


def unwrap_orientation(angles):
    """Unwrap angles defined modulo pi."""
    return 0.5 * np.unwrap(2.0 * np.asarray(angles, dtype=float))


def observed_order(dts, errors):
    """Least-squares slope of log(error) against log(dt)."""
    return float(np.polyfit(np.log(dts), np.log(errors), 1)[0])


__all__ = [
    "DiagnosticsRecord",
    "GronwallReport",
    "GuardError",
    "RunResult",
    "RunSettings",
    "SimState",
    "area_rate_check",
    "fit_ellipse",
    "gronwall_monitor",
    "kirchhoff_rate",
    "measure",
    "observed_order",
    "recompute_records",
    "rhs",
    "rigid_rotation_residual",
    "run",
    "smallest_constant",
    "stable_dt",
    "step",
    "unwrap_orientation",
]
